"""Residual checking engine: named, tolerance-gated checks over sample sets.

Residuals are Euclidean norms scaled by 1/(1 + |z|) so annuli of different
sizes are gated uniformly.  Every check is deterministic given its inputs;
per-sample evaluation failures are recorded on the result instead of
aborting the check, so a report always contains exactly the requested
checks.  Sample generation uses golden-ratio low-discrepancy sequences
shifted by an integer seed.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field as dc_field

import numpy as np

from .expr import PlanarField
from .flow import IntegratorConfig, flow, jacobian_fd
from .period import detect_cycle, period

__all__ = [
    "CheckResult",
    "VerificationReport",
    "check_involution",
    "check_commutation",
    "check_field_condition",
    "check_period_invariance",
    "check_energy_invariance",
    "check_lower_bound",
    "fixed_set_distance",
    "sample_parameters",
    "sample_time_fractions",
    "annulus_points",
    "config_digest",
    "write_atomic",
]

_GOLDEN = 0.6180339887498949  # 1/phi
_SQRT2_FRAC = 0.41421356237309515


@dataclass
class CheckResult:
    """Outcome of one named residual check: pass iff max_residual <= tolerance."""

    name: str
    max_residual: float
    tolerance: float
    passed: bool
    worst_point: tuple[float, float] | None = None
    worst_time: float | None = None
    errors: list[str] = dc_field(default_factory=list)
    extras: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        worst = None
        if self.worst_point is not None:
            worst = {
                "point": [float(v) for v in self.worst_point],
                "time": None if self.worst_time is None else float(self.worst_time),
            }
        d = {
            "check_name": self.name,
            "max_residual": float(self.max_residual),
            "tolerance": float(self.tolerance),
            "pass": bool(self.passed),
            "worst_point": worst,
        }
        if self.errors:
            d["errors"] = list(self.errors)
        if self.extras:
            d["extras"] = {k: v for k, v in self.extras.items()}
        return d


@dataclass
class VerificationReport:
    checks: list[CheckResult]
    provenance: dict

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def counts(self) -> tuple[int, int]:
        npass = sum(1 for c in self.checks if c.passed)
        return npass, len(self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "provenance": dict(self.provenance),
            "all_pass": self.all_pass,
            "checks": [c.to_dict() for c in self.checks],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def write_json(self, path) -> None:
        write_atomic(path, self.to_json())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check", "residual", "tolerance", "pass"])
        for c in self.checks:
            w.writerow([c.name, repr(c.max_residual), repr(c.tolerance),
                        "true" if c.passed else "false"])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        write_atomic(path, self.to_csv())


def write_atomic(path, text: str) -> None:
    """Write-then-rename so output files appear whole."""
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    os.replace(tmp, path)


def config_digest(mapping: dict) -> str:
    canon = "\n".join(f"{k}={mapping[k]}" for k in sorted(mapping))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


# --- sample generation -------------------------------------------------------

def sample_parameters(n: int, lo: float, hi: float, seed: int = 0) -> np.ndarray:
    """n low-discrepancy parameters in (lo, hi)."""
    base = (seed * _SQRT2_FRAC) % 1.0
    u = np.fromiter((((base + (i + 1) * _GOLDEN) % 1.0) for i in range(n)), dtype=float)
    return lo + (0.02 + 0.96 * u) * (hi - lo)


def sample_time_fractions(n: int, seed: int = 0) -> np.ndarray:
    """n period fractions, nudged away from 0, 1/2 and 1 so that generated
    points stay clear of the seed section and its half-period image."""
    base = (0.37 + seed * _GOLDEN) % 1.0
    out = []
    for i in range(n):
        f = (base + (i + 1) * _SQRT2_FRAC) % 1.0
        for special in (0.0, 0.5, 1.0):
            if abs(f - special) < 0.02:
                f = (f + 0.037) % 1.0
        out.append(f)
    return np.array(out)


def annulus_points(
    field: PlanarField,
    section,
    n: int,
    cfg: IntegratorConfig | None = None,
    seed: int = 0,
) -> np.ndarray:
    """Deterministic well-spread points of the annulus covered by the section:
    seed points are advanced along their cycles by low-discrepancy period
    fractions."""
    cfg = cfg or IntegratorConfig()
    params = sample_parameters(n, section.s_min, section.s_max, seed)
    fracs = sample_time_fractions(n, seed)
    pts = []
    for s, f in zip(params, fracs):
        cyc = detect_cycle(field, section.point(float(s)), cfg)
        pts.append(cyc.trajectory.state(f * cyc.period))
    return np.array(pts)


# --- core checks -------------------------------------------------------------

def _scaled(diff, z) -> float:
    return float(np.linalg.norm(diff)) / (1.0 + float(np.linalg.norm(z)))


def _run_samples(name, tolerance, samples, fn):
    """Shared max-residual loop: fn(z) -> (residual, time_tag) or list of them."""
    worst = -1.0
    worst_point = None
    worst_time = None
    errors = []
    for z in samples:
        try:
            results = fn(np.asarray(z, dtype=float))
        except Exception as exc:  # per-sample failures are data, not crashes
            errors.append(f"({z[0]:.6g}, {z[1]:.6g}): {exc}")
            continue
        for res, t_tag in results:
            res = float(res)
            if res > worst:
                worst = res
                worst_point = (float(z[0]), float(z[1]))
                worst_time = t_tag
    if worst < 0.0:
        return CheckResult(name, math.inf, tolerance, False, None, None,
                           errors or ["no samples evaluated"])
    return CheckResult(name, worst, tolerance, worst <= tolerance,
                       worst_point, worst_time, errors)


def check_involution(sigma, samples, tolerance: float = 1e-7,
                     name: str = "involution") -> CheckResult:
    """max |sigma(sigma(z)) - z| / (1 + |z|) over the samples."""

    def one(z):
        zz = sigma(sigma(z))
        return [(_scaled(zz - z, z), None)]

    return _run_samples(name, tolerance, samples, one)


def check_commutation(field: PlanarField, sigma, sign: int, samples, times,
                      cfg: IntegratorConfig | None = None,
                      tolerance: float = 1e-6, name: str | None = None) -> CheckResult:
    """Flow commutation (sign +1) or anti-commutation (sign -1):
    max |sigma(phi(t,z)) - phi(sign*t, sigma(z))|."""
    cfg = cfg or IntegratorConfig()
    if name is None:
        name = "flow_commutation" if sign > 0 else "flow_anticommutation"

    def one(z):
        sz = sigma(z)
        out = []
        for t in times:
            a = sigma(flow(field, z, float(t), cfg))
            b = flow(field, sz, sign * float(t), cfg)
            out.append((_scaled(a - b, z), float(t)))
        return out

    return _run_samples(name, tolerance, samples, one)


def check_field_condition(field: PlanarField, sigma, sign: int, samples,
                          h: float | None = None, tolerance: float = 1e-4,
                          name: str | None = None) -> CheckResult:
    """Pointwise field criterion max |V(sigma(z)) - sign * J_sigma(z) V(z)|
    with the Jacobian by central differences (default h = 1e-5 (1 + |z|))."""
    if name is None:
        name = "field_condition_symmetry" if sign > 0 else "field_condition_reversibility"

    def one(z):
        jac = jacobian_fd(sigma, z, h)
        lhs = field.velocity(sigma(z))
        rhs = sign * (jac @ field.velocity(z))
        return [(_scaled(lhs - rhs, z), None)]

    return _run_samples(name, tolerance, samples, one)


def check_period_invariance(field: PlanarField, sigma, samples,
                            cfg: IntegratorConfig | None = None,
                            tolerance: float = 1e-7,
                            name: str = "period_invariance") -> CheckResult:
    """max |T(sigma(z)) - T(z)| / T(z); both periods detected independently."""
    cfg = cfg or IntegratorConfig()

    def one(z):
        tz = period(field, z, cfg)
        tsz = period(field, sigma(z), cfg)
        return [(abs(tsz - tz) / tz, None)]

    return _run_samples(name, tolerance, samples, one)


def check_energy_invariance(field: PlanarField, sigma, samples,
                            tolerance: float = 1e-8,
                            name: str = "energy_invariance") -> CheckResult:
    """max |H(sigma(z)) - H(z)| for fields carrying a first integral."""
    if field.hamiltonian is None:
        raise ValueError(f"field {field.name!r} has no first integral attached")

    def one(z):
        return [(abs(field.energy(sigma(z)) - field.energy(z)), None)]

    return _run_samples(name, tolerance, samples, one)


def check_lower_bound(name: str, value: float, threshold: float,
                      worst_point=None) -> CheckResult:
    """Gate a quantity that must EXCEED a threshold (e.g. non-triviality).

    Encoded as max_residual = threshold - value with tolerance 0 so the
    report invariant pass <=> max_residual <= tolerance still holds.
    """
    residual = threshold - value
    wp = None if worst_point is None else (float(worst_point[0]), float(worst_point[1]))
    return CheckResult(name, residual, 0.0, residual <= 0.0, wp, None,
                       extras={"value": value, "threshold": threshold})


def fixed_set_distance(sigma, samples, delta, move_tol: float = 1e-8,
                       dist_tol: float = 1e-6, fixed_threshold: float = 1e-8,
                       name: str = "fixed_curve") -> CheckResult:
    """Fixed-set check against a section.

    Samples lying on the section must not move (gate move_tol); samples that
    numerically do not move (|sigma(z) - z| <= fixed_threshold) must lie
    within dist_tol of the section.  The reported residual is the larger of
    the two maxima in units of its own gate, with the raw maxima in extras.
    """
    on_delta_move = 0.0
    fixed_dist = 0.0
    n_on = n_fixed = 0
    worst_point = None
    worst_ratio = -1.0
    errors = []
    for z in samples:
        z = np.asarray(z, dtype=float)
        try:
            move = float(np.linalg.norm(sigma(z) - z))
            dist = float(delta.distance(z))
        except Exception as exc:
            errors.append(f"({z[0]:.6g}, {z[1]:.6g}): {exc}")
            continue
        memb_tol = 1e-9 * (1.0 + float(np.linalg.norm(z)))
        ratio = -1.0
        if dist <= memb_tol:
            n_on += 1
            on_delta_move = max(on_delta_move, move)
            ratio = move / move_tol
        if move <= fixed_threshold:
            n_fixed += 1
            fixed_dist = max(fixed_dist, dist)
            ratio = max(ratio, dist / dist_tol)
        if ratio > worst_ratio:
            worst_ratio = ratio
            worst_point = (float(z[0]), float(z[1]))
    max_residual = max(on_delta_move / move_tol, fixed_dist / dist_tol)
    return CheckResult(
        name, max_residual, 1.0, max_residual <= 1.0, worst_point, None, errors,
        extras={
            "on_delta_move": on_delta_move,
            "fixed_dist_to_delta": fixed_dist,
            "n_on_delta": n_on,
            "n_fixed": n_fixed,
        },
    )
