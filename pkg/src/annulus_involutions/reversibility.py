"""Reversibility involutions with a prescribed fixed section.

For a global section delta of the annulus, the conjugate curve
delta_star = phi(T/2, delta) splits each cycle into a forward arc (reached
from delta in less than half a period) and a backward arc.  The signed
crossing time tau(z) -- negative on the forward arc, positive on the
backward arc, zero on delta -- satisfies tau(phi(t,z)) = tau(z) - t, and
sigma(z) = phi(2 tau(z), z) is an involution anti-commuting with the flow
that fixes the prescribed section.  Off delta the same map is
phi(2 tau_star(z), z) through the conjugate curve; both routes agree where
both are defined.  Since sigma reverses orientation along each invariant
cycle it has exactly two fixed points per cycle, the delta point and its
conjugate (on the linear center with the positive x-axis as section, sigma
is the mirror (x, -y), which also fixes the negative x-axis).
"""

from __future__ import annotations

import enum
import math

import numpy as np

from .errors import CycleError, EventNotFound, NotASection
from .expr import PlanarField
from .flow import IntegratorConfig, flow, flow_to_event
from .period import detect_cycle
from .sections import Section, section_from_points
from .verify import (
    CheckResult,
    VerificationReport,
    check_commutation,
    check_field_condition,
    check_involution,
    config_digest,
    fixed_set_distance,
    sample_parameters,
)

__all__ = [
    "BranchTag",
    "ConjugateSection",
    "conjugate_section",
    "classify",
    "tau",
    "tau_hit",
    "tau_star",
    "sigma_reversible",
    "ReversibilityInvolution",
    "verify_reversibility",
    "check_well_posedness",
    "check_half_period_roundtrip",
]

_BAND_WIDTH = 1e-7  # inside this distance of either curve, both time routes
                    # are computed and their agreement asserted


class BranchTag(enum.Enum):
    ON_DELTA = "on_delta"
    ON_DELTA_STAR = "on_delta_star"
    A_PLUS = "a_plus"
    A_MINUS = "a_minus"


def _memb_tol(z) -> float:
    return 1e-9 * (1.0 + math.hypot(float(z[0]), float(z[1])))


class ConjugateSection:
    """The half-period image of a section, tabulated on the same grid."""

    def __init__(self, section: Section, periods: np.ndarray, source: Section):
        self.section = section
        self.periods = periods
        self.source = source

    @property
    def grid(self) -> np.ndarray:
        return self.section.grid

    @property
    def label(self) -> str:
        return self.section.label

    def point(self, s: float) -> np.ndarray:
        return self.section.point(s)

    def project(self, z):
        return self.section.project(z)

    def distance(self, z) -> float:
        return self.section.distance(z)

    def event(self, direction: int = 0, terminal: bool = True):
        return self.section.event(direction, terminal)

    def rows(self) -> list[tuple[float, float, float, float]]:
        pts = self.section.curve.points
        return [
            (float(s), float(p[0]), float(p[1]), float(t))
            for s, p, t in zip(self.grid, pts, self.periods)
        ]

    def to_csv(self) -> str:
        lines = ["s,x_star,y_star,T"]
        for row in self.rows():
            lines.append(",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def _as_curve(obj) -> Section:
    return obj.section if isinstance(obj, ConjugateSection) else obj


def conjugate_section(field: PlanarField, delta: Section,
                      cfg: IntegratorConfig | None = None) -> ConjugateSection:
    """Tabulate phi(T/2, delta(s)) over the section grid and certify it."""
    cfg = cfg or IntegratorConfig()
    points = []
    periods = []
    for s in delta.grid:
        z = delta.point(float(s))
        try:
            cyc = detect_cycle(field, z, cfg)
        except CycleError as exc:
            raise CycleError(f"conjugate section failed at s = {s:.6g}: {exc}") from exc
        periods.append(cyc.period)
        points.append(cyc.trajectory.state(0.5 * cyc.period))
    star = section_from_points(field, delta.grid, np.array(points),
                               name=f"{delta.label}_star")
    return ConjugateSection(section=star, periods=np.array(periods), source=delta)


def _nearest_crossing(field, section_like, z, cfg) -> tuple[float, float, np.ndarray, float]:
    """Two-sided first crossing of the curve with the smaller |t|.

    Also validates that the cycle meets the curve once per period: the first
    backward and first forward hits must be the same curve point.  Returns
    (t, s_param, z_hit, t_forward) with t the signed nearest-crossing time.
    """
    curve = _as_curve(section_like)
    ev = curve.event()
    try:
        t_b, z_b = flow_to_event(field, z, ev, -1, cfg.max_horizon, cfg)
        t_f, z_f = flow_to_event(field, z, ev, +1, cfg.max_horizon, cfg)
    except EventNotFound as exc:
        raise EventNotFound(
            f"orbit of ({z[0]:.6g}, {z[1]:.6g}) does not cross {curve.label}: {exc}"
        ) from exc
    scale = 1.0 + float(np.linalg.norm(z))
    if float(np.linalg.norm(z_b - z_f)) > 1e-6 * scale:
        raise NotASection(
            f"{curve.label} meets the cycle through ({z[0]:.6g}, {z[1]:.6g}) more than "
            f"once per period (backward hit ({z_b[0]:.6g}, {z_b[1]:.6g}), forward hit "
            f"({z_f[0]:.6g}, {z_f[1]:.6g})); not a global section for this annulus"
        )
    if -t_b <= t_f:
        t_hit, z_hit = t_b, z_b
    else:
        t_hit, z_hit = t_f, z_f
    s_param, _ = curve.project(z_hit)
    return t_hit, s_param, z_hit, t_f


def tau_hit(field: PlanarField, delta, z, cfg: IntegratorConfig | None = None
            ) -> tuple[float, float, np.ndarray]:
    """Signed section time plus the crossing itself: (tau, s parameter, point)."""
    cfg = cfg or IntegratorConfig()
    z = np.asarray(z, dtype=float)
    curve = _as_curve(delta)
    if curve.distance(z) <= _memb_tol(z):
        s, _ = curve.project(z)
        return 0.0, s, z.copy()
    t, s, z_hit, _ = _nearest_crossing(field, delta, z, cfg)
    return t, s, z_hit


def tau(field: PlanarField, delta, z, cfg: IntegratorConfig | None = None) -> float:
    """Signed time to the section along the orbit, in (-T(z)/2, T(z)/2].

    Zero iff z lies on the section (within the membership tolerance);
    negative when the section is behind z (forward arc), positive when it
    is ahead (backward arc).
    """
    return tau_hit(field, delta, z, cfg)[0]


def tau_star(field: PlanarField, delta_star, z, cfg: IntegratorConfig | None = None) -> float:
    """Signed time to the conjugate section; differs from tau by half a period."""
    return tau_hit(field, delta_star, z, cfg)[0]


def classify(field: PlanarField, delta, delta_star, z,
             cfg: IntegratorConfig | None = None) -> tuple[BranchTag, dict]:
    """Locate z among {delta, delta_star, forward arc A+, backward arc A-}.

    Membership is a distance test; otherwise the backward orbit decides:
    whichever of the two curves it crosses first names the branch.  The
    raw backward crossing times of both curves come back for inspection.
    """
    cfg = cfg or IntegratorConfig()
    z = np.asarray(z, dtype=float)
    if _as_curve(delta).distance(z) <= _memb_tol(z):
        return BranchTag.ON_DELTA, {}
    if _as_curve(delta_star).distance(z) <= _memb_tol(z):
        return BranchTag.ON_DELTA_STAR, {}
    t_d, _ = flow_to_event(field, z, _as_curve(delta).event(), -1, cfg.max_horizon, cfg)
    t_s, _ = flow_to_event(field, z, _as_curve(delta_star).event(), -1, cfg.max_horizon, cfg)
    tag = BranchTag.A_PLUS if -t_d < -t_s else BranchTag.A_MINUS
    return tag, {"delta": t_d, "delta_star": t_s}


def sigma_reversible(field: PlanarField, delta, z,
                     cfg: IntegratorConfig | None = None,
                     delta_star: ConjugateSection | None = None) -> np.ndarray:
    """The section-fixing involution phi(2 tau(z), z).

    Points on the section (and on the conjugate curve, whose nearest
    crossings sit half a period away on both sides) map to themselves.
    When the conjugate curve is supplied and z falls within the overlap
    band of either curve, both time routes are computed and their
    agreement is asserted before returning.
    """
    cfg = cfg or IntegratorConfig()
    z = np.asarray(z, dtype=float)
    curve = _as_curve(delta)
    d_delta = curve.distance(z)
    if d_delta <= _memb_tol(z):
        return z.copy()
    if delta_star is not None:
        d_star = delta_star.distance(z)
        if d_star <= _memb_tol(z):
            return z.copy()
    t = tau(field, delta, z, cfg)
    image = flow(field, z, 2.0 * t, cfg)
    if delta_star is not None and min(d_delta, d_star) <= _BAND_WIDTH:
        t_star = tau_star(field, delta_star, z, cfg)
        alt = flow(field, z, 2.0 * t_star, cfg)
        scale = 1.0 + float(np.linalg.norm(z))
        if float(np.linalg.norm(alt - image)) > 1e-6 * scale:
            raise NotASection(
                f"section-time routes disagree near the curves at "
                f"({z[0]:.6g}, {z[1]:.6g}); section data inconsistent"
            )
    return image


class ReversibilityInvolution:
    """Evaluatable reversibility involution for a fixed section.

    Construction tabulates the conjugate curve.  For fields carrying a first
    integral, each newly met cycle is validated once (single crossing per
    period, via the two-sided search) and its period cached; later
    evaluations on that cycle resolve the branch from one backward crossing,
    since the forward crossing sits exactly one period later.
    """

    def __init__(self, field: PlanarField, delta: Section,
                 cfg: IntegratorConfig | None = None, use_cache: bool = True):
        self.field = field
        self.delta = delta
        self.cfg = cfg or IntegratorConfig()
        self.delta_star = conjugate_section(field, delta, self.cfg)
        self._cache: dict[str, float] | None = (
            {} if use_cache and field.hamiltonian is not None else None
        )

    def tau(self, z) -> float:
        z = np.asarray(z, dtype=float)
        if self.delta.distance(z) <= _memb_tol(z):
            return 0.0
        if self._cache is not None:
            key = f"{self.field.energy(z):.12e}"
            period_t = self._cache.get(key)
            if period_t is not None:
                # cycle already validated: the forward crossing sits exactly
                # one period after the backward one
                ev = self.delta.event()
                t_b, _ = flow_to_event(self.field, z, ev, -1, self.cfg.max_horizon, self.cfg)
                return t_b if -t_b <= 0.5 * period_t else t_b + period_t
            t_b, _, _, t_f = _nearest_crossing(self.field, self.delta, z, self.cfg)
            self._cache[key] = t_f - t_b
            return t_b if -t_b <= t_f else t_f
        return tau(self.field, self.delta, z, self.cfg)

    def tau_star(self, z) -> float:
        return tau_star(self.field, self.delta_star, z, self.cfg)

    def classify(self, z) -> tuple[BranchTag, dict]:
        return classify(self.field, self.delta, self.delta_star, z, self.cfg)

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        d_delta = self.delta.distance(z)
        if d_delta <= _memb_tol(z):
            return z.copy()
        d_star = self.delta_star.distance(z)
        if d_star <= _memb_tol(z):
            return z.copy()
        t = self.tau(z)
        image = flow(self.field, z, 2.0 * t, self.cfg)
        if min(d_delta, d_star) <= _BAND_WIDTH:
            alt = flow(self.field, z, 2.0 * self.tau_star(z), self.cfg)
            if float(np.linalg.norm(alt - image)) > 1e-6 * (1.0 + float(np.linalg.norm(z))):
                raise NotASection(
                    f"section-time routes disagree near the curves at "
                    f"({z[0]:.6g}, {z[1]:.6g})"
                )
        return image


def check_well_posedness(field: PlanarField, delta, delta_star, samples,
                         cfg: IntegratorConfig | None = None,
                         tolerance: float = 1e-6,
                         name: str = "well_posedness") -> CheckResult:
    """Agreement of the two time routes: max |phi(2 tau*(z), z) - phi(2 tau(z), z)|."""
    cfg = cfg or IntegratorConfig()
    worst = -1.0
    worst_point = None
    errors = []
    for z in samples:
        z = np.asarray(z, dtype=float)
        try:
            a = flow(field, z, 2.0 * tau(field, delta, z, cfg), cfg)
            b = flow(field, z, 2.0 * tau_star(field, delta_star, z, cfg), cfg)
        except Exception as exc:
            errors.append(f"({z[0]:.6g}, {z[1]:.6g}): {exc}")
            continue
        res = float(np.linalg.norm(a - b)) / (1.0 + float(np.linalg.norm(z)))
        if res > worst:
            worst, worst_point = res, (float(z[0]), float(z[1]))
    if worst < 0.0:
        return CheckResult(name, math.inf, tolerance, False, None, None,
                           errors or ["no samples evaluated"])
    return CheckResult(name, worst, tolerance, worst <= tolerance, worst_point,
                       None, errors)


def check_half_period_roundtrip(field: PlanarField, delta_star: ConjugateSection,
                                cfg: IntegratorConfig | None = None,
                                tolerance: float = 1e-6,
                                name: str = "half_period_roundtrip") -> CheckResult:
    """Advancing the conjugate curve another half period returns the section
    pointwise: phi(T/2, delta_star(s)) = delta(s)."""
    cfg = cfg or IntegratorConfig()
    worst = -1.0
    worst_point = None
    errors = []
    idx = np.unique(np.linspace(0, len(delta_star.grid) - 1, 9).astype(int))
    for i in idx:
        s = float(delta_star.grid[i])
        w = delta_star.source.point(s)
        zs = delta_star.section.curve.points[i]
        try:
            back = flow(field, zs, 0.5 * float(delta_star.periods[i]), cfg)
        except Exception as exc:
            errors.append(f"s = {s:.6g}: {exc}")
            continue
        res = float(np.linalg.norm(back - w)) / (1.0 + float(np.linalg.norm(w)))
        if res > worst:
            worst, worst_point = res, (float(zs[0]), float(zs[1]))
    if worst < 0.0:
        return CheckResult(name, math.inf, tolerance, False, None, None,
                           errors or ["no samples evaluated"])
    return CheckResult(name, worst, tolerance, worst <= tolerance, worst_point,
                       None, errors)


def verify_reversibility(
    field: PlanarField,
    delta: Section,
    samples,
    times,
    cfg: IntegratorConfig | None = None,
    *,
    anticommutation_tol: float = 1e-6,
    involution_tol: float = 1e-7,
    wellposed_tol: float = 1e-6,
    field_tol: float = 1e-4,
    fixed_move_tol: float = 1e-8,
    fixed_dist_tol: float = 1e-6,
    roundtrip_tol: float = 1e-6,
    sigma: ReversibilityInvolution | None = None,
) -> VerificationReport:
    """Run the reversibility identity suite for one section."""
    cfg = cfg or IntegratorConfig()
    if sigma is None:
        sigma = ReversibilityInvolution(field, delta, cfg)
    on_delta = [delta.point(float(s))
                for s in sample_parameters(5, delta.s_min, delta.s_max, seed=1)]
    fixed_samples = list(np.asarray(samples, dtype=float)) + on_delta
    checks = [
        check_commutation(field, sigma, -1, samples, times, cfg,
                          tolerance=anticommutation_tol),
        check_involution(sigma, samples, tolerance=involution_tol),
        fixed_set_distance(sigma, fixed_samples, delta,
                           move_tol=fixed_move_tol, dist_tol=fixed_dist_tol),
        check_well_posedness(field, delta, sigma.delta_star, samples, cfg,
                             tolerance=wellposed_tol),
        check_field_condition(field, sigma, -1, samples, tolerance=field_tol),
        check_half_period_roundtrip(field, sigma.delta_star, cfg,
                                    tolerance=roundtrip_tol),
    ]
    provenance = {
        "field": field.name,
        "section": delta.label,
        "construction": "section_time_reversibility",
        "config_digest": config_digest({"rtol": cfg.rtol, "atol": cfg.atol,
                                        "samples": len(list(samples)),
                                        "times": len(list(times))}),
    }
    return VerificationReport(checks=checks, provenance=provenance)
