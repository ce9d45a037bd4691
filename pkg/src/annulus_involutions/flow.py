"""Adaptive flow integration for planar fields.

The integrator is an embedded Dormand-Prince 5(4) pair with the classic
quartic dense-output interpolant, so event roots are located on the
continuous extension of accepted steps rather than by shrinking steps.
Negative flow times integrate the reversed field over positive internal
time; trajectories remember their direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainEscape, EventNotFound, StepLimitExceeded
from .expr import PlanarField

__all__ = [
    "IntegratorConfig",
    "EventSpec",
    "EventHit",
    "Trajectory",
    "integrate",
    "flow",
    "flow_trajectory",
    "flow_to_event",
    "jacobian_fd",
    "brent",
]


# Dormand-Prince 5(4) tableau (autonomous systems; stage times unused)
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_A71, _A73, _A74, _A75, _A76 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# error coefficients (5th minus embedded 4th order weights)
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)
# dense-output coefficients
_D1 = -12715105075 / 11282082432
_D3 = 87487479700 / 32700410799
_D4 = -10690763975 / 1880347072
_D5 = 701980252875 / 199316789632
_D6 = -1453857185 / 822651844
_D7 = 69997945 / 29380423

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0

# dense-output samples per accepted step used to bracket event crossings
_EVENT_SAMPLES = 3


@dataclass
class IntegratorConfig:
    """Step-control settings for the adaptive integrator."""

    rtol: float = 1e-10
    atol: float = 1e-12
    max_steps: int = 10_000_000
    max_horizon: float = 1e4

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.max_horizon <= 0:
            raise ValueError("max_horizon must be positive")


@dataclass
class EventSpec:
    """A scalar crossing condition g(z) = 0 watched along a trajectory.

    ``direction`` filters on the sign of dg/ds along integration progress
    (+1 rising, -1 falling, 0 any).  ``accept`` may veto located roots
    (e.g. crossings of a curve's extension outside its parameter range);
    scanning then continues past the rejected root.
    """

    g: Callable[[np.ndarray], float]
    direction: int = 0
    terminal: bool = True
    accept: Callable[[np.ndarray], bool] | None = None


@dataclass(frozen=True)
class EventHit:
    index: int  # which EventSpec fired
    t: float  # signed requested time
    z: np.ndarray


@dataclass
class _Step:
    s0: float
    h: float
    c1: np.ndarray
    c2: np.ndarray
    c3: np.ndarray
    c4: np.ndarray
    c5: np.ndarray

    def interp(self, s: float) -> np.ndarray:
        th = (s - self.s0) / self.h
        if th <= 0.0:
            return self.c1.copy()
        if th >= 1.0:
            return self.c1 + self.c2
        om = 1.0 - th
        return self.c1 + th * (self.c2 + om * (self.c3 + th * (self.c4 + om * self.c5)))


@dataclass
class Trajectory:
    """Dense-output solution of one integrate() call.

    Steps tile [0, s_end] in internal progress time s >= 0; requested times
    are t = direction * s.  Interpolation at step boundaries reproduces the
    stored endpoint states exactly.
    """

    direction: int
    steps: list[_Step]
    s_grid: np.ndarray  # accepted step boundaries, len(steps) + 1
    states: np.ndarray  # states at boundaries, (len(steps) + 1, n)
    naccepted: int
    nrejected: int
    nfev: int
    events: list[EventHit] = dc_field(default_factory=list)

    @property
    def t_final(self) -> float:
        return self.direction * self.s_grid[-1]

    @property
    def z_final(self) -> np.ndarray:
        return self.states[-1].copy()

    def state(self, t: float) -> np.ndarray:
        """State at requested time t inside the integrated span."""
        s = self.direction * t
        if s < -1e-12 or s > self.s_grid[-1] + 1e-12:
            raise ValueError(f"time {t} outside integrated span")
        s = min(max(s, 0.0), self.s_grid[-1])
        idx = int(np.searchsorted(self.s_grid, s, side="right") - 1)
        idx = min(max(idx, 0), len(self.steps) - 1)
        if s == self.s_grid[idx]:
            return self.states[idx].copy()
        if s == self.s_grid[idx + 1]:
            return self.states[idx + 1].copy()
        return self.steps[idx].interp(s)


def _initial_step(rhs, y0, f0, rtol, atol, s_end):
    scale = atol + rtol * np.abs(y0)
    d0 = math.sqrt(float(np.mean((y0 / scale) ** 2)))
    d1 = math.sqrt(float(np.mean((f0 / scale) ** 2)))
    h0 = 1e-6 if d1 < 1e-12 or d0 < 1e-12 else 0.01 * d0 / d1
    h0 = min(h0, s_end)
    y1 = y0 + h0 * f0
    f1 = rhs(y1)
    d2 = math.sqrt(float(np.mean(((f1 - f0) / scale) ** 2))) / h0
    dm = max(d1, d2)
    h1 = (0.01 / dm) ** 0.2 if dm > 1e-15 else max(1e-6, h0 * 1e-3)
    return min(100 * h0, h1, s_end)


def brent(f, a, b, fa=None, fb=None, xtol=1e-13, maxiter=200):
    """Root of f on a sign-change bracket [a, b] by Brent's method."""
    if fa is None:
        fa = f(a)
    if fb is None:
        fb = f(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0.0:
        raise ValueError("brent: not a sign-change bracket")
    c, fc = a, fa
    d = e = b - a
    for _ in range(maxiter):
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        tol = 2.0 * 2.220446049250313e-16 * abs(b) + 0.5 * xtol
        m = 0.5 * (c - b)
        if abs(m) <= tol or fb == 0.0:
            return b
        if abs(e) < tol or abs(fa) <= abs(fb):
            d = e = m
        else:
            s = fb / fa
            if a == c:
                p = 2.0 * m * s
                q = 1.0 - s
            else:
                q = fa / fc
                r = fb / fc
                p = s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0))
                q = (q - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0.0:
                q = -q
            else:
                p = -p
            s, e = e, d
            if 2.0 * p < 3.0 * m * q - abs(tol * q) and p < abs(0.5 * s * q):
                d = p / q
            else:
                d = e = m
        a, fa = b, fb
        b += d if abs(d) > tol else (tol if m > 0 else -tol)
        fb = f(b)
        if (fb > 0.0) == (fc > 0.0):
            c, fc = a, fa
            d = e = b - a
    return b


def _scan_step(step, events, g_prev, direction, zero_start):
    """Look for event crossings inside one accepted step.

    g_prev holds event values at the step start and is updated to the step
    end; accepted hits come back ordered by progress time.  zero_start[k]
    is None for a normal event, or a threshold while the event started at
    g ~ 0 and crossings are still being suppressed.
    """
    hits = []
    s0, h = step.s0, step.h
    svals = [s0 + (i / _EVENT_SAMPLES) * h for i in range(1, _EVENT_SAMPLES + 1)]
    for k, ev in enumerate(events):
        ga = g_prev[k]
        sa = s0
        for s_b in svals:
            gb = ev.g(step.interp(s_b))
            if zero_start[k] is not None:
                if abs(gb) > zero_start[k]:
                    zero_start[k] = None
                ga, sa = gb, s_b
                continue
            crossed = (ga < 0.0 < gb) or (ga > 0.0 > gb) or (gb == 0.0 and ga != 0.0)
            if crossed and (ev.direction == 0 or math.copysign(1.0, gb - ga) == ev.direction):
                s_root = float(brent(lambda s: ev.g(step.interp(s)), sa, s_b, ga, gb))
                z_root = step.interp(s_root)
                if ev.accept is None or ev.accept(z_root):
                    hits.append((s_root, EventHit(k, float(direction * s_root), z_root)))
            ga, sa = gb, s_b
        g_prev[k] = ga
    hits.sort(key=lambda item: item[0])
    return hits


def integrate(
    rhs: Callable[[np.ndarray], np.ndarray],
    z0,
    t_final: float,
    cfg: IntegratorConfig,
    events: Sequence[EventSpec] = (),
    bounds: Callable[[np.ndarray], bool] | None = None,
) -> Trajectory:
    """Integrate dz/dt = rhs(z) from z0 to t_final (either sign) with dense output.

    Stops early at the first terminal event root.  Raises StepLimitExceeded,
    DomainEscape, or lets field DomainError propagate.
    """
    y = np.asarray(z0, dtype=float).copy()
    if t_final == 0.0:
        grid = np.array([0.0])
        return Trajectory(1, [], grid, y[None, :].copy(), 0, 0, 0)
    direction = 1 if t_final > 0 else -1
    s_end = abs(t_final)

    if direction == 1:
        rhs_s = rhs
    else:
        def rhs_s(state, _rhs=rhs):
            return -_rhs(state)

    f = rhs_s(y)
    nfev = 1
    h = _initial_step(rhs_s, y, f, cfg.rtol, cfg.atol, s_end)
    nfev += 1

    events = list(events)
    g_prev = [ev.g(y) for ev in events]
    # a crossing at the start is ignored; scanning resumes once |g| clears
    # the threshold, so t_hit brackets sit strictly away from 0
    g_floor = 1e-12 * (1.0 + float(np.linalg.norm(y)))
    zero_start: list[float | None] = [g_floor if abs(g) < g_floor else None for g in g_prev]

    steps: list[_Step] = []
    boundaries = [0.0]
    states = [y.copy()]
    hits: list[EventHit] = []
    naccepted = nrejected = 0
    s = 0.0
    terminal_hit = None

    while s < s_end:
        if naccepted + nrejected >= cfg.max_steps:
            raise StepLimitExceeded(
                f"step limit {cfg.max_steps} reached at t={direction * s:.6g}"
            )
        h = min(h, s_end - s)
        k1 = f
        k2 = rhs_s(y + h * (_A21 * k1))
        k3 = rhs_s(y + h * (_A31 * k1 + _A32 * k2))
        k4 = rhs_s(y + h * (_A41 * k1 + _A42 * k2 + _A43 * k3))
        k5 = rhs_s(y + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4))
        k6 = rhs_s(y + h * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5))
        y_new = y + h * (_A71 * k1 + _A73 * k3 + _A74 * k4 + _A75 * k5 + _A76 * k6)
        k7 = rhs_s(y_new)
        nfev += 6
        err_vec = h * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = math.sqrt(float(np.mean((err_vec / scale) ** 2)))
        if err > 1.0:
            nrejected += 1
            h *= max(_MIN_FACTOR, _SAFETY * err ** -0.2)
            continue

        ydiff = y_new - y
        c3 = h * k1 - ydiff
        step = _Step(
            s0=s,
            h=h,
            c1=y.copy(),
            c2=ydiff,
            c3=c3,
            c4=ydiff - h * k7 - c3,
            c5=h * (_D1 * k1 + _D3 * k3 + _D4 * k4 + _D5 * k5 + _D6 * k6 + _D7 * k7),
        )
        steps.append(step)
        s += h
        boundaries.append(s)
        states.append(y_new.copy())
        naccepted += 1

        if events:
            for s_root, hit in _scan_step(step, events, g_prev, direction, zero_start):
                hits.append(hit)
                if events[hit.index].terminal:
                    terminal_hit = hit
                    break
            if terminal_hit is not None:
                break

        if bounds is not None and not bounds(y_new):
            raise DomainEscape(
                f"state ({y_new[0]:.6g}, {y_new[1]:.6g}) left the working domain "
                f"at t={direction * s:.6g}"
            )

        y = y_new
        f = k7
        factor = _MAX_FACTOR if err == 0.0 else min(_MAX_FACTOR, max(_MIN_FACTOR, _SAFETY * err ** -0.2))
        h *= factor

    traj = Trajectory(
        direction=direction,
        steps=steps,
        s_grid=np.array(boundaries),
        states=np.array(states),
        naccepted=naccepted,
        nrejected=nrejected,
        nfev=nfev,
        events=hits,
    )
    return traj


def flow_trajectory(field: PlanarField, z0, t: float, cfg: IntegratorConfig | None = None) -> Trajectory:
    cfg = cfg or IntegratorConfig()
    return integrate(field.rhs, z0, t, cfg, bounds=field.contains)


def flow(field: PlanarField, z0, t: float, cfg: IntegratorConfig | None = None) -> np.ndarray:
    """The flow map: z0 advanced by time t (t = 0 returns z0 unchanged)."""
    z0 = np.asarray(z0, dtype=float)
    if t == 0.0:
        return z0.copy()
    return flow_trajectory(field, z0, t, cfg).z_final


def flow_to_event(
    field: PlanarField,
    z0,
    event: EventSpec,
    t_direction: int,
    t_max: float,
    cfg: IntegratorConfig | None = None,
) -> tuple[float, np.ndarray]:
    """First strict crossing time of the event in the given time direction.

    A crossing at t = 0 (starting on the zero set) is skipped.  Returns
    (t_hit, z_hit) with t_hit signed; raises EventNotFound if no crossing
    occurs before t_max.
    """
    cfg = cfg or IntegratorConfig()
    if t_direction not in (1, -1):
        raise ValueError("t_direction must be +1 or -1")
    t_max = abs(t_max)
    if t_max > cfg.max_horizon:
        t_max = cfg.max_horizon
    spec = EventSpec(g=event.g, direction=event.direction, terminal=True, accept=event.accept)
    traj = integrate(field.rhs, z0, t_direction * t_max, cfg, events=[spec], bounds=field.contains)
    if not traj.events:
        raise EventNotFound(
            f"no event crossing within |t| <= {t_max:.6g} from ({z0[0]:.6g}, {z0[1]:.6g})"
        )
    hit = traj.events[0]
    return hit.t, hit.z


def jacobian_fd(
    map_fn: Callable[[np.ndarray], np.ndarray], z, h: float | None = None
) -> np.ndarray:
    """2x2 Jacobian of a planar map by central differences, column-wise.

    The default step 1e-5 * (1 + |z|) is snapped to a power of two so the
    stencil offsets carry no representation error; an explicit h is used
    as given.
    """
    z = np.asarray(z, dtype=float)
    if h is None:
        h = 1e-5 * (1.0 + float(np.linalg.norm(z)))
        h = 2.0 ** round(math.log2(h))
    cols = []
    for j in range(2):
        dz = np.zeros_like(z)
        dz[j] = h
        plus = np.asarray(map_fn(z + dz), dtype=float)
        minus = np.asarray(map_fn(z - dz), dtype=float)
        cols.append((plus - minus) / (2.0 * h))
    return np.column_stack(cols)
