"""Independent oracles for the test suite.

Everything here deliberately avoids the package's adaptive integrator and
event machinery: periods come from adaptive quadrature of energy integrals,
flow-map Jacobians from a fixed-step classical RK4 run of the variational
equations, and the linear center from closed forms.  Expected values frozen
in the tests were computed with these routines (cross-checked against
special-function identities where available).
"""

import math

import numpy as np
from scipy import integrate


def elliptic_k_quad(k: float) -> float:
    """Complete elliptic integral K(k) by adaptive quadrature."""
    f = lambda th: 1.0 / math.sqrt(1.0 - (k * math.sin(th)) ** 2)
    val, _ = integrate.quad(f, 0.0, math.pi / 2, epsabs=1e-14, epsrel=1e-13)
    return val


def pendulum_period(amplitude: float) -> float:
    """Libration period of x'' = -sin x through (amplitude, 0)."""
    return 4.0 * elliptic_k_quad(math.sin(0.5 * amplitude))


def half_period_energy_quad(potential, x_left: float, x_right: float, energy: float) -> float:
    """T/2 = integral dx / sqrt(2 (E - U(x))) between the turning points.

    Substituting x = mid + half*sin(u) removes the endpoint singularity.
    """
    mid = 0.5 * (x_left + x_right)
    half = 0.5 * (x_right - x_left)

    def f(u):
        x = mid + half * math.sin(u)
        d = 2.0 * (energy - potential(x))
        if d <= 0.0:
            return 0.0
        return half * math.cos(u) / math.sqrt(d)

    val, _ = integrate.quad(f, -math.pi / 2, math.pi / 2,
                            epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def duffing_period(amplitude: float) -> float:
    """Period of x'' = -x - x^3 through (amplitude, 0), by energy quadrature."""
    u = lambda x: 0.5 * x * x + 0.25 * x ** 4
    return 2.0 * half_period_energy_quad(u, -amplitude, amplitude, u(amplitude))


def pendulum_period_energy(amplitude: float) -> float:
    """Second, independent route to the pendulum period (energy quadrature)."""
    u = lambda x: 1.0 - math.cos(x)
    return 2.0 * half_period_energy_quad(u, -amplitude, amplitude, u(amplitude))


def cubic_quarter_integral() -> float:
    """integral_0^1 (1 - t^4)^(-3/4) dt via quadrature with the algebraic
    endpoint weight split off: (1-t^4) = (1-t)(1+t)(1+t^2)."""
    f = lambda t: (1.0 + t) ** -0.75 * (1.0 + t * t) ** -0.75
    val, _ = integrate.quad(f, 0.0, 1.0, weight="alg", wvar=(0.0, -0.75),
                            epsabs=1e-14, epsrel=1e-13)
    return val


def cubic_center_period(lam: float) -> float:
    """Period of (x', y') = (-y^3, x^3) through (lam, 0).

    The field is homogeneous of degree 3, so T(lam, 0) = T(1, 0) / lam^2
    with T(1, 0) = 4 * cubic_quarter_integral().
    """
    return 4.0 * cubic_quarter_integral() / (lam * lam)


def rotation_matrix(t: float) -> np.ndarray:
    c, s = math.cos(t), math.sin(t)
    return np.array(((c, -s), (s, c)))


def linear_center_flow(z, t: float) -> np.ndarray:
    """Closed-form flow of (x', y') = (-y, x): rotation by t."""
    return rotation_matrix(t) @ np.asarray(z, dtype=float)


def variational_jacobian(field, z, t: float, n_steps: int = 4000) -> np.ndarray:
    """d phi(t, .) / dz at z by integrating the variational equations with a
    fixed-step classical RK4 on the augmented (state, matrix) system."""
    z = np.asarray(z, dtype=float)

    def rhs(state):
        pos = state[:2]
        mat = state[2:].reshape(2, 2)
        dpos = field.velocity(pos)
        dmat = field.jacobian_exact(pos) @ mat
        return np.concatenate([dpos, dmat.ravel()])

    state = np.concatenate([z, np.eye(2).ravel()])
    h = t / n_steps
    for _ in range(n_steps):
        k1 = rhs(state)
        k2 = rhs(state + 0.5 * h * k1)
        k3 = rhs(state + 0.5 * h * k2)
        k4 = rhs(state + h * k3)
        state = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return state[2:].reshape(2, 2)


# Frozen oracle outputs (cross-checked against 4K(sin(a/2)), 4K(k)/sqrt(1+a^2)
# with k^2 = a^2/(2(1+a^2)), and Gamma(1/4)^2/sqrt(pi) respectively).
T_PENDULUM_HALF_PI = 7.416298709205488
T_DUFFING_AMP1 = 4.768022029102461
T_CUBIC_AMP1 = 7.416298709205488
