"""Time stepping for the phase diffusion and the vector eigen-equation.

Both integrators consume the same :class:`~cstau.noise.BrownianBundle`, so
for real ``z`` the Pruefer coordinates of ``y_z`` and the pair
``(theta, rho)`` describe the same solution up to discretization error.

Sign convention: the noise matrix of the vector equation is built with
``+dB`` on its diagonal, which makes the phase pick up ``-sqrt(tau)/2 dB``.
The law of the phase does not depend on this sign.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .noise import BrownianBundle

# J = ((0, -1), (1, 0))
J = np.array([[0.0, -1.0], [1.0, 0.0]])
B_SIGN = -1.0


@njit(cache=True)
def _phase_kernel(dB, dW1, dW2, dt, tau, lam):
    """Return the deviation ``theta - lam t / 2`` and ``rho`` along the grid.

    The phase is advanced by Euler-Maruyama.  The log-modulus uses the
    increment ``-log(1 - 2 eta) / 2`` (``eta`` the martingale part), whose
    mean matches the ``tau/8`` drift and which makes the discrete
    lambda-derivative of the phase equal to the quadrature of ``exp(2 rho)``.
    """
    n = dB.shape[0]
    phi = np.zeros(n + 1)
    rho = np.zeros(n + 1)
    sb = B_SIGN * np.sqrt(tau) / 2.0
    sw = np.sqrt(tau) / (2.0 * np.sqrt(2.0))
    half_lam = 0.5 * lam
    for i in range(n):
        th = half_lam * (i * dt) + phi[i]
        c2 = np.cos(2.0 * th)
        s2 = np.sin(2.0 * th)
        phi[i + 1] = phi[i] + sb * dB[i] + sw * (c2 * dW1[i] - s2 * dW2[i])
        eta = sw * (s2 * dW1[i] + c2 * dW2[i])
        if 2.0 * eta < 0.5:
            rho[i + 1] = rho[i] - 0.5 * np.log1p(-2.0 * eta)
        else:
            rho[i + 1] = rho[i] + eta + tau * dt / 8.0
    return phi, rho


@njit(cache=True, fastmath=True)
def _phase_end_kernel(dB, dW1, dW2, dt, tau, lam):
    """``(theta(1), rho(1), d theta(1) / d lambda)`` without storing the path.

    ``g = exp(2 rho)`` is carried multiplicatively (the log-modulus step is
    a factor ``1 / (1 - 2 eta)``), rescaled when it grows large.
    """
    n = dB.shape[0]
    sb = B_SIGN * np.sqrt(tau) / 2.0
    sw = np.sqrt(tau) / (2.0 * np.sqrt(2.0))
    half_lam = 0.5 * lam
    phi = 0.0
    g = 1.0
    log_scale = 0.0
    acc = 0.5  # trapezoid sum of g, in units of the current scale
    for i in range(n):
        th = half_lam * (i * dt) + phi
        c2 = np.cos(2.0 * th)
        s2 = np.sin(2.0 * th)
        phi += sb * dB[i] + sw * (c2 * dW1[i] - s2 * dW2[i])
        eta = sw * (s2 * dW1[i] + c2 * dW2[i])
        if 2.0 * eta < 0.5:
            g = g / (1.0 - 2.0 * eta)
        else:
            g = g * np.exp(2.0 * eta + tau * dt / 4.0)
        if g > 1e100:
            log_scale += np.log(g)
            acc /= g
            g = 1.0
        acc += g
    acc -= 0.5 * g
    rho = 0.5 * (np.log(g) + log_scale)
    return half_lam + phi, rho, 0.5 * acc * dt / g


@njit(cache=True)
def _vector_kernel(dB, dW1, dW2, tau, c, s, y0):
    """Exact rotation for the drift composed with an Euler noise step.

    ``c, s`` are ``cos(z dt / 2), sin(z dt / 2)``; ``y0`` has shape (2,).
    """
    n = dB.shape[0]
    y = np.empty((n + 1, 2), dtype=y0.dtype)
    y[0, 0] = y0[0]
    y[0, 1] = y0[1]
    sq = np.sqrt(tau) / 2.0
    r2 = 1.0 / np.sqrt(2.0)
    for i in range(n):
        a = dB[i]
        b = dW1[i] * r2
        d = dW2[i] * r2
        y1 = y[i, 0]
        y2 = y[i, 1]
        u1 = y1 + sq * (-d * y1 - (a - b) * y2)
        u2 = y2 + sq * ((a + b) * y1 + d * y2)
        y[i + 1, 0] = c * u1 + s * u2
        y[i + 1, 1] = c * u2 - s * u1
    return y


@dataclass(frozen=True, eq=False)
class PhasePath:
    """Phase ``theta`` and log-modulus ``rho`` on the bundle grid for one ``(tau, lam)``."""

    tau: float
    lam: float
    grid: np.ndarray
    theta: np.ndarray
    rho: np.ndarray

    @property
    def theta_end(self) -> float:
        return float(self.theta[-1])


@dataclass(frozen=True, eq=False)
class VectorPath:
    """Dirichlet solution ``y`` (from (0, 1)) and Neumann solution ``v`` (from (1, 0))."""

    z: complex
    grid: np.ndarray
    y: np.ndarray
    v: np.ndarray
    wronskian: np.ndarray


def _check_tau(tau):
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")


def integrate_phase(bundle: BrownianBundle, tau: float, lam: float) -> PhasePath:
    _check_tau(tau)
    phi, rho = _phase_kernel(bundle.dB, bundle.dW1, bundle.dW2, bundle.dt, float(tau), float(lam))
    grid = bundle.grid
    theta = 0.5 * lam * grid + phi
    return PhasePath(float(tau), float(lam), grid, theta, rho)


def integrate_phase_family(bundle: BrownianBundle, tau: float, lambdas) -> list[PhasePath]:
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.size > 1 and np.any(np.diff(lambdas) <= 0):
        raise ValueError("lambdas must be strictly increasing")
    return [integrate_phase(bundle, tau, lam) for lam in lambdas]


def phase_endpoint(bundle: BrownianBundle, tau: float, lam: float) -> tuple[float, float, float]:
    """Return ``theta(1)``, ``rho(1)`` and the lambda-derivative of ``theta(1)``."""
    _check_tau(tau)
    return _phase_end_kernel(bundle.dB, bundle.dW1, bundle.dW2, bundle.dt, float(tau), float(lam))


def phase_derivative(path: PhasePath) -> float:
    """Lambda-derivative of ``theta(1)`` as ``(1/2) int_0^1 exp(2 rho(u) - 2 rho(1)) du``."""
    integrand = np.exp(2.0 * (path.rho - path.rho[-1]))
    return 0.5 * float(np.trapezoid(integrand, path.grid))


def integrate_vector(bundle: BrownianBundle, tau: float, z: complex) -> VectorPath:
    """Solve ``dy = -(z/2) J y dt + J dV y`` from (0, 1) and from (1, 0)."""
    _check_tau(tau)
    z = complex(z)
    real = z.imag == 0.0
    half = 0.5 * (z.real if real else z) * bundle.dt
    c, s = np.cos(half), np.sin(half)
    dtype = float if real else complex
    args = (bundle.dB, bundle.dW1, bundle.dW2, float(tau), c, s)
    y = _vector_kernel(*args, np.array([0.0, 1.0], dtype=dtype))
    v = _vector_kernel(*args, np.array([1.0, 0.0], dtype=dtype))
    # y^T J v, equal to 1 at t = 0
    wr = y[:, 1] * v[:, 0] - y[:, 0] * v[:, 1]
    return VectorPath(z, bundle.grid, y, v, wr)


def prufer(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Continuous phase and log-modulus of real ``y = r (sin theta, cos theta)``."""
    theta = np.unwrap(np.arctan2(y[:, 0], y[:, 1]))
    return theta, np.log(np.hypot(y[:, 0], y[:, 1]))
