"""Spectrum, eigenvectors and resolvent of the critical random Dirac operator.

The eigenvalues are the shooting parameters for which the phase ends on
``pi Z``.  Since ``lambda -> theta_lambda(1)`` is increasing, the roots in a
bracket are counted exactly by the multiples of ``pi`` crossed, and each
one is isolated by bisection followed by Newton steps on the phase
derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import noise
from .noise import BrownianBundle
from .sde import integrate_phase, integrate_vector, phase_endpoint

ROOT_TOL = 1e-8
NEWTON_WIDTH = 1e-3
EIGEN_TOL = 1e-6
DENOMINATOR_FLOOR = 1e-12
TAIL_TOL = 1e-12


class NotAnEigenvalueError(ValueError):
    """The phase at t = 1 is not a multiple of pi."""


class DegenerateDenominatorError(ArithmeticError):
    """The Dirichlet solution nearly vanishes at t = 1."""


@dataclass(frozen=True, eq=False)
class SpectralPoint:
    lam: float
    psi: np.ndarray
    grid: np.ndarray
    source: str = "cs-tau"


@dataclass(frozen=True, eq=False)
class IntensityProfile:
    tau: float
    lambdas: np.ndarray
    density: np.ndarray
    truncation_N: int


@dataclass(frozen=True, eq=False)
class UniversalShapeSample:
    """One draw of the limiting eigenvector shape with winding ``n``."""

    n: int
    U: float
    X: np.ndarray
    beta: np.ndarray
    grid: np.ndarray
    B1: np.ndarray  # two-sided path evaluated at t - U


def _l2_norm(w: np.ndarray, grid: np.ndarray) -> float:
    return math.sqrt(float(np.trapezoid(np.sum(np.abs(w) ** 2, axis=1), grid)))


# ---------------------------------------------------------------- eigenvalues


def _refine(f, k: int, lo: float, hi: float, th_lo: float, th_hi: float, tol: float) -> float:
    """Root of ``theta(lam) = k pi`` with ``th_lo < k pi <= th_hi``."""
    target = k * math.pi
    if th_hi == target:
        return hi
    while hi - lo > NEWTON_WIDTH:
        mid = 0.5 * (lo + hi)
        th, _, _ = f(mid)
        if th == target:
            return mid
        if th < target:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(60):
        th, _, d = f(x)
        resid = th - target
        if resid == 0.0:
            return x
        if resid < 0:
            lo = x
        else:
            hi = x
        step = resid / d
        x_new = x - step
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) < 0.01 * tol or hi - lo < 0.01 * tol:
            return x_new
        x = x_new
    return x


def locate_eigenvalues(bundle: BrownianBundle, tau: float, window, tol: float = ROOT_TOL) -> np.ndarray:
    """All ``lam`` in ``[a, b]`` with ``theta_lam(1)`` in ``pi Z``, sorted."""
    a, b = (float(w) for w in window)
    if not a < b:
        raise ValueError(f"window must satisfy a < b, got [{a}, {b}]")
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")

    def f(lam):
        return phase_endpoint(bundle, tau, lam)

    roots = []
    lam, (th, _, d) = a, f(a)
    if th == math.pi * round(th / math.pi):
        roots.append(a)
    while lam < b:
        step = math.pi / (2.0 * max(d, 0.5))
        nxt = min(lam + step, b)
        th_n, _, d_n = f(nxt)
        k_lo = math.floor(th / math.pi) + 1
        k_hi = math.floor(th_n / math.pi)
        lo, th_l = lam, th
        for k in range(k_lo, k_hi + 1):
            r = _refine(f, k, lo, nxt, th_l, th_n, tol)
            roots.append(r)
            lo, th_l = r, k * math.pi
        lam, th, d = nxt, th_n, d_n
    return np.array(roots)


def eigenvalue_count(bundle: BrownianBundle, tau: float, window) -> int:
    """Number of eigenvalues in ``[a, b]`` from the endpoint phases alone."""
    a, b = (float(w) for w in window)
    th_a = phase_endpoint(bundle, tau, a)[0]
    th_b = phase_endpoint(bundle, tau, b)[0]
    return math.floor(th_b / math.pi) - math.ceil(th_a / math.pi) + 1


# ---------------------------------------------------------------- eigenvectors


def eigenvector(bundle: BrownianBundle, tau: float, lam: float, tol: float = EIGEN_TOL) -> SpectralPoint:
    """Normalized ``exp(rho) (sin theta, cos theta)`` at an eigenvalue."""
    path = integrate_phase(bundle, tau, lam)
    th1 = path.theta[-1]
    resid = th1 - math.pi * round(th1 / math.pi)
    if abs(resid) > tol:
        raise NotAnEigenvalueError(f"theta(1) is {resid:.3g} away from pi Z at lam={lam}")
    amp = np.exp(path.rho - path.rho.max())
    psi = np.column_stack((amp * np.sin(path.theta), amp * np.cos(path.theta)))
    psi /= _l2_norm(psi, path.grid)
    return SpectralPoint(float(lam), psi, path.grid, "cs-tau")


# ---------------------------------------------------------------- resolvent


def _cumtrapz(vals: np.ndarray, grid: np.ndarray) -> np.ndarray:
    out = np.zeros_like(vals)
    out[1:] = np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(grid))
    return out


def resolvent_apply(bundle: BrownianBundle, tau: float, z: complex, f: np.ndarray) -> np.ndarray:
    """Apply ``(CS_tau - z)^{-1}`` to a grid function ``f`` of shape (n+1, 2).

    The kernel is ``(1/2) y(t) yhat(s)^T`` for ``t <= s`` and
    ``(1/2) yhat(t) y(s)^T`` for ``s < t``.
    """
    z = complex(z)
    if z.imag == 0.0:
        raise ValueError("z must be nonreal")
    f = np.asarray(f)
    if f.shape != (bundle.n_steps + 1, 2):
        raise ValueError(f"f must have shape ({bundle.n_steps + 1}, 2), got {f.shape}")
    vp = integrate_vector(bundle, tau, z)
    y, v, grid = vp.y, vp.v, vp.grid
    if abs(y[-1, 0]) < DENOMINATOR_FLOOR:
        raise DegenerateDenominatorError(f"|y_1(1)| = {abs(y[-1, 0]):.3g}")
    alpha = v[-1, 0] / y[-1, 0]
    yhat = v - alpha * y
    left = _cumtrapz(np.sum(y * f, axis=1), grid)  # int_0^t y^T f
    right_all = _cumtrapz(np.sum(yhat * f, axis=1), grid)
    right = right_all[-1] - right_all  # int_t^1 yhat^T f
    return 0.5 * (y * right[:, None] + yhat * left[:, None])


def dirichlet_basis(bundle: BrownianBundle, tau: float, z: complex):
    """``(y, yhat)`` used by the resolvent kernel."""
    vp = integrate_vector(bundle, tau, complex(z))
    alpha = vp.v[-1, 0] / vp.y[-1, 0]
    return vp.y, vp.v - alpha * vp.y


# ---------------------------------------------------------------- intensity


def _truncation(sigma2: float) -> int:
    """Smallest N whose tail sum over |n| > N is below ``TAIL_TOL`` for all reduced lam."""
    c = 1.0 / math.sqrt(2.0 * math.pi * sigma2)
    N = 0
    while True:
        # for |lam| <= pi the first neglected term sits at distance >= (2N+1) pi
        first = math.exp(-((2 * N + 1) * math.pi) ** 2 / (2.0 * sigma2))
        ratio = math.exp(-(8 * N + 8) * math.pi ** 2 / (2.0 * sigma2))
        if 2.0 * c * first / (1.0 - ratio) < TAIL_TOL:
            return N
        N += 1


def intensity_density(tau: float, lambdas) -> IntensityProfile:
    """First-intensity density ``sum_n g_{lam, 3 tau / 2}(2 n pi)``."""
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    sigma2 = 1.5 * tau
    N = _truncation(sigma2)
    r = lambdas - 2.0 * math.pi * np.round(lambdas / (2.0 * math.pi))
    n = np.arange(-N, N + 1, dtype=float)
    dens = np.empty_like(r)
    chunk = max(1, 2_000_000 // n.size)
    for s in range(0, r.size, chunk):
        d = 2.0 * math.pi * n[None, :] - r[s : s + chunk, None]
        dens[s : s + chunk] = np.exp(-(d * d) / (2.0 * sigma2)).sum(axis=1)
    dens /= math.sqrt(2.0 * math.pi * sigma2)
    return IntensityProfile(float(tau), lambdas, dens, N)


# ---------------------------------------------------------------- universal shape


def _forward_path(seed: int, stream: int, times: np.ndarray) -> np.ndarray:
    """Brownian motion at the increasing nonnegative ``times`` (started at 0)."""
    z = noise.stream_generator(seed, stream).standard_normal(times.size)
    gaps = np.diff(times, prepend=0.0)
    return np.cumsum(np.sqrt(gaps) * z)


def sample_universal_shape(tau: float, n: int, seed: int, n_steps: int = 10_000) -> UniversalShapeSample:
    """Draw the normalized limiting eigenvector shape for winding class ``n``.

    The two-sided path is built from two independent forward paths glued at
    the uniform centre ``U``; the phase is a Brownian bridge from 0 to
    ``n pi``.
    """
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    grid = np.linspace(0.0, 1.0, n_steps + 1)
    U = float(noise.stream_generator(seed, noise.STREAM_SHAPE_U).random())

    right = grid >= U
    B1 = np.empty_like(grid)
    B1[right] = _forward_path(seed, noise.STREAM_SHAPE_RIGHT, grid[right] - U)
    left_times = (U - grid[~right])[::-1]
    B1[~right] = _forward_path(seed, noise.STREAM_SHAPE_LEFT, left_times)[::-1]

    B2 = np.zeros_like(grid)
    B2[1:] = np.cumsum(noise.gaussian_increments(seed, noise.STREAM_SHAPE_BRIDGE, n_steps, 1.0 / n_steps))
    bridge = B2 - grid * B2[-1]
    beta = 0.5 * math.sqrt(1.5 * tau) * bridge + n * math.pi * grid

    log_amp = math.sqrt(tau) / (2.0 * math.sqrt(2.0)) * B1 - tau / 8.0 * np.abs(grid - U)
    amp = np.exp(log_amp - log_amp.max())
    X = np.column_stack((amp * np.sin(beta), amp * np.cos(beta)))
    X /= _l2_norm(X, grid)
    return UniversalShapeSample(int(n), U, X, beta, grid, B1)
