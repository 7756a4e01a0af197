"""Finite-volume Anderson Hamiltonian ``-d^2/dx^2 + dB`` on ``[0, L]``.

The operator is discretized on ``N`` interior points with Dirichlet
boundary conditions; the white noise enters the diagonal as ``dB_i / h``.
Eigenvalues in a window come from Sturm counts and bisection, eigenvectors
from inverse iteration.  Eigenpairs are then recentred around an energy
``E``, rescaled to ``[0, 1]`` and unrotated by the evolving rotation of
frequency ``E'``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import LinAlgError, solve_banded

from . import noise
from .noise import BrownianBundle

EIG_RTOL = 1e-13
MAX_INVERSE_ITER = 5


@dataclass(frozen=True, eq=False)
class AndersonMatrix:
    """Symmetric tridiagonal matrix with constant off-diagonal ``-1/h^2``."""

    L: float
    N: int
    h: float
    diag: np.ndarray
    offdiag: float
    seed: int
    dB_increments: np.ndarray

    def dense(self) -> np.ndarray:
        off = np.full(self.N - 1, self.offdiag)
        return np.diag(self.diag) + np.diag(off, 1) + np.diag(off, -1)

    @property
    def grid(self) -> np.ndarray:
        """Positions ``x_j = j h`` including both boundary points."""
        return np.arange(self.N + 2) * self.h

    def norm_bound(self) -> float:
        return float(np.max(np.abs(self.diag)) + 2.0 * abs(self.offdiag))


@dataclass(frozen=True, eq=False)
class EigenPair:
    mu: float
    vector: np.ndarray  # unit l2 norm, interior points only
    index: int  # 1-based position in the full spectrum
    converged: bool


@dataclass(frozen=True, eq=False)
class Recentring:
    """Affine map ``mu -> lam`` and the rotation frequency around energy ``E``.

    ``wavenumber`` is ``sqrt(E)`` for the continuum convention; with a mesh
    ``h`` it is the lattice wavenumber whose discrete Laplacian eigenvalue
    is ``E``.
    """

    E: float
    L: float
    h: float | None
    wavenumber: float
    ell_E: float
    E_prime: float
    slope: float  # d lam / d mu
    deriv_scale: float  # divides the t-derivative of phi

    def to_lambda(self, mu):
        return self.slope * (np.asarray(mu, dtype=float) - self.E) + 2.0 * self.ell_E

    def to_mu(self, lam):
        return self.E + (np.asarray(lam, dtype=float) - 2.0 * self.ell_E) / self.slope


@dataclass(frozen=True, eq=False)
class RescaledEigenpair:
    mu: float
    lam: float
    E: float
    ell_E: float
    E_prime: float
    grid: np.ndarray
    phi: np.ndarray
    phi_prime: np.ndarray
    psiE: np.ndarray
    profile: np.ndarray  # L phi(L t)^2, a probability density on [0, 1]
    converged: bool = True

    @property
    def envelope(self) -> np.ndarray:
        """``|Psi^(E)|^2`` normalized to a probability density."""
        return np.sum(self.psiE ** 2, axis=1)


@dataclass(frozen=True, eq=False)
class PruferPathE:
    lam: float
    tau_eff: float
    E_prime: float
    ell_E: float
    grid: np.ndarray
    theta: np.ndarray
    logr: np.ndarray
    err_theta: np.ndarray  # running integral of the phase error drift
    err_logr: np.ndarray


# ---------------------------------------------------------------- assembly


def discretize(L: float, N: int, seed: int, with_noise: bool = True) -> AndersonMatrix:
    """Tridiagonal ``-d^2 + dB`` with mesh ``h = L / (N + 1)``."""
    if not L > 0:
        raise ValueError(f"L must be > 0, got {L}")
    if N < 2:
        raise ValueError(f"N must be >= 2, got {N}")
    h = L / (N + 1)
    if with_noise:
        dB = noise.gaussian_increments(seed, noise.STREAM_ANDERSON, N, h)
    else:
        dB = np.zeros(N)
    dB.setflags(write=False)
    diag = 2.0 / h ** 2 + dB / h
    diag.setflags(write=False)
    return AndersonMatrix(float(L), int(N), h, diag, -1.0 / h ** 2, int(seed), dB)


def default_N(L: float, E: float, resolution: float = 1.0 / 20.0) -> int:
    """Smallest ``N`` with ``h sqrt(E) <= resolution``."""
    return max(2, math.ceil(L * math.sqrt(E) / resolution) - 1)


# ---------------------------------------------------------------- eigenvalues


@njit(cache=True)
def _sturm_count(diag, off2, x):
    """Number of eigenvalues ``<= x`` (a zero pivot counts as negative)."""
    count = 0
    q = 1.0
    tiny = 1e-300
    for i in range(diag.shape[0]):
        if i == 0:
            q = diag[0] - x
        else:
            q = diag[i] - x - off2 / q
        if q <= 0.0:
            count += 1
            if q == 0.0:
                q = -tiny
    return count


@njit(cache=True)
def _bisect_index(diag, off2, j, lo, hi, rtol):
    """Smallest ``x`` with at least ``j`` eigenvalues ``<= x``, inside ``(lo, hi]``."""
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= rtol * max(abs(lo), abs(hi)):
            return hi
        if _sturm_count(diag, off2, mid) >= j:
            hi = mid
        else:
            lo = mid


def sturm_count(matrix: AndersonMatrix, x: float) -> int:
    return int(_sturm_count(matrix.diag, matrix.offdiag ** 2, float(x)))


def _inverse_iteration(matrix: AndersonMatrix, mu: float, previous: list, rng) -> tuple[np.ndarray, bool]:
    N = matrix.N
    ab = np.empty((3, N))
    ab[0, :] = matrix.offdiag
    ab[2, :] = matrix.offdiag
    scale = matrix.norm_bound()
    shift = mu
    for _ in range(4):
        ab[1, :] = matrix.diag - shift
        try:
            lu_ok = True
            x = rng.standard_normal(N)
            x /= np.linalg.norm(x)
            converged = False
            for _ in range(MAX_INVERSE_ITER):
                x = solve_banded((1, 1), ab, x, check_finite=False)
                for w in previous:
                    x -= np.dot(w, x) * w
                x /= np.linalg.norm(x)
                r = matrix.diag * x - mu * x
                r[:-1] += matrix.offdiag * x[1:]
                r[1:] += matrix.offdiag * x[:-1]
                if np.linalg.norm(r) <= 1e3 * np.finfo(float).eps * scale:
                    converged = True
                    break
            break
        except LinAlgError:
            lu_ok = False
            shift = mu + 4.0 * np.finfo(float).eps * scale * (1 + rng.random())
    if not lu_ok:
        return np.full(N, np.nan), False
    # sign convention: positive slope at the left boundary
    nz = np.flatnonzero(np.abs(x) > 1e-8 * np.abs(x).max())
    if nz.size and x[nz[0]] < 0:
        x = -x
    return x, converged


def eigen_window(matrix: AndersonMatrix, mu_lo: float, mu_hi: float) -> list[EigenPair]:
    """All eigenpairs with ``mu_lo < mu <= mu_hi``, in increasing order."""
    if not mu_lo < mu_hi:
        raise ValueError(f"need mu_lo < mu_hi, got ({mu_lo}, {mu_hi})")
    off2 = matrix.offdiag ** 2
    c_lo = _sturm_count(matrix.diag, off2, float(mu_lo))
    c_hi = _sturm_count(matrix.diag, off2, float(mu_hi))
    rng = np.random.default_rng(np.random.SeedSequence(matrix.seed & ((1 << 64) - 1), spawn_key=(99,)))
    cluster_tol = 1e-9 * matrix.norm_bound()
    pairs: list[EigenPair] = []
    lo = float(mu_lo)
    for j in range(c_lo + 1, c_hi + 1):
        mu = _bisect_index(matrix.diag, off2, j, lo, float(mu_hi), EIG_RTOL)
        previous = [p.vector for p in pairs if abs(p.mu - mu) < cluster_tol and p.converged]
        vec, ok = _inverse_iteration(matrix, mu, previous, rng)
        vec.setflags(write=False)
        pairs.append(EigenPair(float(mu), vec, j, ok))
        lo = float(np.nextafter(mu, -np.inf))
    return pairs


# ---------------------------------------------------------------- rescaling


def recentring(E: float, L: float, h: float | None = None) -> Recentring:
    """Recentring data; ``ell_E = {k L}_pi`` and ``E' = k L - ell_E``.

    With ``h=None`` the wavenumber is ``sqrt(E)`` and the slope ``L/sqrt(E)``.
    With a mesh, the lattice dispersion ``mu = (4/h^2) sin^2(k h / 2)`` is
    linearized at ``E`` instead.
    """
    if not E > 0:
        raise ValueError(f"E must be > 0, got {E}")
    if h is None:
        k = math.sqrt(E)
        slope = L / k
        deriv_scale = L * k
    else:
        arg = h * math.sqrt(E) / 2.0
        if arg >= 1.0:
            raise ValueError("E lies above the lattice band")
        k = 2.0 / h * math.asin(arg)
        dmu_dk = 2.0 / h * math.sin(k * h)
        slope = 2.0 * L / dmu_dk
        deriv_scale = L * math.sin(k * h) / h
    kl = k * L
    ell = math.fmod(kl, math.pi)
    if ell < 0:
        ell += math.pi
    if ell >= math.pi:
        ell = 0.0
    return Recentring(float(E), float(L), h, k, ell, kl - ell, slope, deriv_scale)


def rotation(E_prime: float, t: np.ndarray) -> np.ndarray:
    """``C_{E'}(t)`` stacked along the first axis, shape (len(t), 2, 2)."""
    c, s = np.cos(E_prime * t), np.sin(E_prime * t)
    return np.stack((np.stack((c, -s), -1), np.stack((s, c), -1)), -2)


def unrotate(phi: np.ndarray, phi_prime: np.ndarray, E_prime: float, t: np.ndarray) -> np.ndarray:
    """Pointwise ``C_{E'}(t) (phi, phi_prime)``, not normalized."""
    c, s = np.cos(E_prime * t), np.sin(E_prime * t)
    return np.column_stack((c * phi - s * phi_prime, s * phi + c * phi_prime))


def _derivative(f: np.ndarray, dt: float) -> np.ndarray:
    d = np.empty_like(f)
    d[1:-1] = (f[2:] - f[:-2]) / (2.0 * dt)
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dt)
    d[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * dt)
    return d


def rescale_pair(pair: EigenPair, rc: Recentring, N: int) -> RescaledEigenpair:
    L = rc.L
    h = L / (N + 1)
    t = np.arange(N + 2) / (N + 1)
    phi = np.zeros(N + 2)
    phi[1:-1] = math.sqrt(L / h) * pair.vector
    phi_prime = _derivative(phi, 1.0 / (N + 1)) / rc.deriv_scale
    psi = unrotate(phi, phi_prime, rc.E_prime, t)
    psi /= math.sqrt(float(np.trapezoid(np.sum(psi ** 2, axis=1), t)))
    profile = phi ** 2 / float(np.trapezoid(phi ** 2, t))
    return RescaledEigenpair(
        mu=pair.mu,
        lam=float(rc.to_lambda(pair.mu)),
        E=rc.E,
        ell_E=rc.ell_E,
        E_prime=rc.E_prime,
        grid=t,
        phi=phi,
        phi_prime=phi_prime,
        psiE=psi,
        profile=profile,
        converged=pair.converged,
    )


def rescale_spectrum(pairs, E: float, L: float, h: float | None = None) -> list[RescaledEigenpair]:
    """Recentre, rescale to ``[0, 1]`` and unrotate a list of eigenpairs."""
    rc = recentring(E, L, h)
    out = []
    for p in pairs:
        out.append(rescale_pair(p, rc, p.vector.size))
    return out


def spectrum_window(L: float, E: float, N: int, seed: int, lam_window, lattice: bool = False):
    """Rescaled eigenpairs whose recentred eigenvalue lies in ``lam_window``."""
    matrix = discretize(L, N, seed)
    rc = recentring(E, L, matrix.h if lattice else None)
    mu_lo, mu_hi = rc.to_mu(lam_window[0]), rc.to_mu(lam_window[1])
    pairs = eigen_window(matrix, float(mu_lo), float(mu_hi))
    return rc, [rescale_pair(p, rc, N) for p in pairs]


def spectrum_values(L: float, E: float, N: int, seed: int, lam_window, lattice: bool = False) -> np.ndarray:
    """Recentred eigenvalues in ``lam_window`` without eigenvectors."""
    matrix = discretize(L, N, seed)
    rc = recentring(E, L, matrix.h if lattice else None)
    mu_lo, mu_hi = float(rc.to_mu(lam_window[0])), float(rc.to_mu(lam_window[1]))
    off2 = matrix.offdiag ** 2
    c_lo = _sturm_count(matrix.diag, off2, mu_lo)
    c_hi = _sturm_count(matrix.diag, off2, mu_hi)
    mus = np.empty(c_hi - c_lo)
    lo = mu_lo
    for i, j in enumerate(range(c_lo + 1, c_hi + 1)):
        mus[i] = _bisect_index(matrix.diag, off2, j, lo, mu_hi, EIG_RTOL)
        lo = float(np.nextafter(mus[i], -np.inf))
    return rc.to_lambda(mus)


# ---------------------------------------------------------------- Pruefer diagnostics


@njit(cache=True)
def _prufer_kernel(dB, dW1, dW2, dt, tau, lam, ell, Ep):
    n = dB.shape[0]
    theta = np.zeros(n + 1)
    logr = np.zeros(n + 1)
    e_th = np.zeros(n + 1)
    e_r = np.zeros(n + 1)
    sb = np.sqrt(tau) / 2.0
    sw = np.sqrt(tau) / (2.0 * np.sqrt(2.0))
    a = (2.0 * ell - lam) / 2.0
    for i in range(n):
        t = i * dt
        th = theta[i]
        c2 = np.cos(2.0 * th)
        s2 = np.sin(2.0 * th)
        p2 = 2.0 * th + 2.0 * Ep * t
        p4 = 2.0 * p2
        err_th = a * np.cos(p2) + tau / 4.0 * np.sin(p2) - tau / 8.0 * np.sin(p4)
        err_r = a * np.sin(p2) - tau / 4.0 * np.cos(p2) + tau / 8.0 * np.cos(p4)
        theta[i + 1] = th + 0.5 * lam * dt - sb * dB[i] + sw * (c2 * dW1[i] - s2 * dW2[i]) + err_th * dt
        logr[i + 1] = logr[i] + tau / 8.0 * dt + sw * (s2 * dW1[i] + c2 * dW2[i]) + err_r * dt
        e_th[i + 1] = e_th[i] + err_th * dt
        e_r[i + 1] = e_r[i] + err_r * dt
    return theta, logr, e_th, e_r


def prufer_path(bundle: BrownianBundle, tau_eff: float, E_prime: float, lam: float, ell_E: float) -> PruferPathE:
    """Euler-Maruyama for the rescaled phase and log-modulus, error drifts included.

    ``bundle.dB`` plays the role of the rescaled potential noise; the two
    rotated noises are derived from it.
    """
    if tau_eff < 0:
        raise ValueError(f"tau_eff must be >= 0, got {tau_eff}")
    if bundle.n_steps < 20.0 * E_prime:
        raise ValueError(f"n_steps={bundle.n_steps} is below 20 E' = {20.0 * E_prime:.0f}")
    rot = noise.rotate_noise(bundle, E_prime)
    theta, logr, e_th, e_r = _prufer_kernel(
        bundle.dB, rot.dW1L, rot.dW2L, bundle.dt, float(tau_eff), float(lam), float(ell_E), float(E_prime)
    )
    return PruferPathE(float(lam), float(tau_eff), float(E_prime), float(ell_E), bundle.grid, theta, logr, e_th, e_r)
