"""Comparison statistics for simulated spectra and eigenvector profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .noise import BrownianBundle
from .schtau import intensity_density, resolvent_apply

TWO_PI = 2.0 * math.pi
MIN_SEEDS = 100
CHI2_LEVEL = 0.999
MIN_EXPECTED_CHI2 = 5.0
MIN_EXPECTED_REL = 100.0


@dataclass(frozen=True, eq=False)
class HistogramComparison:
    bin_edges: np.ndarray
    observed: np.ndarray
    expected: np.ndarray
    chi_square: float
    chi_square_threshold: float
    dof: int
    max_rel_dev: float
    std_error: np.ndarray  # standard error of the per-seed mean count in each bin
    n_seeds: int
    below: int  # points left of the first edge
    above: int  # points at or right of the last edge

    @property
    def total(self) -> int:
        return int(self.observed.sum()) + self.below + self.above

    @property
    def chi_square_ok(self) -> bool:
        return self.chi_square < self.chi_square_threshold


@dataclass(frozen=True)
class ShapeFit:
    center_hat: float
    decay_rate_hat: float
    r_squared: float
    left_slope: float
    right_slope: float


# ---------------------------------------------------------------- intensity


def _expected_counts(tau: float, edges: np.ndarray) -> np.ndarray:
    """Mean number of points per bin and per seed."""
    if tau == 0:
        lo, hi = edges[:-1], edges[1:]
        # lattice points 2 pi k with lo <= 2 pi k < hi
        return (np.ceil(hi / TWO_PI) - np.ceil(lo / TWO_PI)).astype(float)
    nodes, weights = np.polynomial.legendre.leggauss(5)
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    dens = intensity_density(tau, pts.ravel()).density.reshape(pts.shape)
    return half * (dens @ weights)


def empirical_intensity(eigenvalue_lists, tau: float, bins) -> HistogramComparison:
    """Pool per-seed eigenvalue lists and compare bin counts with the analytic intensity."""
    lists = [np.asarray(x, dtype=float) for x in eigenvalue_lists]
    if not lists:
        raise ValueError("no eigenvalue lists given")
    if len(lists) < MIN_SEEDS:
        raise ValueError(f"need at least {MIN_SEEDS} seeds, got {len(lists)}")
    edges = np.asarray(bins, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bins must be increasing edges")
    n = len(lists)
    per_seed = np.array([np.histogram(x, edges)[0] for x in lists])
    # np.histogram closes the last bin; move points sitting on the last edge to `above`
    on_last = np.array([np.sum(x == edges[-1]) for x in lists])
    per_seed[:, -1] -= on_last
    observed = per_seed.sum(axis=0)
    below = int(sum(np.sum(x < edges[0]) for x in lists))
    above = int(sum(np.sum(x >= edges[-1]) for x in lists))

    expected = n * _expected_counts(tau, edges)
    std_error = per_seed.std(axis=0, ddof=1) / math.sqrt(n)

    use = expected >= MIN_EXPECTED_CHI2
    chi_sq = float(np.sum((observed[use] - expected[use]) ** 2 / expected[use]))
    dof = max(int(use.sum()) - 1, 1)
    threshold = float(chi2.ppf(CHI2_LEVEL, dof))
    rel = expected >= MIN_EXPECTED_REL
    max_rel = float(np.max(np.abs(observed[rel] - expected[rel]) / expected[rel])) if rel.any() else float("nan")
    return HistogramComparison(edges, observed, expected, chi_sq, threshold, dof, max_rel, std_error, n, below, above)


# ---------------------------------------------------------------- spacings and KS


def spacing_statistics(points, window) -> np.ndarray:
    """Gaps between consecutive points inside ``[a, b]``; empty if fewer than two."""
    a, b = window
    p = np.sort(np.asarray(points, dtype=float))
    p = p[(p >= a) & (p <= b)]
    return np.diff(p)


def pooled_spacings(point_lists, window) -> np.ndarray:
    gaps = [spacing_statistics(p, window) for p in point_lists]
    return np.concatenate(gaps) if gaps else np.empty(0)


def ks_distance(sample_a, sample_b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic ``sup |F_a - F_b|``."""
    a = np.sort(np.asarray(sample_a, dtype=float))
    b = np.sort(np.asarray(sample_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    x = np.concatenate((a, b))
    fa = np.searchsorted(a, x, side="right") / a.size
    fb = np.searchsorted(b, x, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


# ---------------------------------------------------------------- shapes


def _line(x, y):
    A = np.column_stack((x, np.ones_like(x)))
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coef, A @ coef


def shape_fit(profile, grid=None, center=None, exclude: float = 0.1) -> ShapeFit:
    """Two-sided log-linear fit of a peaked profile on ``[0, 1]``.

    The peak is the argmax unless ``center`` is given.  Points within
    ``exclude / 2`` of the peak are dropped, a line is fitted to the log of
    the profile on each side, and the decay rate is the average of the two
    slope magnitudes.
    """
    p = np.asarray(profile, dtype=float)
    if p.ndim != 1 or p.size < 3 or np.any(~np.isfinite(p)) or np.any(p < 0) or not np.any(p > 0):
        raise ValueError("profile must be a nonnegative, finite, nonzero 1-d array")
    t = np.linspace(0.0, 1.0, p.size) if grid is None else np.asarray(grid, dtype=float)
    c = float(t[np.argmax(p)]) if center is None else float(center)
    keep = p > 0
    logp = np.log(np.where(keep, p, 1.0))
    left = keep & (t < c - exclude / 2)
    right = keep & (t > c + exclude / 2)

    slopes = []
    resid = 0.0
    total = 0.0
    l_slope = r_slope = float("nan")
    for side, sign in ((left, 1.0), (right, -1.0)):
        if side.sum() < 2:
            continue
        (m, _), fit = _line(t[side], logp[side])
        slopes.append(sign * m)
        resid += float(np.sum((logp[side] - fit) ** 2))
        total += float(np.sum((logp[side] - logp[side].mean()) ** 2))
        if sign > 0:
            l_slope = float(m)
        else:
            r_slope = float(m)
    if not slopes:
        raise ValueError("no points left to fit outside the peak window")
    r2 = 1.0 - resid / total if total > 0 else 1.0
    return ShapeFit(c, float(np.mean(slopes)), float(r2), l_slope, r_slope)


def ensemble_decay_rate(log_profiles, grid) -> float:
    """Decay rate from the ensemble-mean log profile with uniformly spread centres.

    If ``log p(t) = -c |t - U| + (centred noise) + const`` with ``U`` uniform
    on [0, 1], the mean over the ensemble is ``-c (t^2 - t) + const``; the
    rate is minus the fitted quadratic coefficient.
    """
    mean = np.mean(np.asarray(log_profiles, dtype=float), axis=0)
    t = np.asarray(grid, dtype=float)
    coef = np.polyfit(t, mean, 2)
    return float(-coef[0])


def aligned_decay_rate(log_profiles, grid, centers, exclude: float = 0.1, half_width: float = 0.5) -> float:
    """Decay rate of the mean log profile after shifting each one to its centre."""
    t = np.asarray(grid, dtype=float)
    offsets = np.linspace(-half_width, half_width, 201)
    acc = np.zeros_like(offsets)
    cnt = np.zeros_like(offsets)
    for lp, c in zip(log_profiles, centers):
        s = offsets + c
        inside = (s >= t[0]) & (s <= t[-1])
        acc[inside] += np.interp(s[inside], t, lp)
        cnt[inside] += 1
    ok = cnt > 0
    mean = acc[ok] / cnt[ok]
    return shape_fit(np.exp(mean - mean.max()), offsets[ok], center=0.0, exclude=exclude).decay_rate_hat


# ---------------------------------------------------------------- picket fence


def picket_fence_deviation(lambdas) -> float:
    """Largest distance from the points to the lattice ``2 pi Z`` (0 for no points)."""
    lam = np.asarray(lambdas, dtype=float)
    if lam.size == 0:
        return 0.0
    return float(np.max(np.abs(lam - TWO_PI * np.round(lam / TWO_PI))))


# ---------------------------------------------------------------- norm resolvent


def g_E(t, E_prime: float) -> np.ndarray:
    """``(sin^2 E't, -sin E't cos E't)``, annihilated by the projection ``R_{E'}``."""
    s, c = np.sin(E_prime * np.asarray(t)), np.cos(E_prime * np.asarray(t))
    return np.column_stack((s * s, -s * c))


def g_E_norm_squared(E_prime: float, n_points: int = 200_001) -> float:
    t = np.linspace(0.0, 1.0, n_points)
    return float(np.trapezoid(np.sum(g_E(t, E_prime) ** 2, axis=1), t))


def norm_resolvent_demo(bundle: BrownianBundle, tau: float, E_prime: float, z: complex) -> tuple[float, float]:
    """``(0, ||(CS_tau - z)^{-1} g_E||)``; the first entry is exact since ``R_{E'} g_E = 0``."""
    if complex(z).imag == 0.0:
        raise ValueError("z must be nonreal")
    g = g_E(bundle.grid, E_prime)
    out = resolvent_apply(bundle, tau, z, g)
    norm = math.sqrt(float(np.trapezoid(np.sum(np.abs(out) ** 2, axis=1), bundle.grid)))
    return 0.0, norm
