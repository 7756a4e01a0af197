import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cstau.noise import BrownianBundle, sample_bundle
from cstau.sde import (
    integrate_phase,
    integrate_phase_family,
    integrate_vector,
    phase_derivative,
    phase_endpoint,
    prufer,
)

seeds = st.integers(0, 2**32)
lams = st.floats(-50, 50, allow_nan=False)


def _normalized(w, grid):
    return w / np.sqrt(np.trapezoid(np.sum(np.abs(w) ** 2, axis=1), grid))


def _prufer_gap(bundle, tau, lam):
    p = integrate_phase(bundle, tau, lam)
    v = integrate_vector(bundle, tau, lam)
    w = np.exp(p.rho)[:, None] * np.column_stack((np.sin(p.theta), np.cos(p.theta)))
    return np.max(np.abs(_normalized(w, p.grid) - _normalized(v.y, p.grid)))


# ---------------------------------------------------------------- phase


@given(lams, st.integers(1, 500))
def test_zero_noise_phase_is_exact(lam, n):
    p = integrate_phase(sample_bundle(1, n), 0.0, lam)
    assert np.array_equal(p.theta, 0.5 * lam * p.grid)
    assert np.all(p.rho == 0.0)


def test_phase_starts_at_zero():
    p = integrate_phase(sample_bundle(2, 100), 1.0, 3.0)
    assert p.theta[0] == 0.0 and p.rho[0] == 0.0


def test_negative_tau_rejected():
    b = sample_bundle(0, 10)
    for fn in (integrate_phase, integrate_vector, phase_endpoint):
        with pytest.raises(ValueError):
            fn(b, -0.1, 1.0)


def test_endpoint_kernel_matches_full_path():
    b = sample_bundle(3, 5000)
    p = integrate_phase(b, 1.3, 4.0)
    th, rho, d = phase_endpoint(b, 1.3, 4.0)
    assert th == pytest.approx(p.theta[-1], abs=1e-12)
    assert rho == pytest.approx(p.rho[-1], abs=1e-10)
    assert d == pytest.approx(phase_derivative(p), rel=1e-10)


def test_family_at_zero_noise():
    fam = integrate_phase_family(BrownianBundle.zeros(100), 0.0, [0.0, 2 * np.pi])
    assert [f.theta_end for f in fam] == pytest.approx([0.0, np.pi], abs=1e-14)


def test_family_rejects_unsorted():
    with pytest.raises(ValueError):
        integrate_phase_family(sample_bundle(0, 10), 1.0, [1.0, 0.5])


@given(seeds, st.lists(st.integers(-30_000, 30_000), min_size=2, max_size=6, unique=True))
def test_endpoint_phase_increases_with_lambda(seed, values):
    b = sample_bundle(seed, 2000)
    fam = integrate_phase_family(b, 1.0, np.sort(values) * 1e-3)
    ends = [f.theta_end for f in fam]
    assert np.all(np.diff(ends) > 0)


def test_gaussian_marginal_small_ensemble():
    ends = np.array([phase_endpoint(sample_bundle(s, 1000), 1.0, 2.0)[0] for s in range(4000)])
    se = ends.std(ddof=1) / np.sqrt(ends.size)
    assert abs(ends.mean() - 1.0) < 3 * se
    assert abs(ends.var(ddof=1) - 0.375) < 0.375 * 0.08


def test_refinement_shrinks_endpoint_differences():
    # strong order 1/2: successive differences shrink by about 1/sqrt(2) on average
    gaps = []
    for s in range(200):
        b = sample_bundle(s, 4000)
        th = [phase_endpoint(b.coarsen(f), 1.0, 0.0)[0] for f in (4, 2, 1)]
        gaps.append((abs(th[0] - th[1]), abs(th[1] - th[2])))
    gaps = np.array(gaps)
    ratio = gaps[:, 1].mean() / gaps[:, 0].mean()
    assert 0.55 < ratio < 0.85


# ---------------------------------------------------------------- derivative


def test_derivative_zero_noise_is_half():
    assert phase_derivative(integrate_phase(BrownianBundle.zeros(50), 0.0, 3.0)) == 0.5


@given(seeds, lams)
def test_derivative_positive(seed, lam):
    assert phase_derivative(integrate_phase(sample_bundle(seed, 500), 2.0, lam)) > 0


@pytest.mark.parametrize("lam", [0.0, 1e-4])
def test_derivative_matches_finite_difference(lam):
    b = sample_bundle(4, 10_000)
    h = 1e-4
    fd = (phase_endpoint(b, 1.0, lam + h)[0] - phase_endpoint(b, 1.0, lam - h)[0]) / (2 * h)
    q = phase_derivative(integrate_phase(b, 1.0, lam))
    assert abs(q - fd) / fd < 1e-3


# ---------------------------------------------------------------- vector equation


@given(st.floats(-40, 40))
def test_zero_noise_vector_is_rotation(lam):
    b = BrownianBundle.zeros(1000)
    v = integrate_vector(b, 0.0, lam)
    t = b.grid
    assert np.allclose(v.y, np.column_stack((np.sin(lam * t / 2), np.cos(lam * t / 2))), atol=1e-12)
    assert np.allclose(v.v, np.column_stack((np.cos(lam * t / 2), -np.sin(lam * t / 2))), atol=1e-12)


def test_zero_noise_zero_z_constant():
    v = integrate_vector(BrownianBundle.zeros(20), 0.0, 0.0)
    assert np.all(v.y == [0.0, 1.0]) and np.all(v.v == [1.0, 0.0])


@given(seeds, st.complex_numbers(max_magnitude=20, allow_nan=False, allow_infinity=False))
def test_initial_conditions_and_wronskian(seed, z):
    v = integrate_vector(sample_bundle(seed, 50), 1.0, z)
    assert np.array_equal(v.y[0], [0, 1]) and np.array_equal(v.v[0], [1, 0])
    assert v.wronskian[0] == 1.0


def test_real_z_stays_real_and_complex_z_complex():
    b = sample_bundle(0, 10)
    assert integrate_vector(b, 1.0, 2.0).y.dtype == np.float64
    assert integrate_vector(b, 1.0, 1j).y.dtype == np.complex128


def test_wronskian_drift_shrinks_under_refinement():
    # each step multiplies the Wronskian by 1 + det(dV); the drift is a
    # martingale of size O(sqrt(dt)), so halving dt scales it by 1/sqrt(2)
    drift = []
    for s in range(300):
        b = sample_bundle(s, 2000)
        drift.append([np.abs(integrate_vector(b.coarsen(f), 1.0, 1j).wronskian - 1).max() for f in (2, 1)])
    drift = np.array(drift)
    ratio = drift[:, 1].mean() / drift[:, 0].mean()
    assert 0.6 < ratio < 0.85


def test_prufer_coordinates_of_vector_solution():
    b = sample_bundle(6, 10_000)
    p = integrate_phase(b, 1.0, 2.0)
    theta, logr = prufer(integrate_vector(b, 1.0, 2.0).y)
    assert np.max(np.abs(theta - p.theta)) < 0.02
    assert np.max(np.abs(logr - p.rho)) < 0.02


def test_prufer_consistency_improves_on_average():
    gaps = []
    for s in range(100):
        fine = sample_bundle(s, 2000)
        gaps.append([_prufer_gap(fine.coarsen(f), 1.0, 2.0) for f in (2, 1)])
    gaps = np.array(gaps)
    assert gaps[:, 1].mean() < 0.85 * gaps[:, 0].mean()
