import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from conftest import random_spd
from rrmggd.errors import DegenerateData, DidNotConverge, InvalidParams, NoRootInBracket, SingularSigma
from rrmggd.mggd import (
    GgdParams,
    MggdParams,
    _fixed_point_step,
    estimate_beta,
    estimate_ml,
    estimate_sigma_fixed_point,
    ggd_pdf,
    mahalanobis,
    mggd_log_pdf,
    ridge,
    sample_mggd,
    second_moment,
)


# --- parameters and densities ----------------------------------------------------


def test_ggd_params_need_exactly_one_scale():
    with pytest.raises(InvalidParams):
        GgdParams(1.0)
    with pytest.raises(InvalidParams):
        GgdParams(1.0, alpha=1.0, sigma=1.0)
    with pytest.raises(InvalidParams):
        GgdParams(-1.0, alpha=1.0)


def test_mggd_params_validation():
    with pytest.raises(InvalidParams):
        MggdParams(np.array([[1.0, 0.5], [0.4, 1.0]]), 1.0)
    with pytest.raises(InvalidParams):
        MggdParams(np.diag([1.0, -1.0]), 1.0)
    with pytest.raises(InvalidParams):
        MggdParams(np.eye(2), 0.0)


def test_ggd_pdf_peaks():
    assert ggd_pdf(0.0, GgdParams(1.0, alpha=1.0)) == pytest.approx(0.5, abs=1e-15)
    assert ggd_pdf(0.0, GgdParams(2.0, alpha=np.sqrt(2))) == pytest.approx(
        1 / np.sqrt(2 * np.pi), abs=1e-15
    )


def test_ggd_pdf_integrates_to_one():
    p = GgdParams(0.8, alpha=1.0)
    total, _ = integrate.quad(lambda x: ggd_pdf(x, p), -50, 50, points=[0.0], limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_ggd_pdf_needs_alpha():
    with pytest.raises(InvalidParams):
        ggd_pdf(0.0, GgdParams(1.0, sigma=1.0))


def test_gaussian_case_matches_scipy():
    p = MggdParams(np.eye(3), 1.0)
    assert mggd_log_pdf(np.zeros(3), p) == pytest.approx(-1.5 * np.log(2 * np.pi), abs=1e-14)
    x = np.random.default_rng(0).standard_normal((3, 100)) * 2
    ref = stats.multivariate_normal(np.zeros(3), np.eye(3)).logpdf(x.T)
    np.testing.assert_allclose(mggd_log_pdf(x, p), ref, rtol=1e-12)


def test_gaussian_case_general_sigma():
    rng = np.random.default_rng(1)
    S = random_spd(rng)
    x = rng.standard_normal((3, 50))
    ref = stats.multivariate_normal(np.zeros(3), S).logpdf(x.T)
    np.testing.assert_allclose(mggd_log_pdf(x, MggdParams(S, 1.0)), ref, rtol=1e-11)


def _grid_mass(p, half=8.0, k=161):
    g = np.linspace(-half, half, k)
    h = g[1] - g[0]
    b, c = np.meshgrid(g, g, indexing="ij")
    total = 0.0
    for a in g:
        pts = np.stack([np.full(b.size, a), b.ravel(), c.ravel()])
        total += np.sum(np.exp(mggd_log_pdf(pts, p)))
    return total * h**3


def test_density_box_mass_matches_sampler():
    # at beta = 0.7 about 0.3% of the mass lies outside [-8, 8]^3, so the
    # box integral is compared with the sampled box probability instead of 1
    p = MggdParams(np.diag([1.0, 0.5, 2.0]), 0.7)
    x = sample_mggd(p, 10**6, seed=1)
    inside = np.mean(np.all(np.abs(x) < 8, axis=0))
    assert _grid_mass(p) == pytest.approx(inside, abs=1e-3)


def test_density_integrates_to_one_diag():
    p = MggdParams(np.diag([1.0, 0.5, 2.0]), 0.7)
    assert _grid_mass(p, half=16.0, k=241) == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("beta", [0.5, 1.0, 1.5])
def test_density_integrates_to_one_random(beta):
    # low shapes have heavy tails; keep the dispersion small so [-8, 8]^3 holds the mass
    S = random_spd(np.random.default_rng(int(beta * 10)), low=0.2, high=1.0)
    scale = 0.3 if beta == 0.5 else 1.0
    assert _grid_mass(MggdParams(S * scale, beta)) == pytest.approx(1.0, abs=1e-3)


def test_log_pdf_symmetry():
    rng = np.random.default_rng(2)
    p = MggdParams(random_spd(rng), 0.6)
    x = rng.standard_normal((3, 20))
    np.testing.assert_array_equal(mggd_log_pdf(x, p), mggd_log_pdf(-x, p))


def test_mahalanobis_examples():
    assert mahalanobis(np.zeros(3), np.eye(3)) == 0.0
    assert mahalanobis(np.array([1.0, 2.0, 2.0]), np.eye(3)) == pytest.approx(9.0, abs=1e-14)
    assert mahalanobis(np.array([2.0, 0.0, 0.0]), np.diag([4.0, 1.0, 1.0])) == pytest.approx(1.0)


def test_mahalanobis_matches_inverse():
    rng = np.random.default_rng(3)
    S = random_spd(rng)
    x = rng.standard_normal((3, 10))
    ref = np.einsum("in,ij,jn->n", x, np.linalg.inv(S), x)
    np.testing.assert_allclose(mahalanobis(x, S), ref, rtol=1e-12)


def test_mahalanobis_singular():
    with pytest.raises(SingularSigma):
        mahalanobis(np.ones(3), np.zeros((3, 3)))


# --- sampler ------------------------------------------------------------------------


def test_sampler_gaussian_moments():
    x = sample_mggd(MggdParams(np.eye(3), 1.0), 10**6, seed=11)
    assert np.linalg.norm(second_moment(x) - np.eye(3)) < 0.01
    kurt = stats.kurtosis(x, axis=1, fisher=False)
    assert np.all(np.abs(kurt - 3.0) < 0.1)


def test_sampler_deterministic():
    p = MggdParams(np.eye(3), 0.7)
    assert sample_mggd(p, 100, 5).tobytes() == sample_mggd(p, 100, 5).tobytes()
    assert sample_mggd(p, 100, 5).tobytes() != sample_mggd(p, 100, 6).tobytes()


@pytest.mark.parametrize("beta", [0.4, 0.8, 1.7])
def test_sampler_mean_and_covariance(beta):
    # E[x x'] = 2**(1/b) Gamma((m+2)/(2b)) / (m Gamma(m/(2b))) * Sigma
    from scipy.special import gammaln

    rng = np.random.default_rng(int(beta * 100))
    S = random_spd(rng)
    n = 4 * 10**5
    x = sample_mggd(MggdParams(S, beta), n, seed=1)
    assert np.all(np.abs(x.mean(axis=1)) < 3 * np.sqrt(np.trace(S) * 30 / n))
    c = np.exp(np.log(2) / beta + gammaln(5 / (2 * beta)) - gammaln(3 / (2 * beta))) / 3
    rel = np.linalg.norm(second_moment(x) - c * S) / np.linalg.norm(c * S)
    assert rel < 0.05


def test_sampler_matches_density_on_boxes():
    # empirical box frequencies against the density integrated over the box
    p = MggdParams(np.array([[1.0, 0.3], [0.3, 0.5]]), 0.6)
    n = 4 * 10**5
    x = sample_mggd(p, n, seed=3)
    for lo in [(-0.5, -0.5), (0.2, -0.1), (-1.5, 0.5)]:
        hi = (lo[0] + 0.5, lo[1] + 0.5)
        prob, _ = integrate.dblquad(
            lambda b, a: np.exp(mggd_log_pdf(np.array([a, b]), p)), lo[0], hi[0], lo[1], hi[1]
        )
        inside = np.mean((x[0] > lo[0]) & (x[0] < hi[0]) & (x[1] > lo[1]) & (x[1] < hi[1]))
        se = np.sqrt(prob * (1 - prob) / n)
        assert abs(inside - prob) < 5 * se


# --- estimation ---------------------------------------------------------------------


def test_beta_one_is_second_moment():
    x = np.random.default_rng(4).standard_normal((3, 500))
    S = estimate_sigma_fixed_point(x, 1.0)
    np.testing.assert_allclose(S, ridge(x @ x.T / 500), rtol=1e-14)
    est = estimate_ml(x, beta=1.0)
    assert est.beta == 1.0
    np.testing.assert_array_equal(est.sigma, S)


def test_fixed_point_recovers_sigma_at_half():
    rng = np.random.default_rng(5)
    S = random_spd(rng, low=0.5, high=2.0)
    x = sample_mggd(MggdParams(S, 0.5), 10**5, seed=5)
    est = estimate_sigma_fixed_point(x, 0.5)
    assert np.linalg.norm(est - S) / np.linalg.norm(S) < 0.05


def test_fixed_point_stationarity():
    rng = np.random.default_rng(6)
    x = sample_mggd(MggdParams(random_spd(rng), 0.6), 20000, seed=6)
    est = estimate_sigma_fixed_point(x, 0.6, tol=1e-12, max_iter=2000)
    step = _fixed_point_step(x, 0.6, est)
    assert np.linalg.norm(step - est) / np.linalg.norm(est) < 1e-8

    # the plain recursion (without the rescale) is stationary there too
    u = mahalanobis(x, est)
    plain = (0.6 / x.shape[1]) * ((x * u ** (0.6 - 1)) @ x.T)
    assert np.linalg.norm(plain - est) / np.linalg.norm(est) < 1e-8


def test_equivariance_pinned_beta():
    rng = np.random.default_rng(7)
    x = sample_mggd(MggdParams(random_spd(rng), 0.8), 5000, seed=7)
    A = rng.standard_normal((3, 3)) + 2 * np.eye(3)
    s_x = estimate_sigma_fixed_point(x, 0.8, tol=1e-13, max_iter=5000)
    s_ax = estimate_sigma_fixed_point(A @ x, 0.8, tol=1e-13, max_iter=5000)
    ref = A @ s_x @ A.T
    assert np.linalg.norm(s_ax - ref) / np.linalg.norm(ref) < 1e-8


@pytest.mark.parametrize("beta, lo, hi", [(1.0, 0.95, 1.05), (0.5, 0.46, 0.54)])
def test_estimate_beta_identity(beta, lo, hi):
    x = sample_mggd(MggdParams(np.eye(3), beta), 10**5, seed=8)
    assert lo <= estimate_beta(x, np.eye(3)) <= hi


def test_estimate_beta_bad_bracket():
    x = sample_mggd(MggdParams(np.eye(3), 1.0), 1000, seed=9)
    with pytest.raises(InvalidParams):
        estimate_beta(x, np.eye(3), (0.01, 3.0))
    with pytest.raises(NoRootInBracket):
        estimate_beta(x, np.eye(3), (2.0, 3.0))


def test_estimate_ml_joint():
    rng = np.random.default_rng(10)
    S = random_spd(rng, low=0.5, high=2.0)
    est = estimate_ml(sample_mggd(MggdParams(S, 0.7), 10**5, seed=10))
    assert abs(est.beta - 0.7) < 0.07
    assert np.linalg.norm(est.sigma - S) / np.linalg.norm(S) < 0.05


def test_too_few_samples():
    x = np.random.default_rng(11).standard_normal((3, 10))
    with pytest.raises((DegenerateData, DidNotConverge)):
        estimate_ml(x)
    with pytest.raises(DegenerateData):
        estimate_ml(x, beta=1.0)


def test_identical_columns():
    x = np.tile([[1.0], [2.0], [3.0]], 100)
    with pytest.raises(DegenerateData):
        estimate_sigma_fixed_point(x, 1.0)
    with pytest.raises(DegenerateData):
        estimate_sigma_fixed_point(x, 0.5)


def test_rank_deficient_only_fails_off_gaussian():
    z = np.random.default_rng(12).standard_normal((1, 200))
    x = np.vstack([z, z, z])
    S = estimate_sigma_fixed_point(x, 1.0)
    np.linalg.cholesky(S)
    with pytest.raises(DegenerateData):
        estimate_sigma_fixed_point(x, 0.7)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 2.5), st.integers(0, 2**31))
def test_estimate_is_spd_and_symmetric(beta, seed):
    x = sample_mggd(MggdParams(np.diag([1.0, 2.0, 0.5]), beta), 400, seed)
    S = estimate_sigma_fixed_point(x, beta, max_iter=1000)
    assert np.array_equal(S, S.T)
    assert np.min(np.linalg.eigvalsh(S)) > 0
