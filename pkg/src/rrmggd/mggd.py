"""Generalized Gaussian models: densities, ML estimation and an exact sampler.

The multivariate density is

    f(x) = Gamma(m/2) / (pi**(m/2) Gamma(m/(2b)) 2**(m/(2b))) * b / |S|**0.5
           * exp(-0.5 * (x' S^-1 x)**b)

with dispersion matrix ``S`` and shape ``b``; ``b = 1`` is the Gaussian.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular
from scipy.optimize import bisect
from scipy.special import digamma, gammaln

from .errors import (
    DegenerateData,
    DidNotConverge,
    InvalidParams,
    NoRootInBracket,
    SingularSigma,
)

log = logging.getLogger(__name__)

MIN_SAMPLES = 30
RIDGE_FACTOR = 1e-10
BETA_BRACKET = (0.1, 3.0)
WIDE_BETA_BRACKET = (0.05, 5.0)


@dataclass(frozen=True)
class GgdParams:
    """Univariate zero-mean GGD.

    Exactly one of ``alpha`` (density ``exp(-(|x|/alpha)**beta)``) or
    ``sigma`` (density ``exp(-0.5 * |x/sigma|**(2*beta))``, the m = 1 case of
    the multivariate form) must be set. The two are never converted.
    """

    beta: float
    alpha: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if (self.alpha is None) == (self.sigma is None):
            raise InvalidParams("set exactly one of alpha or sigma")
        scale = self.alpha if self.alpha is not None else self.sigma
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise InvalidParams(f"beta must be > 0, got {self.beta}")
        if not (np.isfinite(scale) and scale > 0):
            raise InvalidParams(f"scale must be > 0, got {scale}")


@dataclass(frozen=True, eq=False)
class MggdParams:
    sigma: np.ndarray
    beta: float

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=np.float64)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise InvalidParams(f"sigma must be square, got shape {sigma.shape}")
        if not np.all(np.isfinite(sigma)):
            raise InvalidParams("sigma has non-finite entries")
        if np.max(np.abs(sigma - sigma.T)) > 1e-12 * max(1.0, np.max(np.abs(sigma))):
            raise InvalidParams("sigma is not symmetric")
        if np.min(np.linalg.eigvalsh(sigma)) <= 0:
            raise InvalidParams("sigma is not positive definite")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise InvalidParams(f"beta must be > 0, got {self.beta}")
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)

    @property
    def m(self) -> int:
        return self.sigma.shape[0]


def ggd_pdf(x, p: GgdParams):
    if p.alpha is None:
        raise InvalidParams("ggd_pdf needs the (alpha, beta) parametrization")
    a, b = p.alpha, p.beta
    norm = b / (2.0 * a * np.exp(gammaln(1.0 / b)))
    return norm * np.exp(-((np.abs(x) / a) ** b))


def _chol(sigma):
    try:
        return cholesky(np.asarray(sigma, dtype=np.float64), lower=True)
    except LinAlgError:
        raise SingularSigma("matrix is not positive definite") from None


def mahalanobis(x, sigma):
    """``x' sigma^-1 x`` through a Cholesky solve.

    ``x`` may be a vector of length m or an ``m x n`` matrix of column
    vectors (returns n values).
    """
    L = _chol(sigma)
    x = np.asarray(x, dtype=np.float64)
    y = solve_triangular(L, x, lower=True, check_finite=False)
    return np.sum(y * y, axis=0)


def _log_normalizer(m, beta, log_det):
    return (
        gammaln(m / 2.0)
        - (m / 2.0) * np.log(np.pi)
        - gammaln(m / (2.0 * beta))
        - (m / (2.0 * beta)) * np.log(2.0)
        + np.log(beta)
        - 0.5 * log_det
    )


def mggd_log_pdf(x, p: MggdParams):
    """Log-density at a vector, or at each column of an ``m x n`` array."""
    L = _chol(p.sigma)
    log_det = 2.0 * np.sum(np.log(np.diag(L)))
    u = mahalanobis(x, p.sigma)
    return _log_normalizer(p.m, p.beta, log_det) - 0.5 * u**p.beta


def sample_mggd(p: MggdParams, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` columns from the MGGD.

    Uses ``x = L r d`` with ``d`` uniform on the unit sphere, ``L`` the
    Cholesky factor of sigma and ``r = G**(1/(2 beta))``,
    ``G ~ Gamma(m/(2 beta), scale=2)``. The whole stream comes from one
    generator so results depend only on ``(seed, n, p)``.
    """
    if n < 1:
        raise InvalidParams("n must be >= 1")
    rng = np.random.default_rng(seed)
    m = p.m
    d = rng.standard_normal((m, n))
    d /= np.linalg.norm(d, axis=0)
    g = rng.gamma(m / (2.0 * p.beta), 2.0, size=n)
    r = g ** (1.0 / (2.0 * p.beta))
    return _chol(p.sigma) @ (d * r)


# --- estimation --------------------------------------------------------------


def second_moment(X) -> np.ndarray:
    """Symmetrized ``X X' / n``."""
    X = np.asarray(X, dtype=np.float64)
    S = (X @ X.T) / X.shape[1]
    return 0.5 * (S + S.T)


def ridge(S) -> np.ndarray:
    """Add ``eps * I`` with ``eps = 1e-10 * max(tr(S)/m, float eps)``."""
    m = S.shape[0]
    eps = RIDGE_FACTOR * max(np.trace(S) / m, np.finfo(np.float64).eps)
    return S + eps * np.eye(m)


def ridge_second_moment(X) -> np.ndarray:
    """Regularized sample second moment, the ML dispersion at beta = 1.

    Never fails on rank-deficient or all-zero data.
    """
    return ridge(second_moment(X))


def _check_data(X, beta):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DegenerateData("data must be an m x n matrix")
    if not np.all(np.isfinite(X)):
        raise DegenerateData("data contain non-finite values")
    if X.shape[1] < MIN_SAMPLES:
        raise DegenerateData(f"need at least {MIN_SAMPLES} samples, got {X.shape[1]}")
    if np.all(X == X[:, :1]):
        raise DegenerateData("all samples are identical")
    if beta != 1.0:
        ev = np.linalg.eigvalsh(second_moment(X))
        if ev[0] <= 1e-12 * ev[-1]:
            raise DegenerateData("data are confined to a subspace; shape ML is ill-posed")
    return X


def _rel_change(new, old):
    return np.linalg.norm(new - old) / np.linalg.norm(old)


def _fixed_point_step(X, beta, sigma):
    n, m = X.shape[1], X.shape[0]
    u = mahalanobis(X, sigma)
    nxt = (beta / n) * ((X * u ** (beta - 1.0)) @ X.T)
    nxt = 0.5 * (nxt + nxt.T)
    # rescale to the exact ML scale for this shape; the fixed point is unchanged
    u_nxt = mahalanobis(X, nxt)
    scale = (beta / (n * m) * np.sum(u_nxt**beta)) ** (1.0 / beta)
    return scale * nxt


def estimate_sigma_fixed_point(
    X, beta: float, sigma0=None, tol: float = 1e-8, max_iter: int = 200
) -> np.ndarray:
    """ML dispersion for a known shape via ``S <- (b/n) sum u_i**(b-1) x_i x_i'``.

    Each step is followed by the closed-form optimal rescaling for the new
    shape, which leaves the fixed point unchanged but removes the slow
    oscillation of the overall scale for ``beta`` far from 1.
    """
    if not beta > 0:
        raise InvalidParams(f"beta must be > 0, got {beta}")
    X = _check_data(X, beta)
    S0 = ridge_second_moment(X)
    if beta == 1.0:
        return S0
    sigma = S0 if sigma0 is None else np.asarray(sigma0, dtype=np.float64)
    for _ in range(max_iter):
        nxt = _fixed_point_step(X, beta, sigma)
        change = _rel_change(nxt, sigma)
        sigma = nxt
        if change < tol:
            return sigma
    raise DidNotConverge(f"dispersion recursion did not reach {tol:g} in {max_iter} steps")


def beta_equation(X, sigma, beta, profile_scale=False):
    """Left-hand side of the ML shape equation, summed over samples.

    With ``profile_scale`` the overall scale of ``sigma`` is replaced by its
    ML value for the trial ``beta`` (only the shape of ``sigma`` is used).
    """
    m, n = X.shape
    u = mahalanobis(X, sigma)
    if profile_scale:
        u = u / (beta / (n * m) * np.sum(u**beta)) ** (1.0 / beta)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(u > 0, 0.5 * beta * np.log(u) * u**beta, 0.0)
    k = m / (2.0 * beta)
    return np.sum(term) - n * (k * (np.log(2.0) + digamma(k)) + 1.0)


def estimate_beta(X, sigma, bracket=BETA_BRACKET, profile_scale=False, xtol=1e-6):
    """Bisection root of the shape equation within ``bracket``."""
    X = np.asarray(X, dtype=np.float64)
    lo, hi = bracket
    if not (0.05 <= lo < hi <= 5.0):
        raise InvalidParams(f"bracket must lie within [0.05, 5], got {bracket}")

    def f(b):
        return beta_equation(X, sigma, b, profile_scale)

    f_lo, f_hi = f(lo), f(hi)
    if not (np.isfinite(f_lo) and np.isfinite(f_hi)) or np.sign(f_lo) == np.sign(f_hi):
        raise NoRootInBracket(f"shape equation has no sign change on [{lo}, {hi}]")
    return bisect(f, lo, hi, xtol=xtol)


def estimate_ml(X, beta: float | None = None, tol: float = 1e-6, max_iter: int = 50) -> MggdParams:
    """Joint ML estimate of ``(sigma, beta)``, or of sigma alone if ``beta`` is pinned.

    Alternates the dispersion fixed point and the shape equation. The shape
    step profiles the overall scale so the two coordinates do not fight
    over it; without that the alternation creeps for hundreds of rounds.
    """
    X = np.asarray(X, dtype=np.float64)
    if beta is not None:
        return MggdParams(estimate_sigma_fixed_point(X, beta), float(beta))

    X = _check_data(X, 0.0)
    b = 1.0
    sigma = estimate_sigma_fixed_point(X, b)
    for _ in range(max_iter):
        try:
            b_new = estimate_beta(X, sigma, BETA_BRACKET, profile_scale=True, xtol=1e-8)
        except NoRootInBracket:
            log.warning("no shape root in %s, widening to %s", BETA_BRACKET, WIDE_BETA_BRACKET)
            b_new = estimate_beta(X, sigma, WIDE_BETA_BRACKET, profile_scale=True, xtol=1e-8)
        sigma_new = estimate_sigma_fixed_point(X, b_new, sigma0=sigma)
        change = max(_rel_change(sigma_new, sigma), abs(b_new - b) / b)
        sigma, b = sigma_new, b_new
        if change < tol:
            return MggdParams(0.5 * (sigma + sigma.T), b)
    raise DidNotConverge(f"joint estimate did not settle to {tol:g} in {max_iter} rounds")
