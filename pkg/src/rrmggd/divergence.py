"""Closed-form Kullback-Leibler divergences between zero-mean GG models.

All functions compute ``KLD(p1 || p2) = E_p1[log p1 - log p2]``: the first
argument is the distribution the expectation is taken under.

The bivariate closed form takes ``gamma_1, gamma_2`` as the eigenvalues of
``S2^-1 S1``. Writing the quadratic form of ``p2`` under draws of ``p1`` in
polar coordinates gives ``((g1 + g2) / 2) * (1 + A cos 2phi)`` with exactly
those eigenvalues, and the Gaussian case then reduces to the usual
``0.5 * (ln|S2|/|S1| + tr(S2^-1 S1) - 2)``. Inverting the eigenvalues (the
reciprocals of the eigenvalues of ``S2^-1 S1``) leaves ``A**2`` unchanged
but breaks that reduction.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from .errors import (
    DimensionMismatch,
    HypergeometricDomain,
    InvalidC,
    InvalidParams,
    NoConvergence,
)
from .mggd import GgdParams, MggdParams, _chol, mggd_log_pdf, sample_mggd

MAX_TERMS = 10_000


def gauss_2f1(a: float, b: float, c: float, z: float) -> float:
    """Gauss hypergeometric series ``2F1(a, b; c; z)`` for ``|z| < 1``.

    Negative arguments go through the Pfaff transformation
    ``(1 - z)**-a 2F1(a, c - b; c; z / (z - 1))``, whose argument lies in
    ``(0, 1/2)``.
    """
    if c <= 0 and float(c).is_integer():
        raise InvalidC(f"c = {c} is a non-positive integer")
    if not abs(z) < 1:
        raise HypergeometricDomain(f"|z| must be < 1, got {z}")
    if z < 0:
        return (1.0 - z) ** (-a) * gauss_2f1(a, c - b, c, z / (z - 1.0))
    total = 1.0
    term = 1.0
    for k in range(MAX_TERMS):
        term *= (a + k) * (b + k) / ((c + k) * (k + 1)) * z
        total += term
        if term == 0.0 or abs(term) < 1e-15 * abs(total):
            return total
    raise NoConvergence(f"2F1({a}, {b}; {c}; {z}) needs more than {MAX_TERMS} terms")


def kld_ggd_univariate(p1: GgdParams, p2: GgdParams) -> float:
    """KLD between univariate GGDs in the ``(sigma, beta)`` parametrization."""
    if p1.sigma is None or p2.sigma is None:
        raise InvalidParams("kld_ggd_univariate needs the (sigma, beta) parametrization")
    if p1 == p2:
        return 0.0
    b1, s1 = p1.beta, p1.sigma
    b2, s2 = p2.beta, p2.sigma
    log_ratio = (
        math.log(b1 / b2)
        + (1.0 / (2 * b2) - 1.0 / (2 * b1)) * math.log(2.0)
        + math.log(s2 / s1)
        + gammaln(1.0 / (2 * b2))
        - gammaln(1.0 / (2 * b1))
    )
    # (2**(1/(2 b1)) s1 / (2**(1/(2 b2)) s2))**(2 b2) in log space
    log_base = (1.0 / (2 * b1) - 1.0 / (2 * b2)) * math.log(2.0) + math.log(s1 / s2)
    cross = math.exp(
        2 * b2 * log_base + gammaln((2 * b2 + 1) / (2 * b1)) - gammaln(1.0 / (2 * b1))
    )
    return max(log_ratio + cross - 1.0 / (2 * b1), 0.0)


def _as_spd_pair(sigma1, sigma2):
    s1 = np.asarray(sigma1, dtype=np.float64)
    s2 = np.asarray(sigma2, dtype=np.float64)
    if s1.ndim != 2 or s1.shape[0] != s1.shape[1] or s1.shape != s2.shape:
        raise DimensionMismatch(f"incompatible shapes {s1.shape} and {s2.shape}")
    return s1, s2


def kld_gaussian_multivariate(sigma1, sigma2) -> float:
    """``0.5 * (ln|S2|/|S1| + tr(S2^-1 S1) - m)`` via Cholesky factors."""
    s1, s2 = _as_spd_pair(sigma1, sigma2)
    if np.array_equal(s1, s2):
        _chol(s1)
        return 0.0
    L1, L2 = _chol(s1), _chol(s2)
    log_det_ratio = 2.0 * (np.sum(np.log(np.diag(L2))) - np.sum(np.log(np.diag(L1))))
    M = solve_triangular(L2, L1, lower=True)
    trace = np.sum(M * M)
    return max(0.5 * (log_det_ratio + trace - s1.shape[0]), 0.0)


def _relative_eigenvalues(s1, s2):
    """Eigenvalues of ``S2^-1 S1`` from the symmetric ``L2^-1 S1 L2^-T``."""
    L2 = _chol(s2)
    _chol(s1)
    half = solve_triangular(L2, s1, lower=True)
    sym = solve_triangular(L2, half.T, lower=True)
    return np.linalg.eigvalsh(0.5 * (sym + sym.T)), L2


def _kld_bivariate(p1: MggdParams, p2: MggdParams, invert_eigenvalues: bool) -> float:
    if p1.m != 2 or p2.m != 2:
        raise DimensionMismatch("bivariate closed form needs 2x2 dispersions")
    b1, b2 = p1.beta, p2.beta
    lam, _ = _relative_eigenvalues(p1.sigma, p2.sigma)
    g = 1.0 / lam if invert_eigenvalues else lam
    A = (g[0] - g[1]) / (g[0] + g[1])
    if not abs(A) < 1:
        raise HypergeometricDomain(f"|A| = {abs(A)} >= 1")
    log_det_ratio = np.linalg.slogdet(p2.sigma)[1] - np.linalg.slogdet(p1.sigma)[1]
    first = (
        gammaln(1.0 / b2)
        - gammaln(1.0 / b1)
        + (1.0 / b2 - 1.0 / b1) * math.log(2.0)
        + 0.5 * log_det_ratio
    )
    second = math.log(b1 / b2) - 1.0 / b1
    third = (
        math.exp(
            (b2 / b1 - 1.0) * math.log(2.0)
            + gammaln((b2 + 1.0) / b1)
            - gammaln(1.0 / b1)
            + b2 * math.log(0.5 * (g[0] + g[1]))
        )
        * gauss_2f1((1.0 - b2) / 2.0, -b2 / 2.0, 1.0, A * A)
    )
    return first + second + third


def kld_bivariate_ggd(p1: MggdParams, p2: MggdParams) -> float:
    """KLD between two zero-mean bivariate MGGDs (closed form via 2F1)."""
    if p1.m != 2 or p2.m != 2:
        raise DimensionMismatch("bivariate closed form needs 2x2 dispersions")
    if p1.beta == p2.beta and np.array_equal(p1.sigma, p2.sigma):
        return 0.0
    return max(_kld_bivariate(p1, p2, invert_eigenvalues=False), 0.0)


def kld_bivariate_ggd_as_printed(p1: MggdParams, p2: MggdParams) -> float:
    """Variant using reciprocal eigenvalues of ``S2^-1 S1``.

    Kept only to demonstrate that this reading disagrees with the Gaussian
    divergence at ``beta = 1``; not used by the metric.
    """
    return _kld_bivariate(p1, p2, invert_eigenvalues=True)


class MonteCarloEstimate(NamedTuple):
    estimate: float
    stderr: float
    overflow: bool = False


def kld_monte_carlo(logp1, logp2, sampler1, n: int, seed: int) -> MonteCarloEstimate:
    """Sample mean of ``logp1(x) - logp2(x)`` over ``n`` draws of ``sampler1``.

    ``sampler1(n, seed)`` must return draws as columns; ``logp1``/``logp2``
    map that array to per-column log-densities.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    x = sampler1(n, seed)
    with np.errstate(over="ignore", invalid="ignore"):
        diff = np.asarray(logp1(x), dtype=np.float64) - np.asarray(logp2(x), dtype=np.float64)
    if not np.all(np.isfinite(diff)):
        return MonteCarloEstimate(math.inf, math.inf, True)
    return MonteCarloEstimate(float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(n)))


def mggd_pair_monte_carlo(p1: MggdParams, p2: MggdParams, n: int, seed: int) -> MonteCarloEstimate:
    """Monte-Carlo KLD between two MGGDs using the exact sampler for ``p1``."""
    return kld_monte_carlo(
        lambda x: mggd_log_pdf(x, p1),
        lambda x: mggd_log_pdf(x, p2),
        lambda k, s: sample_mggd(p1, k, s),
        n,
        seed,
    )
