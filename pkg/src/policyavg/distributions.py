"""Parametric demand families with maximum-likelihood fitting.

Five families back the estimate-then-optimize candidates: Normal,
Exponential, ChiSquare, StudentT, InverseGamma.  Normal/Exponential fits are
closed form; ChiSquare and InverseGamma solve their shape score equations by
damped Newton (moment initialization, fall back to moment estimates with a
warning on non-convergence); StudentT is fitted by Nelder-Mead over
(loc, scale, df) with df clamped to [1.5, 50], or over (loc, scale) when the
df is pinned by the caller.

All functions are pure; fitting across folds can run concurrently.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .optimizer import nelder_mead
from .special_math import (
    Tolerance,
    digamma,
    quantile_by_bisection,
    reg_incomplete_beta,
    reg_incomplete_gamma,
    std_normal_cdf,
    std_normal_inv_cdf,
    trigamma,
)

__all__ = [
    "DistFamily",
    "NormalParams",
    "ExponentialParams",
    "ChiSquareParams",
    "StudentTParams",
    "InverseGammaParams",
    "mle_fit",
    "cdf",
    "quantile",
    "log_likelihood",
]

_NEWTON_MAX_ITER = 100


class DistFamily(enum.Enum):
    NORMAL = "normal"
    EXPONENTIAL = "exponential"
    CHI_SQUARE = "chi_square"
    STUDENT_T = "student_t"
    INVERSE_GAMMA = "inverse_gamma"


_POSITIVE_SUPPORT = {DistFamily.EXPONENTIAL, DistFamily.CHI_SQUARE, DistFamily.INVERSE_GAMMA}


@dataclass(frozen=True)
class NormalParams:
    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class ExponentialParams:
    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")


@dataclass(frozen=True)
class ChiSquareParams:
    k: float

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("degrees of freedom must be positive")


@dataclass(frozen=True)
class StudentTParams:
    loc: float
    scale: float
    df: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.df <= 0:
            raise ValueError("df must be positive")


@dataclass(frozen=True)
class InverseGammaParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("shape and scale must be positive")


def _check_samples(family: DistFamily, samples: np.ndarray) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise ValueError("need a vector of at least 3 samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    if family in _POSITIVE_SUPPORT and np.any(x <= 0):
        raise ValueError(f"{family.value} requires strictly positive samples")
    return x


def _fit_chi_square(x: np.ndarray) -> ChiSquareParams:
    # score: psi(k/2) = mean(ln x) - ln 2
    target = float(np.mean(np.log(x))) - math.log(2.0)
    k = max(float(np.mean(x)), 1e-6)
    ll_prev = _chi_square_ll(x, k)
    for _ in range(_NEWTON_MAX_ITER):
        g = digamma(k / 2.0) - target
        if abs(g) < 1e-12:
            return ChiSquareParams(k)
        step = -g / (0.5 * trigamma(k / 2.0))
        for _ in range(40):  # damping: halve until the likelihood improves
            k_new = k + step
            if k_new > 0:
                ll_new = _chi_square_ll(x, k_new)
                if ll_new >= ll_prev - 1e-12:
                    break
            step *= 0.5
        else:
            break
        k, ll_prev = k_new, ll_new
    if abs(digamma(k / 2.0) - target) < 1e-8:
        return ChiSquareParams(k)
    warnings.warn("chi-square shape fit did not converge; falling back to the moment estimate",
                  RuntimeWarning)
    return ChiSquareParams(max(float(np.mean(x)), 1e-6))


def _chi_square_ll(x: np.ndarray, k: float) -> float:
    h = k / 2.0
    return float(np.sum((h - 1.0) * np.log(x) - x / 2.0) - x.size * (h * math.log(2.0) + math.lgamma(h)))


def _fit_inverse_gamma(x: np.ndarray) -> InverseGammaParams:
    t = x.size
    mean_log = float(np.mean(np.log(x)))
    mean_inv = float(np.mean(1.0 / x))
    target = mean_log + math.log(mean_inv)  # ln(alpha) - psi(alpha) = target
    if target <= 0:
        raise ValueError("degenerate sample for inverse-gamma fitting")
    m, v = float(np.mean(x)), float(np.var(x))
    alpha = m * m / v + 2.0 if v > 0 else 10.0
    alpha = min(max(alpha, 0.1), 1e6)
    for _ in range(_NEWTON_MAX_ITER):
        g = math.log(alpha) - digamma(alpha) - target
        if abs(g) < 1e-12:
            break
        deriv = 1.0 / alpha - trigamma(alpha)
        step = -g / deriv
        alpha_new = alpha + step
        while alpha_new <= 0:
            step *= 0.5
            alpha_new = alpha + step
        alpha = alpha_new
    else:
        if abs(math.log(alpha) - digamma(alpha) - target) > 1e-8:
            warnings.warn("inverse-gamma shape fit did not converge; using moment estimate",
                          RuntimeWarning)
            alpha = m * m / v + 2.0
    beta = alpha * t / float(np.sum(1.0 / x))  # profiled scale
    return InverseGammaParams(alpha, beta)


def _student_t_nll(x: np.ndarray, loc: float, scale: float, df: float) -> float:
    z = (x - loc) / scale
    return float(-(x.size * (math.lgamma((df + 1.0) / 2.0) - math.lgamma(df / 2.0)
                  - 0.5 * math.log(df * math.pi) - math.log(scale))
                  - (df + 1.0) / 2.0 * np.sum(np.log1p(z * z / df))))


def _fit_student_t(x: np.ndarray, fixed_df: float | None) -> StudentTParams:
    m, sd = float(np.mean(x)), float(np.std(x))
    sd = max(sd, 1e-9 * max(1.0, abs(m)))
    if fixed_df is not None:
        df = min(max(float(fixed_df), 1.5), 50.0)
        scale0 = sd * math.sqrt((df - 2.0) / df) if df > 2.0 else sd

        def nll2(theta):
            loc, scale = theta
            if scale <= 0:
                return 1e300
            return _student_t_nll(x, loc, scale, df)

        res = nelder_mead(nll2, [m, scale0], Tolerance(abs_tol=1e-7, max_iter=300))
        return StudentTParams(res.x[0], max(res.x[1], 1e-12), df)

    df0 = 5.0
    scale0 = sd * math.sqrt((df0 - 2.0) / df0)

    def nll3(theta):
        loc, scale, df = theta
        if scale <= 0:
            return 1e300
        df = min(max(df, 1.5), 50.0)
        return _student_t_nll(x, loc, scale, df)

    res = nelder_mead(nll3, [m, scale0, df0], Tolerance(abs_tol=1e-7, max_iter=500))
    loc, scale, df = res.x
    return StudentTParams(loc, max(scale, 1e-12), min(max(df, 1.5), 50.0))


def mle_fit(family: DistFamily, samples, seed=None, *, student_df: float | None = None):
    """Maximum-likelihood parameters for the given family.

    ``student_df`` pins the StudentT degrees of freedom (None = estimate it);
    ignored for other families.  ``seed`` is accepted for interface symmetry;
    every fit here is deterministic.
    """
    x = _check_samples(family, samples)
    if family is DistFamily.NORMAL:
        mu = float(np.mean(x))
        sigma = float(np.std(x))
        return NormalParams(mu, max(sigma, 1e-9 * max(1.0, abs(mu))))
    if family is DistFamily.EXPONENTIAL:
        return ExponentialParams(1.0 / float(np.mean(x)))
    if family is DistFamily.CHI_SQUARE:
        return _fit_chi_square(x)
    if family is DistFamily.INVERSE_GAMMA:
        return _fit_inverse_gamma(x)
    if family is DistFamily.STUDENT_T:
        return _fit_student_t(x, student_df)
    raise ValueError(f"unknown family {family}")


def cdf(family: DistFamily, params, x: float) -> float:
    """Distribution function of the fitted family at x."""
    if family is DistFamily.NORMAL:
        return std_normal_cdf((x - params.mu) / params.sigma)
    if family is DistFamily.EXPONENTIAL:
        return 0.0 if x <= 0 else 1.0 - math.exp(-params.rate * x)
    if family is DistFamily.CHI_SQUARE:
        return 0.0 if x <= 0 else reg_incomplete_gamma(params.k / 2.0, x / 2.0)
    if family is DistFamily.STUDENT_T:
        z = (x - params.loc) / params.scale
        w = params.df / (params.df + z * z)
        tail = 0.5 * reg_incomplete_beta(params.df / 2.0, 0.5, w)
        return 1.0 - tail if z >= 0 else tail
    if family is DistFamily.INVERSE_GAMMA:
        return 0.0 if x <= 0 else 1.0 - reg_incomplete_gamma(params.alpha, params.beta / x)
    raise ValueError(f"unknown family {family}")


def quantile(family: DistFamily, params, p: float) -> float:
    """p-quantile of the fitted family; closed form where available."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly between 0 and 1")
    if family is DistFamily.NORMAL:
        return params.mu + params.sigma * std_normal_inv_cdf(p)
    if family is DistFamily.EXPONENTIAL:
        return -math.log1p(-p) / params.rate
    if family is DistFamily.CHI_SQUARE:
        hi = params.k + 10.0 * math.sqrt(2.0 * params.k) + 10.0
        return quantile_by_bisection(lambda q: cdf(family, params, q), p, (0.0, hi))
    if family is DistFamily.STUDENT_T:
        lo = params.loc - 10.0 * params.scale
        hi = params.loc + 10.0 * params.scale
        return quantile_by_bisection(lambda q: cdf(family, params, q), p, (lo, hi))
    if family is DistFamily.INVERSE_GAMMA:
        hi = params.beta / max(params.alpha - 1.0, 0.5) * 10.0 + 10.0
        return quantile_by_bisection(lambda q: cdf(family, params, q), p, (1e-12, hi))
    raise ValueError(f"unknown family {family}")


def log_likelihood(family: DistFamily, params, samples) -> float:
    """Sum of log densities; -inf if any sample falls outside the support."""
    x = np.asarray(samples, dtype=float)
    if family is DistFamily.NORMAL:
        z = (x - params.mu) / params.sigma
        return float(np.sum(-0.5 * z * z - math.log(params.sigma) - 0.5 * math.log(2 * math.pi)))
    if family is DistFamily.EXPONENTIAL:
        if np.any(x < 0):
            return -math.inf
        return float(np.sum(math.log(params.rate) - params.rate * x))
    if family is DistFamily.CHI_SQUARE:
        if np.any(x <= 0):
            return -math.inf
        h = params.k / 2.0
        return float(np.sum((h - 1.0) * np.log(x) - x / 2.0)
                     - x.size * (h * math.log(2.0) + math.lgamma(h)))
    if family is DistFamily.STUDENT_T:
        return -_student_t_nll(x, params.loc, params.scale, params.df)
    if family is DistFamily.INVERSE_GAMMA:
        if np.any(x <= 0):
            return -math.inf
        a, b = params.alpha, params.beta
        return float(np.sum(-(a + 1.0) * np.log(x) - b / x)
                     + x.size * (a * math.log(b) - math.lgamma(a)))
    raise ValueError(f"unknown family {family}")
