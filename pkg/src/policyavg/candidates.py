"""Candidate ordering policies behind one uniform fit/evaluate interface.

Each candidate kind is a small frozen spec; ``fit_candidate`` turns a spec
plus a training dataset into an immutable ``FittedPolicy`` whose ``evaluate``
is deterministic.  The weight-averaging layer treats all of these as black
boxes.

Conventions shared across the module:
  * empirical quantiles use the smallest minimizer of the empirical
    newsvendor cost, i.e. the ceil(t * ratio)-th order statistic;
  * model-based regression policies order m(x) + s * z_ratio with s the
    maximum-likelihood residual standard deviation;
  * fits never mutate their inputs, so cross-fold fitting can run
    concurrently.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import CostParams, Dataset
from .distributions import DistFamily, mle_fit, quantile as dist_quantile
from .optimizer import fit_pinball_linear, kmeans
from .special_math import std_normal_inv_cdf

__all__ = [
    "Saa",
    "EtoIid",
    "IeoIid",
    "EtoRegression",
    "EtoAutoregressive",
    "QuantileRegression",
    "Erm",
    "KernelOptimization",
    "ClusterSaa",
    "NeuralPinball",
    "RbfKernelRidge",
    "FittedPolicy",
    "fit_candidate",
    "evaluate_policy",
    "empirical_quantile",
    "poly_features",
]

REG_GRID = (1e-3, 1e-2, 1e-1)  # penalty weights tried when lam is left None


# ---------------------------------------------------------------------------
# candidate specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Saa:
    @property
    def label(self) -> str:
        return "saa"


@dataclass(frozen=True)
class EtoIid:
    family: DistFamily
    student_df: float | None = None

    @property
    def label(self) -> str:
        return f"eto_{self.family.value}"


@dataclass(frozen=True)
class IeoIid:
    family: DistFamily

    @property
    def label(self) -> str:
        return f"ieo_{self.family.value}"


@dataclass(frozen=True)
class EtoRegression:
    poly_order: int = 1

    def __post_init__(self):
        if self.poly_order < 0:
            raise ValueError("poly_order must be nonnegative")

    @property
    def label(self) -> str:
        return f"eto_reg{self.poly_order}"


@dataclass(frozen=True)
class EtoAutoregressive:
    trend: bool = False
    lag_feature: int = 6  # covariate column holding the one-step lagged demand

    @property
    def label(self) -> str:
        return "eto_ar_trend" if self.trend else "eto_ar"


@dataclass(frozen=True)
class QuantileRegression:
    poly_order: int = 1

    @property
    def label(self) -> str:
        return f"qr{self.poly_order}"


@dataclass(frozen=True)
class Erm:
    poly_order: int = 1
    reg: tuple | None = None  # None | ("l1"|"l2", lam) with lam None => grid pick

    @property
    def label(self) -> str:
        if self.reg is None:
            return f"erm{self.poly_order}"
        return f"erm{self.poly_order}_{self.reg[0]}"


@dataclass(frozen=True)
class KernelOptimization:
    bandwidth: float = 2.0

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")

    @property
    def label(self) -> str:
        return f"ko_b{self.bandwidth:g}"


@dataclass(frozen=True)
class ClusterSaa:
    n_clusters: int = 8

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ValueError("n_clusters must be positive")

    @property
    def label(self) -> str:
        return f"cluster_saa{self.n_clusters}"


@dataclass(frozen=True)
class NeuralPinball:
    hidden: tuple[int, ...] = (20, 10)
    epochs: int = 1000
    learning_rate: float = 0.01
    batch_size: int | None = 32
    loss: str = "pinball"  # "pinball" | "mse" (mse adds a quantile shift)

    def __post_init__(self):
        if self.loss not in ("pinball", "mse"):
            raise ValueError("loss must be 'pinball' or 'mse'")
        if self.epochs < 1 or self.learning_rate <= 0:
            raise ValueError("epochs and learning_rate must be positive")

    @property
    def label(self) -> str:
        return "neural"


@dataclass(frozen=True)
class RbfKernelRidge:
    penalty: float = 100.0
    length_scale: float | None = None  # None => median pairwise distance

    def __post_init__(self):
        if self.penalty <= 0:
            raise ValueError("penalty must be positive")
        if self.length_scale is not None and self.length_scale <= 0:
            raise ValueError("length_scale must be positive")

    @property
    def label(self) -> str:
        return "rbf_ridge"


CandidateSpec = (Saa | EtoIid | IeoIid | EtoRegression | EtoAutoregressive
                 | QuantileRegression | Erm | KernelOptimization | ClusterSaa
                 | NeuralPinball | RbfKernelRidge)


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def empirical_quantile(demands, ratio: float) -> float:
    """Smallest minimizer of the empirical newsvendor cost.

    Equals the ceil(t * ratio)-th order statistic; exact ties on the
    flat segment resolve to its left endpoint.
    """
    d = np.sort(np.asarray(demands, dtype=float))
    t = d.size
    if t == 0:
        raise ValueError("need at least one demand")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    k = int(math.ceil(t * ratio - 1e-9))
    k = min(max(k, 1), t)
    return float(d[k - 1])


def poly_features(x: np.ndarray, order: int) -> np.ndarray:
    """[1] + [x_k] + [x_k^j, j=2..order] feature matrix for covariate rows."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    blocks = [np.ones((x.shape[0], 1))]
    for j in range(1, order + 1):
        blocks.append(x ** j)
    return np.hstack(blocks)


def _empirical_cost_at(q: float, demands: np.ndarray, costs: CostParams) -> float:
    diff = q - demands
    return float(np.mean(costs.co * np.maximum(diff, 0) + costs.cu * np.maximum(-diff, 0)))


def _min_empirical_cost(demands: np.ndarray, costs: CostParams) -> float:
    """Exact smallest minimizer of the empirical cost over a constant order.

    Golden-section search bracketed by [min d, max d], then an exact snap to
    the best breakpoint touching the final bracket (the objective is convex
    piecewise linear with kinks at the data points, so this is exact).
    """
    d = np.sort(np.asarray(demands, dtype=float))
    lo, hi = float(d[0]), float(d[-1])
    if lo == hi:
        return lo
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c1 = b - invphi * (b - a)
    c2 = a + invphi * (b - a)
    f1 = _empirical_cost_at(c1, d, costs)
    f2 = _empirical_cost_at(c2, d, costs)
    for _ in range(200):
        if b - a <= 1e-10 * (hi - lo):
            break
        if f1 <= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - invphi * (b - a)
            f1 = _empirical_cost_at(c1, d, costs)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + invphi * (b - a)
            f2 = _empirical_cost_at(c2, d, costs)
    # snap: include one breakpoint left of the bracket to cover flat optima
    left = int(np.searchsorted(d, a, side="right"))
    start = max(left - 1, 0)
    stop = int(np.searchsorted(d, b, side="right"))
    cand = d[start:max(stop, start + 1)]
    values = [(_empirical_cost_at(float(q), d, costs), float(q)) for q in cand]
    best = min(v for v, _ in values)
    return min(q for v, q in values if v <= best + 1e-12)


# ---------------------------------------------------------------------------
# fitted policies
# ---------------------------------------------------------------------------

class FittedPolicy:
    """Evaluable ordering rule Q(x); immutable once constructed."""

    def __init__(self, label: str, covariate_dim: int):
        self.label = label
        self.covariate_dim = covariate_dim

    def evaluate(self, x, position=None) -> float:
        raise NotImplementedError

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.covariate_dim:
            raise ValueError(
                f"policy {self.label} expects {self.covariate_dim} covariates, got {x.size}")
        return x


class ConstantPolicy(FittedPolicy):
    def __init__(self, label, covariate_dim, value):
        super().__init__(label, covariate_dim)
        self.value = float(value)

    def evaluate(self, x, position=None) -> float:
        self._check(x)
        return self.value


class DistQuantilePolicy(ConstantPolicy):
    """Constant order at the critical-ratio quantile of a fitted family."""

    def __init__(self, label, covariate_dim, family, params, ratio):
        super().__init__(label, covariate_dim, dist_quantile(family, params, ratio))
        self.family = family
        self.params = params
        self.ratio = ratio


class LinearPolicy(FittedPolicy):
    """Q(x) = poly(x) . coef [+ sd * z]; covers regression-style candidates."""

    def __init__(self, label, covariate_dim, coef, poly_order, shift=0.0):
        super().__init__(label, covariate_dim)
        self.coef = np.asarray(coef, dtype=float)
        self.poly_order = poly_order
        self.shift = float(shift)

    def evaluate(self, x, position=None) -> float:
        x = self._check(x)
        feats = poly_features(x[None, :], self.poly_order)[0]
        return float(feats @ self.coef + self.shift)


class ArPolicy(FittedPolicy):
    """Lag-1 autoregression with optional linear trend, Gaussian residual."""

    def __init__(self, label, covariate_dim, intercept, trend_coef, lag_coef,
                 shift, lag_feature, fallback_position):
        super().__init__(label, covariate_dim)
        self.intercept = float(intercept)
        self.trend_coef = float(trend_coef)
        self.lag_coef = float(lag_coef)
        self.shift = float(shift)
        self.lag_feature = lag_feature
        self.fallback_position = fallback_position

    def evaluate(self, x, position=None) -> float:
        x = self._check(x)
        pos = self.fallback_position if position is None else position
        return (self.intercept + self.trend_coef * pos
                + self.lag_coef * x[self.lag_feature] + self.shift)


class KernelQuantilePolicy(FittedPolicy):
    """Kernel-weighted empirical quantile with Gaussian proximity weights."""

    def __init__(self, label, covariate_dim, x_train, d_train, bandwidth, ratio, fallback):
        super().__init__(label, covariate_dim)
        order = np.argsort(d_train, kind="stable")
        self.x_train = np.asarray(x_train, dtype=float)[order]
        self.d_sorted = np.asarray(d_train, dtype=float)[order]
        self.bandwidth = bandwidth
        self.ratio = ratio
        self.fallback = float(fallback)

    def evaluate(self, x, position=None) -> float:
        x = self._check(x)
        sq = np.sum((self.x_train - x[None, :]) ** 2, axis=1)
        w = np.exp(-sq / (2.0 * self.bandwidth ** 2))
        total = w.sum()
        if total <= 0.0 or not math.isfinite(total):
            warnings.warn("kernel mass vanished at the evaluation point; using the "
                          "unweighted empirical quantile", RuntimeWarning)
            return self.fallback
        cum = np.cumsum(w) / total
        idx = int(np.searchsorted(cum, self.ratio - 1e-12))
        return float(self.d_sorted[min(idx, self.d_sorted.size - 1)])


class ClusterSaaPolicy(FittedPolicy):
    def __init__(self, label, covariate_dim, centroids, values):
        super().__init__(label, covariate_dim)
        self.centroids = np.asarray(centroids, dtype=float)
        self.values = np.asarray(values, dtype=float)

    def evaluate(self, x, position=None) -> float:
        x = self._check(x)
        d2 = np.sum((self.centroids - x[None, :]) ** 2, axis=1)
        return float(self.values[int(np.argmin(d2))])


class NeuralPolicy(FittedPolicy):
    def __init__(self, label, covariate_dim, params, x_lo, x_range, d_lo, d_range, shift=0.0):
        super().__init__(label, covariate_dim)
        self.params = params
        self.x_lo, self.x_range = x_lo, x_range
        self.d_lo, self.d_range = d_lo, d_range
        self.shift = float(shift)

    def evaluate(self, x, position=None) -> float:
        x = self._check(x)
        xn = (x[None, :] - self.x_lo) / self.x_range
        out = _nn_forward(self.params, xn)[0][-1]
        return float(self.d_lo + out[0, 0] * self.d_range + self.shift)


class KernelRidgePolicy(FittedPolicy):
    def __init__(self, label, covariate_dim, x_train, dual_coef, length_scale, shift):
        super().__init__(label, covariate_dim)
        self.x_train = np.asarray(x_train, dtype=float)
        self.dual_coef = np.asarray(dual_coef, dtype=float)
        self.length_scale = length_scale
        self.shift = float(shift)

    def evaluate(self, x, position=None) -> float:
        x = self._check(x)
        sq = np.sum((self.x_train - x[None, :]) ** 2, axis=1)
        k = np.exp(-sq / (2.0 * self.length_scale ** 2))
        return float(k @ self.dual_coef + self.shift)


# ---------------------------------------------------------------------------
# neural internals (plain numpy, ReLU hidden layers, linear scalar output)
# ---------------------------------------------------------------------------

def _nn_init(rng: np.random.Generator, dims: list[int]):
    params = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        params.append((w, np.zeros(fan_out)))
    return params

def _nn_forward(params, X):
    activations = [X]
    pre = []
    a = X
    for i, (w, b) in enumerate(params):
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0) if i < len(params) - 1 else z
        activations.append(a)
    return activations, pre


def _nn_loss_grad(params, X, y, co, cu, loss="pinball"):
    """Mean loss and parameter gradients for a batch (y, outputs are scalars)."""
    n = X.shape[0]
    activations, pre = _nn_forward(params, X)
    out = activations[-1][:, 0]
    resid = out - y
    if loss == "pinball":
        value = float(np.mean(co * np.maximum(resid, 0) + cu * np.maximum(-resid, 0)))
        dout = np.where(resid > 0, co, -cu) / n
    else:
        value = float(np.mean(resid ** 2))
        dout = 2.0 * resid / n
    grads = []
    delta = dout[:, None]
    for i in range(len(params) - 1, -1, -1):
        w, _ = params[i]
        a_prev = activations[i]
        grads.append((a_prev.T @ delta, delta.sum(axis=0)))
        if i > 0:
            delta = (delta @ w.T) * (pre[i - 1] > 0)
    grads.reverse()
    return value, grads


def _nn_flatten(params) -> np.ndarray:
    return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in params])


def _nn_unflatten(vec: np.ndarray, dims: list[int]):
    params = []
    pos = 0
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = vec[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = vec[pos:pos + fan_out]
        pos += fan_out
        params.append((w, b))
    return params


def _train_neural(spec: NeuralPinball, X, y, ratio, seed):
    rng = np.random.default_rng(seed)
    dims = [X.shape[1]] + list(spec.hidden) + [1]
    params = _nn_init(rng, dims)
    co, cu = 1.0 - ratio, ratio
    n = X.shape[0]
    batch = n if spec.batch_size is None else min(spec.batch_size, n)
    for _ in range(spec.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch):
            idx = perm[start:start + batch]
            _, grads = _nn_loss_grad(params, X[idx], y[idx], co, cu, spec.loss)
            params = [(w - spec.learning_rate * gw, b - spec.learning_rate * gb)
                      for (w, b), (gw, gb) in zip(params, grads)]
    return params


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def _require_covariates(spec, train: Dataset):
    if train.covariate_dim == 0:
        raise ValueError(f"candidate {spec.label} needs covariates")


def _require_rows(spec, train: Dataset, needed: int):
    if train.t < needed:
        raise ValueError(f"candidate {spec.label} needs at least {needed} rows, got {train.t}")


def _fit_linear_gaussian(design, demands, ratio):
    """Least-squares mean plus the critical-ratio multiple of the MLE residual sd."""
    coef, *_ = np.linalg.lstsq(design, demands, rcond=None)
    resid = demands - design @ coef
    sd = float(np.sqrt(np.mean(resid ** 2)))
    return coef, sd * std_normal_inv_cdf(ratio)


def fit_candidate(spec: CandidateSpec, train: Dataset, costs: CostParams, seed=None) -> FittedPolicy:
    """Fit one candidate on the training rows.

    Positive-support violations inside distributional fits surface as
    errors, never as silent clamps.  ``seed`` drives initialization and
    shuffling for the stochastic candidates (clustering, neural).
    """
    ratio = costs.critical_ratio
    d = train.demands
    X = train.covariates
    dim = train.covariate_dim

    if isinstance(spec, Saa):
        return ConstantPolicy(spec.label, dim, empirical_quantile(d, ratio))

    if isinstance(spec, EtoIid):
        params = mle_fit(spec.family, d, seed, student_df=spec.student_df)
        return DistQuantilePolicy(spec.label, dim, spec.family, params, ratio)

    if isinstance(spec, IeoIid):
        # the induced order quantity sweeps every constant in [min d, max d]
        # for all supported families, so the parameter search reduces to the
        # exact 1-D minimization of the empirical cost
        return ConstantPolicy(spec.label, dim, _min_empirical_cost(d, costs))

    if isinstance(spec, EtoRegression):
        _require_covariates(spec, train)
        design = poly_features(X, spec.poly_order)
        _require_rows(spec, train, max(spec.poly_order + 2, design.shape[1] + 1))
        coef, shift = _fit_linear_gaussian(design, d, ratio)
        return LinearPolicy(spec.label, dim, coef, spec.poly_order, shift)

    if isinstance(spec, EtoAutoregressive):
        _require_covariates(spec, train)
        if spec.lag_feature >= dim:
            raise ValueError(f"lag_feature {spec.lag_feature} outside covariate dim {dim}")
        _require_rows(spec, train, 4 if spec.trend else 3)
        cols = [np.ones(train.t)]
        if spec.trend:
            cols.append(train.positions.astype(float))
        cols.append(X[:, spec.lag_feature])
        design = np.column_stack(cols)
        coef, shift = _fit_linear_gaussian(design, d, ratio)
        trend_coef = coef[1] if spec.trend else 0.0
        lag_coef = coef[-1]
        return ArPolicy(spec.label, dim, coef[0], trend_coef, lag_coef, shift,
                        spec.lag_feature, int(train.positions.max()) + 1)

    if isinstance(spec, QuantileRegression):
        _require_covariates(spec, train)
        design = poly_features(X, spec.poly_order)
        _require_rows(spec, train, max(spec.poly_order + 2, design.shape[1] + 1))
        coef = fit_pinball_linear(design, d, ratio, None)
        return LinearPolicy(spec.label, dim, coef, spec.poly_order)

    if isinstance(spec, Erm):
        _require_covariates(spec, train)
        design = poly_features(X, spec.poly_order)
        _require_rows(spec, train, max(spec.poly_order + 2, design.shape[1] + 1))
        reg = spec.reg
        if reg is not None and reg[1] is None:
            reg = (reg[0], _pick_penalty(reg[0], design, d, ratio))
        coef = fit_pinball_linear(design, d, ratio, reg)
        return LinearPolicy(spec.label, dim, coef, spec.poly_order)

    if isinstance(spec, KernelOptimization):
        _require_covariates(spec, train)
        fallback = empirical_quantile(d, ratio)
        return KernelQuantilePolicy(spec.label, dim, X, d, spec.bandwidth, ratio, fallback)

    if isinstance(spec, ClusterSaa):
        _require_covariates(spec, train)
        _require_rows(spec, train, spec.n_clusters)
        labels, centroids = kmeans(X, spec.n_clusters, seed)
        global_q = empirical_quantile(d, ratio)
        values = [empirical_quantile(d[labels == c], ratio) if np.any(labels == c) else global_q
                  for c in range(spec.n_clusters)]
        return ClusterSaaPolicy(spec.label, dim, centroids, values)

    if isinstance(spec, NeuralPinball):
        _require_covariates(spec, train)
        _require_rows(spec, train, 4)
        x_lo = X.min(axis=0)
        x_range = X.max(axis=0) - x_lo
        x_range = np.where(x_range > 0, x_range, 1.0)
        d_lo = float(d.min())
        d_range = float(d.max() - d_lo) or 1.0
        Xn = (X - x_lo) / x_range
        yn = (d - d_lo) / d_range
        params = _train_neural(spec, Xn, yn, ratio, seed)
        shift = 0.0
        if spec.loss == "mse":
            fitted = d_lo + _nn_forward(params, Xn)[0][-1][:, 0] * d_range
            shift = empirical_quantile(d - fitted, ratio)
        return NeuralPolicy(spec.label, dim, params, x_lo, x_range, d_lo, d_range, shift)

    if isinstance(spec, RbfKernelRidge):
        _require_covariates(spec, train)
        _require_rows(spec, train, 3)
        sq = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=2)
        ls = spec.length_scale
        if ls is None:
            off_diag = np.sqrt(sq[np.triu_indices(train.t, k=1)])
            positive = off_diag[off_diag > 0]
            ls = float(np.median(positive)) if positive.size else 1.0
        K = np.exp(-sq / (2.0 * ls * ls))
        dual = np.linalg.solve(K + np.eye(train.t) / spec.penalty, d)
        fitted = K @ dual
        shift = empirical_quantile(d - fitted, ratio)
        return KernelRidgePolicy(spec.label, dim, X, dual, ls, shift)

    raise TypeError(f"unknown candidate spec {spec!r}")


def _pick_penalty(kind: str, design, demands, ratio) -> float:
    """Penalty weight from REG_GRID by pinball loss on the last 20% of rows."""
    t = design.shape[0]
    cut = max(int(math.ceil(0.8 * t)), design.shape[1] + 1)
    cut = min(cut, t - 1)
    tr_X, va_X = design[:cut], design[cut:]
    tr_d, va_d = demands[:cut], demands[cut:]
    co, cu = 1.0 - ratio, ratio
    best_lam, best_loss = REG_GRID[0], math.inf
    for lam in REG_GRID:
        coef = fit_pinball_linear(tr_X, tr_d, ratio, (kind, lam))
        resid = va_X @ coef - va_d
        loss = float(np.mean(co * np.maximum(resid, 0) + cu * np.maximum(-resid, 0)))
        if loss < best_loss - 1e-12:
            best_lam, best_loss = lam, loss
    return best_lam


def evaluate_policy(policy: FittedPolicy, x, position=None) -> float:
    """Order quantity of a fitted policy at covariate vector x."""
    value = policy.evaluate(x, position)
    if not math.isfinite(value):
        raise RuntimeError(f"policy {policy.label} produced a non-finite order")
    return value
