"""Pluggable nuisance learners: outcome regressions and propensity scores.

Provides mean-only, linear (tiny ridge), k-nearest-neighbour, logistic
(IRLS) and regression-spline learners, plus a simplex-weighted stacked
ensemble that tunes its weights on a held-out tail of the training data.
All fitted predictors are pure functions of their input: the same x
always produces the same output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import DomainError, expit
from .splitting import NotReady

__all__ = [
    "LearnerSpec",
    "NuisanceFit",
    "fit_outcome",
    "fit_propensity",
    "fit_ensemble",
    "project_simplex",
]

_KINDS = ("mean_only", "linear", "logistic", "knn", "spline", "ensemble")

# knot placement for the spline basis, as quantiles of the training data
_SPLINE_KNOT_QS = (0.25, 0.5, 0.75)


@dataclass(frozen=True)
class LearnerSpec:
    """Which learner to fit and its hyperparameters."""

    kind: str = "ensemble"
    k: int = 10
    ridge: float = 1e-8
    irls_iters: int = 25
    irls_tol: float = 1e-8
    candidates: tuple["LearnerSpec", ...] | None = None
    holdout_min: int = 5
    pgd_steps: int = 500

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown learner kind: {self.kind!r}")

    def resolved_candidates(self, task: str) -> tuple["LearnerSpec", ...]:
        """Candidate list for the ensemble; defaults to a misspecified
        parametric model next to two flexible nonparametric ones (an
        additive regression spline and k-nearest-neighbour)."""
        if self.candidates is not None:
            return self.candidates
        parametric = "logistic" if task == "propensity" else "linear"
        return (
            LearnerSpec("mean_only"),
            replace(self, kind=parametric, candidates=None),
            replace(self, kind="spline", candidates=None),
            replace(self, kind="knn", candidates=None),
        )


@dataclass(frozen=True)
class NuisanceFit:
    """The fitted nuisance triple: outcome regressions per arm and the
    propensity score, with outputs of ``pi`` clipped to
    [clip_delta, 1 - clip_delta]."""

    mu1: object
    mu0: object
    pi: object
    fitted_on: int
    clip_delta: float = 0.01


class _MeanPredictor:
    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.full(x.shape[0], self.value)


class _LinearPredictor:
    def __init__(self, intercept: float, coef: np.ndarray):
        self.intercept = float(intercept)
        self.coef = np.asarray(coef, dtype=float)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.intercept + x @ self.coef


class _KnnPredictor:
    def __init__(self, xs: np.ndarray, ys: np.ndarray, k: int):
        self.xs = np.asarray(xs, dtype=float)
        self.ys = np.asarray(ys, dtype=float)
        self.k = min(k, len(ys))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        # squared Euclidean distances, vectorized over query points
        d2 = (
            np.sum(x * x, axis=1)[:, None]
            - 2.0 * x @ self.xs.T
            + np.sum(self.xs * self.xs, axis=1)[None, :]
        )
        if self.k == len(self.ys):
            return np.full(x.shape[0], self.ys.mean())
        idx = np.argpartition(d2, self.k - 1, axis=1)[:, : self.k]
        return self.ys[idx].mean(axis=1)


class _LogisticPredictor:
    def __init__(self, intercept: float, coef: np.ndarray):
        self.intercept = float(intercept)
        self.coef = np.asarray(coef, dtype=float)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = np.clip(self.intercept + x @ self.coef, -700.0, 700.0)
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        e = np.exp(z[~pos])
        out[~pos] = e / (1.0 + e)
        return out


class _SplineBasis:
    """Additive quadratic-spline feature map: per coordinate, the raw
    value, its square, and hinge terms max(0, x - q) at training-data
    quartile knots."""

    def __init__(self, knots: np.ndarray):
        self.knots = np.asarray(knots, dtype=float)  # shape (d, n_knots)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        cols = [x, x * x]
        for j in range(x.shape[1]):
            cols.append(np.maximum(0.0, x[:, j : j + 1] - self.knots[j]))
        return np.hstack(cols)


class _BasisPredictor:
    def __init__(self, basis: _SplineBasis, inner):
        self.basis = basis
        self.inner = inner

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.inner(self.basis(x))


class _ClippedPredictor:
    def __init__(self, inner, delta: float):
        self.inner = inner
        self.delta = float(delta)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.clip(self.inner(x), self.delta, 1.0 - self.delta)


class _StackedPredictor:
    def __init__(self, predictors: list, weights: np.ndarray):
        self.predictors = predictors
        self.weights = np.asarray(weights, dtype=float)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        for w, p in zip(self.weights, self.predictors):
            if w > 0.0:
                out += w * p(x)
        return out


def _as_matrix(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x


def _fit_linear(x: np.ndarray, y: np.ndarray, ridge: float) -> _LinearPredictor:
    x = _as_matrix(x)
    n, d = x.shape
    xa = np.hstack([np.ones((n, 1)), x])
    gram = xa.T @ xa + ridge * np.eye(d + 1)
    beta = np.linalg.solve(gram, xa.T @ np.asarray(y, dtype=float))
    return _LinearPredictor(beta[0], beta[1:])


def _fit_logistic(
    x: np.ndarray, labels: np.ndarray, iters: int, tol: float, ridge: float
) -> _LogisticPredictor:
    """Logistic regression by iteratively reweighted least squares.

    The iteration count is capped so separable data cannot diverge; the
    caller clips the predictor's outputs anyway.
    """
    x = _as_matrix(x)
    n, d = x.shape
    xa = np.hstack([np.ones((n, 1)), x])
    y = np.asarray(labels, dtype=float)
    beta = np.zeros(d + 1)
    for _ in range(iters):
        z = np.clip(xa @ beta, -30.0, 30.0)
        p = 1.0 / (1.0 + np.exp(-z))
        w = np.maximum(p * (1.0 - p), 1e-10)
        grad = xa.T @ (y - p) - ridge * beta
        hess = (xa * w[:, None]).T @ xa + ridge * np.eye(d + 1)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        beta = beta + step
        if np.abs(step).max() < tol:
            break
    return _LogisticPredictor(beta[0], beta[1:])


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of v onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, len(v) + 1) > (css - 1.0))[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _tune_weights(
    preds: np.ndarray, target: np.ndarray, loss: str, delta: float, steps: int
) -> np.ndarray:
    """Simplex-constrained weights minimizing holdout loss by projected
    gradient descent, started from the best single candidate so the
    stack never does worse than any vertex on the tuning fold."""
    m, kk = preds.shape
    if kk == 1:
        return np.ones(1)

    if loss == "log":
        pc = np.clip(preds, delta, 1.0 - delta)

        def loss_fn(w):
            q = np.clip(pc @ w, 1e-12, 1.0 - 1e-12)
            return -np.mean(target * np.log(q) + (1.0 - target) * np.log1p(-q))

        def grad_fn(w):
            q = np.clip(pc @ w, 1e-12, 1.0 - 1e-12)
            return pc.T @ ((q - target) / (q * (1.0 - q))) / m

        lam = float(np.linalg.eigvalsh(pc.T @ pc / m).max())
        lip = lam / max(delta * (1.0 - delta), 1e-4) ** 2
    else:

        def loss_fn(w):
            r = preds @ w - target
            return float(r @ r) / m

        def grad_fn(w):
            return 2.0 * preds.T @ (preds @ w - target) / m

        lip = 2.0 * float(np.linalg.eigvalsh(preds.T @ preds / m).max())

    vertex_losses = [loss_fn(np.eye(kk)[j]) for j in range(kk)]
    w = np.eye(kk)[int(np.argmin(vertex_losses))].copy()
    if lip <= 0.0 or not math.isfinite(lip):
        return w
    step = 1.0 / lip
    best_w, best_l = w.copy(), loss_fn(w)
    for _ in range(steps):
        w = project_simplex(w - step * grad_fn(w))
        cur = loss_fn(w)
        if cur < best_l:
            best_l, best_w = cur, w.copy()
    return best_w


def _fit_single(
    x: np.ndarray, y: np.ndarray, spec: LearnerSpec, task: str
):
    if spec.kind == "mean_only":
        return _MeanPredictor(float(np.mean(y)))
    if spec.kind == "linear":
        return _fit_linear(x, y, spec.ridge)
    if spec.kind == "knn":
        return _KnnPredictor(_as_matrix(x), y, spec.k)
    if spec.kind == "logistic":
        return _fit_logistic(x, y, spec.irls_iters, spec.irls_tol, spec.ridge)
    if spec.kind == "spline":
        xm = _as_matrix(x)
        knots = np.quantile(xm, _SPLINE_KNOT_QS, axis=0).T
        basis = _SplineBasis(knots)
        xb = basis(xm)
        # the basis has d*(2 + n_knots) columns; demand a few rows per
        # column before trusting it
        if xb.shape[0] < 4 * xb.shape[1]:
            raise NotReady("spline basis needs more rows than available")
        # hinge columns are nearly collinear with x and x^2, so keep a
        # visible ridge floor
        ridge = max(spec.ridge, 1e-6)
        if task == "propensity":
            inner = _fit_logistic(xb, y, spec.irls_iters, spec.irls_tol, ridge)
        else:
            inner = _fit_linear(xb, y, ridge)
        return _BasisPredictor(basis, inner)
    raise DomainError(f"{spec.kind!r} is not a base learner")


def fit_outcome(x: np.ndarray, y: np.ndarray, spec: LearnerSpec):
    """Fit a regression predictor for one treatment arm's outcomes."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise NotReady("no training observations in this arm")
    if spec.kind == "ensemble":
        return fit_ensemble(x, y, spec.resolved_candidates("outcome"), spec, "outcome")[0]
    if spec.kind == "logistic":
        raise DomainError("logistic is a propensity learner, not a regression")
    return _fit_single(x, y, spec, "outcome")


def fit_propensity(
    x: np.ndarray, labels: np.ndarray, spec: LearnerSpec, clip_delta: float = 0.01
):
    """Fit a clipped probability predictor for treatment assignment."""
    labels = np.asarray(labels, dtype=float)
    if labels.size == 0 or labels.min() == labels.max():
        raise NotReady("propensity fitting needs both treatment labels")
    if spec.kind == "ensemble":
        inner = fit_ensemble(
            x, labels, spec.resolved_candidates("propensity"), spec, "propensity"
        )[0]
    elif spec.kind == "linear":
        raise DomainError("linear is a regression learner, not a propensity model")
    else:
        inner = _fit_single(x, labels, spec, "propensity")
    return _ClippedPredictor(inner, clip_delta)


def fit_ensemble(
    x: np.ndarray,
    y: np.ndarray,
    candidates: tuple[LearnerSpec, ...],
    spec: LearnerSpec | None = None,
    task: str = "outcome",
):
    """Simplex-weighted stack of candidate learners.

    Candidates are fit on the oldest 80% of the training rows; the
    weights minimize squared loss (regression) or log loss (propensity)
    on the newest 20%, over the probability simplex.

    Returns
    -------
    (predictor, weights)
    """
    if len(candidates) < 1:
        raise DomainError("ensemble needs at least one candidate")
    spec = spec or LearnerSpec()
    x = _as_matrix(x)
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < 2 * spec.holdout_min:
        raise NotReady(f"ensemble needs at least {2 * spec.holdout_min} rows")
    if len(candidates) == 1:
        pred = _fit_single(x, y, candidates[0], task)
        return _StackedPredictor([pred], np.ones(1)), np.ones(1)

    split = max(spec.holdout_min, int(math.floor(0.8 * n)))
    split = min(split, n - 1)
    x_fit, y_fit = x[:split], y[:split]
    x_val, y_val = x[split:], y[split:]

    fold_preds, fold_cols = [], []
    for cand in candidates:
        try:
            p = _fit_single(x_fit, y_fit, cand, task)
        except (NotReady, np.linalg.LinAlgError):
            continue
        fold_preds.append(p)
        fold_cols.append(p(x_val))
    if not fold_preds:
        raise NotReady("no candidate could be fit on the tuning fold")

    loss = "log" if task == "propensity" else "squared"
    delta = 1e-3
    weights = _tune_weights(
        np.column_stack(fold_cols), y_val, loss, delta, spec.pgd_steps
    )
    return _StackedPredictor(fold_preds, weights), weights
