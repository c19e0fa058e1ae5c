"""Doubly robust treatment-effect estimation with confidence sequences.

Evaluates the (uncentered) efficient influence function under fitted or
known nuisances, routes arrivals through sequential sample splitting,
maintains the influence-value variance estimate, and assembles the
normal-mixture confidence sequence. Also houses the unadjusted
comparator and a generic wrapper for any asymptotically linear estimator
whose influence values the caller supplies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

import numpy as np

from .boundaries import BoundarySpec, CsPoint, mixture_radius, tune_rho
from .numerics import DataError, DomainError, RunningMoments, SeedSpec
from .nuisance import LearnerSpec, NuisanceFit, fit_outcome, fit_propensity
from .splitting import EVAL, TRAIN, NotReady, SplitLedger, SplitMode

__all__ = [
    "Observation",
    "InfluenceStats",
    "EngineConfig",
    "AteEngine",
    "EmitRow",
    "UnadjustedEstimator",
    "eval_influence",
    "general_cs",
    "default_boundary",
]

RANDOMIZED = "randomized"
OBSERVATIONAL = "observational"


@dataclass(frozen=True)
class Observation:
    """One subject record: covariates, treatment, outcome, and the known
    propensity when the design is randomized."""

    x: np.ndarray
    a: int
    y: float
    known_pi: float | None = None

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if not np.all(np.isfinite(x)) or not math.isfinite(self.y):
            raise DataError("non-finite observation fields")
        if self.a not in (0, 1):
            raise DataError(f"treatment must be 0 or 1, got {self.a!r}")
        if self.known_pi is not None and not 0.0 < self.known_pi < 1.0:
            raise DataError(f"known propensity must lie in (0, 1), got {self.known_pi}")
        object.__setattr__(self, "x", x)


@dataclass(frozen=True)
class InfluenceStats:
    """Streaming moments of the scored influence values."""

    moments: RunningMoments = field(default_factory=RunningMoments)

    def push(self, value: float) -> "InfluenceStats":
        return InfluenceStats(self.moments.push(value))

    @property
    def count(self) -> int:
        return self.moments.count

    @property
    def mean(self) -> float:
        return self.moments.mean

    def variance(self) -> float:
        return self.moments.variance()


def eval_influence(z: Observation, fit: NuisanceFit) -> float:
    """Uncentered efficient influence value for one observation.

    f(z) = {mu1(x) - mu0(x)}
           + (a / pi(x) - (1 - a) / (1 - pi(x))) * (y - mu_a(x))

    Known propensities (randomized designs) take precedence over a
    fitted propensity model when ``fit.pi`` is None.
    """
    x = z.x[None, :]
    m1 = float(fit.mu1(x)[0])
    m0 = float(fit.mu0(x)[0])
    if fit.pi is None:
        if z.known_pi is None:
            raise DomainError("no propensity available for this observation")
        pi = min(max(z.known_pi, fit.clip_delta), 1.0 - fit.clip_delta)
    else:
        pi = float(fit.pi(x)[0])
    resid = z.y - (m1 if z.a == 1 else m0)
    weight = z.a / pi - (1 - z.a) / (1.0 - pi)
    return (m1 - m0) + weight * resid


def _score_batch(
    x: np.ndarray,
    a: np.ndarray,
    y: np.ndarray,
    known_pi: np.ndarray,
    fit: NuisanceFit,
) -> np.ndarray:
    """Vectorized influence evaluation over stored records."""
    m1 = fit.mu1(x)
    m0 = fit.mu0(x)
    if fit.pi is None:
        pi = np.clip(known_pi, fit.clip_delta, 1.0 - fit.clip_delta)
    else:
        pi = fit.pi(x)
    resid = y - np.where(a == 1, m1, m0)
    weight = a / pi - (1 - a) / (1.0 - pi)
    return (m1 - m0) + weight * resid


def default_boundary(alpha: float, t_min: int = 25) -> BoundarySpec:
    """Boundary with rho optimized for five times the warm-up gate."""
    return BoundarySpec(alpha, tune_rho(alpha, 5 * t_min, "exact"))


@dataclass(frozen=True)
class EngineConfig:
    """Everything the streaming ATE engine needs to run."""

    boundary: BoundarySpec
    mode: str = RANDOMIZED
    learner: LearnerSpec = field(default_factory=LearnerSpec)
    crossfit: bool = True
    scoring: str = "batch"
    refit_schedule: str = "doubling"
    t_min: int = 25
    clip_delta: float = 0.01
    split: SplitMode = field(default_factory=SplitMode)
    seed: SeedSpec = field(default_factory=lambda: SeedSpec(0))
    cold_start_min: int = 5

    def __post_init__(self):
        if self.mode not in (RANDOMIZED, OBSERVATIONAL):
            raise DomainError(f"unknown mode: {self.mode!r}")
        if self.scoring not in ("batch", "online"):
            raise DomainError(f"unknown scoring mode: {self.scoring!r}")
        if self.refit_schedule not in ("doubling", "every"):
            raise DomainError(f"unknown refit schedule: {self.refit_schedule!r}")
        if not 0.0 < self.clip_delta < 0.5:
            raise DomainError("clip_delta must lie in (0, 0.5)")


@dataclass(frozen=True)
class EmitRow:
    """One output row of the engine: counts, status, optional interval."""

    t: int
    t_eval: int
    t_train: int
    status: str
    point: CsPoint | None


class _View:
    """One direction of the sample split: fit on one group, score the other.

    Batch scoring keeps all scored values aligned with the latest fit by
    re-scoring the stored records whenever the nuisances are refit;
    online scoring freezes each record's value at first scoring.
    """

    def __init__(self, fit_group: str, config: EngineConfig):
        self.fit_group = fit_group
        self.config = config
        self.fit: NuisanceFit | None = None
        self.n_train = 0
        self._train_x: list[np.ndarray] = []
        self._train_a: list[int] = []
        self._train_y: list[float] = []
        self._eval_x: list[np.ndarray] = []
        self._eval_a: list[int] = []
        self._eval_y: list[float] = []
        self._eval_pi: list[float] = []
        self._scores: list[float] = []
        self._s1 = 0.0
        self._s2 = 0.0

    # -- training side -------------------------------------------------
    def add_train(self, z: Observation) -> None:
        self._train_x.append(z.x)
        self._train_a.append(z.a)
        self._train_y.append(z.y)
        self.n_train += 1
        if self._should_refit():
            self._refit()

    def _should_refit(self) -> bool:
        if self.config.refit_schedule == "every":
            return True
        if self.fit is None:
            return True  # keep trying until the first usable fit
        n = self.n_train
        return n & (n - 1) == 0  # powers of two

    def _arm_learner(self, n_arm: int) -> LearnerSpec:
        if n_arm < self.config.cold_start_min:
            return LearnerSpec("mean_only")
        return self.config.learner

    def _refit(self) -> None:
        a = np.asarray(self._train_a)
        if a.size == 0 or a.min() == a.max():
            return  # an arm is still empty
        x = np.asarray(self._train_x)
        y = np.asarray(self._train_y)
        x1, y1 = x[a == 1], y[a == 1]
        x0, y0 = x[a == 0], y[a == 0]
        try:
            mu1 = fit_outcome(x1, y1, self._arm_learner(len(y1)))
            mu0 = fit_outcome(x0, y0, self._arm_learner(len(y0)))
        except NotReady:
            mu1 = fit_outcome(x1, y1, LearnerSpec("mean_only"))
            mu0 = fit_outcome(x0, y0, LearnerSpec("mean_only"))
        pi = None
        if self.config.mode == OBSERVATIONAL:
            spec = self.config.learner
            if a.size < 2 * self.config.cold_start_min:
                spec = LearnerSpec("mean_only")
            try:
                pi = fit_propensity(x, a, spec, self.config.clip_delta)
            except NotReady:
                try:
                    pi = fit_propensity(
                        x, a, LearnerSpec("mean_only"), self.config.clip_delta
                    )
                except NotReady:
                    return
        self.fit = NuisanceFit(
            mu1=mu1,
            mu0=mu0,
            pi=pi,
            fitted_on=self.n_train,
            clip_delta=self.config.clip_delta,
        )
        if self.config.scoring == "batch":
            self._rescore_all()
        else:
            self._score_pending()

    # -- evaluation side ----------------------------------------------
    def add_eval(self, z: Observation) -> None:
        self._eval_x.append(z.x)
        self._eval_a.append(z.a)
        self._eval_y.append(z.y)
        self._eval_pi.append(z.known_pi if z.known_pi is not None else 0.5)
        if self.fit is not None:
            s = eval_influence(z, self.fit)
            self._scores.append(s)
            self._s1 += s
            self._s2 += s * s
        # otherwise: batch mode picks it up at the next refit, online mode
        # scores it as soon as a first fit exists

    def _eval_arrays(self):
        return (
            np.asarray(self._eval_x),
            np.asarray(self._eval_a),
            np.asarray(self._eval_y),
            np.asarray(self._eval_pi),
        )

    def _rescore_all(self) -> None:
        if not self._eval_x:
            return
        x, a, y, pi = self._eval_arrays()
        s = _score_batch(x, a, y, pi, self.fit)
        self._scores = list(s)
        self._s1 = float(s.sum())
        self._s2 = float(s @ s)

    def _score_pending(self) -> None:
        n_pending = len(self._eval_x) - len(self._scores)
        if n_pending <= 0:
            return
        x, a, y, pi = self._eval_arrays()
        s = _score_batch(
            x[-n_pending:], a[-n_pending:], y[-n_pending:], pi[-n_pending:], self.fit
        )
        self._scores.extend(s)
        self._s1 += float(s.sum())
        self._s2 += float(s @ s)

    # -- summaries -----------------------------------------------------
    @property
    def n_scored(self) -> int:
        return len(self._scores)

    @property
    def sums(self) -> tuple[float, float, int]:
        return self._s1, self._s2, len(self._scores)

    def estimate(self) -> float:
        if not self._scores:
            raise NotReady("no scored evaluation observations yet")
        return self._s1 / len(self._scores)

    def var_hat(self) -> float:
        n = len(self._scores)
        if n < 2:
            raise NotReady("variance undefined with fewer than two scores")
        m = self._s1 / n
        return max(self._s2 / n - m * m, 0.0)

    def scores(self) -> np.ndarray:
        return np.asarray(self._scores)


class AteEngine:
    """Streaming doubly robust ATE estimator with anytime-valid intervals.

    Feed observations one at a time with :meth:`observe`; each call
    returns an :class:`EmitRow` whose point is populated once the warm-up
    gate has passed and a nuisance fit is available.
    """

    def __init__(self, config: EngineConfig):
        self.config = config
        self.ledger = SplitLedger(config.seed)
        self.views = [_View(TRAIN, config)]
        if config.crossfit:
            self.views.append(_View(EVAL, config))

    def observe(self, z: Observation) -> EmitRow:
        if self.config.mode == RANDOMIZED and z.known_pi is None:
            raise DataError("randomized mode requires a known propensity")
        group = self.ledger.assign(self.config.split)
        for view in self.views:
            if group == view.fit_group:
                view.add_train(z)
            else:
                view.add_eval(z)
        try:
            point = self.current_point()
            status = "ok"
        except NotReady:
            point = None
            status = "not_ready"
        return EmitRow(
            t=self.ledger.t,
            t_eval=self.ledger.t_eval,
            t_train=self.ledger.t_train,
            status=status,
            point=point,
        )

    # -- interval assembly --------------------------------------------
    def current_point(self) -> CsPoint:
        if self.config.crossfit:
            return self.crossfit_estimate()
        return self._single_point()

    def _single_point(self) -> CsPoint:
        view = self.views[0]
        if view.fit is None:
            raise NotReady("nuisance fit not ready")
        n = view.n_scored
        if n < max(self.config.t_min, 2):
            raise NotReady("below the warm-up gate")
        var = view.var_hat()
        radius = mixture_radius(n, math.sqrt(var), self.config.boundary)
        return CsPoint.from_radius(self.ledger.t, view.estimate(), radius, var)

    def crossfit_estimate(self) -> CsPoint:
        """Average of the two view estimates with the radius computed at
        the pooled scored count from the pooled influence variance."""
        if not self.config.crossfit:
            raise DomainError("engine was built without cross-fitting")
        va, vb = self.views
        if va.fit is None or vb.fit is None:
            raise NotReady("nuisance fits not ready in both views")
        if va.n_scored == 0 or vb.n_scored == 0:
            raise NotReady("one cross-fit view has no scored observations")
        s1a, s2a, na = va.sums
        s1b, s2b, nb = vb.sums
        n = na + nb
        if n < max(self.config.t_min, 2):
            raise NotReady("below the warm-up gate")
        estimate = 0.5 * (s1a / na + s1b / nb)
        pooled_mean = (s1a + s1b) / n
        var = max((s2a + s2b) / n - pooled_mean * pooled_mean, 0.0)
        radius = mixture_radius(n, math.sqrt(var), self.config.boundary)
        return CsPoint.from_radius(self.ledger.t, estimate, radius, var)

    def view_estimates(self) -> tuple[float, float]:
        """The two single-view estimates (primary, swapped)."""
        if not self.config.crossfit:
            raise DomainError("engine was built without cross-fitting")
        return self.views[0].estimate(), self.views[1].estimate()


class UnadjustedEstimator:
    """Inverse-propensity difference of means with no sample splitting.

    Randomized designs use each record's known propensity; observational
    streams plug in the running treated fraction, re-weighting all past
    observations at every step.
    """

    def __init__(self, boundary: BoundarySpec, mode: str = RANDOMIZED, t_min: int = 25):
        if mode not in (RANDOMIZED, OBSERVATIONAL):
            raise DomainError(f"unknown mode: {mode!r}")
        self.boundary = boundary
        self.mode = mode
        self.t_min = t_min
        self.t = 0
        self.n_treated = 0
        self._s1y = 0.0
        self._s0y = 0.0
        self._s1y2 = 0.0
        self._s0y2 = 0.0
        self._known = RunningMoments()

    def update(self, a: int, y: float, known_pi: float | None = None) -> CsPoint | None:
        if a not in (0, 1):
            raise DataError(f"treatment must be 0 or 1, got {a!r}")
        self.t += 1
        if self.mode == RANDOMIZED:
            pi = known_pi if known_pi is not None else 0.5
            g = (a / pi - (1 - a) / (1.0 - pi)) * y
            self._known = self._known.push(g)
        else:
            self.n_treated += a
            if a == 1:
                self._s1y += y
                self._s1y2 += y * y
            else:
                self._s0y += y
                self._s0y2 += y * y
        try:
            return self.current_point()
        except NotReady:
            return None

    def estimate(self) -> float:
        if self.t == 0:
            raise NotReady("no observations yet")
        if self.mode == RANDOMIZED:
            return self._known.mean
        if self.n_treated in (0, self.t):
            raise NotReady("observational mode needs both arms observed")
        pbar = self.n_treated / self.t
        return (self._s1y / pbar - self._s0y / (1.0 - pbar)) / self.t

    def var_hat(self) -> float:
        if self.mode == RANDOMIZED:
            return self._known.variance()
        pbar = self.n_treated / self.t
        est = self.estimate()
        second = (self._s1y2 / pbar**2 + self._s0y2 / (1.0 - pbar) ** 2) / self.t
        return max(second - est * est, 0.0)

    def current_point(self) -> CsPoint:
        if self.t < max(self.t_min, 2):
            raise NotReady("below the warm-up gate")
        est = self.estimate()
        var = self.var_hat()
        radius = mixture_radius(self.t, math.sqrt(var), self.boundary)
        return CsPoint.from_radius(self.t, est, radius, var)


def general_cs(
    phi_values: Iterable[float], spec: BoundarySpec, t_min: int = 1
) -> Iterator[CsPoint]:
    """Confidence sequence for any asymptotically linear estimator.

    The caller supplies the stream of influence values; the sequence is
    the running mean with the normal mixture radius at the running
    standard deviation, the same machinery as the ATE path.
    """
    stats = RunningMoments()
    for phi in phi_values:
        stats = stats.push(phi)
        if stats.count < t_min:
            continue
        var = stats.variance()
        radius = mixture_radius(stats.count, math.sqrt(var), spec)
        yield CsPoint.from_radius(stats.count, stats.mean, radius, var)
