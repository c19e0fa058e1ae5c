"""Simulation lab: data-generating processes and Monte Carlo studies.

Covers a Gaussian-mean stream for boundary calibration experiments and
the randomized / observational treatment-effect processes built on the
regression surface 1 - x1^2 - 2 sin(x2) + 3 |x3| with heavy-tailed t(5)
outcome noise. The harness tracks cumulative miscoverage, widths, and
per-replication summaries.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .ate import (
    OBSERVATIONAL,
    RANDOMIZED,
    AteEngine,
    EngineConfig,
    Observation,
    UnadjustedEstimator,
)
from .boundaries import BoundarySpec, fixed_ci_radius, mixture_radius, tune_rho
from .numerics import DomainError, SeedSpec, expit

__all__ = [
    "SimScenario",
    "MonteCarloReport",
    "RepSummary",
    "mu_star",
    "observational_propensity",
    "generate",
    "generate_stream",
    "run_miscoverage",
    "run_ate_miscoverage",
    "run_ate_study",
    "ate_report",
    "width_table",
]

_KINDS = ("gaussian_mean", "randomized_ate", "observational_ate")

# spawn-key offsets separating data noise from split-assignment coins
_DATA_STREAM = 1_000_000
_SPLIT_STREAM = 2_000_000


@dataclass(frozen=True)
class SimScenario:
    """One simulation setting: process kind, horizon, target value, noise."""

    kind: str
    n: int = 4000
    psi_true: float = 1.0
    noise: str = "t5"
    seed: SeedSpec = field(default_factory=lambda: SeedSpec(0))
    gaussian_mean: float = 0.4
    gaussian_sd: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown scenario kind: {self.kind!r}")
        if self.noise not in ("t5", "normal"):
            raise DomainError(f"unknown noise kind: {self.noise!r}")


@dataclass
class MonteCarloReport:
    """Aggregated Monte Carlo results over a replication grid."""

    reps: int
    horizon: int
    cumulative_miscoverage_by_t: np.ndarray
    mean_width_by_t: np.ndarray
    mean_estimate_by_t: np.ndarray
    coverage_final: float

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,cum_miscoverage,mean_width,mean_estimate\n")
            for i in range(self.horizon):
                fh.write(
                    "%d,%.9g,%.9g,%.9g\n"
                    % (
                        i + 1,
                        self.cumulative_miscoverage_by_t[i],
                        self.mean_width_by_t[i],
                        self.mean_estimate_by_t[i],
                    )
                )

    def summary(self) -> dict:
        return {
            "reps": self.reps,
            "horizon": self.horizon,
            "final_cumulative_miscoverage": float(
                self.cumulative_miscoverage_by_t[-1]
            ),
            "coverage_final": self.coverage_final,
            "final_mean_width": float(self.mean_width_by_t[-1]),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)
            fh.write("\n")


@dataclass(frozen=True)
class RepSummary:
    """Per-replication outcome of one estimator."""

    final_estimate: float
    final_width: float
    uniform_coverage: bool
    final_coverage: bool
    n_emitted: int


def mu_star(x1: float, x2: float, x3: float) -> float:
    """Regression surface of the simulated experiments."""
    return 1.0 - x1 * x1 - 2.0 * math.sin(x2) + 3.0 * abs(x3)


def _mu_star_vec(x: np.ndarray) -> np.ndarray:
    return 1.0 - x[:, 0] ** 2 - 2.0 * np.sin(x[:, 1]) + 3.0 * np.abs(x[:, 2])


def observational_propensity(x1: float, x2: float, x3: float) -> float:
    """Treatment probability 0.2 + 0.6 * expit(mu_star), inside [0.2, 0.8]."""
    return 0.2 + 0.6 * expit(mu_star(x1, x2, x3))


def _t5_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    """t(5) draws as Z / sqrt(V / 5) with V a sum of 5 squared normals."""
    z = rng.standard_normal(n)
    v = rng.standard_normal((n, 5))
    return z / np.sqrt((v * v).sum(axis=1) / 5.0)


def generate(scenario: SimScenario, i: int) -> Observation:
    """The i-th observation of a scenario, deterministic given (seed, i)."""
    if i < 1:
        raise DomainError(f"index must be >= 1, got {i}")
    if scenario.kind == "gaussian_mean":
        raise DomainError("gaussian_mean streams carry no subject records")
    rng = scenario.seed.substream(i)
    x = rng.standard_normal(3)
    mu = mu_star(*x)
    if scenario.kind == "randomized_ate":
        pi = 0.5
        known = 0.5
    else:
        pi = observational_propensity(*x)
        known = None
    a = int(rng.random() < pi)
    eps = float(_t5_noise(rng, 1)[0]) if scenario.noise == "t5" else float(
        rng.standard_normal()
    )
    y = mu + scenario.psi_true * a + eps
    return Observation(x=x, a=a, y=y, known_pi=known)


def generate_stream(scenario: SimScenario, rep: int = 0):
    """A full replication's records, drawn from one per-replication stream.

    Returns (x, a, y, known_pi) arrays; known_pi is None in the
    observational scenario.
    """
    rng = SeedSpec(scenario.seed.master_seed, _DATA_STREAM + rep).rng()
    n = scenario.n
    if scenario.kind == "gaussian_mean":
        y = scenario.gaussian_mean + scenario.gaussian_sd * rng.standard_normal(n)
        return None, None, y, None
    x = rng.standard_normal((n, 3))
    mu = _mu_star_vec(x)
    if scenario.kind == "randomized_ate":
        pi = np.full(n, 0.5)
        known = pi
    else:
        pi = 0.2 + 0.6 / (1.0 + np.exp(-mu))
        known = None
    a = (rng.random(n) < pi).astype(int)
    eps = _t5_noise(rng, n) if scenario.noise == "t5" else rng.standard_normal(n)
    y = mu + scenario.psi_true * a + eps
    return x, a, y, known


def run_miscoverage(
    scenario: SimScenario,
    alpha: float,
    t_start: int,
    reps: int,
    rho: float | None = None,
    comparator: str = "cs",
) -> MonteCarloReport:
    """Cumulative miscoverage of the mean confidence sequence (or the
    fixed-time CI comparator) on Gaussian-mean streams.

    A replication counts as miscovered at time t if the target fell
    outside the interval at any emission time in [t_start, t]. The
    sequence uses the sample standard deviation at each step.
    """
    if scenario.kind != "gaussian_mean":
        raise DomainError("run_miscoverage drives gaussian_mean scenarios")
    if reps < 1:
        raise DomainError("reps must be >= 1")
    n = scenario.n
    if rho is None:
        rho = tune_rho(alpha, 5 * t_start, "exact")
    spec = BoundarySpec(alpha, rho)

    y = np.empty((reps, n))
    for r in range(reps):
        _, _, y[r], _ = generate_stream(scenario, r)

    t = np.arange(1, n + 1, dtype=float)
    cum = np.cumsum(y, axis=1)
    cum2 = np.cumsum(y * y, axis=1)
    mu_hat = cum / t
    var_hat = np.maximum(cum2 / t - mu_hat * mu_hat, 0.0)
    sd_hat = np.sqrt(var_hat)

    if comparator == "cs":
        rho2 = rho * rho
        a = t * rho2 + 1.0
        unit = np.sqrt(2.0 * a / (t * t * rho2) * np.log(np.sqrt(a) / alpha))
    elif comparator == "ci":
        unit = fixed_ci_radius(1, 1.0, alpha) / np.sqrt(t)
    else:
        raise DomainError(f"unknown comparator: {comparator!r}")
    width = sd_hat * unit[None, :]

    miss = np.abs(mu_hat - scenario.gaussian_mean) > width
    miss[:, : t_start - 1] = False
    cum_missed = np.maximum.accumulate(miss, axis=1)
    return MonteCarloReport(
        reps=reps,
        horizon=n,
        cumulative_miscoverage_by_t=cum_missed.mean(axis=0),
        mean_width_by_t=2.0 * width.mean(axis=0),
        mean_estimate_by_t=mu_hat.mean(axis=0),
        coverage_final=float(1.0 - cum_missed[:, -1].mean()),
    )


def _run_engine_rep(scenario: SimScenario, config: EngineConfig, rep: int):
    """One replication of a DR engine over a generated stream."""
    x, a, y, known = generate_stream(scenario, rep)
    cfg_seed = SeedSpec(scenario.seed.master_seed, _SPLIT_STREAM + rep)
    engine = AteEngine(
        EngineConfig(
            boundary=config.boundary,
            mode=config.mode,
            learner=config.learner,
            crossfit=config.crossfit,
            scoring=config.scoring,
            refit_schedule=config.refit_schedule,
            t_min=config.t_min,
            clip_delta=config.clip_delta,
            split=config.split,
            seed=cfg_seed,
            cold_start_min=config.cold_start_min,
        )
    )
    rows = []
    for i in range(scenario.n):
        z = Observation(
            x=x[i], a=int(a[i]), y=float(y[i]),
            known_pi=None if known is None else float(known[i]),
        )
        rows.append(engine.observe(z))
    return rows


def _run_unadjusted_rep(scenario: SimScenario, boundary, t_min, rep: int):
    x, a, y, known = generate_stream(scenario, rep)
    mode = RANDOMIZED if scenario.kind == "randomized_ate" else OBSERVATIONAL
    est = UnadjustedEstimator(boundary, mode=mode, t_min=t_min)
    points = []
    for i in range(scenario.n):
        pi = None if known is None else float(known[i])
        points.append(est.update(int(a[i]), float(y[i]), pi))
    return points


def _summarize_points(points, psi_true) -> RepSummary:
    emitted = [p for p in points if p is not None]
    if not emitted:
        return RepSummary(math.nan, math.nan, False, False, 0)
    uniform = all(p.lower <= psi_true <= p.upper for p in emitted)
    last = emitted[-1]
    return RepSummary(
        final_estimate=last.estimate,
        final_width=2.0 * last.radius,
        uniform_coverage=uniform,
        final_coverage=last.lower <= psi_true <= last.upper,
        n_emitted=len(emitted),
    )


def run_ate_miscoverage(
    scenario: SimScenario, config: EngineConfig, reps: int
) -> MonteCarloReport:
    """Cumulative miscoverage of the DR engine over replicated streams.

    Per-time means of width and estimate average over the replications
    that had emitted an interval by that time (NaN before any emission).
    """
    if scenario.kind == "gaussian_mean":
        raise DomainError("run_ate_miscoverage drives ATE scenarios")
    if reps < 1:
        raise DomainError("reps must be >= 1")
    n = scenario.n
    missed = np.zeros((reps, n), dtype=bool)
    width_sum = np.zeros(n)
    est_sum = np.zeros(n)
    emit_count = np.zeros(n)
    for rep in range(reps):
        rows = _run_engine_rep(scenario, config, rep)
        seen_miss = False
        for i, row in enumerate(rows):
            p = row.point
            if p is None:
                missed[rep, i] = seen_miss
                continue
            if not p.lower <= scenario.psi_true <= p.upper:
                seen_miss = True
            missed[rep, i] = seen_miss
            width_sum[i] += 2.0 * p.radius
            est_sum[i] += p.estimate
            emit_count[i] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_width = np.where(emit_count > 0, width_sum / emit_count, np.nan)
        mean_est = np.where(emit_count > 0, est_sum / emit_count, np.nan)
    return MonteCarloReport(
        reps=reps,
        horizon=n,
        cumulative_miscoverage_by_t=missed.mean(axis=0),
        mean_width_by_t=mean_width,
        mean_estimate_by_t=mean_est,
        coverage_final=float(1.0 - missed[:, -1].mean()),
    )


def run_ate_study(
    scenario: SimScenario,
    estimators: dict[str, EngineConfig | str],
    reps: int,
) -> dict[str, list[RepSummary]]:
    """Run several estimators over the same generated streams.

    ``estimators`` maps a label either to an :class:`EngineConfig` or to
    the string ``"unadjusted"``. Streams are paired across estimators so
    per-replication comparisons are meaningful.
    """
    if reps < 1:
        raise DomainError("reps must be >= 1")
    engine_cfgs = [c for c in estimators.values() if c != "unadjusted"]
    if any(c == "unadjusted" for c in estimators.values()) and not engine_cfgs:
        raise DomainError("the unadjusted comparator needs an engine config "
                          "to borrow its boundary from")
    out: dict[str, list[RepSummary]] = {name: [] for name in estimators}
    for rep in range(reps):
        for name, config in estimators.items():
            if config == "unadjusted":
                ref = engine_cfgs[0]
                points = _run_unadjusted_rep(scenario, ref.boundary, ref.t_min, rep)
            else:
                rows = _run_engine_rep(scenario, config, rep)
                points = [r.point for r in rows]
            out[name].append(_summarize_points(points, scenario.psi_true))
    return out


def ate_report(summaries: list[RepSummary], horizon: int) -> dict:
    """Summary statistics over one estimator's replication list."""
    widths = [s.final_width for s in summaries if not math.isnan(s.final_width)]
    ests = [s.final_estimate for s in summaries if not math.isnan(s.final_estimate)]
    return {
        "reps": len(summaries),
        "horizon": horizon,
        "uniform_coverage_rate": float(
            np.mean([s.uniform_coverage for s in summaries])
        ),
        "final_coverage_rate": float(np.mean([s.final_coverage for s in summaries])),
        "median_final_width": float(np.median(widths)) if widths else math.nan,
        "mean_final_estimate": float(np.mean(ests)) if ests else math.nan,
    }


def width_table(
    alpha: float, t_opts: list[int], t_grid: list[float] | None = None
) -> list[dict]:
    """CS-to-CI width ratios with rho optimized exactly for each t_opt.

    ``t_grid`` gives multiples of t_opt at which to evaluate the ratio;
    the ratio at the optimized time itself is always included.
    """
    if t_grid is None:
        t_grid = [1.0, 2.0, 5.0, 10.0, 100.0]
    rows = []
    for t_opt in t_opts:
        rho = tune_rho(alpha, t_opt, "exact")
        spec = BoundarySpec(alpha, rho)
        for mult in t_grid:
            t = max(1, int(round(mult * t_opt)))
            ratio = mixture_radius(t, 1.0, spec) / fixed_ci_radius(t, 1.0, alpha)
            rows.append(
                {
                    "alpha": alpha,
                    "t_opt": t_opt,
                    "t": t,
                    "t_over_t_opt": t / t_opt,
                    "rho": rho,
                    "cs_ci_ratio": ratio,
                }
            )
    return rows
