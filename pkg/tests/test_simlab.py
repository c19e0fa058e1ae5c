"""Simulation lab: DGP values, determinism, reports, width tables."""

import json
import math

import numpy as np
import pytest

from seqdr.ate import EngineConfig, default_boundary
from seqdr.boundaries import BoundarySpec, fixed_ci_radius, mixture_radius, tune_rho
from seqdr.numerics import DomainError, SeedSpec
from seqdr.nuisance import LearnerSpec
from seqdr.simlab import (
    SimScenario,
    ate_report,
    generate,
    generate_stream,
    mu_star,
    observational_propensity,
    run_ate_miscoverage,
    run_ate_study,
    run_miscoverage,
    width_table,
)


class TestMuStar:
    def test_hand_values(self):
        assert mu_star(0.0, 0.0, 0.0) == pytest.approx(1.0)
        assert mu_star(1.0, 0.0, 0.0) == pytest.approx(0.0)
        assert mu_star(0.0, math.pi / 2.0, 0.0) == pytest.approx(-1.0)
        assert mu_star(0.0, 0.0, -2.0) == pytest.approx(7.0)

    def test_observational_propensity_at_zero_surface(self):
        # mu_star = 0 at x = (1, 0, 0): pi = 0.2 + 0.6 * 0.5 = 0.5
        assert observational_propensity(1.0, 0.0, 0.0) == pytest.approx(0.5)

    def test_propensity_bounded(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            x = rng.standard_normal(3) * 3
            p = observational_propensity(*x)
            assert 0.2 <= p <= 0.8


class TestGenerate:
    def test_deterministic(self):
        sc = SimScenario(kind="randomized_ate", seed=SeedSpec(1))
        a = generate(sc, 5)
        b = generate(sc, 5)
        assert np.array_equal(a.x, b.x)
        assert (a.a, a.y) == (b.a, b.y)

    def test_randomized_known_pi(self):
        sc = SimScenario(kind="randomized_ate", seed=SeedSpec(1))
        z = generate(sc, 1)
        assert z.known_pi == 0.5

    def test_observational_no_known_pi(self):
        sc = SimScenario(kind="observational_ate", seed=SeedSpec(1))
        assert generate(sc, 1).known_pi is None

    def test_gaussian_has_no_records(self):
        with pytest.raises(DomainError):
            generate(SimScenario(kind="gaussian_mean"), 1)

    def test_bad_index(self):
        with pytest.raises(DomainError):
            generate(SimScenario(kind="randomized_ate"), 0)

    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            SimScenario(kind="bootstrap")


class TestGenerateStream:
    def test_shapes_and_determinism(self):
        sc = SimScenario(kind="randomized_ate", n=300, seed=SeedSpec(2))
        x, a, y, known = generate_stream(sc, rep=0)
        x2, a2, y2, _ = generate_stream(sc, rep=0)
        assert x.shape == (300, 3) and a.shape == y.shape == (300,)
        assert np.array_equal(x, x2) and np.array_equal(y, y2)
        assert np.all(known == 0.5)

    def test_reps_differ(self):
        sc = SimScenario(kind="randomized_ate", n=100, seed=SeedSpec(2))
        _, _, y0, _ = generate_stream(sc, rep=0)
        _, _, y1, _ = generate_stream(sc, rep=1)
        assert not np.array_equal(y0, y1)

    def test_gaussian_mean_moments(self):
        sc = SimScenario(kind="gaussian_mean", n=200_000, seed=SeedSpec(3))
        _, _, y, _ = generate_stream(sc, 0)
        assert abs(y.mean() - 0.4) < 0.01
        assert abs(y.std() - 1.0) < 0.01

    def test_t5_noise_heavier_than_normal(self):
        sc = SimScenario(kind="randomized_ate", n=100_000, seed=SeedSpec(4))
        x, a, y, _ = generate_stream(sc, 0)
        mu = 1.0 - x[:, 0] ** 2 - 2.0 * np.sin(x[:, 1]) + 3.0 * np.abs(x[:, 2])
        eps = y - mu - a
        # var of t(5) is 5/3
        assert abs(np.var(eps) - 5.0 / 3.0) < 0.1

    def test_treatment_effect_embedded(self):
        sc = SimScenario(kind="randomized_ate", n=200_000, seed=SeedSpec(5),
                         psi_true=2.5)
        x, a, y, _ = generate_stream(sc, 0)
        mu = 1.0 - x[:, 0] ** 2 - 2.0 * np.sin(x[:, 1]) + 3.0 * np.abs(x[:, 2])
        gap = (y - mu)[a == 1].mean() - (y - mu)[a == 0].mean()
        assert abs(gap - 2.5) < 0.05


class TestRunMiscoverage:
    def test_report_reproducible(self, tmp_path):
        sc = SimScenario(kind="gaussian_mean", n=500, seed=SeedSpec(6))
        paths = []
        for i in range(2):
            rep = run_miscoverage(sc, 0.1, 25, reps=1)
            p = tmp_path / f"r{i}.csv"
            rep.to_csv(p)
            paths.append(p.read_bytes())
        assert paths[0] == paths[1]

    def test_coverage_sane(self):
        sc = SimScenario(kind="gaussian_mean", n=1000, seed=SeedSpec(7))
        rep = run_miscoverage(sc, 0.1, 25, reps=200)
        assert rep.cumulative_miscoverage_by_t[-1] <= 0.15
        assert np.all(np.diff(rep.cumulative_miscoverage_by_t) >= -1e-12)

    def test_ci_comparator_wider_miss(self):
        sc = SimScenario(kind="gaussian_mean", n=2000, seed=SeedSpec(8))
        cs = run_miscoverage(sc, 0.1, 25, reps=100, comparator="cs")
        ci = run_miscoverage(sc, 0.1, 25, reps=100, comparator="ci")
        assert ci.cumulative_miscoverage_by_t[-1] > cs.cumulative_miscoverage_by_t[-1]

    def test_json_summary(self, tmp_path):
        sc = SimScenario(kind="gaussian_mean", n=100, seed=SeedSpec(9))
        rep = run_miscoverage(sc, 0.1, 25, reps=5)
        p = tmp_path / "s.json"
        rep.to_json(p)
        data = json.loads(p.read_text())
        assert data["reps"] == 5 and data["horizon"] == 100

    def test_rejects_wrong_kind(self):
        with pytest.raises(DomainError):
            run_miscoverage(SimScenario(kind="randomized_ate"), 0.1, 25, 2)


class TestAteStudies:
    def test_study_and_report(self):
        sc = SimScenario(kind="randomized_ate", n=600, seed=SeedSpec(10))
        cfg = EngineConfig(boundary=default_boundary(0.1),
                           learner=LearnerSpec("linear"), t_min=25)
        out = run_ate_study(sc, {"dr": cfg, "unadj": "unadjusted"}, reps=3)
        assert set(out) == {"dr", "unadj"}
        assert all(len(v) == 3 for v in out.values())
        rep = ate_report(out["dr"], sc.n)
        assert 0.0 <= rep["uniform_coverage_rate"] <= 1.0
        assert rep["median_final_width"] > 0

    def test_unadjusted_alone_rejected(self):
        sc = SimScenario(kind="randomized_ate", n=100, seed=SeedSpec(11))
        with pytest.raises(DomainError):
            run_ate_study(sc, {"u": "unadjusted"}, reps=1)

    def test_miscoverage_harness(self):
        sc = SimScenario(kind="randomized_ate", n=400, seed=SeedSpec(12))
        cfg = EngineConfig(boundary=default_boundary(0.1),
                           learner=LearnerSpec("mean_only"), t_min=25)
        rep = run_ate_miscoverage(sc, cfg, reps=3)
        assert rep.horizon == 400
        assert np.all(np.diff(rep.cumulative_miscoverage_by_t) >= -1e-12)
        assert math.isnan(rep.mean_width_by_t[0])
        assert rep.mean_width_by_t[-1] > 0


class TestWidthTable:
    def test_ratio_at_t_opt(self):
        rows = width_table(0.05, [100], t_grid=[1.0])
        assert rows[0]["cs_ci_ratio"] == pytest.approx(1.549, abs=0.005)

    def test_ratio_independent_of_t_opt(self):
        # rho^2 scales as 1/t_opt so the ratio at t = t_opt is constant
        r1 = width_table(0.05, [50], t_grid=[1.0])[0]["cs_ci_ratio"]
        r2 = width_table(0.05, [5000], t_grid=[1.0])[0]["cs_ci_ratio"]
        assert r1 == pytest.approx(r2, rel=1e-9)

    def test_ratio_diverges(self):
        rows = width_table(0.05, [100], t_grid=[1.0, 100.0])
        assert rows[1]["cs_ci_ratio"] > rows[0]["cs_ci_ratio"]

    def test_matches_direct_chain(self):
        alpha, t_opt = 0.1, 200
        rho = tune_rho(alpha, t_opt, "exact")
        want = mixture_radius(t_opt, 1.0, BoundarySpec(alpha, rho)) / \
            fixed_ci_radius(t_opt, 1.0, alpha)
        got = width_table(alpha, [t_opt], t_grid=[1.0])[0]["cs_ci_ratio"]
        assert got == pytest.approx(want, rel=1e-12)
