"""Accuracy measurement and the Pareto frontier against a brute-force oracle."""

import numpy as np
import pytest

from dprobust import (
    AttackConfig,
    LinearModel,
    RunRecord,
    UsageError,
    binomial_se,
    natural_accuracy,
    optimal_intercepts,
    optimal_robust_error,
    pareto_frontier,
    pgd,
    predict,
    robust_accuracy,
    robust_error_intercept,
    sample,
)
from dprobust.data import Dataset


def record(nat, rob, key="rob_linf_0.075", seed=0):
    return RunRecord(config_digest="x", seed=seed, natural_accuracy=nat,
                     robust_accuracy={key: rob})


class TestNaturalAccuracy:
    def test_all_correct(self):
        X = np.array([[1.0, 1.0], [-1.0, -1.0]])
        y = np.array([1, -1])
        assert natural_accuracy(LinearModel.ones(2), Dataset(X=X, y=y)) == 1.0

    def test_all_flipped(self):
        X = np.array([[1.0, 1.0], [-1.0, -1.0]])
        y = np.array([-1, 1])
        assert natural_accuracy(LinearModel.ones(2), Dataset(X=X, y=y)) == 0.0

    def test_matches_closed_form(self, spec):
        b0 = optimal_intercepts(spec, 0.0).b_minus
        data = sample(spec, 200_000, np.random.default_rng(12))
        acc = natural_accuracy(LinearModel.ones(2, b=b0), data)
        p = 1.0 - optimal_robust_error(spec, 0.0)
        assert abs(acc - p) <= 3.0 * binomial_se(p, len(data))

    def test_empty_rejected(self):
        with pytest.raises(UsageError):
            natural_accuracy(LinearModel.ones(2),
                             Dataset(X=np.empty((0, 2)), y=np.empty(0, dtype=np.int64)))


class TestRobustAccuracy:
    def test_zero_gamma_equals_natural(self, spec, rng):
        data = sample(spec, 5_000, rng)
        m = LinearModel.ones(2, b=0.5)
        cfg = AttackConfig(norm="linf", gamma=0.0)
        assert robust_accuracy(m, data, cfg) == natural_accuracy(m, data)

    def test_matches_closed_form_at_gamma(self, spec):
        b0 = optimal_intercepts(spec, 0.0).b_minus
        data = sample(spec, 200_000, np.random.default_rng(13))
        m = LinearModel.ones(2, b=b0)
        cfg = AttackConfig(norm="linf", gamma=0.075)
        acc = robust_accuracy(m, data, cfg)
        p = 1.0 - robust_error_intercept(spec, b0, 0.075)
        assert abs(acc - p) <= 3.0 * binomial_se(p, len(data))

    def test_never_exceeds_natural(self, spec, rng):
        data = sample(spec, 2_000, rng)
        for _ in range(10):
            m = LinearModel(w=rng.normal(size=2), b=float(rng.normal()),
                            trainable_mask=np.ones(3, bool))
            cfg = AttackConfig(norm="l2", gamma=float(rng.uniform(0, 0.5)))
            assert robust_accuracy(m, data, cfg) <= natural_accuracy(m, data)

    def test_exact_matches_pgd_decisions(self, spec, rng):
        # the exact linear evaluator and a sufficiently budgeted PGD agree
        # sample by sample, not just on the average
        data = sample(spec, 2_000, rng)
        m = LinearModel(w=rng.normal(size=2) + 1.0, b=0.4,
                        trainable_mask=np.ones(3, bool))
        cfg = AttackConfig(norm="linf", gamma=0.075, steps=20)
        adv = pgd(m, data.X, data.y, cfg)
        pgd_correct = predict(m, adv) == data.y
        dual = np.abs(m.w).sum()
        margins = m.margins(data.X)
        exact_correct = np.where(data.y == 1,
                                 margins - cfg.gamma * dual >= 0.0,
                                 margins + cfg.gamma * dual < 0.0)
        assert np.array_equal(pgd_correct, exact_correct)
        assert robust_accuracy(m, data, cfg) == float(np.mean(pgd_correct))


def brute_force_frontier(records, key):
    out = []
    for i, r in enumerate(records):
        dominated = False
        for j, s in enumerate(records):
            if j == i:
                continue
            nat_ge = s.natural_accuracy >= r.natural_accuracy
            rob_ge = s.robust_accuracy[key] >= r.robust_accuracy[key]
            strict = (s.natural_accuracy > r.natural_accuracy
                      or s.robust_accuracy[key] > r.robust_accuracy[key])
            if nat_ge and rob_ge and strict:
                dominated = True
                break
        if not dominated:
            out.append(r)
    return out


class TestParetoFrontier:
    KEY = "rob_linf_0.075"

    def test_single_record(self):
        r = record(0.9, 0.5)
        assert pareto_frontier([r], self.KEY) == [r]

    def test_incomparable_pair_kept(self):
        rs = [record(0.9, 0.5), record(0.8, 0.7)]
        assert pareto_frontier(rs, self.KEY) == rs

    def test_dominance_with_tie_on_one_axis(self):
        a, b = record(0.9, 0.5), record(0.9, 0.4)
        assert pareto_frontier([a, b], self.KEY) == [a]

    def test_exact_duplicates_kept(self):
        a, b, c = record(0.9, 0.5), record(0.9, 0.5), record(0.95, 0.2)
        assert pareto_frontier([a, b, c], self.KEY) == [a, b, c]

    def test_idempotent(self, rng):
        rs = [record(float(n), float(r)) for n, r in
              rng.uniform(0, 1, size=(60, 2)).round(2)]
        once = pareto_frontier(rs, self.KEY)
        assert pareto_frontier(once, self.KEY) == once

    def test_matches_brute_force_on_random_sets(self, rng):
        for trial in range(20):
            n = int(rng.integers(1, 200))
            # coarse grid forces plenty of ties and duplicates
            vals = rng.integers(0, 12, size=(n, 2)) / 11.0
            rs = [record(float(a), float(b), seed=i) for i, (a, b) in enumerate(vals)]
            got = pareto_frontier(rs, self.KEY)
            want = brute_force_frontier(rs, self.KEY)
            assert [id(r) for r in got] == [id(r) for r in want]

    def test_missing_key_rejected(self):
        r = record(0.9, 0.5, key="rob_l2_0.5")
        with pytest.raises(UsageError):
            pareto_frontier([r], self.KEY)
        bad = RunRecord(config_digest="x", seed=0, robust_accuracy={self.KEY: 0.3})
        with pytest.raises(UsageError):
            pareto_frontier([bad], self.KEY)


def test_binomial_se():
    assert binomial_se(0.5, 100) == pytest.approx(0.05)
    assert binomial_se(0.0, 50) == 0.0
