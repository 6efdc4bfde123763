import math

import numpy as np
import pytest

from compdelivery.cd_rate import AuxiliaryChannel, OptimizerOptions, cd_objective, optimize_cd_rate
from compdelivery.exceptions import CoordOverlap, ShapeMismatch, TooLarge
from compdelivery.gcd_rate import (
    DecoderSpec,
    GCDProblem,
    GeneralizedCDRate,
    cd_as_gcd,
    gcd_decoders,
    gcd_distortions,
    gcd_objective,
    gcd_terms,
    optimize_gcd_rate,
    three_source_example,
    three_source_problem,
)
from compdelivery.prob_core import DistortionMeasure, conditional_entropy, validate_joint

from conftest import dsbs

FAST = OptimizerOptions(restarts=4)
HAM = DistortionMeasure.hamming(2)


def uniform3():
    return validate_joint(np.full(8, 0.125), (2, 2, 2))


def copula3():
    p = np.zeros((2, 2, 2))
    p[0, 0, 0] = p[1, 1, 1] = 0.5
    return validate_joint(p, (2, 2, 2))


class TestSpecs:
    def test_repeated_target(self):
        with pytest.raises(CoordOverlap):
            DecoderSpec((0, 0), (HAM, HAM), (0, 0))

    def test_empty(self):
        with pytest.raises(ShapeMismatch):
            DecoderSpec((), (), ())

    def test_out_of_range(self):
        with pytest.raises(ShapeMismatch):
            GCDProblem(dsbs(0.1), (DecoderSpec((2,), (HAM,), (0,)),))

    def test_complement(self):
        prob = three_source_problem(uniform3(), [HAM] * 3, [0] * 6)
        assert [prob.side(j) for j in range(3)] == [(0,), (1,), (2,)]
        assert prob.pairs == [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]
        assert prob.default_u_size == 8 + 6

    def test_budget_dict(self):
        b = {(0, 1): 0.1, (0, 2): 0.2, (1, 0): 0.3, (1, 2): 0.4, (2, 0): 0.5, (2, 1): 0.6}
        prob = three_source_problem(uniform3(), [HAM] * 3, b)
        assert prob.decoder_specs[1].budgets == (0.3, 0.4)

    def test_overlapping_targets_accepted(self):
        prob = GCDProblem(uniform3(), (
            DecoderSpec((0, 1), (HAM, HAM), (0.1, 0.1)),
            DecoderSpec((1, 2), (HAM, HAM), (0.1, 0.1)),
        ))
        assert prob.side(1) == (0,)


class TestObjective:
    def test_reduces_to_cd(self, rng):
        src = validate_joint(rng.dirichlet(np.ones(6)).reshape(2, 3), (2, 3))
        prob = cd_as_gcd(src, (HAM, DistortionMeasure.hamming(3)), (0.1, 0.1))
        for _ in range(5):
            ch = AuxiliaryChannel(rng.dirichlet(np.ones(5), size=6))
            assert abs(gcd_objective(prob, ch) - cd_objective(src, ch)) <= 1e-12

    def test_constant(self):
        prob = three_source_problem(uniform3(), [HAM] * 3, [0] * 6)
        assert gcd_objective(prob, AuxiliaryChannel.constant(8)) == 0.0

    def test_one_hot(self, rng):
        src = validate_joint(rng.dirichlet(np.ones(8)).reshape(2, 2, 2), (2, 2, 2))
        prob = three_source_problem(src, [HAM] * 3, [0] * 6)
        want = [conditional_entropy(src, prob.decoder_specs[j].targets, prob.side(j)) for j in range(3)]
        assert np.allclose(gcd_terms(prob, AuxiliaryChannel.one_hot(8)), want, atol=1e-12)

    def test_one_hot_decoders_lossless(self):
        src = uniform3()
        prob = three_source_problem(src, [HAM] * 3, [0] * 6)
        ch = AuxiliaryChannel.one_hot(8)
        d = gcd_distortions(prob, ch, gcd_decoders(prob, ch))
        assert all(v == 0.0 for v in d.values())

    def test_constant_channel_distortion(self):
        # side-only decoding of an independent bit
        prob = three_source_problem(uniform3(), [HAM] * 3, [0] * 6)
        ch = AuxiliaryChannel.constant(8)
        d = gcd_distortions(prob, ch, gcd_decoders(prob, ch))
        assert all(v == pytest.approx(0.5) for v in d.values())

    def test_wrong_rows(self):
        prob = three_source_problem(uniform3(), [HAM] * 3, [0] * 6)
        with pytest.raises(ShapeMismatch):
            gcd_objective(prob, AuxiliaryChannel.one_hot(4))


class TestOptimize:
    def test_reduction_matches_cd(self):
        src = validate_joint([[0.4, 0.1], [0.2, 0.3]], (2, 2))
        g = optimize_gcd_rate(cd_as_gcd(src, (HAM, HAM), (0.05, 0.1)), FAST)
        c = optimize_cd_rate(src, (HAM, HAM), (0.05, 0.1), FAST)
        assert g.rate == pytest.approx(c.rate, abs=1e-3)

    def test_slack(self):
        sol = three_source_example(uniform3(), [HAM] * 3, [1.0] * 6, FAST)
        assert sol.rate == 0.0
        assert sol.feasible

    def test_copula_zero(self):
        sol = three_source_example(copula3(), [HAM] * 3, [0.0] * 6, FAST)
        assert sol.rate == pytest.approx(0.0, abs=1e-6)
        assert max(sol.achieved_distortions.values()) <= 1e-6

    def test_too_large(self):
        src = validate_joint(np.full(81, 1 / 81), (3, 3, 3, 3))
        dm = DistortionMeasure.hamming(3)
        prob = GCDProblem(src, (DecoderSpec((0,), (dm,), (0,)),))
        with pytest.raises(TooLarge):
            optimize_gcd_rate(prob, FAST)

    def test_adding_decoder(self):
        src = validate_joint([[0.4, 0.1], [0.2, 0.3]], (2, 2))
        one = GCDProblem(src, (DecoderSpec((0,), (HAM,), (0.05,)),))
        two = cd_as_gcd(src, (HAM, HAM), (0.05, 0.05))
        assert optimize_gcd_rate(two, FAST).rate >= optimize_gcd_rate(one, FAST).rate - 1e-3


class TestEstimator:
    def test_fit(self):
        prob = three_source_problem(copula3(), [HAM] * 3, [0.0] * 6)
        est = GeneralizedCDRate(restarts=4).fit(prob)
        assert est.rate_ == pytest.approx(0.0, abs=1e-6)
        rows = est.transform([[0, 0, 0], [1, 1, 1]])
        assert rows.shape == (2, est.channel_.u_size)
        u = rows.argmax(axis=1)
        # decoder 0 knows coordinate 0 and rebuilds coordinate 1
        assert np.array_equal(est.predict(u, [0, 1], (0, 1)), [0, 1])

    def test_bad_transform(self):
        est = GeneralizedCDRate(restarts=4).fit(three_source_problem(copula3(), [HAM] * 3, [1.0] * 6))
        with pytest.raises(ShapeMismatch):
            est.transform([[0, 0]])
