import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from compdelivery.exceptions import CoordOverlap, NegativeMass, NotNormalized, ShapeMismatch
from compdelivery.prob_core import (
    DecoderRule,
    DistortionMeasure,
    JointSource,
    conditional_entropy,
    conditional_mutual_information,
    expected_distortion,
    mutual_information,
    validate_joint,
)

from conftest import dsbs


def random_joint(rng, shape):
    return validate_joint(rng.dirichlet(np.ones(int(np.prod(shape)))).reshape(shape), shape)


@st.composite
def joints(draw, max_size=4, n_coords=3):
    shape = tuple(draw(st.integers(1, max_size)) for _ in range(n_coords))
    raw = draw(arrays(float, int(np.prod(shape)), elements=st.floats(0.0, 1.0)))
    raw = raw + 1e-3 * draw(st.booleans())
    if raw.sum() <= 0:
        raw = np.ones_like(raw)
    return validate_joint(raw / raw.sum(), shape)


class TestValidateJoint:
    def test_uniform(self):
        src = validate_joint([0.25] * 4, [2, 2])
        assert src.alphabet_sizes == (2, 2)
        assert np.allclose(src.pmf, 0.25)

    def test_not_normalized(self):
        with pytest.raises(NotNormalized):
            validate_joint([0.5, 0.6, 0.0, 0.0], [2, 2])

    def test_dsbs_valid(self):
        src = validate_joint([0.45, 0.05, 0.05, 0.45], [2, 2])
        assert src.pmf[0, 1] == 0.05

    def test_negative(self):
        with pytest.raises(NegativeMass):
            validate_joint([1.1, -0.1], [2])

    def test_tiny_negative_clipped(self):
        src = validate_joint([1.0 + 1e-16, -1e-16], [2])
        assert src.pmf.min() == 0.0

    def test_shape(self):
        with pytest.raises(ShapeMismatch):
            validate_joint([0.5, 0.5], [2, 2])
        with pytest.raises(ShapeMismatch):
            validate_joint([1.0], [0])

    def test_no_renormalization(self):
        src = validate_joint([0.5 + 5e-10, 0.5], [2])
        assert src.pmf[0] == 0.5 + 5e-10

    def test_readonly(self):
        src = dsbs(0.1)
        with pytest.raises(ValueError):
            src.pmf[0, 0] = 1.0


class TestEntropy:
    def test_independent_uniform(self):
        assert conditional_entropy(validate_joint([0.25] * 4, [2, 2]), 0, 1) == pytest.approx(math.log(2), abs=1e-12)

    def test_copula(self):
        assert conditional_entropy(validate_joint([0.5, 0, 0, 0.5], [2, 2]), 0, 1) == 0.0

    def test_dsbs(self):
        # direct summation: H(XY) - H(Y)
        p = np.array([0.45, 0.05, 0.05, 0.45])
        want = -np.sum(p * np.log(p)) - math.log(2)
        assert conditional_entropy(dsbs(0.1), 0, 1) == pytest.approx(want, abs=1e-12)
        assert want == pytest.approx(0.325083, abs=1e-6)

    def test_overlap(self):
        with pytest.raises(CoordOverlap):
            conditional_entropy(dsbs(0.1), 0, 0)

    def test_unconditional(self):
        assert conditional_entropy(dsbs(0.1), (0, 1)) == pytest.approx(math.log(2) + 0.325083, abs=1e-6)


class TestCMI:
    def test_independent_b(self, rng):
        ac = rng.dirichlet(np.ones(4)).reshape(2, 1, 2)
        b = rng.dirichlet(np.ones(3)).reshape(1, 3, 1)
        src = validate_joint(ac * b, (2, 3, 2))
        assert conditional_mutual_information(src) == pytest.approx(0.0, abs=1e-12)

    def test_b_equals_a(self, rng):
        pac = rng.dirichlet(np.ones(4)).reshape(2, 2)
        p = np.zeros((2, 2, 2))
        for a in range(2):
            p[a, a, :] = pac[a]
        src = validate_joint(p, (2, 2, 2))
        assert conditional_mutual_information(src) == pytest.approx(conditional_entropy(src, 0, 2), abs=1e-12)

    def test_identity(self, rng):
        src = random_joint(rng, (2, 2, 2))
        want = conditional_entropy(src, 0, 2) - conditional_entropy(src, 0, (1, 2))
        assert conditional_mutual_information(src) == pytest.approx(want, abs=1e-12)

    def test_overlap(self):
        with pytest.raises(CoordOverlap):
            conditional_mutual_information(random_joint(np.random.default_rng(0), (2, 2, 2)), 0, (0, 1), 2)


class TestExpectedDistortion:
    def test_identity_on_copula(self):
        # (U, X, Y) with U = X = Y
        p = np.zeros((2, 2, 2))
        p[0, 0, 0] = p[1, 1, 1] = 0.5
        src = JointSource((2, 2, 2), p)
        rule = DecoderRule([[0, 0], [1, 1]])  # x_hat = u
        assert expected_distortion(src, rule, DistortionMeasure.hamming(2)) == 0.0

    def test_constant_on_uniform(self):
        src = JointSource((1, 2, 2), np.full((1, 2, 2), 0.25))
        rule = DecoderRule([[0, 0]])
        assert expected_distortion(src, rule, DistortionMeasure.hamming(2)) == pytest.approx(0.5)

    def test_side_copy_dsbs(self):
        src = JointSource((1, 2, 2), dsbs(0.1).pmf[None])
        rule = DecoderRule([[0, 1]])  # x_hat = y
        assert expected_distortion(src, rule, DistortionMeasure.hamming(2)) == pytest.approx(0.1, abs=1e-12)


# -- properties -------------------------------------------------------------


@given(joints())
def test_chain_rule(src):
    lhs = mutual_information(src, (0, 1), 2)
    rhs = mutual_information(src, 1, 2) + conditional_mutual_information(src, 0, 2, 1)
    assert abs(lhs - rhs) <= 1e-9


@given(joints(n_coords=2))
def test_entropy_bounds(src):
    h = conditional_entropy(src, 0, 1)
    assert 0.0 <= h <= math.log(src.alphabet_sizes[0]) + 1e-12
    assert mutual_information(src, 0, 1) >= 0.0


@given(joints(n_coords=2), st.randoms(use_true_random=False))
def test_permutation_invariance(src, r):
    pa = list(range(src.alphabet_sizes[0]))
    pb = list(range(src.alphabet_sizes[1]))
    r.shuffle(pa)
    r.shuffle(pb)
    perm = JointSource(src.alphabet_sizes, src.pmf[np.ix_(pa, pb)])
    assert conditional_entropy(perm, 0, 1) == pytest.approx(conditional_entropy(src, 0, 1), abs=1e-12)
    assert conditional_entropy(perm, 1, 0) == pytest.approx(conditional_entropy(src, 1, 0), abs=1e-12)


@given(joints(max_size=3), joints(max_size=3), st.floats(0.0, 1.0))
def test_distortion_linear(a, b, lam):
    if a.alphabet_sizes != b.alphabet_sizes:
        b = JointSource(a.alphabet_sizes, np.full(a.alphabet_sizes, 1.0 / a.pmf.size))
    nu, nx, ns = a.alphabet_sizes
    rule = DecoderRule(np.arange(nu * ns).reshape(nu, ns) % nx)
    dm = DistortionMeasure(np.arange(nx * nx, dtype=float).reshape(nx, nx) % 3)
    mix = JointSource(a.alphabet_sizes, lam * a.pmf + (1 - lam) * b.pmf)
    want = lam * expected_distortion(a, rule, dm) + (1 - lam) * expected_distortion(b, rule, dm)
    assert expected_distortion(mix, rule, dm) == pytest.approx(want, abs=1e-12)


def test_chain_rule_4x4x4(rng):
    for _ in range(20):
        src = random_joint(rng, (4, 4, 4))
        lhs = mutual_information(src, (0, 1), 2)
        rhs = mutual_information(src, 1, 2) + conditional_mutual_information(src, 0, 2, 1)
        assert abs(lhs - rhs) <= 1e-9
