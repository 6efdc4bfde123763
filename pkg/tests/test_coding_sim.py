import csv
import io
import json
import math

import numpy as np
import pytest

from compdelivery.cd_rate import AuxiliaryChannel, cd_objective, optimal_decoders
from compdelivery.coding_sim import (
    CSV_COLUMNS,
    Codebook,
    CodebookConfig,
    TypicalityParams,
    build_codebook,
    decode,
    encode,
    is_typical,
    reconstruct,
    run_sweep,
    run_trials,
)
from compdelivery.exceptions import LengthMismatch, ShapeMismatch, TooLarge
from compdelivery.prob_core import DecoderRule, validate_joint

from conftest import dsbs


def copula():
    return validate_joint([0.5, 0, 0, 0.5], (2, 2))


class TestTypical:
    def test_all_zero_vs_uniform(self):
        assert is_typical(np.zeros(8, int), [0.5, 0.5], 0.5)

    def test_exact_type(self):
        assert is_typical(np.array([0, 1, 1, 0]), [0.5, 0.5], 1e-9)

    def test_six_ones(self):
        assert not is_typical(np.array([1, 1, 1, 1, 1, 1, 0, 0]), [0.5, 0.5], 0.1)

    def test_joint(self):
        x = np.array([0, 0, 1, 1])
        assert is_typical((x, x), np.array([[0.5, 0], [0, 0.5]]), 1e-9)
        assert not is_typical((x, 1 - x), np.array([[0.5, 0], [0, 0.5]]), 0.4)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            is_typical((np.zeros(3, int), np.zeros(4, int)), np.full((2, 2), 0.25), 0.1)

    def test_negative_tol(self):
        with pytest.raises(ValueError):
            is_typical(np.zeros(3, int), [1.0, 0.0], -0.1)


class TestParams:
    def test_defaults(self):
        p = TypicalityParams().resolved(2, 3)
        assert (p.k2, p.k3) == (8.0, 12.0)

    def test_ordering_enforced(self):
        with pytest.raises(ShapeMismatch):
            TypicalityParams(k0=2.0, k1=1.0).resolved(2, 2)
        with pytest.raises(ShapeMismatch):
            TypicalityParams(k2=3.0).resolved(2, 2)


class TestConfig:
    def test_codebook_size(self):
        cfg = CodebookConfig(n=12, gamma=0.15, m1=1).derive(0.5, 0.0, 0.0)
        assert cfg.M_U == math.ceil(math.exp(7.8)) == 2441
        assert cfg.L_U == 1 and cfg.N_U == 2441

    def test_binning(self):
        cfg = CodebookConfig(n=10).derive(0.8, 0.5, 0.6)
        assert cfg.M_U == cfg.N_U * cfg.L_U
        assert cfg.M_U >= math.exp(10 * (0.8 + 0.15))
        assert cfg.L_U <= math.exp(10 * (0.5 - 0.15))
        assert cfg.L_U > 1
        assert cfg.rate == pytest.approx((math.log(cfg.M_U) - math.log(cfg.L_U)) / 10)

    def test_rate_margin(self):
        # (1/n) log N_U exceeds the objective by roughly (m1 + l) gamma
        cfg = CodebookConfig(n=16).derive(0.8, 0.5, 0.6)
        assert cfg.rate >= (0.8 - 0.5) + 2 * 0.15 - 1e-12

    def test_caps(self):
        with pytest.raises(TooLarge):
            CodebookConfig(n=21).derive(0.1, 0, 0)
        with pytest.raises(TooLarge):
            CodebookConfig(n=20).derive(1.5, 0, 0)


class TestCodebook:
    def test_point_mass(self):
        cfg = CodebookConfig(n=6).derive(0.3, 0, 0)
        book = build_codebook([0.0, 1.0, 0.0], cfg)
        assert np.all(book.words == 1)

    def test_seeded(self):
        cfg = CodebookConfig(n=6, seed=4).derive(0.3, 0, 0)
        a = build_codebook([0.3, 0.7], cfg)
        b = build_codebook([0.3, 0.7], cfg)
        assert np.array_equal(a.words, b.words)

    def test_bins_partition(self):
        book = Codebook(np.zeros((12, 3), np.int8), 3)
        assert book.N_U == 4
        seen = np.concatenate([np.arange(j * 3, (j + 1) * 3) for j in range(book.N_U)])
        assert np.array_equal(seen, np.arange(12))
        # 1-based: index i lives in bin ceil(i / L)
        assert all(book.bin_of(i - 1) + 1 == math.ceil(i / 3) for i in range(1, 13))


def _one_hot_setup():
    src = copula()
    ch = AuxiliaryChannel.one_hot(4)
    p_uxy = (src.flat[:, None] * ch.rows).T.reshape(4, 2, 2)
    return src, ch, p_uxy


class TestEncodeDecode:
    def test_exact_type_found(self):
        _, _, p = _one_hot_setup()
        x = np.array([0, 1, 0, 1])
        u = np.array([0, 3, 0, 3])  # u = 2x + y
        words = np.array([[1, 1, 1, 1], u, [2, 2, 2, 2]])
        r = encode(x, x, Codebook(words, 1), p, 1e-9)
        assert not r.failed and r.index == 1 and r.bin == 1

    def test_zero_tolerance_fails(self):
        rng = np.random.default_rng(0)
        p = np.full((2, 2, 2), 1 / 8)
        words = rng.integers(0, 2, (20, 7))
        r = encode(rng.integers(0, 2, 7), rng.integers(0, 2, 7), Codebook(words, 4), p, 0.0)
        assert r.failed and r.bin == 0 and r.index == 0

    def test_singleton_bin(self):
        _, _, p = _one_hot_setup()
        y = np.array([0, 1, 0, 1])
        words = np.array([[0, 3, 0, 3], [3, 3, 0, 0]])
        r = decode(0, y, Codebook(words, 1), p.sum(axis=1), 1e-9)
        assert not r.failed and r.index == 0 and r.matches == 1

    def test_ambiguous_bin(self):
        words = np.zeros((3, 4), np.int8)
        r = decode(0, np.zeros(4, int), Codebook(words, 3), np.array([[1.0]]), 0.1)
        assert r.failed and r.matches == 3 and r.index == 0

    def test_bad_bin(self):
        with pytest.raises(ShapeMismatch):
            decode(5, np.zeros(4, int), Codebook(np.zeros((3, 4), np.int8), 1), np.array([[1.0]]), 0.1)

    def test_failure_rate_falls_with_codebook_size(self):
        src = dsbs(0.1)
        ch = AuxiliaryChannel([[0.9, 0.1], [0.8, 0.2], [0.2, 0.8], [0.1, 0.9]])
        p = (src.flat[:, None] * ch.rows).T.reshape(2, 2, 2)
        tol = 2 * 0.04
        rates = []
        for M in (4, 32, 256):
            fails = 0
            for t in range(1000):
                rng = np.random.default_rng([7, t])
                book = Codebook(rng.choice(2, size=(M, 12), p=p.sum(axis=(1, 2))), 1)
                xy = rng.choice(4, size=12, p=src.flat)
                x, y = np.unravel_index(xy, (2, 2))
                fails += encode(x, y, book, p, tol).failed
            rates.append(fails / 1000)
        assert rates[0] > rates[1] > rates[2]


class TestReconstruct:
    def test_side_copy(self):
        rule = DecoderRule([[0, 1], [0, 1]])
        y = np.array([1, 0, 1, 1])
        assert np.array_equal(reconstruct([0, 1, 1, 0], y, rule), y)

    def test_length(self):
        with pytest.raises(LengthMismatch):
            reconstruct([0, 1], [0, 1, 1], DecoderRule([[0, 1], [0, 1]]))


class TestTrials:
    def test_constant_u_distortion(self, ham2):
        src = dsbs(0.1)
        ch = AuxiliaryChannel.constant(4)
        decs = optimal_decoders(src, ch, (ham2, ham2))
        n, trials = 12, 1500
        rep = run_trials(src, ch, decs, (ham2, ham2), CodebookConfig(n=n), None, trials, (0.1, 0.1))
        r = rep.records[0]
        sigma = math.sqrt(0.1 * 0.9 / (n * trials))
        assert abs(r.dist_x - 0.1) <= 3 * sigma
        assert abs(r.dist_y - 0.1) <= 3 * sigma

    def test_copula_lossless(self, ham2):
        src, ch, _ = _one_hot_setup()
        decs = optimal_decoders(src, ch, (ham2, ham2))
        # at the default delta every bin is ambiguous at n=8; a tight delta
        # makes typical matches letter-exact so success trials exist
        params = TypicalityParams(delta=0.01)
        rep = run_trials(src, ch, decs, (ham2, ham2), CodebookConfig(n=8), params, 300, (0.0, 0.0))
        r = rep.records[0]
        assert r.success_trials > 20
        assert r.max_dist_x_success == 0.0 and r.max_dist_y_success == 0.0

    def test_rate_bookkeeping(self, ham2):
        src, ch, _ = _one_hot_setup()
        decs = optimal_decoders(src, ch, (ham2, ham2))
        r = run_trials(src, ch, decs, (ham2, ham2), CodebookConfig(n=8), None, 5).records[0]
        assert r.rate_nats == pytest.approx(math.log(r.N_U) / 8)
        assert r.rate_nats >= cd_objective(src, ch)
        assert 0 <= r.p_error <= 1

    def test_ambiguity_grows_with_bin_size(self, ham2):
        src = dsbs(0.1)
        ch = AuxiliaryChannel([[0.9, 0.1], [0.8, 0.2], [0.2, 0.8], [0.1, 0.9]])
        decs = optimal_decoders(src, ch, (ham2, ham2))
        fails = []
        for L in (1, 8, 64):
            cfg = CodebookConfig(n=10, M_U=256, L_U=L, N_U=256 // L)
            r = run_trials(src, ch, decs, (ham2, ham2), cfg, None, 400).records[0]
            fails.append(r.p_dec1_fail)
        assert fails[0] <= fails[1] <= fails[2]
        assert fails[2] > fails[0]

    def test_trials_positive(self, ham2):
        src, ch, _ = _one_hot_setup()
        with pytest.raises(ShapeMismatch):
            run_trials(src, ch, None, (ham2, ham2), CodebookConfig(n=4), None, 0)


class TestReport:
    @pytest.fixture
    def report(self, ham2):
        src, ch, _ = _one_hot_setup()
        decs = optimal_decoders(src, ch, (ham2, ham2))
        return run_sweep(src, ch, decs, (ham2, ham2), [4, 6], trials=20, seeds=(0, 1))

    def test_rows(self, report):
        assert [(r.n, r.seed) for r in report.records] == [(4, 0), (4, 1), (6, 0), (6, 1)]

    def test_csv(self, report):
        rows = list(csv.DictReader(io.StringIO(report.to_csv())))
        assert list(rows[0]) == CSV_COLUMNS
        assert len(rows) == 4

    def test_json(self, report):
        d = json.loads(report.to_json())
        assert d["units"] == "nats"
        assert d["records"][0]["trials"] == 20

    def test_deterministic(self, report, ham2):
        src, ch, _ = _one_hot_setup()
        decs = optimal_decoders(src, ch, (ham2, ham2))
        again = run_sweep(src, ch, decs, (ham2, ham2), [4, 6], trials=20, seeds=(0, 1))
        assert again.to_json() == report.to_json()
        assert again.to_csv() == report.to_csv()
