"""Fast invariant checks on built-in instances (used by ``compdelivery selfcheck``)."""
from __future__ import annotations

import math

import numpy as np

from .baselines import conditional_rd
from .cd_rate import (
    AuxiliaryChannel,
    OptimizerOptions,
    cd_terms,
    optimal_decoders,
    optimize_cd_rate,
    smoothed_cd_objective,
)
from .coding_sim import CodebookConfig, run_trials
from .prob_core import (
    DistortionMeasure,
    conditional_entropy,
    conditional_mutual_information,
    mutual_information,
    validate_joint,
)


def binary_entropy(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return -p * math.log(p) - (1 - p) * math.log(1 - p)


def dsbs(p: float):
    return validate_joint([[(1 - p) / 2, p / 2], [p / 2, (1 - p) / 2]], (2, 2))


def _chain_rule(rng):
    src = validate_joint(rng.dirichlet(np.ones(64)).reshape(4, 4, 4), (4, 4, 4))
    lhs = mutual_information(src, (0, 1), 2)
    rhs = mutual_information(src, 1, 2) + conditional_mutual_information(src, 0, 2, 1)
    err = abs(lhs - rhs)
    return err <= 1e-9, f"|I(AB;C) - I(B;C) - I(A;C|B)| = {err:.2e}"


def _one_hot_corner(rng):
    src = dsbs(0.1)
    ix, iy = cd_terms(src, AuxiliaryChannel.one_hot(4))
    err = max(abs(ix - conditional_entropy(src, 0, 1)), abs(iy - conditional_entropy(src, 1, 0)))
    return err <= 1e-12, f"one-hot channel vs H(X|Y), H(Y|X): {err:.2e}"


def _gradient(rng, n=5):
    src = validate_joint(rng.dirichlet(np.ones(4)).reshape(2, 2), (2, 2))
    dm = DistortionMeasure.hamming(2)
    worst = 0.0
    for _ in range(n):
        W = 0.5 * rng.dirichlet(np.ones(6), size=4) + 0.5 / 6
        lam = rng.uniform(0, 2, 2)
        decs = optimal_decoders(src, AuxiliaryChannel(W), (dm, dm))
        f = lambda V: smoothed_cd_objective(src, (dm, dm), (0.1, 0.1), V, 0.3, lam, 10.0, decs)[0]
        _, g = smoothed_cd_objective(src, (dm, dm), (0.1, 0.1), W, 0.3, lam, 10.0, decs)
        num = np.zeros_like(W)
        h = 1e-6
        for idx in np.ndindex(W.shape):
            e = np.zeros_like(W)
            e[idx] = h
            num[idx] = (f(W + e) - f(W - e)) / (2 * h)
        worst = max(worst, np.linalg.norm(num - g) / np.linalg.norm(g))
    return worst <= 1e-5, f"gradient vs central differences, rel err {worst:.2e}"


def _conditional_rd(rng):
    src = dsbs(0.1)
    got = conditional_rd(src, DistortionMeasure.hamming(2), 0.05)
    want = binary_entropy(0.1) - binary_entropy(0.05)
    return abs(got - want) <= 1e-4, f"R_C(X|Y, 0.05) on DSBS(0.1): {got:.6f} vs {want:.6f}"


def _lossless_corner(rng):
    src = dsbs(0.1)
    dm = DistortionMeasure.hamming(2)
    sol = optimize_cd_rate(src, (dm, dm), (0.0, 0.0), OptimizerOptions(restarts=8))
    want = binary_entropy(0.1)
    return abs(sol.rate - want) <= 1e-3, f"DSBS(0.1) at (0, 0): {sol.rate:.6f} vs h(0.1) = {want:.6f}"


def _simulator_determinism(rng):
    src = dsbs(0.1)
    dm = DistortionMeasure.hamming(2)
    ch = AuxiliaryChannel.one_hot(4)
    decs = optimal_decoders(src, ch, (dm, dm))
    cfg = CodebookConfig(n=6, seed=3).derive(2 * math.log(2), 0.0, 0.0)
    a = run_trials(src, ch, decs, (dm, dm), cfg, None, 50, (0.0, 0.0))
    b = run_trials(src, ch, decs, (dm, dm), cfg, None, 50, (0.0, 0.0))
    return a.to_dict() == b.to_dict(), "identical simulator records for identical seeds"


CHECKS = [
    ("chain_rule", _chain_rule),
    ("one_hot_corner", _one_hot_corner),
    ("gradient", _gradient),
    ("conditional_rd", _conditional_rd),
    ("lossless_corner", _lossless_corner),
    ("simulator_determinism", _simulator_determinism),
]


def run_selfcheck(seed: int = 0):
    """List of (name, passed, detail)."""
    out = []
    for name, fn in CHECKS:
        rng = np.random.default_rng(seed)
        try:
            ok, detail = fn(rng)
        except Exception as e:  # report, don't crash the suite
            ok, detail = False, f"{type(e).__name__}: {e}"
        out.append((name, bool(ok), detail))
    return out
