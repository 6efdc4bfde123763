"""
Reference rates for the two-source problem.

* lossless rate ``max{H(X|Y), H(Y|X)}``
* conditional rate-distortion ``R_C(X|Y, D)`` (side information at both ends)
* Wyner-Ziv rate-distortion ``R_WZ(X|Y, D)`` (side information at the decoder)

The CD rate always sits between ``max R_C`` and ``max R_WZ``;
:func:`sandwich_check` reports both slacks.

``which`` selects the reproduced coordinate: 0 for X (side information Y),
1 for Y (side information X).
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from . import _engine
from .cd_rate import OptimizerOptions, _check_cd, optimize_cd_rate
from .exceptions import BudgetNegative, NonConvergence, ShapeMismatch
from .prob_core import DistortionMeasure, JointSource, check_budgets, conditional_entropy

__all__ = [
    "lossless_cd_rate",
    "conditional_rd",
    "conditional_rd_curve",
    "wyner_ziv",
    "sandwich_check",
    "lower_convex_envelope",
]

N_SLOPES = 64
SLOPE_RANGE = (1e-4, 1e4)
BA_TOL = 1e-9
BA_MAX_ITER = 2000
WZ_GRID = 33
WZ_RESTARTS = 8
SANDWICH_TOL = 2e-3


def lossless_cd_rate(src: JointSource) -> float:
    """max{H(X|Y), H(Y|X)} in nats."""
    _check_cd(src)
    return max(conditional_entropy(src, 0, 1), conditional_entropy(src, 1, 0))


def _oriented(src: JointSource, which: int) -> np.ndarray:
    """Joint table indexed (side, target)."""
    _check_cd(src)
    if which not in (0, 1):
        raise ShapeMismatch(f"which must be 0 or 1, got {which}")
    return src.pmf.T if which == 0 else src.pmf


def _check_dm(p: np.ndarray, dm: DistortionMeasure):
    if dm.n_source != p.shape[1]:
        raise ShapeMismatch(
            f"distortion matrix has {dm.n_source} rows, target alphabet has {p.shape[1]}"
        )


def lower_convex_envelope(D, R):
    """Vertices of the lower convex hull of the points (D, R), sorted by D.

    Infinite rates are dropped. Only the nonincreasing part is kept, since a
    rate-distortion function can always discard excess distortion.
    """
    D = np.asarray(D, dtype=float)
    R = np.asarray(R, dtype=float)
    ok = np.isfinite(R) & np.isfinite(D)
    order = np.lexsort((R[ok], D[ok]))
    pts = list(zip(D[ok][order], R[ok][order]))
    hull: list[tuple[float, float]] = []
    for p in pts:
        if hull and abs(p[0] - hull[-1][0]) <= 1e-15:
            if p[1] >= hull[-1][1]:
                continue  # same D up to roundoff, keep the smaller R
            hull.pop()
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    hd = np.array([h[0] for h in hull])
    hr = np.array([h[1] for h in hull])
    if hr.size:
        stop = int(np.argmin(hr)) + 1
        hd, hr = hd[:stop], hr[:stop]
    return hd, hr


def _envelope_at(hd, hr, D: float) -> float:
    if hd.size == 0 or D < hd[0] - 1e-12:
        return math.inf
    if D >= hd[-1]:
        return float(hr[-1])
    return float(np.interp(D, hd, hr))


# ---------------------------------------------------------------------------
# conditional rate-distortion


def _blahut_arimoto(p: np.ndarray, dm: np.ndarray, slopes: np.ndarray):
    """Per-side-letter alternating minimization with a shared slope.

    ``p`` is indexed (side, target). Returns (distortion, rate) arrays, one
    entry per slope.
    """
    py = p.sum(axis=1)
    pxy = p / np.where(py > 0, py, 1.0)[:, None]  # p(x | y)
    nh = dm.shape[1]
    # shift by the per-letter minimum so large slopes do not underflow
    shifted = dm - dm.min(axis=1, keepdims=True)
    kernel = np.exp(-slopes[:, None, None] * shifted[None])  # (S, x, h)
    q = np.full((slopes.size, p.shape[0], nh), 1.0 / nh)
    prev = np.full(slopes.size, np.inf)
    for _ in range(BA_MAX_ITER):
        A = q[:, :, None, :] * kernel[:, None, :, :]  # (S, y, x, h)
        W = A / A.sum(axis=-1, keepdims=True)
        q = np.einsum("yx,syxh->syh", pxy, W)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(W > 0, W / q[:, :, None, :], 1.0)
        rate = np.einsum("yx,syxh->s", p, W * np.log(ratio))
        if np.all(np.abs(rate - prev) < BA_TOL):
            break
        prev = rate
    dist = np.einsum("yx,syxh,xh->s", p, W, dm)
    return dist, np.maximum(rate, 0.0)


def _rate_zero_distortion(p: np.ndarray, dm: np.ndarray) -> float:
    """Distortion of the best reconstruction that only looks at the side letter."""
    return float(np.sum(np.min(p @ dm, axis=1)))


def conditional_rd_curve(src: JointSource, dm: DistortionMeasure, which: int = 0):
    """Sampled (distortion, rate) pairs of the conditional RD function over the slope grid."""
    p = _oriented(src, which)
    _check_dm(p, dm)
    slopes = np.geomspace(*SLOPE_RANGE, N_SLOPES)
    return _blahut_arimoto(p, dm.matrix, slopes)


def conditional_rd(src: JointSource, dm: DistortionMeasure, D: float, which: int = 0) -> float:
    """R_C(target | side, D) in nats; ``inf`` below the minimum distortion."""
    (D,) = check_budgets([D])
    p = _oriented(src, which)
    _check_dm(p, dm)
    dmax0 = _rate_zero_distortion(p, dm.matrix)
    if D >= dmax0:
        return 0.0
    slopes = np.geomspace(*SLOPE_RANGE, N_SLOPES)
    dist, rate = _blahut_arimoto(p, dm.matrix, slopes)
    # the coarse grid leaves chords of a few 1e-3 near D; resample between the
    # slopes that bracket it
    above = np.flatnonzero(dist >= D)
    below = np.flatnonzero(dist <= D)
    if above.size and below.size:
        lo, hi = slopes[above[-1]], slopes[below[0]]
        if hi > lo:
            fine = np.geomspace(lo, hi, N_SLOPES)
            d2, r2 = _blahut_arimoto(p, dm.matrix, fine)
            dist, rate = np.concatenate([dist, d2]), np.concatenate([rate, r2])
    hd, hr = lower_convex_envelope(np.append(dist, dmax0), np.append(rate, 0.0))
    if D < hd[0]:
        # below the largest-slope point: inside roundoff of D_min, or infeasible
        dmin = float(p.sum(axis=0) @ dm.matrix.min(axis=1))
        return float(hr[0]) if D >= dmin - 1e-12 else math.inf
    return _envelope_at(hd, hr, D)


# ---------------------------------------------------------------------------
# Wyner-Ziv


def wz_structure(src: JointSource, dm: DistortionMeasure, which: int, budget: float = math.inf):
    """Engine form: encoder sees only the target; minimize I(T;U|S) = I(T;U) - I(S;U)."""
    _check_cd(src)
    side = 1 - which
    return _engine.build_structure(
        src.alphabet_sizes,
        src.flat,
        (which,),
        [((which,), (side,))],
        [(which, (side,), dm.matrix, budget)],
    )


@lru_cache(maxsize=256)
def _wz_cached(sizes, pmf_bytes, dm_bytes, dm_shape, which, D, restarts, seed):
    pmf = np.frombuffer(pmf_bytes).reshape(sizes)
    dm = DistortionMeasure(np.frombuffer(dm_bytes).reshape(dm_shape))
    src = JointSource(sizes, pmf)
    p = _oriented(src, which)
    dmin = float(p.sum(axis=0) @ dm.matrix.min(axis=1))
    dmax0 = _rate_zero_distortion(p, dm.matrix)
    grid = np.linspace(dmin, dmax0, WZ_GRID)
    if dmin <= D <= dmax0:
        grid = np.append(grid, D)
    st = wz_structure(src, dm, which)
    nx = sizes[which]
    K = nx + 1
    rng = np.random.default_rng(seed)
    # every grid budget gets the one-hot and constant starts plus random ones
    onehot = np.eye(nx, K)
    const = np.zeros((nx, K))
    const[:, 0] = 1.0
    per = max(restarts, 2)
    W0, fixed, budgets = [], [], []
    for b in grid:
        for r in range(per):
            if r == 0:
                W0.append(onehot)
            elif r == 1:
                W0.append(const)
            else:
                W0.append(rng.dirichlet(np.ones(K), size=nx))
            fixed.append(r < 2)
            budgets.append([b])
    opts = _engine.EngineOptions(restarts=len(W0), seed=seed)
    res = _engine.solve(st, K, opts, W0=np.array(W0), budgets=np.array(budgets), fixed=np.array(fixed))
    vals = res.restart_values.reshape(grid.size, per).min(axis=1)
    # the decoder-indexed convex solve is exact up to solver tolerance
    can = _engine.canonical_solve(st, opts, budgets=grid[:, None])
    if can is not None:
        vals = np.minimum(vals, can.restart_values)
    if not np.isfinite(vals).any():
        raise NonConvergence("no Wyner-Ziv grid point reached a feasible channel")
    hd, hr = lower_convex_envelope(np.append(grid, dmax0), np.append(vals, 0.0))
    return _envelope_at(hd, hr, D)


def wyner_ziv(
    src: JointSource,
    dm: DistortionMeasure,
    D: float,
    which: int = 0,
    restarts: int = WZ_RESTARTS,
    seed: int = 0,
) -> float:
    """Upper estimate of R_WZ(target | side, D) in nats, convexified over a D grid.

    ``restarts`` counts starts per grid point. Returns ``inf`` below the
    minimum distortion.
    """
    (D,) = check_budgets([D])
    p = _oriented(src, which)
    _check_dm(p, dm)
    if D >= _rate_zero_distortion(p, dm.matrix):
        return 0.0
    if D < float(p.sum(axis=0) @ dm.matrix.min(axis=1)) - 1e-12:
        return math.inf
    return _wz_cached(
        src.alphabet_sizes,
        np.ascontiguousarray(src.pmf, dtype=float).tobytes(),
        np.ascontiguousarray(dm.matrix, dtype=float).tobytes(),
        dm.matrix.shape,
        int(which),
        float(D),
        int(restarts),
        int(seed),
    )


# ---------------------------------------------------------------------------


def sandwich_check(
    src: JointSource,
    dms,
    budgets,
    opts: OptimizerOptions | None = None,
    tol: float = SANDWICH_TOL,
) -> dict:
    """Place the optimized CD rate between the conditional and Wyner-Ziv bounds.

    ``slack_lower = rate - max R_C`` and ``slack_upper = max R_WZ - rate``;
    ``violation`` is set when either drops below ``-tol``.
    """
    opts = OptimizerOptions() if opts is None else opts
    budgets = check_budgets(budgets)
    if len(budgets) != 2:
        raise BudgetNegative("CD budgets are a pair (D_X, D_Y)")
    _check_cd(src, dms)
    rc = (conditional_rd(src, dms[0], budgets[0], 0), conditional_rd(src, dms[1], budgets[1], 1))
    wz = (
        wyner_ziv(src, dms[0], budgets[0], 0, seed=opts.seed),
        wyner_ziv(src, dms[1], budgets[1], 1, seed=opts.seed),
    )
    rate = optimize_cd_rate(src, dms, budgets, opts).rate
    lower, upper = max(rc), max(wz)
    report = {
        "budgets": list(budgets),
        "lossless": lossless_cd_rate(src),
        "conditional_rd": list(rc),
        "wyner_ziv": list(wz),
        "rate": rate,
        "lower": lower,
        "upper": upper,
        "slack_lower": rate - lower,
        "slack_upper": upper - rate,
    }
    report["violation"] = bool(report["slack_lower"] < -tol or report["slack_upper"] < -tol)
    return report
