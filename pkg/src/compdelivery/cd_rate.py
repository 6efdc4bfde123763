"""
Lossy complementary-delivery rate for two sources.

The rate is the minimum over auxiliary channels ``P(u|x,y)`` of
``max{I(X;U|Y), I(Y;U|X)}``, subject to decoders ``phi1(u, y) -> x_hat`` and
``phi2(u, x) -> y_hat`` meeting the distortion budgets. Restricting to
posterior-optimal decoders loses nothing, so decoders are never free
variables here: they are always recomputed from the channel.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _engine
from .exceptions import Infeasible, NonConvergence, ShapeMismatch, TooLarge
from .prob_core import (
    DecoderRule,
    DistortionMeasure,
    JointSource,
    check_budgets,
    expected_distortion,
    validate_joint,
)

__all__ = [
    "AuxiliaryChannel",
    "DecoderRule",
    "CDSolution",
    "OptimizerOptions",
    "optimal_decoders",
    "cd_objective",
    "achieved_distortions",
    "smoothed_cd_objective",
    "optimize_cd_rate",
    "brute_force_cd_rate",
    "cardinality_saturation_check",
    "ComplementaryDeliveryRate",
]

ROW_TOL = 1e-12
FEAS_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class AuxiliaryChannel:
    """Conditional pmf of U given the encoder's view of the source.

    ``rows[t, u]`` with ``t`` the row-major index of the source tuple.
    """

    rows: np.ndarray

    def __post_init__(self):
        r = np.array(self.rows, dtype=float)
        if r.ndim != 2 or 0 in r.shape:
            raise ShapeMismatch(f"channel must be a non-empty 2-D array, got shape {r.shape}")
        if r.min() < 0 or np.any(np.abs(r.sum(axis=1) - 1.0) > ROW_TOL):
            raise ShapeMismatch("every channel row must be a pmf (tolerance 1e-12)")
        r.flags.writeable = False
        object.__setattr__(self, "rows", r)

    @property
    def u_size(self) -> int:
        return self.rows.shape[1]

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @classmethod
    def one_hot(cls, n_rows: int, u_size: int | None = None) -> "AuxiliaryChannel":
        """U equal to the whole source tuple (padded with unused letters)."""
        u_size = n_rows if u_size is None else u_size
        if u_size < n_rows:
            raise ShapeMismatch("a one-hot channel needs u_size >= number of source tuples")
        return cls(np.eye(n_rows, u_size))

    @classmethod
    def constant(cls, n_rows: int, u_size: int = 1) -> "AuxiliaryChannel":
        r = np.zeros((n_rows, u_size))
        r[:, 0] = 1.0
        return cls(r)

    def __eq__(self, other):
        if not isinstance(other, AuxiliaryChannel):
            return NotImplemented
        return np.array_equal(self.rows, other.rows)

    __hash__ = None


@dataclass
class OptimizerOptions(_engine.EngineOptions):
    """Multi-start optimizer settings. ``u_size=None`` means |X||Y| + 2."""

    u_size: int | None = None

    def engine(self) -> _engine.EngineOptions:
        return _engine.EngineOptions(
            **{f.name: getattr(self, f.name) for f in fields(_engine.EngineOptions)}
        )


@dataclass
class CDSolution:
    rate: float
    channel: AuxiliaryChannel | None
    decoders: tuple[DecoderRule, DecoderRule] | None
    achieved_distortions: tuple[float, float]
    feasible: bool
    restarts_used: int
    budgets: tuple[float, float] = (math.inf, math.inf)
    seed: int = 0
    restart_rates: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def rate_bits(self) -> float:
        return self.rate / math.log(2)


def _check_cd(src: JointSource, dms=None):
    if src.n_coords != 2:
        raise ShapeMismatch(f"a CD source has exactly two coordinates, got {src.n_coords}")
    if dms is not None:
        dx, dy = dms
        if dx.n_source != src.alphabet_sizes[0] or dy.n_source != src.alphabet_sizes[1]:
            raise ShapeMismatch("distortion matrices do not match the source alphabets")


def _check_channel(src: JointSource, ch: AuxiliaryChannel):
    if ch.n_rows != src.pmf.size:
        raise ShapeMismatch(
            f"channel has {ch.n_rows} rows but the source has {src.pmf.size} tuples"
        )


def cd_structure(src: JointSource, dms=None, budgets=(math.inf, math.inf)) -> _engine.Structure:
    """Engine description of the two-source problem (decoders only if ``dms`` given)."""
    _check_cd(src, dms)
    terms = [((0,), (1,)), ((1,), (0,))]
    decoders = []
    if dms is not None:
        decoders = [
            (0, (1,), dms[0].matrix, budgets[0]),
            (1, (0,), dms[1].matrix, budgets[1]),
        ]
    return _engine.build_structure(src.alphabet_sizes, src.flat, (0, 1), terms, decoders)


def optimal_decoders(src: JointSource, ch: AuxiliaryChannel, dms) -> tuple[DecoderRule, DecoderRule]:
    """Posterior-optimal decoders for a fixed channel.

    ``phi1(u, y)`` minimizes ``sum_x P(x, y, u) dm_x(x, x_hat)``; ``phi2(u, x)``
    is the mirror image. Ties and zero-probability pairs take the lowest
    reconstruction index.
    """
    _check_channel(src, ch)
    st = cd_structure(src, dms)
    t1, t2 = _engine.optimal_tables(st, ch.rows[None])
    # engine tables are (side, u); rules are indexed (u, side)
    return DecoderRule(t1[0].T), DecoderRule(t2[0].T)


def cd_objective(src: JointSource, ch: AuxiliaryChannel) -> float:
    """max{I(X;U|Y), I(Y;U|X)} in nats."""
    _check_channel(src, ch)
    st = cd_structure(src)
    return float(_engine.term_values(st, ch.rows[None]).max())


def cd_terms(src: JointSource, ch: AuxiliaryChannel) -> tuple[float, float]:
    """(I(X;U|Y), I(Y;U|X)) in nats."""
    _check_channel(src, ch)
    v = _engine.term_values(cd_structure(src), ch.rows[None])[0]
    return float(v[0]), float(v[1])


def smoothed_cd_objective(src, dms, budgets, W, tau, lam=(0.0, 0.0), rho=10.0, decoders=None):
    """Smoothed objective and its gradient with respect to the channel entries.

    ``W`` is a strictly positive (rows, |U|) array (not necessarily row
    normalized). Decoders default to the posterior-optimal ones at ``W`` and
    are held fixed, as in one inner phase of the optimizer.
    """
    budgets = check_budgets(budgets)
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != src.pmf.size or W.min() <= 0:
        raise ShapeMismatch("W must be a strictly positive (rows, |U|) array")
    st = cd_structure(src, dms, budgets)
    if decoders is None:
        tables = _engine.optimal_tables(st, W[None])
    else:
        tables = [np.asarray(d.table).T[None] for d in decoders]
    F, g = _engine.smoothed_objective(
        st, np.log(W)[None], tables, tau, np.asarray(lam, dtype=float)[None], rho
    )
    return float(F[0]), g[0]


def joint_with_aux(src: JointSource, ch: AuxiliaryChannel) -> JointSource:
    """Joint source over (U, *source coordinates) with U on axis 0."""
    _check_channel(src, ch)
    p = (src.flat[:, None] * ch.rows).T.reshape((ch.u_size,) + src.alphabet_sizes)
    return JointSource((ch.u_size,) + src.alphabet_sizes, p)


def achieved_distortions(src, ch, decoders, dms) -> tuple[float, float]:
    """(E dm_x(X, phi1(U, Y)), E dm_y(Y, phi2(U, X)))."""
    _check_cd(src, dms)
    puxy = joint_with_aux(src, ch)
    d1 = expected_distortion(puxy, decoders[0], dms[0], aux=0, target=1, side=(2,))
    d2 = expected_distortion(puxy, decoders[1], dms[1], aux=0, target=2, side=(1,))
    return d1, d2


def min_distortions(src: JointSource, dms) -> tuple[float, float]:
    """Distortions reachable when U reveals the whole source tuple."""
    px, py = src.pmf.sum(axis=1), src.pmf.sum(axis=0)
    return (
        float(px @ dms[0].matrix.min(axis=1)),
        float(py @ dms[1].matrix.min(axis=1)),
    )


def _solution_from_engine(src, dms, budgets, res, opts) -> CDSolution:
    ch = AuxiliaryChannel(_renormalize(res.W))
    decs = optimal_decoders(src, ch, dms)
    dist = achieved_distortions(src, ch, decs, dms)
    return CDSolution(
        rate=max(cd_objective(src, ch), 0.0),
        channel=ch,
        decoders=decs,
        achieved_distortions=dist,
        feasible=all(d <= b + FEAS_TOL for d, b in zip(dist, budgets)),
        restarts_used=res.restarts_used,
        budgets=budgets,
        seed=opts.seed,
        restart_rates=res.restart_values,
    )


def _renormalize(W):
    W = np.clip(np.asarray(W, dtype=float), 0.0, None)
    return W / W.sum(axis=1, keepdims=True)


def optimize_cd_rate(
    src: JointSource,
    dms,
    budgets,
    opts: OptimizerOptions | None = None,
) -> CDSolution:
    """Best feasible upper bound on the CD rate found by multi-start search.

    Raises :class:`Infeasible` if a budget is below what even full knowledge
    of both sources allows, and :class:`NonConvergence` if no restart ever
    reached a feasible channel.
    """
    opts = OptimizerOptions() if opts is None else opts
    budgets = check_budgets(budgets)
    if len(budgets) != 2:
        raise ShapeMismatch("CD budgets are a pair (D_X, D_Y)")
    _check_cd(src, dms)
    dmin = min_distortions(src, dms)
    if any(b < m - 1e-12 for b, m in zip(budgets, dmin)):
        raise Infeasible(f"budgets {budgets} are below the minimum achievable {dmin}")
    K = opts.u_size or src.pmf.size + 2
    st = cd_structure(src, dms, budgets)
    res = _engine.solve_with_canonical(st, K, opts.engine())
    if not res.feasible:
        raise NonConvergence(
            f"no feasible channel after {res.restarts_used} restarts for budgets {budgets}"
        )
    return _solution_from_engine(src, dms, budgets, res, opts)


# ---------------------------------------------------------------------------
# exhaustive oracle


def simplex_grid(k: int, q: int) -> np.ndarray:
    """All points of the k-simplex with coordinates in {0, 1/q, ..., 1}."""
    # stars and bars: k-1 bar positions among q+k-1 slots
    bars = np.array(list(itertools.combinations(range(q + k - 1), k - 1)), dtype=int).reshape(-1, k - 1)
    edges = np.hstack([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), q + k - 1)])
    return (np.diff(edges, axis=1) - 1) / q


BRUTE_CHUNK = 50_000


def brute_force_cd_rate(
    src: JointSource,
    dms,
    budgets,
    u_size: int,
    grid_q: int,
    max_evals: float = 1e8,
) -> float:
    """Minimum of the CD objective over a simplex grid of channels.

    Every row of P(u|x,y) ranges over the grid with denominator ``grid_q``;
    each candidate gets posterior-optimal decoders and is kept if it meets the
    budgets within 1e-9. Returns ``inf`` when no grid point is feasible.
    """
    budgets = check_budgets(budgets)
    _check_cd(src, dms)
    if src.alphabet_sizes != (2, 2) or u_size not in (2, 3):
        raise ShapeMismatch("the exhaustive oracle handles 2x2 sources with u_size 2 or 3")
    if (u_size == 2 and grid_q > 24) or (u_size == 3 and grid_q > 8):
        raise TooLarge(f"grid_q={grid_q} is too fine for u_size={u_size}")
    pts = simplex_grid(u_size, grid_q)
    n_rows = src.pmf.size
    total = len(pts) ** n_rows
    if total > max_evals:
        raise TooLarge(f"{total} grid channels exceed the budget of {max_evals:g}")
    st = cd_structure(src, dms, budgets)
    B = np.asarray(budgets)
    best = math.inf
    radix = len(pts) ** np.arange(n_rows - 1, -1, -1)
    for start in range(0, total, BRUTE_CHUNK):
        flat = np.arange(start, min(start + BRUTE_CHUNK, total))
        W = pts[(flat[:, None] // radix) % len(pts)]  # (chunk, rows, K)
        val, dist, _ = _engine.exact_eval(st, W)
        ok = np.all(dist <= B[None, :] + 1e-9, axis=1)
        if ok.any():
            best = min(best, float(val[ok].min()))
    return best


def cardinality_saturation_check(src, dms, budgets, opts: OptimizerOptions | None = None, extra: int = 4) -> dict:
    """Compare optima at |U| = |X||Y| + 2 and |X||Y| + 2 + ``extra``, same seed."""
    opts = OptimizerOptions() if opts is None else opts
    if max(src.alphabet_sizes) > 3:
        raise TooLarge("saturation check is meant for alphabets of size <= 3")
    k0 = src.pmf.size + 2
    small = optimize_cd_rate(src, dms, budgets, replace(opts, u_size=k0))
    large = optimize_cd_rate(src, dms, budgets, replace(opts, u_size=k0 + extra))
    return {
        "u_size_bound": k0,
        "u_size_large": k0 + extra,
        "rate_bound": small.rate,
        "rate_large": large.rate,
        "difference": small.rate - large.rate,
        "seed": opts.seed,
    }


# ---------------------------------------------------------------------------
# estimator interface


class ComplementaryDeliveryRate(BaseEstimator):
    """Estimator-style front end to :func:`optimize_cd_rate`.

    Parameters mirror :class:`OptimizerOptions`; ``fit`` takes the joint pmf
    (or a :class:`JointSource`), the two distortion matrices and the budget
    pair.

    Attributes
    ----------
    rate_ : float
        Best rate found, nats per source letter.
    channel_ : AuxiliaryChannel
    decoders_ : tuple of DecoderRule
    distortions_ : tuple of float
    restarts_used_ : int
    """

    def __init__(self, restarts=32, seed=0, max_outer=500, tol=1e-7, feas_tol=FEAS_TOL, u_size=None):
        self.restarts = restarts
        self.seed = seed
        self.max_outer = max_outer
        self.tol = tol
        self.feas_tol = feas_tol
        self.u_size = u_size

    def _options(self) -> OptimizerOptions:
        return OptimizerOptions(
            restarts=self.restarts,
            seed=self.seed,
            max_outer=self.max_outer,
            tol=self.tol,
            feas_tol=self.feas_tol,
            u_size=self.u_size,
        )

    def fit(self, source, distortions, budgets):
        if not isinstance(source, JointSource):
            pmf = np.asarray(source, dtype=float)
            source = validate_joint(pmf, pmf.shape)
        dms = tuple(d if isinstance(d, DistortionMeasure) else DistortionMeasure(d) for d in distortions)
        sol = optimize_cd_rate(source, dms, budgets, self._options())
        self.source_ = source
        self.solution_ = sol
        self.rate_ = sol.rate
        self.channel_ = sol.channel
        self.decoders_ = sol.decoders
        self.distortions_ = sol.achieved_distortions
        self.restarts_used_ = sol.restarts_used
        return self

    def transform(self, X):
        """Rows of P(u | x, y) for an (n, 2) array of letter pairs."""
        check_is_fitted(self, "channel_")
        X = np.asarray(X, dtype=np.int64)
        if X.ndim != 2 or X.shape[1] != 2:
            raise ShapeMismatch("expected an (n, 2) array of (x, y) letters")
        rows = np.ravel_multi_index((X[:, 0], X[:, 1]), self.source_.alphabet_sizes)
        return self.channel_.rows[rows]

    def predict(self, U, side, which: int = 0):
        """Reconstructions from decoder ``which`` (0: X from (u, y), 1: Y from (u, x))."""
        check_is_fitted(self, "decoders_")
        return self.decoders_[which](np.asarray(U), np.asarray(side))
