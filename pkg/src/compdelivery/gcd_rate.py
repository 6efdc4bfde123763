"""
Generalized complementary delivery: N sources, M decoders.

Decoder ``j`` knows the coordinates outside its target set ``S_j`` and must
reproduce every coordinate in ``S_j`` within its own budget. The rate is

    min over P(u|x) of  max_j I(X_{S_j}; U | X_{S_j^c})

with one posterior-optimal decoder per (j, i), i in S_j. Coordinates are
0-based throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _engine
from .cd_rate import AuxiliaryChannel, OptimizerOptions, _renormalize
from .exceptions import CoordOverlap, Infeasible, NonConvergence, ShapeMismatch, TooLarge
from .prob_core import DecoderRule, DistortionMeasure, JointSource, check_budgets

__all__ = [
    "DecoderSpec",
    "GCDProblem",
    "GCDSolution",
    "gcd_objective",
    "gcd_terms",
    "optimize_gcd_rate",
    "cd_as_gcd",
    "three_source_problem",
    "three_source_example",
    "GeneralizedCDRate",
]

MAX_PRODUCT = 64
FEAS_TOL = 1e-6


@dataclass(frozen=True)
class DecoderSpec:
    """Targets of one decoder with a distortion measure and budget per target."""

    targets: tuple[int, ...]
    distortions: tuple[DistortionMeasure, ...]
    budgets: tuple[float, ...]

    def __post_init__(self):
        t = tuple(int(i) for i in self.targets)
        if not t:
            raise ShapeMismatch("a decoder needs at least one target coordinate")
        if len(set(t)) != len(t):
            raise CoordOverlap(f"repeated target in {t}")
        if not (len(self.distortions) == len(self.budgets) == len(t)):
            raise ShapeMismatch("one distortion measure and one budget per target")
        object.__setattr__(self, "targets", t)
        object.__setattr__(self, "distortions", tuple(self.distortions))
        object.__setattr__(self, "budgets", check_budgets(self.budgets))


@dataclass(frozen=True, eq=False)
class GCDProblem:
    source: JointSource
    decoder_specs: tuple[DecoderSpec, ...]

    def __post_init__(self):
        specs = tuple(self.decoder_specs)
        if not specs:
            raise ShapeMismatch("at least one decoder is required")
        n = self.source.n_coords
        for s in specs:
            if any(i < 0 or i >= n for i in s.targets):
                raise ShapeMismatch(f"target {s.targets} outside coordinates 0..{n - 1}")
            for i, dm in zip(s.targets, s.distortions):
                if dm.n_source != self.source.alphabet_sizes[i]:
                    raise ShapeMismatch(f"distortion for coordinate {i} has the wrong row count")
        object.__setattr__(self, "decoder_specs", specs)

    def side(self, j: int) -> tuple[int, ...]:
        """Complement of decoder ``j``'s target set."""
        t = set(self.decoder_specs[j].targets)
        return tuple(i for i in range(self.source.n_coords) if i not in t)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        """(decoder, target) pairs in decoder order."""
        return [(j, i) for j, s in enumerate(self.decoder_specs) for i in s.targets]

    @property
    def default_u_size(self) -> int:
        return self.source.pmf.size + sum(len(s.targets) for s in self.decoder_specs)


@dataclass
class GCDSolution:
    rate: float
    channel: AuxiliaryChannel | None
    decoders: dict
    achieved_distortions: dict
    feasible: bool
    restarts_used: int
    seed: int = 0
    restart_rates: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def rate_bits(self) -> float:
        return self.rate / math.log(2)


def gcd_structure(problem: GCDProblem, with_decoders: bool = True) -> _engine.Structure:
    src = problem.source
    n = src.n_coords
    terms = [(s.targets, problem.side(j)) for j, s in enumerate(problem.decoder_specs)]
    decoders = []
    if with_decoders:
        for j, s in enumerate(problem.decoder_specs):
            for i, dm, b in zip(s.targets, s.distortions, s.budgets):
                decoders.append((i, problem.side(j), dm.matrix, b))
    return _engine.build_structure(src.alphabet_sizes, src.flat, tuple(range(n)), terms, decoders)


def _check_channel(problem: GCDProblem, ch: AuxiliaryChannel):
    if ch.n_rows != problem.source.pmf.size:
        raise ShapeMismatch(
            f"channel has {ch.n_rows} rows, the product alphabet has {problem.source.pmf.size}"
        )


def gcd_terms(problem: GCDProblem, ch: AuxiliaryChannel) -> np.ndarray:
    """I(X_{S_j}; U | X_{S_j^c}) for every decoder, nats."""
    _check_channel(problem, ch)
    return _engine.term_values(gcd_structure(problem, False), ch.rows[None])[0]


def gcd_objective(problem: GCDProblem, ch: AuxiliaryChannel) -> float:
    return float(gcd_terms(problem, ch).max())


def gcd_decoders(problem: GCDProblem, ch: AuxiliaryChannel) -> dict:
    """Posterior-optimal rule per (decoder, target); tables are (u, side tuple)."""
    _check_channel(problem, ch)
    tabs = _engine.optimal_tables(gcd_structure(problem), ch.rows[None])
    return {p: DecoderRule(t[0].T) for p, t in zip(problem.pairs, tabs)}


def gcd_distortions(problem: GCDProblem, ch: AuxiliaryChannel, decoders: dict) -> dict:
    _check_channel(problem, ch)
    st = gcd_structure(problem)
    tabs = [decoders[p].table.T[None] for p in problem.pairs]
    d = _engine.distortions(st, ch.rows[None], tabs)[0]
    return {p: float(v) for p, v in zip(problem.pairs, d)}


def _min_distortion(src: JointSource, i: int, dm: DistortionMeasure) -> float:
    return float(src.marginal((i,)) @ dm.matrix.min(axis=1))


def optimize_gcd_rate(problem: GCDProblem, opts: OptimizerOptions | None = None) -> GCDSolution:
    """Best feasible upper bound on the GCD rate (same scheme as the CD optimizer)."""
    opts = OptimizerOptions() if opts is None else opts
    src = problem.source
    if src.pmf.size > MAX_PRODUCT:
        raise TooLarge(f"product alphabet {src.pmf.size} exceeds {MAX_PRODUCT}")
    for j, s in enumerate(problem.decoder_specs):
        for i, dm, b in zip(s.targets, s.distortions, s.budgets):
            if b < _min_distortion(src, i, dm) - 1e-12:
                raise Infeasible(f"budget {b} for decoder {j}, target {i} is below the minimum")
    K = opts.u_size or problem.default_u_size
    st = gcd_structure(problem)
    res = _engine.solve_with_canonical(st, K, opts.engine())
    if not res.feasible:
        raise NonConvergence(f"no feasible channel after {res.restarts_used} restarts")
    ch = AuxiliaryChannel(_renormalize(res.W))
    decs = gcd_decoders(problem, ch)
    dist = gcd_distortions(problem, ch, decs)
    budgets = {p: b for p, b in zip(problem.pairs, st.budgets)}
    return GCDSolution(
        rate=max(gcd_objective(problem, ch), 0.0),
        channel=ch,
        decoders=decs,
        achieved_distortions=dist,
        feasible=all(dist[p] <= budgets[p] + FEAS_TOL for p in problem.pairs),
        restarts_used=res.restarts_used,
        seed=opts.seed,
        restart_rates=res.restart_values,
    )


def cd_as_gcd(src: JointSource, dms, budgets) -> GCDProblem:
    """The two-source problem in GCD form: decoder 0 rebuilds X from Y, decoder 1 Y from X."""
    return GCDProblem(
        src,
        (
            DecoderSpec((0,), (dms[0],), (budgets[0],)),
            DecoderSpec((1,), (dms[1],), (budgets[1],)),
        ),
    )


THREE_SOURCE_PAIRS = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]


def three_source_problem(src: JointSource, dms, budgets) -> GCDProblem:
    """Three sources, decoder ``j`` knows coordinate ``j`` and rebuilds the other two.

    ``dms`` holds one distortion measure per coordinate. ``budgets`` is either
    a mapping {(j, i): D} or a sequence ordered (0,1), (0,2), (1,0), (1,2),
    (2,0), (2,1).
    """
    if src.n_coords != 3:
        raise ShapeMismatch("the three-source example needs exactly three coordinates")
    if not isinstance(budgets, dict):
        budgets = list(budgets)
        if len(budgets) != 6:
            raise ShapeMismatch("six budgets are required")
        budgets = dict(zip(THREE_SOURCE_PAIRS, budgets))
    specs = []
    for j in range(3):
        t = tuple(i for i in range(3) if i != j)
        specs.append(DecoderSpec(t, tuple(dms[i] for i in t), tuple(budgets[(j, i)] for i in t)))
    return GCDProblem(src, tuple(specs))


def three_source_example(src: JointSource, dms, budgets, opts: OptimizerOptions | None = None) -> GCDSolution:
    """Optimize max{I(YZ;U|X), I(XZ;U|Y), I(XY;U|Z)} under the six decoder budgets."""
    return optimize_gcd_rate(three_source_problem(src, dms, budgets), opts)


class GeneralizedCDRate(BaseEstimator):
    """Estimator-style front end to :func:`optimize_gcd_rate`; ``fit`` takes a :class:`GCDProblem`."""

    def __init__(self, restarts=32, seed=0, max_outer=500, tol=1e-7, feas_tol=FEAS_TOL, u_size=None):
        self.restarts = restarts
        self.seed = seed
        self.max_outer = max_outer
        self.tol = tol
        self.feas_tol = feas_tol
        self.u_size = u_size

    def fit(self, problem: GCDProblem, y=None):
        opts = OptimizerOptions(
            restarts=self.restarts, seed=self.seed, max_outer=self.max_outer,
            tol=self.tol, feas_tol=self.feas_tol, u_size=self.u_size,
        )
        sol = optimize_gcd_rate(problem, opts)
        self.problem_ = problem
        self.solution_ = sol
        self.rate_ = sol.rate
        self.channel_ = sol.channel
        self.decoders_ = sol.decoders
        self.distortions_ = sol.achieved_distortions
        return self

    def transform(self, X):
        """Channel rows for an (n, N) array of source tuples."""
        check_is_fitted(self, "channel_")
        X = np.asarray(X, dtype=np.int64)
        sizes = self.problem_.source.alphabet_sizes
        if X.ndim != 2 or X.shape[1] != len(sizes):
            raise ShapeMismatch(f"expected an (n, {len(sizes)}) array of source tuples")
        return self.channel_.rows[np.ravel_multi_index(tuple(X.T), sizes)]

    def predict(self, U, side, pair):
        """Reconstructions of target ``pair[1]`` at decoder ``pair[0]``."""
        check_is_fitted(self, "decoders_")
        return self.decoders_[tuple(pair)](np.asarray(U), np.asarray(side))
