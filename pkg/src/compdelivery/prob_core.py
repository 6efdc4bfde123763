"""
Finite-alphabet probability and information measures.

All information quantities are in nats. Probability tables are dense numpy
arrays with one axis per source coordinate; zero-probability letters stay in
the support and contribute nothing (``0 log 0 = 0``).

Coordinates are addressed by 0-based axis index, and a group of coordinates
is any iterable of indices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import (
    BudgetNegative,
    CoordOverlap,
    NegativeMass,
    NotNormalized,
    ShapeMismatch,
)

NEG_TOL = 1e-15
NORM_TOL = 1e-9
IDENTITY_TOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class JointSource:
    """Joint pmf over a product of finite alphabets.

    Use :func:`validate_joint` to build one from raw input; the constructor
    trusts its arguments.
    """

    alphabet_sizes: tuple[int, ...]
    pmf: np.ndarray

    @property
    def n_coords(self) -> int:
        return len(self.alphabet_sizes)

    @property
    def flat(self) -> np.ndarray:
        return self.pmf.reshape(-1)

    def marginal(self, coords: Iterable[int]) -> np.ndarray:
        """Marginal table over ``coords``, axes in the order given."""
        coords = _as_coords(coords, self.n_coords)
        drop = tuple(i for i in range(self.n_coords) if i not in coords)
        m = self.pmf.sum(axis=drop) if drop else self.pmf
        kept = [i for i in range(self.n_coords) if i in coords]
        return np.transpose(m, [kept.index(c) for c in coords]) if coords else np.asarray(m)

    def transpose(self, order: Sequence[int]) -> "JointSource":
        order = tuple(order)
        return JointSource(
            tuple(self.alphabet_sizes[i] for i in order),
            _readonly(np.transpose(self.pmf, order)),
        )

    def __eq__(self, other):
        if not isinstance(other, JointSource):
            return NotImplemented
        return self.alphabet_sizes == other.alphabet_sizes and np.array_equal(
            self.pmf, other.pmf
        )

    __hash__ = None


def validate_joint(pmf, sizes: Sequence[int]) -> JointSource:
    """Check a raw pmf against the declared alphabet sizes.

    ``pmf`` may be flat (row-major over the product alphabet) or already
    shaped. Nothing is renormalized: tiny negative roundoff (above -1e-15)
    is clipped to zero, anything else raises.
    """
    sizes = tuple(int(s) for s in sizes)
    if not sizes or any(s < 1 for s in sizes):
        raise ShapeMismatch(f"alphabet sizes must be positive, got {sizes}")
    a = np.asarray(pmf, dtype=float)
    if a.size != int(np.prod(sizes)):
        raise ShapeMismatch(
            f"pmf has {a.size} entries but the product alphabet has {int(np.prod(sizes))}"
        )
    if a.ndim != 1 and a.shape != sizes:
        raise ShapeMismatch(f"pmf shape {a.shape} does not match sizes {sizes}")
    if not np.all(np.isfinite(a)):
        raise NotNormalized("pmf contains non-finite entries")
    if a.min() < -NEG_TOL:
        raise NegativeMass(f"pmf has a negative entry {a.min():.3g}")
    total = a.sum()
    if abs(total - 1.0) > NORM_TOL:
        raise NotNormalized(f"pmf sums to {float(total)!r}, not 1")
    return JointSource(sizes, _readonly(np.clip(a, 0.0, None).reshape(sizes)))


@dataclass(frozen=True, eq=False)
class DistortionMeasure:
    """Single-letter distortion, rows = source letters, columns = reconstructions."""

    matrix: np.ndarray = field()

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or 0 in m.shape:
            raise ShapeMismatch(f"distortion matrix must be 2-D and non-empty, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ShapeMismatch("distortion matrix has non-finite entries")
        if m.min() < 0:
            raise NegativeMass("distortion matrix has negative entries")
        object.__setattr__(self, "matrix", _readonly(m))

    @property
    def dmax(self) -> float:
        return float(self.matrix.max())

    @property
    def n_source(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_recon(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def hamming(cls, n: int, n_recon: int | None = None) -> "DistortionMeasure":
        n_recon = n if n_recon is None else n_recon
        return cls(1.0 - np.eye(n, n_recon))

    def __eq__(self, other):
        if not isinstance(other, DistortionMeasure):
            return NotImplemented
        return np.array_equal(self.matrix, other.matrix)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class DecoderRule:
    """Deterministic map (u, side tuple) -> reconstruction letter.

    ``table[u, s]`` holds the reconstruction index, where ``s`` is the
    row-major index of the side-information tuple.
    """

    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table)
        if t.ndim != 2:
            raise ShapeMismatch("decoder table must be 2-D (u, side)")
        t = np.array(t, dtype=np.int64)
        t.flags.writeable = False
        object.__setattr__(self, "table", t)

    @property
    def u_size(self) -> int:
        return self.table.shape[0]

    @property
    def n_side(self) -> int:
        return self.table.shape[1]

    def __call__(self, u, side):
        return self.table[u, side]

    def __eq__(self, other):
        if not isinstance(other, DecoderRule):
            return NotImplemented
        return np.array_equal(self.table, other.table)

    __hash__ = None


def check_budgets(budgets: Iterable[float]) -> tuple[float, ...]:
    """Validate a distortion budget vector (every entry finite-or-inf and >= 0)."""
    out = tuple(float(b) for b in budgets)
    for b in out:
        if np.isnan(b) or b < 0:
            raise BudgetNegative(f"distortion budgets must be >= 0, got {out}")
    return out


def _as_coords(coords, n: int) -> tuple[int, ...]:
    if isinstance(coords, (int, np.integer)):
        coords = (coords,)
    c = tuple(int(i) for i in coords)
    if any(i < 0 or i >= n for i in c):
        raise ShapeMismatch(f"coordinate out of range in {c} for {n} coordinates")
    if len(set(c)) != len(c):
        raise CoordOverlap(f"repeated coordinate in {c}")
    return c


def entropy_pmf(p) -> float:
    """Shannon entropy of an arbitrary-shape pmf table, in nats."""
    p = np.asarray(p, dtype=float).reshape(-1)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def joint_entropy(src: JointSource, coords) -> float:
    coords = _as_coords(coords, src.n_coords)
    if not coords:
        return 0.0
    return entropy_pmf(src.marginal(coords))


def conditional_entropy(src: JointSource, target, given=()) -> float:
    """H(target | given) in nats."""
    t = _as_coords(target, src.n_coords)
    g = _as_coords(given, src.n_coords)
    if set(t) & set(g):
        raise CoordOverlap(f"target {t} and given {g} overlap")
    h = joint_entropy(src, t + g) - joint_entropy(src, g)
    return max(h, 0.0)


def conditional_mutual_information(src: JointSource, a=0, b=1, c=2) -> float:
    """I(A; B | C) in nats, clamped at zero.

    The default groups treat a three-coordinate source as (A, B, C). Pass
    ``c=()`` for plain mutual information.
    """
    a = _as_coords(a, src.n_coords)
    b = _as_coords(b, src.n_coords)
    c = _as_coords(c, src.n_coords)
    if set(a) & set(b) or set(a) & set(c) or set(b) & set(c):
        raise CoordOverlap(f"coordinate groups {a}, {b}, {c} overlap")
    val = (
        joint_entropy(src, a + c)
        + joint_entropy(src, b + c)
        - joint_entropy(src, a + b + c)
        - joint_entropy(src, c)
    )
    return max(val, 0.0)


def mutual_information(src: JointSource, a=0, b=1) -> float:
    return conditional_mutual_information(src, a, b, ())


def expected_distortion(
    src: JointSource,
    rule: DecoderRule,
    dm: DistortionMeasure,
    aux: int = 0,
    target: int = 1,
    side=(2,),
) -> float:
    """Average distortion E[dm(S, rule(U, side))] under the joint ``src``.

    ``src`` must contain the auxiliary coordinate ``aux``, the reproduced
    coordinate ``target`` and the side-information coordinates ``side``
    (any other coordinates are marginalized out).
    """
    side = _as_coords(side, src.n_coords)
    coords = _as_coords((aux, target) + side, src.n_coords)
    p = src.marginal(coords)
    nu, ns = p.shape[0], p.shape[1]
    nside = int(np.prod(p.shape[2:])) if side else 1
    p = p.reshape(nu, ns, nside)
    if rule.table.shape != (nu, nside):
        raise ShapeMismatch(
            f"decoder table shape {rule.table.shape} != (|U|, |side|) = {(nu, nside)}"
        )
    if dm.n_source != ns or rule.table.max(initial=0) >= dm.n_recon:
        raise ShapeMismatch("distortion measure does not match source/reconstruction alphabets")
    # d[u, s, v] = dm(s, rule(u, v))
    d = dm.matrix[:, rule.table].transpose(1, 0, 2)
    return float(np.sum(p * d))
