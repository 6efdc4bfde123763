"""
Monte Carlo run of the random-binning, joint-typicality coding scheme.

A codebook of ``M_U`` i.i.d. ``P_U`` sequences is cut into ``N_U`` bins of
``L_U`` consecutive codewords. The encoder sends the bin of the first codeword
jointly typical with ``(x^n, y^n)``; each decoder looks in that bin for the
unique codeword typical with its own side sequence and applies its letterwise
rule.

Indices are 0-based: bin ``j`` holds codewords ``j*L_U .. (j+1)*L_U - 1``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .cd_rate import AuxiliaryChannel, achieved_distortions, joint_with_aux
from .exceptions import LengthMismatch, ShapeMismatch, TooLarge
from .prob_core import DecoderRule, JointSource, mutual_information

__all__ = [
    "TypicalityParams",
    "CodebookConfig",
    "Codebook",
    "SimRecord",
    "SimulationReport",
    "is_typical",
    "build_codebook",
    "encode",
    "decode",
    "reconstruct",
    "run_trials",
    "run_sweep",
    "CSV_COLUMNS",
]

MAX_N = 20
MEMORY_LETTERS = 2**28
CHUNK = 1 << 16
TYPICAL_EPS = 1e-12  # roundoff slack on the frequency test


@dataclass(frozen=True)
class TypicalityParams:
    """Tolerance ``delta`` and multipliers; ``k2``/``k3`` default to 2*k1*|X| and 2*k1*|Y|."""

    delta: float = 0.04
    k0: float = 1.0
    k1: float = 2.0
    k2: float | None = None
    k3: float | None = None

    def resolved(self, nx: int, ny: int) -> "TypicalityParams":
        p = replace(
            self,
            k2=2 * self.k1 * nx if self.k2 is None else self.k2,
            k3=2 * self.k1 * ny if self.k3 is None else self.k3,
        )
        p.check(nx, ny)
        return p

    def check(self, nx: int, ny: int):
        if self.delta <= 0 or min(self.k0, self.k1) <= 0:
            raise ShapeMismatch("delta and the multipliers must be positive")
        if not self.k0 < self.k1:
            raise ShapeMismatch(f"need k0 < k1, got k0={self.k0}, k1={self.k1}")
        if not (self.k1 * nx < self.k2 and self.k1 * ny < self.k3):
            raise ShapeMismatch("need k1*|X| < k2 and k1*|Y| < k3")


@dataclass(frozen=True)
class CodebookConfig:
    """Block length, margins and seed; ``M_U``/``L_U``/``N_U`` are filled by :meth:`derive`."""

    n: int
    gamma: float = 0.15
    m1: float = 1.0
    l1: float = 1.0
    l2: float = 1.0
    seed: int = 0
    M_U: int | None = None
    L_U: int | None = None
    N_U: int | None = None

    def derive(self, i_xyu: float, i_xu: float, i_yu: float) -> "CodebookConfig":
        """Codebook sizes from the information quantities (nats)::

            M_U >= exp(n (I(XY;U) + m1 gamma))
            L_U  = max(1, floor(exp(n (min(I(X;U), I(Y;U)) - l gamma)))),  l = max(l1, l2)
            N_U  = ceil(M_min / L_U),  M_U = N_U L_U
        """
        if self.n < 1 or self.gamma <= 0:
            raise ShapeMismatch("n must be >= 1 and gamma > 0")
        if self.n > MAX_N:
            raise TooLarge(f"block length {self.n} exceeds {MAX_N}")
        n, g = self.n, self.gamma
        log_m = n * (i_xyu + self.m1 * g)
        log_l = n * (min(i_xu, i_yu) - max(self.l1, self.l2) * g)
        if log_m + math.log(n) > math.log(MEMORY_LETTERS):
            raise TooLarge(f"codebook of e^{log_m:.1f} words of length {n} exceeds the memory cap")
        m_min = math.ceil(math.exp(log_m))
        L = max(1, math.floor(math.exp(log_l))) if log_l > 0 else 1
        L = min(L, m_min)
        N = math.ceil(m_min / L)
        if N * L * n > MEMORY_LETTERS:
            raise TooLarge(f"M_U*n = {N * L * n} exceeds {MEMORY_LETTERS}")
        return replace(self, M_U=N * L, L_U=L, N_U=N)

    @property
    def rate(self) -> float:
        """(1/n) log N_U in nats."""
        return math.log(self.N_U) / self.n


@dataclass(frozen=True, eq=False)
class Codebook:
    words: np.ndarray  # (M_U, n) letters of U
    L_U: int

    @property
    def M_U(self) -> int:
        return self.words.shape[0]

    @property
    def N_U(self) -> int:
        return self.M_U // self.L_U

    def bin_of(self, i: int) -> int:
        return i // self.L_U

    def bin(self, j: int) -> np.ndarray:
        return self.words[j * self.L_U:(j + 1) * self.L_U]


def _letters(seq, shape) -> np.ndarray:
    """Row-major joint letter index of a tuple of equal-length sequences."""
    if isinstance(seq, np.ndarray) and seq.ndim == 1:
        seq = (seq,)
    seq = [np.asarray(s, dtype=np.int64) for s in seq]
    if len(seq) != len(shape):
        raise ShapeMismatch(f"{len(seq)} sequences for a {len(shape)}-way reference pmf")
    lengths = {s.shape[-1] for s in seq}
    if len(lengths) != 1:
        raise LengthMismatch(f"sequence lengths differ: {sorted(lengths)}")
    return np.ravel_multi_index(tuple(np.broadcast_arrays(*seq)), shape)


def _typical_rows(idx: np.ndarray, ref_flat: np.ndarray, tol: float) -> np.ndarray:
    """Typicality of each row of an (m, n) array of joint letter indices."""
    m, n = idx.shape
    nl = ref_flat.size
    counts = np.bincount((idx + nl * np.arange(m)[:, None]).ravel(), minlength=m * nl)
    dev = np.abs(counts.reshape(m, nl) / n - ref_flat)
    return np.all(dev <= tol + TYPICAL_EPS, axis=1)


def is_typical(seq, ref, tol: float) -> bool:
    """True iff every joint letter's empirical frequency is within ``tol`` of ``ref``.

    ``seq`` is one sequence or a tuple of equal-length sequences, one per axis
    of ``ref``.
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    ref = np.asarray(ref, dtype=float)
    idx = _letters(seq, ref.shape)
    return bool(_typical_rows(idx[None], ref.reshape(-1), tol)[0])


def build_codebook(p_u, cfg: CodebookConfig) -> Codebook:
    """``M_U`` i.i.d. codewords from ``p_u``, drawn from a stream fixed by (seed, n)."""
    if cfg.M_U is None:
        raise ShapeMismatch("derive the codebook sizes first (CodebookConfig.derive)")
    if cfg.M_U * cfg.n > MEMORY_LETTERS:
        raise TooLarge(f"M_U*n = {cfg.M_U * cfg.n} exceeds {MEMORY_LETTERS}")
    if cfg.M_U != cfg.N_U * cfg.L_U:
        raise ShapeMismatch("M_U must equal N_U * L_U")
    p = np.clip(np.asarray(p_u, dtype=float), 0, None)
    p = p / p.sum()
    rng = np.random.default_rng([cfg.seed, 0, cfg.n])
    words = rng.choice(p.size, size=(cfg.M_U, cfg.n), p=p).astype(np.int8 if p.size < 128 else np.int64)
    words.flags.writeable = False
    return Codebook(words, cfg.L_U)


@dataclass(frozen=True)
class EncodeResult:
    bin: int
    index: int
    failed: bool


def encode(x, y, codebook: Codebook, p_uxy: np.ndarray, tol: float) -> EncodeResult:
    """Bin of the first codeword with (u, x, y) typical at ``tol``; on failure the bin of codeword 0."""
    p_uxy = np.asarray(p_uxy, dtype=float)
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape or x.shape[-1] != codebook.words.shape[1]:
        raise LengthMismatch("source sequences and codewords must have the same length")
    ref = p_uxy.reshape(-1)
    for start in range(0, codebook.M_U, CHUNK):
        w = codebook.words[start:start + CHUNK]
        idx = _letters((w, x[None, :], y[None, :]), p_uxy.shape)
        hit = np.flatnonzero(_typical_rows(idx, ref, tol))
        if hit.size:
            i = start + int(hit[0])
            return EncodeResult(codebook.bin_of(i), i, False)
    return EncodeResult(0, 0, True)


@dataclass(frozen=True)
class DecodeResult:
    index: int
    failed: bool
    matches: int


def decode(bin_index: int, side, codebook: Codebook, p_us: np.ndarray, tol: float) -> DecodeResult:
    """Unique codeword of the bin typical with ``side``; otherwise the first in the bin, flagged."""
    if not 0 <= bin_index < codebook.N_U:
        raise ShapeMismatch(f"bin {bin_index} outside 0..{codebook.N_U - 1}")
    side = np.asarray(side)
    if side.shape[-1] != codebook.words.shape[1]:
        raise LengthMismatch("side sequence and codewords must have the same length")
    words = codebook.bin(bin_index)
    p_us = np.asarray(p_us, dtype=float)
    idx = _letters((words, side[None, :]), p_us.shape)
    hit = np.flatnonzero(_typical_rows(idx, p_us.reshape(-1), tol))
    first = bin_index * codebook.L_U
    if hit.size == 1:
        return DecodeResult(first + int(hit[0]), False, 1)
    return DecodeResult(first, True, int(hit.size))


def reconstruct(u, side, rule: DecoderRule) -> np.ndarray:
    """Letterwise ``rule(u_k, side_k)``."""
    u = np.asarray(u, dtype=np.int64)
    side = np.asarray(side, dtype=np.int64)
    if u.shape != side.shape:
        raise LengthMismatch(f"lengths differ: {u.shape} vs {side.shape}")
    return rule(u, side)


@dataclass
class SimRecord:
    n: int
    seed: int
    M_U: int
    L_U: int
    N_U: int
    rate_nats: float
    trials: int
    p_E0c: float
    p_enc_fail: float
    p_dec1_fail: float
    p_dec2_fail: float
    p_error: float
    dist_x: float
    dist_y: float
    success_trials: int
    dist_x_success: float
    dist_y_success: float
    max_dist_x_success: float
    max_dist_y_success: float
    bound_x: float
    bound_y: float
    objective: float

    @property
    def bound_ok(self) -> bool:
        return self.max_dist_x_success <= self.bound_x and self.max_dist_y_success <= self.bound_y

    def stderr(self, p: float) -> float:
        return math.sqrt(max(p * (1 - p), 0.0) / self.trials)


@dataclass
class SimulationReport:
    records: list[SimRecord] = field(default_factory=list)
    units: str = "nats"

    def to_dict(self) -> dict:
        return {
            "units": self.units,
            "records": [{**asdict(r), "bound_ok": r.bound_ok} for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            d = asdict(r)
            w.writerow([_fmt(d[c]) for c in CSV_COLUMNS])
        return buf.getvalue()


CSV_COLUMNS = [
    "n", "M_U", "L_U", "N_U", "rate_nats", "p_E0c", "p_enc_fail", "p_dec1_fail",
    "p_dec2_fail", "dist_x", "dist_y", "trials", "seed",
]


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def _aux_joint(src: JointSource, ch: AuxiliaryChannel) -> np.ndarray:
    return joint_with_aux(src, ch).pmf  # (U, X, Y)


def run_trials(
    src: JointSource,
    ch: AuxiliaryChannel,
    decoders,
    dms,
    cfg: CodebookConfig,
    params: TypicalityParams | None = None,
    trials: int = 1000,
    budgets=None,
) -> SimulationReport:
    """Simulate ``trials`` blocks of length ``cfg.n`` with one codebook.

    Source blocks come from a stream fixed by (seed, trial), so results do not
    depend on evaluation order. ``budgets`` sets D in the per-block bound
    ``D + k1 delta dmax |U x X x Y|`` (default: the channel's own distortions).
    """
    if trials < 1:
        raise ShapeMismatch("trials must be >= 1")
    nx, ny = src.alphabet_sizes
    params = (params or TypicalityParams()).resolved(nx, ny)
    p_uxy = _aux_joint(src, ch)
    aux = JointSource(p_uxy.shape, p_uxy)
    i_xyu = mutual_information(aux, (1, 2), 0)
    i_xu = mutual_information(aux, 1, 0)
    i_yu = mutual_information(aux, 2, 0)
    if cfg.M_U is None:
        cfg = cfg.derive(i_xyu, i_xu, i_yu)
    book = build_codebook(p_uxy.sum(axis=(1, 2)), cfg)
    p_uy = p_uxy.sum(axis=1)
    p_ux = p_uxy.sum(axis=2)
    p_xy = src.pmf
    d_single = achieved_distortions(src, ch, decoders, dms)
    budgets = d_single if budgets is None else tuple(budgets)
    spread = params.k1 * params.delta * p_uxy.size
    bound = (budgets[0] + spread * dms[0].dmax, budgets[1] + spread * dms[1].dmax)

    n = cfg.n
    e0c = enc = dec1 = dec2 = err = 0
    dx_all = dy_all = 0.0
    dx_ok, dy_ok, ok = [], [], 0
    flat_p = p_xy.reshape(-1)
    for t in range(trials):
        rng = np.random.default_rng([cfg.seed, 1, n, t])
        xy = rng.choice(flat_p.size, size=n, p=flat_p)
        x, y = np.unravel_index(xy, (nx, ny))
        e0c += not is_typical((x, y), p_xy, params.k0 * params.delta)
        er = encode(x, y, book, p_uxy, params.k1 * params.delta)
        r1 = decode(er.bin, y, book, p_uy, params.k2 * params.delta)
        r2 = decode(er.bin, x, book, p_ux, params.k3 * params.delta)
        f1 = r1.failed or r1.index != er.index
        f2 = r2.failed or r2.index != er.index
        enc += er.failed
        dec1 += f1
        dec2 += f2
        x_hat = reconstruct(book.words[r1.index], y, decoders[0])
        y_hat = reconstruct(book.words[r2.index], x, decoders[1])
        dx = float(np.mean(dms[0].matrix[x, x_hat]))
        dy = float(np.mean(dms[1].matrix[y, y_hat]))
        dx_all += dx
        dy_all += dy
        if er.failed or f1 or f2:
            err += 1
        else:
            ok += 1
            dx_ok.append(dx)
            dy_ok.append(dy)
    rec = SimRecord(
        n=n, seed=cfg.seed, M_U=cfg.M_U, L_U=cfg.L_U, N_U=cfg.N_U, rate_nats=cfg.rate,
        trials=trials,
        p_E0c=e0c / trials, p_enc_fail=enc / trials, p_dec1_fail=dec1 / trials,
        p_dec2_fail=dec2 / trials, p_error=err / trials,
        dist_x=dx_all / trials, dist_y=dy_all / trials,
        success_trials=ok,
        dist_x_success=float(np.mean(dx_ok)) if ok else math.nan,
        dist_y_success=float(np.mean(dy_ok)) if ok else math.nan,
        max_dist_x_success=max(dx_ok, default=0.0),
        max_dist_y_success=max(dy_ok, default=0.0),
        bound_x=bound[0], bound_y=bound[1],
        objective=max(i_xyu - i_yu, i_xyu - i_xu),
    )
    return SimulationReport([rec])


def run_sweep(src, ch, decoders, dms, ns, base: CodebookConfig | None = None,
              params=None, trials: int = 1000, budgets=None, seeds=(0,)) -> SimulationReport:
    """:func:`run_trials` over block lengths ``ns`` and ``seeds``; rows ordered by (n, seed)."""
    base = base or CodebookConfig(n=1)
    out = SimulationReport()
    for n in ns:
        for s in seeds:
            cfg = replace(base, n=int(n), seed=int(s), M_U=None, L_U=None, N_U=None)
            out.records += run_trials(src, ch, decoders, dms, cfg, params, trials, budgets).records
    return out
