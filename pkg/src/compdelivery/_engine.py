"""
Batched alternating minimization over auxiliary channels.

A problem instance is a joint source over ``T`` tuples, an encoder that sees
some of the coordinates (channel rows are indexed by the encoder's view), a
list of conditional mutual information terms ``I(X_A; U | X_C)`` whose
maximum is minimized, and a list of decoders ``(target, side, distortion,
budget)``. Every restart is one slice of a ``(R, rows, K)`` array so all
restarts advance together.

For fixed decoders each term is convex in the channel and each distortion is
linear, so the inner problem is convex; the decoder update is the only
nonconvex step. The inner solver minimizes a log-sum-exp smoothed maximum plus
augmented-Lagrangian penalties by mirror descent, with a relative-smoothness
backtracking test.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

LOG_FLOOR = -60.0
TIE_RTOL = 1e-10
LAM_MAX = 1e6


def _one_hot(index: np.ndarray, n: int) -> np.ndarray:
    m = np.zeros((n, index.size))
    m[index, np.arange(index.size)] = 1.0
    return m


def tuple_index(sizes: Sequence[int], coords: Sequence[int]) -> tuple[np.ndarray, int]:
    """Row-major index of the sub-tuple on ``coords`` for every full tuple."""
    grids = np.indices(sizes).reshape(len(sizes), -1)
    idx = np.zeros(grids.shape[1], dtype=np.int64)
    n = 1
    for c in coords:
        idx = idx * sizes[c] + grids[c]
        n *= sizes[c]
    return idx, n


@dataclass
class Term:
    given: tuple[int, ...]
    c_idx: np.ndarray
    G: np.ndarray
    pc: np.ndarray
    ac_idx: np.ndarray = None
    n_ac: int = 0


@dataclass
class Decoder:
    target: int
    side: tuple[int, ...]
    dm: np.ndarray
    budget: float
    side_idx: np.ndarray
    n_side: int
    tgt_idx: np.ndarray
    Gsx: np.ndarray  # one-hot over (side, target letter) pairs


@dataclass
class Structure:
    sizes: tuple[int, ...]
    pt: np.ndarray
    enc: np.ndarray
    n_rows: int
    pe: np.ndarray
    H: np.ndarray
    terms: list[Term]
    decoders: list[Decoder]
    encoder_coords: tuple[int, ...] = ()

    @property
    def budgets(self) -> np.ndarray:
        return np.array([d.budget for d in self.decoders], dtype=float)


def build_structure(sizes, pmf, encoder_coords, terms, decoders) -> Structure:
    """``terms``: list of (target coords, given coords);
    ``decoders``: list of (target coord, side coords, distortion matrix, budget)."""
    sizes = tuple(int(s) for s in sizes)
    pt = np.asarray(pmf, dtype=float).reshape(-1)
    enc, n_rows = tuple_index(sizes, encoder_coords)
    H = _one_hot(enc, n_rows)
    pe = H @ pt
    tt = []
    for a, c in terms:
        if not set(encoder_coords) <= set(a) | set(c):
            raise ValueError("encoder coordinates must lie inside every term's (target, given) set")
        c_idx, n_c = tuple_index(sizes, c)
        ac_idx, n_ac = tuple_index(sizes, tuple(a) + tuple(c))
        G = _one_hot(c_idx, n_c)
        tt.append(Term(tuple(c), c_idx, G, G @ pt, ac_idx, n_ac))
    dd = []
    for target, side, dm, budget in decoders:
        side_idx, n_side = tuple_index(sizes, side)
        tgt_idx, n_src = tuple_index(sizes, (target,))
        dm = np.asarray(dm, dtype=float)
        Gsx = _one_hot(side_idx * n_src + tgt_idx, n_side * n_src)
        dd.append(Decoder(target, tuple(side), dm, float(budget), side_idx, n_side, tgt_idx, Gsx))
    return Structure(sizes, pt, enc, n_rows, pe, H, tt, dd, tuple(encoder_coords))


# ---------------------------------------------------------------------------
# evaluation


def joint(st: Structure, W: np.ndarray) -> np.ndarray:
    """P(t, u) for every restart, shape (R, T, K)."""
    return st.pt[None, :, None] * W[:, st.enc, :]


def term_values(st: Structure, W: np.ndarray, J=None) -> np.ndarray:
    """Exact conditional mutual informations, shape (R, M)."""
    J = joint(st, W) if J is None else J
    out = np.empty((W.shape[0], len(st.terms)))
    Wt = W[:, st.enc, :]
    for m, term in enumerate(st.terms):
        Q = np.einsum("ct,rtk->rck", term.G, J)
        Qt = Q[:, term.c_idx, :] / np.where(term.pc > 0, term.pc, 1.0)[term.c_idx][None, :, None]
        pos = J > 0
        ratio = np.ones_like(J)
        ratio[pos] = Wt[pos] / Qt[pos]
        out[:, m] = np.sum(J * np.log(ratio), axis=(1, 2))
    return np.maximum(out, 0.0)


def term_values_and_grads(st: Structure, logW: np.ndarray):
    """Term values (R, M) and raw gradients (R, M, rows, K) at a strictly positive channel."""
    W = np.exp(logW)
    J = joint(st, W)
    logWt = logW[:, st.enc, :]
    R, rows, K = W.shape
    vals = np.empty((R, len(st.terms)))
    grads = np.empty((R, len(st.terms), rows, K))
    for m, term in enumerate(st.terms):
        Q = np.einsum("ct,rtk->rck", term.G, J)
        logQ = np.log(np.maximum(Q, 1e-300)) - np.log(np.where(term.pc > 0, term.pc, 1.0))[None, :, None]
        diff = logWt - logQ[:, term.c_idx, :]
        vals[:, m] = np.sum(J * diff, axis=(1, 2))
        grads[:, m] = np.einsum("et,rtk->rek", st.H, st.pt[None, :, None] * diff)
    return vals, grads, W


def decoder_costs(st: Structure, dec: Decoder, table: np.ndarray) -> np.ndarray:
    """Per-(restart, tuple, u) distortion Δ(target letter, table[u, side]), shape (R, T, K)."""
    # table: (R, n_side, K)
    rec = table[:, dec.side_idx, :]
    return dec.dm[dec.tgt_idx[None, :, None], rec]


def distortions(st: Structure, W: np.ndarray, tables) -> np.ndarray:
    J = joint(st, W)
    return np.stack(
        [np.sum(J * decoder_costs(st, d, t), axis=(1, 2)) for d, t in zip(st.decoders, tables)],
        axis=1,
    ) if st.decoders else np.zeros((W.shape[0], 0))


def distortion_grads(st: Structure, tables) -> np.ndarray:
    """Raw gradients of each distortion w.r.t. the channel, shape (R, D, rows, K)."""
    return np.stack(
        [
            np.einsum("et,rtk->rek", st.H, st.pt[None, :, None] * decoder_costs(st, d, t))
            for d, t in zip(st.decoders, tables)
        ],
        axis=1,
    )


def optimal_tables(st: Structure, W: np.ndarray) -> list[np.ndarray]:
    """Posterior-optimal decoder tables, each (R, n_side, K).

    Ties (within a relative 1e-10) and zero-probability (u, side) pairs go to
    the lowest reconstruction index.
    """
    J = joint(st, W)
    R, _, K = J.shape
    out = []
    for d in st.decoders:
        n_src, n_rec = d.dm.shape
        A = np.einsum("pt,rtk->rpk", d.Gsx, J).reshape(R, d.n_side, n_src, K)
        score = np.einsum("rsxk,xh->rskh", A, d.dm)
        mass = A.sum(axis=2)
        best = score.min(axis=-1, keepdims=True)
        tol = TIE_RTOL * (mass[..., None] * max(d.dm.max(), 1.0)) + 1e-300
        out.append(np.argmax(score <= best + tol, axis=-1))
    return out


# ---------------------------------------------------------------------------
# smoothed augmented Lagrangian


def smooth_max(vals: np.ndarray, tau: float):
    """τ·logsumexp(vals/τ) over the last axis and its softmax weights."""
    z = vals / tau
    lse = logsumexp(z, axis=-1)
    return tau * lse, np.exp(z - lse[..., None])


def excess(dist: np.ndarray, budgets: np.ndarray) -> np.ndarray:
    """dist - budget, with -inf for unconstrained (infinite) budgets."""
    finite = np.isfinite(budgets)
    return np.where(finite, dist - np.where(finite, budgets, 0.0), -np.inf)


def penalty(dist, budgets, lam, rho):
    """Augmented-Lagrangian inequality penalty and the effective multipliers.

    ``rho`` is a scalar or one value per restart.
    """
    g = excess(dist, budgets)
    rho = np.asarray(rho, dtype=float)
    rho = rho[..., None] if rho.ndim else rho
    act = np.maximum(0.0, lam + rho * g)
    return np.sum((act**2 - lam**2) / (2 * rho), axis=-1), act


def smoothed_objective(st, logW, tables, tau, lam, rho, budgets=None):
    """Value and raw gradient of the smoothed objective for fixed decoder tables.

    ``budgets`` defaults to the structure's budgets; pass an (R, D) array to
    give every restart its own.
    """
    vals, tgrads, W = term_values_and_grads(st, logW)
    F, alpha = smooth_max(vals, tau)
    grad = np.einsum("rm,rmek->rek", alpha, tgrads)
    if st.decoders:
        budgets = st.budgets if budgets is None else budgets
        dist = distortions(st, W, tables)
        pen, act = penalty(dist, budgets, lam, rho)
        grad = grad + np.einsum("rd,rdek->rek", act, distortion_grads(st, tables))
        F = F + pen
    return F, grad


# ---------------------------------------------------------------------------
# driver


@dataclass
class EngineOptions:
    restarts: int = 32
    seed: int = 0
    max_outer: int = 500
    inner_steps: int = 10
    tol: float = 1e-7
    feas_tol: float = 1e-6
    tau_start: float = 1.0
    tau_min: float = 1e-3
    tau_decay: float = 0.9
    rho: float = 10.0
    rho_max: float = 100.0
    step_max: float = 1.0
    start_mix: float = 1e-2
    polish_rounds: int = 40
    hold_rounds: int = 20
    patience: int = 30
    stall_tol: float = 1e-5


@dataclass
class EngineResult:
    """Best feasible point per restart; ``value`` etc. describe the overall best."""

    value: float
    W: np.ndarray | None
    tables: list[np.ndarray] | None
    dist: np.ndarray | None
    feasible: bool
    restarts_used: int
    restart_values: np.ndarray
    restart_W: list
    restart_tables: list
    restart_dist: list
    outer_rounds: int = 0
    restart_rounds: np.ndarray | None = None


def initial_channels(st: Structure, K: int, restarts: int, rng: np.random.Generator) -> np.ndarray:
    """Deterministic starts first (one-hot on the encoder view, constant U),
    then Dirichlet(1) rows."""
    rows = st.n_rows
    W = np.empty((restarts, rows, K))
    onehot = np.zeros((rows, K))
    onehot[np.arange(rows), np.arange(rows) % K] = 1.0
    const = np.zeros((rows, K))
    const[:, 0] = 1.0
    starts = [onehot, const]
    for r in range(restarts):
        W[r] = starts[r] if r < len(starts) else rng.dirichlet(np.ones(K), size=rows)
    return W


def initial_tables(st: Structure, W: np.ndarray, K: int, rng, fixed=None):
    """Decoder tables for the first inner solves.

    The deterministic starts use posterior-optimal tables. Random starts get
    random tables: with a nearly uninformative channel every letter of U has
    the same posterior, so optimal tables would coincide across U and the
    fixed-decoder distortion gradient would carry no direction.
    """
    tables = optimal_tables(st, W)
    R = W.shape[0]
    if fixed is None:
        fixed = np.arange(R) < 2
    rand = np.flatnonzero(~np.asarray(fixed, dtype=bool))
    for t, d in zip(tables, st.decoders):
        if rand.size:
            t[rand] = rng.integers(0, d.dm.shape[1], size=(rand.size, d.n_side, K))
    return tables


def exact_eval(st, W):
    """Exact max-term value, distortions and optimal tables for each restart."""
    tables = optimal_tables(st, W)
    vals = term_values(st, W)
    dist = distortions(st, W, tables)
    return (vals.max(axis=1) if vals.size else np.zeros(W.shape[0])), dist, tables


class _Best:
    def __init__(self, st, budgets, feas_tol):
        R = budgets.shape[0]
        self.st = st
        self.budgets = budgets
        self.feas_tol = feas_tol
        self.value = np.full(R, np.inf)
        self.W = [None] * R
        self.tables = [None] * R
        self.dist = [None] * R

    def offer(self, idx, W):
        val, dist, tables = exact_eval(self.st, W)
        ok = np.all(dist <= self.budgets[idx] + self.feas_tol, axis=1)
        for j in np.flatnonzero(ok & (val < self.value[idx])):
            r = idx[j]
            self.value[r] = val[j]
            self.W[r] = W[j].copy()
            self.tables[r] = [t[j].copy() for t in tables]
            self.dist[r] = dist[j].copy()
        return val, dist, tables


def _mirror_steps(st, logW, tables, tau, lam, rho, budgets, step, n_steps, opts):
    """Backtracking mirror descent on each row simplex, preconditioned by P(row).

    A step is accepted when the relative-smoothness bound
    F(W+) <= F(W) + <grad, W+ - W> + KL_P(W+ || W) / step holds.
    """
    pe = np.where(st.pe > 0, st.pe, 1.0)[None, :, None]
    live = (st.pe > 0)[None, :, None]
    F, grad = smoothed_objective(st, logW, tables, tau, lam, rho, budgets)
    for _ in range(n_steps):
        accepted = np.zeros(logW.shape[0], dtype=bool)
        new_logW = logW.copy()
        for _ in range(30):
            todo = np.flatnonzero(~accepted)
            if not todo.size:
                break
            cand = logW[todo] - np.where(live, step[todo, None, None] * grad[todo] / pe, 0.0)
            cand = cand - logsumexp(cand, axis=2, keepdims=True)
            cand = np.maximum(cand, LOG_FLOOR)
            cand = cand - logsumexp(cand, axis=2, keepdims=True)
            Fc, _ = smoothed_objective(
                st, cand, [t[todo] for t in tables], tau, lam[todo], rho[todo], budgets[todo]
            )
            Wc = np.exp(cand)
            lin = np.sum(grad[todo] * (Wc - np.exp(logW[todo])), axis=(1, 2))
            kl = np.sum(st.pe[None, :, None] * Wc * (cand - logW[todo]), axis=(1, 2))
            slack = 1e-13 * np.maximum(1.0, np.abs(F[todo]))
            ok = Fc <= F[todo] + lin + kl / step[todo] + slack
            new_logW[todo[ok]] = cand[ok]
            accepted[todo[ok]] = True
            step[todo[~ok]] = np.maximum(step[todo[~ok]] * 0.5, 1e-12)
        step[accepted] = np.minimum(step[accepted] * 1.5, opts.step_max)
        logW = new_logW
        F, grad = smoothed_objective(st, logW, tables, tau, lam, rho, budgets)
    return logW, F, step


def solve(
    st: Structure,
    K: int,
    opts: EngineOptions,
    W0: np.ndarray | None = None,
    budgets: np.ndarray | None = None,
    fixed: np.ndarray | None = None,
    tables0: list[np.ndarray] | None = None,
    freeze: bool = False,
) -> EngineResult:
    """Multi-start alternating minimization.

    ``budgets`` may give each restart its own budget vector, shape (R, D);
    ``W0`` replaces the default starting channels. ``fixed`` marks the starts
    that keep posterior-optimal initial tables (default: the first two
    without ``W0``, all of them with it); the rest get random tables.
    ``tables0`` overrides the initial tables and ``freeze`` keeps them for
    the whole run, which makes every restart a convex problem.
    """
    rng = np.random.default_rng(opts.seed)
    W = initial_channels(st, K, opts.restarts, rng) if W0 is None else np.array(W0, dtype=float)
    R = W.shape[0]
    ndec = len(st.decoders)
    B = np.broadcast_to(st.budgets if budgets is None else np.asarray(budgets, float), (R, ndec)).copy()
    best = _Best(st, B, opts.feas_tol)
    best.offer(np.arange(R), W)

    mix = opts.start_mix
    logW = np.log((1 - mix) * W + mix / K)
    lam = np.zeros((R, ndec))
    rho = np.full(R, opts.rho)
    step = np.full(R, opts.step_max)
    prev = np.full(R, np.inf)
    prev_viol = np.full(R, np.inf)
    quiet = np.zeros(R, dtype=int)
    stale = np.zeros(R, dtype=int)
    stale_ref = best.value.copy()
    active = np.ones(R, dtype=bool)
    stopped = np.full(R, opts.max_outer)
    if fixed is None and W0 is not None:
        fixed = np.ones(R, dtype=bool)
    if tables0 is None:
        tables = initial_tables(st, np.exp(logW), K, rng, fixed)
    else:
        tables = [np.broadcast_to(t, (R,) + t.shape[-2:]).copy() for t in tables0]
    hold = opts.max_outer if freeze else opts.hold_rounds
    tau = opts.tau_start
    rounds = 0

    for rounds in range(1, opts.max_outer + 1):
        a = np.flatnonzero(active)
        tab_a = [t[a] for t in tables]
        logW[a], _, step[a] = _mirror_steps(
            st, logW[a], tab_a, tau, lam[a], rho[a], B[a], step[a], opts.inner_steps, opts
        )
        Wa = np.exp(logW[a])
        val, _, opt_tab = best.offer(a, Wa)
        if ndec:
            g = excess(distortions(st, Wa, tab_a), B[a])
            lam[a] = np.clip(lam[a] + rho[a, None] * g, 0.0, LAM_MAX)
            viol = np.max(np.maximum(g, 0.0), axis=1)
            grow = a[(viol > 0.25 * prev_viol[a]) & (viol > opts.feas_tol)]
            rho[grow] = np.minimum(rho[grow] * 2.0, opts.rho_max)
            prev_viol[a] = viol
        if rounds > hold:
            for t, ot in zip(tables, opt_tab):
                t[a] = ot
        at_floor = tau <= opts.tau_min
        tau = max(opts.tau_min, tau * opts.tau_decay)

        # converged: exact objective change below tol for 3 rounds, or no
        # stall_tol improvement of the best feasible value for `patience` rounds
        quiet[a] = np.where(np.abs(val - prev[a]) < opts.tol, quiet[a] + 1, 0)
        prev[a] = val
        improved = best.value[a] < stale_ref[a] - opts.stall_tol
        stale_ref[a] = np.where(improved, best.value[a], stale_ref[a])
        # frozen-table runs only start the stall clock once feasible
        waiting = freeze & ~np.isfinite(best.value[a])
        stale[a] = np.where(improved | waiting, 0, stale[a] + 1)
        if at_floor and (freeze or rounds > hold):
            done = a[(quiet[a] >= 3) | (stale[a] >= opts.patience)]
            active[done] = False
            stopped[done] = rounds
        if not active.any():
            break

    # push still-infeasible restarts onto the feasible side
    if ndec:
        for _ in range(opts.polish_rounds):
            _, dist, opt_tab = exact_eval(st, np.exp(logW))
            if freeze:
                dist = distortions(st, np.exp(logW), tables)
            else:
                tables = opt_tab
            g = excess(dist, B)
            bad = np.flatnonzero(np.any(g > opts.feas_tol, axis=1))
            if not bad.size:
                break
            gb = g[bad]
            bumped = np.maximum(2.0 * lam[bad], lam[bad] + rho[bad, None] * gb) + 1.0
            lam[bad] = np.where(gb > 0, np.minimum(bumped, LAM_MAX), lam[bad])
            logW[bad], _, step[bad] = _mirror_steps(
                st, logW[bad], [t[bad] for t in tables], tau, lam[bad], rho[bad], B[bad],
                step[bad], opts.inner_steps, opts,
            )
            best.offer(bad, np.exp(logW[bad]))

    r = int(np.argmin(best.value))
    return EngineResult(
        value=float(best.value[r]),
        W=best.W[r],
        tables=best.tables[r],
        dist=best.dist[r],
        feasible=bool(np.isfinite(best.value[r])),
        restarts_used=R,
        restart_values=best.value.copy(),
        restart_W=best.W,
        restart_tables=best.tables,
        restart_dist=best.dist,
        outer_rounds=rounds,
        restart_rounds=stopped,
    )


# ---------------------------------------------------------------------------
# decoder-indexed start
#
# Letters of U that share every decoder's row (phi_j(u, .)) can be merged
# without raising any term or changing any distortion. So U may be taken to
# index tuples of decoder functions, with tables fixed once and for all; the
# remaining problem over the channel is convex.

CANON_MAX = 4096
CANON_ROUNDS = 200  # the frozen runs converge well inside this


def canonical_size(st: Structure) -> int:
    n = 1
    for d in st.decoders:
        n *= d.dm.shape[1] ** d.n_side
    return n


def canonical_tables(st: Structure) -> tuple[int, list[np.ndarray]]:
    """Every combination of decoder functions, one letter each; tables (1, n_side, K)."""
    K = canonical_size(st)
    shape = [d.dm.shape[1] for d in st.decoders for _ in range(d.n_side)]
    digits = np.indices(shape).reshape(len(shape), -1) if shape else np.zeros((0, 1), int)
    out, pos = [], 0
    for d in st.decoders:
        out.append(digits[pos:pos + d.n_side][None].astype(np.int64))
        pos += d.n_side
    return K, out


def _letter_entropies(st: Structure, C: np.ndarray) -> np.ndarray:
    """H(A | C, U=u) for each term and letter; C is (T, n_u) with columns P(t|u)."""
    def ent(idx, n):
        m = _one_hot(idx, n) @ C
        with np.errstate(divide="ignore", invalid="ignore"):
            return -np.sum(np.where(m > 0, m * np.log(m), 0.0), axis=0)

    return np.array([ent(t.ac_idx, t.n_ac) - ent(t.c_idx, t.G.shape[0]) for t in st.terms])


def reduce_support(st: Structure, W: np.ndarray, K: int, budgets=None) -> np.ndarray:
    """Re-weight the letters of ``W`` (rows, n_u) to a vertex of the feasible set.

    The per-letter conditionals P(t|u) are kept and only the letter weights
    move, so every term and distortion is linear in the weights; an LP vertex
    uses at most (#tuples + #constraints) letters. The result has ``K``
    columns: if the vertex still needs more, the lightest letters are dropped.
    """
    from scipy.optimize import linprog

    budgets = st.budgets if budgets is None else np.asarray(budgets, float)
    J = joint(st, W[None])[0]  # (T, n_u)
    pu = J.sum(axis=0)
    keep = np.flatnonzero(pu > 1e-14)
    C = J[:, keep] / pu[keep]
    n = keep.size
    tabs = [t[0] for t in optimal_tables(st, W[None, :, keep])]
    h = _letter_entropies(st, C)
    H0 = np.array([
        entropy_of(_one_hot(t.ac_idx, t.n_ac) @ st.pt) - entropy_of(t.pc) for t in st.terms
    ])
    rows_ub, rhs_ub = [], []
    for m in range(len(st.terms)):
        rows_ub.append(np.append(-h[m], -1.0))
        rhs_ub.append(-H0[m])
    for d, tab, b in zip(st.decoders, tabs, budgets):
        if np.isfinite(b):
            cost = np.sum(C * d.dm[d.tgt_idx[:, None], tab[d.side_idx, :]], axis=0)
            rows_ub.append(np.append(cost, 0.0))
            # the current weights may sit inside the feasibility tolerance
            rhs_ub.append(max(b, float(cost @ pu[keep])))
    live = st.pt > 0
    A_eq = np.hstack([C[live], np.zeros((int(live.sum()), 1))])
    b_eq = C[live] @ pu[keep]
    c = np.zeros(n + 1)
    c[-1] = 1.0
    res = linprog(
        c, A_ub=np.array(rows_ub), b_ub=np.array(rhs_ub), A_eq=A_eq, b_eq=b_eq,
        bounds=[(0, None)] * n + [(None, None)], method="highs-ds",
    )
    w = res.x[:n] if res.status == 0 else pu[keep]
    order = np.argsort(-w, kind="stable")[:K]
    order = order[w[order] > 1e-14]
    Jn = C[:, order] * w[order]
    pe = np.where(st.pe > 0, st.pe, 1.0)[:, None]
    out = np.zeros((st.n_rows, K))
    out[:, : order.size] = (st.H @ Jn) / pe
    # rows with no mass (or mass lost to truncation) fall back to letter 0
    tot = out.sum(axis=1, keepdims=True)
    out = np.where(tot > 1e-14, out / np.where(tot > 0, tot, 1.0), np.eye(1, K))
    return out


def entropy_of(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def canonical_solve(st: Structure, opts: EngineOptions, budgets=None) -> EngineResult | None:
    """Convex solve over decoder-indexed letters; ``None`` if there are too many.

    ``budgets`` (R, D) runs one frozen-table restart per budget row.
    """
    Kc = canonical_size(st)
    if Kc * st.n_rows > CANON_MAX * 16 or Kc > CANON_MAX:
        return None
    Kc, tabs = canonical_tables(st)
    B = np.atleast_2d(st.budgets if budgets is None else np.asarray(budgets, float))
    R = B.shape[0]
    W0 = np.full((R, st.n_rows, Kc), 1.0 / Kc)
    o = EngineOptions(**{
        **opts.__dict__, "restarts": R, "start_mix": 0.0,
        "max_outer": min(opts.max_outer, CANON_ROUNDS),
    })
    return solve(st, Kc, o, W0=W0, budgets=B, tables0=tabs, freeze=True)


def solve_with_canonical(st: Structure, K: int, opts: EngineOptions) -> EngineResult:
    """Default multi-start plus one start taken from the convex decoder-indexed
    solution, shrunk to ``K`` letters."""
    rng = np.random.default_rng(opts.seed)
    W0 = initial_channels(st, K, opts.restarts, rng)
    fixed = np.arange(opts.restarts) < 2
    can = canonical_solve(st, opts)
    if can is not None and can.feasible:
        W0 = np.concatenate([W0, reduce_support(st, can.W, K)[None]])
        fixed = np.append(fixed, True)
    return solve(st, K, opts, W0=W0, fixed=fixed)
