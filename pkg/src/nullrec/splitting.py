"""Split-chain simulation: regeneration flags, occupation counts, block sums.

The split is performed retrospectively: the next state is drawn from the
transition law first, and the regeneration flag for time t is then Bernoulli
with probability

    s(X_t) nu(X_{t+1}) / p(X_t, X_{t+1}),

which is distributionally equivalent to drawing the mixture branch up front
but works identically for finite chains and for the Gaussian random walk.
Y_t = 1 means the chain forgets its past after time t: X_{t+1} is a fresh
draw from nu.  Finite models start from nu, so the initial block already has
the common block law; random-walk systems start at x0.

Besides single trajectories, the module ships vectorized i.i.d. block
samplers (many replicas stepped in lockstep, each terminated at its first
regeneration).  They are the Monte Carlo side of the dual-oracle checks
against :mod:`nullrec.algebra` and stay deliberately independent of it: they
never touch the fundamental kernel, only P, s and nu.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .algebra import FiniteMarkovModel
from .errors import InvalidHalfwidth, InvalidSpec, UnknownProcessFamily
from .processes import ProcessSpec, generate

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _norm_pdf(x):
    return np.exp(-0.5 * np.square(x)) / _SQRT_2PI


@dataclass(frozen=True)
class AtomSpecContinuous:
    """Atom for a continuous chain: s = s_level on C = [lo, hi], nu uniform
    on C.  Validity requires s_level * (hi - lo)^{-1} <= p(x, y) on C x C."""

    lo: float
    hi: float
    s_level: float

    @property
    def nu_density(self) -> float:
        return 1.0 / (self.hi - self.lo)


def gaussian_rw_atom(halfwidth: float) -> AtomSpecContinuous:
    """Atom for the standard-normal random walk on C = [-halfwidth, halfwidth].

    s_level = 2 halfwidth phi(2 halfwidth) makes s(x) nu(y) = phi(2 halfwidth)
    <= phi(y - x) for all x, y in C, since |y - x| <= 2 halfwidth."""
    if not (0.0 < halfwidth <= 1.0):
        raise InvalidHalfwidth(f"halfwidth must lie in (0, 1], got {halfwidth!r}")
    s_level = 2.0 * halfwidth * float(_norm_pdf(2.0 * halfwidth))
    return AtomSpecContinuous(-halfwidth, halfwidth, s_level)


@dataclass(frozen=True)
class SplitTrajectory:
    """Path of (X_t[, W_t], Y_t) for t = 0..n plus the regeneration indices.

    y[t] = 1 exactly at the indices listed in tau.  For product chains y is
    the simultaneous (compound) flag and the per-component flags are kept in
    y_x / y_w."""

    x: np.ndarray
    y: np.ndarray
    tau: np.ndarray
    seed: int
    w: Optional[np.ndarray] = None
    states: Optional[tuple] = None
    w_states: Optional[tuple] = None
    y_x: Optional[np.ndarray] = None
    y_w: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return len(self.x) - 1


class RegenStats(NamedTuple):
    count: int
    tau: np.ndarray
    lengths: np.ndarray


class BlockDecomposition(NamedTuple):
    """u0 covers 0..tau_0; blocks the full inter-regeneration segments;
    tail the unfinished remainder.  lengths uses the tau_{-1} = -1
    convention, so it has one entry per regeneration."""

    u0: float
    blocks: np.ndarray
    tail: float
    lengths: np.ndarray


def _finite_split_path(model: FiniteMarkovModel, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Index path x_0..x_n started from nu, with flags y_0..y_n (the flag at
    n uses one transition beyond the kept path)."""
    d = model.d
    cum_nu = np.cumsum(model.nu).tolist()
    cum_rows = [np.cumsum(row).tolist() for row in model.P]
    P = model.P
    s = model.s
    nu = model.nu
    ratio = [[(s[i] * nu[j] / P[i, j]) if P[i, j] > 0.0 else 0.0 for j in range(d)]
             for i in range(d)]

    u = rng.random(2 * (n + 1) + 1)
    x = np.empty(n + 2, dtype=np.int64)
    y = np.zeros(n + 1, dtype=np.uint8)
    x[0] = min(bisect_right(cum_nu, u[0]), d - 1)
    k = 1
    xi = int(x[0])
    for t in range(n + 1):
        xj = min(bisect_right(cum_rows[xi], u[k]), d - 1)
        if u[k + 1] < ratio[xi][xj]:
            y[t] = 1
        x[t + 1] = xj
        xi = xj
        k += 2
    return x[:n + 1], y


def simulate_split(process, n: int, seed: int) -> SplitTrajectory:
    """Simulate the split chain for t = 0..n.

    `process` is a FiniteMarkovModel, a FINITE_PRODUCT spec (compound flag
    y = y_x y_w), or a random-walk ProcessSpec (flags from the walk's atom;
    the disturbance rides along).  Identical inputs give identical output."""
    if isinstance(process, FiniteMarkovModel):
        rng = np.random.default_rng(seed)
        x, y = _finite_split_path(process, n, rng)
        return SplitTrajectory(x=x, y=y, tau=np.flatnonzero(y), seed=seed,
                               states=process.states)

    if not isinstance(process, ProcessSpec):
        raise UnknownProcessFamily(f"cannot split-simulate {type(process).__name__}")

    if process.family == "FINITE_PRODUCT":
        rng = np.random.default_rng(seed)
        x, y1 = _finite_split_path(process.x_chain, n, rng)
        w, y2 = _finite_split_path(process.w_chain, n, rng)
        y = (y1 & y2).astype(np.uint8)
        return SplitTrajectory(x=x, y=y, tau=np.flatnonzero(y), seed=seed,
                               w=w, states=process.x_chain.states,
                               w_states=process.w_chain.states, y_x=y1, y_w=y2)

    if process.sigma_e != 1.0:
        raise InvalidSpec("the shipped walk atom assumes standard-normal increments "
                          f"(sigma_e = 1), got {process.sigma_e!r}")
    atom = gaussian_rw_atom(process.halfwidth)
    path = generate(process, n + 1, seed)
    x_ext = path.x
    u = np.random.default_rng([seed, 1]).random(n + 1)
    in_c = (x_ext >= atom.lo) & (x_ext <= atom.hi)
    dx = x_ext[1:] - x_ext[:-1]
    ratio = np.where(in_c[:-1] & in_c[1:],
                     atom.s_level * atom.nu_density / _norm_pdf(dx), 0.0)
    y = (u < ratio).astype(np.uint8)
    return SplitTrajectory(x=x_ext[:n + 1], y=y, tau=np.flatnonzero(y), seed=seed,
                           w=path.w[:n + 1] if path.w is not None else None)


def regeneration_stats(traj: SplitTrajectory) -> RegenStats:
    """Number of regenerations in [0, n] (zero when none), their indices, and
    the successive gaps with the tau_{-1} = -1 convention."""
    tau = traj.tau
    if len(tau) == 0:
        return RegenStats(0, tau, np.array([], dtype=np.int64))
    lengths = np.diff(np.concatenate([[-1], tau]))
    return RegenStats(int(len(tau)), tau, lengths)


def occupation_count(traj: SplitTrajectory, C) -> int:
    """Visits to C up to time n: an interval (lo, hi) for continuous paths, a
    collection of labels or indices for finite ones."""
    x = traj.x
    if traj.states is None:
        lo, hi = C
        return int(((x >= lo) & (x <= hi)).sum())
    members = set(C)
    idxs = [i for i, lab in enumerate(traj.states) if lab in members or i in members]
    if not idxs:
        return 0
    return int(np.isin(x, idxs).sum())


def _evaluate(traj: SplitTrajectory, g) -> np.ndarray:
    if callable(g):
        if traj.w is not None:
            try:
                return np.asarray(g(traj.x, traj.w), dtype=float)
            except TypeError:
                pass
        return np.asarray(g(traj.x), dtype=float)
    arr = np.asarray(g, dtype=float)
    if traj.states is None:
        raise ValueError("array-valued g requires a finite-state trajectory")
    return arr[traj.x]


def block_sums(traj: SplitTrajectory, g) -> BlockDecomposition:
    """Partition the path sum of g at the regeneration indices.

    g is a per-state array on finite chains, or a callable g(x) / g(x, w).
    u0 + sum(blocks) + tail recombines to the direct sum."""
    vals = _evaluate(traj, g)
    prefix = np.concatenate([[0.0], np.cumsum(vals)])
    tau = traj.tau
    if len(tau) == 0:
        return BlockDecomposition(float(prefix[-1]), np.array([]), 0.0,
                                  np.array([], dtype=np.int64))
    ends = prefix[tau + 1]
    u0 = float(ends[0])
    blocks = np.diff(ends)
    tail = float(prefix[-1] - ends[-1])
    lengths = np.diff(np.concatenate([[-1], tau]))
    return BlockDecomposition(u0, blocks, tail, lengths)


# --- vectorized Monte Carlo samplers ------------------------------------------

def _draw_rows(cum_p: np.ndarray, states: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Categorical draw per replica from the row of cum_p picked by states."""
    return (u[:, None] > cum_p[states]).sum(axis=1)


def sample_blocks(model: FiniteMarkovModel, g, n_blocks: int, seed: int,
                  max_rounds: int = 1_000_000) -> tuple[np.ndarray, np.ndarray]:
    """n_blocks i.i.d. regeneration blocks of the split chain started from nu,
    returning (block sums of g, block lengths).  All replicas step in
    lockstep; each stops at its first regeneration."""
    g = np.asarray(g, dtype=float)
    rng = np.random.default_rng(seed)
    cum_nu = np.cumsum(model.nu)
    cum_p = np.cumsum(model.P, axis=1)
    d = model.d
    s, nu, P = model.s, model.nu, model.P

    x = np.minimum(np.searchsorted(cum_nu, rng.random(n_blocks), side="right"), d - 1)
    U = g[x].astype(float)
    L = np.ones(n_blocks, dtype=np.int64)
    alive = np.arange(n_blocks)
    for _ in range(max_rounds):
        if alive.size == 0:
            return U, L
        xa = x[alive]
        nx = np.minimum(_draw_rows(cum_p, xa, rng.random(alive.size)), d - 1)
        ratio = s[xa] * nu[nx] / P[xa, nx]
        survive = rng.random(alive.size) >= ratio
        keep = alive[survive]
        nxs = nx[survive]
        x[keep] = nxs
        U[keep] += g[nxs]
        L[keep] += 1
        alive = keep
    raise RuntimeError("block sampling did not terminate; model may not regenerate")


def sample_compound_block_sums(x_model: FiniteMarkovModel, w_model: FiniteMarkovModel,
                               gX, gW, orders, n_blocks: int, seed: int,
                               max_rounds: int = 1_000_000) -> dict[int, np.ndarray]:
    """For n_blocks i.i.d. compound regeneration blocks of the independent
    product chain, the per-block sums over X-subblocks of V^m, where V is the
    subblock sum of gX(X) gW(W).  Returns one array per requested order m."""
    gX = np.asarray(gX, dtype=float)
    gW = np.asarray(gW, dtype=float)
    orders = tuple(orders)
    rng = np.random.default_rng(seed)
    cum_nu1, cum_p1 = np.cumsum(x_model.nu), np.cumsum(x_model.P, axis=1)
    cum_nu2, cum_p2 = np.cumsum(w_model.nu), np.cumsum(w_model.P, axis=1)
    d1, d2 = x_model.d, w_model.d

    x = np.minimum(np.searchsorted(cum_nu1, rng.random(n_blocks), side="right"), d1 - 1)
    w = np.minimum(np.searchsorted(cum_nu2, rng.random(n_blocks), side="right"), d2 - 1)
    V = gX[x] * gW[w]
    S = {m: np.zeros(n_blocks) for m in orders}
    alive = np.arange(n_blocks)
    for _ in range(max_rounds):
        if alive.size == 0:
            return S
        xa, wa = x[alive], w[alive]
        nx = np.minimum(_draw_rows(cum_p1, xa, rng.random(alive.size)), d1 - 1)
        nw = np.minimum(_draw_rows(cum_p2, wa, rng.random(alive.size)), d2 - 1)
        y1 = rng.random(alive.size) < x_model.s[xa] * x_model.nu[nx] / x_model.P[xa, nx]
        y2 = rng.random(alive.size) < w_model.s[wa] * w_model.nu[nw] / w_model.P[wa, nw]
        sub_end = alive[y1]
        for m in orders:
            S[m][sub_end] += V[sub_end] ** m
        done = y1 & y2
        keep_mask = ~done
        keep = alive[keep_mask]
        nxs, nws = nx[keep_mask], nw[keep_mask]
        x[keep] = nxs
        w[keep] = nws
        step_val = gX[nxs] * gW[nws]
        fresh = y1[keep_mask]
        V[keep] = np.where(fresh, step_val, V[keep] + step_val)
        alive = keep
    raise RuntimeError("compound block sampling did not terminate")


def sample_embedded_counts(x_model: FiniteMarkovModel, w_model: FiniteMarkovModel,
                           n_pairs: int, seed: int, replicas: int = 20_000,
                           max_rounds: int = 10_000_000) -> np.ndarray:
    """Transition counts of the W-chain observed at X-regeneration times,
    pooled over independently evolving replicas, until at least n_pairs
    embedded steps have been recorded."""
    rng = np.random.default_rng(seed)
    cum_nu1, cum_p1 = np.cumsum(x_model.nu), np.cumsum(x_model.P, axis=1)
    cum_nu2, cum_p2 = np.cumsum(w_model.nu), np.cumsum(w_model.P, axis=1)
    d1, d2 = x_model.d, w_model.d

    x = np.minimum(np.searchsorted(cum_nu1, rng.random(replicas), side="right"), d1 - 1)
    w = np.minimum(np.searchsorted(cum_nu2, rng.random(replicas), side="right"), d2 - 1)
    last_w = np.full(replicas, -1, dtype=np.int64)
    counts = np.zeros((d2, d2), dtype=np.int64)
    total = 0
    for _ in range(max_rounds):
        nx = np.minimum(_draw_rows(cum_p1, x, rng.random(replicas)), d1 - 1)
        y1 = rng.random(replicas) < x_model.s[x] * x_model.nu[nx] / x_model.P[x, nx]
        nw = np.minimum(_draw_rows(cum_p2, w, rng.random(replicas)), d2 - 1)
        hit = np.flatnonzero(y1)
        if hit.size:
            prev = last_w[hit]
            cur = w[hit]
            valid = prev >= 0
            np.add.at(counts, (prev[valid], cur[valid]), 1)
            total += int(valid.sum())
            last_w[hit] = cur
        x = nx
        w = nw
        if total >= n_pairs:
            return counts
    raise RuntimeError("embedded sampling did not reach the requested pair count")


def write_trajectory_csv(traj: SplitTrajectory, path) -> None:
    """Columns t, x, w (empty if absent), y."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "w", "y"])
        for t in range(len(traj.x)):
            xv = traj.states[traj.x[t]] if traj.states is not None else format(traj.x[t], ".17g")
            wv = ""
            if traj.w is not None:
                wv = (traj.w_states[traj.w[t]] if traj.w_states is not None
                      else format(traj.w[t], ".17g"))
            writer.writerow([t, xv, wv, int(traj.y[t])])
