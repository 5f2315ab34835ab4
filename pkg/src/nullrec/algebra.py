"""Exact regeneration-block algebra on finite-state Markov chains with an atom.

A finite chain with transition matrix P admits an atom (s, nu) when the
minorization inequality P >= s (x) nu holds entrywise.  Everything in this
module is built from the taboo kernel

    H = P - s (x) nu

and its Neumann series, the fundamental kernel G = sum_l H^l.  The atom
induces an invariant measure pi = nu G, normalized so that pi . s = 1, and
closed-form expressions for the moments of regeneration-block sums:

    E_nu U0(g)   = pi . g
    E_nu U0^2(g) = pi g^2 + 2 pi I_g H G g

with I_g the multiplication kernel I_g(x, A) = g(x) 1_A(x).  Higher moments
expand over compositions alpha of m into r positive parts,

    E_x U0^m = sum_r sum_alpha  m!/(alpha_1! ... alpha_r!)
               [G I_{g^a1} H] [G I_{g^a2} H] ... G I_{g^ar} 1 (x).

These exact values are the ground-truth oracle against which the split-chain
simulation in :mod:`nullrec.splitting` is checked, and vice versa.

All functions are pure: they never mutate their inputs and hold no state, so
concurrent read-only use is safe.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    CoefficientMassDeficit,
    MinorizationViolated,
    NegativeVariance,
    NotIrreducible,
    NotStochastic,
    OrderTooLarge,
    SeriesDiverges,
    TruncationInsufficient,
)

STOCHASTIC_TOL = 1e-12
MOMENT_ORDER_CAP = 6

TABOO = "taboo"
FUNDAMENTAL = "fundamental"
POWER = "power"
EMBEDDED = "embedded"


class SeriesValue(NamedTuple):
    """A truncated-series value together with its analytic tail bound."""

    value: float
    tail_bound: float


@dataclass(frozen=True)
class FiniteMarkovModel:
    """Transition matrix over a finite ordered state space plus an atom (s, nu).

    Invariants checked at construction: P row-stochastic and nonnegative, nu
    a probability vector, P >= s (x) nu entrywise, and the directed graph of
    P strongly connected.
    """

    states: tuple
    P: np.ndarray
    s: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        s = np.array(self.s, dtype=float)
        nu = np.array(self.nu, dtype=float)
        for arr in (P, s, nu):
            arr.flags.writeable = False
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "nu", nu)
        validate_atom(self)

    @property
    def d(self) -> int:
        return len(self.states)

    def state_values(self) -> np.ndarray:
        """Numeric values of the state labels (falls back to indices)."""
        try:
            return np.array([float(x) for x in self.states])
        except (TypeError, ValueError):
            return np.arange(self.d, dtype=float)


@dataclass(frozen=True)
class KernelMatrix:
    """A d x d kernel derived from a model: taboo H, fundamental G, a power
    H^j, or an embedded transition matrix."""

    entries: np.ndarray
    kind: str
    tail_bound: float = 0.0

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)


@dataclass(frozen=True)
class InvariantMeasure:
    """The atom-normalized invariant measure pi = nu G (pi . s = 1).

    Not a probability: its total mass is the expected block length."""

    pi: np.ndarray

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float)
        pi.flags.writeable = False
        object.__setattr__(self, "pi", pi)

    @property
    def total_mass(self) -> float:
        return float(self.pi.sum())


@dataclass(frozen=True)
class BlockMomentRequest:
    """Order-m moment of the block sum of g, started from a state or from nu."""

    g: np.ndarray
    m: int
    start: int | str = "nu"

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        object.__setattr__(self, "g", g)
        if self.m < 1:
            raise ValueError(f"moment order must be >= 1, got {self.m}")
        if self.m > MOMENT_ORDER_CAP:
            raise OrderTooLarge(self.m, MOMENT_ORDER_CAP)
        if not (self.start == "nu" or isinstance(self.start, (int, np.integer))):
            raise ValueError(f"start must be 'nu' or a state index, got {self.start!r}")


def _strongly_connected_components(adj: np.ndarray) -> list[list[int]]:
    """SCCs of a boolean adjacency matrix via reachability closure."""
    d = adj.shape[0]
    reach = adj | np.eye(d, dtype=bool)
    for _ in range(int(math.ceil(math.log2(max(d, 2)))) + 1):
        new = reach @ reach
        if (new == reach).all():
            break
        reach = new
    mutual = reach & reach.T
    seen = np.zeros(d, dtype=bool)
    comps = []
    for i in range(d):
        if not seen[i]:
            members = np.flatnonzero(mutual[i])
            seen[members] = True
            comps.append(members.tolist())
    return comps


def validate_atom(model: FiniteMarkovModel) -> None:
    """Check all model invariants; raises on the first violation."""
    P, s, nu = model.P, model.s, model.nu
    d = model.d
    if P.shape != (d, d) or s.shape != (d,) or nu.shape != (d,):
        raise ValueError(f"inconsistent shapes: P{P.shape}, s{s.shape}, nu{nu.shape}, d={d}")
    for i in range(d):
        if P[i].min() < -STOCHASTIC_TOL or abs(P[i].sum() - 1.0) > STOCHASTIC_TOL:
            raise NotStochastic(i, float(P[i].sum()))
    if nu.min() < -STOCHASTIC_TOL or abs(nu.sum() - 1.0) > STOCHASTIC_TOL:
        raise NotStochastic(-1, float(nu.sum()))
    if s.min() < -STOCHASTIC_TOL or s.max() > 1.0 + STOCHASTIC_TOL:
        deficit = float(max(-s.min(), s.max() - 1.0))
        i = int(np.argmax(np.maximum(-s, s - 1.0)))
        raise MinorizationViolated(i, -1, deficit)
    outer = np.outer(s, nu)
    deficit = outer - P
    if deficit.max() > STOCHASTIC_TOL:
        i, j = np.unravel_index(np.argmax(deficit), deficit.shape)
        raise MinorizationViolated(int(i), int(j), float(deficit[i, j]))
    comps = _strongly_connected_components(P > 0)
    if len(comps) > 1:
        raise NotIrreducible(comps)


def taboo_kernel(model: FiniteMarkovModel) -> KernelMatrix:
    """H = P - s (x) nu, the sub-stochastic kernel of surviving (no-split)
    transitions.  Magnitudes below 1e-15 are clamped to zero."""
    H = model.P - np.outer(model.s, model.nu)
    H = np.where(np.abs(H) < 1e-15, 0.0, H)
    if H.min() < -1e-12:
        i, j = np.unravel_index(np.argmin(H), H.shape)
        raise MinorizationViolated(int(i), int(j), float(-H[i, j]))
    return KernelMatrix(np.maximum(H, 0.0), TABOO)


def _as_matrix(H) -> np.ndarray:
    return H.entries if isinstance(H, KernelMatrix) else np.asarray(H, dtype=float)


def fundamental_kernel(H, tol: float = 1e-10) -> KernelMatrix:
    """G = sum_l H^l computed by solving (I - H) G = I directly.

    Requires the spectral radius of H to be < 1; a (near-)singular I - H
    signals that the split chain never regenerates."""
    Hm = _as_matrix(H)
    d = Hm.shape[0]
    eigs = np.linalg.eigvals(Hm)
    if np.abs(eigs).max() >= 1.0 - 1e-10:
        raise SeriesDiverges(f"spectral radius of H is {np.abs(eigs).max()!r} >= 1")
    try:
        G = np.linalg.solve(np.eye(d) - Hm, np.eye(d))
    except np.linalg.LinAlgError as exc:
        raise SeriesDiverges(str(exc)) from exc
    return KernelMatrix(G, FUNDAMENTAL)


def fundamental_kernel_series(H, tol: float = 1e-10, max_terms: int = 1_000_000) -> KernelMatrix:
    """G by truncated power series, stopped when the sup-norm increment < tol.

    Kept as an independent cross-check of :func:`fundamental_kernel`."""
    Hm = _as_matrix(H)
    d = Hm.shape[0]
    term = np.eye(d)
    G = np.eye(d)
    for _ in range(max_terms):
        term = term @ Hm
        G += term
        sup = np.abs(term).max()
        if sup < tol:
            return KernelMatrix(G, FUNDAMENTAL, tail_bound=sup)
        if not np.isfinite(sup) or sup > 1e12:
            break
    raise SeriesDiverges("power series for G did not converge")


def invariant_measure(model: FiniteMarkovModel) -> InvariantMeasure:
    """pi = nu G; satisfies pi P = pi and pi . s = 1."""
    G = fundamental_kernel(taboo_kernel(model)).entries
    return InvariantMeasure(model.nu @ G)


def _pi_H_G(model: FiniteMarkovModel):
    H = taboo_kernel(model).entries
    G = fundamental_kernel(H).entries
    pi = model.nu @ G
    return pi, H, G


def block_mean_variance(model: FiniteMarkovModel, g) -> tuple[float, float]:
    """Mean and variance of the i.i.d. regeneration-block sums of g.

    mu = pi . g and sigma^2 = pi g^2 + 2 pi I_g H G g - (pi . g)^2.
    Tiny negative variances (rounding) are clamped to zero; anything below
    -1e-10 signals a broken model and raises."""
    g = np.asarray(g, dtype=float)
    pi, H, G = _pi_H_G(model)
    mu = float(pi @ g)
    second = float(pi @ (g * g) + 2.0 * (pi * g) @ (H @ (G @ g)))
    sigma2 = second - mu * mu
    if sigma2 < -1e-10:
        raise NegativeVariance(sigma2)
    return mu, max(sigma2, 0.0)


def _compositions(m: int, r: int):
    """All tuples of r strictly positive integers summing to m."""
    for cuts in itertools.combinations(range(1, m), r - 1):
        bounds = (0,) + cuts + (m,)
        yield tuple(bounds[k + 1] - bounds[k] for k in range(r))


def _multinomial(m: int, alpha: Sequence[int]) -> int:
    c = math.factorial(m)
    for a in alpha:
        c //= math.factorial(a)
    return c


def block_moment(model: FiniteMarkovModel, request: BlockMomentRequest,
                 tol: float = 1e-12) -> float:
    """E U0^m of the block sum of g, exactly, as the finite sum over
    compositions of m with inner geometric sums closed by G (no truncation).

    start='nu' gives the common law of the i.i.d. blocks; an integer start
    conditions on X_0 = that state."""
    g = request.g
    if g.shape != (model.d,):
        raise ValueError(f"g must have length {model.d}, got shape {g.shape}")
    pi, H, G = _pi_H_G(model)
    HG = H @ G
    total = 0.0
    for r in range(1, request.m + 1):
        for alpha in _compositions(request.m, r):
            v = g ** alpha[-1]
            for i in range(r - 2, -1, -1):
                v = HG @ v
                v = (g ** alpha[i]) * v
            psi = G @ v
            coef = _multinomial(request.m, alpha)
            if request.start == "nu":
                total += coef * float(model.nu @ psi)
            else:
                total += coef * float(psi[request.start])
    return total


def enumerated_block_moments(model: FiniteMarkovModel, g, orders,
                             start: int | str = "nu",
                             depth: int = 60) -> dict[int, SeriesValue]:
    """Independent oracle for :func:`block_moment` by exhaustive enumeration,
    for several moment orders in one sweep.

    Walks the distribution of (current state, occupation-count vector) under
    taboo transitions H step by step, closing blocks with probability s(x) at
    each step; no Neumann series or composition algebra is involved.  Returns
    per order the expectation restricted to blocks ending by `depth`, with an
    upper bound on the omitted tail."""
    g = np.asarray(g, dtype=float)
    orders = tuple(orders)
    d = model.d
    H = np.maximum(model.P - np.outer(model.s, model.nu), 0.0)
    s = model.s
    if start == "nu":
        init = model.nu
    else:
        init = np.zeros(d)
        init[start] = 1.0

    dist: dict[tuple, float] = {}
    for y in range(d):
        if init[y] > 0.0:
            counts = [0] * d
            counts[y] = 1
            dist[(y, tuple(counts))] = float(init[y])

    totals = dict.fromkeys(orders, 0.0)
    for _t in range(depth + 1):
        nxt: dict[tuple, float] = {}
        for (y, counts), prob in dist.items():
            if s[y] > 0.0:
                block_sum = sum(c * gv for c, gv in zip(counts, g))
                w = prob * s[y]
                for m in orders:
                    totals[m] += w * block_sum ** m
            row = H[y]
            for y2 in range(d):
                p = prob * row[y2]
                if p > 0.0:
                    c2 = counts[:y2] + (counts[y2] + 1,) + counts[y2 + 1:]
                    key = (y2, c2)
                    nxt[key] = nxt.get(key, 0.0) + p
        dist = nxt
        if not dist:
            return {m: SeriesValue(totals[m], 0.0) for m in orders}

    # Tail: survival mass decays under H; |block sum| <= (t+1) * max|g|.
    alive = np.zeros(d)
    for (y, _counts), prob in dist.items():
        alive[y] += prob
    gmax = float(np.abs(g).max()) if d else 0.0
    tails = dict.fromkeys(orders, 0.0)
    t = depth + 1
    for _ in range(100_000):
        mass = float(alive.sum())
        done = True
        for m in orders:
            term = mass * ((t + 1) * gmax) ** m
            tails[m] += term
            done = done and term < 1e-300
        if done or mass < 1e-300:
            return {m: SeriesValue(totals[m], tails[m]) for m in orders}
        alive = alive @ H
        t += 1
    return {m: SeriesValue(totals[m], math.inf) for m in orders}


def enumerated_block_moment(model: FiniteMarkovModel, g, m: int,
                            start: int | str = "nu", depth: int = 60) -> SeriesValue:
    return enumerated_block_moments(model, g, (m,), start=start, depth=depth)[m]


def _survival_masses(model: FiniteMarkovModel, start, floor: float = 1e-250,
                     cap: int = 500_000) -> np.ndarray:
    """mass[j] = P_start(no regeneration in the first j transitions),
    computed exactly until it underflows."""
    H = np.maximum(model.P - np.outer(model.s, model.nu), 0.0)
    u = model.nu.copy() if start == "nu" else np.eye(model.d)[start]
    masses = [1.0]
    for _ in range(cap):
        u = u @ H
        mass = float(u.sum())
        masses.append(mass)
        if mass < floor:
            return np.array(masses)
    raise TruncationInsufficient(float(masses[-1]), floor)


def weighted_block_moment(model: FiniteMarkovModel, a, g, m: int,
                          tol: float = 1e-10, start: int | str = "nu",
                          a_sup: float | None = None) -> SeriesValue:
    """E U0^m of the time-weighted block sum sum_k a_k g(X_k), m in {1, 2}.

    The coefficient sequence is supplied as a finite prefix a_0..a_L; the
    omitted tail is bounded using sup|a| (by default the prefix maximum,
    assumed to dominate the unseen coefficients) times the exact survival
    masses of the taboo kernel.  Raises when that bound exceeds tol."""
    if m not in (1, 2):
        raise OrderTooLarge(m, 2)
    a = np.asarray(a, dtype=float)
    g = np.asarray(g, dtype=float)
    L = len(a) - 1
    if L < 0:
        raise ValueError("coefficient prefix must be nonempty")
    if a_sup is None:
        a_sup = float(np.abs(a).max())
    gmax = float(np.abs(g).max())
    H = np.maximum(model.P - np.outer(model.s, model.nu), 0.0)
    u0 = model.nu if start == "nu" else np.eye(model.d)[start]

    rows = np.empty((L + 1, model.d))
    u = u0.astype(float)
    for j in range(L + 1):
        rows[j] = u
        u = u @ H

    masses = _survival_masses(model, start)
    if len(masses) <= L + 1:
        masses = np.concatenate([masses, np.zeros(L + 2 - len(masses))])
    mass_tail = float(masses[L + 1:].sum())  # sum_{j > L} mass_j

    if m == 1:
        value = float(a @ (rows @ g))
        tail = a_sup * gmax * mass_tail
    else:
        cols = np.empty((L + 1, model.d))
        v = g.copy()
        for l in range(L + 1):
            cols[l] = v
            v = H @ v
        # d_{j,l} = u_j . (g * H^l g); diagonal uses l = 0 (g^2), off uses l >= 1
        M = rows @ (cols * g).T  # M[j, l]
        diag = float((a * a) @ M[:, 0])
        cross = 0.0
        for j in range(L + 1):
            lmax = L - j
            if lmax >= 1:
                cross += float((a[j] * a[j + 1:j + 1 + lmax]) @ M[j, 1:lmax + 1])
        value = diag + 2.0 * cross
        # omitted: diagonal j > L plus cross pairs (j, l>=1) with j + l > L;
        # |d_{j,l}| <= gmax^2 mass_{j+l} and #{(j, l): j + l = k} = k
        k_weighted = float((np.arange(len(masses)) * masses)[L + 1:].sum())
        tail = (a_sup ** 2) * (gmax ** 2) * (mass_tail + 2.0 * k_weighted)
    if not (tail <= tol):
        raise TruncationInsufficient(tail, tol)
    return SeriesValue(value, tail)


def generalized_autocov(model: FiniteMarkovModel, g, f=None, ell: int = 0) -> float:
    """Lag-ell generalized (cross-)covariance for chains carrying only an
    invariant measure:

        ell  = 0:  pi I_{g0} f0 + mu_g mu_f (1 - pi . s^2)
        ell >= 1:  phi_g P^{ell-1} f0,   phi_g = pi I_g P - mu_g nu
        ell  < 0:  the (f, g) value at -ell

    where f0 = f - s mu_f centers f against the atom and pi . s^2 means
    sum_x pi(x) s(x)^2."""
    g = np.asarray(g, dtype=float)
    f = g if f is None else np.asarray(f, dtype=float)
    if ell < 0:
        return generalized_autocov(model, f, g, -ell)
    pi, _H, _G = _pi_H_G(model)
    mu_g = float(pi @ g)
    mu_f = float(pi @ f)
    f0 = f - model.s * mu_f
    if ell == 0:
        g0 = g - model.s * mu_g
        return float(pi @ (g0 * f0) + mu_g * mu_f * (1.0 - pi @ (model.s ** 2)))
    phi = (pi * g) @ model.P - mu_g * model.nu
    vec = f0
    for _ in range(ell - 1):
        vec = model.P @ vec
    return float(phi @ vec)


def sigma2_from_series(model: FiniteMarkovModel, g, tol: float = 1e-8,
                       max_lag: int = 100_000) -> SeriesValue:
    """Block variance as the two-sided sum of generalized autocovariances,
    gamma(0) + 2 sum_{l>=1} gamma(l), truncated when the exact remainder
    phi_g P^L G g0 drops below tol/2.

    Must agree with :func:`block_mean_variance` within tol plus the reported
    tail bound; the two sides use different formulas, so the agreement is a
    genuine cross-check."""
    g = np.asarray(g, dtype=float)
    pi, _H, G = _pi_H_G(model)
    mu_g = float(pi @ g)
    g0 = g - model.s * mu_g
    psi = G @ g0
    phi = (pi * g) @ model.P - mu_g * model.nu

    total = generalized_autocov(model, g, None, 0)
    row = phi.copy()
    remainder = math.inf
    for _ell in range(1, max_lag + 1):
        total += 2.0 * float(row @ g0)
        row = row @ model.P
        remainder = abs(2.0 * float(row @ psi))
        if remainder <= tol / 2.0:
            return SeriesValue(total, remainder)
    raise TruncationInsufficient(remainder, tol)


def regeneration_gap_coefficients(model: FiniteMarkovModel, count: int) -> np.ndarray:
    """b[l] = nu H^{l-1} s for l = 1..count: the law of the gap between
    successive regenerations (equivalently of the first block length)."""
    H = np.maximum(model.P - np.outer(model.s, model.nu), 0.0)
    u = model.nu.copy()
    out = np.empty(count)
    for l in range(count):
        out[l] = float(u @ model.s)
        u = u @ H
    return out


def embedded_transition(x_model: FiniteMarkovModel, w_model: FiniteMarkovModel,
                        tol: float = 1e-10, max_terms: int = 200_000) -> KernelMatrix:
    """Transition matrix of the W-chain observed at the X-chain's
    regeneration times:  P2 . Phi  with  Phi = sum_l {nu1 H1^l s1} P2^l.

    The mixing coefficients b_{l+1} = nu1 H1^l s1 are the gap law of the
    X-chain and must have total mass 1 (recurrence); a deficit raises.  The
    series is truncated once the remaining coefficient mass is below tol, so
    the result is row-stochastic within that mass."""
    H1 = np.maximum(x_model.P - np.outer(x_model.s, x_model.nu), 0.0)
    G1 = fundamental_kernel(H1).entries
    total_mass = float(x_model.nu @ (G1 @ x_model.s))
    if total_mass < 1.0 - max(tol, 1e-9):
        raise CoefficientMassDeficit(total_mass, tol)

    d2 = w_model.d
    u = x_model.nu.astype(float)
    Ppow = np.eye(d2)
    Phi = np.zeros((d2, d2))
    remaining = 1.0
    for _l in range(max_terms):
        b = float(u @ x_model.s)
        Phi += b * Ppow
        u = u @ H1
        remaining = float(u.sum())
        if remaining < tol:
            break
        Ppow = Ppow @ w_model.P
    else:
        raise TruncationInsufficient(remaining, tol)

    P_tilde = w_model.P @ Phi
    row_err = float(np.abs(P_tilde.sum(axis=1) - 1.0).max())
    if row_err > remaining + 1e-9:
        raise TruncationInsufficient(row_err, tol)
    minor = np.outer(w_model.s, w_model.nu @ Phi) - P_tilde
    if minor.max() > tol + 1e-9:
        i, j = np.unravel_index(np.argmax(minor), minor.shape)
        raise MinorizationViolated(int(i), int(j), float(minor[i, j]))
    return KernelMatrix(P_tilde, EMBEDDED, tail_bound=remaining)


def _taboo_sup_decay(H: np.ndarray, floor: float = 1e-250,
                     cap: int = 500_000) -> np.ndarray:
    """base[k] = max_i (H^k 1)(i): sup over start states of the survival
    probability after k taboo steps."""
    v = np.ones(H.shape[0])
    base = [1.0]
    for _ in range(cap):
        v = H @ v
        base.append(float(v.max()))
        if base[-1] < floor:
            return np.array(base)
    raise TruncationInsufficient(base[-1], floor)


def compound_block_moment(x_model: FiniteMarkovModel, w_model: FiniteMarkovModel,
                          gX, gW, m: int, tol: float = 1e-10) -> SeriesValue:
    """E_nu of the sum, over one compound regeneration block, of the m-th
    powers of X-subblock sums of gX(X) gW(W), for independent chains:

        sum_r sum_alpha  m!/(alpha!)  sum_{j_2..j_r >= 1}
            {pi1 I_{gX^a1} H1^{j2} ... H1^{jr} gX^ar}
          x {pi2 I_{gW^a1} P2^{j2} ... P2^{jr} gW^ar}

    For m = 1 this factorizes exactly as {pi1 gX} {pi2 gW} (no series).  The
    inner sums are truncated where the geometric decay of H1 powers drives
    the bound below tol."""
    if m > 3:
        raise OrderTooLarge(m, 3)
    if m < 1:
        raise ValueError("m must be >= 1")
    gX = np.asarray(gX, dtype=float)
    gW = np.asarray(gW, dtype=float)
    pi1 = invariant_measure(x_model).pi
    pi2 = invariant_measure(w_model).pi
    if m == 1:
        return SeriesValue(float(pi1 @ gX) * float(pi2 @ gW), 0.0)

    H1 = np.maximum(x_model.P - np.outer(x_model.s, x_model.nu), 0.0)
    P2 = w_model.P
    base = _taboo_sup_decay(H1)
    tails = np.concatenate([np.cumsum(base[::-1])[::-1], [0.0]])  # sum_{k>=j} base_k
    Xmax = float(np.abs(gX).max())
    Wmax = float(np.abs(gW).max())
    w_consts = {a: float(pi2 @ np.abs(gW) ** a) for a in range(1, m)}
    x_consts = {a: float(pi1 @ np.abs(gX) ** a) for a in range(1, m)}

    def tail_bound(L: int) -> float:
        # r = 2 terms: sum_{j > L} base_j; r = 3: pairs with j2 > L or j3 > L.
        bound = 0.0
        for r in range(2, m + 1):
            for alpha in _compositions(m, r):
                coef = _multinomial(m, alpha)
                cx = x_consts[alpha[0]] * Xmax ** (m - alpha[0])
                cw = w_consts[alpha[0]] * Wmax ** (m - alpha[0])
                if r == 2:
                    out = float(tails[min(L + 1, len(tails) - 1)])
                else:
                    t1 = float(tails[1]) if len(tails) > 1 else 0.0
                    out = 2.0 * float(tails[min(L + 1, len(tails) - 1)]) * t1
                bound += coef * cx * cw * out
        return bound

    L = 8
    while tail_bound(L) > tol:
        L *= 2
        if L + 2 >= len(base):
            if tail_bound(len(base) - 2) > tol:
                raise TruncationInsufficient(tail_bound(len(base) - 2), tol)
            L = len(base) - 2
            break
    bound = tail_bound(L)

    total = 0.0
    for r in range(1, m + 1):
        for alpha in _compositions(m, r):
            coef = _multinomial(m, alpha)
            if r == 1:
                total += coef * float(pi1 @ gX ** alpha[0]) * float(pi2 @ gW ** alpha[0])
            elif r == 2:
                a, b = alpha
                xl = pi1 * gX ** a
                wl = pi2 * gW ** a
                vx = gX ** b
                vw = gW ** b
                acc = 0.0
                for _j in range(1, L + 1):
                    vx = H1 @ vx
                    vw = P2 @ vw
                    acc += float(xl @ vx) * float(wl @ vw)
                total += coef * acc
            else:
                rowsX = np.empty((L + 1, x_model.d))
                rowsW = np.empty((L + 1, w_model.d))
                ux = pi1 * gX
                uw = pi2 * gW
                for j in range(L + 1):
                    rowsX[j] = ux
                    rowsW[j] = uw
                    ux = ux @ H1
                    uw = uw @ P2
                colsX = np.empty((L + 1, x_model.d))
                colsW = np.empty((L + 1, w_model.d))
                vx = gX.copy()
                vw = gW.copy()
                for j in range(L + 1):
                    colsX[j] = vx
                    colsW[j] = vw
                    vx = H1 @ vx
                    vw = P2 @ vw
                MX = rowsX[1:] @ (colsX[1:] * gX).T
                MW = rowsW[1:] @ (colsW[1:] * gW).T
                total += coef * float((MX * MW).sum())
    return SeriesValue(total, bound)


# --- chain file interface ----------------------------------------------------

def model_from_dict(obj: dict) -> FiniteMarkovModel:
    """Build a model from the chain-file form
    {states: [labels], P: [[...]], s: [...], nu: [...]}; reals may be
    decimal strings or doubles."""
    def conv(x):
        if isinstance(x, list):
            return [conv(v) for v in x]
        return float(x)

    return FiniteMarkovModel(
        states=tuple(obj["states"]),
        P=np.array(conv(obj["P"]), dtype=float),
        s=np.array(conv(obj["s"]), dtype=float),
        nu=np.array(conv(obj["nu"]), dtype=float),
    )


def load_model(path) -> FiniteMarkovModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def model_to_dict(model: FiniteMarkovModel) -> dict:
    return {
        "states": list(model.states),
        "P": model.P.tolist(),
        "s": model.s.tolist(),
        "nu": model.nu.tolist(),
    }
