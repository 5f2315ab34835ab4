"""Kernel regression at a point, bandwidth rules, and the studentized statistic.

The regression estimate is the kernel-weighted average

    f_hat(x) = sum_t Z_t K((X_t - x)/h) / sum_t K((X_t - x)/h),

reported together with S_n(K_{x,h}) = sum_t h^{-1} K((X_t - x)/h), the
occupation count T_C(n) of a reference window C around x, and the local
density estimate p_hat_C(x) = S_n(K_{x,h}) / T_C(n).

Because the regressor is null recurrent, a realization may simply never
visit x: an empty neighborhood is a routine outcome and is raised as an
error for the caller to count, never silently zeroed.

The studentized statistic

    sqrt( sum_t K((X_t - x)/h) / ||K||_2^2 ) * (f_hat(x) - f(x))

is asymptotically standard normal when the disturbance has unit variance;
the Monte Carlo harness collects it across replications.

Bandwidths follow the local rule h = c0 * (T_C(n) p_hat_C(x))^{-1/5}, with
the pilot density taken at a fixed reference bandwidth of one tenth of the
window width; the constant c0 can be chosen by leave-one-out
cross-validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    AllNeighborhoodsEmpty,
    EmptyNeighborhood,
    EmptyOccupation,
    InvalidSpec,
)

DEFAULT_WINDOW_HALFWIDTH = 2.5
_SQRT_PI = math.sqrt(math.pi)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Kernel:
    """Compactly supported kernel: Epanechnikov (default) or a truncated,
    renormalized Gaussian.  Integrates to one, symmetric; the squared
    L2 norm is exposed because the studentized statistic divides by it."""

    kind: str
    c: float = 0.0

    def __post_init__(self):
        if self.kind not in ("epanechnikov", "gaussian_truncated"):
            raise InvalidSpec(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian_truncated" and self.c <= 0:
            raise InvalidSpec("gaussian_truncated needs a truncation radius c > 0")

    @property
    def support_radius(self) -> float:
        return 1.0 if self.kind == "epanechnikov" else self.c

    @property
    def l2_norm_sq(self) -> float:
        if self.kind == "epanechnikov":
            return 0.6
        z = math.erf(self.c / math.sqrt(2.0))
        return math.erf(self.c) / (2.0 * _SQRT_PI * z * z)

    def weights(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "epanechnikov":
            return 0.75 * np.maximum(0.0, 1.0 - u * u)
        z = math.erf(self.c / math.sqrt(2.0))
        inside = np.abs(u) <= self.c
        return np.where(inside, np.exp(-0.5 * u * u) / (_SQRT_2PI * z), 0.0)


EPANECHNIKOV = Kernel("epanechnikov")


def gaussian_truncated(c: float) -> Kernel:
    return Kernel("gaussian_truncated", c=c)


@dataclass(frozen=True)
class EstimateReport:
    """The estimate at one evaluation point with its local diagnostics."""

    x_eval: float
    h: float
    f_hat: float
    sum_k: float
    t_c: int
    p_hat_c: Optional[float]
    studentized: Optional[float] = None


def default_window(x_eval: float) -> tuple[float, float]:
    return (x_eval - DEFAULT_WINDOW_HALFWIDTH, x_eval + DEFAULT_WINDOW_HALFWIDTH)


def nw_estimate(x, z, x_eval: float, h: float, kernel: Kernel = EPANECHNIKOV,
                window: Optional[tuple[float, float]] = None,
                f_true_at_x: Optional[float] = None) -> EstimateReport:
    """Kernel-weighted average of z at x_eval with bandwidth h.

    Raises EmptyNeighborhood when no observation has positive weight; by
    construction f_hat lies between the smallest and largest z that do."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.shape != z.shape:
        raise ValueError("x and z must have equal length")
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    k = kernel.weights((x - x_eval) / h)
    raw = float(k.sum())
    if raw <= 0.0:
        raise EmptyNeighborhood(f"no observations within the kernel support at {x_eval!r}")
    f_hat = float((z * k).sum() / raw)
    lo, hi = window if window is not None else default_window(x_eval)
    t_c = int(((x >= lo) & (x <= hi)).sum())
    sum_k = raw / h
    p_hat_c = sum_k / t_c if t_c > 0 else None
    stud = None
    if f_true_at_x is not None:
        stud = math.sqrt(raw / kernel.l2_norm_sq) * (f_hat - f_true_at_x)
    return EstimateReport(x_eval=float(x_eval), h=float(h), f_hat=f_hat,
                          sum_k=sum_k, t_c=t_c, p_hat_c=p_hat_c, studentized=stud)


def studentized(x, z, x_eval: float, h: float, kernel: Kernel,
                f_true_at_x: float) -> float:
    """sqrt(h S_n(K_{x,h}) / ||K||^2) * (f_hat - f(x)); invariant under
    relabeling of the data and under common shifts of z and f(x)."""
    return nw_estimate(x, z, x_eval, h, kernel, f_true_at_x=f_true_at_x).studentized


def local_bandwidth(x, x_eval: float, window: Optional[tuple[float, float]] = None,
                    c0: float = 1.0, kernel: Kernel = EPANECHNIKOV) -> float:
    """h = c0 * (T_C(n) p_hat_C(x))^{-1/5}, the null-recurrent analogue of the
    usual n^{-1/5} rate: the effective sample size is the local one.

    The pilot p_hat_C uses the fixed reference bandwidth width(C)/10."""
    x = np.asarray(x, dtype=float)
    lo, hi = window if window is not None else default_window(x_eval)
    t_c = int(((x >= lo) & (x <= hi)).sum())
    if t_c == 0:
        raise EmptyOccupation(f"no observations in the window {(lo, hi)!r}")
    h_ref = (hi - lo) / 10.0
    raw = float(kernel.weights((x - x_eval) / h_ref).sum())
    if raw <= 0.0:
        raise EmptyNeighborhood(f"pilot neighborhood at {x_eval!r} is empty")
    p_hat = raw / h_ref / t_c
    return c0 * (t_c * p_hat) ** (-0.2)


def cv_constant(x, z, grid, kernel: Kernel = EPANECHNIKOV,
                window_halfwidth: float = DEFAULT_WINDOW_HALFWIDTH) -> float:
    """Pick the bandwidth constant c0 from `grid` minimizing the leave-one-out
    squared prediction error under the local bandwidth rule, skipping points
    whose leave-one-out neighborhood is empty."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    n = len(x)
    if n < 20:
        raise ValueError("cross-validation needs at least 20 observations")
    grid = list(grid)
    if not grid:
        raise ValueError("empty candidate grid")

    h_ref = 2.0 * window_halfwidth / 10.0
    diffs = x[None, :] - x[:, None]  # diffs[t, s] = x_s - x_t
    pilot = kernel.weights(diffs / h_ref).sum(axis=1) / h_ref  # T_C p_hat at each point

    best_c0, best_err = None, math.inf
    for c0 in grid:
        if pilot.min() <= 0.0:
            continue
        h = c0 * pilot ** (-0.2)
        W = kernel.weights(diffs / h[:, None])
        np.fill_diagonal(W, 0.0)
        wsum = W.sum(axis=1)
        usable = wsum > 0.0
        if not usable.any():
            continue
        pred = (W[usable] @ z) / wsum[usable]
        err = float(((z[usable] - pred) ** 2).sum())
        if err < best_err:
            best_err, best_c0 = err, c0
    if best_c0 is None:
        raise AllNeighborhoodsEmpty("every leave-one-out neighborhood was empty "
                                    "for every candidate constant")
    return best_c0


def modal_value(x, kernel: Kernel = EPANECHNIKOV, pilot_h: Optional[float] = None) -> float:
    """The observation maximizing the kernel density estimate over the sample,
    a realization-dependent central evaluation point.

    Ties (within one part in 1e12) go to the leftmost observation.  The
    default pilot bandwidth is Silverman's 1.06 sd n^{-1/5}."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("modal_value needs a nonempty sample")
    if x.size == 1:
        return float(x[0])
    if pilot_h is None:
        sd = float(x.std())
        pilot_h = 1.06 * sd * x.size ** (-0.2) if sd > 0 else 1.0

    xs = np.sort(x)
    if kernel.kind == "epanechnikov":
        dens = _epanechnikov_counts(xs, pilot_h)
    else:
        radius = kernel.support_radius * pilot_h
        lo = np.searchsorted(xs, xs - radius, side="left")
        hi = np.searchsorted(xs, xs + radius, side="right")
        dens = np.empty(xs.size)
        for i in range(xs.size):
            dens[i] = kernel.weights((xs[lo[i]:hi[i]] - xs[i]) / pilot_h).sum()
    dmax = float(dens.max())
    thresh = dmax - abs(dmax) * 1e-12
    return float(xs[dens >= thresh][0])


def _epanechnikov_counts(xs: np.ndarray, h: float) -> np.ndarray:
    """sum_j (1 - ((x_j - x_i)/h)^2)_+ for sorted xs via prefix sums."""
    lo = np.searchsorted(xs, xs - h, side="left")
    hi = np.searchsorted(xs, xs + h, side="right")
    c1 = np.concatenate([[0.0], np.cumsum(xs)])
    c2 = np.concatenate([[0.0], np.cumsum(xs * xs)])
    cnt = (hi - lo).astype(float)
    s1 = c1[hi] - c1[lo]
    s2 = c2[hi] - c2[lo]
    return cnt - (s2 - 2.0 * xs * s1 + cnt * xs * xs) / (h * h)
