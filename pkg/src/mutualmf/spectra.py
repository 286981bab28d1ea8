"""Legendre spectra, pointwise exponents and coarse (histogram) spectra."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .measure import GridMeasure, _parent_index
from .moments import DEFAULT_J_MIN, TauSurface, _check_pair

__all__ = [
    "LegendrePoint",
    "ExponentField",
    "HistogramSpectrum",
    "legendre",
    "pointwise_exponents",
    "histogram_spectrum",
    "ratio_set",
    "save_legendre_csv",
    "save_histogram_csv",
]

DEFAULT_BIN_WIDTH = 0.05
DEFAULT_RATIO_TOL = 0.05
# exponents this close to a bin edge are treated as lying on it
_EDGE_SNAP = 9


@dataclass(frozen=True)
class LegendrePoint:
    """Legendre triple at one grid point.

    ``f_inf`` is the direct minimum of ``alpha*q' + beta*t' + B(q', t')`` over
    the evaluation grid, kept as a consistency witness for ``f``.
    """

    q: float
    t: float
    alpha: float
    beta: float
    f: float
    f_inf: float


def _uniform_step(grid, name):
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size < 3:
        raise ValueError(f"{name} grid needs at least 3 points, got {grid.size}")
    steps = np.diff(grid)
    if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
        raise ValueError(f"{name} grid must be uniformly spaced")
    return float(steps[0])


def legendre(surface: TauSurface) -> list[LegendrePoint]:
    """Legendre transform of the packing-type function ``B`` on its grid.

    Partial derivatives use central differences in the interior and one-sided
    differences at the grid boundary.
    """
    hq = _uniform_step(surface.q_grid, "q")
    ht = _uniform_step(surface.t_grid, "t")
    B = surface.B
    dq, dt = np.gradient(B, hq, ht, edge_order=1)
    alpha, beta = -dq, -dt
    Q, T = np.meshgrid(surface.q_grid, surface.t_grid, indexing="ij")
    f = alpha * Q + beta * T + B
    out = []
    for i in range(B.shape[0]):
        for k in range(B.shape[1]):
            a, b_ = alpha[i, k], beta[i, k]
            f_inf = float(np.min(a * Q + b_ * T + B))
            out.append(LegendrePoint(float(Q[i, k]), float(T[i, k]), float(a), float(b_),
                                     float(f[i, k]), f_inf))
    return out


@dataclass(frozen=True)
class ExponentField:
    """Coarse local exponents of a pair on the cells of one level.

    ``alpha_mu`` and ``alpha_nu`` are regression slopes of ``log mu(Q_j(x))``
    and ``log nu(Q_j(x))`` against ``-j log(base)`` over the window; the
    residual arrays hold the root-mean-square regression residuals.  ``gamma``
    is ``alpha_mu / alpha_nu`` and is NaN where ``alpha_nu <= 0``.
    """

    base: int
    dim: int
    level: int
    window: tuple
    index: np.ndarray
    alpha_mu: np.ndarray
    alpha_nu: np.ndarray
    residual_mu: np.ndarray
    residual_nu: np.ndarray

    @property
    def gamma(self) -> np.ndarray:
        out = np.full(self.alpha_mu.shape, np.nan)
        ok = self.alpha_nu > 0
        out[ok] = self.alpha_mu[ok] / self.alpha_nu[ok]
        return out

    def __len__(self):
        return self.index.size


def _ancestor_log_mass(m: GridMeasure, keys: np.ndarray, level: int, j: int) -> np.ndarray:
    anc = keys if j == level else _parent_index(keys, m.base, m.dim, level, level - j)
    lk, lm = m.level(j)
    pos = np.searchsorted(lk, anc)
    return np.log(lm[pos])


def _slopes(x: np.ndarray, Y: np.ndarray):
    xc = x - x.mean()
    slope = (Y - Y.mean(axis=0)).T @ xc / np.dot(xc, xc)
    fit = Y.mean(axis=0)[None, :] + np.outer(xc, slope)
    rms = np.sqrt(np.mean((Y - fit) ** 2, axis=0))
    return slope, rms


def pointwise_exponents(mu, nu, j_min=DEFAULT_J_MIN, j_max=None, method="slope") -> ExponentField:
    """Local exponents on the jointly charged cells of depth ``j_max``.

    With ``method="slope"`` each cell's exponents are regression slopes over
    the masses of its ancestors at every level of ``j_min .. j_max``.  With
    ``method="endpoint"`` they are the coarse Hoelder exponents
    ``log m(Q) / (-j_max log base)`` of the cell itself (``j_min`` is ignored
    and the residuals are zero).
    """
    _check_pair(mu, nu)
    j_max = mu.depth if j_max is None else j_max
    if method not in ("slope", "endpoint"):
        raise ValueError(f"unknown method {method!r}")
    if method == "endpoint":
        j_min = 0
    if not 0 <= j_min < j_max <= mu.depth:
        raise ValueError(f"window {j_min}:{j_max} must hold at least 2 levels within the grid")
    ka, _ = mu.level(j_max)
    kb, _ = nu.level(j_max)
    keys = np.intersect1d(ka, kb, assume_unique=True)
    if keys.size == 0:
        raise ValueError("the measures share no charged cell")
    if method == "endpoint":
        x = -j_max * np.log(mu.base)
        am = _ancestor_log_mass(mu, keys, j_max, j_max) / x
        an = _ancestor_log_mass(nu, keys, j_max, j_max) / x
        zero = np.zeros(keys.size)
        return ExponentField(mu.base, mu.dim, j_max, (0, j_max), keys, am, an, zero, zero.copy())
    levels = np.arange(j_min, j_max + 1)
    x = -levels * np.log(mu.base)
    Ym = np.stack([_ancestor_log_mass(mu, keys, j_max, int(j)) for j in levels])
    Yn = np.stack([_ancestor_log_mass(nu, keys, j_max, int(j)) for j in levels])
    am, rm = _slopes(x, Ym)
    an, rn = _slopes(x, Yn)
    return ExponentField(mu.base, mu.dim, j_max, (j_min, j_max), keys, am, an, rm, rn)


def _bin_of(values, width, origin):
    u = np.round((np.asarray(values) - origin) / width, _EDGE_SNAP)
    # bins are (origin + k w, origin + (k+1) w]: edge values go to the lower bin
    return (np.ceil(u) - 1).astype(np.int64)


@dataclass(frozen=True)
class HistogramSpectrum:
    """Cell counts over ``(alpha, beta)`` bins and their coarse dimensions.

    Bin ``(a, b)`` covers ``(ox + a w, ox + (a+1) w] x (oy + b w, oy + (b+1) w]``
    where ``(ox, oy) = origin`` and ``w = bin_width``.
    """

    bin_width: float
    origin: tuple
    level: int
    base: int
    alpha_bins: np.ndarray
    beta_bins: np.ndarray
    counts: np.ndarray
    f: np.ndarray

    def centers(self):
        w = self.bin_width
        ax = self.origin[0] + (self.alpha_bins + 0.5) * w
        bx = self.origin[1] + (self.beta_bins + 0.5) * w
        return ax, bx

    def lookup(self, alpha, beta):
        """``(count, f)`` of the bin containing ``(alpha, beta)``; ``(0, None)`` if empty."""
        a = _bin_of(alpha, self.bin_width, self.origin[0])
        b = _bin_of(beta, self.bin_width, self.origin[1])
        hit = np.flatnonzero((self.alpha_bins == a) & (self.beta_bins == b))
        if hit.size == 0:
            return 0, None
        i = int(hit[0])
        return int(self.counts[i]), float(self.f[i])

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def histogram_spectrum(field: ExponentField, bin_width: float = DEFAULT_BIN_WIDTH,
                       j: int | None = None, origin=(0.0, 0.0)) -> HistogramSpectrum:
    """Bin the exponent field and turn each count into ``log N / (j log base)``."""
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    j = field.level if j is None else j
    a = _bin_of(field.alpha_mu, bin_width, origin[0])
    b = _bin_of(field.alpha_nu, bin_width, origin[1])
    pairs, counts = np.unique(np.stack([a, b], axis=1), axis=0, return_counts=True)
    f = np.log(counts) / (j * np.log(field.base)) if j > 0 else np.zeros(counts.size)
    return HistogramSpectrum(float(bin_width), (float(origin[0]), float(origin[1])), j,
                             field.base, pairs[:, 0], pairs[:, 1], counts, f)


def ratio_set(field: ExponentField, gamma: float, tol: float = DEFAULT_RATIO_TOL,
              j: int | None = None):
    """Cells whose exponent ratio is within ``tol`` of ``gamma``.

    Returns ``(count, dimension)``; an empty selection gives ``(0, -inf)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    j = field.level if j is None else j
    g = field.gamma
    sel = np.abs(g - gamma) <= tol
    count = int(np.count_nonzero(sel))
    if count == 0:
        return 0, float("-inf")
    return count, float(np.log(count) / (j * np.log(field.base)))


def save_legendre_csv(points, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["alpha", "beta", "f_legendre"])
        for p in points:
            out.writerow([f"{p.alpha:.12g}", f"{p.beta:.12g}", f"{p.f:.12g}"])


def save_histogram_csv(spec: HistogramSpectrum, path) -> None:
    ax, bx = spec.centers()
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["alpha_bin", "beta_bin", "count", "f_hist"])
        for a, b, c, f in zip(ax, bx, spec.counts, spec.f):
            out.writerow([f"{a:.12g}", f"{b:.12g}", int(c), f"{f:.12g}"])
