"""Two-parameter moment sums and the dimension functions b, B and Lambda.

For a pair ``(mu, nu)`` on a common grid the depth-``j`` moment sum is

    S_j(q, t) = sum over cells Q with mu(Q) > 0 and nu(Q) > 0 of mu(Q)**q * nu(Q)**t.

All cells of a level have the same side ``base**-j``, so the cells form a
packing and a covering at once and the critical exponent in ``s`` is the
scaling rate of ``log S_j`` in ``j * log(base)``.  The liminf/limsup-type
rates are read off as the extreme consecutive-level increments over a window
and the packing-type rate as the least-squares slope.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .measure import GridMeasure

__all__ = [
    "ScaleTable",
    "TauSurface",
    "QTRegion",
    "REGION_TAGS",
    "default_region",
    "joint_log_masses",
    "moment_sum",
    "build_scale_table",
    "estimate_dims",
    "tau_surface",
    "save_surface_csv",
    "load_surface_csv",
]

ORDER_SLACK = 1e-12
DEFAULT_J_MIN = 4

# exp() stays finite and normal for exponents inside this band
_DIRECT_BAND = 700.0


class EmptyJointSupport(ValueError):
    """The two measures charge no common cell at some level."""


def _check_pair(mu: GridMeasure, nu: GridMeasure):
    if (mu.base, mu.dim, mu.depth) != (nu.base, nu.dim, nu.depth):
        raise ValueError(
            "measures must live on the same grid: "
            f"(base, dim, depth) = {(mu.base, mu.dim, mu.depth)} vs {(nu.base, nu.dim, nu.depth)}"
        )


def joint_log_masses(mu: GridMeasure, nu: GridMeasure, j: int):
    """Log masses of the depth-``j`` cells charged by both measures.

    Returns ``(log_mu, log_nu)``, aligned by ascending cell key.
    """
    _check_pair(mu, nu)
    ka, ma = mu.level(j)
    kb, mb = nu.level(j)
    if ka.size == kb.size and np.array_equal(ka, kb):
        sa, sb = ma, mb
    else:
        _, ia, ib = np.intersect1d(ka, kb, assume_unique=True, return_indices=True)
        sa, sb = ma[ia], mb[ib]
    if sa.size == 0:
        raise EmptyJointSupport(
            f"no cell at depth {j} is charged by both measures; "
            "the supports are expected to coincide"
        )
    return np.log(sa), np.log(sb)


def _logsumexp(x: np.ndarray) -> float:
    top = float(np.max(x))
    low = float(np.min(x))
    if -_DIRECT_BAND < low and top < _DIRECT_BAND:
        # unshifted sum keeps exact monotonicity in (q, t)
        return float(np.log(np.sum(np.exp(x))))
    return top + float(np.log(np.sum(np.exp(x - top))))


def _log_sum(log_mu, log_nu, q, t) -> float:
    if q == 0 and t == 0:
        return float(np.log(log_mu.size))
    return _logsumexp(q * log_mu + t * log_nu)


def moment_sum(mu: GridMeasure, nu: GridMeasure, q: float, t: float, j: int) -> float:
    """``log S_j(q, t)`` over the jointly charged depth-``j`` cells."""
    if not 0 <= j <= min(mu.depth, nu.depth):
        raise ValueError(f"level {j} outside the grid depth")
    lm, ln = joint_log_masses(mu, nu, j)
    return _log_sum(lm, ln, q, t)


@dataclass(frozen=True)
class ScaleTable:
    q: float
    t: float
    levels: np.ndarray
    log_sums: np.ndarray
    base: int

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.int64)
        log_sums = np.asarray(self.log_sums, dtype=np.float64)
        if levels.shape != log_sums.shape or levels.ndim != 1:
            raise ValueError("levels and log_sums must be 1-d and of equal length")
        if np.any(np.diff(levels) <= 0):
            raise ValueError("levels must be strictly increasing")
        if not np.all(np.isfinite(log_sums)):
            raise ValueError("log moment sums must be finite")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "log_sums", log_sums)


def _window(mu, nu, j_min, j_max):
    depth = min(mu.depth, nu.depth)
    j_max = depth if j_max is None else j_max
    if not 1 <= j_min < j_max <= depth:
        raise ValueError(f"window {j_min}:{j_max} must satisfy 1 <= j_min < j_max <= {depth}")
    return j_min, j_max


def build_scale_table(mu, nu, q, t, j_min=DEFAULT_J_MIN, j_max=None) -> ScaleTable:
    j_min, j_max = _window(mu, nu, j_min, j_max)
    levels = np.arange(j_min, j_max + 1)
    sums = [moment_sum(mu, nu, q, t, int(j)) for j in levels]
    return ScaleTable(q, t, levels, sums, mu.base)


def _ols_weights(n_levels: int) -> np.ndarray:
    # OLS slope on equally spaced abscissae as a weighted mean of increments
    k = np.arange(n_levels - 1)
    return (k + 1) * (n_levels - 1 - k) / 1.0


def estimate_dims(table: ScaleTable):
    """Estimate ``(b, B, Lambda, r2)`` from a scale table.

    ``Lambda`` is the largest and ``b`` the smallest consecutive-level rate
    ``(log S_{j+1} - log S_j) / log(base)``; ``B`` is the least-squares slope of
    ``log S_j`` against ``j log(base)``.  The slope is evaluated as a
    positively weighted mean of the increments and clipped to their range, so
    ``b <= B <= Lambda`` holds literally.
    """
    lv, ls = table.levels, table.log_sums
    if lv.size < 3:
        raise ValueError(f"need at least 3 levels, got {lv.size}")
    if np.any(np.diff(lv) != 1):
        raise ValueError("levels must be consecutive")
    log_b = np.log(table.base)
    rates = np.diff(ls) / log_b
    lo, hi = float(rates.min()), float(rates.max())
    wts = _ols_weights(lv.size)
    slope = float(np.dot(wts, rates) / wts.sum())
    slope = min(max(slope, lo), hi)

    x = lv * log_b
    fit = ls.mean() + slope * (x - x.mean())
    ss_res = float(np.sum((ls - fit) ** 2))
    ss_tot = float(np.sum((ls - ls.mean()) ** 2))
    if ss_tot <= 1e-300 or ss_res <= 1e-24 * max(ss_tot, 1.0):
        r2 = 1.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return lo, slope, hi, r2


@dataclass(frozen=True)
class TauSurface:
    """Estimated dimension functions on a ``(q, t)`` grid (q along axis 0)."""

    q_grid: np.ndarray
    t_grid: np.ndarray
    b: np.ndarray
    B: np.ndarray
    Lambda: np.ndarray
    r2: np.ndarray
    window: tuple

    def __post_init__(self):
        for name in ("q_grid", "t_grid", "b", "B", "Lambda", "r2"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        shape = (self.q_grid.size, self.t_grid.size)
        for name in ("b", "B", "Lambda", "r2"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} must have shape {shape}")

    def rows(self):
        for i, q in enumerate(self.q_grid):
            for k, t in enumerate(self.t_grid):
                yield q, t, self.b[i, k], self.B[i, k], self.Lambda[i, k], self.r2[i, k]


def tau_surface(mu, nu, q_grid, t_grid, j_min=DEFAULT_J_MIN, j_max=None, workers=1):
    """Apply :func:`estimate_dims` over a ``(q, t)`` grid.

    Every grid point is an independent fixed-order computation, so the result
    does not depend on ``workers``.
    """
    q_grid = np.asarray(q_grid, dtype=np.float64)
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if q_grid.size == 0 or t_grid.size == 0:
        raise ValueError("grids must be nonempty")
    if np.any(np.diff(q_grid) <= 0) or np.any(np.diff(t_grid) <= 0):
        raise ValueError("grids must be sorted ascending")
    j_min, j_max = _window(mu, nu, j_min, j_max)
    levels = np.arange(j_min, j_max + 1)
    joint = [joint_log_masses(mu, nu, int(j)) for j in levels]

    def one(point):
        q, t = point
        sums = [_log_sum(lm, ln, q, t) for lm, ln in joint]
        return estimate_dims(ScaleTable(q, t, levels, sums, mu.base))

    points = [(float(q), float(t)) for q in q_grid for t in t_grid]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, points))
    else:
        results = [one(p) for p in points]
    est = np.array(results).reshape(q_grid.size, t_grid.size, 4)
    return TauSurface(q_grid, t_grid, est[..., 0], est[..., 1], est[..., 2], est[..., 3],
                      (j_min, j_max))


def save_surface_csv(surface: TauSurface, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["q", "t", "b", "B", "Lambda", "r2"])
        for row in surface.rows():
            out.writerow([f"{v:.12g}" for v in row])


def load_surface_csv(path, window=(0, 0)) -> TauSurface:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    qs = np.unique(data[:, 0])
    ts = np.unique(data[:, 1])
    shape = (qs.size, ts.size)
    cols = [data[:, c].reshape(shape) for c in range(2, 6)]
    return TauSurface(qs, ts, *cols, window)


# --- (q, t) regions ---------------------------------------------------------

def _in_neg_neg(q, t):
    return q <= 0 and t <= 0


def _in_neg_unit(q, t):
    return q <= 0 and 0 <= t <= 1


def _in_unit_neg(q, t):
    return 0 <= q <= 1 and t <= 0


REGION_TAGS = {
    "NEG_NEG": _in_neg_neg,
    "NEG_UNIT": _in_neg_unit,
    "UNIT_NEG": _in_unit_neg,
    "GE_ONE": lambda q, t: q >= 1 and t >= 1,
    "OPEN_NEG_NEG": lambda q, t: q < 0 and t < 0,
    "OPEN_NEG_UNIT": lambda q, t: q < 0 and 0 < t <= 1,
    "OPEN_UNIT_NEG": lambda q, t: 0 < q <= 1 and t < 0,
}

_DEFAULT_POINTS = {
    "NEG_NEG": [(-2.0, -2.0), (-1.0, -0.5), (-0.5, -2.0)],
    "NEG_UNIT": [(-1.0, 0.5), (-2.0, 1.0)],
    "UNIT_NEG": [(0.5, -1.0), (1.0, -2.0)],
    "GE_ONE": [(1.0, 1.0), (2.0, 1.5)],
}


@dataclass(frozen=True)
class QTRegion:
    """A hypothesis region for ``(q, t)`` plus finite witness points."""

    tag: str
    points: tuple

    def __post_init__(self):
        if self.tag not in REGION_TAGS:
            raise ValueError(f"unknown region tag {self.tag!r}")
        pts = tuple((float(q), float(t)) for q, t in self.points)
        bad = [p for p in pts if not REGION_TAGS[self.tag](*p)]
        if bad:
            raise ValueError(f"points {bad} are not in region {self.tag}")
        object.__setattr__(self, "points", pts)

    @property
    def is_open(self) -> bool:
        return self.tag.startswith("OPEN_")

    def contains(self, q, t) -> bool:
        return REGION_TAGS[self.tag](q, t)

    def on_boundary(self, q, t) -> bool:
        """True if ``(q, t)`` lies in the closed region but not in its open variant."""
        if self.tag == "GE_ONE" or self.is_open:
            return False
        return not REGION_TAGS["OPEN_" + self.tag](q, t)

    def to_json(self) -> dict:
        return {"tag": self.tag, "points": [list(p) for p in self.points]}


def default_region(tag: str) -> QTRegion:
    """Shipped witness points; open variants keep the interior ones."""
    if tag.startswith("OPEN_"):
        pts = [p for p in _DEFAULT_POINTS[tag[5:]] if REGION_TAGS[tag](*p)]
    else:
        pts = _DEFAULT_POINTS[tag]
    return QTRegion(tag, tuple(pts))
