"""Discrete measures on b-adic grids of the unit cube.

A :class:`GridMeasure` stores the masses of the charged cells of the depth-``L``
grid of ``[0, 1]^n`` with ``base**L`` cells per axis.  Cells are keyed by a
flattened row-major index (first axis most significant), kept in ascending
order so that every reduction over cells runs in a fixed order.

Generators in this module build the measure pairs used throughout the
package: multinomial cascades (including Cantor-type IFS measures whose
pieces sit on the b-adic grid), products, and the MMF1 text format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "GridMeasure",
    "PointCloud",
    "SelfSimilarSpec",
    "multinomial_cascade",
    "product_measure",
    "point_mass",
    "coarsen",
    "grid_to_cloud",
    "save",
    "load",
    "MeasureFormatError",
    "PRESETS",
    "make_pair",
]

MASS_TOL = 1e-9
# largest flattened index space addressable with int64 keys
MAX_INDEX_BITS = 62
MAX_STORED_CELLS = 1 << 26
# dense accumulation buffer limit (entries) used by the coarsening kernel
_DENSE_LIMIT = 1 << 24


class MeasureFormatError(ValueError):
    """Raised when an MMF1 file is malformed or violates measure invariants."""


def _check_addressable(base: int, dim: int, depth: int) -> None:
    if base < 2:
        raise ValueError(f"base must be >= 2, got {base}")
    if dim < 1:
        raise ValueError(f"ambient dimension must be >= 1, got {dim}")
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    bits = depth * dim * math.log2(base)
    if bits > MAX_INDEX_BITS:
        raise OverflowError(
            f"grid base={base} dim={dim} depth={depth} needs {bits:.1f} index bits; "
            f"at most {MAX_INDEX_BITS} are addressable"
        )


def _unravel(index: np.ndarray, side: int, dim: int) -> np.ndarray:
    """Flattened row-major keys -> integer coordinates, shape ``(len, dim)``."""
    coords = np.empty((index.size, dim), dtype=np.int64)
    rest = index.copy()
    for axis in range(dim - 1, -1, -1):
        coords[:, axis] = rest % side
        rest //= side
    return coords


def _ravel(coords: np.ndarray, side: int) -> np.ndarray:
    flat = np.zeros(coords.shape[0], dtype=np.int64)
    for axis in range(coords.shape[1]):
        flat = flat * side + coords[:, axis]
    return flat


def _parent_index(index: np.ndarray, base: int, dim: int, depth: int, shift: int) -> np.ndarray:
    """Keys of the ancestors ``shift`` levels up of depth-``depth`` cells."""
    factor = base**shift
    if dim == 1:
        return index // factor
    coords = _unravel(index, base**depth, dim)
    coords //= factor
    return _ravel(coords, base ** (depth - shift))


def _accumulate(keys: np.ndarray, values: np.ndarray, space: int):
    """Sum ``values`` grouped by ``keys`` in extended precision.

    Returns the sorted distinct keys and the per-key sums (``np.longdouble``).
    Summation visits the input in its stored order, so the result does not
    depend on anything but the input arrays.
    """
    values = np.asarray(values, dtype=np.longdouble)
    if keys.size == 0:
        return keys.astype(np.int64), values
    if np.all(keys[1:] >= keys[:-1]):
        starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
        return keys[starts], np.add.reduceat(values, starts)
    if space <= max(_DENSE_LIMIT, 4 * keys.size):
        acc = np.zeros(space, dtype=np.longdouble)
        np.add.at(acc, keys, values)
        hit = np.bincount(keys, minlength=space) > 0
        uniq = np.flatnonzero(hit).astype(np.int64)
        return uniq, acc[uniq]
    uniq, inverse = np.unique(keys, return_inverse=True)
    acc = np.zeros(uniq.size, dtype=np.longdouble)
    np.add.at(acc, inverse, values)
    return uniq, acc


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """Sparse probability measure on the depth-``depth`` ``base``-adic grid.

    Parameters
    ----------
    base : int
        Number of subdivisions per axis and level.
    dim : int
        Ambient dimension ``n``.
    depth : int
        Grid depth ``L``; each axis has ``base**depth`` cells.
    index : ndarray of int64
        Flattened row-major keys of the charged cells, strictly increasing.
    mass : ndarray of float64
        Strictly positive masses, summing to one within ``1e-9``.
    frame : tuple of ndarray, optional
        ``(lo, hi)`` corners of the box that was mapped affinely onto the unit
        cube when the measure was regridded from a point cloud.
    """

    base: int
    dim: int
    depth: int
    index: np.ndarray
    mass: np.ndarray
    frame: tuple | None = None
    _levels: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        _check_addressable(self.base, self.dim, self.depth)
        index = np.ascontiguousarray(self.index, dtype=np.int64)
        mass = np.ascontiguousarray(self.mass, dtype=np.float64)
        if index.ndim != 1 or index.shape != mass.shape:
            raise ValueError("index and mass must be 1-d arrays of equal length")
        if index.size == 0:
            raise ValueError("a probability measure needs at least one charged cell")
        if index.size > MAX_STORED_CELLS:
            raise OverflowError(f"{index.size} stored cells exceeds the limit {MAX_STORED_CELLS}")
        if np.any(index[1:] <= index[:-1]):
            raise ValueError("cell keys must be strictly increasing")
        if index[0] < 0 or index[-1] >= self.n_cells_total:
            raise ValueError("cell coordinate outside the grid")
        if not np.all(np.isfinite(mass)) or np.any(mass <= 0):
            raise ValueError("stored masses must be finite and strictly positive")
        total = float(np.sum(mass, dtype=np.longdouble))
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"total mass {total!r} differs from 1 by more than {MASS_TOL}")
        index.flags.writeable = False
        mass.flags.writeable = False
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "mass", mass)

    @property
    def side(self) -> int:
        return self.base**self.depth

    @property
    def n_cells_total(self) -> int:
        return self.side**self.dim

    @property
    def n_cells(self) -> int:
        return int(self.index.size)

    def coords(self) -> np.ndarray:
        """Integer cell coordinates, shape ``(n_cells, dim)``."""
        return _unravel(self.index, self.side, self.dim)

    def to_dict(self) -> dict:
        return {int(k): float(v) for k, v in zip(self.index, self.mass)}

    def level(self, j: int):
        """Keys and masses of the depth-``j`` cells, cached per measure."""
        if not 0 <= j <= self.depth:
            raise ValueError(f"level {j} outside [0, {self.depth}]")
        if not self._levels:
            self._build_levels()
        return self._levels[j]

    def _build_levels(self):
        levels = {self.depth: (self.index, self.mass)}
        keys = self.index
        sums = self.mass.astype(np.longdouble)
        for j in range(self.depth - 1, -1, -1):
            parents = _parent_index(keys, self.base, self.dim, j + 1, 1)
            keys, sums = _accumulate(parents, sums, self.base ** (j * self.dim))
            mass = sums.astype(np.float64)
            keys.flags.writeable = False
            mass.flags.writeable = False
            levels[j] = (keys, mass)
        self._levels.update(levels)

    def __eq__(self, other):
        if not isinstance(other, GridMeasure):
            return NotImplemented
        return (
            self.base == other.base
            and self.dim == other.dim
            and self.depth == other.depth
            and np.array_equal(self.index, other.index)
            and np.array_equal(self.mass, other.mass)
        )

    __hash__ = None

    def __repr__(self):
        return (
            f"GridMeasure(base={self.base}, dim={self.dim}, depth={self.depth}, "
            f"n_cells={self.n_cells})"
        )


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Weighted atoms in ``R^n``; weights sum to one."""

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim == 1:
            pos = pos[:, None]
        w = np.asarray(self.weights, dtype=np.float64)
        if pos.ndim != 2 or w.shape != (pos.shape[0],):
            raise ValueError("positions must be (k, n) and weights (k,)")
        if not np.all(np.isfinite(pos)):
            raise ValueError("atom positions must be finite")
        if np.any(w < 0):
            raise ValueError("atom weights must be nonnegative")
        total = float(np.sum(w, dtype=np.longdouble))
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"atom weights sum to {total!r}, expected 1")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def __len__(self):
        return self.positions.shape[0]


@dataclass(frozen=True)
class SelfSimilarSpec:
    """Shared IFS geometry with two branch probability vectors.

    ``p`` weights the first measure and ``w`` the second; both measures use the
    same contractions ``ratios`` and piece placements ``offsets`` so that
    their supports coincide.  ``offsets`` holds the lower corner of each piece,
    either as scalars (pieces in ``[0, 1]``) or as ``dim``-vectors.
    """

    p: tuple
    w: tuple
    ratios: tuple
    offsets: tuple

    def __post_init__(self):
        p = tuple(float(x) for x in self.p)
        w = tuple(float(x) for x in self.w)
        c = tuple(float(x) for x in self.ratios)
        offs = tuple(
            tuple(float(y) for y in o) if np.ndim(o) else (float(o),) for o in self.offsets
        )
        k = len(p)
        if k < 2 or not (len(w) == len(c) == len(offs) == k):
            raise ValueError("p, w, ratios and offsets must all have the same length >= 2")
        for name, vec in (("p", p), ("w", w)):
            if any(x < 0 for x in vec):
                raise ValueError(f"{name} has negative entries")
            if abs(math.fsum(vec) - 1.0) > 1e-12:
                raise ValueError(f"{name} must sum to 1, got {math.fsum(vec)!r}")
        if any(not 0.0 < x < 1.0 for x in c):
            raise ValueError("contraction ratios must lie in (0, 1)")
        if len({len(o) for o in offs}) != 1:
            raise ValueError("offsets must share one dimension")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "ratios", c)
        object.__setattr__(self, "offsets", offs)
        _check_open_set(c, offs)

    @property
    def k(self) -> int:
        return len(self.p)

    @property
    def dim(self) -> int:
        return len(self.offsets[0])

    @classmethod
    def badic(cls, p, w, base=None, digits=None):
        """Pieces of ratio ``1/base`` at the given digit positions.

        With the defaults every digit ``0..k-1`` is used, giving a full
        multinomial cascade on the base-``k`` grid.
        """
        k = len(p)
        base = k if base is None else base
        digits = list(range(k)) if digits is None else list(digits)
        return cls(p=p, w=w, ratios=(1.0 / base,) * k, offsets=tuple(d / base for d in digits))

    def product(self, other: "SelfSimilarSpec") -> "SelfSimilarSpec":
        """Cartesian product geometry; branch masses multiply."""
        if len(set(self.ratios) | set(other.ratios)) != 1:
            raise ValueError("products are only similarities when every ratio is equal")
        p, w, offs = [], [], []
        for i in range(self.k):
            for j in range(other.k):
                p.append(self.p[i] * other.p[j])
                w.append(self.w[i] * other.w[j])
                offs.append(self.offsets[i] + other.offsets[j])
        return SelfSimilarSpec(p=p, w=w, ratios=(self.ratios[0],) * len(p), offsets=offs)


def _check_open_set(ratios, offsets, eps=1e-12):
    """Reject overlapping pieces: cube interiors must be pairwise disjoint."""
    k = len(ratios)
    for i in range(k):
        lo_i = np.asarray(offsets[i])
        if np.any(lo_i < -eps) or np.any(lo_i + ratios[i] > 1 + eps):
            raise ValueError(f"piece {i} does not fit in the unit cube")
        for j in range(i + 1, k):
            lo_j = np.asarray(offsets[j])
            overlap = np.minimum(lo_i + ratios[i], lo_j + ratios[j]) - np.maximum(lo_i, lo_j)
            if np.all(overlap > eps):
                raise ValueError(f"pieces {i} and {j} overlap; open set condition fails")


def _badic_digits(spec: SelfSimilarSpec, base: int) -> np.ndarray:
    if any(abs(c * base - 1.0) > 1e-12 for c in spec.ratios):
        raise ValueError(
            f"grid construction needs every ratio equal to 1/{base}; got {spec.ratios}. "
            "Non-b-adic IFS are only available through the analytic oracle."
        )
    digits = np.rint(np.asarray(spec.offsets) * base).astype(np.int64)
    if np.any(np.abs(digits - np.asarray(spec.offsets) * base) > 1e-9):
        raise ValueError("piece offsets must be multiples of 1/base")
    return digits


def multinomial_cascade(spec: SelfSimilarSpec, which: str = "first", depth: int = 1,
                        base: int | None = None) -> GridMeasure:
    """Exact depth-``depth`` cascade of one of the two branch vectors of ``spec``.

    The cell reached by the digit string ``d_1 .. d_L`` gets mass
    ``p[d_1] * ... * p[d_L]`` (or the ``w`` product for ``which="second"``).
    Branches with zero probability produce no cells.  Multi-dimensional specs
    (from :meth:`SelfSimilarSpec.product`) are supported.
    """
    if which not in ("first", "second"):
        raise ValueError("which must be 'first' or 'second'")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if base is None:
        base = int(round(1.0 / spec.ratios[0]))
    dim = spec.dim
    _check_addressable(base, dim, depth)
    digits = _badic_digits(spec, base)
    probs = np.asarray(spec.p if which == "first" else spec.w)
    keep = probs > 0
    digits, probs = digits[keep], probs[keep]
    n_cells = probs.size**depth
    if n_cells > MAX_STORED_CELLS:
        raise OverflowError(f"cascade would store {n_cells} cells (limit {MAX_STORED_CELLS})")

    coords = np.zeros((1, dim), dtype=np.int64)
    log_space = depth * abs(math.log(probs.min())) > 650
    if log_space:
        acc = np.zeros(1)
        logp = np.log(probs)
    else:
        acc = np.ones(1)
    for _ in range(depth):
        coords = (coords[:, None, :] * base + digits[None, :, :]).reshape(-1, dim)
        if log_space:
            acc = (acc[:, None] + logp[None, :]).ravel()
        else:
            acc = (acc[:, None] * probs[None, :]).ravel()
    mass = np.exp(acc) if log_space else acc
    if np.any(mass == 0):
        raise ValueError("some cell masses underflow double precision; lower the depth")
    index = _ravel(coords, base**depth)
    order = np.argsort(index, kind="stable")
    return GridMeasure(base, dim, depth, index[order], mass[order])


def point_mass(base: int, depth: int, cell: int = 0) -> GridMeasure:
    """Unit mass in a single cell of the 1-d grid."""
    return GridMeasure(base, 1, depth, np.array([cell]), np.array([1.0]))


def product_measure(a: GridMeasure, b: GridMeasure) -> GridMeasure:
    """Product measure on the grid of dimension ``a.dim + b.dim``."""
    if a.base != b.base or a.depth != b.depth:
        raise ValueError(
            f"product needs matching grids, got base {a.base}/{b.base}, depth {a.depth}/{b.depth}"
        )
    if a.n_cells * b.n_cells > MAX_STORED_CELLS:
        raise OverflowError("product has too many cells")
    _check_addressable(a.base, a.dim + b.dim, a.depth)
    stride = b.n_cells_total
    index = (a.index[:, None] * stride + b.index[None, :]).ravel()
    mass = (a.mass[:, None] * b.mass[None, :]).ravel()
    return GridMeasure(a.base, a.dim + b.dim, a.depth, index, mass)


def coarsen(m: GridMeasure, j: int) -> GridMeasure:
    """Aggregate ``m`` onto the depth-``j`` grid.

    Child masses are accumulated in extended precision in stored order, so
    the coarse masses are the correctly rounded sums in all but pathological
    cases and total mass is preserved.
    """
    if not 0 <= j <= m.depth:
        raise ValueError(f"level {j} outside [0, {m.depth}]")
    if j == m.depth:
        return m
    keys, mass = m.level(j)
    return GridMeasure(m.base, m.dim, j, keys, mass)


def grid_to_cloud(m: GridMeasure) -> PointCloud:
    """One atom per charged cell, placed at the cell center."""
    centers = (m.coords() + 0.5) / m.side
    return PointCloud(centers, m.mass)


_HEADER = "MMF1"


def save(m: GridMeasure, path) -> None:
    """Write ``m`` in the MMF1 text format (17 significant digits)."""
    lines = [f"{_HEADER} {m.base} {m.dim} {m.depth} {m.n_cells}"]
    lines.extend(f"{k} {v:.17g}" for k, v in zip(m.index.tolist(), m.mass.tolist()))
    Path(path).write_text("\n".join(lines) + "\n")


def load(path) -> GridMeasure:
    """Read an MMF1 file, validating header, payload and measure invariants."""
    text = Path(path).read_text()
    rows = text.splitlines()
    if not rows:
        raise MeasureFormatError(f"{path}: empty file")
    head = rows[0].split()
    if len(head) != 5 or head[0] != _HEADER:
        raise MeasureFormatError(f"{path}: malformed header {rows[0]!r}")
    try:
        base, dim, depth, count = (int(x) for x in head[1:])
    except ValueError as exc:
        raise MeasureFormatError(f"{path}: non-integer header field") from exc
    body = [r for r in rows[1:] if r.strip()]
    if len(body) != count:
        raise MeasureFormatError(f"{path}: header announces {count} cells, found {len(body)}")
    index = np.empty(count, dtype=np.int64)
    mass = np.empty(count, dtype=np.float64)
    for i, row in enumerate(body):
        parts = row.split()
        if len(parts) != 2:
            raise MeasureFormatError(f"{path}: line {i + 2} is not 'index mass'")
        try:
            index[i] = int(parts[0])
            mass[i] = float(parts[1])
        except ValueError as exc:
            raise MeasureFormatError(f"{path}: line {i + 2} does not parse") from exc
    if np.any(mass < 0):
        raise MeasureFormatError(f"{path}: negative mass")
    try:
        return GridMeasure(base, dim, depth, index, mass)
    except (ValueError, OverflowError) as exc:
        raise MeasureFormatError(f"{path}: {exc}") from exc


# --- shipped pair presets ---------------------------------------------------

PRESETS = ("binomial-pair", "uniform-pair", "product-binomial", "cantor-pair", "embedded-binomial")


def _check_zero_pattern(p, w):
    if any((a == 0) != (b == 0) for a, b in zip(p, w)):
        raise ValueError("p and w must vanish on the same branches so the supports agree")


def make_pair(preset: str, depth: int, p=(0.7, 0.3), w=(0.5, 0.5), base=None):
    """Build a ``(mu, nu)`` pair with identical cell support.

    Presets
    -------
    binomial-pair
        1-d multinomial cascades of ``p`` and ``w`` (base ``len(p)`` unless given).
    uniform-pair
        Both measures uniform on the 1-d grid of the given base (default 2).
    product-binomial
        Planar products ``mu = b(p) x b(p)``, ``nu = b(w) x b(w)``.
    cantor-pair
        Base-3 cascades on the middle-thirds Cantor set, pieces at digits 0 and 2.
    embedded-binomial
        The binomial pair placed on the segment ``[0, 1] x {cell 0}`` in the plane.
    """
    p, w = tuple(p), tuple(w)
    _check_zero_pattern(p, w)
    if preset == "uniform-pair":
        b = 2 if base is None else base
        spec = SelfSimilarSpec.badic((1.0 / b,) * b, (1.0 / b,) * b)
        return (multinomial_cascade(spec, "first", depth), multinomial_cascade(spec, "second", depth))
    if preset == "cantor-pair":
        spec = SelfSimilarSpec.badic(p, w, base=3, digits=(0, 2))
        return (multinomial_cascade(spec, "first", depth, base=3),
                multinomial_cascade(spec, "second", depth, base=3))
    spec = SelfSimilarSpec.badic(p, w, base=base)
    b = int(round(1.0 / spec.ratios[0]))
    mu = multinomial_cascade(spec, "first", depth, base=b)
    nu = multinomial_cascade(spec, "second", depth, base=b)
    if preset == "binomial-pair":
        return mu, nu
    if preset == "product-binomial":
        return product_measure(mu, mu), product_measure(nu, nu)
    if preset == "embedded-binomial":
        dot = point_mass(b, depth)
        return product_measure(mu, dot), product_measure(nu, dot)
    raise ValueError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
