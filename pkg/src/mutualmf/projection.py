"""Haar-random subspaces and pushforwards of measure pairs.

A subspace ``V`` of dimension ``m`` in ``R^n`` is stored through an
orthonormal basis; projecting an atom returns its ``m`` basis coordinates,
which identifies ``V`` isometrically with ``R^m``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .measure import GridMeasure, PointCloud, _accumulate, _check_addressable, _ravel, grid_to_cloud

__all__ = [
    "Subspace",
    "sample_grassmann",
    "project_cloud",
    "regrid",
    "project_pair",
    "pair_clouds",
    "project_clouds",
    "save_subspace",
    "load_subspace",
]

ORTHO_TOL = 1e-12
MAX_CONDITION = 1e8
MAX_ATTEMPTS = 16


@dataclass(frozen=True, eq=False)
class Subspace:
    """``m`` orthonormal vectors spanning a subspace of ``R^n`` (rows of ``basis``)."""

    basis: np.ndarray

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.basis, dtype=np.float64))
        m, n = B.shape
        if not 0 < m <= n:
            raise ValueError(f"need 0 < m <= n, got m={m}, n={n}")
        resid = np.max(np.abs(B @ B.T - np.eye(m)))
        if resid > ORTHO_TOL:
            raise ValueError(f"basis is not orthonormal (residual {resid:.3g})")
        B.flags.writeable = False
        object.__setattr__(self, "basis", B)

    @property
    def m(self) -> int:
        return self.basis.shape[0]

    @property
    def n(self) -> int:
        return self.basis.shape[1]

    def orthonormality_residual(self) -> float:
        return float(np.max(np.abs(self.basis @ self.basis.T - np.eye(self.m))))

    def projector(self) -> np.ndarray:
        """Orthogonal projection matrix onto ``V`` in ambient coordinates."""
        return self.basis.T @ self.basis

    @classmethod
    def identity(cls, n: int) -> "Subspace":
        return cls(np.eye(n))

    @classmethod
    def axis(cls, n: int, axes) -> "Subspace":
        return cls(np.eye(n)[list(axes)])


def _mgs(A: np.ndarray, passes: int = 2) -> np.ndarray:
    """Modified Gram-Schmidt on the columns of ``A``; returns orthonormal rows.

    One pass loses orthogonality in proportion to ``cond(A)``; a second pass
    brings the residual back to a few ulps.
    """
    Q = A.astype(np.float64, copy=True)
    n, m = Q.shape
    for _ in range(passes):
        for k in range(m):
            Q[:, k] /= np.linalg.norm(Q[:, k])
            for i in range(k + 1, m):
                Q[:, i] -= np.dot(Q[:, k], Q[:, i]) * Q[:, k]
    return Q.T


def sample_grassmann(n: int, m: int, seed: int) -> Subspace:
    """Haar-distributed ``m``-dimensional subspace of ``R^n``.

    An ``n x m`` standard normal matrix is orthonormalized; the law of its
    column span is rotation invariant.  Ill-conditioned draws are redrawn from
    the next substream of the same seed.
    """
    if not 0 < m <= n:
        raise ValueError(f"need 0 < m <= n, got m={m}, n={n}")
    for attempt in range(MAX_ATTEMPTS):
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(attempt,))
        A = np.random.Generator(np.random.PCG64(ss)).standard_normal((n, m))
        if np.linalg.cond(A) > MAX_CONDITION:
            continue
        return Subspace(_mgs(A))
    raise RuntimeError(f"no well-conditioned draw in {MAX_ATTEMPTS} attempts (seed {seed})")


def project_cloud(pc: PointCloud, V: Subspace) -> PointCloud:
    """Push atoms forward to their ``V``-coordinates; weights are untouched."""
    if pc.dim != V.n:
        raise ValueError(f"cloud lives in R^{pc.dim}, subspace in R^{V.n}")
    return PointCloud(pc.positions @ V.basis.T, pc.weights)


def _auto_box(*clouds):
    lo = np.min([c.positions.min(axis=0) for c in clouds], axis=0)
    hi = np.max([c.positions.max(axis=0) for c in clouds], axis=0)
    hi = np.where(hi > lo, hi, lo + 1.0)
    return lo, hi


def regrid(pc: PointCloud, base: int, depth: int, box="auto") -> GridMeasure:
    """Deposit atom weights into the cells of a ``base``-adic grid.

    ``box`` is ``"auto"`` (tight bounding box of the atoms), ``"unit"`` (the
    unit cube, no rescale) or an explicit ``(lo, hi)`` pair.  The box is
    mapped affinely onto ``[0, 1]^m`` and recorded as the result's ``frame``.
    Cells are half-open on the left, ``(k/N, (k+1)/N]``, with ``0`` in cell 0,
    so an atom on an interior edge goes to the lower-index cell.
    """
    dim = pc.dim
    _check_addressable(base, dim, depth)
    if isinstance(box, str):
        if box == "auto":
            lo, hi = _auto_box(pc)
        elif box == "unit":
            lo, hi = np.zeros(dim), np.ones(dim)
        else:
            raise ValueError(f"unknown box mode {box!r}")
    else:
        lo, hi = (np.broadcast_to(np.asarray(b, dtype=np.float64), (dim,)) for b in box)
    if np.any(hi <= lo):
        raise ValueError("box must have positive extent on every axis")
    pos = pc.positions
    if np.any(pos < lo) or np.any(pos > hi):
        raise ValueError("atom outside the declared bounding box")
    side = base**depth
    scaled = (pos - lo) / (hi - lo) * side
    cells = np.clip(np.ceil(scaled).astype(np.int64) - 1, 0, side - 1)
    keys = _ravel(cells, side) if dim > 1 else cells[:, 0]
    live = pc.weights > 0
    uniq, sums = _accumulate(keys[live], pc.weights[live], side**dim)
    return GridMeasure(base, dim, depth, uniq, sums.astype(np.float64),
                       frame=(np.array(lo), np.array(hi)))


def project_pair(mu: GridMeasure, nu: GridMeasure, V: Subspace, base=None, depth=None,
                 box="auto"):
    """Project both measures with ``V`` and regrid them in one shared frame."""
    return project_clouds(*pair_clouds(mu, nu), V,
                          mu.base if base is None else base,
                          mu.depth if depth is None else depth, box)


def pair_clouds(mu: GridMeasure, nu: GridMeasure):
    """Cell-center clouds of a pair; atom positions are shared when supports agree."""
    if (mu.base, mu.dim, mu.depth) != (nu.base, nu.dim, nu.depth):
        raise ValueError("measures must share a grid")
    ca = grid_to_cloud(mu)
    if np.array_equal(mu.index, nu.index):
        return ca, PointCloud(ca.positions, nu.mass)
    return ca, grid_to_cloud(nu)


def project_clouds(ca: PointCloud, cb: PointCloud, V: Subspace, base: int, depth: int,
                   box="auto"):
    pa, pb = project_cloud(ca, V), project_cloud(cb, V)
    if isinstance(box, str) and box == "auto":
        box = _auto_box(pa, pb)
    return regrid(pa, base, depth, box), regrid(pb, base, depth, box)


_VLINE = re.compile(r"^v_(\d+)\s*=\s*\((.*)\)\s*$")


def save_subspace(V: Subspace, path) -> None:
    lines = [
        f"v_{i} = (" + ", ".join(f"{x:.17g}" for x in row) + ")"
        for i, row in enumerate(V.basis.tolist())
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_subspace(path) -> Subspace:
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        match = _VLINE.match(line.strip())
        if not match:
            raise ValueError(f"{path}: cannot parse {line!r}")
        rows.append([float(x) for x in match.group(2).split(",")])
    if not rows:
        raise ValueError(f"{path}: no basis vectors")
    return Subspace(np.array(rows))
