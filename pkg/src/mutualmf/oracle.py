"""Reference values for the estimators.

Two independent sources of truth:

* the self-similar auxiliary equation ``sum_i p_i^q w_i^t c_i^beta = 1``,
  whose root is the mutual dimension function of a pair sharing one IFS
  geometry, and its implicit derivatives;
* exhaustive search over finite families of b-adic cells for the covering
  and packing sums ``sum mu(Q)^q nu(Q)^t |Q|^s``.

Admissible families are restricted to b-adic cells (not centered balls) so
that enumeration is finite; this moves constants but not the exponents of the
self-similar families used here.  On a finite instance the extra
decomposition and subset layers of the generalized measures are attained by
the whole set, so they are not enumerated.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .measure import GridMeasure, SelfSimilarSpec

__all__ = [
    "analytic_tau",
    "analytic_gradient",
    "PremeasureOptimum",
    "brute_force_search",
    "brute_force_premeasure",
    "brute_force_critical_s",
    "save_oracle_csv",
]

BRACKET_LIMIT = 64.0
MAX_BISECTIONS = 200
RESIDUAL_TOL = 1e-12
MAX_FAMILIES = 10**6


def _branch_logs(spec: SelfSimilarSpec, q: float, t: float):
    """``log(p_i^q w_i^t)`` and ``log c_i`` over the branches that contribute."""
    terms, logc, lp, lw = [], [], [], []
    for p, w, c in zip(spec.p, spec.w, spec.ratios):
        if p == 0 or w == 0:
            if (p == 0 and q <= 0) or (w == 0 and t <= 0):
                raise ValueError(
                    f"branch with p={p}, w={w} is degenerate at (q, t) = ({q}, {t})"
                )
            continue
        terms.append(q * math.log(p) + t * math.log(w))
        logc.append(math.log(c))
        lp.append(math.log(p))
        lw.append(math.log(w))
    return np.array(terms), np.array(logc), np.array(lp), np.array(lw)


def _log_equation(a, logc, beta):
    # log of sum_i exp(a_i + beta log c_i); strictly decreasing in beta
    x = a + beta * logc
    top = x.max()
    return top + math.log(math.fsum(np.exp(x - top)))


def _bisect(a, logc):
    lo, hi = -1.0, 1.0
    while _log_equation(a, logc, lo) < 0 or _log_equation(a, logc, hi) > 0:
        if hi >= BRACKET_LIMIT:
            raise ValueError(f"no root bracket within [-{BRACKET_LIMIT:g}, {BRACKET_LIMIT:g}]")
        lo, hi = 2 * lo, 2 * hi
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        g = _log_equation(a, logc, mid)
        if abs(g) < RESIDUAL_TOL or mid in (lo, hi):
            return mid
        if g > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def analytic_tau(spec: SelfSimilarSpec, q: float, t: float, method: str = "auto") -> float:
    """Root ``beta`` of ``sum_i p_i^q w_i^t c_i^beta = 1``.

    With ``method="auto"`` equal ratios ``c_i = 1/b`` use the closed form
    ``log_b sum_i p_i^q w_i^t``; otherwise (or with ``method="bisect"``) the
    root is bracketed and bisected.
    """
    a, logc, _, _ = _branch_logs(spec, q, t)
    if a.size == 0:
        raise ValueError("no contributing branch")
    if method not in ("auto", "bisect", "closed"):
        raise ValueError(f"unknown method {method!r}")
    equal = np.all(logc == logc[0])
    if method == "closed" or (method == "auto" and equal):
        if not equal:
            raise ValueError("closed form needs equal ratios")
        top = a.max()
        return (top + math.log(math.fsum(np.exp(a - top)))) / -logc[0]
    return _bisect(a, logc)


def equation_residual(spec: SelfSimilarSpec, q: float, t: float, beta: float) -> float:
    """``sum_i p_i^q w_i^t c_i^beta - 1``."""
    a, logc, _, _ = _branch_logs(spec, q, t)
    return math.fsum(np.exp(a + beta * logc)) - 1.0


def analytic_gradient(spec: SelfSimilarSpec, q: float, t: float):
    """``(alpha, beta) = (-d tau/dq, -d tau/dt)`` by implicit differentiation."""
    a, logc, lp, lw = _branch_logs(spec, q, t)
    tau = analytic_tau(spec, q, t)
    z = np.exp(a + tau * logc)
    den = math.fsum(z * logc)
    return math.fsum(z * lp) / den, math.fsum(z * lw) / den


# --- brute force ----------------------------------------------------------

@dataclass
class PremeasureOptimum:
    """Exhaustive optimum of a cell-family sum on a small 1-d instance."""

    mode: str
    radii: str
    base: int
    depth: int
    q: float
    t: float
    s: float
    j: int
    value: float
    family: list
    n_families: int
    admissible: str = "b-adic cells of the grid (balls replaced by cells)"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _cell_masses(m: GridMeasure):
    """Masses of every cell at every depth, summed directly from the finest cells."""
    fine = dict(zip(m.index.tolist(), m.mass.tolist()))
    out = {}
    for d in range(m.depth + 1):
        width = m.base ** (m.depth - d)
        cells = {}
        for k, v in fine.items():
            cells.setdefault(k // width, []).append(v)
        out[d] = {c: math.fsum(vs) for c, vs in cells.items()}
    return out


def _charged(mu_cells, nu_cells, d):
    return sorted(c for c in mu_cells[d] if c in nu_cells[d])


def _count_antichains(cell, d, depth, base, kids):
    if d == depth:
        return 2
    prod = 1
    for ch in kids(cell, d):
        prod *= _count_antichains(ch, d + 1, depth, base, kids)
    return 1 + prod


def _antichains(cell, d, depth, kids):
    """All families of pairwise disjoint cells inside ``cell`` (including empty)."""
    yield ((d, cell),)
    if d == depth:
        yield ()
        return
    children = list(kids(cell, d))
    if not children:
        yield ()
        return
    for combo in itertools.product(*(list(_antichains(ch, d + 1, depth, kids)) for ch in children)):
        yield tuple(itertools.chain.from_iterable(combo))


def brute_force_search(mu: GridMeasure, nu: GridMeasure, q: float, t: float, s: float, j: int,
                       mode: str = "packing", radii: str = "mixed") -> PremeasureOptimum:
    """Exhaustively optimize ``sum mu(Q)^q nu(Q)^t |Q|^s`` over cell families.

    ``mode="packing"`` maximizes over families of pairwise disjoint jointly
    charged cells; ``mode="covering"`` minimizes over such families that cover
    every jointly charged finest cell.  ``radii="mixed"`` admits cells of any
    depth ``>= j`` (side at most ``base**-j``); ``radii="equal"`` admits only
    depth-``j`` cells.
    """
    if mode not in ("packing", "covering"):
        raise ValueError("mode must be 'packing' or 'covering'")
    if radii not in ("mixed", "equal"):
        raise ValueError("radii must be 'mixed' or 'equal'")
    if mu.dim != 1 or nu.dim != 1:
        raise ValueError("brute force is limited to 1-d measures")
    if (mu.base, mu.depth) != (nu.base, nu.depth):
        raise ValueError("measures must share a grid")
    base, depth = mu.base, mu.depth
    if not 0 <= j <= depth:
        raise ValueError(f"level {j} outside [0, {depth}]")
    mc, nc = _cell_masses(mu), _cell_masses(nu)
    charged = {d: set(_charged(mc, nc, d)) for d in range(depth + 1)}
    leaves = charged[depth]
    if not leaves:
        raise ValueError("empty joint support")

    def term(d, c):
        return mc[d][c] ** q * nc[d][c] ** t * float(base) ** (-d * s)

    def kids(c, d):
        return [k for k in range(c * base, (c + 1) * base) if k in charged[d + 1]]

    roots = sorted(charged[j])
    if radii == "equal":
        n_fam = 2 ** len(roots)
    else:
        n_fam = 1
        for r in roots:
            n_fam *= _count_antichains(r, j, depth, base, kids)
    if n_fam > MAX_FAMILIES:
        raise ValueError(
            f"instance has {n_fam} admissible families (limit {MAX_FAMILIES}); "
            f"base={base} depth={depth} j={j} radii={radii}"
        )

    def families():
        if radii == "equal":
            for mask in itertools.product((False, True), repeat=len(roots)):
                yield tuple((j, r) for r, keep in zip(roots, mask) if keep)
        else:
            per_root = [list(_antichains(r, j, depth, kids)) for r in roots]
            for combo in itertools.product(*per_root):
                yield tuple(itertools.chain.from_iterable(combo))

    def covers(fam):
        got = set()
        for d, c in fam:
            width = base ** (depth - d)
            got.update(range(c * width, (c + 1) * width))
        return leaves <= got

    best, best_fam = None, None
    for fam in families():
        if mode == "covering" and not covers(fam):
            continue
        value = math.fsum(term(d, c) for d, c in fam)
        if best is None or (value > best if mode == "packing" else value < best):
            best, best_fam = value, fam
    if best is None:
        raise ValueError("no admissible family covers the joint support")
    return PremeasureOptimum(mode, radii, base, depth, float(q), float(t), float(s), int(j),
                             float(best), [list(x) for x in best_fam], int(n_fam))


def brute_force_premeasure(mu, nu, q, t, s, j, mode="packing", radii="mixed") -> float:
    """Optimal value of :func:`brute_force_search`."""
    return brute_force_search(mu, nu, q, t, s, j, mode, radii).value


def brute_force_critical_s(mu, nu, q, t, j_list, mode="packing", per_scale=False):
    """Scaling trend of the equal-radius optimum across depths.

    At depth ``j`` every admissible cell has side ``base**-j``, so the optimum
    ``V_j(s) = V_j(0) base**(-j s)`` crosses 1 at ``s_j = log V_j(0) / (j log base)``.
    Returns the least-squares slope of ``log V_j(0)`` against ``j log base``
    over ``j_list``; with ``per_scale=True`` also returns the list of ``s_j``.
    """
    j_list = sorted(int(j) for j in j_list)
    if len(j_list) < 2:
        raise ValueError("need at least two depths")
    log_b = math.log(mu.base)
    logs = [math.log(brute_force_premeasure(mu, nu, q, t, 0.0, j, mode, "equal")) for j in j_list]
    x = np.array(j_list, dtype=float) * log_b
    y = np.array(logs)
    slope = float(np.dot(x - x.mean(), y - y.mean()) / np.dot(x - x.mean(), x - x.mean()))
    if per_scale:
        return slope, [lv / (j * log_b) if j else float("nan") for lv, j in zip(logs, j_list)]
    return slope


def save_oracle_csv(spec: SelfSimilarSpec, q_grid, t_grid, path) -> None:
    with open(path, "w") as fh:
        fh.write("q,t,beta_analytic\n")
        for q in q_grid:
            for t in t_grid:
                fh.write(f"{q:.12g},{t:.12g},{analytic_tau(spec, float(q), float(t)):.12g}\n")
