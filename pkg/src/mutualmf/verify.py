"""Numerical checks of the dimension inequalities, with JSON reports.

Every check produces a :class:`TheoremReport` whose records carry both sides
of the tested relation, the signed margin and a pass flag.  The margin is the
slack of the relation before any tolerance is applied (``rhs - lhs`` for
``<=``, ``lhs - rhs`` for ``>=`` and ``-|lhs - rhs|`` for ``==``), and a
record passes when ``margin >= -tolerance``.

Suites bundle the checks into reproducible runs: ``multinomial`` (the main
acceptance run), ``negative-controls`` (one deliberately violated instance per
check, so every checker is seen to fail) and ``quick`` (a small smoke run).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .measure import SelfSimilarSpec, make_pair, multinomial_cascade, point_mass, product_measure
from .moments import (
    ORDER_SLACK,
    DEFAULT_J_MIN,
    QTRegion,
    ScaleTable,
    TauSurface,
    _window,
    default_region,
    estimate_dims,
    joint_log_masses,
    _log_sum,
    tau_surface,
)
from .oracle import analytic_gradient, analytic_tau
from .projection import Subspace, pair_clouds, project_clouds, project_pair, sample_grassmann
from .spectra import histogram_spectrum, pointwise_exponents

__all__ = [
    "TheoremReport",
    "check_ordering",
    "check_shape",
    "check_exactness",
    "check_projection",
    "check_formalism",
    "run_suite",
    "SUITES",
    "suite_json",
    "summary",
]

DEFAULT_SHAPE_TOL = 0.02
DEFAULT_PROJECTION_TOL = 0.15
DEFAULT_V_COUNT = 20
DEFAULT_FORMALISM_TOL = 0.2
DEFAULT_PROJECTED_FORMALISM_TOL = 0.25
FORMALISM_BIN_WIDTH = 0.1

CLOSED_TAGS = ("NEG_NEG", "NEG_UNIT", "UNIT_NEG")
OPEN_TAGS = ("OPEN_NEG_NEG", "OPEN_NEG_UNIT", "OPEN_UNIT_NEG")


def _num(x):
    """JSON-safe float: non-finite values become ``None``."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _record(lhs, rhs, relation, tol, **keys):
    if lhs is None or rhs is None:
        margin = None
    elif relation == "<=":
        margin = rhs - lhs
    elif relation == ">=":
        margin = lhs - rhs
    elif relation == "==":
        margin = -abs(lhs - rhs)
    else:
        raise ValueError(f"unknown relation {relation!r}")
    margin = _num(margin)
    ok = margin is not None and margin >= -tol
    rec = dict(keys)
    rec.update(relation=relation, lhs=_num(lhs), rhs=_num(rhs), margin=margin)
    rec["pass"] = bool(ok)
    return rec


@dataclass
class TheoremReport:
    """Outcome of one check.

    ``v_count`` is kept on the object for callers but is not part of the JSON
    document, whose keys are fixed; every projection record names its ``v``.
    """

    theorem: str
    region: object
    tolerance: float
    seed: int | None
    records: list = field(default_factory=list)
    v_count: int = 0

    @property
    def pass_rate(self) -> float:
        if not self.records:
            return 0.0
        return sum(r["pass"] for r in self.records) / len(self.records)

    @property
    def passed(self) -> bool:
        return bool(self.records) and all(r["pass"] for r in self.records)

    @property
    def worst_margin(self):
        margins = [r["margin"] for r in self.records if r.get("margin") is not None]
        return min(margins) if margins else None

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "region": self.region,
            "tolerance": self.tolerance,
            "seed": self.seed,
            "records": self.records,
            "pass_rate": self.pass_rate,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _grid_region(surface: TauSurface) -> dict:
    return {"tag": "GRID", "q": surface.q_grid.tolist(), "t": surface.t_grid.tolist()}


# --- surface checks ---------------------------------------------------------

def check_ordering(surface: TauSurface, slack: float = ORDER_SLACK, name: str = "ordering",
                   seed=None) -> TheoremReport:
    """``b <= B <= Lambda`` at every grid point (violations are recorded, not raised)."""
    rep = TheoremReport(name, _grid_region(surface), slack, seed)
    for q, t, b, B, L, _ in surface.rows():
        rep.records.append(_record(b, B, "<=", slack, q=float(q), t=float(t), pair="b<=B"))
        rep.records.append(_record(B, L, "<=", slack, q=float(q), t=float(t), pair="B<=Lambda"))
    return rep


def _check_grid(grid, name):
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size >= 3:
        steps = np.diff(grid)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
            raise ValueError(f"{name} grid must be uniformly spaced")


def check_shape(surface: TauSurface, tol: float = DEFAULT_SHAPE_TOL, seed=None) -> TheoremReport:
    """Monotonicity and midpoint convexity of ``B`` and ``Lambda``.

    Monotonicity is tested between neighbours along ``q`` and along ``t``;
    midpoint convexity along both axes and both diagonals.
    """
    _check_grid(surface.q_grid, "q")
    _check_grid(surface.t_grid, "t")
    Q, T = surface.q_grid, surface.t_grid
    nq, nt = Q.size, T.size
    rep = TheoremReport("shape", _grid_region(surface), tol, seed)
    for fname, F in (("B", surface.B), ("Lambda", surface.Lambda)):
        for i in range(nq):
            for k in range(nt):
                at = {"q": float(Q[i]), "t": float(T[k]), "function": fname}
                if i + 1 < nq:
                    rep.records.append(_record(F[i + 1, k], F[i, k], "<=", tol,
                                               check="nonincreasing-q", **at))
                if k + 1 < nt:
                    rep.records.append(_record(F[i, k + 1], F[i, k], "<=", tol,
                                               check="nonincreasing-t", **at))
        for i in range(nq):
            for k in range(nt):
                at = {"q": float(Q[i]), "t": float(T[k]), "function": fname}
                for direction, (di, dk) in (("q", (1, 0)), ("t", (0, 1)),
                                           ("diagonal", (1, 1)), ("antidiagonal", (1, -1))):
                    i0, k0, i1, k1 = i - di, k - dk, i + di, k + dk
                    if not (0 <= i0 < nq and 0 <= i1 < nq and 0 <= k0 < nt and 0 <= k1 < nt):
                        continue
                    mid = 0.5 * (F[i0, k0] + F[i1, k1])
                    rep.records.append(_record(mid, F[i, k], ">=", tol,
                                               check=f"convex-{direction}", **at))
    return rep


def check_exactness(surface: TauSurface, spec: SelfSimilarSpec, tol: float = 1e-9,
                    seed=None) -> TheoremReport:
    """Estimated ``B`` against the analytic root on every grid point."""
    rep = TheoremReport("multinomial-exactness", _grid_region(surface), tol, seed)
    for q, t, _, B, _, _ in surface.rows():
        rep.records.append(_record(B, analytic_tau(spec, float(q), float(t)), "==", tol,
                                   q=float(q), t=float(t)))
    return rep


# --- projection ---------------------------------------------------------------

def _point_dims(mu, nu, points, j_min, j_max):
    """``{(q, t): (b, B, Lambda)}`` with the joint level masses computed once."""
    j_min, j_max = _window(mu, nu, j_min, j_max)
    levels = np.arange(j_min, j_max + 1)
    joint = [joint_log_masses(mu, nu, int(j)) for j in levels]
    out = {}
    for q, t in points:
        sums = [_log_sum(lm, ln, q, t) for lm, ln in joint]
        b, B, L, _ = estimate_dims(ScaleTable(q, t, levels, sums, mu.base))
        out[(q, t)] = (b, B, L)
    return out


def check_projection(mu, nu, m: int, regions=None, v_count: int = DEFAULT_V_COUNT, seed: int = 0,
                     tol: float = DEFAULT_PROJECTION_TOL, j_min: int = DEFAULT_J_MIN, j_max=None,
                     subspaces=None, box="auto", reverse: bool = False, workers: int = 1):
    """Compare the dimension functions of a pair with those of its projections.

    For ``i < v_count`` the subspace ``V_i = sample_grassmann(n, m, seed + i)``
    is drawn, the pair is pushed forward and regridded at the input depth,
    and the following reports are filled, each only if a matching region is
    supplied:

    ``lambda-projection-bound``
        ``Lambda_V <= Lambda`` on the closed regions.
    ``packing-projection-bound``
        ``B_V <= B`` on the closed regions.
    ``hausdorff-projection-equality``
        ``b_V == b`` on the open regions.
    ``hausdorff-projection-lower-bound``
        ``b_V >= b`` on ``GE_ONE``.
    ``ordering-projected``
        ``b_V <= B_V <= Lambda_V`` on every sampled point (slack ``1e-12``).

    ``m == n`` selects the identity test mode: every sample is the identity
    with the unit box, so the projected pair equals the input.  ``subspaces``
    overrides the sampler.  ``reverse=True`` swaps the two sides of the two
    bound checks; it exists for negative controls.  A sample whose projection
    fails (e.g. empty joint support) is recorded as a failing error record.

    Returns a list of :class:`TheoremReport`.
    """
    n = mu.dim
    if subspaces is None:
        if m == n:
            subspaces = [Subspace.identity(n)] * v_count
            box = "unit"
        elif not (n >= 2 and 0 < m < n):
            raise ValueError(f"need n >= 2 and 0 < m < n, got n={n}, m={m}")
        else:
            subspaces = [sample_grassmann(n, m, seed + i) for i in range(v_count)]
    subspaces = list(subspaces)
    if regions is None:
        regions = [default_region(tag) for tag in CLOSED_TAGS + OPEN_TAGS + ("GE_ONE",)]

    points = []
    for reg in regions:
        for p in reg.points:
            if p not in points:
                points.append(p)
    base_dims = _point_dims(mu, nu, points, j_min, j_max)
    j_lo, j_hi = _window(mu, nu, j_min, j_max)
    clouds = pair_clouds(mu, nu)

    def one(V):
        try:
            pa, pb = project_clouds(*clouds, V, mu.base, mu.depth, box)
            return _point_dims(pa, pb, points, j_lo, j_hi), None
        except (ValueError, OverflowError) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, subspaces))
    else:
        results = [one(V) for V in subspaces]

    closed = [r for r in regions if r.tag in CLOSED_TAGS]
    opened = [r for r in regions if r.is_open]
    ge = [r for r in regions if r.tag == "GE_ONE"]
    reports = {}

    def report(name, regs, rtol):
        rep = TheoremReport(name, [r.to_json() for r in regs], rtol, seed, v_count=len(subspaces))
        reports[name] = rep
        return rep

    lam = report("lambda-projection-bound", closed, tol) if closed else None
    pak = report("packing-projection-bound", closed, tol) if closed else None
    heq = report("hausdorff-projection-equality", opened, tol) if opened else None
    hge = report("hausdorff-projection-lower-bound", ge, tol) if ge else None
    ordr = report("ordering-projected", regions, ORDER_SLACK)

    for i, (dims, err) in enumerate(results):
        if err is not None:
            for rep in reports.values():
                rec = _record(None, None, "<=", rep.tolerance, v=i)
                rec["error"] = err
                rep.records.append(rec)
            continue
        for reg in regions:
            for q, t in reg.points:
                b, B, L = base_dims[(q, t)]
                bv, Bv, Lv = dims[(q, t)]
                at = {"v": i, "q": q, "t": t, "region": reg.tag,
                      "boundary": bool(reg.on_boundary(q, t))}
                if reg.tag in CLOSED_TAGS:
                    if reverse:
                        lam.records.append(_record(L, Lv, "<=", tol, **at))
                        pak.records.append(_record(B, Bv, "<=", tol, **at))
                    else:
                        lam.records.append(_record(Lv, L, "<=", tol, **at))
                        pak.records.append(_record(Bv, B, "<=", tol, **at))
                elif reg.is_open:
                    heq.records.append(_record(bv, b, "==", tol, **at))
                elif reg.tag == "GE_ONE":
                    hge.records.append(_record(bv, b, ">=", tol, **at))
                ordr.records.append(_record(bv, Bv, "<=", ORDER_SLACK, pair="b<=B", **at))
                ordr.records.append(_record(Bv, Lv, "<=", ORDER_SLACK, pair="B<=Lambda", **at))
    return list(reports.values())


# --- formalism ----------------------------------------------------------------

def _embedded_pair(spec: SelfSimilarSpec, depth: int):
    """The 1-d pair of ``spec`` placed on a segment of the plane."""
    b = int(round(1.0 / spec.ratios[0]))
    mu = multinomial_cascade(spec, "first", depth, base=b)
    nu = multinomial_cascade(spec, "second", depth, base=b)
    dot = point_mass(b, depth)
    return product_measure(mu, dot), product_measure(nu, dot)


def _formalism_records(rep, field_, qt_points, spec_leg, tol, width, **extra):
    j = field_.level
    for q, t in qt_points:
        alpha, beta = analytic_gradient(spec_leg, q, t)
        f_leg = alpha * q + beta * t + analytic_tau(spec_leg, q, t)
        origin = (alpha - 0.5 * width, beta - 0.5 * width)
        hist = histogram_spectrum(field_, width, j=j, origin=origin)
        count, f_hist = hist.lookup(alpha, beta)
        at = dict(extra, q=float(q), t=float(t), alpha=_num(alpha), beta=_num(beta),
                  bin=[[origin[0], origin[0] + width], [origin[1], origin[1] + width]],
                  count=count, hypothesis="assumed")
        rec = _record(f_hist, f_leg, "==", tol, **at)
        if count == 0:
            rec["diagnostic"] = (f"no level-{j} cell has exponents in the bin centered at "
                                 f"({alpha:.6g}, {beta:.6g})")
        rep.records.append(rec)


def check_formalism(spec: SelfSimilarSpec, depth: int, qt_points, tol=None,
                    bin_width: float = FORMALISM_BIN_WIDTH, projected: bool = False,
                    v_count: int = 5, seed: int = 0, legendre_spec=None) -> TheoremReport:
    """Histogram spectrum against the analytic Legendre spectrum.

    At each ``(q, t)`` the target ``(alpha, beta)`` comes from
    :func:`analytic_gradient` and ``f_leg = alpha q + beta t + tau``.  Coarse
    Hoelder exponents of the depth-``depth`` cells are binned on a grid of
    width ``bin_width`` centered on the target, and the bin's
    ``log N / (depth log b)`` is compared with ``f_leg``.

    With ``projected=True`` the pair is placed on a segment of the plane and
    pushed onto ``v_count`` Haar lines before binning (default tol 0.25).
    ``legendre_spec`` replaces the spec used for the Legendre side; negative
    controls use it.  The positivity hypothesis behind the equality cannot be
    checked numerically and every record reports it as ``"assumed"``.
    """
    if tol is None:
        tol = DEFAULT_PROJECTED_FORMALISM_TOL if projected else DEFAULT_FORMALISM_TOL
    spec_leg = spec if legendre_spec is None else legendre_spec
    qt_points = [(float(q), float(t)) for q, t in qt_points]
    region = {"tag": "POINTS", "points": [list(p) for p in qt_points]}
    if not projected:
        rep = TheoremReport("formalism", region, tol, seed)
        b = int(round(1.0 / spec.ratios[0]))
        mu = multinomial_cascade(spec, "first", depth, base=b)
        nu = multinomial_cascade(spec, "second", depth, base=b)
        field_ = pointwise_exponents(mu, nu, j_max=depth, method="endpoint")
        _formalism_records(rep, field_, qt_points, spec_leg, tol, bin_width)
        return rep
    rep = TheoremReport("formalism-projected", region, tol, seed, v_count=v_count)
    mu, nu = _embedded_pair(spec, depth)
    for i in range(v_count):
        V = sample_grassmann(mu.dim, 1, seed + i)
        try:
            pa, pb = project_pair(mu, nu, V)
            field_ = pointwise_exponents(pa, pb, j_max=depth, method="endpoint")
        except ValueError as exc:
            rec = _record(None, None, "==", tol, v=i)
            rec["error"] = f"{type(exc).__name__}: {exc}"
            rep.records.append(rec)
            continue
        _formalism_records(rep, field_, qt_points, spec_leg, tol, bin_width, v=i)
    return rep


# --- suites ---------------------------------------------------------------------

GRID = np.round(np.arange(-2.0, 2.0 + 1e-9, 0.5), 12)
FORMALISM_POINTS = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]


def _binomial_spec(p=(0.7, 0.3), w=(0.5, 0.5)):
    return SelfSimilarSpec.badic(p, w)


def _multinomial(seed, workers, depth=14, formalism_depth=12, projection_depth=12,
                 v_count=DEFAULT_V_COUNT):
    spec = _binomial_spec()
    mu = multinomial_cascade(spec, "first", depth)
    nu = multinomial_cascade(spec, "second", depth)
    surf = tau_surface(mu, nu, GRID, GRID, j_min=DEFAULT_J_MIN, j_max=depth, workers=workers)
    reports = [
        check_exactness(surf, spec, seed=seed),
        check_ordering(surf, seed=seed),
        check_shape(surf, tol=1e-6, seed=seed),
        check_formalism(spec, formalism_depth, FORMALISM_POINTS, seed=seed),
        check_formalism(spec, formalism_depth, FORMALISM_POINTS, projected=True, seed=seed),
    ]
    del mu, nu
    pmu, pnu = make_pair("product-binomial", projection_depth)
    reports += check_projection(pmu, pnu, 1, v_count=v_count, seed=seed, workers=workers)
    return reports


def _quick(seed, workers):
    spec = _binomial_spec()
    mu = multinomial_cascade(spec, "first", 10)
    nu = multinomial_cascade(spec, "second", 10)
    surf = tau_surface(mu, nu, GRID, GRID, j_max=10, workers=workers)
    pmu, pnu = make_pair("product-binomial", 8)
    closed = [default_region(tag) for tag in CLOSED_TAGS]
    return [
        check_exactness(surf, spec, seed=seed),
        check_ordering(surf, seed=seed),
        check_shape(surf, tol=1e-6, seed=seed),
    ] + check_projection(pmu, pnu, 1, regions=closed, v_count=3, seed=seed, workers=workers)


def _negative_controls(seed, workers):
    g = np.array([-1.0, 0.0, 1.0])
    ones = np.ones((3, 3))
    # b above B everywhere
    bad_order = TauSurface(g, g, 2 * ones, ones, ones, ones, (0, 0))
    Q, T = np.meshgrid(g, g, indexing="ij")
    # increasing and concave
    bad_shape = TauSurface(g, g, -(Q ** 2) + Q + T - 5, -(Q ** 2) + Q + T, -(Q ** 2) + Q + T,
                           ones, (0, 0))
    umu, unu = make_pair("uniform-pair", 8)
    umu, unu = product_measure(umu, umu), product_measure(unu, unu)
    closed = [default_region("NEG_NEG")]
    reports = [
        check_ordering(bad_order, name="ordering-negative-control", seed=seed),
        check_shape(bad_shape, seed=seed),
    ]
    reports[1].theorem = "shape-negative-control"
    proj = check_projection(umu, unu, 1, regions=closed, v_count=3, seed=seed, reverse=True,
                            workers=workers)
    for rep in proj:
        if rep.theorem != "ordering-projected":
            rep.theorem += "-negative-control"
            reports.append(rep)
    wrong = _binomial_spec((0.9, 0.1), (0.5, 0.5))
    form = check_formalism(_binomial_spec(), 12, [(0.0, 0.0)], seed=seed, legendre_spec=wrong)
    form.theorem = "formalism-negative-control"
    reports.append(form)
    return reports


SUITES = {
    "multinomial": _multinomial,
    "negative-controls": _negative_controls,
    "quick": _quick,
}


def run_suite(name: str, seed: int = 7, workers: int = 1):
    """Run a named suite and return its reports in a fixed order."""
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return SUITES[name](seed, workers)


def suite_json(reports) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2) + "\n"


def summary(reports) -> str:
    """One line per report: status, name, pass rate, record count, worst margin."""
    lines = []
    for r in reports:
        worst = r.worst_margin
        worst = "n/a" if worst is None else f"{worst:+.3g}"
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{status}  {r.theorem:<40s} pass_rate={r.pass_rate:.3f}  "
                     f"records={len(r.records)}  tol={r.tolerance:g}  worst_margin={worst}")
    return "\n".join(lines)
