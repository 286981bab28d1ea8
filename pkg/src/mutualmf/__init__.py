"""Mutual multifractal analysis of measure pairs on b-adic grids.

The main entry points are re-exported here; see the submodules for details.
"""

from .measure import (
    GridMeasure,
    PointCloud,
    SelfSimilarSpec,
    coarsen,
    grid_to_cloud,
    load,
    make_pair,
    multinomial_cascade,
    point_mass,
    product_measure,
    save,
)
from .moments import (
    QTRegion,
    ScaleTable,
    TauSurface,
    build_scale_table,
    default_region,
    estimate_dims,
    moment_sum,
    tau_surface,
)
from .oracle import analytic_gradient, analytic_tau, brute_force_critical_s, brute_force_premeasure
from .projection import Subspace, project_pair, regrid, sample_grassmann
from .spectra import histogram_spectrum, legendre, pointwise_exponents, ratio_set
from .verify import TheoremReport, run_suite

__version__ = "0.1.0"
