"""Walk through the dimension surface and spectra of a binomial pair.

    python demos/binomial_spectrum.py [depth]
"""
import sys

import numpy as np

from mutualmf import (SelfSimilarSpec, analytic_gradient, analytic_tau, histogram_spectrum,
                      legendre, multinomial_cascade, pointwise_exponents, tau_surface)

depth = int(sys.argv[1]) if len(sys.argv) > 1 else 12
spec = SelfSimilarSpec.badic((0.7, 0.3), (0.5, 0.5))
mu = multinomial_cascade(spec, "first", depth)
nu = multinomial_cascade(spec, "second", depth)
print(f"depth {depth}: {mu.n_cells} cells charged by both measures")

grid = np.round(np.arange(-1, 1.0001, 0.25), 12)
surf = tau_surface(mu, nu, grid, grid, 4, depth)

print("\n   q     t      B_est   closed form")
for q in (-1.0, 0.0, 1.0):
    for t in (-1.0, 0.0, 1.0):
        i, j = np.searchsorted(grid, q), np.searchsorted(grid, t)
        print(f"{q:5.1f} {t:5.1f}  {surf.B[i, j]:9.6f}  {analytic_tau(spec, q, t):9.6f}")

# grid Legendre transform against the analytic gradient
pts = {(p.q, p.t): p for p in legendre(surf)}
print("\n   q     t    alpha_grid alpha_exact   f")
for q, t in ((0.0, 0.0), (0.5, 0.0), (-0.5, 0.5)):
    p = pts[q, t]
    a, _ = analytic_gradient(spec, q, t)
    print(f"{q:5.1f} {t:5.1f}  {p.alpha:10.5f} {a:10.5f}  {p.f:7.4f}")

# coarse spectrum: count cells by their endpoint exponents
field = pointwise_exponents(mu, nu, j_max=depth, method="endpoint")
hist = histogram_spectrum(field, 0.1)
alpha, beta = hist.centers()
order = np.argsort(alpha)
print("\nalpha_bin  count  f_hist")
for k in order:
    print(f"{alpha[k]:8.3f}  {hist.counts[k]:5d}  {hist.f[k]:.3f}")
