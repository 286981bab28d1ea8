"""Exhaustive covering and packing optima on tiny dyadic instances."""
from mutualmf import SelfSimilarSpec, analytic_tau, multinomial_cascade
from mutualmf.oracle import brute_force_critical_s, brute_force_search

spec = SelfSimilarSpec.badic((0.7, 0.3), (0.5, 0.5))

for depth in (1, 2, 3):
    mu = multinomial_cascade(spec, "first", depth)
    nu = multinomial_cascade(spec, "second", depth)
    pack = brute_force_search(mu, nu, -1, 0, 1, 0, mode="packing")
    cov = brute_force_search(mu, nu, 2, 0, 0.5, 0, mode="covering")
    print(f"depth {depth}: packing {pack.value:.6f} over {pack.n_families} families, "
          f"best {sorted(map(tuple, pack.family))}")
    print(f"         covering {cov.value:.6f}, best {sorted(map(tuple, cov.family))}")

mu = multinomial_cascade(spec, "first", 4)
nu = multinomial_cascade(spec, "second", 4)
print("\n   q     t   critical s   closed form")
for q, t in ((-1, 0), (0, 0), (2, 1), (0.5, -1.5)):
    s = brute_force_critical_s(mu, nu, q, t, [1, 2, 3, 4])
    print(f"{q:5.1f} {t:5.1f}  {s:10.6f}  {analytic_tau(spec, q, t):10.6f}")
