"""
Weighted Sobolev quotients
==========================

For c >= 0 the quotient ``||u||_q / ||∇u||_2`` in ``L^q(y^c dz)`` is
dilation invariant exactly at ``q = 2(N+1+c)/(N+c-1)``.  For c < 0 the
inequality is only local.  Concentrating a bump in the interior makes the
global quotient grow.
"""

import numpy as np

from halfspace_heat import sobolev

N, c = 1, 1.0
q = sobolev.sobolev_exponent(N, c)
params = sobolev.SobolevParams(N, c, float(q))
print(f"N = {N}, c = {c}: critical exponent {q}")

family = sobolev.make_family(N, 60, seed=0)
res = sobolev.scan(family, lambda d: sobolev.quotient_sobolev(d, params))
print(f"empirical sup over {len(family)} test functions: {res.empirical_sup:.4f}")
u = family[int(np.argmax(res.quotients))]
for s in (0.25, 1.0, 4.0):
    print(f"  dilation s = {s:<4g} quotient {sobolev.quotient_sobolev(u.dilate(s), params):.12f}")

# Hölder interpolation between L^2 and L^(2*) bounds every intermediate norm.
p4 = sobolev.SobolevParams(N, c, 4.0)
lhs, rhs = np.array([sobolev.holder_chain(sobolev.FunctionData(v), p4) for v in family]).T
print(f"Holder chain at q = 4, theta = {p4.theta:.3f}: max lhs/rhs {np.max(lhs / rhs):.4f}")

# c < 0: supports in [0, r] keep the quotient bounded ...
loc = sobolev.local_embedding_check(sobolev.SobolevParams(2, -0.5, 6.0, r=1.0), n=60, seed=0,
                                    opts=sobolev.QuadratureOptions(order=8, x_panels=4, y_panels=4))
print(f"\nN = 2, c = -0.5, supports in y <= 1: sup {loc.empirical_sup:.4f}")
# ... while interior concentration at q = 2*_c breaks the global inequality.
w = sobolev.global_failure_witness(2, -0.9)
for s, v in zip(w.scales, w.quotients):
    print(f"  concentration s = {s:<3g} quotient {v:.4f}")
print(f"growth exponent {w.exponent:.3f}, predicted {w.expected_exponent:.3f}")
