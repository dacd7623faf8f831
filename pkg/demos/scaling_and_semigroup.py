"""
Semigroup properties and parabolic scaling
==========================================

For ``L = Δx + 2a·∇x D_y + D_yy + (c/y) D_y`` the discrete semigroup is
positive, contractive and preserves constants.  The kernel also obeys
``p(s²t, sz, sw) = s^-(N+1+c) p(t, z, w)``.
"""

import numpy as np

from halfspace_heat.domain import GridSpec, build_grid, discrete_delta
from halfspace_heat.operator import OperatorCoeffs, assemble
from halfspace_heat.semigroup import check_duality, check_scaling, check_semigroup, semigroup_properties

coeffs = OperatorCoeffs(0.5, (0.3,))
grid = build_grid(GridSpec(N=1, Ly=4.0, ny=40, c=0.5, Lx=3.0, nx=60, grading=1.0))
op = assemble(grid, coeffs)
print("stencil monotone:", op.info["monotone"])

props = semigroup_properties(op, discrete_delta(grid, [0.0, 1.0]), 0.25)
for k, v in props.items():
    print(f"  {k:15s} {v:.3e}")

z = grid.coordinates()
f = np.exp(-(z[:, 0] ** 2 + (z[:, 1] - 1.5) ** 2))
print("semigroup law  |T(t+s)f - T(s)T(t)f| / |f| =", f"{check_semigroup(op, f, 0.25, 0.25):.2e}")
rng = np.random.default_rng(0)
u, v = rng.random((2, grid.size))
print("duality        |<Tu, v> - <u, T*v>|        =", f"{check_duality(op, op.adjoint(), u, v, 0.25):.2e}")

# The scaled problem is solved on an independent grid, so the deviation
# measures discretization error rather than an algebraic identity.
probes = [([0.0, 1.0], [x, y]) for x in (-0.5, 0.0, 0.5) for y in (0.5, 1.0, 1.5)]
spec = GridSpec(N=1, Ly=4.0, ny=80, c=1.0, Lx=3.0, nx=120, grading=1.0)
scaled = GridSpec(N=1, Ly=8.0, ny=157, c=1.0, Lx=6.0, nx=234, grading=1.0)
rep = check_scaling(spec, OperatorCoeffs(1.0, (0.5,)), 0.25, 2.0, probes, scaled_spec=scaled)
print(f"scaling law with s = 2: max relative deviation {rep.deviation:.2e}")
