"""
Gaussian envelopes for the numerical kernel
===========================================

We fit the refined Gaussian envelope to adjoint kernel slices at several
times.  Time-independent constants (C, k) are the numerical signature of a
Gaussian bound.  Perturbing the degeneracy exponent in the envelope breaks
that stability, which is our negative control.
"""

import numpy as np

from halfspace_heat.bounds import check_envelope_stability, check_tilde_relation
from halfspace_heat.domain import GridSpec, PhiParams, build_grid, phi_derivative_constant
from halfspace_heat.operator import OperatorCoeffs, assemble
from halfspace_heat.semigroup import Propagator, PropagatorConfig, kernel_slice


def slices(c, Ly, ny, Lx, nx, sources, times=(0.25, 1.0, 4.0)):
    op = assemble(build_grid(GridSpec(N=1, Ly=Ly, ny=ny, c=c, Lx=Lx, nx=nx, grading=1.0)),
                  OperatorCoeffs(c, (0.5,)))
    cfg = PropagatorConfig()
    prop = Propagator(op.adjoint(), cfg)
    return {t: [kernel_slice(op, [0.0, y], t, cfg, "adjoint", prop) for y in sources] for t in times}


for c in (-0.5, 1.0):
    by_t = slices(c, 16.0, 160, 12.0, 240, (0.25, 1.0, 3.0, 6.0))
    rep = check_envelope_stability(by_t, "refined", c)
    print(f"c = {c:+.1f}")
    for t, fit in rep.fits.items():
        print(f"  t = {t:<5g} C = {fit.envelope.C:.4f}  k = {fit.envelope.k:6.2f}  max ratio {fit.max_ratio:.3f}")
    print(f"  stability ratios: C {rep.C_ratio:.2f}, k {rep.k_ratio:.2f} -> {'stable' if rep.passed else 'unstable'}")
    neg = check_envelope_stability(by_t, "refined", c - 1)
    print(f"  exponent c - 1 in the envelope: C {neg.C_ratio:.2f}, k {neg.k_ratio:.2f} -> "
          f"{'stable' if neg.passed else 'unstable'}")

# For c < 0 the kernel grows like y^(-c) far from the boundary.  Dividing by
# phi(y1) phi(y2) removes that growth; the tall box reaches y = 50.
phi = PhiParams(-0.5)
print(f"\nweight phi with knots ({phi.lo}, {phi.hi}); realised C0 = {phi_derivative_constant(phi):.4f}")
by_t = slices(-0.5, 58.0, 464, 8.0, 128, (0.25, 1.0, 3.0, 10.0, 25.0, 50.0))
rep = check_tilde_relation([s for v in by_t.values() for s in v], phi)
print("per-t amplitude of the normalised kernel:", {t: round(v, 4) for t, v in rep.per_t_C.items()})
print(f"uniformity ratio {rep.uniform_ratio:.2f}; raw kernel over normalised envelope {rep.raw_over_tilde:.2f}")
