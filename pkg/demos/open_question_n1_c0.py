"""
Scanning the excluded case N = 1, c = 0
=======================================

The Sobolev embedding is stated for c > 0 when N = 1.  At c = 0 the critical
exponent is infinite and the measure is planar Lebesgue measure.  This
script scans the quotients that remain meaningful and prints them.  The
numbers are reported as observed; no conclusion is drawn from them.
"""

import numpy as np

from halfspace_heat import sobolev

N, c = 1, 0.0
print("critical exponent:", sobolev.sobolev_exponent(N, c))
family = sobolev.make_family(N, 200, seed=0)

for q in (4.0, 8.0, 16.0, 32.0, np.inf):
    params = sobolev.SobolevParams(N, c, q)
    res = sobolev.scan(family, lambda d: sobolev.quotient_sobolev(d, params, q=q))
    print(f"q = {q:<5g} sup ||u||_q / ||grad u||_2 = {res.empirical_sup:.4f}")

# Dilation behaviour of the sup-norm quotient for the boundary-centred bump.
params = sobolev.SobolevParams(N, c, np.inf)
u = sobolev.TestFunction("bump", (0.0,), 1.0)
for s in (0.25, 1.0, 4.0, 16.0):
    print(f"  bump dilated by {s:<5g} sup-norm quotient {sobolev.quotient_sobolev(u.dilate(s), params, q=np.inf):.6f}")
