"""
Anholonomic frames and the Heisenberg algebra
=============================================

A frame E_i whose commutators do not vanish carries structure functions
[E_i, E_j] = c_ij^k E_k.  The frame E1 = d1, E2 = d2, E3 = d3 + x1 d2
realizes the Heisenberg relations: only [E1, E3] = E2 survives.
"""

import numpy as np

from gchs import PoissonWManifold
from gchs.frames import curvature_apply, structure_functions

J = [["0", "1", "0"], ["-1", "0", "1"], ["0", "-1", "0"]]
frame = [["1", "0", "0"], ["0", "1", "0"], ["0", "x1", "1"]]
M = PoissonWManifold.build(3, J, "x2", frame=frame)

x = np.array([0.3, -0.2, 0.7])
sf = structure_functions(M, x)
for i, j, k in zip(*np.nonzero(np.abs(sf.c) > 1e-12)):
    print(f"c_{i + 1}{j + 1}^{k + 1} = {sf.c[i, j, k]:+.1f}")
print("frame condition number:", sf.cond)

# Because A is a frame gradient of chi, the commutator of covariant
# derivatives closes on the frame: [D_i, D_j] g = c_ij^k D_k g.
g = "sin(x1)*x3 + x2^2"
com, struct = curvature_apply(M, 0, 2, g, x)
print(f"[D1, D3] g = {com:.12f}, c_13^k D_k g = {struct:.12f}")
