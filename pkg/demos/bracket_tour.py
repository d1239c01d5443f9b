"""
A first look at the generalized Poisson-W bracket
=================================================

The bracket {f, g} = J_ij D_i f D_j g replaces the partial derivative with
D = d + A, where A is the gradient of a structure function chi.  With
chi = 0 it is the ordinary Poisson bracket.
"""

import numpy as np

from gchs import PoissonWManifold
from gchs.manifold import gpwb, gpwb_decomposed, vec_X, w_dynamics

# Canonical plane, first without a structure function.
flat = PoissonWManifold.build(2, "canonical", "0")
x = np.array([0.5, 2.0])
print("{q1, p1} with chi = 0:", gpwb(flat, "q1", "p1", x))

# Switching on chi = q1 adds a term proportional to X_chi.
bent = PoissonWManifold.build(2, "canonical", "q1")
total = gpwb(bent, "q1", "p1", x)
ghs, xchi = gpwb_decomposed(bent, "q1", "p1", x)
print(f"{{q1, p1}} with chi = q1: {total:.6g} = {ghs:.6g} (classical) + {xchi:.6g} (chi part)")

# The bracket is still antisymmetric, but a function now fails to commute
# with the constant 1.  That defect is the scalar w = {H, 1}.
H = "0.5*p1^2 + 0.5*q1^2"
print("{H, 1} =", gpwb(bent, H, "1", x), " w(x) =", w_dynamics(bent, H, x))

# Hamiltonian vector fields come from the same structure matrix.
print("X_H at x:", vec_X(bent, H, x))

# Batches of points evaluate in one call.
pts = np.random.default_rng(0).uniform(-1, 1, (5, 2))
print("w on five random points:", np.round(w_dynamics(bent, H, pts), 4))
