"""
Operator complexity in the Krylov grading
=========================================

Projects a few target Hamiltonians onto the depth layers, reads off the
weight profile P_J, the complexity K = sum_J P_J 2^J, the residual tail
R_J, and the access depth at which each single-site Pauli becomes
reachable.
"""

import numpy as np

from krylovsim.krylov import access_depth, build_basis, complexity_profile, s_min_map
from krylovsim.models import ModelSpec, build_native_set, build_target

spec = ModelSpec(4, "ising")
basis = build_basis(build_native_set(spec))

for name in ("X0", "Z0", "Z3", "Z0Z1", "Z0Z3", "heisenberg"):
    prof = complexity_profile(basis, build_target(name, spec))
    head = np.array2string(prof.P[:6], precision=3, suppress_small=True)
    print(f"{name:10s} K={prof.K:9.2f}  P[:6]={head}")

# Access depth: first layer whose cumulative span contains the operator.
print("\nsite  J(X) J(Y) J(Z)")
for site in range(spec.L):
    js = [access_depth(basis, build_target(f"{a}{site}", spec)) for a in "XYZ"]
    print(f"{site:4d}  " + " ".join(f"{j:4d}" for j in js))

# Minimal Pauli weight present in each basis vector.  The frontier lists the
# first layer at which a given weight appears.
smap = s_min_map(basis)
print("\nfirst layer reaching weight s:", smap.frontier)
