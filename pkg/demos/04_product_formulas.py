"""
Trotter and group-commutator sequences
======================================

Builds explicit native pulses for exp(i(H1 + H2)) and exp(-[H1, H2]) and
measures how their spectral-norm error falls with the step count.  The
Trotter error decays as 1/n, the commutator error as 1/sqrt(n).  Nesting
the commutator reproduces the layer circuit count C_J = 3 * 2^J - 2.
"""

import numpy as np

from krylovsim import grape
from krylovsim.acceptance import product_formula_errors
from krylovsim.krylov import layer_circuit_complexity

steps, trotter, comm = product_formula_errors()
for n, et, ec in zip(steps, trotter, comm):
    print(f"n={n:4d}  trotter {et:.3e}  commutator {ec:.3e}")
logn = np.log(steps)
print("slopes: trotter %.3f, commutator %.3f" % (np.polyfit(logn, np.log(trotter), 1)[0], np.polyfit(logn, np.log(comm), 1)[0]))

seg = grape.ControlPulse(np.array([[1.0, 0.0]]), 0.1)
native = grape.ControlPulse(np.array([[0.0, 1.0]]), 0.1)
for J in range(6):
    print(f"J={J}: nested sequence has {seg.n} steps, C_J = {layer_circuit_complexity(J)}")
    seg = grape.nested_commutator_pulse(seg, native)
