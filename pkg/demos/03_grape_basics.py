"""
Pulse synthesis with GRAPE
==========================

Optimizes piecewise-constant amplitudes on the four native channels to
reproduce exp(-i H tau) for a target H, first at a fixed step count and
then along a warm-started schedule that finds the critical step count n_c.
"""

import numpy as np

from krylovsim.grape import GrapeConfig, optimize, random_pulse, target_unitary, warm_start_sweep
from krylovsim.models import ModelSpec, build_native_set, build_target
from krylovsim.pauli import to_dense

spec = ModelSpec(3, "ising")
natives = build_native_set(spec).dense()
cfg = GrapeConfig(iterations=300, seed=1)

# A native channel is reachable in a single step: u_X = tau / dt = 5.
target = target_unitary(natives[0], cfg.tau)
res = optimize(random_pulse(1, 4, cfg.dt, cfg.init_scale, seed=0), target, cfg, natives)
print("one step, H_X target: loss", f"{res.loss:.1e}", "amplitudes", np.round(res.pulse.amplitudes, 4))

# A deeper target needs more steps.  The sweep extends the best pulse with
# zero steps at each schedule entry so losses never increase.
schedule = [1, 2, 4, 8, 16, 32, 64]
for name in ("Y0", "Z0", "X1"):
    w = target_unitary(to_dense(build_target(name, spec)), cfg.tau)
    curve = warm_start_sweep(w, schedule, cfg, natives, stop_at_threshold=True)
    losses = " ".join(f"{n}:{l:.1e}" for n, l in curve.rows())
    print(f"{name}: n_c={curve.n_c}  {losses}")
