"""
Two Adam trajectories in one parameter vector
=============================================

A mask splits the coordinates into a personalized group and a shared group.
Each group keeps its own moment buffers and step counter, so interleaving
the two phases gives the same result as running two separate optimizers.
"""

import numpy as np

from copfl.mamo import MamoState, Phase, apply_step

rng = np.random.default_rng(0)
d = 6
mask = np.array([1, 1, 0, 0, 0, 0], np.uint8)
target = rng.normal(size=d)

# quadratic bowl: grad = w - target
state = MamoState.zeros(d, lr=0.05)
w = np.zeros(d)
for step in range(200):
    w, state = apply_step(state, w, w - target, mask, Phase.PERSONALIZED)
    w, state = apply_step(state, w, w - target, mask, Phase.SHARED)

print("steps  personalized / shared:", state.step_pers, "/", state.step_shared)
print("distance to optimum:", np.abs(w - target).max())

# the shared buffers are zero where the mask is set, and the other way round
print("u_shared on personalized coords:", state.u_shared[:2])
print("u_pers on shared coords:        ", state.u_pers[2:])

# one personalized step leaves shared coordinates bit-identical
w2, _ = apply_step(state, w, rng.normal(size=d), mask, Phase.PERSONALIZED)
print("shared coords untouched:", np.array_equal(w2[2:], w[2:]))
