"""
A hexagonal tray with a lens-shaped metric
==========================================

The hexagon with vertices (+-2, 0), (+-1, +-1) under the polar lens body.
Its support function is the gauge of the lens, so a unit step costs
``sqrt(2)`` vertically and more across.  With a flat rim (``phi = 0``) the
maximal profile is the tent

    u = min(sqrt(2) (1 - |y|), sqrt(2) (2 - |x| - |y|)).

Its ridge along ``y = 0`` is where two slopes meet (the set D); the creases
``|x| = 1`` are kinks of ``u`` that rays cross without splitting.
"""

import numpy as np

from sandtray.config import preset_config
from sandtray.pipeline import run_pipeline

res = run_pipeline(preset_config("hexagon-lens", resolution=64, samples=600))
u, mask = res.uphi, res.uphi.mask
p = u.grid.points()
x, y = np.abs(p[..., 0]), np.abs(p[..., 1])
exact = np.sqrt(2) * np.minimum(1 - y, 2 - x - y)
print("max error against the tent", np.max(np.abs(u.values - exact)[mask]))

sets = res.sets
h = u.grid.h
sig = p[sets.sigma_mask]
print("kink nodes near y = 0:  ", int(np.sum(np.abs(sig[:, 1]) <= h)))
print("kink nodes near |x| = 1:", int(np.sum(np.abs(np.abs(sig[:, 0]) - 1) <= h)))
print("D nodes off the ridge:  ", int(np.sum(np.abs(p[sets.d_mask][:, 1]) > h)))

# the ridge is where sand from the top and bottom edges meets, so no rays
# run along it and the density drops to zero there
v = res.transport.v
print("v_f on the ridge", np.nanmax(v.values[sets.d_mask]),
      " max v_f", np.nanmax(v.values[mask]))
