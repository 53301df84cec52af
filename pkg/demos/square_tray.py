"""
Sand on a square tray
=====================

A tray over the unit square whose rim height is ``phi = y``.  Sand poured
uniformly (``f = 1``) settles to the maximal profile ``u_phi = y``: every
grain rolls straight up the slope and leaves over the top edge, so the
transport density is the height still to climb, ``v = 1 - y``.

The rays run edge to edge, so they fill the whole tray with transport
segments.  Mass can be pushed back and forth along them, which is why
``v`` is not unique while ``u`` is.
"""

import numpy as np

from sandtray.config import preset_config
from sandtray.pipeline import run_pipeline

res = run_pipeline(preset_config("square-tray", resolution=64, samples=360))
grid, mask = res.uphi.grid, res.uphi.mask
y = grid.points()[..., 1]

print("max |u_phi - y|     ", np.max(np.abs(res.uphi.values - y)[mask]))
print("max |v_f - (1 - y)| ", np.max(np.abs(res.transport.v.values - (1 - y))[mask]))

# every node lies on a vertical ray reaching the top edge
print("rays reaching the rim", int(res.rays.reaches_boundary[mask].sum()), "of", int(mask.sum()))
print("area swept by transport segments", res.sets.t_measure_estimate)

# the witness: two densities flowing in opposite directions along the same
# segments add up to a solution of the homogeneous equation
w = res.witness
print("v_plus + v_minus ranges over",
      np.nanmin(w.combined.values[mask]), "to", np.nanmax(w.combined.values[mask]))

d = res.diagnosis
print("v unique:", d.v_unique, " u unique:", d.u_unique)
