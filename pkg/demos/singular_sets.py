"""
Where the rays end
==================

On a disk with a flat rim every ray runs to the centre, a single point J
where infinitely many rays meet.  On an ellipse with semi-axes 2 and 1
the rays end on the segment between the centres of curvature of the
vertices, ``[-1.5, 1.5] x {0}``.  Neither domain carries transport
segments, so ``v`` is unique; ``u`` stays unique only when the source
covers J.
"""

import numpy as np

from sandtray.config import preset_config
from sandtray.pipeline import run_pipeline

disk = run_pipeline(preset_config("disk-homogeneous", resolution=64, samples=360))
j = disk.sets.j_points
print("disk: J points", len(j), "farthest from the centre", np.max(np.hypot(*j.T)))

# v_f grows linearly along the radius: v = |x| / 2
p = disk.uphi.grid.points()
r = np.hypot(p[..., 0], p[..., 1])
ring = disk.uphi.mask & (np.abs(r - 0.5) <= disk.uphi.grid.h)
print("disk: mean v_f at |x| = 0.5", np.mean(disk.transport.v.values[ring]))

ell = run_pipeline(preset_config("ellipse-foci", resolution=64, samples=720))
j = ell.sets.j_points
print("ellipse: J spans x in", j[:, 0].min(), "to", j[:, 0].max(),
      " max |y|", np.abs(j[:, 1]).max())

# a source avoiding the centre leaves J outside its support
ring_src = preset_config("disk-homogeneous", resolution=64, samples=360,
                         source={"kind": "indicator", "annulus": [0.5, 1.0]})
d = run_pipeline(ring_src).diagnosis
print("disk with an annular source: u unique", d.u_unique, " v unique", d.v_unique)
