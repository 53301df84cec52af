"""
A rim that winds around a hole
==============================

The annulus 1 < |x| < 2 with a slit of opening 0.5 carries the rim height
``phi = theta``, the polar angle.  The datum climbs by almost 2 pi around
the hole, yet each pair of rim points is farther apart inside the domain
than their height difference, so the datum is admissible.  Measured along
straight chords it is not: the two slit faces are close across the slit
but their heights differ by nearly 2 pi.
"""

from sandtray import domain as dm
from sandtray.config import preset_config
from sandtray.convex import ConvexBody

cfg = preset_config("annulus-sector", samples=720)
d = cfg.build_domain()
s = dm.sample_boundary(d, cfg.samples, cfg.datum_function())
rep = dm.validate_datum(d, s, ConvexBody.ball())

print("admissible along paths inside the domain:", rep.is_compatible,
      " margin", round(rep.margin, 6))
print("admissible along straight chords:       ", rep.chord_ok)
(px, py), (qx, qy) = rep.chord_worst_pair
print(f"worst chord ({px:.4f}, {py:.4f}) to ({qx:.4f}, {qy:.4f}), margin {rep.chord_margin:.6f}")
# across the slit the chord has length 2 sin(eps / 2), the height gap 2 pi - eps
