"""
From GPS fixes to model inputs
==============================

Lat/lon fixes are projected to UTM, made relative to the basestation and
min-max scaled with statistics fitted on training data only.
"""
import numpy as np

from beampred.geodesy import (GeoPosition, apply_minmax, fit_minmax, latlon_to_utm,
                              relative_positions)
from beampred.pipeline import offset_position

bs = GeoPosition(33.4190, -111.9290)
u = latlon_to_utm(bs)
print(f"basestation: zone {u.zone}{'N' if u.north else 'S'}, "
      f"E {u.easting:.2f} m, N {u.northing:.2f} m")

# a user walking east along a road 70 m north of the basestation
track = [offset_position(bs, e, 70.0) for e in np.arange(-30, 31, 10.0)]
xy = relative_positions(track, bs)
print("relative east/north (m):")
print(np.round(xy, 3))

stats = fit_minmax(xy)
print("fitted min", stats.minimum, "max", stats.maximum)
print("scaled:")
print(np.round(apply_minmax(xy, stats), 3))

# the north axis spans only ~0.1 mm of coordinate rounding, and min-max
# stretches that to the whole [0, 1] range. Real training sets cover several
# roads so this does not happen there; an exactly flat axis maps to 0.5.
print(stats.to_text())
