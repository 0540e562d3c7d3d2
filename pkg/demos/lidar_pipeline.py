"""From a raw scan to a range-bearing reading of the companion robot.

Renders a scan, splits it with the adaptive breakpoint rule and fits the
companion's cylinder. In the open hall the walls are beyond the sensor's
range and the cylinder stands alone. In the small room the companion is
against a wall: the threshold grows with range, so the wall just behind the
cylinder is joined to it and the detection is lost.
"""

import math

from dclsim.core import Pose2
from dclsim.sensors import WorldModel, abd_segment, extract_cylinder, relative_polar, render_scan

cases = (
    ("open hall", WorldModel.room(20.0, 20.0), Pose2(10.0, 10.0, 0.0), Pose2(11.2, 10.6, 0.0)),
    ("against a wall", WorldModel.room(6.0, 7.0), Pose2(4.5, 3.5, 0.0), Pose2(5.8, 3.6, 0.0)),
)

for label, world, observer, companion in cases:
    scan = render_scan(world, observer, companion, rng_seed=1, max_range=6.0)
    segments = abd_segment(scan)
    z = extract_cylinder(scan, segments, world.cylinder_radius)
    rho, phi = relative_polar(observer, (companion.x, companion.y))
    print(f"{label}: {len(segments)} segments, kinds {sorted({s.kind.value for s in segments})}")
    print(f"  truth     rho {rho:.3f} m, phi {math.degrees(phi):7.2f} deg")
    if z is None:
        print("  detection none")
    else:
        print(f"  detection rho {z.rho:.3f} m, phi {math.degrees(z.phi):7.2f} deg")
