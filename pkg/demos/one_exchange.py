"""Walk through one cooperative exchange between two robots.

Robot 1 observes robot 2, fuses the reading with robot 2's shared state and
sends back a packet; robot 2 applies it. The result is compared with a joint
EKF over both robots to show nothing is lost by splitting the filter.
"""

import math

import numpy as np

from dclsim.baselines import JointBelief, ccl_update
from dclsim.core import ControlInput, NoiseConfig
from dclsim.dcl import (
    RobotBelief,
    coop_update_initiator,
    coop_update_responder,
    cross_covariance,
    predict,
    share_state,
)
from dclsim.sensors import RangeBearing

noise = NoiseConfig()
b1 = RobotBelief.initial([0.0, 0.0, 0.0], np.diag([0.05, 0.05, 0.01]), robot=1)
b2 = RobotBelief.initial([2.0, 0.5, math.pi / 2], np.diag([0.2, 0.2, 0.02]), robot=2)

for _ in range(6):
    b1 = predict(b1, ControlInput(0.3, 0.1), 0.166, noise.Q)
    b2 = predict(b2, ControlInput(0.2, -0.2), 0.166, noise.Q)
joint = JointBelief.from_beliefs(b1, b2)
print("before: trace P1 %.4f, trace P2 %.4f" % (np.trace(b1.P), np.trace(b2.P)))

z = RangeBearing(2.2, 0.15, 1.0, noise.R)
companion = share_state(b2)
b1, packet = coop_update_initiator(b1, companion, z)
b2 = coop_update_responder(b2, packet)
print("wire: companion state %d bytes, update packet %d bytes" % (len(companion.to_bytes()), len(packet.to_bytes())))
print("after:  trace P1 %.4f, trace P2 %.4f" % (np.trace(b1.P), np.trace(b2.P)))

ref = ccl_update(joint, z)
print("largest gap to the joint filter:")
print("  means       %.1e" % max(np.abs(b1.mean - ref.mean[:3]).max(), np.abs(b2.mean - ref.mean[3:]).max()))
print("  covariances %.1e" % max(np.abs(b1.P - ref.P[:3, :3]).max(), np.abs(b2.P - ref.P[3:, 3:]).max()))
print("  cross block %.1e" % np.abs(cross_covariance(b1, b2) - ref.P12).max())
