"""Run every estimator on the default scenario and print the comparison.

The default scenario drives two robots around a partitioned room for 130
odometry steps with two radio outages. Each trial shares one set of sensor
streams across all methods, so the differences come from the estimators.
"""

import sys

from dclsim.cli import _summary
from dclsim.harness import default_scenario, run_scenario

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 10
s = default_scenario().with_(trials=trials)
_, report = run_scenario(s)
print(_summary(report))
