import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dclsim.core import ControlInput, InvalidTimestepError, Pose2
from dclsim.motion import jacobians, propagate, step, step_jacobians

# evaluated independently at 30 significant digits
FROZEN = (0.98623781399222079176, 2.1654285411780182694, 1.6537963267948966192)


def _fd(f, x0, h=1e-6):
    x0 = np.asarray(x0, dtype=float)
    cols = []
    for i in range(len(x0)):
        e = np.zeros_like(x0)
        e[i] = h
        d = f(x0 + e) - f(x0 - e)
        cols.append(d / (2 * h))
    return np.column_stack(cols)


def test_propagate_examples():
    assert propagate(Pose2(0, 0, 0), ControlInput(0, 0), 0.1) == Pose2(0, 0, 0)
    p = propagate(Pose2(0, 0, 0), ControlInput(1, 0), 0.1)
    assert (p.x, p.y, p.theta) == pytest.approx((0.1, 0.0, 0.0), abs=1e-15)
    q = propagate(Pose2(1, 2, math.pi / 2), ControlInput(1.0, 0.5), 0.166)
    np.testing.assert_allclose([q.x, q.y, q.theta], FROZEN, rtol=0, atol=1e-14)


@pytest.mark.parametrize("dt", [0.0, -0.1])
def test_propagate_rejects_bad_dt(dt):
    with pytest.raises(InvalidTimestepError):
        propagate(Pose2(0, 0, 0), ControlInput(1, 0), dt)


def test_jacobian_examples():
    J = jacobians(Pose2(0.3, -1, 0.7), ControlInput(0, 0), 0.1)
    np.testing.assert_array_equal(J.F, np.eye(3))
    J = jacobians(Pose2(0, 0, 0), ControlInput(1, 0), 0.1)
    assert J.F[0, 2] == 0.0
    assert J.F[1, 2] == pytest.approx(0.1)
    assert J.F[0, 0] == J.F[1, 1] == J.F[2, 2] == 1.0


def test_jacobians_match_finite_differences(rng):
    for _ in range(100):
        x = np.array([rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-3, 3)])
        v, w, dt = rng.uniform(-1, 1), rng.uniform(-2, 2), rng.uniform(0.01, 0.5)
        J = step_jacobians(x, v, w, dt)
        # heading is wrapped; differentiate the unwrapped third row
        fx = lambda s: np.array([*step(s, v, w, dt)[:2], s[2] + w * dt])
        fu = lambda u: np.array([*step(x, u[0], u[1], dt)[:2], x[2] + u[1] * dt])
        np.testing.assert_allclose(J.F, _fd(fx, x), atol=1e-5)
        np.testing.assert_allclose(J.G, _fd(fu, [v, w]), atol=1e-5)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-3.1, 3.1), st.floats(-2, 2), st.floats(0.001, 1))
def test_straight_line_has_no_lateral_motion(x, y, th, v, dt):
    out = step(np.array([x, y, th]), v, 0.0, dt)
    d = out[:2] - (x, y)
    lateral = -math.sin(th) * d[0] + math.cos(th) * d[1]
    assert abs(lateral) < 1e-12
    assert math.hypot(*d) == pytest.approx(abs(v) * dt, abs=1e-12)


def test_propagate_deterministic(rng):
    p, u = Pose2(1.3, -0.4, 2.9), ControlInput(0.7, 1.1)
    a = [propagate(p, u, 0.166) for _ in range(3)]
    assert a[0] == a[1] == a[2]
