"""Independent reference implementations used by the tests.

Nothing here imports estimator code from the package; each routine is a
direct, slow restatement of the rule it checks.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammainc


# --------------------------------------------------------------------------
# geometry


def ray_segment_distance(o, ang, a, b):
    """Distance along the ray from ``o`` at heading ``ang`` to segment ``ab``, or inf."""
    dx, dy = math.cos(ang), math.sin(ang)
    ex, ey = b[0] - a[0], b[1] - a[1]
    den = dx * ey - dy * ex
    if abs(den) < 1e-15:
        return math.inf
    wx, wy = a[0] - o[0], a[1] - o[1]
    t = (wx * ey - wy * ex) / den
    s = (wx * dy - wy * dx) / den
    return t if t > 0 and 0 <= s <= 1 else math.inf


def ray_circle_distance(o, ang, c, radius):
    """First positive intersection of the ray with a circle, or inf."""
    dx, dy = math.cos(ang), math.sin(ang)
    fx, fy = o[0] - c[0], o[1] - c[1]
    b = fx * dx + fy * dy
    disc = b * b - (fx * fx + fy * fy - radius * radius)
    if disc < 0:
        return math.inf
    for t in (-b - math.sqrt(disc), -b + math.sqrt(disc)):
        if t > 0:
            return t
    return math.inf


# --------------------------------------------------------------------------
# segmentation


def abd_splits(ranges, angle_step, lam, sigma_r):
    """Indices ``i`` where two finite neighbours ``i, i+1`` exceed the printed threshold."""
    out = []
    for i in range(len(ranges) - 1):
        r0, r1 = ranges[i], ranges[i + 1]
        if not (math.isfinite(r0) and math.isfinite(r1)):
            continue
        p0 = (r0 * math.cos(i * angle_step), r0 * math.sin(i * angle_step))
        p1 = (r1 * math.cos((i + 1) * angle_step), r1 * math.sin((i + 1) * angle_step))
        gap = math.dist(p0, p1)
        thd = r0 * math.sin(lam) / math.sin(lam - angle_step) + 3 * sigma_r
        if gap > thd:
            out.append(i)
    return out


def abd_corpus_scan(seed, sigma_r, n=360):
    """A 360-beam scan built from rising staircases separated by no-return gaps.

    Returns ``(ranges, known)`` where ``known`` lists the indices ``i`` at which
    beams ``i`` and ``i+1`` are both valid and belong to different surfaces.
    Each step up is at least 2.6x the previous surface range, which the
    printed threshold always splits; within a surface the range wobbles by
    3% so every within-surface gap stays far below it.
    """
    rng = np.random.default_rng(seed)
    r = np.full(n, np.inf)
    label = np.full(n, -1)
    i = 0
    surface = 0
    while i < n:
        base = rng.uniform(0.3, 0.8)
        for _ in range(int(rng.integers(1, 4))):
            k = min(int(rng.integers(15, 40)), n - i)
            if k <= 0:
                break
            idx = np.arange(k)
            r[i : i + k] = base * (1 + 0.03 * np.sin(0.2 * idx + rng.uniform(0, 6)))
            label[i : i + k] = surface
            surface += 1
            i += k
            base = 2.6 * base + 0.3
            if base > 5:
                break
        i += min(int(rng.integers(3, 8)), max(n - i, 0))
    finite = np.isfinite(r)
    r[finite] += rng.normal(0.0, sigma_r, int(finite.sum())) if sigma_r > 0 else 0.0
    known = [
        j for j in range(n - 1) if finite[j] and finite[j + 1] and label[j] != label[j + 1]
    ]
    return r, known


# --------------------------------------------------------------------------
# statistics


def chi2_quantile(p, dof):
    """Chi-square quantile by bisection on the regularized lower gamma function."""
    lo, hi = 0.0, float(dof)
    while gammainc(dof / 2.0, hi / 2.0) < p:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gammainc(dof / 2.0, mid / 2.0) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# centralized EKF over [x1, y1, th1, x2, y2, th2]


def _wrap(a):
    return math.atan2(math.sin(a), math.cos(a))


def unicycle_step(x, v, w, dt):
    th = x[2] + w * dt
    return np.array([x[0] + v * dt * math.cos(th), x[1] + v * dt * math.sin(th), _wrap(th)])


def _unicycle_jac(x, v, w, dt):
    th = x[2] + w * dt
    F = np.array([[1, 0, -v * dt * math.sin(th)], [0, 1, v * dt * math.cos(th)], [0, 0, 1.0]])
    G = np.array(
        [[dt * math.cos(th), -v * dt * dt * math.sin(th)], [dt * math.sin(th), v * dt * dt * math.cos(th)], [0, dt]]
    )
    return F, G


def rel_position(x1, x2):
    """Robot 2's position in robot 1's body frame, with the 2x6 Jacobian."""
    Rt = np.array([[math.cos(x1[2]), math.sin(x1[2])], [-math.sin(x1[2]), math.cos(x1[2])]])
    d = np.array([x2[0] - x1[0], x2[1] - x1[1]])
    dRt = np.array([[-math.sin(x1[2]), math.cos(x1[2])], [-math.cos(x1[2]), -math.sin(x1[2])]])
    H = np.zeros((2, 6))
    H[:, 0:2] = -Rt
    H[:, 2] = dRt @ d
    H[:, 3:5] = Rt
    return Rt @ d, H


def polar_cov(rho, phi, R):
    J = np.array([[math.cos(phi), -rho * math.sin(phi)], [math.sin(phi), rho * math.cos(phi)]])
    return np.array([rho * math.cos(phi), rho * math.sin(phi)]), J @ R @ J.T


class JointEKF:
    """Plain 6-state EKF; the reference the decentralized filter must equal."""

    def __init__(self, x1, P1, x2, P2):
        self.x = np.concatenate([x1, x2]).astype(float)
        self.P = np.zeros((6, 6))
        self.P[:3, :3] = P1
        self.P[3:, 3:] = P2

    def predict(self, u1, u2, dt, Q, jitter=1e-12):
        F = np.eye(6)
        W = np.zeros((6, 6))
        for k, (v, w) in enumerate((u1, u2)):
            s = slice(3 * k, 3 * k + 3)
            Fk, Gk = _unicycle_jac(self.x[s], v, w, dt)
            F[s, s] = Fk
            W[s, s] = Gk @ Q @ Gk.T
        self.x = np.concatenate([unicycle_step(self.x[:3], *u1, dt), unicycle_step(self.x[3:], *u2, dt)])
        self.P = F @ self.P @ F.T + W + jitter * np.eye(6)
        self.P = 0.5 * (self.P + self.P.T)

    def update(self, rho, phi, R):
        z, Rc = polar_cov(rho, phi, R)
        h, H = rel_position(self.x[:3], self.x[3:])
        S = H @ self.P @ H.T + Rc
        K = self.P @ H.T @ np.linalg.inv(S)
        self.x = self.x + K @ (z - h)
        self.x[2] = _wrap(self.x[2])
        self.x[5] = _wrap(self.x[5])
        self.P = (np.eye(6) - K @ H) @ self.P
        self.P = 0.5 * (self.P + self.P.T)


def rel_err(a, b):
    """Largest absolute difference scaled by the reference's largest entry."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def propagate_on_grid(x0, stamps, control):
    """Step from ``stamps[0]`` through each later stamp, driving each step by ``control(t_end)``."""
    x = np.asarray(x0, float)
    out = [x]
    for t0, t1 in zip(stamps[:-1], stamps[1:]):
        x = unicycle_step(x, *control(t1), t1 - t0)
        out.append(x)
    return np.array(out)
