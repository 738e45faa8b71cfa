"""Rigid transforms, unit quaternions (w, x, y, z) and the pinhole camera.

Conventions: right-handed frames, the camera looks down +z, x right, y down.
A transform ``T`` maps points ``p -> R @ p + t`` (rotate first, then translate),
and ``compose(a, b)`` is the matrix product ``T_a @ T_b``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveDepth, ValidationError

_NORM_SLACK = 1e-12


def _as_unit(q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(4)
    n = float(np.sqrt(q @ q))
    if not np.isfinite(n) or n == 0.0:
        raise ValidationError(f"quaternion {q} cannot be normalised")
    # Leave already-unit inputs bit-identical.
    if abs(n - 1.0) > _NORM_SLACK:
        q = q / n
    return q


def quat_mul(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conj(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]], dtype=float)


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R) -> np.ndarray:
    """Shepperd's method; the result is sign-normalised to w >= 0."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return canonical_sign(q)


def canonical_sign(q) -> np.ndarray:
    """Pick the representative with w > 0 (first non-zero component positive)."""
    q = np.asarray(q, dtype=float)
    for c in q:
        if c != 0.0:
            return q if c > 0 else -q
    return q


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    h = 0.5 * angle
    return np.concatenate([[np.cos(h)], np.sin(h) * axis])


def quat_from_rotvec(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    angle = float(np.linalg.norm(v))
    if angle < 1e-15:
        return np.array([1.0, 0.0, 0.0, 0.0])
    return quat_from_axis_angle(v / angle, angle)


def rotation_angle_between(q1, q2) -> float:
    """Geodesic angle in [0, pi] between two rotations; blind to the sign of q."""
    d = quat_mul(quat_conj(q1), q2)
    return float(2.0 * np.arctan2(np.linalg.norm(d[1:]), abs(d[0])))


def random_quaternion(rng: np.random.Generator) -> np.ndarray:
    """Uniform over SO(3) (normalised 4-D Gaussian)."""
    q = rng.normal(size=4)
    return canonical_sign(q / np.linalg.norm(q))


@dataclass(frozen=True, eq=False)
class RigidTransform:
    q: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        q = _as_unit(self.q)
        t = np.asarray(self.t, dtype=float).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValidationError("translation must be finite")
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_matrix(cls, M) -> RigidTransform:
        M = np.asarray(M, dtype=float)
        return cls(matrix_to_quat(M[:3, :3]), M[:3, 3])

    @classmethod
    def from_rt(cls, R, t) -> RigidTransform:
        return cls(matrix_to_quat(R), t)

    @property
    def R(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.R
        M[:3, 3] = self.t
        return M

    def inverse(self) -> RigidTransform:
        qi = quat_conj(self.q)
        return RigidTransform(qi, -quat_to_matrix(qi) @ self.t)

    def apply(self, points) -> np.ndarray:
        """Transform a single 3-vector or an (n, 3) array."""
        p = np.asarray(points, dtype=float)
        return p @ self.R.T + self.t

    def with_translation(self, t) -> RigidTransform:
        return RigidTransform(self.q, t)

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        return compose(self, other)

    def __repr__(self):
        return f"RigidTransform(q={self.q.tolist()}, t={self.t.tolist()})"


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """``a @ b``: apply ``b`` first, then ``a``."""
    return RigidTransform(quat_mul(a.q, b.q), a.R @ b.t + a.t)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> RigidTransform:
    """Camera-to-world pose of a camera at ``eye`` whose +z axis points at ``target``."""
    eye = np.asarray(eye, dtype=float)
    z = np.asarray(target, dtype=float) - eye
    z /= np.linalg.norm(z)
    up = np.asarray(up, dtype=float)
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, [1.0, 0.0, 0.0])
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return RigidTransform.from_rt(np.column_stack([x, y, z]), eye)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Square pixels, zero skew."""

    f: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.f > 0 and np.isfinite(self.f)):
            raise ValidationError(f"focal length must be positive, got {self.f}")
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValidationError("image size must be at least 1x1")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.f, 0.0, self.cx], [0.0, self.f, self.cy], [0.0, 0.0, 1.0]])


def project(K: CameraIntrinsics, p_cam) -> np.ndarray:
    p = np.asarray(p_cam, dtype=float)
    if p[2] <= 0:
        raise NonPositiveDepth(f"point {p.tolist()} is not in front of the camera")
    return np.array([K.f * p[0] / p[2] + K.cx, K.f * p[1] / p[2] + K.cy])


def project_points(K: CameraIntrinsics, pts) -> np.ndarray:
    """Vectorised ``project``; raises if any point has z <= 0."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    if np.any(pts[:, 2] <= 0):
        raise NonPositiveDepth("at least one point is not in front of the camera")
    return np.column_stack(
        [K.f * pts[:, 0] / pts[:, 2] + K.cx, K.f * pts[:, 1] / pts[:, 2] + K.cy]
    )


def kabsch(src, dst, weights=None) -> RigidTransform:
    """Least-squares rigid transform taking ``src`` onto ``dst`` (both (n, 3))."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    w = np.ones(len(src)) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    cs = w @ src
    cd = w @ dst
    H = (src - cs).T @ ((dst - cd) * w[:, None])
    U, _, Vt = np.linalg.svd(H)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0])
    R = Vt.T @ D @ U.T
    return RigidTransform.from_rt(R, cd - R @ cs)


def _rowdot(u, v):
    return np.einsum("...i,...i->...", u, v)


def closest_point_on_triangle(p, a, b, c) -> np.ndarray:
    """Closest point to ``p`` on triangle ``abc``; all (..., 3), broadcast (Voronoi-region test)."""
    p, a, b, c = (np.asarray(x, dtype=float) for x in (p, a, b, c))
    ab, ac = b - a, c - a
    dot = _rowdot
    ap, bp, cp = p - a, p - b, p - c
    d1, d2 = dot(ab, ap), dot(ac, ap)
    d3, d4 = dot(ab, bp), dot(ac, bp)
    d5, d6 = dot(ab, cp), dot(ac, cp)
    va, vb, vc = d3 * d6 - d5 * d4, d5 * d2 - d1 * d6, d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        out = a + ab * (vb / denom)[..., None] + ac * (vc / denom)[..., None]
        # regions in reverse priority, so the earliest test wins
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        out = np.where(m[..., None], b + w[..., None] * (c - b), out)
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        out = np.where(m[..., None], a + (d2 / (d2 - d6))[..., None] * ac, out)
        m = (d6 >= 0) & (d5 <= d6)
        out = np.where(m[..., None], c, out)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        out = np.where(m[..., None], a + (d1 / (d1 - d3))[..., None] * ab, out)
        m = (d3 >= 0) & (d4 <= d3)
        out = np.where(m[..., None], b, out)
        m = (d1 <= 0) & (d2 <= 0)
        out = np.where(m[..., None], a, out)
    return out
