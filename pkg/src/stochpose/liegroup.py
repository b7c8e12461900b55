"""SO(3)/SE(3) algebra and unit-quaternion helpers.

Every function accepts leading batch dimensions: a rotation is ``(..., 3, 3)``,
a vector ``(..., 3)``, a quaternion ``(..., 4)`` stored scalar-first
``[q0, qx, qy, qz]``.  Products are written with ``np.einsum`` so each output
element is reduced in a fixed order regardless of the batch size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROTATION_TOL = 1e-9
VEX_SYM_TOL = 1e-6

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched 3x3 (or 4x4) matrix product."""
    return np.einsum("...ij,...jk->...ik", a, b)


def mv(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Batched matrix-vector product."""
    return np.einsum("...ij,...j->...i", a, x)


def mtv(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Batched ``a.T @ x``."""
    return np.einsum("...ji,...j->...i", a, x)


def transpose(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


def trace(a: np.ndarray) -> np.ndarray:
    return np.einsum("...ii->...", a)


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def skew(v: np.ndarray) -> np.ndarray:
    """Map ``v`` to the antisymmetric matrix with ``skew(v) @ y == v x y``."""
    v = np.asarray(v, dtype=float)
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    zero = np.zeros_like(x)
    return np.stack(
        [
            np.stack([zero, -z, y], axis=-1),
            np.stack([z, zero, -x], axis=-1),
            np.stack([-y, x, zero], axis=-1),
        ],
        axis=-2,
    )


def vex(m: np.ndarray) -> np.ndarray:
    """Inverse of :func:`skew`.

    Raises ``ValueError`` when the symmetric part of ``m`` exceeds
    ``VEX_SYM_TOL``; compose with :func:`pa` to project first.
    """
    m = np.asarray(m, dtype=float)
    sym = 0.5 * (m + transpose(m))
    if np.max(np.abs(sym), initial=0.0) > VEX_SYM_TOL:
        raise ValueError("vex: input is not antisymmetric")
    return np.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], axis=-1)


def pa(m: np.ndarray) -> np.ndarray:
    """Antisymmetric projection ``(M - M^T) / 2``."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m - transpose(m))


def upsilon_a(m: np.ndarray) -> np.ndarray:
    """``vex(pa(M))``, computed without the antisymmetry check."""
    m = np.asarray(m, dtype=float)
    return 0.5 * np.stack(
        [m[..., 2, 1] - m[..., 1, 2], m[..., 0, 2] - m[..., 2, 0], m[..., 1, 0] - m[..., 0, 1]],
        axis=-1,
    )


def norm_dist_I(r: np.ndarray) -> np.ndarray:
    """Normalized Euclidean distance ``Tr(I - R) / 4`` of an attitude."""
    r = np.asarray(r, dtype=float)
    return 0.25 * (3.0 - trace(r))


def angle_axis(alpha, u) -> np.ndarray:
    """Rotation by ``alpha`` radians about the unit axis ``u``."""
    alpha = np.asarray(alpha, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(np.abs(np.linalg.norm(u, axis=-1) - 1.0) > ROTATION_TOL):
        raise ValueError("angle_axis: axis must be a unit vector")
    k = skew(u)
    s = np.sin(alpha)[..., None, None]
    c = np.cos(alpha)[..., None, None]
    return np.eye(3) + s * k + (1.0 - c) * mm(k, k)


def rotvec_to_rot(phi: np.ndarray) -> np.ndarray:
    """Rotation by angle ``|phi|`` about ``phi/|phi|`` (identity at zero)."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    # series of sin(t)/t and (1-cos t)/t^2 below 1e-8 are exact to rounding
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    k = skew(phi)
    return np.eye(3) + a[..., None, None] * k + b[..., None, None] * mm(k, k)


def rodriguez(rho: np.ndarray) -> np.ndarray:
    """Rotation from a Rodriguez (Gibbs) parameter vector."""
    rho = np.asarray(rho, dtype=float)
    n2 = np.einsum("...i,...i->...", rho, rho)[..., None, None]
    outer = rho[..., :, None] * rho[..., None, :]
    return ((1.0 - n2) * np.eye(3) + 2.0 * outer + 2.0 * skew(rho)) / (1.0 + n2)


def wedge6(y: np.ndarray) -> np.ndarray:
    """se(3) hat map of ``[omega, v]`` into a 4x4 matrix."""
    y = np.asarray(y, dtype=float)
    out = np.zeros(y.shape[:-1] + (4, 4))
    out[..., :3, :3] = skew(y[..., :3])
    out[..., :3, 3] = y[..., 3:]
    return out


def project_so3(m: np.ndarray) -> np.ndarray:
    """Nearest rotation in Frobenius norm (orientation-preserving polar factor)."""
    m = np.asarray(m, dtype=float)
    u, s, vt = np.linalg.svd(m)
    if np.any(s[..., -1] <= 1e-12 * np.maximum(s[..., 0], 1e-300)):
        raise ValueError("project_so3: rank-deficient input")
    d = np.sign(np.linalg.det(mm(u, vt)))
    u = u.copy()
    u[..., :, 2] *= d[..., None]
    return mm(u, vt)


def is_rotation(r: np.ndarray, tol: float = ROTATION_TOL) -> bool:
    r = np.asarray(r, dtype=float)
    gram = mm(transpose(r), r) - np.eye(3)
    return bool(np.all(np.abs(gram) <= tol) and np.all(np.linalg.det(r) > 0))


@dataclass(frozen=True)
class Pose:
    """Rigid-body pose: attitude ``rotation`` and inertial ``position`` (m)."""

    rotation: np.ndarray
    position: np.ndarray

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, t: np.ndarray) -> "Pose":
        t = np.asarray(t, dtype=float)
        return cls(t[..., :3, :3].copy(), t[..., :3, 3].copy())

    def matrix(self) -> np.ndarray:
        shape = self.position.shape[:-1]
        out = np.zeros(shape + (4, 4))
        out[..., :3, :3] = self.rotation
        out[..., :3, 3] = self.position
        out[..., 3, 3] = 1.0
        return out


def pose_compose(a: Pose, b: Pose) -> Pose:
    return Pose(mm(a.rotation, b.rotation), mv(a.rotation, b.position) + a.position)


def pose_inverse(a: Pose) -> Pose:
    rt = transpose(a.rotation)
    return Pose(rt, -mv(rt, a.position))


# -- unit quaternions ---------------------------------------------------------


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_inverse(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.concatenate([q[..., :1], -q[..., 1:]], axis=-1)


def _quat_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a0, av = a[..., :1], a[..., 1:]
    b0, bv = b[..., :1], b[..., 1:]
    s = a0 * b0 - np.einsum("...i,...i->...", av, bv)[..., None]
    v = a0 * bv + b0 * av + cross(av, bv)
    return np.concatenate([s, v], axis=-1)


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product ``a (.) b``, renormalized onto the unit sphere."""
    return quat_normalize(_quat_product(np.asarray(a, float), np.asarray(b, float)))


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    q0 = q[..., 0][..., None, None]
    v = q[..., 1:]
    vv = np.einsum("...i,...i->...", v, v)[..., None, None]
    return (q0**2 - vv) * np.eye(3) + 2.0 * v[..., :, None] * v[..., None, :] + 2.0 * q0 * skew(v)


def rot_to_quat(r: np.ndarray) -> np.ndarray:
    """Inverse chart of :func:`quat_to_rot` with ``q0 >= 0``.

    When ``q0 == 0`` the first nonzero vector component is made positive.
    """
    r = np.asarray(r, dtype=float)
    m = lambda i, j: r[..., i, j]  # noqa: E731
    tr = m(0, 0) + m(1, 1) + m(2, 2)
    # Shepperd's method: divide by the largest of the four candidate magnitudes
    diag = np.stack([tr, m(0, 0), m(1, 1), m(2, 2)], axis=-1)
    k = np.argmax(diag, axis=-1)[..., None]
    radicand = np.stack(
        [
            1.0 + tr,
            1.0 + m(0, 0) - m(1, 1) - m(2, 2),
            1.0 + m(1, 1) - m(0, 0) - m(2, 2),
            1.0 + m(2, 2) - m(0, 0) - m(1, 1),
        ],
        axis=-1,
    )
    s = 2.0 * np.sqrt(np.maximum(np.take_along_axis(radicand, k, axis=-1)[..., 0], 0.0))
    d21, d02, d10 = m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)
    s01, s02, s12 = m(0, 1) + m(1, 0), m(0, 2) + m(2, 0), m(1, 2) + m(2, 1)
    cands = np.stack(
        [
            np.stack([0.25 * s, d21 / s, d02 / s, d10 / s], axis=-1),
            np.stack([d21 / s, 0.25 * s, s01 / s, s02 / s], axis=-1),
            np.stack([d02 / s, s01 / s, 0.25 * s, s12 / s], axis=-1),
            np.stack([d10 / s, s02 / s, s12 / s, 0.25 * s], axis=-1),
        ],
        axis=-2,
    )
    q = np.take_along_axis(cands, k[..., None], axis=-2)[..., 0, :]
    # sign convention: q0 >= 0, ties broken by the first nonzero vector entry
    first = np.take_along_axis(q[..., 1:], np.argmax(q[..., 1:] != 0.0, axis=-1)[..., None], axis=-1)[..., 0]
    flip = (q[..., 0] < 0.0) | ((q[..., 0] == 0.0) & (first < 0.0))
    q = np.where(flip[..., None], -q, q)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_sandwich(q: np.ndarray, x: np.ndarray) -> np.ndarray:
    """The map ``Y(Q, x)``: vector part of ``Q (.) [0, x] (.) Q^-1``."""
    q = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    xbar = np.concatenate([np.zeros(x.shape[:-1] + (1,)), x], axis=-1)
    return _quat_product(_quat_product(q, xbar), quat_inverse(q))[..., 1:]


def quat_from_rotvec(phi: np.ndarray) -> np.ndarray:
    """Unit quaternion of the rotation by ``|phi|`` about ``phi/|phi|``."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    k = np.where(small, 0.5 - theta**2 / 48.0, np.sin(0.5 * safe) / safe)
    return np.concatenate([np.cos(0.5 * theta)[..., None], k[..., None] * phi], axis=-1)


def euler_zyx(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Roll, pitch, yaw (intrinsic Z-Y-X) of ``r`` plus a gimbal-lock flag.

    Returns ``(angles, locked)`` with ``angles[..., :] = [roll, pitch, yaw]``.
    At gimbal lock roll is set to zero and yaw absorbs the remaining angle.
    """
    r = np.asarray(r, dtype=float)
    s = np.clip(-r[..., 2, 0], -1.0, 1.0)
    pitch = np.arcsin(s)
    locked = np.abs(s) > 1.0 - 1e-12
    roll = np.where(locked, 0.0, np.arctan2(r[..., 2, 1], r[..., 2, 2]))
    yaw = np.where(
        locked,
        np.arctan2(-r[..., 0, 1], r[..., 1, 1]),
        np.arctan2(r[..., 1, 0], r[..., 0, 0]),
    )
    return np.stack([roll, pitch, yaw], axis=-1), locked


def rot_from_euler_zyx(angles: np.ndarray) -> np.ndarray:
    angles = np.asarray(angles, dtype=float)
    e = np.eye(3)
    rz = angle_axis(angles[..., 2], np.broadcast_to(e[2], angles.shape))
    ry = angle_axis(angles[..., 1], np.broadcast_to(e[1], angles.shape))
    rx = angle_axis(angles[..., 0], np.broadcast_to(e[0], angles.shape))
    return mm(mm(rz, ry), rx)
