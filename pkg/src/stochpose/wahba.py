"""Static pose reconstruction from vector and landmark observations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .liegroup import Pose, mm, mv
from .sim import MeasurementFrame

RANK_TOL = 1e-9


@dataclass(frozen=True)
class ReconstructedPose:
    pose: Pose
    conditioning: np.ndarray


def _profile_svd(body, inertial, weights):
    body = np.asarray(body, dtype=float)
    inertial = np.asarray(inertial, dtype=float)
    weights = np.asarray(weights, dtype=float)
    # B = sum_i s_i v_i^I (v_i^B)^T, maximizing Tr(R_y B^T) gives R_y
    inertial = np.broadcast_to(inertial, body.shape)
    b = np.einsum("i,...ij,...ik->...jk", weights, inertial, body)
    return np.linalg.svd(b)


def solve_wahba(body, inertial, weights) -> np.ndarray:
    """Attitude minimizing ``sum_i s_i |v_i^B - R^T v_i^I|^2`` over SO(3).

    ``body`` may carry a batch axis; ``inertial`` and ``weights`` are
    shared.  Raises ``ValueError`` if the weighted profile matrix is not of
    full rank.
    """
    r, _ = _solve(body, inertial, weights)
    return r


def _solve(body, inertial, weights):
    u, s, vt = _profile_svd(body, inertial, weights)
    if np.any(s[..., 2] <= RANK_TOL * s[..., 0]):
        raise ValueError("rank-deficient attitude profile matrix")
    d = np.linalg.det(u) * np.linalg.det(vt)
    u = u.copy()
    u[..., :, 2] *= d[..., None]
    return mm(u, vt), s[..., 2]


def reconstruct_position(r_y, inertial_landmarks, body_landmarks, weights) -> np.ndarray:
    """Weighted mean of ``v_j^I - R_y v_j^B`` over the landmarks."""
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if total == 0:
        raise ValueError("landmark weights sum to zero")
    r_y = np.asarray(r_y, dtype=float)
    rotated = mv(r_y[..., None, :, :], np.asarray(body_landmarks, dtype=float))
    diff = np.asarray(inertial_landmarks, dtype=float) - rotated
    return np.einsum("j,...jk->...k", weights, diff) / total


def reconstruct_pose(frame: MeasurementFrame) -> ReconstructedPose:
    r_y, cond = _solve(frame.body_vectors, frame.inertial_vectors, frame.weights_R)
    p_y = reconstruct_position(r_y, frame.inertial_landmarks, frame.body_landmarks, frame.weights_L)
    return ReconstructedPose(Pose(r_y, p_y), cond)

