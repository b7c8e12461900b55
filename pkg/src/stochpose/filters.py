"""Nonlinear stochastic pose filters on SE(3).

Two estimators share the same structure: the estimate is driven by the
measured group velocity minus a bias estimate and a correction term, with
adaptive estimates of the velocity bias ``b_hat`` and of the angular noise
variance bound ``sigma_hat``.

* semi-direct: the correction is built from a reconstructed pose ``T_y``
  (SVD attitude plus landmark position);
* direct: the correction is built from the raw vector and landmark
  observations.

Each is provided for a rotation-matrix attitude and a unit-quaternion
attitude.  Steps are explicit Euler steps of the continuous laws, with the
attitude advanced by the group exponential of the frozen angular rate and
reprojected onto the manifold.  All arrays may carry a leading batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .liegroup import (
    cross,
    mm,
    mtv,
    mv,
    norm_dist_I,
    project_so3,
    quat_from_rotvec,
    quat_inverse,
    quat_mul,
    quat_normalize,
    quat_sandwich,
    quat_to_rot,
    rotvec_to_rot,
    trace,
    transpose,
    upsilon_a,
)
from .sim import MeasurementFrame
from .wahba import ReconstructedPose

SINGULARITY_EPS = 1e-3


@dataclass(frozen=True)
class Gains:
    k_w: float = 8.0
    gamma_b: float = 1.0
    gamma_sigma: float = 1.0
    k_b: float = 0.1
    k_sigma: float = 0.1
    varrho: float = 0.2

    def __post_init__(self):
        if not self.k_w > 9.0 / 8.0:
            raise ValueError(f"k_w must exceed 9/8, got {self.k_w}")
        for name in ("gamma_b", "gamma_sigma", "k_b", "k_sigma", "varrho"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class FilterState:
    """Estimator state; ``attitude`` is ``(..., 3, 3)`` or a ``(..., 4)`` quaternion."""

    attitude: np.ndarray
    p_hat: np.ndarray
    b_hat: np.ndarray
    sigma_hat: np.ndarray

    @property
    def is_quaternion(self) -> bool:
        return self.attitude.shape[-1] == 4

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_rot(self.attitude) if self.is_quaternion else self.attitude

    @classmethod
    def initial(cls, attitude, p_hat, batch: int | None = None) -> "FilterState":
        """State with zero bias and variance estimates."""
        attitude = np.asarray(attitude, dtype=float)
        p_hat = np.asarray(p_hat, dtype=float)
        if batch is not None:
            attitude = np.broadcast_to(attitude, (batch,) + attitude.shape).copy()
            p_hat = np.broadcast_to(p_hat, (batch, 3)).copy()
        shape = p_hat.shape[:-1]
        return cls(attitude, p_hat, np.zeros(shape + (6,)), np.zeros(shape + (3,)))


@dataclass(frozen=True)
class ErrorSnapshot:
    e_R: np.ndarray
    e_P: np.ndarray
    upsilon: np.ndarray
    trace_term: np.ndarray
    clamped: np.ndarray


@dataclass(frozen=True)
class DirectMatrices:
    M_R: np.ndarray
    M_R_inv: np.ndarray
    m_v: np.ndarray
    m_c: float
    lambda1: float


def _clamp(den):
    clamped = den < SINGULARITY_EPS
    return np.where(clamped, SINGULARITY_EPS, den), clamped


def _advance(state: FilterState, gamma, vel, b_hat_dot, sigma_hat_dot, dt) -> FilterState:
    """Euler step of all estimator laws given the rates at the current state."""
    if state.is_quaternion:
        q = state.attitude
        p_next = state.p_hat + dt * quat_sandwich(q, vel)
        att = quat_normalize(quat_mul(q, quat_from_rotvec(gamma * dt)))
    else:
        r = state.attitude
        p_next = state.p_hat + dt * mv(r, vel)
        att = project_so3(mm(r, rotvec_to_rot(gamma * dt)))
    return FilterState(
        att,
        p_next,
        state.b_hat + dt * b_hat_dot,
        state.sigma_hat + dt * sigma_hat_dot,
    )


def _matrix_laws(state, frame, y, e_R, e_P, w_coef, sigma_coef, k_e, g: Gains, dt):
    """Shared correction and adaptation laws of the matrix-form filters.

    ``y`` is the body-frame error direction ``R_hat^T Upsilon``;
    ``w_coef * y * sigma_hat`` is the attitude correction and
    ``sigma_coef * K_E * y * y`` drives the variance estimate.
    """
    r = state.attitude
    p_hat = state.p_hat
    b_om, b_v = state.b_hat[..., :3], state.b_hat[..., 3:]
    w_om = w_coef[..., None] * y * state.sigma_hat
    rt_px = mtv(r, cross(p_hat, mv(r, w_om)))
    w_v = -rt_px + (g.k_w / g.varrho) * mtv(r, e_P)
    ep2 = np.einsum("...i,...i->...", e_P, e_P)[..., None]
    ex = np.exp(e_R)[..., None]
    b_om_dot = (
        0.5 * g.gamma_b * (1.0 + e_R)[..., None] * ex * y
        - g.gamma_b * ep2 * mtv(r, cross(p_hat, e_P))
        - g.gamma_b * g.k_b * b_om
    )
    b_v_dot = g.gamma_b * ep2 * mtv(r, e_P) - g.gamma_b * g.k_b * b_v
    sigma_dot = sigma_coef * k_e[..., None] * y * y - g.gamma_sigma * g.k_sigma * state.sigma_hat
    gamma = frame.omega_m - b_om - w_om
    vel = frame.v_m - b_v - w_v
    return _advance(state, gamma, vel, np.concatenate([b_om_dot, b_v_dot], axis=-1), sigma_dot, dt)


# -- semi-direct ----------------------------------------------------------------


def semi_direct_errors(state: FilterState, t_y: ReconstructedPose) -> ErrorSnapshot:
    """``E_R = |R_hat R_y^T|_I``, ``E_P = P_hat - R_tilde P_y`` and ``Upsilon_a(R_tilde)``."""
    r_tilde = mm(state.rotation, transpose(t_y.pose.rotation))
    e_R = norm_dist_I(r_tilde)
    e_P = state.p_hat - mv(r_tilde, t_y.pose.position)
    _, clamped = _clamp(1.0 - e_R)
    return ErrorSnapshot(e_R, e_P, upsilon_a(r_tilde), 1.0 - e_R, clamped)


def semi_direct_step(state: FilterState, frame: MeasurementFrame, t_y: ReconstructedPose, g: Gains, dt: float):
    """One step of the semi-direct filter in rotation-matrix form.

    Returns ``(next_state, errors)`` where ``errors`` are evaluated at the
    current state and record whether ``1 - E_R`` was clamped.
    """
    err = semi_direct_errors(state, t_y)
    den, _ = _clamp(err.trace_term)
    y = mtv(state.attitude, err.upsilon)
    w_coef = 2.0 * g.k_w / den
    k_e = g.gamma_sigma * (1.0 + err.e_R) / den * np.exp(err.e_R)
    nxt = _matrix_laws(state, frame, y, err.e_R, err.e_P, w_coef, g.k_w, k_e, g, dt)
    return nxt, err


def semi_direct_step_quat(state: FilterState, frame: MeasurementFrame, q_y, p_y, g: Gains, dt: float):
    """Semi-direct filter with a unit-quaternion attitude.

    With ``Q_tilde = Q_hat (.) Q_y^-1`` the attitude error direction is
    ``Upsilon_a(R_tilde) = 2 q0_tilde q_tilde``, so every law below uses
    ``2 q0_tilde Y(Q_hat^-1, q_tilde)`` for the matrix-form ``R_hat^T Upsilon``.
    """
    q_hat = state.attitude
    q_hat_inv = quat_inverse(q_hat)
    q_tilde = quat_mul(q_hat, quat_inverse(q_y))
    q0 = q_tilde[..., 0]
    qv = q_tilde[..., 1:]
    e_R = 1.0 - q0**2
    e_P = state.p_hat - quat_sandwich(q_tilde, p_y)
    den, clamped = _clamp(1.0 - e_R)

    u = quat_sandwich(q_hat_inv, qv)
    b_om, b_v = state.b_hat[..., :3], state.b_hat[..., 3:]
    w_om = (4.0 * q0 * g.k_w / den)[..., None] * u * state.sigma_hat
    p_body = quat_sandwich(q_hat_inv, state.p_hat)
    ep_body = quat_sandwich(q_hat_inv, e_P)
    w_v = -cross(p_body, w_om) + (g.k_w / g.varrho) * ep_body
    ep2 = np.einsum("...i,...i->...", e_P, e_P)[..., None]
    ex = np.exp(e_R)
    b_om_dot = (
        g.gamma_b * ((1.0 + e_R) * q0 * ex)[..., None] * u
        - g.gamma_b * ep2 * cross(p_body, ep_body)
        - g.gamma_b * g.k_b * b_om
    )
    b_v_dot = g.gamma_b * ep2 * ep_body - g.gamma_b * g.k_b * b_v
    k_e = g.gamma_sigma * (1.0 + e_R) / den * ex
    sigma_dot = (4.0 * g.k_w * q0**2 * k_e)[..., None] * u * u - g.gamma_sigma * g.k_sigma * state.sigma_hat
    gamma = frame.omega_m - b_om - w_om
    vel = frame.v_m - b_v - w_v
    nxt = _advance(state, gamma, vel, np.concatenate([b_om_dot, b_v_dot], axis=-1), sigma_dot, dt)
    upsilon = quat_sandwich(q_hat, 2.0 * q0[..., None] * u)
    return nxt, ErrorSnapshot(e_R, e_P, upsilon, 1.0 - e_R, clamped)


# -- direct -----------------------------------------------------------------------


def build_direct_matrices(frame: MeasurementFrame) -> DirectMatrices:
    """Inertial-side sums of the direct filter.

    ``lambda1`` is the smallest singular value of ``Tr(M_R) I - M_R``.
    Raises ``ValueError`` when ``M_R`` is singular.
    """
    s = np.asarray(frame.weights_R, dtype=float)
    vi = np.asarray(frame.inertial_vectors, dtype=float)
    m_r = np.einsum("i,ij,ik->jk", s, vi, vi)
    if np.linalg.matrix_rank(m_r, tol=1e-9) < 3:
        raise ValueError("M_R is rank deficient; at least two non-collinear vectors are needed")
    s_l = np.asarray(frame.weights_L, dtype=float)
    m_c = float(s_l.sum())
    if m_c == 0:
        raise ValueError("landmark weights sum to zero")
    m_v = np.einsum("j,jk->k", s_l, np.asarray(frame.inertial_landmarks, dtype=float))
    m_bar = np.trace(m_r) * np.eye(3) - m_r
    lambda1 = float(np.linalg.svd(m_bar, compute_uv=False)[-1])
    return DirectMatrices(m_r, np.linalg.inv(m_r), m_v, m_c, lambda1)


def check_direct_gains(g: Gains, mats: DirectMatrices) -> None:
    if not g.k_w > 0.375 * mats.lambda1:
        raise ValueError(f"k_w must exceed 3/8 * lambda1 = {0.375 * mats.lambda1}")


def _direct_sums(state_rot, frame):
    s = np.asarray(frame.weights_R, dtype=float)
    vi = frame.inertial_vectors
    vb = frame.body_vectors
    vb_hat = mtv(state_rot[..., None, :, :], vi)
    m1 = np.einsum("i,...ij,...ik->...jk", s, vb, np.broadcast_to(vi, vb.shape))
    m2_inv = np.einsum("i,...ij,...ik->...jk", s, vb_hat, np.broadcast_to(vi, vb.shape))
    half_cross = np.einsum("i,...ij->...j", 0.5 * s, cross(vb_hat, vb))
    e_R = 0.25 * np.einsum("i,...i->...", s, 1.0 - np.einsum("...ij,...ij->...i", vb_hat, vb))
    tr = trace(mm(m1, np.linalg.inv(m2_inv)))
    k_v = np.einsum("j,...jk->...k", np.asarray(frame.weights_L, dtype=float), frame.body_landmarks)
    return m1, half_cross, e_R, tr, k_v


def direct_errors(state: FilterState, frame: MeasurementFrame, mats: DirectMatrices | None = None) -> ErrorSnapshot:
    """Error terms of the direct filter computed from measurements only.

    ``upsilon`` is ``Upsilon_a(R_tilde M_R)``, ``e_R`` is
    ``|R_tilde M_R|_I`` and ``trace_term`` is ``Tr(R_tilde M_R M_R^-1)``,
    each expressed through the body and inertial observations.
    """
    mats = mats or build_direct_matrices(frame)
    r = state.rotation
    m1, half_cross, e_R, tr, k_v = _direct_sums(r, frame)
    upsilon = mv(r, half_cross)
    rt_mr = mm(r, m1)
    e_P = state.p_hat + (mv(r, k_v) - mv(rt_mr, mats.M_R_inv @ mats.m_v)) / mats.m_c
    _, clamped = _clamp(1.0 + tr)
    return ErrorSnapshot(e_R, e_P, upsilon, tr, clamped)


def direct_step(state: FilterState, frame: MeasurementFrame, g: Gains, dt: float, mats: DirectMatrices | None = None):
    """One step of the direct filter in rotation-matrix form."""
    mats = mats or build_direct_matrices(frame)
    check_direct_gains(g, mats)
    err = direct_errors(state, frame, mats)
    den, _ = _clamp(1.0 + err.trace_term)
    y = mtv(state.attitude, err.upsilon)
    w_coef = 4.0 / mats.lambda1 * g.k_w / den
    k_e = g.gamma_sigma * (1.0 + err.e_R) / den * np.exp(err.e_R)
    nxt = _matrix_laws(state, frame, y, err.e_R, err.e_P, w_coef, 2.0 * g.k_w / mats.lambda1, k_e, g, dt)
    return nxt, err


def direct_step_quat(state: FilterState, frame: MeasurementFrame, g: Gains, dt: float, mats: DirectMatrices | None = None):
    """Direct filter with a unit-quaternion attitude.

    The landmark error uses ``R_Q_hat M1 M_R^-1 m_v`` (the rotated body-side
    sum), matching the matrix form.
    """
    mats = mats or build_direct_matrices(frame)
    check_direct_gains(g, mats)
    q_hat = state.attitude
    q_hat_inv = quat_inverse(q_hat)
    s = np.asarray(frame.weights_R, dtype=float)
    vi = frame.inertial_vectors
    vb = frame.body_vectors
    vb_hat = quat_sandwich(q_hat_inv[..., None, :], np.broadcast_to(vi, vb.shape))
    r_hat = quat_to_rot(q_hat)
    upsilon = mv(r_hat, np.einsum("i,...ij->...j", 0.5 * s, cross(vb_hat, vb)))
    e_R = 0.25 * np.einsum("i,...i->...", s, 1.0 - np.einsum("...ij,...ij->...i", vb_hat, vb))
    m1 = np.einsum("i,...ij,...ik->...jk", s, vb, np.broadcast_to(vi, vb.shape))
    m2 = np.linalg.inv(np.einsum("i,...ij,...ik->...jk", s, vb_hat, np.broadcast_to(vi, vb.shape)))
    k_v = np.einsum("j,...jk->...k", np.asarray(frame.weights_L, dtype=float), frame.body_landmarks)
    e_P = state.p_hat + (quat_sandwich(q_hat, k_v) - mv(r_hat, mv(m1, mats.M_R_inv @ mats.m_v))) / mats.m_c
    tr = trace(mm(m1, m2))
    den, clamped = _clamp(1.0 + tr)

    u = quat_sandwich(q_hat_inv, upsilon)
    b_om, b_v = state.b_hat[..., :3], state.b_hat[..., 3:]
    w_om = (4.0 / mats.lambda1 * g.k_w / den)[..., None] * u * state.sigma_hat
    p_body = quat_sandwich(q_hat_inv, state.p_hat)
    ep_body = quat_sandwich(q_hat_inv, e_P)
    w_v = -cross(p_body, w_om) + (g.k_w / g.varrho) * ep_body
    ep2 = np.einsum("...i,...i->...", e_P, e_P)[..., None]
    ex = np.exp(e_R)
    b_om_dot = (
        0.5 * g.gamma_b * ((1.0 + e_R) * ex)[..., None] * u
        - g.gamma_b * ep2 * cross(p_body, ep_body)
        - g.gamma_b * g.k_b * b_om
    )
    b_v_dot = g.gamma_b * ep2 * ep_body - g.gamma_b * g.k_b * b_v
    k_e = g.gamma_sigma * (1.0 + e_R) / den * ex
    sigma_dot = (2.0 * g.k_w / mats.lambda1 * k_e)[..., None] * u * u - g.gamma_sigma * g.k_sigma * state.sigma_hat
    gamma = frame.omega_m - b_om - w_om
    vel = frame.v_m - b_v - w_v
    nxt = _advance(state, gamma, vel, np.concatenate([b_om_dot, b_v_dot], axis=-1), sigma_dot, dt)
    return nxt, ErrorSnapshot(e_R, e_P, upsilon, tr, clamped)


class PoseFilter:
    """Single-owner wrapper that advances one estimator variant.

    ``kind`` is ``"semi-direct"`` or ``"direct"``; the chart follows the
    attitude representation of ``state``.
    """

    def __init__(self, kind: str, state: FilterState, gains: Gains, dt: float, mats: DirectMatrices | None = None):
        if kind not in ("semi-direct", "direct"):
            raise ValueError(f"unknown filter kind {kind!r}")
        self.kind = kind
        self.state = state
        self.gains = gains
        self.dt = dt
        self.mats = mats
        if kind == "direct" and mats is not None:
            check_direct_gains(gains, mats)

    def step(self, frame: MeasurementFrame, t_y: ReconstructedPose | None = None, q_y=None) -> ErrorSnapshot:
        g, dt = self.gains, self.dt
        if self.kind == "semi-direct":
            if t_y is None:
                raise ValueError("semi-direct filter needs a reconstructed pose")
            if self.state.is_quaternion:
                if q_y is None:
                    raise ValueError("quaternion semi-direct filter needs Q_y")
                self.state, err = semi_direct_step_quat(self.state, frame, q_y, t_y.pose.position, g, dt)
            else:
                self.state, err = semi_direct_step(self.state, frame, t_y, g, dt)
        else:
            if self.mats is None:
                self.mats = build_direct_matrices(frame)
                check_direct_gains(g, self.mats)
            step = direct_step_quat if self.state.is_quaternion else direct_step
            self.state, err = step(self.state, frame, g, dt, self.mats)
        return err


__all__ = [
    "DirectMatrices",
    "ErrorSnapshot",
    "FilterState",
    "Gains",
    "PoseFilter",
    "SINGULARITY_EPS",
    "build_direct_matrices",
    "check_direct_gains",
    "direct_errors",
    "direct_step",
    "direct_step_quat",
    "semi_direct_errors",
    "semi_direct_step",
    "semi_direct_step_quat",
]
