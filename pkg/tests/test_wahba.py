import numpy as np
import pytest

from conftest import INERTIAL, LANDMARKS, frame_for, random_rotations
from stochpose.liegroup import mm, mtv, norm_dist_I
from stochpose.wahba import reconstruct_pose, reconstruct_position, solve_wahba

def test_identity():
    assert np.allclose(solve_wahba(INERTIAL, INERTIAL, [1, 1, 1]), np.eye(3), atol=1e-12)
    out = reconstruct_pose(frame_for(np.eye(3), np.zeros(3), landmarks=LANDMARKS[:1], w_l=[1]))
    assert np.allclose(out.pose.rotation, np.eye(3), atol=1e-12)
    assert np.allclose(out.pose.position, 0, atol=1e-12)
    assert np.all(out.conditioning > 0)


def test_noise_free_exactness(rng):
    r = random_rotations(rng, 200)
    p = rng.normal(scale=3, size=(200, 3))
    out = reconstruct_pose(frame_for(r, p))
    assert norm_dist_I(mm(out.pose.rotation, np.swapaxes(r, -1, -2))).max() <= 1e-12
    assert np.abs(out.pose.rotation - r).max() <= 1e-10
    assert np.linalg.norm(out.pose.position - p, axis=-1).max() <= 1e-10


def test_weight_scale_invariance(rng):
    body = mtv(random_rotations(rng, 1)[0], INERTIAL) + 0.05 * rng.normal(size=(3, 3))
    body /= np.linalg.norm(body, axis=-1, keepdims=True)
    a = solve_wahba(body, INERTIAL, [0.5, 1.5, 1.0])
    b = solve_wahba(body, INERTIAL, [5.0, 15.0, 10.0])
    assert np.abs(a - b).max() <= 1e-12


def test_permutation_invariance(rng):
    body = mtv(random_rotations(rng, 1)[0], INERTIAL) + 0.05 * rng.normal(size=(3, 3))
    body /= np.linalg.norm(body, axis=-1, keepdims=True)
    w = np.array([0.5, 1.5, 1.0])
    perm = [2, 0, 1]
    a = solve_wahba(body, INERTIAL, w)
    b = solve_wahba(body[perm], INERTIAL[perm], w[perm])
    assert np.abs(a - b).max() <= 1e-12


def test_noisy_output_is_rotation(rng):
    body = mtv(random_rotations(rng, 100)[:, None], INERTIAL) + 0.3 * rng.normal(size=(100, 3, 3))
    r = solve_wahba(body, INERTIAL, [1, 1, 1])
    assert np.abs(np.swapaxes(r, -1, -2) @ r - np.eye(3)).max() <= 1e-12
    assert np.all(np.linalg.det(r) > 0)


def test_position_recovery(rng):
    r = random_rotations(rng, 20)
    p = rng.normal(size=(20, 3))
    f = frame_for(r, p)
    out = reconstruct_position(r, LANDMARKS, f.body_landmarks, [1, 2])
    assert np.abs(out - p).max() <= 1e-10


def test_position_bias_only(rng):
    r = random_rotations(rng, 1)[0]
    p = rng.normal(size=3)
    b = np.array([0.03, 0.02, -0.02])
    body = r.T @ (LANDMARKS[0] - p) + b
    p_y = reconstruct_position(r, LANDMARKS[:1], body[None], [1.0])
    assert np.allclose(p_y - p, -r @ b, atol=1e-14)


def test_position_zero_weights():
    with pytest.raises(ValueError):
        reconstruct_position(np.eye(3), LANDMARKS, LANDMARKS, [0.0, 0.0])


def test_rank_two_scene_raises():
    inertial = INERTIAL.copy()
    inertial[2] = inertial[0]
    f = frame_for(np.eye(3), np.zeros(3), inertial=inertial)
    with pytest.raises(ValueError):
        reconstruct_pose(f)
