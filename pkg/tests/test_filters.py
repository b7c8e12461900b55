from dataclasses import replace

import numpy as np
import pytest

import oracle_mp
from conftest import INERTIAL, frame_for, random_rotations
from stochpose.config import load_scenario
from stochpose.filters import (
    SINGULARITY_EPS,
    FilterState,
    Gains,
    PoseFilter,
    build_direct_matrices,
    check_direct_gains,
    direct_errors,
    direct_step,
    direct_step_quat,
    semi_direct_errors,
    semi_direct_step,
    semi_direct_step_quat,
)
from stochpose.harness import RunConfig, initial_rotation, run_scenario
from stochpose.liegroup import (
    Pose,
    angle_axis,
    mm,
    norm_dist_I,
    quat_inverse,
    quat_mul,
    quat_to_rot,
    rot_to_quat,
    transpose,
    upsilon_a,
)
from stochpose.sim import NoiseModel, Simulator
from stochpose.wahba import ReconstructedPose, reconstruct_pose

E3 = np.array([0.0, 0.0, 1.0])


def sec5_frame(sec5, steps=37):
    """A noisy frame from seed 1 of the reference scenario, a few steps in."""
    sim = Simulator(sec5.scene, sec5.noise, sec5.dt, [1])
    for _ in range(steps):
        sim.advance()
    return sim.frame()


def oracle_state(sec5, quaternion=False):
    r0 = initial_rotation(sec5.initial)
    att = rot_to_quat(r0) if quaternion else r0
    b = np.array([0.1, -0.2, 0.3, 0.4, -0.5, 0.6])
    sig = np.array([0.3, 0.2, 0.1])
    p = np.asarray(sec5.initial.p_hat, dtype=float)
    return (att, p, b, sig), FilterState(att[None], p[None], b[None], sig[None])


def assert_matches(ours: FilterState, ref, tol=1e-12):
    att, p, b, sig = ref
    assert np.abs(ours.attitude[0] - att).max() <= tol
    assert np.abs(ours.p_hat[0] - p).max() <= tol
    assert np.abs(ours.b_hat[0] - b).max() <= tol
    assert np.abs(ours.sigma_hat[0] - sig).max() <= tol


# -- gains --------------------------------------------------------------------------


def test_gains_defaults_and_rejection():
    g = Gains()
    assert (g.k_w, g.gamma_b, g.gamma_sigma, g.k_b, g.k_sigma, g.varrho) == (8, 1, 1, 0.1, 0.1, 0.2)
    with pytest.raises(ValueError):
        Gains(k_w=9 / 8)
    with pytest.raises(ValueError):
        Gains(k_w=1.0)
    with pytest.raises(ValueError):
        Gains(varrho=0.0)


def test_direct_gain_precondition():
    mats = build_direct_matrices(frame_for(np.eye(3), np.zeros(3), inertial=np.eye(3)))
    check_direct_gains(Gains(k_w=2.0), mats)
    with pytest.raises(ValueError):
        check_direct_gains(Gains(k_w=1.2), replace(mats, lambda1=4.0))


# -- dual transcription against the high-precision oracle --------------------------------


def test_semi_direct_matches_oracle(sec5):
    frame = sec5_frame(sec5)
    t_y = reconstruct_pose(frame)
    ref_state, state = oracle_state(sec5)
    ours, _ = semi_direct_step(state, frame, t_y, sec5.gains, sec5.dt)
    ref = oracle_mp.semi_direct_matrix(
        ref_state, frame.omega_m[0], frame.v_m[0], t_y.pose.rotation[0], t_y.pose.position[0], sec5.gains, sec5.dt
    )
    assert_matches(ours, ref)


def test_direct_matches_oracle(sec5):
    frame = sec5_frame(sec5)
    ref_state, state = oracle_state(sec5)
    ours, _ = direct_step(state, frame, sec5.gains, sec5.dt)
    assert_matches(ours, oracle_mp.direct_matrix(ref_state, frame, sec5.gains, sec5.dt))


def test_semi_direct_quat_matches_oracle(sec5):
    frame = sec5_frame(sec5)
    t_y = reconstruct_pose(frame)
    q_y = rot_to_quat(t_y.pose.rotation)
    ref_state, state = oracle_state(sec5, quaternion=True)
    ours, _ = semi_direct_step_quat(state, frame, q_y, t_y.pose.position, sec5.gains, sec5.dt)
    ref = oracle_mp.semi_direct_quat(
        ref_state, frame.omega_m[0], frame.v_m[0], q_y[0], t_y.pose.position[0], sec5.gains, sec5.dt
    )
    assert_matches(ours, ref)


def test_direct_quat_matches_oracle(sec5):
    frame = sec5_frame(sec5)
    ref_state, state = oracle_state(sec5, quaternion=True)
    ours, _ = direct_step_quat(state, frame, sec5.gains, sec5.dt)
    assert_matches(ours, oracle_mp.direct_quat(ref_state, frame, sec5.gains, sec5.dt))


# -- semi-direct errors -------------------------------------------------------------------


def _ty(r, p):
    return ReconstructedPose(Pose(np.asarray(r, dtype=float), np.asarray(p, dtype=float)), np.ones(()))


def test_semi_direct_errors_examples(rng):
    r_y = random_rotations(rng, 1)[0]
    p_y = rng.normal(size=3)
    state = FilterState.initial(r_y, p_y)
    err = semi_direct_errors(state, _ty(r_y, p_y))
    assert err.e_R == pytest.approx(0, abs=1e-15)
    assert np.allclose(err.e_P, 0, atol=1e-14)

    r_hat = r_y @ angle_axis(np.pi, E3)
    r_tilde = r_hat @ r_y.T
    err = semi_direct_errors(FilterState.initial(r_hat, r_tilde @ p_y), _ty(r_y, p_y))
    assert err.e_R == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(err.e_P, 0, atol=1e-14)
    assert err.clamped


def test_semi_direct_initial_errors(sec5):
    state = FilterState.initial(initial_rotation(sec5.initial), sec5.initial.p_hat)
    err = semi_direct_errors(state, _ty(np.eye(3), np.zeros(3)))
    assert err.e_R == pytest.approx((1 - np.cos(np.deg2rad(170))) / 2, abs=1e-14)
    assert err.e_R == pytest.approx(0.9924, abs=1e-3)
    assert np.array_equal(err.e_P, [4.0, -3.0, 5.0])


def test_quaternion_distance_matches_matrix(rng):
    q_hat = rot_to_quat(random_rotations(rng, 500))
    q_y = rot_to_quat(random_rotations(rng, 500))
    q_tilde = quat_mul(q_hat, quat_inverse(q_y))
    e_matrix = norm_dist_I(mm(quat_to_rot(q_hat), transpose(quat_to_rot(q_y))))
    assert np.abs(1 - q_tilde[:, 0] ** 2 - e_matrix).max() <= 1e-10


# -- direct matrices and errors ---------------------------------------------------------------


def test_direct_matrices_examples(sec5):
    m = build_direct_matrices(frame_for(np.eye(3), np.zeros(3), inertial=np.eye(3)))
    assert np.allclose(m.M_R, np.eye(3)) and m.lambda1 == pytest.approx(2.0)
    assert m.m_c == 2.0
    frame = Simulator(sec5.scene, NoiseModel(), sec5.dt, [1]).frame()
    m = build_direct_matrices(frame)
    assert np.trace(m.M_R) == pytest.approx(3.0, abs=1e-14)
    assert np.linalg.matrix_rank(m.M_R) == 3
    assert m.lambda1 == pytest.approx(1.4226, abs=1e-4)


def test_direct_matrices_reject_repeated_vectors():
    inertial = np.array([E3, E3, E3])
    with pytest.raises(ValueError):
        build_direct_matrices(frame_for(np.eye(3), np.zeros(3), inertial=inertial))


def test_direct_errors_at_truth(rng):
    r = random_rotations(rng, 10)
    p = rng.normal(size=(10, 3))
    err = direct_errors(FilterState(r, p, np.zeros((10, 6)), np.zeros((10, 3))), frame_for(r, p))
    assert np.abs(err.e_R).max() <= 1e-14
    assert np.abs(err.e_P).max() <= 1e-12
    assert np.abs(err.upsilon).max() <= 1e-14


def test_direct_measurement_identities(rng):
    n = 1000
    r, r_hat = random_rotations(rng, 2 * n).reshape(2, n, 3, 3)
    p, p_hat = rng.normal(scale=2, size=(2, n, 3))
    w_r = np.array([0.6, 1.5, 0.9])
    frame = frame_for(r, p, w_r=w_r, w_l=(1.0, 0.5))
    mats = build_direct_matrices(frame)
    err = direct_errors(FilterState(r_hat, p_hat, np.zeros((n, 6)), np.zeros((n, 3))), frame, mats)

    m_r = np.einsum("i,ij,ik->jk", w_r, INERTIAL, INERTIAL)
    r_tilde = mm(r_hat, transpose(r))
    rt_mr = r_tilde @ m_r
    assert np.abs(err.upsilon - upsilon_a(rt_mr)).max() <= 1e-10
    assert np.abs(err.e_R - 0.25 * np.trace(m_r - rt_mr, axis1=-2, axis2=-1)).max() <= 1e-10
    assert np.abs(err.trace_term - np.trace(rt_mr @ np.linalg.inv(m_r), axis1=-2, axis2=-1)).max() <= 1e-10
    assert np.abs(err.e_P - (p_hat - np.einsum("nij,nj->ni", r_tilde, p))).max() <= 1e-10


def test_direct_initial_position_error(sec5):
    frame = Simulator(sec5.scene, NoiseModel(), sec5.dt, [1]).frame()
    state = FilterState.initial(initial_rotation(sec5.initial), sec5.initial.p_hat, 1)
    err = direct_errors(state, frame)
    assert np.allclose(err.e_P[0], [4.0, -3.0, 5.0], atol=1e-13)


# -- equilibrium and bias decay ------------------------------------------------------------------


def test_equilibrium_static_truth_is_exact():
    sc = replace(load_scenario("equilibrium"), horizon=1.0, truth_profile="static")
    traces = run_scenario(RunConfig(sc, charts=("matrix", "quaternion")))
    assert len(traces) == 4
    for tr in traces:
        assert np.abs(tr.err_R).max() <= 1e-12
        assert np.abs(tr.err_P).max() <= 1e-12
        assert np.abs(tr.column("filter_e_R")).max() <= 1e-12


def test_equilibrium_moving_truth_drift_is_first_order():
    # the filter holds each velocity sample over its step while the truth is
    # integrated to fourth order, so a zero-error start drifts by O(dt)
    sc = replace(load_scenario("equilibrium"), horizon=1.0)
    worst = {}
    for dt in (1e-3, 5e-4):
        traces = run_scenario(RunConfig(sc, charts=("matrix", "quaternion"), dt_override=dt))
        worst[dt] = max(np.abs(tr.err_P).max() for tr in traces)
        assert max(np.abs(tr.err_R).max() for tr in traces) < 1e-7
    assert worst[1e-3] < 1e-3
    assert worst[1e-3] / worst[5e-4] == pytest.approx(2.0, rel=0.1)


def _bias_decay_ratio(step, quaternion, dt, g):
    rng = np.random.default_rng(5)
    r = random_rotations(rng, 4)
    p = rng.normal(size=(4, 3))
    frame = frame_for(r, p, omega=rng.normal(size=(4, 3)), v=rng.normal(size=(4, 3)))
    b0 = rng.uniform(0.1, 1.0, size=(4, 6))
    att = rot_to_quat(r) if quaternion else r
    state = FilterState(att, p, b0, np.zeros((4, 3)))
    nxt = step(state, frame, _ty(r, p), att, p, g, dt)
    return nxt.b_hat / b0


STEPS = {
    "semi": lambda s, f, ty, q, p, g, dt: semi_direct_step(s, f, ty, g, dt)[0],
    "semi_quat": lambda s, f, ty, q, p, g, dt: semi_direct_step_quat(s, f, q, p, g, dt)[0],
    "direct": lambda s, f, ty, q, p, g, dt: direct_step(s, f, g, dt)[0],
    "direct_quat": lambda s, f, ty, q, p, g, dt: direct_step_quat(s, f, g, dt)[0],
}


@pytest.mark.parametrize("name", sorted(STEPS))
def test_bias_decay(name):
    g = Gains()
    quaternion = name.endswith("quat")
    # at the working step size the Euler factor is exact to rounding
    ratio = _bias_decay_ratio(STEPS[name], quaternion, 1e-3, g)
    assert np.abs(ratio - (1 - g.gamma_b * g.k_b * 1e-3)).max() <= 1e-12
    # and it converges to exp(-gamma_b k_b dt) as dt shrinks
    dt = 1e-5
    ratio = _bias_decay_ratio(STEPS[name], quaternion, dt, g)
    assert np.abs(ratio - np.exp(-g.gamma_b * g.k_b * dt)).max() <= 1e-10


# -- chart equivalence and wrapper -------------------------------------------------------------------


def test_chart_equivalence_short(sec5):
    sc = replace(sec5, horizon=2.0)
    traces = run_scenario(RunConfig(sc, charts=("matrix", "quaternion"), seeds=(1, 2)))
    by = {(t.seed, t.filter, t.chart): t for t in traces}
    cols = ["roll_hat", "pitch_hat", "yaw_hat", "px_hat", "py_hat", "pz_hat"]
    for seed in (1, 2):
        for kind in ("semi-direct", "direct"):
            a, b = by[(seed, kind, "matrix")], by[(seed, kind, "quaternion")]
            for c in cols:
                assert np.abs(a.column(c) - b.column(c)).max() <= 1e-8


def test_singularity_clamp_reported():
    r_y = np.eye(3)
    state = FilterState.initial(angle_axis(np.pi, E3), np.zeros(3), 1)
    frame = frame_for(np.eye(3)[None], np.zeros((1, 3)))
    nxt, err = semi_direct_step(state, frame, _ty(r_y[None], np.zeros((1, 3))), Gains(), 1e-3)
    assert err.clamped[0]
    assert np.all(np.isfinite(nxt.attitude)) and np.all(np.isfinite(nxt.sigma_hat))
    assert SINGULARITY_EPS == 1e-3


def test_pose_filter_wrapper(sec5):
    frame = sec5_frame(sec5)
    t_y = reconstruct_pose(frame)
    _, state = oracle_state(sec5)
    pf = PoseFilter("semi-direct", state, sec5.gains, sec5.dt)
    pf.step(frame, t_y)
    ref, _ = semi_direct_step(state, frame, t_y, sec5.gains, sec5.dt)
    assert np.array_equal(pf.state.attitude, ref.attitude)
    pd = PoseFilter("direct", state, sec5.gains, sec5.dt)
    pd.step(frame)
    ref, _ = direct_step(state, frame, sec5.gains, sec5.dt)
    assert np.array_equal(pd.state.p_hat, ref.p_hat)
    with pytest.raises(ValueError):
        PoseFilter("kalman", state, sec5.gains, sec5.dt)
    with pytest.raises(ValueError):
        pf.step(frame)


# -- reference run behaviour --------------------------------------------------------------------


def test_semi_direct_reference_run_settles(sec5_runs):
    traces, _ = sec5_runs.get("semi-direct")
    first = next(tr for tr in traces if tr.seed == 1)
    assert first.column("filter_e_R")[-1] < 0.03
    assert first.column("filter_e_P")[-1] < 0.5
    # across seeds the end-of-run errors are small on average
    assert np.mean([tr.column("filter_e_R")[-1] for tr in traces]) < 0.03
    assert np.mean([tr.column("filter_e_P")[-1] for tr in traces]) < 0.5
