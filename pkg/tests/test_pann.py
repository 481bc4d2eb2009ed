"""Rollout checks: one-step predictions, free-running stability, settling,
and teacher-forced consistency with synthesized data."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import pannkit as pk
from pannkit.errors import EmptyDataset, NonFinite, ShapeMismatch

DT = pk.DEFAULT_DT


def test_step_is_the_plain_dot_product(star):
    trans = pk.dab_transition(star, DT)
    z = pk.StepInput([1.5], [200.0, -200.0])
    expected = trans.w[0, 0] * 1.5 + trans.w[0, 1] * 200.0 + trans.w[0, 2] * (-200.0)
    got = pk.step(trans, z)
    assert got.shape == (1,)
    assert got[0] == expected, f"step {got[0]} vs dot product {expected}"


def test_step_rejects_wrong_length(star):
    trans = pk.dab_transition(star, DT)
    with pytest.raises(ShapeMismatch):
        pk.step(trans, pk.StepInput([1.5, 0.1], [200.0, -200.0]))


def test_step_input_rejects_nonfinite():
    with pytest.raises(NonFinite):
        pk.StepInput([np.inf], [0.0, 0.0])


@given(
    a=st.floats(-10, 10), b=st.floats(-10, 10), scale=st.floats(-3, 3),
)
@settings(max_examples=100, deadline=None)
def test_step_is_linear_in_z(a, b, scale):
    trans = pk.dab_transition(pk.dab_params(), DT)
    za = np.array([a, 200.0, -200.0])
    zb = np.array([b, -200.0, 200.0])
    combo = pk.StepInput(
        [za[0] + scale * zb[0]], za[1:] + scale * zb[1:]
    )
    lhs = pk.step(trans, combo)
    rhs = pk.step(trans, pk.StepInput([za[0]], za[1:])) + scale * pk.step(
        trans, pk.StepInput([zb[0]], zb[1:])
    )
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12), "step must be linear in z"


def test_rollout_constant_input_reaches_dc_fixed_point(star):
    trans = pk.dab_transition(star, DT)
    # constant u: fixed point x* solves x = w0 x + w1 u1 + w2 u2
    u = np.tile([[100.0], [50.0]], (1, 50000))
    traj = pk.rollout_free(trans, [0.0], u)
    w = trans.w[0]
    x_fix = (w[1] * 100.0 + w[2] * 50.0) / (1.0 - w[0])
    assert traj.states[0, -1] == pytest.approx(x_fix, rel=1e-4), (
        f"rollout {traj.states[0, -1]} vs fixed point {x_fix}"
    )


def test_rollout_zero_everything_stays_zero(star):
    trans = pk.dab_transition(star, DT)
    traj = pk.rollout_free(trans, [0.0], np.zeros((2, 10)))
    assert np.all(traj.states == 0.0)
    assert traj.times[0] == 0.0
    assert traj.dt == pytest.approx(DT)


def test_rollout_detects_divergence():
    # an expanding scalar map: W = [2 | 0 0]
    trans = pk.DiscreteTransition(np.array([[2.0, 0.0, 0.0]]), None, None, DT)
    with pytest.raises(NonFinite):
        pk.rollout_free(trans, [1.0], np.zeros((2, 200)))


def test_rollout_rejects_bad_shapes(star):
    trans = pk.dab_transition(star, DT)
    with pytest.raises(ShapeMismatch):
        pk.rollout_free(trans, [0.0, 0.0], np.zeros((2, 5)))
    with pytest.raises(ShapeMismatch):
        pk.rollout_free(trans, [0.0], np.zeros((3, 5)))
    with pytest.raises(ShapeMismatch):
        pk.rollout_free(trans, [0.0], np.zeros((2, 0)))


def test_settle_is_immediate_for_memoryless_map():
    # W = [0 | 1 0]: the state equals the last input, periodic from cycle 1
    trans = pk.DiscreteTransition(np.array([[0.0, 1.0, 0.0]]), None, None, DT)
    inputs = pk.step_inputs_one_period(pk.ModulationSpec())
    settled = pk.settle_to_steady_state(trans, inputs)
    assert settled.converged
    # cycle 2 still differs from cycle 1 in its starting state; cycle 3 repeats
    assert settled.cycles == 3, f"settled in {settled.cycles} cycles"


def test_settle_reference_converges(star):
    trans = pk.dab_transition(star, DT)
    inputs = pk.step_inputs_one_period(pk.ModulationSpec(phase_shift=0.25))
    settled = pk.settle_to_steady_state(trans, inputs, max_cycles=200, tol=1e-9)
    assert settled.converged, "reference model must settle within 200 cycles"
    assert settled.cycles <= 60, f"settling took {settled.cycles} cycles"
    # the settled period must be stationary: one more period reproduces it
    last = settled.trajectory
    again = pk.rollout_free(trans, last.states[:, 0], last.inputs)
    assert np.allclose(again.states, last.states, rtol=0, atol=1e-6 * 200.0)


def test_settle_zero_tolerance_reports_not_settled(star):
    trans = pk.dab_transition(star, DT)
    inputs = pk.step_inputs_one_period(pk.ModulationSpec(phase_shift=0.25))
    settled = pk.settle_to_steady_state(trans, inputs, max_cycles=5, tol=0.0)
    assert not settled.converged, "tol=0 cannot be met in 5 cycles"
    assert settled.cycles == 5


def test_settled_state_is_periodic_over_ten_periods(star):
    trans = pk.dab_transition(star, DT)
    spec = pk.ModulationSpec(phase_shift=0.25, n_periods=10)
    one = pk.ModulationSpec(phase_shift=0.25)
    settled = pk.settle_to_steady_state(
        trans, pk.step_inputs_one_period(one), max_cycles=200, tol=1e-12
    )
    x0 = settled.trajectory.states[:, 0]
    ten = pk.rollout_free(trans, x0, np.tile(pk.step_inputs_one_period(one), (1, 10)))
    p = spec.steps_per_period
    for c in range(10):
        seg = ten.states[0, c * p : (c + 1) * p]
        assert np.allclose(seg, ten.states[0, :p], rtol=0, atol=1e-6), (
            f"cycle {c} deviates from the first by "
            f"{np.max(np.abs(seg - ten.states[0, :p])):.3e}"
        )


def test_teacher_forced_matches_w_times_z(star, train_dataset):
    trans = pk.dab_transition(star, DT)
    pred = pk.rollout_teacher_forced(trans, train_dataset)
    z, targets = train_dataset.stacked()
    assert pred.shape == targets.shape
    assert np.array_equal(pred, trans.w @ z)
    # the data was generated by this very transition, so predictions are exact
    assert np.allclose(pred, targets, rtol=0, atol=1e-12), (
        f"max residual {np.max(np.abs(pred - targets)):.3e} at the true parameters"
    )


def test_teacher_forced_error_is_linear_in_w_offset(star, train_dataset):
    trans_star = pk.dab_transition(star, DT)
    other = pk.dab_params([80e-6, 1.0, 0.9])
    trans_other = pk.dab_transition(other, DT)
    z, targets = train_dataset.stacked()
    pred = pk.rollout_teacher_forced(trans_other, train_dataset)
    assert np.allclose(
        pred - targets, (trans_other.w - trans_star.w) @ z, rtol=0, atol=1e-12
    ), "teacher-forced residual must equal (W - W*) z on noiseless data"


def test_teacher_forced_rejects_empty(star):
    trans = pk.dab_transition(star, DT)
    with pytest.raises(EmptyDataset):
        pk.rollout_teacher_forced(trans, pk.WaveformDataset([]))


def test_trajectory_rejects_irregular_times():
    with pytest.raises(ShapeMismatch):
        pk.Trajectory(
            times=[0.0, 1.0, 3.0],
            states=np.zeros((1, 3)),
            inputs=np.zeros((2, 2)),
        )
    with pytest.raises(ShapeMismatch):
        pk.Trajectory(times=[0.0, 1.0], states=np.zeros((1, 3)), inputs=np.zeros((2, 2)))
