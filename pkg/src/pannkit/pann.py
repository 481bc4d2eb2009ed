"""Recurrent execution of the discretized transition.

Three execution modes: one-step prediction, free-running rollout (the model
feeds on its own states), and teacher-forced prediction (each step starts
from the measured state, which is what the training gradient assumes).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, TYPE_CHECKING

import numpy as np

from .errors import EmptyDataset, NonFinite, ShapeMismatch
from .statespace import DiscreteTransition

if TYPE_CHECKING:  # pragma: no cover - import cycle guard for type hints only
    from .signals import WaveformDataset

_OVERFLOW_LIMIT = 1e12


@dataclass
class StepInput:
    """State at t_k and inputs at t_{k+1}; concatenates to z = [x; u]."""

    x_prev: np.ndarray
    u_next: np.ndarray

    def __post_init__(self):
        self.x_prev = np.atleast_1d(np.asarray(self.x_prev, dtype=float))
        self.u_next = np.atleast_1d(np.asarray(self.u_next, dtype=float))
        if not (np.all(np.isfinite(self.x_prev)) and np.all(np.isfinite(self.u_next))):
            raise NonFinite("step input contains non-finite entries")

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.x_prev, self.u_next])


@dataclass
class Trajectory:
    """Uniformly sampled state trajectory with the inputs that drove it.

    states has K+1 columns; inputs[:, k] is the input applied over the step
    from times[k] to times[k+1].
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        k = self.inputs.shape[1]
        if self.times.size != k + 1 or self.states.shape[1] != k + 1:
            raise ShapeMismatch(
                f"trajectory sizes inconsistent: {self.times.size} times, "
                f"{self.states.shape[1]} states, {k} inputs"
            )
        if k >= 1:
            dts = np.diff(self.times)
            if np.any(dts <= 0) or not np.allclose(dts, dts[0], rtol=1e-9, atol=0.0):
                raise ShapeMismatch("trajectory times must increase uniformly")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


def step(trans: DiscreteTransition, z: StepInput) -> np.ndarray:
    """One-step prediction x_hat = W [x_prev; u_next]."""
    zz = z.z
    if zz.size != trans.dim_z:
        raise ShapeMismatch(f"z has length {zz.size}, W expects {trans.dim_z}")
    return trans.w @ zz


def rollout_free(trans: DiscreteTransition, x0: np.ndarray, inputs: np.ndarray, t0: float = 0.0) -> Trajectory:
    """Free-running rollout: each step feeds on the previous prediction."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    d_x = trans.dim_x
    d_u = trans.dim_z - d_x
    if x0.size != d_x or inputs.shape[0] != d_u:
        raise ShapeMismatch(
            f"rollout shapes: x0 {x0.size} vs D_x {d_x}, inputs {inputs.shape[0]} vs D_u {d_u}"
        )
    k_steps = inputs.shape[1]
    if k_steps < 1:
        raise ShapeMismatch("rollout needs at least one input column")
    states = np.empty((d_x, k_steps + 1))
    states[:, 0] = x0
    w = trans.w
    x = x0.copy()
    for k in range(k_steps):
        x = w @ np.concatenate([x, inputs[:, k]])
        if np.any(np.abs(x) > _OVERFLOW_LIMIT) or not np.all(np.isfinite(x)):
            raise NonFinite(
                f"state magnitude exceeded {_OVERFLOW_LIMIT:g} at step {k + 1}; "
                "the discretized model is unstable for these inputs"
            )
        states[:, k + 1] = x
    times = t0 + trans.dt * np.arange(k_steps + 1)
    return Trajectory(times, states, inputs)


def rollout_teacher_forced(trans: DiscreteTransition, dataset: "WaveformDataset") -> np.ndarray:
    """Per-step predictions W z_k from measured z, concatenated over segments."""
    z, _ = dataset.stacked()
    if z.shape[1] == 0:
        raise EmptyDataset("dataset has no steps")
    if z.shape[0] != trans.dim_z:
        raise ShapeMismatch(f"dataset z dimension {z.shape[0]} vs W {trans.dim_z}")
    return trans.w @ z


class SettleResult(NamedTuple):
    trajectory: Trajectory
    converged: bool
    cycles: int


def settle_to_steady_state(
    trans: DiscreteTransition,
    inputs_one_period: np.ndarray,
    max_cycles: int = 200,
    tol: float = 1e-9,
    x0: np.ndarray | None = None,
) -> SettleResult:
    """Repeat one period of inputs until the cycle-to-cycle state change
    falls below tol relative to the state scale; returns the last period.

    converged=False (the not-settled flag) when max_cycles runs out.
    """
    inputs = np.atleast_2d(np.asarray(inputs_one_period, dtype=float))
    p = inputs.shape[1]
    if p < 1:
        raise ShapeMismatch("period must contain at least one step")
    if max_cycles < 1:
        raise ShapeMismatch("max_cycles must be at least 1")
    d_x = trans.dim_x
    x = np.zeros(d_x) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    prev = None
    traj = None
    converged = False
    cycles = 0
    for c in range(max_cycles):
        traj = rollout_free(trans, x, inputs, t0=c * p * trans.dt)
        x = traj.states[:, -1]
        cycles = c + 1
        if prev is not None:
            scale = max(float(np.max(np.abs(traj.states))), 1e-300)
            change = float(np.max(np.abs(traj.states - prev)))
            if change <= tol * scale:
                converged = True
                break
        prev = traj.states.copy()
    return SettleResult(traj, converged, cycles)
