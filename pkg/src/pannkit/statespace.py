"""Continuous-time LTI converter models and implicit-Euler discretization.

A continuous model dx/dt = A(theta) x + B(theta) u is discretized with the
implicit Euler rule into a one-step transition

    x[k+1] = W(theta) [x[k]; u[k+1]],
    W = [(I - A dt)^-1 | (I - A dt)^-1 B dt],

whose trainable parameters are the circuit parameters themselves. The module
ships both the generic dense-solve route (`discretize`) and the closed-form
dual-active-bridge concretization (`dab_transition`) with analytic first and
second parameter derivatives; the two routes are kept independent so tests
can cross-check them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    MissingDerivatives,
    OutOfBounds,
    SingularDiscretization,
    StepTooLarge,
)
from .norms import NormKind, mat_norm

# Dual-active-bridge reference configuration: ground-truth parameters,
# admissible box, switching frequency, and simulation step.
DAB_NAMES = ("L_k", "R_L", "n")
DAB_THETA_STAR = np.array([63e-6, 1.8, 1.0])
DAB_LOWER = np.array([10e-6, 0.01, 0.8])
DAB_UPPER = np.array([200e-6, 3.0, 1.2])
DEFAULT_DT = 80e-9
DEFAULT_FS = 50e3

_RCOND_THRESHOLD = 1e-12


@dataclass
class ParamVector:
    """Box-bounded parameter vector theta."""

    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    names: Sequence[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        n = self.values.size
        if not (self.lower.size == n == self.upper.size == len(self.names)):
            raise OutOfBounds(
                f"inconsistent parameter vector sizes: values {n}, "
                f"lower {self.lower.size}, upper {self.upper.size}, "
                f"names {len(self.names)}"
            )
        if not np.all(np.isfinite(self.values)):
            raise OutOfBounds(f"non-finite parameter values: {self.values}")
        if not np.all(self.lower < self.upper):
            raise OutOfBounds(
                f"box must satisfy lower < upper strictly, got "
                f"{self.lower} vs {self.upper}"
            )
        if np.any(self.values < self.lower) or np.any(self.values > self.upper):
            raise OutOfBounds(
                f"values {self.values} outside box [{self.lower}, {self.upper}]"
            )

    @property
    def dim(self) -> int:
        return self.values.size

    @property
    def ranges(self) -> np.ndarray:
        return self.upper - self.lower

    def with_values(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(np.asarray(values, dtype=float), self.lower, self.upper, self.names)

    def contains(self, values: np.ndarray) -> bool:
        v = np.asarray(values, dtype=float)
        return bool(np.all(v >= self.lower) and np.all(v <= self.upper))

    def clip(self, values: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(values, dtype=float), self.lower, self.upper)


def dab_params(values: Optional[np.ndarray] = None) -> ParamVector:
    """The (L_k, R_L, n) parameter vector over its reference box."""
    if values is None:
        values = DAB_THETA_STAR
    return ParamVector(np.array(values, dtype=float), DAB_LOWER.copy(), DAB_UPPER.copy(), DAB_NAMES)


@dataclass
class ContinuousModel:
    """dx/dt = A(theta) x + B(theta) u with optional parameter derivatives.

    `closed_form`, when set, maps (theta values, dt) straight to a
    DiscreteTransition with full derivative tensors; it is used by callers
    that need second derivatives, never by `discretize` itself.
    """

    dim_x: int
    dim_u: int
    dim_theta: int
    a_of: Callable[[np.ndarray], np.ndarray]
    b_of: Callable[[np.ndarray], np.ndarray]
    da_dtheta: Optional[Callable[[np.ndarray], np.ndarray]] = None
    db_dtheta: Optional[Callable[[np.ndarray], np.ndarray]] = None
    closed_form: Optional[Callable[[np.ndarray, float], "DiscreteTransition"]] = None


@dataclass
class DiscreteTransition:
    """W(theta) with its parameter-derivative tensors.

    dw_dtheta has shape (D_x, D_x + D_u, D_theta); d2w_dtheta2 appends one
    more theta axis and is symmetric in the two theta indices. Either tensor
    may be None when the source model lacks the corresponding derivatives.
    """

    w: np.ndarray
    dw_dtheta: Optional[np.ndarray]
    d2w_dtheta2: Optional[np.ndarray]
    dt: float
    theta_snapshot: np.ndarray = field(default_factory=lambda: np.array([]))

    def __post_init__(self):
        self.w = np.atleast_2d(np.asarray(self.w, dtype=float))
        if not np.all(np.isfinite(self.w)):
            raise SingularDiscretization(f"non-finite transition matrix: {self.w}")
        if self.d2w_dtheta2 is not None:
            d2 = self.d2w_dtheta2
            if not np.array_equal(d2, np.swapaxes(d2, 2, 3)):
                raise ValueError("d2W must be symmetric in its theta indices")

    @property
    def dim_x(self) -> int:
        return self.w.shape[0]

    @property
    def dim_z(self) -> int:
        return self.w.shape[1]


def discretize(model: ContinuousModel, theta: ParamVector, dt: float) -> DiscreteTransition:
    """Implicit-Euler transition via a dense partial-pivot solve.

    Derivative tensors are populated from dA/dB when the model provides them
    (second derivatives are never available on this route).
    """
    if not theta.contains(theta.values):
        raise OutOfBounds(f"theta {theta.values} outside its box")
    return _discretize_values(model, theta.values, dt)


def _discretize_values(model: ContinuousModel, values: np.ndarray, dt: float) -> DiscreteTransition:
    if dt <= 0:
        raise SingularDiscretization(f"dt must be positive, got {dt}")
    values = np.asarray(values, dtype=float)
    a = np.atleast_2d(np.asarray(model.a_of(values), dtype=float))
    b = np.atleast_2d(np.asarray(model.b_of(values), dtype=float))
    d_x = model.dim_x
    m = np.eye(d_x) - a * dt
    rcond = 1.0 / np.linalg.cond(m, p=None) if d_x > 0 else 0.0
    if not np.isfinite(rcond) or rcond < _RCOND_THRESHOLD:
        raise SingularDiscretization(
            f"(I - A*dt) reciprocal condition {rcond:.3e} below {_RCOND_THRESHOLD}"
        )
    m_inv = np.linalg.solve(m, np.eye(d_x))
    w = np.hstack([m_inv, m_inv @ b * dt])

    dw = None
    if model.da_dtheta is not None and model.db_dtheta is not None:
        da = np.asarray(model.da_dtheta(values), dtype=float)
        db = np.asarray(model.db_dtheta(values), dtype=float)
        dw = np.empty((d_x, d_x + model.dim_u, model.dim_theta))
        for i in range(model.dim_theta):
            # d(M^-1)/dtheta_i = M^-1 (dA_i dt) M^-1 since dM_i = -dA_i dt
            dm_inv = m_inv @ (da[:, :, i] * dt) @ m_inv
            dw[:, :d_x, i] = dm_inv
            dw[:, d_x:, i] = dm_inv @ b * dt + m_inv @ db[:, :, i] * dt

    return DiscreteTransition(w, dw, None, dt, values.copy())


def _dab_w(values: np.ndarray, dt: float) -> np.ndarray:
    lk, rl, n = values
    den = lk + rl * dt
    return np.array([[lk, dt, -n * dt]]) / den


def _dab_dw(values: np.ndarray, dt: float) -> np.ndarray:
    lk, rl, n = values
    den = lk + rl * dt
    m = np.array(
        [
            [rl, -lk, 0.0],
            [-1.0, -dt, 0.0],
            [n, n * dt, -den],
        ]
    )
    return (dt / den**2 * m)[np.newaxis, :, :]


def _dab_d2w(values: np.ndarray, dt: float) -> np.ndarray:
    lk, rl, n = values
    den = lk + rl * dt
    d2 = den**2
    d3 = den**3
    out = np.zeros((1, 3, 3, 3))
    # w1 = lk / den
    out[0, 0, 0, 0] = -2 * rl * dt / d3
    out[0, 0, 0, 1] = out[0, 0, 1, 0] = dt * (lk - rl * dt) / d3
    out[0, 0, 1, 1] = 2 * lk * dt**2 / d3
    # w2 = dt / den
    out[0, 1, 0, 0] = 2 * dt / d3
    out[0, 1, 0, 1] = out[0, 1, 1, 0] = 2 * dt**2 / d3
    out[0, 1, 1, 1] = 2 * dt**3 / d3
    # w3 = -n dt / den
    out[0, 2, 0, 0] = -2 * n * dt / d3
    out[0, 2, 0, 1] = out[0, 2, 1, 0] = -2 * n * dt**2 / d3
    out[0, 2, 0, 2] = out[0, 2, 2, 0] = dt / d2
    out[0, 2, 1, 2] = out[0, 2, 2, 1] = dt**2 / d2
    return out


def dab_transition(theta: ParamVector, dt: float) -> DiscreteTransition:
    """Closed-form DAB transition row W = [L_k, dt, -n*dt] / (L_k + R_L*dt).

    Both derivative tensors are analytic; the finite-difference tests pin
    them against the generic route and against numeric differentiation.
    """
    if dt <= 0:
        raise SingularDiscretization(f"dt must be positive, got {dt}")
    if not theta.contains(theta.values):
        raise OutOfBounds(f"theta {theta.values} outside its box")
    lk, rl, _ = theta.values
    if lk + rl * dt <= 0:
        raise SingularDiscretization(f"L_k + R_L*dt = {lk + rl * dt} must be positive")
    return DiscreteTransition(
        _dab_w(theta.values, dt),
        _dab_dw(theta.values, dt),
        _dab_d2w(theta.values, dt),
        dt,
        theta.values.copy(),
    )


def dab_model() -> ContinuousModel:
    """The scalar DAB model di/dt = (-R_L*i + v_p - n*v_s) / L_k."""

    def a_of(v: np.ndarray) -> np.ndarray:
        lk, rl, _ = v
        return np.array([[-rl / lk]])

    def b_of(v: np.ndarray) -> np.ndarray:
        lk, _, n = v
        return np.array([[1.0 / lk, -n / lk]])

    def da(v: np.ndarray) -> np.ndarray:
        lk, rl, _ = v
        out = np.zeros((1, 1, 3))
        out[0, 0, 0] = rl / lk**2
        out[0, 0, 1] = -1.0 / lk
        return out

    def db(v: np.ndarray) -> np.ndarray:
        lk, _, n = v
        out = np.zeros((1, 2, 3))
        out[0, 0, 0] = -1.0 / lk**2
        out[0, 1, 0] = n / lk**2
        out[0, 1, 2] = -1.0 / lk
        return out

    return ContinuousModel(
        dim_x=1,
        dim_u=2,
        dim_theta=3,
        a_of=a_of,
        b_of=b_of,
        da_dtheta=da,
        db_dtheta=db,
        closed_form=lambda values, dt: dab_transition(dab_params(values), dt),
    )


def transition_for(model: ContinuousModel, theta: ParamVector, dt: float) -> DiscreteTransition:
    """Transition with the richest derivative information the model offers."""
    return transition_values(model, theta.values, dt)


def transition_values(model: ContinuousModel, values: np.ndarray, dt: float) -> DiscreteTransition:
    """Like transition_for, for raw parameter values (box handling is the
    closed form's business; the generic route does not need a box)."""
    if model.closed_form is not None:
        return model.closed_form(np.asarray(values, dtype=float), dt)
    return _discretize_values(model, values, dt)


def neumann_bound(
    model: ContinuousModel,
    theta: ParamVector,
    dt: float,
    kind: NormKind = NormKind.INFINITY,
) -> float:
    """Upper bound 1/(1 - ||A dt||) on ||(I - A dt)^-1||, checked against
    the actual inverse norm before returning."""
    a = np.atleast_2d(np.asarray(model.a_of(theta.values), dtype=float))
    norm_adt = mat_norm(a * dt, kind)
    if norm_adt >= 1.0:
        dt_max = dt / norm_adt
        raise StepTooLarge(
            f"||A*dt|| = {norm_adt:.6g} >= 1; largest admissible dt is {dt_max:.6g}",
            dt_max=dt_max,
        )
    bound = 1.0 / (1.0 - norm_adt)
    m_inv = np.linalg.solve(np.eye(a.shape[0]) - a * dt, np.eye(a.shape[0]))
    actual = mat_norm(m_inv, kind)
    if actual > bound * (1.0 + 1e-12):
        raise SingularDiscretization(
            f"inverse norm {actual:.17g} exceeds Neumann bound {bound:.17g}"
        )
    return bound
