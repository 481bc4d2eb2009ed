"""Lipschitz-constant calculators, Monte-Carlo validators, and the training
condition monitor.

Three constants are covered:

- L1z: change of the one-step prediction per change of input, equal to the
  induced norm of W.
- L1theta: bound on the loss gradient norm over a (theta box, z bound)
  domain, sup ||W - W*|| * ||z||^2 * ||dW/dtheta||. Under the infinity norm
  this is the gradient-norm bound G_inf.
- L2theta: bound on the loss Hessian norm,
  sup ||z||^2 ||dW||^2 + ||W - W*|| ||z||^2 ||d2W||.

The suprema are evaluated by deterministic dense sampling of the theta box
(uniform draws plus all box corners, the center, and the reference point), so
they are concrete checkable numbers. The MC estimators draw pairs from
per-sample keyed substreams, making the running maximum independent of
evaluation order.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, TYPE_CHECKING

import numpy as np

from .errors import (
    BoundViolation,
    DegenerateDomain,
    EmptyTrace,
    MissingDerivatives,
    NonPositiveBound,
)
from .norms import NormKind, d2w_norm, dw_norm, mat_norm, max_entry_norm, vec_norm
from .rng import DOMAIN_MC, DOMAIN_THETA, substream
from .statespace import ContinuousModel, DiscreteTransition, transition_values

if TYPE_CHECKING:  # pragma: no cover
    from .training import TrainingTrace

_MAX_CORNER_DIMS = 16


@dataclass(frozen=True)
class DomainSpec:
    """The (theta box, z bound, reference theta) domain the constants are
    suprema over. A collapsed domain has lower == upper == theta_star."""

    theta_lower: np.ndarray
    theta_upper: np.ndarray
    z_bound: np.ndarray
    theta_star: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta_lower", np.asarray(self.theta_lower, dtype=float))
        object.__setattr__(self, "theta_upper", np.asarray(self.theta_upper, dtype=float))
        object.__setattr__(self, "z_bound", np.asarray(self.z_bound, dtype=float))
        object.__setattr__(self, "theta_star", np.asarray(self.theta_star, dtype=float))
        if np.any(self.theta_lower > self.theta_upper):
            raise NonPositiveBound("domain box must satisfy lower <= upper")
        if np.any(self.z_bound < 0):
            raise NonPositiveBound("z bounds must be nonnegative")

    def collapsed(self) -> "DomainSpec":
        return DomainSpec(self.theta_star, self.theta_star, self.z_bound, self.theta_star)

    @property
    def is_collapsed(self) -> bool:
        return bool(np.all(self.theta_lower == self.theta_upper))


def sample_thetas(domain: DomainSpec, n_samples: int, seed: int) -> np.ndarray:
    """Uniform draws over the box plus its corners, center, and theta_star."""
    if domain.is_collapsed:
        return domain.theta_star[np.newaxis, :]
    d = domain.theta_lower.size
    rng = substream(seed, DOMAIN_THETA, 0)
    draws = rng.uniform(domain.theta_lower, domain.theta_upper, size=(max(n_samples, 0), d))
    anchors = [domain.theta_star, 0.5 * (domain.theta_lower + domain.theta_upper)]
    if d <= _MAX_CORNER_DIMS:
        anchors.extend(
            np.array(c) for c in itertools.product(*zip(domain.theta_lower, domain.theta_upper))
        )
    return np.vstack([draws, np.array(anchors)])


def theoretical_L1z(trans: DiscreteTransition, kind: NormKind = NormKind.INFINITY) -> float:
    """Induced norm of W: the one-step input-to-output Lipschitz constant."""
    return mat_norm(trans.w, kind)


def _z_norm_sq(domain: DomainSpec, kind: NormKind) -> float:
    return vec_norm(domain.z_bound, kind) ** 2


def theoretical_L1theta(
    domain: DomainSpec,
    model: ContinuousModel,
    dt: float,
    kind: NormKind = NormKind.INFINITY,
    n_samples: int = 10000,
    seed: int = 0,
) -> float:
    """sup over the domain of ||W - W*|| * ||z||^2 * ||dW/dtheta||.

    Under the infinity norm this bounds every loss-gradient infinity norm on
    data whose z stays within the domain's z bound (G_inf); under the 2-norm
    it bounds loss differences via the mean value theorem.
    """
    w_star = transition_values(model, domain.theta_star, dt).w
    zn2 = _z_norm_sq(domain, kind)
    best = 0.0
    for values in sample_thetas(domain, n_samples, seed):
        trans = transition_values(model, values, dt)
        if trans.dw_dtheta is None:
            raise MissingDerivatives("model provides no dW/dtheta tensor")
        val = mat_norm(trans.w - w_star, kind) * zn2 * dw_norm(trans.dw_dtheta, kind)
        best = max(best, val)
    return best


def theoretical_L2theta(
    domain: DomainSpec,
    model: ContinuousModel,
    dt: float,
    kind: NormKind = NormKind.INFINITY,
    n_samples: int = 10000,
    seed: int = 0,
) -> float:
    """sup of ||z||^2 ||dW||^2 + ||W - W*|| ||z||^2 ||d2W||, the Hessian
    norm bound. On a collapsed domain the second term vanishes."""
    w_star = transition_values(model, domain.theta_star, dt).w
    zn2 = _z_norm_sq(domain, kind)
    best = 0.0
    for values in sample_thetas(domain, n_samples, seed):
        trans = transition_values(model, values, dt)
        if trans.dw_dtheta is None or trans.d2w_dtheta2 is None:
            raise MissingDerivatives("model provides no dW/d2W tensors")
        dwn = dw_norm(trans.dw_dtheta, kind)
        val = zn2 * dwn**2 + mat_norm(trans.w - w_star, kind) * zn2 * d2w_norm(
            trans.d2w_dtheta2, kind
        )
        best = max(best, val)
    return best


@dataclass
class LipschitzReport:
    """Theoretical bound vs empirical MC estimate for one constant."""

    constant_name: str
    norm: NormKind
    theoretical: float
    empirical_max: float
    n_samples: int
    argmax_pair: Optional[tuple]
    seed: int
    n_skipped: int = 0
    tol_report: float = 1e-9
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_samples < 1:
            raise DegenerateDomain("a report needs at least one sample")
        if np.isfinite(self.theoretical) and self.empirical_max > self.theoretical * (
            1.0 + self.tol_report
        ):
            raise BoundViolation(
                f"{self.constant_name} ({self.norm.value}): empirical "
                f"{self.empirical_max:.17g} exceeds theoretical {self.theoretical:.17g}"
            )

    def to_dict(self) -> dict:
        return {
            "constant_name": self.constant_name,
            "norm": self.norm.value,
            "theoretical": self.theoretical,
            "empirical_max": self.empirical_max,
            "n_samples": self.n_samples,
            "n_skipped": self.n_skipped,
            "argmax_pair": None
            if self.argmax_pair is None
            else [list(map(float, p)) for p in self.argmax_pair],
            "seed": self.seed,
            "tol_report": self.tol_report,
            "extras": self.extras,
        }

    def save(self, path: Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: Path) -> "LipschitzReport":
        with open(path) as fh:
            d = json.load(fh)
        d["norm"] = NormKind(d["norm"])
        if d["argmax_pair"] is not None:
            d["argmax_pair"] = tuple(np.array(p) for p in d["argmax_pair"])
        return cls(**d)


@dataclass(frozen=True)
class BoxSampler:
    """Uniform sampler over an axis-aligned box."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if np.any(self.lower > self.upper):
            raise DegenerateDomain("sampler box must satisfy lower <= upper")

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def scale(self) -> float:
        return float(np.max(self.upper - self.lower))

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper)

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)


def _local_direction(rng: np.random.Generator, dim: int, variant: int, kind: NormKind) -> np.ndarray:
    """Unit perturbation direction: axis, sign-corner, or random.

    Sign-corner directions attain the induced infinity norm of a linear map;
    random directions approach the 2-norm's maximizer.
    """
    if variant == 0:
        d = np.zeros(dim)
        d[rng.integers(dim)] = rng.choice([-1.0, 1.0])
        return d
    if variant == 1:
        return rng.choice([-1.0, 1.0], size=dim)
    g = rng.normal(size=dim)
    n = vec_norm(g, kind)
    return g / n if n > 0 else np.full(dim, 1.0)


def mc_estimate_lipschitz(
    f: Callable[[np.ndarray], np.ndarray],
    sampler: BoxSampler,
    pairing: str = "mixed",
    n_samples: int = 100000,
    seed: int = 0,
    kind: NormKind = NormKind.INFINITY,
    delta: Optional[float] = None,
    theoretical: float = float("nan"),
    constant_name: str = "L1z",
    tol_report: float = 1e-9,
    extras: Optional[dict] = None,
) -> LipschitzReport:
    """Max of ||f(a) - f(b)|| / ||a - b|| over sampled pairs.

    pairing: "random" (independent pairs), "local" (a plus a delta-sized
    perturbation), or "mixed" (alternating, the default). Coincident pairs
    are skipped and counted. Sample i depends only on (seed, i), so the
    maximum over any prefix is reduction-order independent.
    """
    if n_samples < 2:
        raise DegenerateDomain(f"need at least 2 samples, got {n_samples}")
    if pairing not in ("random", "local", "mixed"):
        raise DegenerateDomain(f"unknown pairing {pairing!r}")
    if delta is None:
        delta = 1e-6 * sampler.scale
    if delta <= 0:
        raise DegenerateDomain(f"delta must be positive, got {delta}")
    best = -1.0
    best_pair = None
    n_skipped = 0
    for i in range(n_samples):
        rng = substream(seed, DOMAIN_MC, i)
        local = pairing == "local" or (pairing == "mixed" and i % 2 == 1)
        a = sampler.draw(rng)
        if local:
            direction = _local_direction(rng, sampler.dim, (i // 2) % 3, kind)
            b = sampler.clip(a + delta * direction)
        else:
            b = sampler.draw(rng)
        dist = vec_norm(a - b, kind)
        if dist < 1e-300:
            n_skipped += 1
            continue
        ratio = vec_norm(np.asarray(f(a)) - np.asarray(f(b)), kind) / dist
        if ratio > best:
            best = ratio
            best_pair = (a.copy(), b.copy())
    if best_pair is None:
        raise DegenerateDomain(
            f"all {n_samples} sampled pairs were coincident; the domain is degenerate"
        )
    return LipschitzReport(
        constant_name=constant_name,
        norm=kind,
        theoretical=theoretical,
        empirical_max=best,
        n_samples=n_samples,
        argmax_pair=best_pair,
        seed=seed,
        n_skipped=n_skipped,
        tol_report=tol_report,
        extras=extras or {},
    )


def dab_l1z_values(trans: DiscreteTransition) -> dict:
    """Both readings of the one-step constant: induced infinity norm (max
    row sum) and the max-entry norm. They straddle 1 for the reference DAB,
    so reports carry both rather than forcing either claim."""
    return {
        "l1z_infinity": theoretical_L1z(trans, NormKind.INFINITY),
        "l1z_max_entry": max_entry_norm(trans.w),
        "l1z_two": theoretical_L1z(trans, NormKind.TWO),
    }


@dataclass
class MonitorReport:
    """Empirical counterparts of the convergence conditions: max gradient
    norms and iterate diameters, plus the box-boundedness verdict."""

    g_hat: float
    ginf_hat: float
    d_hat: float
    dinf_hat: float
    satisfied: bool

    def to_dict(self) -> dict:
        return {
            "G_hat": self.g_hat,
            "Ginf_hat": self.ginf_hat,
            "D_hat": self.d_hat,
            "Dinf_hat": self.dinf_hat,
            "satisfied": self.satisfied,
        }


def theorem2_monitor(trace: "TrainingTrace") -> MonitorReport:
    """Scan a trace for max gradient norms (2 and infinity) and max pairwise
    iterate distances; satisfied when all are finite and the diameters fit
    inside the parameter box."""
    if not trace.records:
        raise EmptyTrace("monitor needs at least one epoch")
    grads = np.array([r.grad for r in trace.records])
    iterates = np.vstack([trace.theta0[np.newaxis, :], np.array([r.theta for r in trace.records])])
    g_hat = float(np.max(np.linalg.norm(grads, 2, axis=1)))
    ginf_hat = float(np.max(np.abs(grads)))
    d_hat = 0.0
    dinf_hat = 0.0
    for idx in range(iterates.shape[0]):
        diff = iterates[idx + 1 :] - iterates[idx]
        if diff.size:
            d_hat = max(d_hat, float(np.max(np.linalg.norm(diff, 2, axis=1))))
            dinf_hat = max(dinf_hat, float(np.max(np.abs(diff))))
    ranges = trace.box_upper - trace.box_lower
    satisfied = bool(
        np.isfinite([g_hat, ginf_hat, d_hat, dinf_hat]).all()
        and dinf_hat <= float(np.max(ranges)) * (1.0 + 1e-12)
        and d_hat <= float(np.linalg.norm(ranges, 2)) * (1.0 + 1e-12)
    )
    return MonitorReport(g_hat, ginf_hat, d_hat, dinf_hat, satisfied)
