"""Data-driven and physics-informed loss terms with analytic gradients.

The physics term penalizes the governing-equation residuals of predicted
trajectories at unlabeled collocation inputs.  Residuals are evaluated in
raw physical units on denormalized predictions; the time derivative is a
forward difference anchored at the collocation state.  The kinetic
parameters used in the residuals are *estimated* (interval midpoints), never
the task's true values: in practice those are exactly the quantities one
cannot measure.

The default loss weights (1e3, 1e-2, 1e-5) are calibrated for raw-unit
residuals: the 1000x gap between the concentration and temperature weights
matches the squared ratio of their operational ranges, so after weighting
the two residual channels carry comparable magnitudes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericalError
from .reactors import (
    BrParams,
    CstrParams,
    PARAM_RANGES,
    Params,
    PfrParams,
    ReactorKind,
    TaskSpec,
)
from .tasks import NormSpec

# Parameters that are treated as unknown and replaced by the midpoints of
# their sampling intervals when computing physics residuals.
ESTIMATED_NAMES = ("k0", "Ea", "dH", "Cp", "rhoL")


@dataclass(frozen=True)
class LossWeights:
    """Weights of the total loss: data term, concentration and temperature
    residual terms."""

    data: float = 1e3
    ca: float = 1e-2
    t: float = 1e-5

    def __post_init__(self):
        if min(self.data, self.ca, self.t) < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass(frozen=True)
class LossBreakdown:
    data: float
    ca: float
    t: float
    total: float


@dataclass(frozen=True)
class EstimatedParams:
    """Reactor parameters as visible during adaptation: known quantities are
    copied from the true task; kinetic/thermal unknowns sit at their interval
    midpoints.  Physics residuals accept only this type, which keeps the true
    kinetics out of reach by construction."""

    kind: ReactorKind
    params: Params


def midpoint(kind: ReactorKind, name: str) -> float:
    lo, hi = PARAM_RANGES[kind][name]
    return 0.5 * (lo + hi)


def make_estimated_params(task: TaskSpec) -> EstimatedParams:
    """Midpoint estimates for the five unknown parameters, true values for
    everything that is measurable on a real reactor."""
    estimates = {name: midpoint(task.kind, name) for name in ESTIMATED_NAMES}
    return EstimatedParams(kind=task.kind, params=replace(task.params, **estimates))


def data_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all elements plus its gradient w.r.t. pred."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


def total_loss(
    weights: LossWeights, loss_data: float, loss_ca: float, loss_t: float
) -> LossBreakdown:
    """Weighted total; the components are preserved for logging."""
    return LossBreakdown(
        data=loss_data,
        ca=loss_ca,
        t=loss_t,
        total=weights.data * loss_data + weights.ca * loss_ca + weights.t * loss_t,
    )


def arrhenius_factor(p: Params, T: np.ndarray) -> np.ndarray:
    """Rate constant k0 exp(-Ea/RT), continuously extended by zero for T <= 0.

    Early in a from-scratch physics-informed fit the denormalized predicted
    temperature can stray below zero; the physical limit of the rate as
    T -> 0+ is zero, so the extension keeps residuals finite there without
    altering the loss anywhere the prediction is meaningful.
    """
    T_safe = np.where(T > 0, T, 1.0)
    with np.errstate(over="ignore", under="ignore"):
        kappa = np.where(T > 0, p.k0 * np.exp(-p.Ea / (p.R * T_safe)), 0.0)
    return kappa


def residual_terms(
    kind: ReactorKind,
    order: int,
    T: np.ndarray,
    C: np.ndarray,
    anchor_T: np.ndarray,
    anchor_C: np.ndarray,
    u: np.ndarray,
    p: Params,
    dt: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Physical-unit balance residuals (r_T, r_C) of state sequences.

    T and C have shape (B, n); anchors are the (B,) period-start states the
    forward difference is seeded with.  ``u`` is (B, n_inputs) of raw
    manipulated inputs.  Works with true parameters (simulator-consistency
    checks) or estimated ones (adaptation).
    """
    T = np.atleast_2d(np.asarray(T, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    anchor_T = np.atleast_1d(np.asarray(anchor_T, dtype=float))[:, None]
    anchor_C = np.atleast_1d(np.asarray(anchor_C, dtype=float))[:, None]
    u = np.atleast_2d(np.asarray(u, dtype=float))

    T_prev = np.concatenate([anchor_T, T[:, :-1]], axis=1)
    C_prev = np.concatenate([anchor_C, C[:, :-1]], axis=1)
    dT = (T - T_prev) / dt
    dC = (C - C_prev) / dt

    kappa = arrhenius_factor(p, T)
    rate = kappa * C**order
    heat = (p.dH / (p.rhoL * p.Cp)) * rate

    if kind is ReactorKind.CSTR:
        CA0 = p.CA0s + u[:, 1:2]
        Q = p.Qs + u[:, 0:1]
        r_C = dC - (p.F / p.V) * (CA0 - C) + rate
        r_T = dT - (p.F / p.V) * (p.T0 - T) + heat - Q / (p.rhoL * p.Cp * p.V)
    elif kind is ReactorKind.BATCH:
        Q = p.Qs + u[:, 0:1]
        r_C = dC + rate
        r_T = dT + heat - Q / (p.rhoL * p.Cp * p.V)
    else:
        Tc = p.Tcs + u[:, 0:1]
        cool = p.U * p.Ac / (p.rhoL * p.Cp * p.A)
        r_C = dC + p.u * (C - anchor_C) / p.dz + rate
        r_T = dT + p.u * (T - anchor_T) / p.dz + heat + cool * (T - Tc)
    if not np.all(np.isfinite(r_C)):
        raise NumericalError("concentration residual is non-finite")
    if not np.all(np.isfinite(r_T)):
        raise NumericalError("temperature residual is non-finite")
    return r_T, r_C


def physics_residuals(
    kind: ReactorKind,
    order: int,
    pred: np.ndarray,
    collocation: np.ndarray,
    est: EstimatedParams,
    dt: float,
    spec: NormSpec,
):
    """Residual losses of normalized predictions at collocation inputs.

    pred         (B, n, 2) normalized model outputs [T, CA]
    collocation  (B, 4) raw-unit feature rows [T, CA, u1, u2]

    Returns (loss_ca, loss_t, grad_ca, grad_t); the losses are mean squared
    residuals in physical units, and the gradients are w.r.t. the
    *normalized* predictions so they chain directly into backpropagation.
    """
    if est.kind is not kind:
        raise ValueError(f"estimated params are for {est.kind}, residuals for {kind}")
    pred = np.asarray(pred, dtype=float)
    B, n, _ = pred.shape
    p = est.params
    w_T, w_C = spec.state_width

    T = spec.state_lo[0] + pred[:, :, 0] * w_T
    C = spec.state_lo[1] + pred[:, :, 1] * w_C
    anchor_T = collocation[:, 0]
    anchor_C = collocation[:, 1]
    u = collocation[:, 2:]

    r_T, r_C = residual_terms(kind, order, T, C, anchor_T, anchor_C, u, p, dt)
    loss_ca = float(np.mean(r_C**2))
    loss_t = float(np.mean(r_T**2))

    a_C = 2.0 * r_C / (B * n)
    a_T = 2.0 * r_T / (B * n)

    kappa = arrhenius_factor(p, T)
    T_safe = np.where(T > 0, T, 1.0)
    dkappa_dT = kappa * p.Ea / (p.R * T_safe**2)
    Cm1 = C ** (order - 1)
    rate_dC = kappa * order * Cm1
    rate_dT = dkappa_dT * C * Cm1
    hcoef = p.dH / (p.rhoL * p.Cp)

    if kind is ReactorKind.CSTR:
        extra_C = p.F / p.V
        extra_T = p.F / p.V
    elif kind is ReactorKind.BATCH:
        extra_C = 0.0
        extra_T = 0.0
    else:
        extra_C = p.u / p.dz
        extra_T = p.u / p.dz + p.U * p.Ac / (p.rhoL * p.Cp * p.A)

    # Forward-difference stencil: residual i sees states i and i-1, so each
    # state i also receives a -1/dt contribution from residual i+1.
    a_C_next = np.zeros_like(a_C)
    a_C_next[:, :-1] = a_C[:, 1:]
    a_T_next = np.zeros_like(a_T)
    a_T_next[:, :-1] = a_T[:, 1:]

    dlca_dC = a_C * (1.0 / dt + rate_dC + extra_C) - a_C_next / dt
    dlca_dT = a_C * rate_dT
    dlt_dT = a_T * (1.0 / dt + hcoef * rate_dT + extra_T) - a_T_next / dt
    dlt_dC = a_T * hcoef * rate_dC

    grad_ca = np.stack([dlca_dT * w_T, dlca_dC * w_C], axis=2)
    grad_t = np.stack([dlt_dT * w_T, dlt_dC * w_C], axis=2)
    return loss_ca, loss_t, grad_ca, grad_t
