"""Order-bank ensembles: adapt one foundation model per integer reaction
order and keep the candidate with the lowest validation MSE (min-voting).

The validation split is deterministic: with five or more shots the last
ceil(K/5) shots are held out for voting and the rest are adapted on; with
fewer shots all of them are used for adaptation and voting happens
in-sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as dc_replace

import numpy as np

from .errors import EmptyValidation, NumericalError, ReactorMetaError
from .losses import EstimatedParams
from .meta import AdaptConfig, FoundationModel, adapt
from .rnn import RnnParams, forward
from .tasks import ShotSet, stack_model_io


@dataclass(frozen=True)
class OrderBank:
    """Map of reaction order -> foundation model meta-trained on that order only."""

    models: dict[int, FoundationModel]

    def __post_init__(self):
        if not self.models:
            raise ValueError("order bank is empty")
        for order, model in self.models.items():
            trained = model.provenance.get("orders")
            if trained is not None and trained != [order]:
                raise ValueError(
                    f"bank entry {order} was trained on orders {trained}"
                )

    @property
    def orders(self) -> list[int]:
        return sorted(self.models)


@dataclass(frozen=True)
class Candidate:
    """One per-order adaptation attempt."""

    order: int
    params: RnnParams | None
    trace: list
    error: str | None = None


@dataclass(frozen=True)
class EnsembleResult:
    """Per-order validation MSEs and the min-voted winner."""

    mses: dict[int, float]
    selected_order: int
    selected_params: RnnParams
    selected_mse: float


def adapt_all(
    bank: OrderBank,
    shot_set: ShotSet,
    est: EstimatedParams | None,
    cfg: AdaptConfig,
    n_out: int = 10,
) -> dict[int, Candidate]:
    """Independently adapt every model in the bank to the shot set; each
    candidate's physics residuals use its own reaction order.  Per-order
    failures are recorded, not fatal, unless every order fails."""
    candidates: dict[int, Candidate] = {}
    for order in bank.orders:
        model = bank.models[order]
        spec = model.spec_for(shot_set.task.kind)
        try:
            params, trace = adapt(
                model.params, spec, shot_set, est, cfg, order=order, n_out=n_out
            )
            candidates[order] = Candidate(order=order, params=params, trace=trace)
        except (NumericalError, ReactorMetaError) as exc:
            candidates[order] = Candidate(
                order=order, params=None, trace=[], error=str(exc)
            )
    if all(c.error is not None for c in candidates.values()):
        raise NumericalError("every order candidate failed to adapt")
    return candidates


def min_vote(
    candidates: dict[int, Candidate],
    X_val: np.ndarray,
    Y_val: np.ndarray,
) -> EnsembleResult:
    """Select the candidate with the lowest validation MSE; exact ties go to
    the lowest order."""
    if X_val.shape[0] == 0:
        raise EmptyValidation("min-voting needs at least one validation sample")
    mses: dict[int, float] = {}
    for order in sorted(candidates):
        c = candidates[order]
        if c.error is not None:
            continue
        pred, _ = forward(c.params, X_val)
        mses[order] = float(np.mean((pred - Y_val) ** 2))
    if not mses:
        raise NumericalError("no surviving candidate to vote on")
    selected = min(sorted(mses), key=lambda o: mses[o])
    return EnsembleResult(
        mses=mses,
        selected_order=selected,
        selected_params=candidates[selected].params,
        selected_mse=mses[selected],
    )


def split_validation(shot_set: ShotSet) -> tuple[ShotSet, list]:
    """Hold out the last ceil(K/5) shots for voting when K >= 5; otherwise
    vote in-sample on all shots."""
    k = shot_set.n_shots
    if k >= 5:
        held = math.ceil(k / 5)
        return (
            dc_replace(shot_set, shots=shot_set.shots[: k - held]),
            shot_set.shots[k - held :],
        )
    return shot_set, list(shot_set.shots)


def run_ensemble(
    bank: OrderBank,
    shot_set: ShotSet,
    est: EstimatedParams | None,
    cfg: AdaptConfig,
    n_out: int = 10,
) -> EnsembleResult:
    """Full ensemble pass: split validation shots, adapt every order, vote."""
    adapt_set, val_shots = split_validation(shot_set)
    if not val_shots:
        raise EmptyValidation("shot set has no samples to vote on")
    candidates = adapt_all(bank, adapt_set, est, cfg, n_out=n_out)
    X_val, Y_val = stack_model_io(shot_set.task, val_shots)
    return min_vote(candidates, X_val, Y_val)
