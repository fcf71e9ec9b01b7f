"""Reptile meta-training, physics-informed few-shot adaptation, and the
data-driven / transfer-learning baselines.

Meta-training interleaves tasks of all reactor kinds: each meta-iteration
trains a copy of the current parameters on one task with Adam (plain MSE)
and pulls the meta-parameters toward the result,

    theta <- theta + alpha * (W_tau - theta),

with alpha decaying linearly to zero over the run.  Physics terms enter only
at adaptation time, where collocation-point residuals computed with midpoint
parameter estimates regularize the few-shot fine-tune.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, TaskInfeasible
from .losses import (
    EstimatedParams,
    LossBreakdown,
    LossWeights,
    data_loss,
    physics_residuals,
    total_loss,
)
from .reactors import ReactorKind, TaskSpec
from .rnn import (
    AdamState,
    RnnParams,
    TENSOR_ORDER,
    adam_update,
    backward,
    forward,
    init_adam,
    init_params,
    map_params,
)
from .simulate import SimConfig, generate_task_dataset
from .tasks import (
    NormSpec,
    ShotSet,
    norm_spec_for,
    normalize,
    sample_task,
    stack_model_io,
)


def rng_from(*ids: int) -> np.random.Generator:
    """Deterministic generator from a chain of integer identifiers."""
    return np.random.default_rng(np.random.SeedSequence(list(ids)))


@dataclass(frozen=True)
class MetaConfig:
    """Meta-training hyperparameters and task distribution.

    distribution   tuple of (kind, order, count) entries
    meta_step      epsilon in the linear step-size schedule
    """

    distribution: tuple[tuple[ReactorKind, int, int], ...]
    samples_per_task: int = 200
    inner_epochs: int = 5
    batch_size: int = 32
    lr: float = 1e-3
    meta_step: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.distribution:
            raise ValueError("task distribution is empty")
        if self.meta_step <= 0:
            raise ValueError("meta step size must be > 0")

    @property
    def n_tasks(self) -> int:
        return sum(count for _, _, count in self.distribution)

    @property
    def kinds(self) -> tuple[ReactorKind, ...]:
        seen = []
        for kind, _, _ in self.distribution:
            if kind not in seen:
                seen.append(kind)
        return tuple(seen)


@dataclass(frozen=True)
class AdaptConfig:
    """Few-shot adaptation hyperparameters.

    mode is "data" (plain fine-tune) or "physics" (adds residual terms on
    collocation points); batch_size None trains full-batch on the shots.
    """

    shots: int = 10
    collocation: int = 100
    epochs: int = 200
    lr: float = 1e-3
    batch_size: int | None = None
    weights: LossWeights = field(default_factory=LossWeights)
    mode: str = "physics"

    def __post_init__(self):
        if self.mode not in ("data", "physics"):
            raise ValueError(f"unknown adaptation mode {self.mode!r}")
        if self.shots < 0 or self.collocation < 0:
            raise ValueError("shot and collocation counts must be >= 0")
        if self.mode == "physics" and self.collocation == 0:
            raise ValueError("physics-informed adaptation requires collocation points")


@dataclass(frozen=True)
class TaskData:
    """One task with its pre-generated, normalized training arrays."""

    task: TaskSpec
    X: np.ndarray
    Y: np.ndarray


@dataclass(frozen=True)
class FoundationModel:
    """Meta-trained (or transfer-pretrained) parameters plus normalization
    metadata and training provenance."""

    params: RnnParams
    norm_specs: dict[ReactorKind, NormSpec]
    provenance: dict

    def spec_for(self, kind: ReactorKind) -> NormSpec:
        return self.norm_specs[kind]


def build_task_pool(
    cfg: MetaConfig, sim: SimConfig
) -> list[list[TaskData]]:
    """Sample and simulate the training task pool, grouped per distribution
    entry.  Infeasible tasks (those rejecting almost every trajectory) are
    replaced by fresh draws, mirroring a rerun with new parameters."""
    pool: list[list[TaskData]] = []
    for e_idx, (kind, order, count) in enumerate(cfg.distribution):
        group: list[TaskData] = []
        for i in range(count):
            for attempt in range(200):
                rng = rng_from(cfg.seed, 101, e_idx, i, attempt)
                task = sample_task(kind, order, rng)
                try:
                    trajs = generate_task_dataset(task, cfg.samples_per_task, sim)
                except TaskInfeasible:
                    continue
                X, Y = stack_model_io(task, trajs)
                group.append(TaskData(task=task, X=X, Y=Y))
                break
            else:
                raise TaskInfeasible(
                    f"could not draw a feasible {kind.value} order-{order} task"
                )
        pool.append(group)
    return pool


def interleave_pool(
    pool: list[list[TaskData]], rng: np.random.Generator
) -> list[TaskData]:
    """One shuffled pass over the pool, round-robin across entries so that
    reactor kinds interleave."""
    queues = [list(rng.permutation(len(g))) for g in pool]
    order: list[TaskData] = []
    while any(queues):
        for g, q in zip(pool, queues):
            if q:
                order.append(g[q.pop()])
    return order


def mse_batch_step(
    params: RnnParams, state: AdamState, X: np.ndarray, Y: np.ndarray
) -> tuple[RnnParams, AdamState, float]:
    pred, cache = forward(params, X)
    loss, grad = data_loss(pred, Y)
    grads = backward(params, cache, grad)
    params, state = adam_update(params, grads, state)
    return params, state, loss


def inner_train(
    params: RnnParams,
    X: np.ndarray,
    Y: np.ndarray,
    epochs: int,
    batch_size: int,
    lr: float,
    seed: int,
) -> tuple[RnnParams, float]:
    """Train a copy of ``params`` on one task's data with Adam on plain MSE.

    Returns the task-trained parameters and the mean loss of the final
    epoch.  The incoming parameters are never mutated, and the batch order
    is fixed by the seed.
    """
    n = X.shape[0]
    state = init_adam(params, lr=lr)
    rng = rng_from(seed, 7)
    last = float("nan")
    for _ in range(epochs):
        perm = rng.permutation(n)
        losses = []
        for at in range(0, n, batch_size):
            idx = perm[at : at + batch_size]
            params, state, loss = mse_batch_step(params, state, X[idx], Y[idx])
            losses.append(loss)
        last = float(np.mean(losses)) if losses else float("nan")
    return params, last


def reptile_step(params: RnnParams, w_tau: RnnParams, alpha: float) -> RnnParams:
    """theta + alpha * (W_tau - theta), elementwise."""
    for name in TENSOR_ORDER:
        if getattr(params, name).shape != getattr(w_tau, name).shape:
            raise ShapeError(f"tensor {name} shapes differ")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return map_params(lambda p, w: p + alpha * (w - p), params, w_tau)


def meta_step_size(meta_step: float, iteration: int, n_tasks: int) -> float:
    """Linear schedule: epsilon * (1 - iteration / n_tasks), zero at the end."""
    return meta_step * (1.0 - iteration / n_tasks)


def meta_train(
    cfg: MetaConfig,
    sim: SimConfig | None = None,
    pool: list[list[TaskData]] | None = None,
    log_path=None,
) -> FoundationModel:
    """Reptile meta-training over the task pool; one visit per task with a
    linearly decayed meta step."""
    sim = sim or SimConfig()
    if pool is None:
        pool = build_task_pool(cfg, sim)
    schedule = interleave_pool(pool, rng_from(cfg.seed, 303))
    params = init_params(rng_from(cfg.seed, 211))
    n_tasks = len(schedule)
    rows = []
    for it, td in enumerate(schedule, start=1):
        w_tau, task_loss = inner_train(
            params,
            td.X,
            td.Y,
            epochs=cfg.inner_epochs,
            batch_size=cfg.batch_size,
            lr=cfg.lr,
            seed=cfg.seed + 17 * it,
        )
        alpha = meta_step_size(cfg.meta_step, it, n_tasks)
        params = reptile_step(params, w_tau, alpha)
        rows.append((it, td.task.kind.value, td.task.order, task_loss))
    if log_path is not None:
        with open(log_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["iteration", "task_kind", "order", "L_d", "L_CA", "L_T", "total"])
            for it, kind, order, loss in rows:
                w.writerow([it, kind, order, repr(loss), repr(0.0), repr(0.0), repr(loss)])
    orders = sorted({order for _, order, _ in cfg.distribution})
    return FoundationModel(
        params=params,
        norm_specs={kind: norm_spec_for(kind) for kind in cfg.kinds},
        provenance={
            "method": "reptile",
            "seed": cfg.seed,
            "orders": orders,
            "n_tasks": n_tasks,
            "samples_per_task": cfg.samples_per_task,
            "distribution": [
                [kind.value, order, count] for kind, order, count in cfg.distribution
            ],
        },
    )


def transfer_pretrain(
    cfg: MetaConfig,
    sim: SimConfig | None = None,
    pool: list[list[TaskData]] | None = None,
    epochs: int | None = None,
) -> FoundationModel:
    """Conventional pooled pretraining baseline: all task datasets shuffled
    together, trained with Adam on plain MSE (no meta rule).  Uses the same
    task pool as :func:`meta_train` for a like-for-like comparison."""
    sim = sim or SimConfig()
    if pool is None:
        pool = build_task_pool(cfg, sim)
    X = np.concatenate([td.X for group in pool for td in group])
    Y = np.concatenate([td.Y for group in pool for td in group])
    params = init_params(rng_from(cfg.seed, 211))
    params, _ = inner_train(
        params,
        X,
        Y,
        epochs=cfg.inner_epochs if epochs is None else epochs,
        batch_size=cfg.batch_size,
        lr=cfg.lr,
        seed=cfg.seed + 29,
    )
    orders = sorted({order for _, order, _ in cfg.distribution})
    return FoundationModel(
        params=params,
        norm_specs={kind: norm_spec_for(kind) for kind in cfg.kinds},
        provenance={
            "method": "transfer",
            "seed": cfg.seed,
            "orders": orders,
            "n_tasks": sum(len(g) for g in pool),
            "samples_per_task": cfg.samples_per_task,
            "distribution": [
                [kind.value, order, count] for kind, order, count in cfg.distribution
            ],
        },
    )


def collocation_model_inputs(
    collocation: np.ndarray, spec: NormSpec, n_out: int
) -> np.ndarray:
    """Normalized (M, n_out, 4) model inputs for raw collocation rows."""
    Xc = normalize(collocation, spec.lo, spec.hi)
    return np.repeat(Xc[:, None, :], n_out, axis=1)


def adapt(
    params: RnnParams,
    spec: NormSpec,
    shot_set: ShotSet,
    est: EstimatedParams | None,
    cfg: AdaptConfig,
    order: int | None = None,
    n_out: int = 10,
    resample_hook=None,
) -> tuple[RnnParams, list[LossBreakdown]]:
    """Fine-tune a copy of ``params`` on a few-shot set.

    In physics mode every update combines the data MSE on the shots with the
    balance-equation residual losses on the collocation points, weighted per
    ``cfg.weights``; residuals use the estimated parameters ``est`` and the
    reaction order of the adapting model (``order``, defaulting to the
    task's).  ``resample_hook(epoch, trace, collocation)`` may return a new
    collocation array mid-run.  The source parameters are never mutated.
    """
    task = shot_set.task
    use_physics = (
        cfg.mode == "physics"
        and shot_set.n_collocation > 0
        and (cfg.weights.ca > 0 or cfg.weights.t > 0)
    )
    if use_physics and est is None:
        raise ValueError("physics-informed adaptation requires estimated parameters")
    order = task.order if order is None else order
    dt = task.dt_sample / n_out

    n_shots = shot_set.n_shots
    if n_shots > 0:
        Xs, Ys = stack_model_io(task, shot_set.shots, spec)
    collocation = shot_set.collocation
    if use_physics:
        Xc = collocation_model_inputs(collocation, spec, n_out)

    state = init_adam(params, lr=cfg.lr)
    trace: list[LossBreakdown] = []
    bs = cfg.batch_size or max(n_shots, 1)
    for epoch in range(cfg.epochs):
        batches = range(0, n_shots, bs) if n_shots > 0 else [0]
        epoch_losses = []
        for at in batches:
            loss_d = 0.0
            grads = None
            if n_shots > 0:
                Xb, Yb = Xs[at : at + bs], Ys[at : at + bs]
                pred, cache = forward(params, Xb)
                loss_d, grad_d = data_loss(pred, Yb)
                grads = backward(params, cache, cfg.weights.data * grad_d)
            loss_ca = loss_t = 0.0
            if use_physics:
                pred_c, cache_c = forward(params, Xc)
                loss_ca, loss_t, g_ca, g_t = physics_residuals(
                    task.kind, order, pred_c, collocation, est, dt, spec
                )
                g_phys = backward(
                    params, cache_c, cfg.weights.ca * g_ca + cfg.weights.t * g_t
                )
                grads = g_phys if grads is None else map_params(np.add, grads, g_phys)
            if grads is None:
                break
            params, state = adam_update(params, grads, state)
            epoch_losses.append(total_loss(cfg.weights, loss_d, loss_ca, loss_t))
        if not epoch_losses:
            trace.append(total_loss(cfg.weights, 0.0, 0.0, 0.0))
            continue
        trace.append(
            LossBreakdown(
                data=float(np.mean([b.data for b in epoch_losses])),
                ca=float(np.mean([b.ca for b in epoch_losses])),
                t=float(np.mean([b.t for b in epoch_losses])),
                total=float(np.mean([b.total for b in epoch_losses])),
            )
        )
        if resample_hook is not None and use_physics:
            new = resample_hook(epoch, trace, collocation)
            if new is not None:
                collocation = new
                Xc = collocation_model_inputs(collocation, spec, n_out)
    return params, trace


def train_scratch(
    shot_set: ShotSet,
    est: EstimatedParams | None,
    cfg: AdaptConfig,
    seed: int,
    n_out: int = 10,
) -> tuple[RnnParams, list[LossBreakdown]]:
    """Baseline: randomly initialized network trained directly on the shots
    (data-only or physics-informed per the config)."""
    if shot_set.n_shots < 1 and cfg.mode == "data":
        raise ValueError("scratch training needs at least one shot in data mode")
    params = init_params(rng_from(seed, 211))
    spec = norm_spec_for(shot_set.task.kind)
    return adapt(params, spec, shot_set, est, cfg, n_out=n_out)
