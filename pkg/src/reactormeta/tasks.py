"""Task sampling, feature normalization, and few-shot set construction.

Model features are 4-wide per time step: ``[T, CA, u1, u2]``.  The stirred
tank uses its two manipulated inputs (dQ, dCA0); the single-input reactors
pad the feature vector by repeating their one input, which keeps the input
dimension uniform across reactor kinds.

Normalization is min-max over the fixed operational ranges (not dataset
statistics), so it is invertible and identical for every task of a kind.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TaskInfeasible
from .reactors import (
    BrParams,
    CstrParams,
    OP_RANGES,
    PARAM_RANGES,
    PfrParams,
    ReactorKind,
    TIME_STEPS,
    TaskSpec,
    convert_pfr_units,
)
from .simulate import (
    SimConfig,
    Trajectory,
    draw_initial_state,
    draw_input,
    generate_task_dataset,
    simulate_period,
)

N_FEATURES = 4
N_STATES = 2


@dataclass(frozen=True)
class NormSpec:
    """Per-feature (lo, hi) bounds mapping the operational region to [0, 1].

    lo/hi have length 4 in feature order [T, CA, u1, u2]; the first two
    entries double as the target-state bounds.
    """

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        if not np.all(self.hi > self.lo):
            raise ValueError("normalization bounds must satisfy hi > lo")

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def state_lo(self) -> np.ndarray:
        return self.lo[:N_STATES]

    @property
    def state_hi(self) -> np.ndarray:
        return self.hi[:N_STATES]

    @property
    def state_width(self) -> np.ndarray:
        return self.width[:N_STATES]


def norm_spec_for(kind: ReactorKind) -> NormSpec:
    """Feature bounds for a reactor kind, padded inputs included."""
    r = OP_RANGES[kind]
    names = ["T", "CA"]
    if kind is ReactorKind.CSTR:
        names += ["dQ", "dCA0"]
    elif kind is ReactorKind.BATCH:
        names += ["dQ", "dQ"]
    else:
        names += ["dTc", "dTc"]
    lo = np.array([r[n][0] for n in names], dtype=float)
    hi = np.array([r[n][1] for n in names], dtype=float)
    return NormSpec(lo=lo, hi=hi)


def normalize(x, spec_lo, spec_hi):
    """Affine map of op-range endpoints to [0, 1]; no clamping."""
    return (np.asarray(x, dtype=float) - spec_lo) / (np.asarray(spec_hi) - spec_lo)


def denormalize(x_hat, spec_lo, spec_hi):
    """Inverse of :func:`normalize`."""
    return spec_lo + np.asarray(x_hat, dtype=float) * (np.asarray(spec_hi) - spec_lo)


def sample_task(
    kind: ReactorKind, order: int, rng: np.random.Generator
) -> TaskSpec:
    """Draw one task with every physical parameter uniform over its table
    interval; the plug-flow velocity and heat-transfer coefficient are
    converted to the internal unit system here."""
    if order < 1:
        raise ValueError("order must be >= 1")
    ranges = PARAM_RANGES[kind]
    draws = {name: float(rng.uniform(lo, hi)) for name, (lo, hi) in ranges.items()}
    if kind is ReactorKind.CSTR:
        params = CstrParams(**draws)
    elif kind is ReactorKind.BATCH:
        params = BrParams(**draws)
    else:
        u, U = convert_pfr_units(draws.pop("u"), draws.pop("U"))
        params = PfrParams(u=u, U=U, **draws)
    dt_int, dt_sample = TIME_STEPS[kind]
    seed = int(rng.integers(0, 2**63 - 1))
    return TaskSpec(
        kind=kind,
        order=order,
        params=params,
        op_ranges=dict(OP_RANGES[kind]),
        dt_int=dt_int,
        dt_sample=dt_sample,
        seed=seed,
    )


def sample_feasible_task(
    kind: ReactorKind,
    order: int,
    rng: np.random.Generator,
    cfg: SimConfig,
    probe_samples: int = 8,
    max_task_draws: int = 200,
) -> TaskSpec:
    """Draw tasks until one generates trajectories at an acceptable rate.

    Mirrors rerunning the simulation with a new parameter set whenever a
    drawn task rejects almost everything.
    """
    for _ in range(max_task_draws):
        task = sample_task(kind, order, rng)
        try:
            generate_task_dataset(task, probe_samples, cfg)
            return task
        except TaskInfeasible:
            continue
    raise TaskInfeasible(
        f"no feasible {kind.value} task of order {order} in {max_task_draws} draws"
    )


def features_from(state, u, kind: ReactorKind) -> np.ndarray:
    """Raw physical 4-feature vector [T, CA, u1, u2] with padding."""
    u = np.asarray(u, dtype=float)
    u2 = u[1] if u.shape[0] > 1 else u[0]
    return np.array([state[0], state[1], u[0], u2])


def build_model_io(
    task: TaskSpec, traj: Trajectory, spec: NormSpec | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Normalized (input sequence, target sequence) for one trajectory.

    The 4-feature input is replicated across the n_out time steps (the
    manipulated input is physically constant over the sampling period); the
    target is the normalized (T, CA) at each recorded step.
    """
    spec = spec if spec is not None else norm_spec_for(task.kind)
    feats = features_from(traj.t0_state, traj.inp, task.kind)
    x = normalize(feats, spec.lo, spec.hi)
    n = traj.steps.shape[0]
    X = np.tile(x, (n, 1))
    Y = normalize(traj.steps, spec.state_lo, spec.state_hi)
    return X, Y


def stack_model_io(
    task: TaskSpec, trajectories: list[Trajectory], spec: NormSpec | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Batched (S, n, 4) inputs and (S, n, 2) targets for a trajectory list."""
    spec = spec if spec is not None else norm_spec_for(task.kind)
    pairs = [build_model_io(task, t, spec) for t in trajectories]
    X = np.stack([p[0] for p in pairs])
    Y = np.stack([p[1] for p in pairs])
    return X, Y


@dataclass(frozen=True)
class ShotSet:
    """K labeled shots plus M unlabeled collocation inputs for one task.

    shots        accepted trajectories (the labeled few-shot data)
    collocation  (M, 4) raw-unit feature rows, disjoint from every shot input
    """

    task: TaskSpec
    shots: list[Trajectory]
    collocation: np.ndarray

    @property
    def n_shots(self) -> int:
        return len(self.shots)

    @property
    def n_collocation(self) -> int:
        return self.collocation.shape[0]


def draw_shot_set(
    task: TaskSpec,
    n_shots: int,
    n_collocation: int,
    cfg: SimConfig,
    seed: int,
) -> ShotSet:
    """Draw K simulated shots and M collocation inputs, all uniform over the
    operational region, with the collocation set disjoint from the shots."""
    if n_shots < 0 or n_collocation < 0:
        raise ValueError("shot and collocation counts must be >= 0")
    shots = generate_task_dataset(task, n_shots, cfg, seed=seed)
    shot_feats = {
        tuple(features_from(t.t0_state, t.inp, task.kind)) for t in shots
    }
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC011]))
    rows = []
    while len(rows) < n_collocation:
        x0 = draw_initial_state(task, rng)
        u = draw_input(task, rng)
        feats = features_from(x0, u, task.kind)
        if tuple(feats) in shot_feats:
            continue
        rows.append(feats)
    collocation = (
        np.array(rows) if rows else np.empty((0, N_FEATURES))
    )
    return ShotSet(task=task, shots=shots, collocation=collocation)


def evaluation_mse(
    params, task: TaskSpec, trajectories: list[Trajectory], forward_fn
) -> float:
    """Normalized test MSE of a model over a trajectory list."""
    X, Y = stack_model_io(task, trajectories)
    pred = forward_fn(params, X)
    return float(np.mean((pred - Y) ** 2))
