"""Explicit-Euler trajectory generation with physical-plausibility filtering.

A *sample* is one sampling period: the manipulated inputs are held constant,
the reactor ODEs are integrated at ``dt_int``, and ``n_out`` evenly thinned
states are recorded.  For the plug-flow reactor only the first interior node
is recorded; the inlet node is held at the sampled initial state.

Trajectories containing NaN/Inf, negative concentrations, non-positive or
runaway temperatures, absurdly large magnitudes, or an underflowed reaction
rate at non-trivial concentration are rejected so that datasets contain only
physically meaningful dynamics.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from .errors import NumericalError, TaskInfeasible, TrajectoryRejected
from .reactors import (
    ReactorKind,
    TaskSpec,
    arrhenius,
    br_rhs,
    cstr_rhs,
    pfr_rhs,
    rhs_for,
)


@dataclass(frozen=True)
class SimConfig:
    """Simulation knobs shared across tasks.

    n_out       recorded states per sampling period
    T_max       upper plausibility bound on temperature, K
    big_max     any |state| above this is implausible
    eps_CA      concentration below which a vanishing rate is acceptable
    arrhenius_min  exp(-Ea/RT) below this with CA > eps_CA flags rate underflow
    max_attempts_per_sample  resample budget before declaring the task infeasible
    """

    n_out: int = 10
    T_max: float = 1200.0
    big_max: float = 1e6
    eps_CA: float = 1e-3
    arrhenius_min: float = 1e-12
    max_attempts_per_sample: int = 1000


@dataclass(frozen=True)
class Trajectory:
    """One accepted sampling-period rollout.

    t0_state  (2,) [T, CA] at the period start (node 1 state for PFR)
    inp       manipulated input vector, constant over the period
    steps     (n_out, 2) recorded [T, CA] states
    """

    t0_state: np.ndarray
    inp: np.ndarray
    steps: np.ndarray


def euler_step(rhs, state, inp, params, order, h):
    """One explicit Euler step: state + h * rhs(state, inp)."""
    if h < 0:
        raise ValueError("step size must be >= 0")
    deriv = np.asarray(rhs(state, inp, params, order), dtype=float)
    out = np.asarray(state, dtype=float) + h * deriv
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"euler_step produced non-finite state: {out}")
    return out


def plausibility_filter(
    states: np.ndarray, task: TaskSpec, cfg: SimConfig
) -> str | None:
    """Check recorded [T, CA] states; return None to accept or a reason string.

    Total function: never raises, any array comes back with a verdict.
    """
    T = states[:, 0]
    CA = states[:, 1]
    if not np.all(np.isfinite(states)):
        return "non-finite value (NaN/Inf)"
    if np.any(CA < 0):
        return "negative concentration"
    if np.any(T <= 0):
        return "non-positive temperature"
    if np.any(T > cfg.T_max):
        return f"temperature above {cfg.T_max} K"
    if np.any(np.abs(states) > cfg.big_max):
        return f"state magnitude above {cfg.big_max}"
    p = task.params
    with np.errstate(over="ignore"):
        factor = np.exp(-p.Ea / (p.R * T))
    if np.any((factor < cfg.arrhenius_min) & (CA > cfg.eps_CA)):
        return "reaction-rate underflow at non-trivial concentration"
    return None


def simulate_period(
    task: TaskSpec,
    x0,
    u,
    cfg: SimConfig,
    dt_int: float | None = None,
    n_out: int | None = None,
    check: bool = True,
) -> Trajectory:
    """Integrate one sampling period under constant input and record the
    thinned state trajectory.

    ``x0`` is the (T, CA) period-start state; for the plug-flow reactor the
    whole profile starts uniform at ``x0`` and node 0 stays there.  ``dt_int``
    and ``n_out`` default to the task clock and config; overriding ``dt_int``
    (e.g. dividing it by 10) is how refinement checks are run.

    Raises TrajectoryRejected when the plausibility filter fires (or the
    integration leaves the representable range), unless ``check`` is False.
    """
    dt = task.dt_int if dt_int is None else dt_int
    n = cfg.n_out if n_out is None else n_out
    substeps = round(task.dt_sample / dt)
    if abs(task.dt_sample / dt - substeps) > 1e-9 or substeps < 1:
        raise ValueError("dt_int must evenly divide the sampling period")
    if substeps % n != 0:
        raise ValueError(f"n_out={n} must divide the {substeps} integration substeps")
    thin = substeps // n

    x0 = np.asarray(x0, dtype=float)
    u = np.asarray(u, dtype=float)
    steps = np.empty((n, 2))
    try:
        if task.kind is ReactorKind.PFR:
            profile = np.tile(x0, (task.params.N, 1))
            for k in range(substeps):
                profile = profile + dt * pfr_rhs(profile, u, task.params, task.order)
                if (k + 1) % thin == 0:
                    steps[(k + 1) // thin - 1] = profile[1]
        else:
            rhs = cstr_rhs if task.kind is ReactorKind.CSTR else br_rhs
            T, CA = float(x0[0]), float(x0[1])
            inp = tuple(float(v) for v in u)
            for k in range(substeps):
                dT, dCA = rhs((T, CA), inp, task.params, task.order)
                T += dt * dT
                CA += dt * dCA
                if (k + 1) % thin == 0:
                    steps[(k + 1) // thin - 1] = (T, CA)
    except (NumericalError, OverflowError) as exc:
        if check:
            raise TrajectoryRejected(f"integration diverged: {exc}") from exc
        raise NumericalError(str(exc)) from exc

    traj = Trajectory(t0_state=x0, inp=u, steps=steps)
    if check:
        reason = plausibility_filter(steps, task, cfg)
        if reason is not None:
            raise TrajectoryRejected(reason)
    return traj


def draw_initial_state(task: TaskSpec, rng: np.random.Generator) -> np.ndarray:
    lo_T, hi_T = task.op_ranges["T"]
    lo_C, hi_C = task.op_ranges["CA"]
    return np.array([rng.uniform(lo_T, hi_T), rng.uniform(lo_C, hi_C)])


def draw_input(task: TaskSpec, rng: np.random.Generator) -> np.ndarray:
    return np.array(
        [rng.uniform(*task.op_ranges[name]) for name in task.input_names]
    )


def generate_task_dataset(
    task: TaskSpec,
    n_samples: int,
    cfg: SimConfig,
    seed: int | None = None,
) -> list[Trajectory]:
    """Simulate ``n_samples`` accepted trajectories with (x0, u) drawn
    uniformly from the task's operational region.

    Rejected draws are retried with fresh initial conditions from the same
    per-sample stream.  If the running rejection rate exceeds 90% the task is
    declared infeasible so the caller can resample its parameters; a hard
    per-sample attempt budget guards against pathological tasks.
    """
    base = task.seed if seed is None else seed
    out: list[Trajectory] = []
    attempts = 0
    for i in range(n_samples):
        rng = np.random.default_rng(np.random.SeedSequence([base, i]))
        for trial in range(cfg.max_attempts_per_sample):
            attempts += 1
            x0 = draw_initial_state(task, rng)
            u = draw_input(task, rng)
            try:
                out.append(simulate_period(task, x0, u, cfg))
                break
            except TrajectoryRejected:
                if attempts >= 50 and len(out) / attempts < 0.1:
                    raise TaskInfeasible(
                        f"rejection rate {1 - len(out) / attempts:.0%} "
                        f"after {attempts} attempts"
                    ) from None
        else:
            raise TaskInfeasible(
                f"no accepted trajectory in {cfg.max_attempts_per_sample} attempts "
                f"for sample {i}"
            )
    return out


def export_task_dataset(
    path_csv, path_meta, task: TaskSpec, trajectories: list[Trajectory]
) -> None:
    """Write one task's dataset as CSV plus a JSON sidecar with the TaskSpec.

    Rows carry the initial state at t_index 0 followed by the recorded steps;
    the input columns are padded to two entries for single-input reactors.
    """
    with open(path_csv, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["kind", "order", "t_index", "T", "CA", "u1", "u2"])
        for traj in trajectories:
            u = traj.inp
            u1 = repr(float(u[0]))
            u2 = repr(float(u[1] if len(u) > 1 else u[0]))
            rows = np.vstack([traj.t0_state, traj.steps])
            for t_index, (T, CA) in enumerate(rows):
                w.writerow(
                    [task.kind.value, task.order, t_index, repr(float(T)), repr(float(CA)), u1, u2]
                )
    meta = {
        "kind": task.kind.value,
        "order": task.order,
        "params": asdict(task.params),
        "op_ranges": task.op_ranges,
        "dt_int": task.dt_int,
        "dt_sample": task.dt_sample,
        "seed": task.seed,
    }
    with open(path_meta, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
