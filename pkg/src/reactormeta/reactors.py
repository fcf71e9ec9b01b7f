"""Reactor task parameterizations and right-hand-side derivative functions.

Three idealized reactor families are modeled, all with a single irreversible
A -> B reaction of integer order m:

* CSTR  - continuous stirred tank with inflow/outflow and a heating jacket,
* batch - closed, jacketed vessel (no flow terms),
* PFR   - tubular reactor discretized along its length by the method of
          lines with first-order upwind differences.

Unit conventions (everything internal is in these units):
    time        hr
    temperature K
    conc.       kmol/m^3
    energy      kJ
    volume      m^3

The published plug-flow parameter table lists the superficial velocity in
m/min and the heat-transfer coefficient in kcal; both are converted to the
hour/kJ system once, at task construction, via :func:`convert_pfr_units`.

State convention: scalar reactors use ``(T, CA)`` pairs; the plug-flow
profile is an ``(N, 2)`` array with columns ``[T, CA]``.  Node 0 of the
profile is the inlet boundary and is held fixed over a sampling period.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError

GAS_CONSTANT = 8.314  # kJ/kmol K

KCAL_TO_KJ = 4.184
MIN_TO_HR = 1.0 / 60.0


class ReactorKind(enum.Enum):
    CSTR = "cstr"
    BATCH = "batch"
    PFR = "pfr"


@dataclass(frozen=True)
class CstrParams:
    """Physical parameters of one continuous stirred tank reactor.

    F     volumetric flow rate, m^3/hr
    V     liquid volume, m^3
    T0    inlet temperature, K
    CA0s  steady-state inlet concentration, kmol/m^3
    Qs    steady-state heat rate, kJ/hr
    rhoL  liquid density, kg/m^3
    Cp    heat capacity, kJ/kg K
    Ea    activation energy, kJ/kmol
    k0    pre-exponential constant (units depend on reaction order)
    dH    reaction enthalpy, kJ/kmol (negative, exothermic)
    """

    F: float
    V: float
    T0: float
    CA0s: float
    Qs: float
    rhoL: float
    Cp: float
    Ea: float
    k0: float
    dH: float
    R: float = GAS_CONSTANT


@dataclass(frozen=True)
class BrParams:
    """Physical parameters of one batch reactor (closed vessel, jacketed)."""

    V: float
    rhoL: float
    Cp: float
    Ea: float
    k0: float
    dH: float
    Qs: float = 0.0
    R: float = GAS_CONSTANT


@dataclass(frozen=True)
class PfrParams:
    """Physical parameters of one plug flow reactor.

    Besides the kinetic constants shared with the other reactors:

    A    surface area, m^2
    Ac   cross-sectional area, m^2
    L    reactor length, m
    u    superficial velocity, m/hr (converted from the tabulated m/min)
    U    heat-transfer coefficient, kJ/m^2 K hr (converted from kcal)
    N    number of discretization nodes along the length
    Tcs  steady cooling-liquid temperature, K
    """

    A: float
    Ac: float
    u: float
    U: float
    Tcs: float
    rhoL: float
    Cp: float
    Ea: float
    k0: float
    dH: float
    L: float = 1.0
    N: int = 10
    R: float = GAS_CONSTANT

    @property
    def dz(self) -> float:
        """Node spacing, m."""
        return self.L / (self.N - 1)


Params = CstrParams | BrParams | PfrParams


def convert_pfr_units(u_m_per_min: float, U_kcal_per_m2K: float) -> tuple[float, float]:
    """Convert the tabulated plug-flow velocity and heat-transfer coefficient
    into the internal hr/kJ unit system.

    Returns ``(u in m/hr, U in kJ/m^2 K hr)``.
    """
    return u_m_per_min / MIN_TO_HR, U_kcal_per_m2K * KCAL_TO_KJ


# Sampling intervals for the physical parameters, straight from the three
# published tables.  PFR u and U are tabulated in m/min and kcal and are
# converted by convert_pfr_units at task construction.
CSTR_PARAM_RANGES: dict[str, tuple[float, float]] = {
    "F": (0.0, 55.0),
    "V": (0.0, 11.0),
    "T0": (0.0, 600.0),
    "CA0s": (0.0, 8.0),
    "Qs": (0.0, 0.0),
    "rhoL": (950.0, 1050.0),
    "Cp": (0.219, 0.243),
    "Ea": (4.75e4, 5.25e4),
    "k0": (8.04e6, 8.88e6),
    "dH": (-1.21e4, -1.09e4),
}

BR_PARAM_RANGES: dict[str, tuple[float, float]] = {
    "V": (0.0, 11.0),
    "rhoL": (950.0, 1050.0),
    "Cp": (0.219, 0.243),
    "Ea": (4.75e4, 5.25e4),
    "k0": (0.0, 9.31e8),
    "dH": (-1.21e4, -1.09e4),
}

PFR_PARAM_RANGES: dict[str, tuple[float, float]] = {
    "A": (0.0, 0.022),
    "Ac": (0.0, 0.11),
    "u": (0.0, 4.0),        # m/min, pre-conversion
    "U": (0.0, 50.0),       # kcal/m^2 K, pre-conversion
    "Tcs": (273.0, 586.0),
    "rhoL": (950.0, 1050.0),
    "Cp": (0.219, 0.243),
    "Ea": (4.75e4, 5.25e4),
    "k0": (8.04e6, 8.88e6),
    "dH": (-1.21e4, -1.09e4),
}

PARAM_RANGES: dict[ReactorKind, dict[str, tuple[float, float]]] = {
    ReactorKind.CSTR: CSTR_PARAM_RANGES,
    ReactorKind.BATCH: BR_PARAM_RANGES,
    ReactorKind.PFR: PFR_PARAM_RANGES,
}

# Operational sampling ranges for states and manipulated inputs.  These also
# define the min-max normalization of model features.
OP_RANGES: dict[ReactorKind, dict[str, tuple[float, float]]] = {
    ReactorKind.CSTR: {
        "T": (300.0, 600.0),
        "CA": (0.0, 6.0),
        "dQ": (-5e5, 5e5),
        "dCA0": (-3.5, 3.5),
    },
    ReactorKind.BATCH: {
        "T": (300.0, 600.0),
        "CA": (0.0, 6.0),
        "dQ": (-5e5, 5e5),
    },
    ReactorKind.PFR: {
        "T": (300.0, 500.0),
        "CA": (0.5, 3.0),
        "dTc": (100.0, 300.0),
    },
}

INPUT_NAMES: dict[ReactorKind, tuple[str, ...]] = {
    ReactorKind.CSTR: ("dQ", "dCA0"),
    ReactorKind.BATCH: ("dQ",),
    ReactorKind.PFR: ("dTc",),
}

# Integration step h_c and sampling period, hr.
TIME_STEPS: dict[ReactorKind, tuple[float, float]] = {
    ReactorKind.CSTR: (1e-4, 5e-3),
    ReactorKind.BATCH: (1e-4, 5e-2),
    ReactorKind.PFR: (0.01, 0.1),
}


@dataclass(frozen=True)
class TaskSpec:
    """One sampled reactor task: the full physical parameterization plus the
    operational region, sampling clock, and RNG seed for data generation."""

    kind: ReactorKind
    order: int
    params: Params
    op_ranges: dict[str, tuple[float, float]] = field(repr=False)
    dt_int: float
    dt_sample: float
    seed: int

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"reaction order must be >= 1, got {self.order}")
        ratio = self.dt_sample / self.dt_int
        if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
            raise ValueError(
                f"dt_int={self.dt_int} must evenly divide dt_sample={self.dt_sample}"
            )

    @property
    def substeps(self) -> int:
        return round(self.dt_sample / self.dt_int)

    @property
    def input_names(self) -> tuple[str, ...]:
        return INPUT_NAMES[self.kind]


def arrhenius(k0: float, Ea: float, R: float, T: float) -> float:
    """Rate constant k0 * exp(-Ea / (R T)); overflow maps to +inf."""
    try:
        return k0 * math.exp(-Ea / (R * T))
    except OverflowError:
        return math.inf


def cstr_rhs(state, inp, p: CstrParams, order: int):
    """Time derivatives (dT/dt, dCA/dt) of a stirred tank.

    ``state`` is (T, CA); ``inp`` is (dQ, dCA0), the offsets of heat rate and
    inlet concentration from their steady values.  ``order=2`` reproduces the
    second-order benchmark balance equations term for term.
    """
    T, CA = state
    dQ, dCA0 = inp
    CA0 = p.CA0s + dCA0
    Q = p.Qs + dQ
    try:
        rate = arrhenius(p.k0, p.Ea, p.R, T) * CA**order
        dCA_dt = (p.F / p.V) * (CA0 - CA) - rate
        dT_dt = (
            (p.F / p.V) * (p.T0 - T)
            + (-p.dH / (p.rhoL * p.Cp)) * rate
            + Q / (p.rhoL * p.Cp * p.V)
        )
    except OverflowError as exc:
        raise NumericalError(f"cstr_rhs overflow at T={T}, CA={CA}") from exc
    if not (math.isfinite(dCA_dt) and math.isfinite(dT_dt)):
        raise NumericalError(
            f"cstr_rhs non-finite at T={T}, CA={CA}: rate={rate}, "
            f"dCA/dt={dCA_dt}, dT/dt={dT_dt}"
        )
    return dT_dt, dCA_dt


def br_rhs(state, inp, p: BrParams, order: int):
    """Time derivatives (dT/dt, dCA/dt) of a batch reactor.

    ``inp`` is (dQ,).  ``order=1`` reproduces the first-order benchmark
    balance equations term for term.
    """
    T, CA = state
    (dQ,) = inp
    Q = p.Qs + dQ
    try:
        rate = arrhenius(p.k0, p.Ea, p.R, T) * CA**order
        dCA_dt = -rate
        dT_dt = (-p.dH / (p.rhoL * p.Cp)) * rate + Q / (p.rhoL * p.Cp * p.V)
    except OverflowError as exc:
        raise NumericalError(f"br_rhs overflow at T={T}, CA={CA}") from exc
    if not (math.isfinite(dCA_dt) and math.isfinite(dT_dt)):
        raise NumericalError(
            f"br_rhs non-finite at T={T}, CA={CA}: rate={rate}, "
            f"dCA/dt={dCA_dt}, dT/dt={dT_dt}"
        )
    return dT_dt, dCA_dt


def pfr_rhs(profile: np.ndarray, inp, p: PfrParams, order: int) -> np.ndarray:
    """Method-of-lines derivatives of the full plug-flow profile.

    ``profile`` has shape (N, 2) with columns [T, CA]; node 0 is the inlet
    boundary and its derivative is zero (held value).  Interior nodes use a
    first-order upwind difference against their upstream neighbor.  ``inp``
    is (dTc,), the cooling-temperature offset.
    """
    if profile.ndim != 2 or profile.shape != (p.N, 2):
        raise ValueError(f"profile must have shape ({p.N}, 2), got {profile.shape}")
    (dTc,) = inp
    Tc = p.Tcs + dTc
    T = profile[:, 0]
    CA = profile[:, 1]
    out = np.zeros_like(profile)
    with np.errstate(over="ignore", invalid="ignore"):
        rate = p.k0 * np.exp(-p.Ea / (p.R * T[1:])) * CA[1:] ** order
        conv_T = -p.u * (T[1:] - T[:-1]) / p.dz
        conv_CA = -p.u * (CA[1:] - CA[:-1]) / p.dz
        out[1:, 1] = conv_CA - rate
        out[1:, 0] = (
            conv_T
            + (-p.dH / (p.rhoL * p.Cp)) * rate
            + (p.U * p.Ac / (p.rhoL * p.Cp * p.A)) * (Tc - T[1:])
        )
    if not np.all(np.isfinite(out)):
        bad = np.argwhere(~np.isfinite(out))[0]
        raise NumericalError(
            f"pfr_rhs non-finite at node {bad[0]} "
            f"({'T' if bad[1] == 0 else 'CA'} equation)"
        )
    return out


def rhs_for(kind: ReactorKind):
    """RHS function for a reactor kind."""
    return {
        ReactorKind.CSTR: cstr_rhs,
        ReactorKind.BATCH: br_rhs,
        ReactorKind.PFR: pfr_rhs,
    }[kind]
