"""Fronthaul capacity, processing load (GOPS) and end-to-end power.

The two functional splits differ in where the low-PHY (filtering + DFT)
runs. With split 8 it runs in the cloud and time-domain IQ samples cross
the fronthaul; with split 7.2 it runs in every active radio unit and only
the used subcarriers are carried.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .sysmodel import SystemConfig


class Split(enum.Enum):
    OPTION_8 = "8"
    OPTION_7_2 = "7.2"

    @property
    def indicator(self):
        """1 when low-PHY sits in the radio unit."""
        return int(self is Split.OPTION_7_2)

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower().replace("option", "").replace("fs-", "").replace("_", ".").strip()
        for member in cls:
            if member.value == text:
                return member
        raise ValueError(f"unknown split {value!r}; expected '8' or '7.2'")


class CapacityError(ValueError):
    """A processing or fronthaul capacity limit is exceeded."""


@dataclass(frozen=True)
class FronthaulParams:
    R_max: float = 10e9
    N_bits: int = 12

    def __post_init__(self):
        if not self.R_max > 0 or self.N_bits < 1:
            raise ValueError("R_max must be positive and N_bits >= 1")


@dataclass(frozen=True)
class PowerParams:
    P_RU0: float = 27.2
    Delta_tr: float = 4.0
    P_RU0_proc: float = 20.8
    Delta_RU_proc: float = 74.0
    C_RU_max: float = 180.0
    P_ONU: float = 7.7
    P_fixed: float = 120.0
    sigma_cool: float = 0.9
    P_OLT: float = 20.0
    P_GPP0_proc: float = 20.8
    Delta_GPP_proc: float = 74.0
    C_GPP_max: float = 180.0
    W: int = 16

    def __post_init__(self):
        if not 0 < self.sigma_cool <= 1:
            raise ValueError("sigma_cool must lie in (0, 1]")
        for name, val in self.__dict__.items():
            if val < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.C_GPP_max <= 0 or self.C_RU_max <= 0:
            raise ValueError("processing capacities must be positive")

    @classmethod
    def for_antennas(cls, N, **overrides):
        """Defaults with the static radio-unit power scaled as 6.8 W per antenna."""
        return cls(**{"P_RU0": 6.8 * N, **overrides})


@dataclass(frozen=True)
class GopsParams:
    C_other_ORU: float = 0.0
    C_other_UE: float = 0.0
    F_fixed: float = 0.0


@dataclass(frozen=True)
class GopsCoefficients:
    C_filter: float
    C_DFT: float
    S: float
    const: float
    per_ue: float
    Z: float
    X: float
    F: float
    indicator: int


@dataclass
class Allocation:
    """Decision bundle: association ``x`` (K x L), activation ``z`` (L),
    square-root powers ``rho`` (K x L) and cloud counts."""

    x: np.ndarray
    z: np.ndarray
    rho: np.ndarray
    n_LC: int = 1
    n_GPP: int = 1

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.int64)
        self.z = np.asarray(self.z, dtype=np.int64)
        self.rho = np.asarray(self.rho, dtype=float)
        if self.x.shape != self.rho.shape or self.x.shape[1:] != self.z.shape:
            raise ValueError("x, rho must be K x L and z length L")

    @property
    def K(self):
        return self.x.shape[0]

    @property
    def L(self):
        return self.x.shape[1]

    @classmethod
    def empty(cls, K, L):
        return cls(np.zeros((K, L), int), np.zeros(L, int), np.zeros((K, L)), 1, 1)

    def tx_power(self):
        """Per-O-RU radiated power (W)."""
        return np.sum(self.x * self.rho**2, axis=0)

    def violations(self, p_max, W_max=None, W=None, tol=1e-9):
        """Human-readable list of broken structural invariants (empty if none)."""
        out = []
        if np.any((self.x != 0) & (self.x != 1)) or np.any((self.z != 0) & (self.z != 1)):
            out.append("x and z must be binary")
        served = self.x.sum(axis=0) >= 1
        if np.any(served != (self.z == 1)):
            out.append(f"activation mismatch at O-RUs {np.flatnonzero(served != (self.z == 1)).tolist()}")
        if np.any(self.rho < -tol):
            out.append("negative rho")
        bad = (self.rho > tol) & (self.x == 0)
        if np.any(bad):
            out.append(f"power on unassociated links {np.argwhere(bad).tolist()}")
        over = np.flatnonzero(np.sum(self.rho**2, axis=0) > p_max * (1 + tol) + tol)
        if over.size:
            out.append(f"power budget exceeded at O-RUs {over.tolist()}")
        if not self.n_GPP >= self.n_LC >= 1:
            out.append(f"need n_GPP >= n_LC >= 1, got {self.n_GPP}, {self.n_LC}")
        if W_max is not None and W is not None and self.z.sum() > W_max * W:
            out.append(f"{self.z.sum()} active O-RUs exceed fronthaul capacity {W_max}*{W}")
        return out


# ----------------------------------------------------------------------------
# fronthaul and GOPS
# ----------------------------------------------------------------------------


def fronthaul_rate(split, cfg: SystemConfig, fh: FronthaulParams = FronthaulParams()):
    """Per-O-RU fronthaul bit rate in bit/s."""
    if Split.parse(split) is Split.OPTION_8:
        return 2.0 * cfg.f_s * fh.N_bits * cfg.N
    return 2.0 * fh.N_bits * cfg.N_used * cfg.N / cfg.T_s


def wavelength_capacity(split, cfg: SystemConfig, fh: FronthaulParams = FronthaulParams()):
    """How many O-RUs one wavelength can carry (0 means the split does not fit)."""
    rate = fronthaul_rate(split, cfg, fh)
    if rate <= 0:
        raise ValueError("fronthaul rate must be positive")
    # guard against 2.9999999 from float rounding in the ratio
    return int(math.floor(fh.R_max / rate * (1 + 1e-12)))


def gops_coefficients(cfg: SystemConfig, split, gp: GopsParams = GopsParams()):
    split = Split.parse(split)
    N, tp = cfg.N, cfg.tau_p
    C_filter = 40.0 * N * cfg.f_s / 1e9
    C_DFT = 8.0 * N * cfg.N_DFT * math.log2(cfg.N_DFT) / (cfg.T_s * 1e9)
    S = C_filter + C_DFT
    unit = cfg.N_used / (cfg.T_s * cfg.tau_c * 1e9)
    const = unit * (8 * N * tp**2 + 8 * N**2 * tp + (4 * N**2 + 4 * N) * tp + 8 * (N**3 - N) / 3)
    per_ue = unit * (16 * N**2 + 8 * N * (cfg.tau_d + 1))
    Z = (1 - split.indicator) * S + const + gp.C_other_ORU
    X = per_ue + gp.C_other_UE
    return GopsCoefficients(C_filter, C_DFT, S, const, per_ue, Z, X, gp.F_fixed, split.indicator)


def gops_ru(coeffs: GopsCoefficients, pp: PowerParams | None = None):
    """Low-PHY load carried by each active O-RU."""
    load = coeffs.indicator * coeffs.S
    if pp is not None and load > pp.C_RU_max:
        raise CapacityError(f"O-RU processing overload: {load:.4g} > {pp.C_RU_max:.4g} GOPS")
    return load


def gops_gpp(alloc: Allocation, coeffs: GopsCoefficients):
    return coeffs.Z * float(alloc.z.sum()) + coeffs.X * float(alloc.x.sum()) + coeffs.F


# ----------------------------------------------------------------------------
# power
# ----------------------------------------------------------------------------


def power_ru(alloc: Allocation, l, pp: PowerParams, coeffs: GopsCoefficients):
    if not alloc.z[l]:
        return 0.0
    ind = coeffs.indicator
    static = pp.P_RU0 + ind * pp.P_RU0_proc + pp.Delta_RU_proc * gops_ru(coeffs, pp) / pp.C_RU_max
    return float(static + pp.Delta_tr * alloc.tx_power()[l])


def power_cloud(alloc: Allocation, pp: PowerParams, coeffs: GopsCoefficients, load=None):
    load = gops_gpp(alloc, coeffs) if load is None else float(load)
    if load > alloc.n_GPP * pp.C_GPP_max * (1 + 1e-12):
        raise CapacityError(f"GPP overload: {load:.4g} GOPS on {alloc.n_GPP} GPPs")
    inner = pp.P_OLT * alloc.n_LC + pp.P_GPP0_proc * alloc.n_GPP + pp.Delta_GPP_proc * load / pp.C_GPP_max
    return pp.P_fixed + inner / pp.sigma_cool


def power_breakdown(alloc: Allocation, pp: PowerParams, coeffs: GopsCoefficients):
    """Total power split into named parts (W); the values sum to the total."""
    active = float(alloc.z.sum())
    ind = coeffs.indicator
    load = gops_gpp(alloc, coeffs)
    if load > alloc.n_GPP * pp.C_GPP_max * (1 + 1e-12):
        raise CapacityError(f"GPP overload: {load:.4g} GOPS on {alloc.n_GPP} GPPs")
    return {
        "ru_static": active * pp.P_RU0,
        "ru_transmit": pp.Delta_tr * float(alloc.tx_power() @ alloc.z),
        "ru_processing": active * (ind * pp.P_RU0_proc + pp.Delta_RU_proc * gops_ru(coeffs, pp) / pp.C_RU_max),
        "fronthaul_onu": active * pp.P_ONU,
        "fronthaul_olt": pp.P_OLT * alloc.n_LC / pp.sigma_cool,
        "gpp_idle": pp.P_GPP0_proc * alloc.n_GPP / pp.sigma_cool,
        "gpp_dynamic": pp.Delta_GPP_proc * load / pp.C_GPP_max / pp.sigma_cool,
        "fixed": pp.P_fixed,
    }


def power_total(alloc: Allocation, pp: PowerParams, coeffs: GopsCoefficients):
    ru = sum(power_ru(alloc, l, pp, coeffs) for l in range(alloc.L))
    return ru + pp.P_ONU * float(alloc.z.sum()) + power_cloud(alloc, pp, coeffs)


def cloud_dimensioning(z, x, coeffs: GopsCoefficients, W_max, pp: PowerParams):
    """Smallest (line cards, GPPs) pair that carries the given activation."""
    active = int(np.sum(z))
    if W_max < 1:
        raise CapacityError("split cannot be fronthauled (W_max = 0)")
    load = coeffs.Z * active + coeffs.X * float(np.sum(x)) + coeffs.F
    n_lc = max(1, -(-active // W_max))
    n_gpp = max(n_lc, 1, math.ceil(load / pp.C_GPP_max * (1 - 1e-12)))
    if n_lc > pp.W or n_gpp > pp.W:
        raise CapacityError(f"cloud capacity exceeded: need {n_lc} LCs and {n_gpp} GPPs, have {pp.W}")
    return n_lc, n_gpp


def dimensioned(alloc: Allocation, coeffs, W_max, pp):
    """Copy of ``alloc`` with minimal cloud counts filled in."""
    n_lc, n_gpp = cloud_dimensioning(alloc.z, alloc.x, coeffs, W_max, pp)
    return Allocation(alloc.x.copy(), alloc.z.copy(), alloc.rho.copy(), n_lc, n_gpp)
