"""Radio side: deployments, channels, pilots, MMSE estimation, LP-MMSE
precoding and Monte Carlo estimates of the effective downlink statistics.

Everything here is a pure function of its inputs and an integer seed.
Randomness flows through :func:`numpy.random.default_rng`; per-realization
streams are spawned from ``(seed, purpose)`` so batches are reproducible no
matter how they are chunked.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import kernels

BOLTZMANN_DBM_HZ = -174.0


@dataclass(frozen=True)
class SystemConfig:
    """OFDM numerology, pilot/coherence layout and radio constants.

    ``sigma2`` defaults to the thermal noise over ``B`` plus ``noise_figure_db``.
    """

    f_s: float = 30.72e6
    B: float = 20e6
    N_DFT: int = 2048
    N_used: int = 1200
    T_s: float = 71.4e-6
    N_smooth: int = 12
    N_slot: int = 16
    tau_p: int = 8
    N: int = 4
    eta: float = 0.1
    p_max: float = 1.0
    area: float = 1000.0
    noise_figure_db: float = 7.0
    sigma2: float | None = None
    # large-scale model
    pathloss_const_db: float = -30.5
    pathloss_exp: float = 36.7
    height: float = 10.0
    shadow_db: float = 4.0
    correlation: str = "local"
    asd_deg: float = 15.0

    def __post_init__(self):
        if self.sigma2 is None:
            dbm = BOLTZMANN_DBM_HZ + 10 * math.log10(self.B) + self.noise_figure_db
            object.__setattr__(self, "sigma2", 10 ** ((dbm - 30) / 10))
        if not 1 <= self.tau_p < self.tau_c:
            raise ValueError(f"need 1 <= tau_p < tau_c, got tau_p={self.tau_p}, tau_c={self.tau_c}")
        if self.N_used > self.N_DFT:
            raise ValueError("N_used exceeds N_DFT")
        positive = ("f_s", "B", "N_DFT", "N_used", "T_s", "N_smooth", "N_slot", "N", "eta", "sigma2", "p_max", "area")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.correlation not in ("local", "uncorrelated"):
            raise ValueError(f"unknown correlation model {self.correlation!r}")

    @property
    def tau_c(self):
        return self.N_smooth * self.N_slot

    @property
    def tau_d(self):
        return self.tau_c - self.tau_p

    @property
    def prelog(self):
        return self.tau_d / self.tau_c


@dataclass
class Scenario:
    """Positions (m), correlation matrices ``R[k, l]`` and gains ``beta[k, l]``."""

    oru_positions: np.ndarray
    ue_positions: np.ndarray
    R: np.ndarray
    beta: np.ndarray
    seed: int | None = None

    @property
    def L(self):
        return self.oru_positions.shape[0]

    @property
    def K(self):
        return self.ue_positions.shape[0]

    @property
    def N(self):
        return self.R.shape[-1]

    def to_dict(self):
        return {
            "schema": "scenario_v1",
            "seed": self.seed,
            "oru_positions": self.oru_positions.tolist(),
            "ue_positions": self.ue_positions.tolist(),
            "beta": self.beta.tolist(),
            "R": _pack_complex(self.R),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("schema") != "scenario_v1":
            raise ValueError(f"unsupported scenario schema {d.get('schema')!r}")
        return cls(
            np.array(d["oru_positions"], dtype=float),
            np.array(d["ue_positions"], dtype=float),
            _unpack_complex(d["R"]),
            np.array(d["beta"], dtype=float),
            d.get("seed"),
        )


@dataclass
class PilotAssignment:
    """Zero-based pilot index per UE and the co-pilot sets."""

    t: np.ndarray
    copilot_sets: list

    @classmethod
    def from_indices(cls, t):
        t = np.asarray(t, dtype=np.int64)
        sets = [frozenset(np.flatnonzero(t == t[k]).tolist()) for k in range(t.size)]
        return cls(t, sets)


@dataclass
class ChannelBatch:
    """One batch of realizations: true channels, estimates and precoders, each ``(n, K, L, N)``."""

    h: np.ndarray
    hhat: np.ndarray
    w: np.ndarray


@dataclass
class EffectiveStatistics:
    """Average effective gains ``b`` (K x L) and interference matrices ``C`` (K x K x L x L).

    ``stderr`` holds standard errors of ``b`` (key ``"b"``) and of the diagonal
    second moments E|h_kl' w_il|^2 (key ``"C_diag"``, K x K x L). Off-diagonal
    entries of ``C`` carry no stored error bar since that would need fourth
    moments over all O-RU pairs.
    """

    b: np.ndarray
    C: np.ndarray
    mc_count: int
    stderr: dict = field(default_factory=dict)
    sigma2: float = 1.0
    imag_score: float = 0.0

    @property
    def K(self):
        return self.b.shape[0]

    @property
    def L(self):
        return self.b.shape[1]

    def to_json(self):
        return json.dumps(
            {
                "schema": "stats_v1",
                "mc_count": self.mc_count,
                "sigma2": self.sigma2,
                "imag_score": self.imag_score,
                "b": self.b.tolist(),
                "C": _pack_complex(self.C),
                "stderr": {k: np.asarray(v).tolist() for k, v in self.stderr.items()},
            }
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        if d.get("schema") != "stats_v1":
            raise ValueError(f"unsupported statistics schema {d.get('schema')!r}")
        return cls(
            np.array(d["b"], dtype=float),
            _unpack_complex(d["C"]),
            int(d["mc_count"]),
            {k: np.array(v, dtype=float) for k, v in d["stderr"].items()},
            float(d["sigma2"]),
            float(d.get("imag_score", 0.0)),
        )


def _pack_complex(a):
    """Shape plus row-major interleaved (re, im) values."""
    a = np.asarray(a, dtype=complex)
    return {"shape": list(a.shape), "data": np.stack([a.real, a.imag], axis=-1).ravel().tolist()}


def _unpack_complex(d):
    flat = np.array(d["data"], dtype=float).reshape(-1, 2)
    return (flat[:, 0] + 1j * flat[:, 1]).reshape(d["shape"])


# ----------------------------------------------------------------------------
# large-scale model
# ----------------------------------------------------------------------------


def pathloss_db(distance, cfg: SystemConfig):
    """Mean channel gain in dB at 3-D distance ``distance`` (m)."""
    return cfg.pathloss_const_db - cfg.pathloss_exp * np.log10(distance)


_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite_e.hermegauss(80)
_GH_WEIGHTS = _GH_WEIGHTS / _GH_WEIGHTS.sum()


def spatial_correlation(model, N, beta, angle=0.0, asd_deg=15.0):
    """Correlation matrix of a half-wavelength ULA, normalized to trace ``N * beta``.

    ``model`` is ``"uncorrelated"`` or ``"local"`` (Gaussian local scattering
    around the nominal azimuth ``angle`` in radians with angular standard
    deviation ``asd_deg``).
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    if model == "uncorrelated":
        return beta * np.eye(N, dtype=complex)
    if model != "local":
        raise ValueError(f"unknown correlation model {model!r}")
    sd = np.deg2rad(asd_deg)
    dist = np.arange(N)
    # E over delta ~ N(0, sd^2) of exp(j pi d sin(angle + delta)), Gauss-Hermite
    phases = np.sin(angle + sd * _GH_NODES)
    col = np.exp(1j * np.pi * np.outer(dist, phases)) @ _GH_WEIGHTS
    col[0] = 1.0
    return beta * sla.toeplitz(col, col.conj())


def generate_scenario(cfg: SystemConfig, L, K, seed) -> Scenario:
    if L < 1 or K < 1:
        raise ValueError("need at least one O-RU and one UE")
    rng = np.random.default_rng([int(seed), 0])
    oru = rng.uniform(0.0, cfg.area, size=(L, 2))
    ue = rng.uniform(0.0, cfg.area, size=(K, 2))
    delta = ue[:, None, :] - oru[None, :, :]
    dist = np.sqrt(np.sum(delta**2, axis=-1) + cfg.height**2)
    shadow = cfg.shadow_db * rng.standard_normal((K, L))
    beta = 10 ** ((pathloss_db(dist, cfg) + shadow) / 10)
    angle = np.arctan2(delta[..., 1], delta[..., 0])
    R = np.empty((K, L, cfg.N, cfg.N), dtype=complex)
    for k in range(K):
        for l in range(L):
            R[k, l] = spatial_correlation(cfg.correlation, cfg.N, beta[k, l], angle[k, l], cfg.asd_deg)
    # the gain is defined through the trace
    beta = np.real(np.trace(R, axis1=2, axis2=3)) / cfg.N
    return Scenario(oru, ue, R, beta, int(seed))


# ----------------------------------------------------------------------------
# pilots and estimation
# ----------------------------------------------------------------------------


def assign_pilots(scenario: Scenario, tau_p, eta=None):
    """Greedy deterministic assignment.

    The first ``tau_p`` UEs get distinct pilots. Every later UE takes the
    pilot whose current users contribute the least pilot power at that UE's
    strongest O-RU.
    """
    if tau_p < 1:
        raise ValueError("tau_p must be at least 1")
    K = scenario.K
    eta = np.ones(K) if eta is None else np.broadcast_to(np.asarray(eta, dtype=float), (K,))
    t = np.empty(K, dtype=np.int64)
    for k in range(K):
        if k < tau_p:
            t[k] = k
            continue
        best = int(np.argmax(scenario.beta[k]))
        load = np.zeros(tau_p)
        np.add.at(load, t[:k], eta[:k] * scenario.beta[:k, best])
        t[k] = int(np.argmin(load))
    return PilotAssignment.from_indices(t)


def pilot_codebook(tau_p):
    """Columns are mutually orthogonal pilots with squared norm ``tau_p``."""
    if tau_p & (tau_p - 1) == 0:
        return sla.hadamard(tau_p).astype(complex)
    n = np.arange(tau_p)
    return np.exp(-2j * np.pi * np.outer(n, n) / tau_p)


def _eta(cfg, K):
    return np.full(K, cfg.eta)


def _psi(scenario, pilots, cfg):
    """Covariance of the despread pilot signal per (UE, O-RU)."""
    eta = _eta(cfg, scenario.K)
    K, L, N = scenario.K, scenario.L, scenario.N
    psi = np.empty((K, L, N, N), dtype=complex)
    for k in range(K):
        idx = sorted(pilots.copilot_sets[k])
        psi[k] = cfg.tau_p * np.tensordot(eta[idx], scenario.R[idx], axes=1) + cfg.sigma2 * np.eye(N)
    return psi


def received_pilots(h, pilots, cfg, rng):
    """Pilot observation ``Y_l`` (n, L, N, tau_p) for channels ``h`` (n, K, L, N)."""
    n, K, L, N = h.shape
    phi = pilot_codebook(cfg.tau_p)[:, pilots.t]  # tau_p x K
    amp = np.sqrt(_eta(cfg, K))
    Y = np.einsum("rkln,k,pk->rlnp", h, amp, phi)
    noise = rng.standard_normal((n, L, N, cfg.tau_p, 2)) @ np.array([1.0, 1j])
    return Y + math.sqrt(cfg.sigma2 / 2) * noise


def mmse_estimate(Y, pilots, cfg: SystemConfig, scenario: Scenario):
    """MMSE estimates ``hhat`` (n, K, L, N) from pilot observations ``Y`` (n, L, N, tau_p)."""
    if not cfg.sigma2 > 0:
        raise ValueError("noise power must be positive")
    K = scenario.K
    phi = pilot_codebook(cfg.tau_p)[:, pilots.t]
    yp = np.einsum("rlnp,pk->rkln", Y, phi.conj())
    psi = _psi(scenario, pilots, cfg)
    # A_kl = sqrt(eta_k) R_kl Psi_kl^{-1}; Psi is Hermitian so solve on the right via transpose
    A = np.sqrt(_eta(cfg, K))[:, None, None, None] * np.linalg.solve(psi, scenario.R.conj().transpose(0, 1, 3, 2))
    A = A.conj().transpose(0, 1, 3, 2)
    return np.einsum("klnm,rklm->rkln", A, yp)


def estimation_error_cov(scenario, pilots, cfg):
    """``R - eta tau_p R Psi^{-1} R`` per (UE, O-RU)."""
    psi = _psi(scenario, pilots, cfg)
    eta = _eta(cfg, scenario.K)[:, None, None, None]
    R = scenario.R
    return R - eta * cfg.tau_p * R @ np.linalg.solve(psi, R)


def strongest_per_pilot(scenario, pilots):
    """For every O-RU, the set of UEs with the largest gain on each used pilot."""
    out = []
    for l in range(scenario.L):
        chosen = set()
        for p in np.unique(pilots.t):
            users = np.flatnonzero(pilots.t == p)
            chosen.add(int(users[np.argmax(scenario.beta[users, l])]))
        out.append(chosen)
    return out


def lp_mmse_precoders(hhat, pilots, scenario, cfg, serving=None):
    """Local partial MMSE precoders, normalized to unit average power over the batch.

    Interference is suppressed towards the strongest UE per pilot at each
    O-RU, plus any UEs listed in ``serving[l]``. The returned vectors are
    conjugated so that the effective gain is the plain product ``h' w``.
    """
    n, K, L, N = hhat.shape
    eta = _eta(cfg, K)
    cerr = estimation_error_cov(scenario, pilots, cfg)
    sets = strongest_per_pilot(scenario, pilots)
    if serving is not None:
        sets = [s | set(extra) for s, extra in zip(sets, serving)]
    M = np.empty((n, L, N, N), dtype=complex)
    for l in range(L):
        idx = sorted(sets[l])
        hs = hhat[:, idx, l, :] * np.sqrt(eta[idx])[None, :, None]
        M[:, l] = np.einsum("rin,rim->rnm", hs, hs.conj())
        M[:, l] += np.tensordot(eta[idx], cerr[idx, l], axes=1) + cfg.sigma2 * np.eye(N)
    # solve M[r, l] v = hhat[r, k, l] for all k at once
    rhs = hhat.transpose(0, 2, 3, 1)  # n, L, N, K
    v = np.linalg.solve(M, rhs).transpose(0, 3, 1, 2)  # n, K, L, N
    power = np.mean(np.sum(np.abs(v) ** 2, axis=-1), axis=0)  # K, L
    return v.conj() / np.sqrt(power)[None, :, :, None]


def draw_batch(scenario, pilots, cfg, seed, start, count, precoder="lp-mmse"):
    """Realizations ``start .. start+count-1``, each from its own substream."""
    K, L, N = scenario.K, scenario.L, scenario.N
    sqrtR = _sqrtm_psd(scenario.R)
    h = np.empty((count, K, L, N), dtype=complex)
    Y = np.empty((count, L, N, cfg.tau_p), dtype=complex)
    for j in range(count):
        rng = np.random.default_rng([int(seed), 1, start + j])
        e = rng.standard_normal((K, L, N, 2)) @ np.array([1.0, 1j]) / math.sqrt(2)
        h[j] = np.einsum("klnm,klm->kln", sqrtR, e)
        Y[j] = received_pilots(h[j : j + 1], pilots, cfg, rng)[0]
    hhat = mmse_estimate(Y, pilots, cfg, scenario)
    if precoder == "mr":
        power = np.mean(np.sum(np.abs(hhat) ** 2, axis=-1), axis=0)
        w = hhat.conj() / np.sqrt(power)[None, :, :, None]
    else:
        w = lp_mmse_precoders(hhat, pilots, scenario, cfg)
    return ChannelBatch(h, hhat, w)


def _sqrtm_psd(R):
    vals, vecs = np.linalg.eigh(R)
    vals = np.sqrt(np.clip(vals, 0.0, None))
    return (vecs * vals[..., None, :]) @ vecs.conj().swapaxes(-1, -2)


def effective_gains(batch: ChannelBatch):
    """``g[r, k, i, l] = h_kl' w_il`` for every realization."""
    return np.einsum("rkln,riln->rkil", batch.h, batch.w, optimize=True)


# ----------------------------------------------------------------------------
# statistics
# ----------------------------------------------------------------------------


class StatisticsError(RuntimeError):
    pass


def estimate_effective_statistics(scenario, pilots, cfg, n_mc=500, seed=0, chunk=100, precoder="lp-mmse"):
    """Monte Carlo estimates of the average effective gains and interference matrices.

    Precoders are normalized over the whole batch, so all ``n_mc``
    realizations are drawn first; moments are then accumulated chunk-wise.
    """
    if n_mc < 2:
        raise ValueError("need at least two realizations")
    batch = draw_batch(scenario, pilots, cfg, seed, 0, n_mc, precoder)
    K, L = scenario.K, scenario.L
    s1 = np.zeros((K, K, L), dtype=complex)
    s2 = np.zeros((K, K, L, L), dtype=complex)
    p2 = np.zeros((K, K, L))  # sum |g|^2 per entry
    p4 = np.zeros((K, K, L))  # sum |g|^4 per entry
    g_sq_re = np.zeros((K, L))
    g_sq_im = np.zeros((K, L))
    for start in range(0, n_mc, chunk):
        part = ChannelBatch(batch.h[start : start + chunk], batch.hhat[start : start + chunk], batch.w[start : start + chunk])
        g = np.ascontiguousarray(effective_gains(part))
        m = g.shape[0]
        mean, mom = kernels.second_moments(g)
        s1 += m * mean
        s2 += m * mom
        a2 = np.abs(g) ** 2
        p2 += a2.sum(axis=0)
        p4 += (a2**2).sum(axis=0)
        diag = np.einsum("rkkl->rkl", g)
        g_sq_re += (diag.real**2).sum(axis=0)
        g_sq_im += (diag.imag**2).sum(axis=0)
    mean = s1 / n_mc
    mom = s2 / n_mc
    bk = np.einsum("kkl->kl", mean)
    var_re = np.maximum(g_sq_re / n_mc - bk.real**2, 0.0) * n_mc / (n_mc - 1)
    var_im = np.maximum(g_sq_im / n_mc - bk.imag**2, 0.0) * n_mc / (n_mc - 1)
    se_re, se_im = np.sqrt(var_re / n_mc), np.sqrt(var_im / n_mc)
    imag_score = float(np.max(np.abs(bk.imag) / np.maximum(se_im, 1e-300))) if n_mc > 1 else 0.0
    b = np.clip(bk.real, 0.0, None)

    C = mom.copy()
    for k in range(K):
        C[k, k] -= np.outer(bk[k], bk[k].conj())
    C = 0.5 * (C + C.conj().swapaxes(-1, -2))
    for k in range(K):
        for i in range(K):
            vals, vecs = np.linalg.eigh(C[k, i])
            if i == k and vals.min() < -1e-3 * max(vals.sum(), 1e-300):
                raise StatisticsError(f"C[{k},{k}] is not a covariance (min eigenvalue {vals.min():.3g})")
            if vals.min() < 0:
                C[k, i] = (vecs * np.clip(vals, 0.0, None)) @ vecs.conj().T
    pm = p2 / n_mc
    se_c = np.sqrt(np.maximum(p4 / n_mc - pm**2, 0.0) / (n_mc - 1))
    return EffectiveStatistics(b, C, n_mc, {"b": se_re, "b_imag": se_im, "C_diag": se_c}, cfg.sigma2, imag_score)


def sinr_and_se(stats: EffectiveStatistics, rho, cfg: SystemConfig | None = None, sigma2=None):
    """Per-UE SINR and spectral efficiency for square-root powers ``rho`` (K x L)."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("rho must be nonnegative")
    s2 = sigma2 if sigma2 is not None else (cfg.sigma2 if cfg is not None else stats.sigma2)
    signal = np.sum(stats.b * rho, axis=1) ** 2
    interference = np.einsum("kilm,il,im->k", stats.C.real, rho, rho)
    sinr = signal / (interference + s2)
    prelog = cfg.prelog if cfg is not None else SystemConfig().prelog
    return sinr, prelog * np.log2(1.0 + sinr)


def se_to_sinr(se, cfg: SystemConfig):
    """SINR threshold that yields spectral efficiency ``se``."""
    return 2.0 ** (np.asarray(se, dtype=float) / cfg.prelog) - 1.0
