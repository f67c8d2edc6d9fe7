"""Joint radio, fronthaul and cloud resource allocation.

Three solvers share one problem instance:

* :func:`solve_exact` runs branch-and-bound over the association binaries,
  solving a conic relaxation at every node.
* :func:`ccp_power_min` replaces the sparsity terms by a smooth concave
  surrogate and runs the concave-convex procedure (each step a conic program),
  followed by thresholding and a final power re-allocation.
* :func:`ccp_sum_se` trades weighted sum rate against power with a
  fractional-programming reformulation handled by the same procedure.

All conic data are expressed in noise-normalized units (gains divided by the
noise standard deviation), so every SINR row has a unit noise term.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .conic import Nonneg, Soc, Zero
from .powermodel import (
    Allocation,
    CapacityError,
    FronthaulParams,
    GopsParams,
    PowerParams,
    Split,
    cloud_dimensioning,
    gops_coefficients,
    gops_ru,
    power_breakdown,
    power_total,
    wavelength_capacity,
)
from .sysmodel import EffectiveStatistics, SystemConfig, se_to_sinr, sinr_and_se

OPTIMAL = "Optimal"
FEASIBLE = "Feasible"
INFEASIBLE = "Infeasible"
STATIONARY = "ConvergedStationary"

SOLVER_TOL = 1e-9


class ConfigurationError(ValueError):
    pass


# ----------------------------------------------------------------------------
# problem instance
# ----------------------------------------------------------------------------


@dataclass
class ProblemInstance:
    stats: EffectiveStatistics
    cfg: SystemConfig
    pp: PowerParams
    gp: GopsParams
    split: Split
    gamma: np.ndarray
    W_max: int
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.split = Split.parse(self.split)
        self.gamma = np.broadcast_to(np.asarray(self.gamma, dtype=float), (self.stats.K,)).copy()
        if np.any(self.gamma < 0):
            raise ValueError("SINR targets must be nonnegative")
        if self.W_max < 1:
            raise ConfigurationError(f"split {self.split.value} cannot be fronthauled with N={self.cfg.N} (W_max = 0)")
        if self.stats.C.shape != (self.K, self.K, self.L, self.L):
            raise ValueError("statistics dimensions are inconsistent")

    @property
    def K(self):
        return self.stats.K

    @property
    def L(self):
        return self.stats.L

    @property
    def W(self):
        return self.pp.W

    @property
    def coeffs(self):
        if "coeffs" not in self._cache:
            self._cache["coeffs"] = gops_coefficients(self.cfg, self.split, self.gp)
        return self._cache["coeffs"]

    @property
    def sigma2(self):
        return self.stats.sigma2

    @property
    def bn(self):
        """Noise-normalized gains."""
        return self.stats.b / math.sqrt(self.sigma2)

    @property
    def factors(self):
        """Real symmetric square roots of the normalized interference matrices, trimmed to their rank."""
        if "factors" not in self._cache:
            self._cache["factors"] = interference_factors(self.stats.C.real / self.sigma2)
        return self._cache["factors"]

    def with_gamma(self, gamma):
        inst = ProblemInstance(self.stats, self.cfg, self.pp, self.gp, self.split, gamma, self.W_max)
        inst._cache = self._cache
        return inst

    # objective constants ----------------------------------------------------
    @property
    def per_oru(self):
        """Cost of one active O-RU excluding line cards and GPP idle power (W)."""
        pp, co = self.pp, self.coeffs
        ind = co.indicator
        return (
            pp.P_RU0
            + pp.P_ONU
            + ind * (pp.P_RU0_proc + pp.Delta_RU_proc * gops_ru(co, pp) / pp.C_RU_max)
            + pp.Delta_GPP_proc * co.Z / (pp.sigma_cool * pp.C_GPP_max)
        )

    @property
    def per_link(self):
        pp = self.pp
        return pp.Delta_GPP_proc * self.coeffs.X / (pp.sigma_cool * pp.C_GPP_max)

    @property
    def constant(self):
        pp = self.pp
        return pp.P_fixed + pp.Delta_GPP_proc * self.coeffs.F / (pp.sigma_cool * pp.C_GPP_max)

    @property
    def A_z(self):
        pp, co = self.pp, self.coeffs
        s = pp.sigma_cool
        return self.per_oru + (pp.P_OLT + pp.P_GPP0_proc) / (s * self.W_max) + pp.P_GPP0_proc * co.Z / (s * pp.C_GPP_max)

    @property
    def A_rho(self):
        pp = self.pp
        return (pp.P_GPP0_proc + pp.Delta_GPP_proc) * self.coeffs.X / (pp.sigma_cool * pp.C_GPP_max)


def make_instance(
    stats,
    cfg: SystemConfig,
    split="8",
    se_target=None,
    gamma=None,
    pp: PowerParams | None = None,
    gp: GopsParams | None = None,
    fh: FronthaulParams | None = None,
):
    """Bundle statistics and parameters; targets given either as SE (bit/s/Hz) or linear SINR."""
    split = Split.parse(split)
    pp = pp or PowerParams.for_antennas(cfg.N)
    gp = gp or GopsParams()
    fh = fh or FronthaulParams()
    if gamma is None:
        gamma = se_to_sinr(0.0 if se_target is None else se_target, cfg)
    return ProblemInstance(stats, cfg, pp, gp, split, gamma, wavelength_capacity(split, cfg, fh))


def interference_factors(Cr, rel=1e-12):
    """``F[k][i]`` with ``F' F = Cr[k, i]`` (symmetric PSD square root, zero rows dropped)."""
    K = Cr.shape[0]
    out = [[None] * K for _ in range(K)]
    for k in range(K):
        for i in range(K):
            M = 0.5 * (Cr[k, i] + Cr[k, i].T)
            vals, vecs = np.linalg.eigh(M)
            scale = max(float(np.abs(vals).max(initial=0.0)), 1e-300)
            if vals.min() < -1e-8 * scale:
                raise ValueError(f"interference matrix ({k}, {i}) is not PSD (min eigenvalue {vals.min():.3g})")
            keep = vals > rel * scale
            out[k][i] = (vecs[:, keep] * np.sqrt(vals[keep])).T
    return out


# ----------------------------------------------------------------------------
# variable layout with eliminated (fixed) entries
# ----------------------------------------------------------------------------


class _Layout:
    """Maps model quantities to program columns; a column of -1 means a constant."""

    def __init__(self, K, L):
        self.n = 0
        self.rho = -np.ones((K, L), dtype=np.int64)

    def new(self, count=1):
        cols = np.arange(self.n, self.n + count)
        self.n += count
        return cols

    def row(self, pairs=(), const=0.0):
        """Dense coefficient row from ``(column, coefficient)`` pairs."""
        r = np.zeros(self.n)
        for c, v in pairs:
            if c >= 0:
                r[c] += v
        return r, const


def _stack(rows, n):
    """Turn ``[(row, const)]`` into ``(F, g)`` with rows padded to ``n`` columns."""
    if not rows:
        return np.zeros((0, n)), np.zeros(0)
    F = np.zeros((len(rows), n))
    g = np.zeros(len(rows))
    for j, (r, c) in enumerate(rows):
        F[j, : r.size] = r
        g[j] = c
    return F, g


def sinr_soc_rows(inst_or_stats, gamma, rho_cols, n, sigma2=None, factors=None):
    """One SOC block per UE encoding SINR_k >= gamma_k.

    ``rho_cols[k, l]`` is the program column of rho_kl or -1 when rho_kl is
    fixed at zero. The block reads
    ``||(sqrt(g) F_k1 rho_1, ..., sqrt(g) F_kK rho_K, sqrt(g))|| <= b_k' rho_k``
    in noise-normalized units. A zero target degenerates to ``b_k' rho_k >= 0``.
    """
    if isinstance(inst_or_stats, ProblemInstance):
        bn, fac = inst_or_stats.bn, inst_or_stats.factors
    else:
        s2 = inst_or_stats.sigma2 if sigma2 is None else sigma2
        bn = inst_or_stats.b / math.sqrt(s2)
        fac = factors if factors is not None else interference_factors(inst_or_stats.C.real / s2)
    K, L = bn.shape
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (K,))
    blocks = []
    for k in range(K):
        a = np.zeros(n)
        mk = rho_cols[k] >= 0
        a[rho_cols[k, mk]] = bn[k, mk]
        if gamma[k] == 0:
            blocks.append(Soc(np.zeros((1, n)), np.zeros(1), a, 0.0, f"sinr[{k}]"))
            continue
        sg = math.sqrt(gamma[k])
        parts = []
        for i in range(K):
            Fi = fac[k][i]
            mi = rho_cols[i] >= 0
            if not Fi.shape[0] or not mi.any():
                continue
            M = np.zeros((Fi.shape[0], n))
            M[:, rho_cols[i, mi]] = sg * Fi[:, mi]
            M = M[np.any(M != 0, axis=1)]
            if M.shape[0]:
                parts.append(M)
        U = np.vstack(parts + [np.zeros((1, n))])
        u = np.zeros(U.shape[0])
        u[-1] = sg
        blocks.append(Soc(U, u, a, 0.0, f"sinr[{k}]"))
    return blocks


def _budget_blocks(lay, p_max, z_cols=None, z_vals=None):
    """``||rho'_l|| <= sqrt(p_max) z_l`` (or the plain budget when ``z_cols`` is None)."""
    K, L = lay.rho.shape
    sp = math.sqrt(p_max)
    blocks = []
    for l in range(L):
        cols = lay.rho[:, l][lay.rho[:, l] >= 0]
        if not cols.size:
            continue
        U = np.zeros((cols.size, lay.n))
        U[np.arange(cols.size), cols] = 1.0
        a = np.zeros(lay.n)
        a0 = sp
        if z_cols is not None:
            if z_cols[l] >= 0:
                a[z_cols[l]] = sp
                a0 = 0.0
            else:
                a0 = sp * z_vals[l]
        blocks.append(Soc(U, np.zeros(cols.size), a, a0, f"budget[{l}]"))
    return blocks


def _nonneg_rho(lay):
    cols = lay.rho[lay.rho >= 0]
    F = np.zeros((cols.size, lay.n))
    F[np.arange(cols.size), cols] = 1.0
    return Nonneg(F, np.zeros(cols.size), "rho>=0")


def _rho_from(lay, y):
    rho = np.zeros(lay.rho.shape)
    m = lay.rho >= 0
    rho[m] = np.maximum(y[lay.rho[m]], 0.0)
    return rho


# ----------------------------------------------------------------------------
# results and constraint checking
# ----------------------------------------------------------------------------


@dataclass
class OrchestrationResult:
    alloc: Allocation | None
    total_power: float
    sinr: np.ndarray
    se: np.ndarray
    status: str
    iterations: int = 0
    gap: float = float("nan")
    trace: list = field(default_factory=list)
    breakdown: dict = field(default_factory=dict)
    report: "ConstraintReport | None" = None
    info: dict = field(default_factory=dict)

    @property
    def feasible(self):
        return self.status != INFEASIBLE

    @property
    def sum_se(self):
        return float(np.sum(self.se))


def _infeasible(inst, reason, iterations=0, trace=None, **info):
    K = inst.K
    return OrchestrationResult(
        None, float("nan"), np.zeros(K), np.zeros(K), INFEASIBLE, iterations, trace=list(trace or []), info={"reason": reason, **info}
    )


@dataclass
class ConstraintReport:
    rows: list  # (name, violation, passed)

    @property
    def ok(self):
        return all(p for _, _, p in self.rows)

    def failures(self):
        return [r for r in self.rows if not r[2]]

    def text(self):
        lines = ["constraint                 violation      status"]
        for name, viol, ok in self.rows:
            lines.append(f"{name:<26} {viol:<14.6g} {'PASS' if ok else 'FAIL'}")
        return "\n".join(lines)


def check_constraints(inst: ProblemInstance, alloc: Allocation, sinr_rel=1e-6, budget_rel=1e-9, qos=True):
    """Evaluate every constraint of the mixed-binary power minimization problem.

    Violations are absolute except ``sinr`` (relative to the target) and
    ``oru_budget`` (relative to the budget).
    """
    pp, co = inst.pp, inst.coeffs
    x, z, rho = alloc.x, alloc.z, alloc.rho
    rows = []

    def add(name, viol, limit=0.0):
        viol = float(max(viol, 0.0))
        rows.append((name, viol, viol <= limit))

    if qos:
        sinr, _ = sinr_and_se(inst.stats, rho * x, inst.cfg, sigma2=inst.sigma2)
        rel = np.where(inst.gamma > 0, (inst.gamma - sinr) / np.maximum(inst.gamma, 1e-300), 0.0)
        add("sinr", rel.max(initial=0.0), sinr_rel)
    nz = int(z.sum())
    add("fronthaul_capacity", nz - inst.W_max * inst.W)
    add("activation", max(np.max(x.sum(axis=0) / inst.K - z, initial=0), np.max(z - x.sum(axis=0), initial=0)))
    add("line_cards", max((alloc.n_LC - 1) - nz / inst.W_max, nz / inst.W_max - alloc.n_LC), 1e-12)
    load = co.Z * nz + co.X * float(x.sum()) + co.F
    add("gpp_capacity", (load - pp.C_GPP_max * alloc.n_GPP) / pp.C_GPP_max, 1e-12)
    add("lc_selection", max(1 - alloc.n_LC, alloc.n_LC - inst.W, abs(alloc.n_LC - round(alloc.n_LC))))
    add("gpp_selection", max(1 - alloc.n_GPP, alloc.n_GPP - inst.W, abs(alloc.n_GPP - round(alloc.n_GPP))))
    add("lc_le_gpp", alloc.n_LC - alloc.n_GPP)
    sp = math.sqrt(inst.cfg.p_max)
    add("link_power", max(np.max(rho - sp * x, initial=0), np.max(-rho, initial=0)), 1e-12)
    norms = np.sqrt(np.sum((rho * x) ** 2, axis=0))
    add("oru_budget", np.max((norms - sp * z) / sp, initial=0), budget_rel)
    add("binary_links", float(np.any((x != 0) & (x != 1)) or np.any((z != 0) & (z != 1))))
    add("binary_cloud", float(not (float(alloc.n_LC).is_integer() and float(alloc.n_GPP).is_integer())))
    return ConstraintReport(rows)


def _finish(inst, alloc, status, qos=True, **kw):
    """Evaluate an allocation end to end and package it."""
    sinr, se = sinr_and_se(inst.stats, alloc.rho * alloc.x, inst.cfg, sigma2=inst.sigma2)
    parts = power_breakdown(alloc, inst.pp, inst.coeffs)
    total = power_total(alloc, inst.pp, inst.coeffs)
    report = check_constraints(inst, alloc, qos=qos)
    return OrchestrationResult(alloc, total, sinr, se, status, breakdown=parts, report=report, **kw)


def _dimension(inst, x, rho):
    z = (x.sum(axis=0) > 0).astype(np.int64)
    if z.sum() > inst.W_max * inst.W:
        raise CapacityError(f"{z.sum()} active O-RUs exceed fronthaul capacity {inst.W_max}*{inst.W}")
    n_lc, n_gpp = cloud_dimensioning(z, x, inst.coeffs, inst.W_max, inst.pp)
    return Allocation(x.astype(np.int64), z, rho * x, n_lc, n_gpp)


# ----------------------------------------------------------------------------
# fixed-association power allocation
# ----------------------------------------------------------------------------


def power_for_pattern(inst: ProblemInstance, x, tol=SOLVER_TOL):
    """Minimum radiated power for a fixed association; returns ``(rho, status)``."""
    x = np.asarray(x)
    lay = _Layout(inst.K, inst.L)
    m = x != 0
    lay.rho[m] = lay.new(int(m.sum()))
    if np.any((inst.gamma > 0) & ~m.any(axis=1)):
        return None, conic.PRIMAL_INFEASIBLE
    blocks = sinr_soc_rows(inst, inst.gamma, lay.rho, lay.n)
    blocks += _budget_blocks(lay, inst.cfg.p_max)
    if lay.n == 0:
        return np.zeros((inst.K, inst.L)), conic.OPTIMAL
    blocks.append(_nonneg_rho(lay))
    prog = conic.assemble(np.full(lay.n, inst.pp.Delta_tr), np.zeros(lay.n), blocks)
    sol = conic.solve(prog, tol=tol)
    if sol.status == conic.PRIMAL_INFEASIBLE:
        return None, sol.status
    if sol.status != conic.OPTIMAL and sol.primal_residual > 1e-6:
        return None, sol.status
    return _rho_from(lay, sol.x), sol.status


def evaluate_pattern(inst: ProblemInstance, x):
    """True end-to-end power of a fixed association, or ``None`` if infeasible."""
    rho, _ = power_for_pattern(inst, x)
    if rho is None:
        return None
    try:
        alloc = _dimension(inst, np.asarray(x), rho)
    except CapacityError:
        return None
    return alloc, power_total(alloc, inst.pp, inst.coeffs)


# ----------------------------------------------------------------------------
# branch-and-bound
# ----------------------------------------------------------------------------


def _viable_links(inst):
    """Links that could carry a UE alone (needed for single-O-RU service)."""
    bn = inst.bn
    Ckk = np.stack([np.diag(inst.stats.C[k, k].real) for k in range(inst.K)]) / inst.sigma2
    g = inst.gamma[:, None]
    margin = bn**2 - g * Ckk
    with np.errstate(divide="ignore", invalid="ignore"):
        need = np.where(margin > 0, g / margin, np.inf)
    return (margin > 0) & (need <= inst.cfg.p_max * (1 + 1e-9))


def _relaxation(inst, fixed, small_cell):
    """Continuous relaxation with association fixings ``fixed`` (K x L of -1/0/1)."""
    K, L = inst.K, inst.L
    pp, co = inst.pp, inst.coeffs
    s = pp.sigma_cool
    sp = math.sqrt(inst.cfg.p_max)
    lay = _Layout(K, L)
    free_link = fixed != 0
    lay.rho[free_link] = lay.new(int(free_link.sum()))
    x_cols = -np.ones((K, L), dtype=np.int64)
    x_vals = (fixed == 1).astype(float)
    fx = fixed == -1
    x_cols[fx] = lay.new(int(fx.sum()))
    z_cols = -np.ones(L, dtype=np.int64)
    z_vals = np.zeros(L)
    on = (fixed == 1).any(axis=0)
    z_vals[on] = 1.0
    undecided = ~on & fx.any(axis=0)
    z_cols[undecided] = lay.new(int(undecided.sum()))
    c_lc, c_gpp = lay.new(2)

    forced_z = float(on.sum())
    forced_x = float((fixed == 1).sum())
    lc_lb = max(1, math.ceil(forced_z / inst.W_max - 1e-12))
    gpp_lb = max(lc_lb, math.ceil((co.Z * forced_z + co.X * forced_x + co.F) / pp.C_GPP_max - 1e-12))
    if lc_lb > inst.W or gpp_lb > inst.W or forced_z > inst.W_max * inst.W:
        return None

    rows = []
    for k in range(K):
        for l in range(L):
            if lay.rho[k, l] >= 0:
                # 0 <= rho <= sqrt(p) x
                rows.append(lay.row([(lay.rho[k, l], 1.0)]))
                if x_cols[k, l] >= 0:
                    rows.append(lay.row([(x_cols[k, l], sp), (lay.rho[k, l], -1.0)]))
            if x_cols[k, l] >= 0:
                rows.append(lay.row([(x_cols[k, l], 1.0)]))
                rows.append(lay.row([(x_cols[k, l], -1.0)], 1.0))
                if z_cols[l] >= 0:
                    rows.append(lay.row([(z_cols[l], 1.0), (x_cols[k, l], -1.0)]))
    for l in range(L):
        if z_cols[l] >= 0:
            rows.append(lay.row([(z_cols[l], -1.0)], 1.0))
            rows.append(lay.row([(x_cols[k, l], 1.0) for k in range(K)] + [(z_cols[l], -1.0)], float(x_vals[:, l].sum())))
    zsum = [(z_cols[l], 1.0) for l in range(L) if z_cols[l] >= 0]
    rows.append(lay.row([(c, -1.0) for c, _ in zsum], inst.W_max * inst.W - forced_z))
    rows.append(lay.row([(c_lc, 1.0)] + [(c, -1.0 / inst.W_max) for c, _ in zsum], -forced_z / inst.W_max))
    rows.append(lay.row([(c_lc, 1.0)], -lc_lb))
    rows.append(lay.row([(c_lc, -1.0)], inst.W))
    load_pairs = [(c, -co.Z) for c, _ in zsum] + [(x_cols[k, l], -co.X) for k in range(K) for l in range(L) if x_cols[k, l] >= 0]
    rows.append(lay.row([(c_gpp, pp.C_GPP_max)] + load_pairs, -(co.Z * forced_z + co.X * forced_x + co.F)))
    rows.append(lay.row([(c_gpp, 1.0), (c_lc, -1.0)]))
    rows.append(lay.row([(c_gpp, 1.0)], -gpp_lb))
    rows.append(lay.row([(c_gpp, -1.0)], inst.W))
    F, g = _stack(rows, lay.n)
    blocks = [Nonneg(F, g, "linear")]
    blocks += sinr_soc_rows(inst, inst.gamma, lay.rho, lay.n)
    blocks += _budget_blocks(lay, inst.cfg.p_max, z_cols, z_vals)
    if small_cell:
        E = np.zeros((K, lay.n))
        e = np.ones(K)
        for k in range(K):
            for l in range(L):
                if x_cols[k, l] >= 0:
                    E[k, x_cols[k, l]] = 1.0
            e[k] -= x_vals[k].sum()
        keep = np.any(E != 0, axis=1)
        if np.any(~keep & (np.abs(e) > 1e-12)):
            return None
        if keep.any():
            blocks.append(Zero(E[keep], e[keep], "single_oru"))

    q = np.zeros(lay.n)
    q[lay.rho[lay.rho >= 0]] = pp.Delta_tr
    c = np.zeros(lay.n)
    c[z_cols[z_cols >= 0]] = inst.per_oru
    c[x_cols[x_cols >= 0]] = inst.per_link
    c[c_lc] = pp.P_OLT / s
    c[c_gpp] = pp.P_GPP0_proc / s
    c0 = inst.constant + inst.per_oru * forced_z + inst.per_link * forced_x
    prog = conic.assemble(q, c, blocks, c0)
    return prog, lay, x_cols, x_vals


def solve_exact(inst: ProblemInstance, small_cell=False, gap_tol=1e-6, max_nodes=None, time_limit=None, first_feasible=False):
    """Branch-and-bound over the association binaries.

    Nodes are explored depth first until an incumbent exists, then by best
    bound. Pruning uses ``bound >= incumbent - gap_tol * max(1, |incumbent|)``.
    With ``first_feasible`` the search stops at the first feasible leaf
    (used to decide feasibility only).
    """
    K, L = inst.K, inst.L
    t0 = time.perf_counter()
    fixed0 = -np.ones((K, L), dtype=np.int64)
    if small_cell:
        fixed0[~_viable_links(inst)] = 0
        if np.any((fixed0 == 0).all(axis=1) & (inst.gamma > 0)):
            return _infeasible(inst, "no O-RU can serve some UE alone", nodes=0)
    incumbent = None  # (value, alloc)
    seen = {}

    def try_pattern(x):
        key = x.astype(np.int8).tobytes()
        if key not in seen:
            if small_cell and np.any(x.sum(axis=1) != 1):
                seen[key] = None
            else:
                seen[key] = evaluate_pattern(inst, x)
        return seen[key]

    def offer(x):
        nonlocal incumbent
        res = try_pattern(x)
        if res is not None and (incumbent is None or res[1] < incumbent[0] - 1e-12):
            incumbent = (res[1], res[0])

    counter = 0
    open_nodes = [(-math.inf, 0, fixed0)]  # (parent bound, seq, fixings)
    nodes = 0
    root_infeasible = False
    limit_hit = False
    while open_nodes:
        if incumbent is not None and first_feasible:
            break
        if (max_nodes is not None and nodes >= max_nodes) or (time_limit is not None and time.perf_counter() - t0 > time_limit):
            limit_hit = True
            break
        if incumbent is None:
            parent_bound, _, fixed = open_nodes.pop()
        else:
            heapq.heapify(open_nodes)
            parent_bound, _, fixed = heapq.heappop(open_nodes)
            if parent_bound >= incumbent[0] - gap_tol * max(1.0, abs(incumbent[0])):
                open_nodes = []
                break
        nodes += 1
        built = _relaxation(inst, fixed, small_cell)
        if built is None:
            root_infeasible |= nodes == 1
            continue
        prog, lay, x_cols, x_vals = built
        sol = conic.solve(prog, tol=SOLVER_TOL)
        if sol.status == conic.PRIMAL_INFEASIBLE:
            root_infeasible |= nodes == 1
            continue
        converged = sol.status == conic.OPTIMAL
        bound = max(parent_bound, sol.objective) if converged else parent_bound
        if incumbent is not None and bound >= incumbent[0] - gap_tol * max(1.0, abs(incumbent[0])):
            continue
        xr = x_vals.copy()
        m = x_cols >= 0
        xr[m] = np.clip(sol.x[x_cols[m]], 0.0, 1.0)
        free = fixed == -1
        if not free.any():
            offer(fixed.copy())
            continue
        # rounding heuristics
        offer((xr > 0.5).astype(np.int64))
        if small_cell:
            pick = np.zeros_like(fixed)
            pick[np.arange(K), np.argmax(np.where(fixed != 0, xr, -1.0), axis=1)] = 1
            offer(pick)
        else:
            offer((xr > 1e-6).astype(np.int64))
        frac = np.where(free, np.abs(xr - 0.5), np.inf)
        k, l = np.unravel_index(int(np.argmin(frac)), frac.shape)
        first = 1 if xr[k, l] >= 0.5 else 0
        for val in (1 - first, first):  # the preferred child is pushed last, popped first
            child = fixed.copy()
            child[k, l] = val
            if small_cell and val == 1:
                child[k, child[k] == -1] = 0
            counter += 1
            open_nodes.append((bound, counter, child))

    best_open = min((b for b, _, _ in open_nodes), default=math.inf)
    info = {"nodes": nodes, "wall_time": time.perf_counter() - t0, "limit_hit": limit_hit}
    if incumbent is None:
        reason = "root relaxation infeasible" if root_infeasible else "all leaves pruned or infeasible"
        if limit_hit:
            reason = "search limit reached before a feasible point was found"
        return _infeasible(inst, reason, iterations=nodes, **info)
    value, alloc = incumbent
    gap = max(0.0, value - best_open) if open_nodes else 0.0
    status = OPTIMAL if not open_nodes and not first_feasible else FEASIBLE
    res = _finish(inst, alloc, status, iterations=nodes, gap=gap, info=info)
    return res


def enumerate_patterns(inst: ProblemInstance, small_cell=False):
    """Exhaustive search over all association patterns (tiny instances only)."""
    K, L = inst.K, inst.L
    best = None
    for bits in range(1 << (K * L)):
        x = np.array([(bits >> j) & 1 for j in range(K * L)], dtype=np.int64).reshape(K, L)
        if small_cell and np.any(x.sum(axis=1) != 1):
            continue
        res = evaluate_pattern(inst, x)
        if res is not None and (best is None or res[1] < best[1]):
            best = res
    return best


# ----------------------------------------------------------------------------
# concave surrogate
# ----------------------------------------------------------------------------


def surrogate_f(v, alpha):
    """Smooth count of nonzeros, ``sum(1 - exp(-alpha v))``."""
    v = np.asarray(v, dtype=float)
    return float(np.sum(-np.expm1(-alpha * v)))


def grad_f(v, alpha):
    return alpha * np.exp(-alpha * np.asarray(v, dtype=float))


@dataclass
class CcpConfig:
    alpha_z: float = 20.0
    alpha_rho: float = 20.0
    epsilon: float = 1e-3
    max_iter: int = 50
    zeta: float | None = None  # defaults to 1e-3 * sqrt(p_max)
    init_z: float = 1.0
    init_rho: float | None = None  # defaults to sqrt(p_max / K)

    def __post_init__(self):
        if self.alpha_z <= 0 or self.alpha_rho <= 0 or self.epsilon <= 0 or self.max_iter < 1:
            raise ValueError("alpha, epsilon and max_iter must be positive")

    @property
    def alpha(self):
        return self.alpha_z

    def zeta_for(self, p_max):
        return 1e-3 * math.sqrt(p_max) if self.zeta is None else self.zeta

    def rho0_for(self, p_max, K):
        return math.sqrt(p_max / K) if self.init_rho is None else self.init_rho


def ccp_objective(inst, z, rho, ccp: CcpConfig):
    """Smoothed power objective (without constant terms)."""
    return (
        inst.A_z * surrogate_f(z, ccp.alpha_z)
        + inst.A_rho * surrogate_f(rho, ccp.alpha_rho)
        + inst.pp.Delta_tr * float(np.sum(rho**2))
    )


def _smooth_layout(inst):
    lay = _Layout(inst.K, inst.L)
    lay.rho[:] = lay.new(inst.K * inst.L).reshape(inst.K, inst.L)
    z_cols = lay.new(inst.L)
    return lay, z_cols


def phase_one(inst):
    """Power allocation meeting every target with all links allowed, or ``(None, status)``."""
    return power_for_pattern(inst, np.ones((inst.K, inst.L), dtype=np.int64))


def qos_feasible(inst):
    """Whether the cell-free QoS problem has any feasible point."""
    if inst.L > inst.W_max * inst.W:
        # every O-RU may be needed only if it fits; fall back to the full search
        return solve_exact(inst, first_feasible=True).feasible
    return phase_one(inst)[0] is not None


def ccp_power_min(inst: ProblemInstance, ccp: CcpConfig | None = None):
    """Concave-convex procedure on the smoothed power minimization problem."""
    ccp = ccp or CcpConfig()
    K, L = inst.K, inst.L
    p_max = inst.cfg.p_max
    rho_feas, status = phase_one(inst)
    if rho_feas is None:
        return _infeasible(inst, f"targets unreachable even with every link ({status})")
    lay, z_cols = _smooth_layout(inst)
    n = lay.n
    base = sinr_soc_rows(inst, inst.gamma, lay.rho, n)
    base += _budget_blocks(lay, p_max, z_cols)
    base += _budget_blocks(lay, p_max)
    F = np.zeros((K * L + L, n))
    F[np.arange(K * L + L), np.arange(K * L + L)] = 1.0
    base.append(Nonneg(F, np.zeros(K * L + L), "nonneg"))
    q = np.zeros(n)
    q[lay.rho.ravel()] = inst.pp.Delta_tr

    z = np.full(L, float(ccp.init_z))
    rho = np.full((K, L), ccp.rho0_for(p_max, K))
    trace = []
    best = None
    converged = False
    it = 0
    for it in range(1, ccp.max_iter + 1):
        c = np.zeros(n)
        c[z_cols] = inst.A_z * grad_f(z, ccp.alpha_z)
        c[lay.rho.ravel()] = inst.A_rho * grad_f(rho, ccp.alpha_rho).ravel()
        sol = conic.solve(conic.assemble(q, c, base), tol=SOLVER_TOL)
        if sol.status != conic.OPTIMAL and sol.primal_residual > 1e-7:
            break
        rho_new = _rho_from(lay, sol.x)
        z_new = np.maximum(sol.x[z_cols], 0.0)
        val = ccp_objective(inst, z_new, rho_new, ccp)
        if best is not None and val > best[0]:
            # no further descent: keep the best iterate (ends the procedure)
            converged = True
            break
        improvement = math.inf if best is None else best[0] - val
        best = (val, z_new, rho_new)
        trace.append(val)
        z, rho = z_new, rho_new
        if improvement < ccp.epsilon:
            converged = True
            break
    if best is None:
        return _infeasible(inst, "first convex step failed", iterations=it)
    res = finalize_allocation(best[2], best[1], inst, ccp.zeta_for(p_max))
    res.trace = trace
    res.iterations = it
    if res.status != INFEASIBLE:
        res.status = STATIONARY if converged else FEASIBLE
    return res


def finalize_allocation(rho_last, z_last, inst: ProblemInstance, zeta, retry=True):
    """Threshold the smoothed solution, re-optimize powers and dimension the cloud."""
    x = (np.asarray(rho_last) > zeta).astype(np.int64)
    rho, status = power_for_pattern(inst, x)
    if rho is None:
        if retry:
            res = finalize_allocation(rho_last, z_last, inst, zeta / 10, retry=False)
            res.info["zeta_retry"] = True
            return res
        return _infeasible(inst, f"thresholded association infeasible ({status})")
    try:
        alloc = _dimension(inst, x, rho)
    except CapacityError as exc:
        return _infeasible(inst, str(exc))
    res = _finish(inst, alloc, FEASIBLE)
    res.info["zeta"] = zeta
    return res


# ----------------------------------------------------------------------------
# sum-SE / power trade-off
# ----------------------------------------------------------------------------


def sinr_denominators(inst, rho):
    """Normalized ``sum_i rho_i' C_ki rho_i + (b_k' rho_k)^2 + 1`` and ``b_k' rho_k``."""
    Cn = inst.stats.C.real / inst.sigma2
    interf = np.einsum("kilm,il,im->k", Cn, rho, rho)
    t = np.sum(inst.bn * rho, axis=1)
    return interf + t**2 + 1.0, t


def optimal_chi(inst, rho):
    """Maximizer over chi of the fractional-programming inner expression: the SINR itself."""
    D, t = sinr_denominators(inst, rho)
    return t**2 / (D - t**2)


def fp_inner(chi, sinr):
    """``ln(1+chi) - chi + (1+chi) * sinr/(1+sinr)``; maximized at ``chi = sinr``."""
    return np.log1p(chi) - chi + (1 + chi) * sinr / (1 + sinr)


def sum_se_objective(inst, z, rho, chi, u, r, lam, ccp):
    t = np.sum(inst.bn * rho, axis=1)
    return ccp_objective(inst, z, rho, ccp) + lam * float(np.sum(np.log(u)) + np.sum(chi) - np.sum(t**2 / r))


def ratio_cone_rows(inst, lay, chi_cols, u_cols, r_cols):
    """Second-order cone rows for ``D_k <= (1+chi_k) r_k`` and ``u_k (1+chi_k) >= 1``.

    Uses ``||(2 v, c - d)|| <= c + d  <=>  v'v <= c d`` with ``c = 1 + chi``.
    """
    K = inst.K
    n = lay.n
    fac, bn = inst.factors, inst.bn
    blocks = []
    for k in range(K):
        parts = []
        for i in range(K):
            Fi = fac[k][i]
            if Fi.shape[0]:
                M = np.zeros((Fi.shape[0], n))
                M[:, lay.rho[i]] = 2.0 * Fi
                parts.append(M)
        M = np.zeros((3, n))
        M[0, lay.rho[k]] = 2.0 * bn[k]
        # row 1 is the constant 2*sigma (normalized to 2)
        M[2, chi_cols[k]] = 1.0
        M[2, r_cols[k]] = -1.0
        U = np.vstack(parts + [M])
        u = np.zeros(U.shape[0])
        u[-2] = 2.0
        u[-1] = 1.0
        a = np.zeros(n)
        a[chi_cols[k]] = 1.0
        a[r_cols[k]] = 1.0
        blocks.append(Soc(U, u, a, 1.0, f"ratio[{k}]"))
        U2 = np.zeros((2, n))
        U2[0, chi_cols[k]] = 1.0
        U2[0, u_cols[k]] = -1.0
        a2 = np.zeros(n)
        a2[chi_cols[k]] = 1.0
        a2[u_cols[k]] = 1.0
        blocks.append(Soc(U2, np.array([1.0, 2.0]), a2, 1.0, f"inverse[{k}]"))
    return blocks


def ccp_sum_se(inst: ProblemInstance, lam, ccp: CcpConfig | None = None):
    """Minimize power minus ``lam`` times the sum of ``ln(1 + SINR_k)``.

    After every convex step the auxiliaries are reset to their optimal values
    for the new powers (``chi = SINR``, ``u = 1/(1+chi)``, ``r = D/(1+chi)``),
    which never increases the objective.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    ccp = ccp or CcpConfig()
    K, L = inst.K, inst.L
    p_max = inst.cfg.p_max
    lay, z_cols = _smooth_layout(inst)
    chi_cols, u_cols, r_cols = lay.new(K), lay.new(K), lay.new(K)
    n = lay.n
    blocks = ratio_cone_rows(inst, lay, chi_cols, u_cols, r_cols)
    blocks += _budget_blocks(lay, p_max, z_cols)
    blocks += _budget_blocks(lay, p_max)
    nn = K * L + L + K
    F = np.zeros((nn, n))
    F[np.arange(K * L + L), np.arange(K * L + L)] = 1.0
    F[np.arange(K * L + L, nn), chi_cols] = 1.0
    blocks.append(Nonneg(F, np.zeros(nn), "nonneg"))
    q = np.zeros(n)
    q[lay.rho.ravel()] = inst.pp.Delta_tr

    def aux(rho):
        D, t = sinr_denominators(inst, rho)
        chi = t**2 / (D - t**2)
        return chi, 1.0 / (1.0 + chi), D / (1.0 + chi)

    z = np.full(L, float(ccp.init_z))
    rho = np.full((K, L), ccp.rho0_for(p_max, K))
    chi, u, r = aux(rho)
    start = sum_se_objective(inst, z, rho, chi, u, r, lam, ccp)
    trace = [start]
    tight = np.nan
    converged = False
    it = 0
    for it in range(1, ccp.max_iter + 1):
        t = np.sum(inst.bn * rho, axis=1)
        c = np.zeros(n)
        c[z_cols] = inst.A_z * grad_f(z, ccp.alpha_z)
        c[lay.rho.ravel()] = (inst.A_rho * grad_f(rho, ccp.alpha_rho) - lam * (2 * t / r)[:, None] * inst.bn).ravel()
        c[chi_cols] = lam
        c[u_cols] = lam / u
        c[r_cols] = lam * t**2 / r**2
        sol = conic.solve(conic.assemble(q, c, blocks), tol=SOLVER_TOL)
        if sol.status != conic.OPTIMAL and sol.primal_residual > 1e-7:
            break
        y = sol.x
        rho_new = _rho_from(lay, y)
        z_new = np.maximum(y[z_cols], 0.0)
        raw = (np.maximum(y[chi_cols], 0.0), y[u_cols], y[r_cols])
        chi_n, u_n, r_n = aux(rho_new)
        val = sum_se_objective(inst, z_new, rho_new, chi_n, u_n, r_n, lam, ccp)
        if val > trace[-1]:
            converged = True
            break
        tight = _tightness_residual(inst, rho_new, *raw)
        improvement = trace[-1] - val
        trace.append(val)
        z, rho, chi, u, r = z_new, rho_new, chi_n, u_n, r_n
        if improvement < ccp.epsilon:
            converged = True
            break
    zeta = ccp.zeta_for(p_max)
    x = (rho > zeta).astype(np.int64)
    rho_f = rho * x
    try:
        alloc = _dimension(inst, x, rho_f)
    except CapacityError as exc:
        return _infeasible(inst, str(exc), iterations=it, trace=trace)
    res = _finish(inst, alloc, STATIONARY if converged else FEASIBLE, qos=False, iterations=it, trace=trace)
    res.info.update({"lambda": lam, "tightness_residual": tight, "zeta": zeta})
    return res


def _tightness_residual(inst, rho, chi, u, r):
    """Largest relative slack of the two auxiliary cone rows for served UEs."""
    D, t = sinr_denominators(inst, rho)
    served = t > 1e-9 * np.sqrt(D)
    if not served.any():
        return 0.0
    s1 = ((1 + chi) * r - D) / np.maximum(D, 1e-300)
    s2 = u * (1 + chi) - 1.0
    return float(max(np.max(np.abs(s1[served])), np.max(np.abs(s2[served]))))


# ----------------------------------------------------------------------------
# benchmark accounting schemes
# ----------------------------------------------------------------------------


def round_robin_map(L, W_max):
    """O-RU ``l`` goes to wavelength ``l // W_max``."""
    return np.arange(L) // W_max


def permuted_map(L, W_max, rng):
    order = rng.permutation(L)
    wl = np.empty(L, dtype=np.int64)
    wl[order] = np.arange(L) // W_max
    return wl


def _check_map(wavelength_map, L, W_max):
    wl = np.asarray(wavelength_map, dtype=np.int64)
    if wl.shape != (L,):
        raise ValueError("wavelength map must assign every O-RU")
    counts = np.bincount(wl)
    if counts.max(initial=0) > W_max:
        raise ValueError(f"a wavelength carries {counts.max()} O-RUs, capacity is {W_max}")
    return wl


def _scheme_total(inst, alloc, n_lc, n_gpp):
    a = Allocation(alloc.x, alloc.z, alloc.rho, n_lc, n_gpp)
    parts = power_breakdown(a, inst.pp, inst.coeffs)
    return float(sum(parts.values())), parts


def local_coordination_counts(inst, alloc, wavelength_map):
    wl = _check_map(wavelength_map, inst.L, inst.W_max)
    co, pp = inst.coeffs, inst.pp
    n_lc = n_gpp = 0
    f_left = co.F
    for g in np.unique(wl):
        members = wl == g
        active = int(alloc.z[members].sum())
        if not active:
            continue
        load = co.Z * active + co.X * float(alloc.x[:, members].sum()) + f_left
        f_left = 0.0
        n_lc += 1
        n_gpp += max(1, math.ceil(load / pp.C_GPP_max - 1e-12))
    return max(n_lc, 1), max(n_gpp, 1)


def radio_only_counts(inst, alloc, wavelength_map, links_per_oru=None):
    """Line cards follow activity; GPPs stay provisioned for an all-active network.

    The provisioning load of a group assumes every member active and serving
    ``links_per_oru`` UEs (default ``ceil(K / L)``). A group never gets fewer
    GPPs than its actual load requires.
    """
    wl = _check_map(wavelength_map, inst.L, inst.W_max)
    co, pp = inst.coeffs, inst.pp
    links = math.ceil(inst.K / inst.L) if links_per_oru is None else links_per_oru
    n_lc = n_gpp = 0
    f_left = co.F
    for g in np.unique(wl):
        members = wl == g
        size = int(members.sum())
        prov = co.Z * size + co.X * links * size + f_left
        actual = co.Z * int(alloc.z[members].sum()) + co.X * float(alloc.x[:, members].sum()) + f_left
        f_left = 0.0
        n_gpp += max(1, math.ceil(max(prov, actual) / pp.C_GPP_max - 1e-12))
        n_lc += int(alloc.z[members].any())
    return max(n_lc, 1), n_gpp


def account_local_coordination(result: OrchestrationResult, inst: ProblemInstance, wavelength_map):
    """Total power when GPPs are shared only among O-RUs on the same wavelength."""
    n_lc, n_gpp = local_coordination_counts(inst, result.alloc, wavelength_map)
    return _scheme_total(inst, result.alloc, n_lc, n_gpp)


def account_radio_only(result: OrchestrationResult, inst: ProblemInstance, wavelength_map, links_per_oru=None):
    """Total power with cloud resources provisioned for all O-RUs; only radios and LCs sleep."""
    n_lc, n_gpp = radio_only_counts(inst, result.alloc, wavelength_map, links_per_oru)
    return _scheme_total(inst, result.alloc, n_lc, n_gpp)
