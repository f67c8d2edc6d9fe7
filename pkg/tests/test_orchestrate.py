import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfran import conic
from cfran import orchestrate as O
from cfran.powermodel import Allocation, PowerParams, power_total
from cfran.sysmodel import SystemConfig, sinr_and_se

from conftest import random_stats, scalar_stats, table_stats

CFG = SystemConfig()


def inst_for(stats, se=None, gamma=None, split="8", cfg=CFG, **kw):
    return O.make_instance(stats, cfg, split, se_target=se, gamma=gamma, **kw)


def soc_value(block, y):
    """(rhs, ||lhs||) of an SOC block at y."""
    return block.a @ y + block.a0, np.linalg.norm(block.U @ y + block.u)


# ---------------------------------------------------------------------------
# SINR cone rows


def test_zero_target_block_is_linear():
    stats = scalar_stats(2.0, 0.5)
    (blk,) = O.sinr_soc_rows(stats, [0.0], np.array([[0]]), 1)
    assert np.allclose(blk.U, 0) and np.allclose(blk.u, 0)
    rhs, lhs = soc_value(blk, np.array([0.3]))
    assert lhs == 0 and rhs > 0


def test_scalar_block_threshold():
    b, c, s2, g = 2.0, 0.5, 0.3, 1.5
    stats = scalar_stats(b, c, s2)
    (blk,) = O.sinr_soc_rows(stats, [g], np.array([[0]]), 1)
    rho_star = math.sqrt(g * s2 / (b**2 - g * c))
    above = soc_value(blk, np.array([rho_star * (1 + 1e-6)]))
    below = soc_value(blk, np.array([rho_star * (1 - 1e-6)]))
    assert above[0] >= above[1] and below[0] < below[1]


def test_block_squares_to_sinr_condition():
    rng = np.random.default_rng(3)
    for _ in range(20):
        K, L = rng.integers(1, 4), rng.integers(1, 4)
        stats = random_stats(rng, K, L)
        rho = rng.uniform(0, 1, (K, L))
        gamma = rng.uniform(0, 2, K)
        cols = np.arange(K * L).reshape(K, L)
        blocks = O.sinr_soc_rows(stats, gamma, cols, K * L)
        sinr, _ = sinr_and_se(stats, rho, sigma2=stats.sigma2)
        interf = np.einsum("kilm,il,im->k", stats.C.real, rho, rho)
        for k, blk in enumerate(blocks):
            rhs, lhs = soc_value(blk, rho.ravel())
            # rhs^2 - lhs^2 = (signal - gamma (interference + noise)) / noise
            expect = (np.sum(stats.b[k] * rho[k]) ** 2 - gamma[k] * (interf[k] + stats.sigma2)) / stats.sigma2
            assert rhs**2 - lhs**2 == pytest.approx(expect, rel=1e-9, abs=1e-9 * rhs**2)
            assert (rhs >= lhs) == (sinr[k] >= gamma[k])


def test_non_psd_interference_rejected():
    stats = scalar_stats(1.0, -0.5)
    with pytest.raises(ValueError, match="PSD"):
        O.sinr_soc_rows(stats, [1.0], np.array([[0]]), 1)


def test_split_that_does_not_fit_is_a_configuration_error():
    with pytest.raises(O.ConfigurationError):
        inst_for(scalar_stats(1.0, 0.1), gamma=[1.0], cfg=SystemConfig(N=14))


# ---------------------------------------------------------------------------
# single link


def scalar_instance(b=2e-4, c=1e-9, gamma=1.0):
    cfg = SystemConfig()
    stats = scalar_stats(b, c, cfg.sigma2)
    return inst_for(stats, gamma=[gamma], cfg=cfg)


def analytic_rho2(inst):
    b, c, s2, g = inst.stats.b[0, 0], inst.stats.C[0, 0, 0, 0].real, inst.sigma2, inst.gamma[0]
    return g * s2 / (b**2 - g * c)


def test_single_link_conic_solve():
    inst = scalar_instance()
    rho, status = O.power_for_pattern(inst, np.ones((1, 1), int))
    assert status == conic.OPTIMAL
    assert rho[0, 0] ** 2 == pytest.approx(analytic_rho2(inst), rel=1e-4)


def test_single_link_ccp_and_finalize():
    inst = scalar_instance()
    res = O.ccp_power_min(inst)
    assert res.status == O.STATIONARY
    assert res.alloc.x.tolist() == [[1]]
    assert res.alloc.rho[0, 0] ** 2 == pytest.approx(analytic_rho2(inst), rel=1e-4)
    fin = O.finalize_allocation(np.array([[0.5]]), np.array([1.0]), inst, 1e-3)
    assert fin.alloc.rho[0, 0] ** 2 == pytest.approx(analytic_rho2(inst), rel=1e-4)


def test_unreachable_target_is_infeasible():
    inst = scalar_instance(gamma=1e9)
    assert O.ccp_power_min(inst).status == O.INFEASIBLE
    assert O.solve_exact(inst).status == O.INFEASIBLE


# ---------------------------------------------------------------------------
# exact solver


@pytest.mark.parametrize("seed", [1, 2])
def test_exact_matches_enumeration(seed):
    inst = inst_for(table_stats(3, 2, seed), se=0.3, pp=PowerParams.for_antennas(4, W=2))
    res = O.solve_exact(inst, gap_tol=1e-10)
    best = O.enumerate_patterns(inst)
    assert best is not None and res.status == O.OPTIMAL
    assert res.total_power == pytest.approx(best[1], abs=1e-6)
    assert res.report.ok


def test_exact_zero_targets_trivial_optimum():
    inst = inst_for(table_stats(3, 2, 1), gamma=0.0)
    res = O.solve_exact(inst)
    pp = inst.pp
    floor = pp.P_fixed + (pp.P_OLT + pp.P_GPP0_proc) / pp.sigma_cool
    assert res.alloc.x.sum() == 0
    assert res.total_power == pytest.approx(floor, abs=1e-9)


def test_exact_picks_the_sufficient_oru():
    # O-RU 0 alone meets the target; O-RU 1 is useless and would only add cost
    cfg = SystemConfig()
    b = np.array([[3e-4, 1e-7]])
    C = np.zeros((1, 1, 2, 2), complex)
    C[0, 0] = np.diag([1e-9, 1e-9])
    from cfran.sysmodel import EffectiveStatistics

    inst = inst_for(EffectiveStatistics(b, C, 1, {}, cfg.sigma2), gamma=[1.0])
    res = O.solve_exact(inst, gap_tol=1e-10)
    assert res.alloc.z.tolist() == [1, 0]
    assert res.total_power == pytest.approx(O.enumerate_patterns(inst)[1], abs=1e-6)


def test_small_cell_costs_at_least_cell_free():
    for seed in (1, 2, 4):
        inst = inst_for(table_stats(3, 2, seed), se=0.3)
        free = O.solve_exact(inst, gap_tol=1e-9)
        small = O.solve_exact(inst, small_cell=True, gap_tol=1e-9)
        if small.feasible:
            assert small.alloc.x.sum(axis=1).tolist() == [1, 1]
            assert small.total_power >= free.total_power - 1e-6
            assert small.total_power == pytest.approx(O.enumerate_patterns(inst, small_cell=True)[1], abs=1e-6)


def test_node_limit_reports_gap():
    inst = inst_for(table_stats(4, 3, 1), se=0.5)
    res = O.solve_exact(inst, max_nodes=2)
    assert res.info["limit_hit"] and res.info["nodes"] == 2
    assert res.status == O.FEASIBLE and res.gap >= 0


# ---------------------------------------------------------------------------
# surrogate


def test_surrogate_basics():
    assert O.surrogate_f(np.zeros(3), 20) == 0
    assert np.allclose(O.grad_f(np.zeros(3), 20), 20)
    v = np.array([0.5, 1.0, 3.0])
    assert abs(O.surrogate_f(v, 20) - 3) < 1e-4


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 2), min_size=1, max_size=6), st.floats(0.5, 30))
def test_surrogate_gradient_central_difference(v, alpha):
    v = np.array(v)
    h = 1e-6
    fd = np.array([(O.surrogate_f(v + h * e, alpha) - O.surrogate_f(v - h * e, alpha)) / (2 * h) for e in np.eye(v.size)])
    assert np.allclose(fd, O.grad_f(v, alpha), atol=1e-6 * max(1.0, alpha**2))


def test_ccp_config_validation():
    with pytest.raises(ValueError):
        O.CcpConfig(alpha_z=0)
    assert O.CcpConfig().zeta_for(4.0) == pytest.approx(2e-3)


# ---------------------------------------------------------------------------
# CCP power minimization


@pytest.fixture(scope="module")
def mid_instance():
    return inst_for(table_stats(8, 4, 3), se=1.0, pp=PowerParams.for_antennas(4, W=2))


def test_ccp_trace_nonincreasing_and_feasible(mid_instance):
    res = O.ccp_power_min(mid_instance)
    assert res.feasible
    assert np.all(np.diff(res.trace) <= 1e-7)
    assert res.report.ok, res.report.text()
    assert np.all(res.sinr >= mid_instance.gamma * (1 - 1e-6))
    assert not res.alloc.violations(CFG.p_max, mid_instance.W_max, mid_instance.W)


def test_ccp_not_below_exact_optimum(mid_instance):
    exact = O.solve_exact(mid_instance)
    ccp = O.ccp_power_min(mid_instance)
    assert exact.status == O.OPTIMAL
    assert ccp.total_power >= exact.total_power - 1e-6 * exact.total_power


def test_finalize_keeps_every_link_above_threshold(mid_instance):
    inst = mid_instance.with_gamma(mid_instance.gamma)
    inst.pp = PowerParams.for_antennas(4)
    K, L = inst.K, inst.L
    res = O.finalize_allocation(np.full((K, L), 0.1), np.ones(L), inst, 1e-3)
    assert res.alloc.x.sum() == K * L
    assert res.report.ok


def test_breakdown_matches_total(mid_instance):
    res = O.ccp_power_min(mid_instance)
    assert sum(res.breakdown.values()) == pytest.approx(res.total_power, abs=1e-9)
    assert res.total_power == pytest.approx(power_total(res.alloc, mid_instance.pp, mid_instance.coeffs))


def test_checker_flags_violations(mid_instance):
    res = O.ccp_power_min(mid_instance)
    a = res.alloc
    names = dict((n, ok) for n, _, ok in O.check_constraints(mid_instance, Allocation(a.x, a.z, a.rho * 0.5, a.n_LC, a.n_GPP)).rows)
    assert not names["sinr"]
    bad = O.check_constraints(mid_instance, Allocation(a.x, a.z, a.rho, a.n_LC + 2, a.n_GPP + 2))
    assert {n for n, _, ok in bad.rows if not ok} >= {"line_cards"}
    assert "FAIL" in bad.text()
    hot = Allocation(a.x, a.z, a.rho * 10, a.n_LC, a.n_GPP)
    assert "oru_budget" in {n for n, _, _ in O.check_constraints(mid_instance, hot).failures()}


# ---------------------------------------------------------------------------
# fractional programming / sum SE


def test_optimal_chi_is_sinr():
    rng = np.random.default_rng(7)
    for _ in range(10):
        stats = random_stats(rng, 3, 4)
        inst = inst_for(stats, gamma=0.0)
        rho = rng.uniform(0, 1, (3, 4))
        sinr, _ = sinr_and_se(stats, rho, sigma2=stats.sigma2)
        assert np.allclose(O.optimal_chi(inst, rho), sinr, rtol=1e-10)
        grid = sinr[0] * np.linspace(0.5, 1.5, 2001)
        assert grid[np.argmax(O.fp_inner(grid, sinr[0]))] == pytest.approx(sinr[0], rel=1e-3)


def test_chi_at_quoted_sinr():
    s = 3.6364
    res = __import__("scipy.optimize", fromlist=["minimize_scalar"]).minimize_scalar(
        lambda c: -O.fp_inner(c, s), bounds=(0, 20), method="bounded", options={"xatol": 1e-10}
    )
    assert res.x == pytest.approx(s, abs=1e-6)


def test_scalar_cone_identity():
    rng = np.random.default_rng(0)
    v, c, d = rng.normal(size=1000), rng.uniform(0, 5, 1000), rng.uniform(0, 5, 1000)
    # ||(2v, c - d)||^2 = (c + d)^2 - 4 (cd - v^2)
    lhs = 4 * v**2 + (c - d) ** 2
    assert np.allclose((c + d) ** 2 - lhs, 4 * (c * d - v**2), atol=1e-9)
    # the sqrt(2)-scaled variant squares to v^2 <= 2cd
    lhs2 = 2 * v**2 + (c - d) ** 2
    assert np.allclose((c + d) ** 2 - lhs2, 2 * (2 * c * d - v**2), atol=1e-9)


def test_ratio_rows_square_to_the_fractional_constraints():
    rng = np.random.default_rng(11)
    stats = random_stats(rng, 2, 3)
    inst = inst_for(stats, gamma=0.0)
    lay, z_cols = O._smooth_layout(inst)
    chi_c, u_c, r_c = lay.new(2), lay.new(2), lay.new(2)
    blocks = O.ratio_cone_rows(inst, lay, chi_c, u_c, r_c)
    for _ in range(50):
        y = rng.uniform(0, 2, lay.n)
        rho = y[: 6].reshape(2, 3)
        D, _ = O.sinr_denominators(inst, rho)
        for k in range(2):
            rhs, lhs = soc_value(blocks[2 * k], y)
            chi, r, u = y[chi_c[k]], y[r_c[k]], y[u_c[k]]
            assert rhs**2 - lhs**2 == pytest.approx(4 * ((1 + chi) * r - D[k]), rel=1e-9, abs=1e-9)
            rhs, lhs = soc_value(blocks[2 * k + 1], y)
            assert rhs**2 - lhs**2 == pytest.approx(4 * ((1 + chi) * u - 1), rel=1e-9, abs=1e-9)


@pytest.fixture(scope="module")
def se_instance():
    return inst_for(table_stats(8, 4, 3), gamma=0.0)


def test_sum_se_descent_and_tightness(se_instance):
    res = O.ccp_sum_se(se_instance, 5.0)
    assert res.status == O.STATIONARY
    assert np.all(np.diff(res.trace) <= 1e-7)
    assert res.info["tightness_residual"] <= 1e-5
    assert res.sum_se > 0
    assert sum(res.breakdown.values()) == pytest.approx(res.total_power)


def test_sum_se_tiny_weight_reaches_floor(se_instance):
    res = O.ccp_sum_se(se_instance, 0.01)
    pp = se_instance.pp
    floor = pp.P_fixed + (pp.P_OLT + pp.P_GPP0_proc) / pp.sigma_cool
    assert abs(res.total_power - floor) <= 0.01 * floor


def test_sum_se_rejects_nonpositive_weight(se_instance):
    with pytest.raises(ValueError):
        O.ccp_sum_se(se_instance, 0.0)


def test_split_72_costs_more_on_same_allocation(se_instance):
    res = O.ccp_sum_se(se_instance, 5.0)
    other = inst_for(se_instance.stats, gamma=0.0, split="7.2")
    assert power_total(res.alloc, other.pp, other.coeffs) > res.total_power


# ---------------------------------------------------------------------------
# accounting schemes


def fake_result(x):
    x = np.asarray(x)
    z = (x.sum(axis=0) > 0).astype(int)
    return O.OrchestrationResult(Allocation(x, z, 0.1 * x), 0.0, None, None, O.FEASIBLE)


def accounting_instance(K, L, split="7.2", **pp):
    rng = np.random.default_rng(0)
    return inst_for(random_stats(rng, K, L), gamma=0.0, split=split, pp=PowerParams.for_antennas(4, **pp))


def e2e_total(inst, res):
    n_lc, n_gpp = O.cloud_dimensioning(res.alloc.z, res.alloc.x, inst.coeffs, inst.W_max, inst.pp)
    a = res.alloc
    return power_total(Allocation(a.x, a.z, a.rho, n_lc, n_gpp), inst.pp, inst.coeffs)


def test_single_wavelength_local_equals_end_to_end():
    inst = accounting_instance(2, 4)
    res = fake_result([[1, 0, 1, 0], [0, 1, 0, 0]])
    total, _ = O.account_local_coordination(res, inst, np.zeros(4, int))
    assert total == pytest.approx(e2e_total(inst, res))


def test_fragmentation_costs_an_extra_gpp():
    inst0 = accounting_instance(2, 4)
    co = inst0.coeffs
    # each group carries one O-RU with one link: 0.4 of a GPP
    inst = accounting_instance(2, 4, C_GPP_max=(co.Z + co.X) / 0.4)
    res = fake_result([[1, 0, 0, 0], [0, 0, 1, 0]])
    wl = np.array([0, 0, 1, 1])
    assert O.local_coordination_counts(inst, res.alloc, wl) == (2, 2)
    assert O.cloud_dimensioning(res.alloc.z, res.alloc.x, inst.coeffs, inst.W_max, inst.pp) == (1, 1)


def test_radio_only_all_active_equals_local():
    inst = accounting_instance(4, 4)
    res = fake_result(np.ones((4, 4), int))
    wl = O.round_robin_map(4, 2)
    assert O.account_radio_only(res, inst, wl)[0] == pytest.approx(O.account_local_coordination(res, inst, wl)[0])


def test_radio_only_inactive_wavelength():
    inst = accounting_instance(2, 4, split="8")
    res = fake_result([[1, 1, 0, 0], [1, 0, 0, 0]])
    wl = np.array([0, 0, 1, 1])
    n_lc, n_gpp = O.radio_only_counts(inst, res.alloc, wl)
    full = fake_result(np.ones((2, 4), int))
    assert n_lc == 1
    assert n_gpp == O.radio_only_counts(inst, full.alloc, wl)[1]


def test_wavelength_map_capacity_checked():
    inst = accounting_instance(2, 8, split="8")  # three O-RUs per wavelength
    with pytest.raises(ValueError, match="capacity"):
        O.account_local_coordination(fake_result(np.ones((2, 8), int)), inst, np.zeros(8, int))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["8", "7.2"]))
def test_scheme_ordering(seed, split):
    rng = np.random.default_rng(seed)
    K, L = int(rng.integers(1, 6)), int(rng.integers(2, 10))
    inst = accounting_instance(K, L, split=split, C_GPP_max=float(rng.uniform(5, 200)), W=64)
    x = (rng.random((K, L)) < rng.uniform(0.1, 0.9)).astype(int)
    res = fake_result(x)
    wl = O.permuted_map(L, inst.W_max, rng)
    e2e = e2e_total(inst, res)
    local = O.account_local_coordination(res, inst, wl)[0]
    radio = O.account_radio_only(res, inst, wl)[0]
    assert e2e <= local + 1e-9 <= radio + 2e-9
