import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfran import conic as C

cp = pytest.importorskip("cvxpy")


def random_program(rng, with_eq=None):
    n = int(rng.integers(2, 20))
    x0 = rng.normal(size=n)
    blocks = [C.Nonneg(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([3 - x0, 3 + x0]), "box")]
    X = cp.Variable(n)
    cons = [X >= x0 - 3, X <= x0 + 3]
    for j in range(int(rng.integers(1, 5))):
        k = int(rng.integers(1, 6))
        U, u, a = rng.normal(size=(k, n)), rng.normal(size=k), rng.normal(size=n)
        a0 = np.linalg.norm(U @ x0 + u) - a @ x0 + rng.uniform(0.1, 2)
        blocks.append(C.Soc(U, u, a, a0, f"soc{j}"))
        cons.append(cp.norm(U @ X + u) <= a @ X + a0)
    if with_eq if with_eq is not None else rng.random() < 0.5:
        E = rng.normal(size=(2, n))
        blocks.append(C.Zero(E, E @ x0, "eq"))
        cons.append(E @ X == E @ x0)
    q = rng.uniform(0, 2, size=n) * (rng.random(n) < 0.5)
    c = rng.normal(size=n)
    prog = C.assemble(q, c, blocks)
    ref = cp.Problem(cp.Minimize(q @ cp.square(X) + c @ X), cons)
    return prog, ref


def test_norm_epigraph():
    # min t  s.t. ||(3, 4)|| <= t
    prog = C.assemble(None, [1.0], [C.Soc(np.zeros((2, 1)), [3.0, 4.0], [1.0], 0.0)])
    sol = C.solve(prog, tol=1e-9)
    assert sol.ok
    assert sol.objective == pytest.approx(5.0, abs=1e-7)


def test_quadratic_with_bound():
    prog = C.assemble([1.0], [0.0], [C.Nonneg([[1.0]], [-2.0])])
    sol = C.solve(prog, tol=1e-9)
    assert sol.ok
    assert sol.x[0] == pytest.approx(2.0, abs=1e-7)
    assert sol.objective == pytest.approx(4.0, abs=1e-7)


def test_scalar_soc_closed_form():
    # min y^2 + 0.1 y  s.t. |y - 3| ... written as ||(1.5)|| <= y + 0.6  -> y >= 0.9
    prog = C.assemble([1.0], [0.1], [C.Soc(np.zeros((1, 1)), [1.5], [1.0], 0.6)])
    sol = C.solve(prog, tol=1e-9)
    assert sol.ok
    assert sol.x[0] == pytest.approx(0.9, abs=1e-7)
    assert sol.objective == pytest.approx(0.81 + 0.09, abs=1e-7)


def test_infeasible_and_unbounded():
    infeas = C.assemble(None, [1.0], [C.Nonneg([[1.0], [-1.0]], [-1.0, 0.0])])
    assert C.solve(infeas).status == C.PRIMAL_INFEASIBLE
    unb = C.assemble(None, [1.0], [C.Nonneg([[-1.0]], [0.0])])
    assert C.solve(unb).status == C.UNBOUNDED


def test_equality_only():
    prog = C.assemble(None, [0.0, 0.0], [C.Zero([[1.0, 1.0]], [2.0])])
    sol = C.solve(prog)
    assert sol.ok
    assert sol.x.sum() == pytest.approx(2.0)


@pytest.mark.parametrize("seed", range(15))
def test_matches_reference_solver(seed):
    rng = np.random.default_rng(seed)
    prog, ref = random_program(rng)
    sol = C.solve(prog, tol=1e-9)
    ref.solve(solver="CLARABEL")
    assert sol.ok
    assert sol.objective == pytest.approx(ref.value, rel=1e-7, abs=1e-7)
    assert C.residuals(prog, sol.x)["max_violation"] <= 1e-7
    # reported objective is the re-evaluation at the returned point
    assert sol.objective == pytest.approx(prog.objective(sol.x), rel=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_deterministic(seed):
    prog, _ = random_program(np.random.default_rng(100 + seed))
    a, b = C.solve(prog), C.solve(prog)
    assert np.array_equal(a.x, b.x)
    assert a.iterations == b.iterations


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(1e-3, 1e3))
def test_objective_scale_invariance(seed, scale):
    prog, _ = random_program(np.random.default_rng(seed), with_eq=False)
    scaled = C.ConeProgram(prog.n, prog.q * scale, prog.c * scale, prog.blocks, prog.c0 * scale)
    a, b = C.solve(prog, tol=1e-9), C.solve(scaled, tol=1e-9)
    assert a.ok and b.ok
    assert b.objective / scale == pytest.approx(a.objective, rel=1e-6, abs=1e-6)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_optimal_beats_feasible_points(seed):
    # any feasible point has objective >= the reported optimum (up to tolerance)
    rng = np.random.default_rng(seed)
    prog, _ = random_program(rng)
    sol = C.solve(prog, tol=1e-9)
    assert sol.ok
    for _ in range(20):
        y = sol.x + 0.3 * rng.normal(size=prog.n)
        if C.residuals(prog, y)["max_violation"] == 0.0:
            assert prog.objective(y) >= sol.objective - 1e-7


def test_epigraph_adds_one_cone():
    prog, _ = random_program(np.random.default_rng(3), with_eq=True)
    prog.q[0] = 1.0
    epi = C.epigraph_form(prog)
    assert epi.n == prog.n + 1
    assert epi.count(C.Soc) == prog.count(C.Soc) + 1
    assert not np.any(epi.q)
    assert C.assemble(prog.q, prog.c, prog.blocks, epigraph=True).n == prog.n + 1


def test_epigraph_cone_is_exact():
    # ||(2 sqrt(q) y, t - 1)|| <= t + 1  <=>  q y^2 <= t
    rng = np.random.default_rng(0)
    for _ in range(200):
        q, y = rng.uniform(0.1, 3), rng.normal()
        t = q * y * y
        lhs = np.hypot(2 * np.sqrt(q) * y, t - 1)
        assert lhs == pytest.approx(t + 1, rel=1e-12, abs=1e-12)


def test_dump_load_roundtrip():
    prog, _ = random_program(np.random.default_rng(7), with_eq=True)
    text = C.dump(prog)
    back = C.load(text)
    assert C.dump(back) == text
    assert back.n == prog.n
    np.testing.assert_array_equal(back.c, prog.c)
    a, b = C.solve(prog), C.solve(back)
    assert a.objective == b.objective


def test_dimension_errors():
    with pytest.raises(C.DimensionError):
        C.assemble(None, [1.0, 2.0], [C.Nonneg([[1.0]], [0.0])])
    with pytest.raises(ValueError):
        C.assemble([-1.0], [1.0], [])
    with pytest.raises(ValueError):
        C.load("garbage\n")


def test_residual_report_names_blocks():
    prog = C.assemble(None, [1.0], [C.Nonneg([[1.0]], [-2.0], "lower"), C.Nonneg([[-1.0]], [5.0], "upper")])
    rep = C.residuals(prog, [1.0])
    assert rep["blocks"][0] == ("lower", 1.0)
    assert rep["blocks"][1] == ("upper", 0.0)
    assert rep["max_violation"] == 1.0


def test_max_iterations_returns_best_iterate():
    prog, _ = random_program(np.random.default_rng(5))
    sol = C.solve(prog, max_iter=2)
    assert sol.status == C.MAX_ITERATIONS
    assert np.all(np.isfinite(sol.x))
    assert sol.iterations == 2
