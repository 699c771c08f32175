"""Conic program wrapper against closed forms and scipy."""
import math

import numpy as np
import pytest
from scipy.optimize import linprog

from hcng_trade.conic import (
    ConicProgram,
    InfeasibleModel,
    Lin,
    Lin as L,
    cone_residuals,
    lsum,
    max_cone_slack,
    solve_or_explain,
)


def test_lp_matches_scipy():
    # min 2x + 3y st x + y >= 4, x <= 3, 0 <= x,y <= 10
    prog = ConicProgram("lp")
    x = prog.add_var("x", lb=0.0, ub=10.0)
    y = prog.add_var("y", lb=0.0, ub=10.0)
    prog.add_obj(L.var(x, 2.0) + L.var(y, 3.0))
    prog.add_ineq(L.of(4.0) - L.var(x) - L.var(y), "cover")
    prog.add_ineq(L.var(x) - 3.0, "cap")
    sol = prog.solve()
    assert sol.status == "optimal"

    ref = linprog(
        c=[2.0, 3.0],
        A_ub=[[-1.0, -1.0], [1.0, 0.0]],
        b_ub=[-4.0, 3.0],
        bounds=[(0, 10), (0, 10)],
    )
    assert sol.objective == pytest.approx(ref.fun, abs=1e-6)
    assert sol.value(x) == pytest.approx(ref.x[0], abs=1e-6)


def test_equality_and_fix():
    prog = ConicProgram()
    x = prog.add_var("x")
    y = prog.add_var("y")
    prog.fix(x, 2.5)
    prog.add_eq(L.var(y) - L.var(x, 2.0), "y=2x")
    prog.add_obj(L.var(y))
    sol = prog.solve()
    assert sol.value(x) == pytest.approx(2.5, abs=1e-8)
    assert sol.value(y) == pytest.approx(5.0, abs=1e-7)


def test_square_term_closed_form():
    # min (x - 3)^2 + x  ->  x = 2.5
    prog = ConicProgram()
    x = prog.add_var("x")
    prog.add_square(1.0, L.var(x) - 3.0)
    prog.add_obj(L.var(x))
    sol = prog.solve()
    assert sol.value(x) == pytest.approx(2.5, abs=1e-6)


def test_soc_projection():
    # min x + y st ||(x, y)|| <= sqrt(2), x + y >= -10: corner at x=y=-1
    prog = ConicProgram()
    x = prog.add_var("x")
    y = prog.add_var("y")
    prog.add_obj(L.var(x) + L.var(y))
    prog.add_soc([L.var(x), L.var(y)], L.of(math.sqrt(2.0)), "ball")
    sol = prog.solve()
    assert sol.value(x) == pytest.approx(-1.0, abs=1e-6)
    assert sol.value(y) == pytest.approx(-1.0, abs=1e-6)
    assert max_cone_slack(prog, sol) <= 1e-6


def test_log_pair_splits_evenly():
    # max log(x) + log(10 - x) -> x = 5
    prog = ConicProgram()
    x = prog.add_var("x", lb=0.0, ub=10.0)
    prog.add_log(1.0, L.var(x), margin=1e-9)
    prog.add_log(1.0, L.of(10.0) - L.var(x), margin=1e-9)
    sol = prog.solve()
    assert sol.value(x) == pytest.approx(5.0, abs=1e-5)


def test_penalty_group_tracks_target():
    # rho/2 (x - target)^2 with updatable target: re-solve without recompiling
    prog = ConicProgram()
    x = prog.add_var("x")
    prog.add_penalty_group("pin", [L.var(x)], rho=2.0)
    compiled = prog.compile()
    compiled.set_group("pin", np.array([0.0]), np.array([4.0]))
    assert compiled.solve().value(x) == pytest.approx(4.0, abs=1e-6)
    compiled.set_group("pin", np.array([0.0]), np.array([-1.5]))
    assert compiled.solve().value(x) == pytest.approx(-1.5, abs=1e-6)
    # a linear multiplier shifts the optimum by -mult/rho
    compiled.set_group("pin", np.array([1.0]), np.array([0.0]))
    assert compiled.solve().value(x) == pytest.approx(-0.5, abs=1e-6)


def test_infeasible_and_unbounded_status():
    prog = ConicProgram()
    x = prog.add_var("x", lb=0.0)
    prog.add_ineq(L.of(1.0) - L.var(x), "x>=1")
    prog.add_ineq(L.var(x) - 0.5, "x<=0.5")
    prog.add_obj(L.var(x))
    assert prog.solve().status == "infeasible"
    with pytest.raises(InfeasibleModel):
        solve_or_explain(prog)

    prog2 = ConicProgram()
    y = prog2.add_var("y")
    prog2.add_obj(L.var(y))
    assert prog2.solve().status == "unbounded"


def test_weak_duality_on_random_lps():
    # reported optimum never exceeds any feasible point's objective
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = 4
        c = rng.uniform(-1.0, 2.0, n)
        prog = ConicProgram()
        xs = prog.add_vars("x", n, lb=0.0, ub=5.0)
        prog.add_obj(lsum(L.var(i, w) for i, w in zip(xs, c)))
        prog.add_ineq(L.of(3.0) - lsum(L.var(i) for i in xs), "mass")
        sol = prog.solve()
        assert sol.status == "optimal"
        for _ in range(10):
            pt = rng.uniform(0.0, 5.0, n)
            if pt.sum() < 3.0:
                continue
            assert sol.objective <= float(c @ pt) + 1e-6


def test_objective_at_matches_solver():
    prog = ConicProgram()
    x = prog.add_var("x", lb=0.0, ub=4.0)
    prog.add_obj(L.var(x, -1.0) + 2.0)
    prog.add_square(0.5, L.var(x) - 1.0)
    sol = prog.solve()
    assert prog.objective_at(sol.x) == pytest.approx(sol.objective, abs=1e-6)


def test_cone_residuals_report_labels():
    prog = ConicProgram()
    x = prog.add_var("x", lb=1.0)
    prog.add_obj(L.var(x))
    prog.add_soc([L.var(x)], L.var(x, 2.0), "wide")
    sol = prog.solve()
    labels = [name for name, _ in cone_residuals(prog, sol)]
    assert labels == ["wide"]


def test_determinism_same_program_same_bits():
    def build():
        prog = ConicProgram()
        xs = prog.add_vars("x", 6, lb=0.0, ub=2.0)
        prog.add_obj(lsum(L.var(i, (-1.0) ** i * (i + 1)) for i in xs))
        prog.add_soc([L.var(xs[0]), L.var(xs[1])], L.of(1.5), "b")
        prog.add_ineq(L.of(4.0) - lsum(L.var(i) for i in xs), "m")
        return prog.solve()

    a, b = build(), build()
    assert a.objective == b.objective
    assert np.array_equal(a.x, b.x)
