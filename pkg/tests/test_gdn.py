"""Gas-side building block: wear rates, standalone dispatch, blend loop."""

import numpy as np
import pytest

from hcng_trade.conic import solve_or_explain
from hcng_trade.gdn import (
    build_gdn_problem,
    et_wear_rate,
    extract_gdn_schedule,
    g2p_volume_cap,
    gdn_cost,
    run_blend_fixed_point,
    solve_gdn_standalone,
    tank_hold_cost,
    weymouth_tightness,
)
from hcng_trade.netmodel import BlendState


def test_wear_and_hold_rates(tiny, ieee):
    # electrolyzer wear: capital cost spread over rated energy throughput
    assert et_wear_rate(tiny, 0) == pytest.approx(9600.0 / (120.0 * 20000.0))
    # tank hold is a capacity proration, paid whether or not the tank moves
    assert tank_hold_cost(tiny) == 0.0  # no tanks on the small instance
    assert tank_hold_cost(ieee) == pytest.approx(1200.0 * 400.0 / 87600.0)


def test_g2p_volume_cap_tracks_blend(tiny):
    pure = BlendState.pure_methane(tiny.horizon, tiny.blend)
    fc = tiny.devices.fuel_cells[0]
    for t in range(tiny.horizon):
        cap = g2p_volume_cap(tiny, pure, 0, t)
        assert cap == pytest.approx(fc.rated_kw * tiny.market.dt_h / (39.8 * fc.efficiency))
        # leaner gas means more volume is needed to hit the same rating
        rich = BlendState.from_volumes(
            np.full(tiny.horizon, 10.0), np.full(tiny.horizon, 40.0), tiny.blend
        )
        assert g2p_volume_cap(tiny, rich, 0, t) > cap


def test_standalone_cost_is_pure_gas_purchase(tiny):
    """With trades forced to zero the only bill is city-gate methane.

    The small instance draws 220 m3 over the day at a flat 0.45 $/m3,
    so independent operation costs exactly 99 $.
    """
    sched, cost = solve_gdn_standalone(tiny)
    assert cost.total == pytest.approx(99.0, abs=1e-6)
    assert cost.hgn == pytest.approx(99.0, abs=1e-6)
    assert cost.p2g_payment == 0.0
    assert cost.g2p_revenue == 0.0
    assert cost.et_wear == pytest.approx(0.0, abs=1e-9)
    assert cost.ht_hold == 0.0
    # nothing converts, so the pipes carry pure methane
    assert max(sched.blend.omega) == pytest.approx(0.0, abs=1e-9)
    assert np.max(np.abs(sched.h2_injected_m3)) == pytest.approx(0.0, abs=1e-7)


def test_standalone_respects_pressure_bounds_and_cones(tiny):
    sched, _ = solve_gdn_standalone(tiny)
    for n, node in enumerate(tiny.gas.nodes):
        assert np.all(sched.pressure_bar[n] >= node.pressure_min - 1e-6)
        assert np.all(sched.pressure_bar[n] <= node.pressure_max + 1e-6)
    assert weymouth_tightness(tiny, sched) <= 1e-4


def test_fixed_p2g_produces_hydrogen(tiny):
    """100 kWh into a 70% electrolyzer yields 100*0.7/12.7 m3 of hydrogen."""
    pure = BlendState.pure_methane(tiny.horizon, tiny.blend)
    fixed_p2g = np.array([[100.0, 0.0, 0.0, 0.0]])
    fixed_g2p = np.zeros((1, tiny.horizon))
    prog, gv = build_gdn_problem(tiny, pure, fixed_p2g=fixed_p2g, fixed_g2p=fixed_g2p)
    sol = solve_or_explain(prog.compile())
    sched = extract_gdn_schedule(tiny, gv, sol)
    np.testing.assert_allclose(sched.p2g_kw, fixed_p2g, atol=1e-7)
    assert sched.h2_injected_m3[0] == pytest.approx(5.511811023622047, rel=1e-6)
    # volumetric balance at the frozen blend: injected hydrogen displaces
    # purchased methane one-for-one
    total_load = sum(sum(n.load_m3) for n in tiny.gas.nodes)
    assert float(sched.hgn_m3.sum() + sched.h2_injected_m3.sum()) == pytest.approx(
        total_load, abs=1e-4
    )
    assert weymouth_tightness(tiny, sched) <= 1e-4


def test_cost_breakdown_with_trade_prices(tiny):
    pure = BlendState.pure_methane(tiny.horizon, tiny.blend)
    fixed_p2g = np.array([[100.0, 0.0, 0.0, 0.0]])
    fixed_g2p = np.array([[0.0, 0.0, 1.5, 0.0]])
    prog, gv = build_gdn_problem(tiny, pure, fixed_p2g=fixed_p2g, fixed_g2p=fixed_g2p)
    sol = solve_or_explain(prog.compile())
    sched = extract_gdn_schedule(tiny, gv, sol)
    price_e = [0.10, 0.10, 0.10, 0.10]
    price_g = [0.50, 0.50, 0.50, 0.50]
    cost = gdn_cost(tiny, sched, price_p2g=price_e, price_g2p=price_g)
    assert cost.p2g_payment == pytest.approx(0.10 * 100.0, rel=1e-9)
    assert cost.g2p_revenue == pytest.approx(0.50 * 1.5, rel=1e-9)
    assert cost.et_wear == pytest.approx(et_wear_rate(tiny, 0) * 100.0, rel=1e-9)
    assert cost.total == pytest.approx(
        cost.hgn + cost.p2g_payment + cost.et_wear + cost.ht_hold - cost.g2p_revenue
    )
    # the penalty is a diagnostic on the solved pressures, not a cash flow
    assert cost.pressure_penalty >= 0.0


def test_fixed_point_settles_on_repeated_volumes(tiny):
    h2 = np.full(tiny.horizon, 2.0)
    ch4 = np.array([50.0, 50.0, 60.0, 60.0])
    token = object()

    def solve_once(blend: BlendState):
        return token, h2, ch4

    result, blend, rounds = run_blend_fixed_point(tiny, solve_once)
    assert result is token
    assert rounds == 2  # one move off pure methane, one confirmation
    np.testing.assert_allclose(blend.omega, h2 / (h2 + ch4), rtol=1e-12)


def test_fixed_point_raises_when_oscillating(tiny):
    ch4 = np.full(tiny.horizon, 50.0)
    calls = {"n": 0}

    def flip_flop(blend: BlendState):
        calls["n"] += 1
        h2 = np.full(tiny.horizon, 10.0 if calls["n"] % 2 else 0.0)
        return None, h2, ch4

    with pytest.raises(RuntimeError, match="did not settle"):
        run_blend_fixed_point(tiny, flip_flop)
    assert calls["n"] == tiny.algorithm.blend_max_rounds


def test_standalone_blend_loop_is_single_round(tiny):
    """Zero conversion keeps the network on methane, so the very first
    solve is already self-consistent."""

    def solve_once(blend: BlendState):
        prog, gv = build_gdn_problem(
            tiny,
            blend,
            fixed_p2g=np.zeros((1, tiny.horizon)),
            fixed_g2p=np.zeros((1, tiny.horizon)),
        )
        sol = solve_or_explain(prog.compile())
        sched = extract_gdn_schedule(tiny, gv, sol)
        return sched, sched.h2_injected_m3, sched.hgn_m3

    _, blend, rounds = run_blend_fixed_point(tiny, solve_once)
    assert rounds == 1
    assert max(blend.omega) == pytest.approx(0.0, abs=1e-9)
