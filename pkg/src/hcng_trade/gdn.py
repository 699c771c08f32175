"""Gas distribution network scheduling with hydrogen blending.

Builds the GDN side of the coupled dispatch: pipeline flows under the
second-order-cone Weymouth relaxation, hydrogen injection from electrolyzers
(optionally buffered by tanks), energy-equivalent load substitution under the
current blend, and the gas-entity cost stack. The hydrogen fraction couples
loads to flows bilinearly, so every build takes a frozen ``BlendState`` and
an outer fixed-point loop re-freezes it between solves.

Pressure anchoring: the source node is pinned to its upper pressure bound and
the exactness penalty rewards raising every other node toward the source, so
each pipe cone closes from below. Measuring the penalty source-to-node rather
than pipe-by-pipe avoids the telescoping degeneracy on chains (interior
pressures would otherwise be undetermined between tight cones).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .conic import ConicProgram, ConicSolution, Lin, lsum, solve_or_explain
from .netmodel import BlendState, Scenario, orient_radial

Array = np.ndarray


@dataclass(frozen=True)
class GdnVars:
    """Variable indices for one GDN block inside a ConicProgram.

    Index arrays are (element, period) nested lists of variable ids; trade
    quantities are the GDN-side copies of the coupled variables.
    """

    hgn: list[int]  # HGN purchase per period, m3
    flow: list[list[int]]  # per pipe, per period, m3 (tree-oriented)
    pressure: list[list[int]]  # per node, per period, bar
    p2g: list[list[int]]  # per electrolyzer, per period, kW draw
    g2p: list[list[int]]  # per fuel cell, per period, m3 delivered
    ht_flow: list[list[int]]  # per tank, per period, m3 into storage
    ht_level: list[list[int]]  # per tank, per period, m3 stored (end of period)

    def h2_injected(self, sc: Scenario, t: int) -> Lin:
        """Hydrogen volume entering the pipeline in period t (production
        net of tank charging)."""
        expr = Lin()
        dt = sc.market.dt_h
        for k, et in enumerate(sc.devices.electrolyzers):
            expr = expr + Lin.var(self.p2g[k][t], et.efficiency * dt / sc.blend.hhv_h2)
        for j in range(len(sc.devices.tanks)):
            expr = expr + Lin.var(self.ht_flow[j][t], -1.0)
        return expr


@dataclass(frozen=True)
class GdnSchedule:
    """Solved gas-side operating point."""

    hgn_m3: Array  # (T,)
    flow_m3: Array  # (pipes, T)
    pressure_bar: Array  # (nodes, T)
    p2g_kw: Array  # (electrolyzers, T)
    h2_injected_m3: Array  # (T,) network total
    g2p_m3: Array  # (fuel cells, T)
    ht_flow_m3: Array  # (tanks, T)
    ht_level_m3: Array  # (tanks, T)
    blend: BlendState


@dataclass(frozen=True)
class GdnCostBreakdown:
    total: float  # C^G
    hgn: float  # gas purchase from the upstream network
    p2g_payment: float  # electricity bought from the ADN for electrolysis
    et_wear: float
    ht_hold: float  # schedule-independent tank proration
    g2p_revenue: float  # HCNG sold to the ADN
    pressure_penalty: float


def tank_hold_cost(sc: Scenario) -> float:
    """Capacity proration for hydrogen tanks; independent of dispatch."""
    return sum(t.unit_cost * t.capacity_m3 / t.lifetime_h for t in sc.devices.tanks)


def et_wear_rate(sc: Scenario, k: int) -> float:
    """Electrolyzer wear cost per kWh of draw."""
    et = sc.devices.electrolyzers[k]
    return et.unit_cost / (et.rated_kw * et.lifetime_h)


def g2p_volume_cap(sc: Scenario, blend: BlendState, k: int, t: int) -> float:
    """Gas volume per period that saturates fuel cell k's power rating."""
    fc = sc.devices.fuel_cells[k]
    return fc.rated_kw * sc.market.dt_h / (blend.hhv[t] * fc.efficiency)


def add_gdn_block(
    prog: ConicProgram,
    sc: Scenario,
    blend: BlendState,
    tag: str = "gdn",
    fixed_p2g: Array | None = None,
    fixed_g2p: Array | None = None,
) -> GdnVars:
    """Add GDN variables, constraints, and operating cost to ``prog``.

    ``fixed_p2g``/``fixed_g2p`` pin the trade quantities (electrolyzer kW
    and fuel-cell m3, shaped (element, T)); None leaves them free within
    device ratings. Objective contribution is the gas entity's own
    operating cost (purchase + electrolyzer wear + tank hold) plus the
    pressure penalty; trade payments are priced by callers.
    """
    T = sc.horizon
    dt = sc.market.dt_h
    gas = sc.gas
    node_ids = [n.id for n in gas.nodes]
    node_of = gas.node_index()
    oriented = orient_radial(node_ids, [(p.from_node, p.to_node) for p in gas.pipes], gas.source)
    src = node_of[gas.source]

    hgn = prog.add_vars(f"{tag}.hgn", T, lb=0.0)
    flow = [prog.add_vars(f"{tag}.flow[{k}]", T) for k in range(len(gas.pipes))]
    pressure = [
        prog.add_vars(f"{tag}.w[{n.id}]", T, lb=n.pressure_min, ub=n.pressure_max)
        for n in gas.nodes
    ]
    p2g = [
        prog.add_vars(f"{tag}.p2g[{et.id}]", T, lb=0.0, ub=et.rated_kw)
        for et in sc.devices.electrolyzers
    ]
    g2p = [prog.add_vars(f"{tag}.g2p[{fc.id}]", T, lb=0.0) for fc in sc.devices.fuel_cells]
    ht_flow = [prog.add_vars(f"{tag}.htflow[{h.id}]", T) for h in sc.devices.tanks]
    ht_level = [
        prog.add_vars(f"{tag}.htlevel[{h.id}]", T, lb=0.0, ub=h.capacity_m3)
        for h in sc.devices.tanks
    ]
    gv = GdnVars(hgn, flow, pressure, p2g, g2p, ht_flow, ht_level)

    for t in range(T):
        # source pinned to its ceiling; penalty below raises the rest toward it
        prog.fix(pressure[src][t], gas.nodes[src].pressure_max)

    if fixed_p2g is not None:
        for k in range(len(sc.devices.electrolyzers)):
            for t in range(T):
                prog.fix(p2g[k][t], float(fixed_p2g[k][t]))
    if fixed_g2p is not None:
        for k in range(len(sc.devices.fuel_cells)):
            for t in range(T):
                prog.fix(g2p[k][t], float(fixed_g2p[k][t]))
    else:
        for k in range(len(sc.devices.fuel_cells)):
            for t in range(T):
                # power rating translated to volume under the frozen blend
                prog.add_ineq(
                    Lin.var(g2p[k][t]) - g2p_volume_cap(sc, blend, k, t),
                    label=f"g2p-rating:{tag}[{k},{t}]",
                )

    inflow: dict[int, list[int]] = {n: [] for n in range(len(gas.nodes))}
    outflow: dict[int, list[int]] = {n: [] for n in range(len(gas.nodes))}
    for up, down, e in oriented:
        outflow[up].append(e)
        inflow[down].append(e)

    et_at: dict[int, list[int]] = {n: [] for n in range(len(gas.nodes))}
    fc_at: dict[int, list[int]] = {n: [] for n in range(len(gas.nodes))}
    ht_at: dict[int, list[int]] = {n: [] for n in range(len(gas.nodes))}
    for k, et in enumerate(sc.devices.electrolyzers):
        et_at[node_of[et.gas_node]].append(k)
    for k, fc in enumerate(sc.devices.fuel_cells):
        fc_at[node_of[fc.gas_node]].append(k)
    for k, h in enumerate(sc.devices.tanks):
        ht_at[node_of[h.gas_node]].append(k)

    for t in range(T):
        for n, node in enumerate(gas.nodes):
            # inflow + injections = equivalent load + fuel-cell draw + outflow
            expr = Lin.of(-node.load_m3[t] * sc.blend.hhv_ch4 / blend.hhv[t])
            for e in inflow[n]:
                expr = expr + Lin.var(flow[e][t])
            for e in outflow[n]:
                expr = expr + Lin.var(flow[e][t], -1.0)
            if n == src:
                expr = expr + Lin.var(hgn[t])
            for k in et_at[n]:
                expr = expr + Lin.var(p2g[k][t], sc.devices.electrolyzers[k].efficiency * dt / sc.blend.hhv_h2)
            for k in ht_at[n]:
                expr = expr + Lin.var(ht_flow[k][t], -1.0)
            for k in fc_at[n]:
                expr = expr + Lin.var(g2p[k][t], -1.0)
            prog.add_eq(expr, label=f"gas-balance:{tag}[{node.id},{t}]")

        # blend cap, linear in volumes: (1-w_max)*H2 <= w_max*CH4
        cap = sc.blend.omega_max
        prog.add_ineq(
            gv.h2_injected(sc, t) * (1.0 - cap) - Lin.var(hgn[t], cap),
            label=f"blend-cap:{tag}[{t}]",
        )
        # injected hydrogen cannot be negative (tanks only buffer production)
        prog.add_ineq(-gv.h2_injected(sc, t), label=f"h2-nonneg:{tag}[{t}]")

        for up, down, e in oriented:
            c = gas.pipes[e].weymouth * dt
            prog.add_soc(
                [Lin.var(flow[e][t]), Lin.var(pressure[down][t], c)],
                Lin.var(pressure[up][t], c),
                label=f"weymouth:{tag}[{e},{t}]",
            )

    # tank schedules cost nothing by themselves, so the release timing is
    # degenerate; a vanishing quadratic picks the least-norm schedule and
    # keeps the hydrogen-fraction loop from cycling between optima
    ht_reg = 1e-6 * sum(sc.market.gas_price) / T
    for k, h in enumerate(sc.devices.tanks):
        half = 0.5 * h.capacity_m3
        for t in range(T):
            prev = Lin.of(half) if t == 0 else Lin.var(ht_level[k][t - 1])
            prog.add_eq(
                Lin.var(ht_level[k][t]) - prev - Lin.var(ht_flow[k][t]),
                label=f"ht-level:{tag}[{h.id},{t}]",
            )
            prog.add_square(ht_reg, Lin.var(ht_flow[k][t]))
        # cyclic horizon: end where it started
        prog.add_eq(Lin.var(ht_level[k][T - 1]) - half, label=f"ht-cycle:{tag}[{h.id}]")

    tau = sc.pressure_penalty()
    for t in range(T):
        prog.add_obj(Lin.var(hgn[t], sc.market.gas_price[t]))
        for n in range(len(gas.nodes)):
            if n != src:
                prog.add_obj(
                    Lin.of(tau * gas.nodes[src].pressure_max) + Lin.var(pressure[n][t], -tau)
                )
    for k in range(len(sc.devices.electrolyzers)):
        rate = et_wear_rate(sc, k) * dt
        for t in range(T):
            prog.add_obj(Lin.var(p2g[k][t], rate))
    prog.add_obj(tank_hold_cost(sc))
    return gv


def build_gdn_problem(
    sc: Scenario,
    blend: BlendState,
    fixed_p2g: Array | None = None,
    fixed_g2p: Array | None = None,
) -> tuple[ConicProgram, GdnVars]:
    """Standalone GDN program; objective = own operating cost + penalty."""
    prog = ConicProgram(f"gdn:{sc.name}")
    gv = add_gdn_block(prog, sc, blend, fixed_p2g=fixed_p2g, fixed_g2p=fixed_g2p)
    return prog, gv


def _values(sol: ConicSolution, idx: Sequence[Sequence[int]]) -> Array:
    return np.array([[sol.value(i) for i in row] for row in idx]).reshape(len(idx), -1)


def extract_gdn_schedule(sc: Scenario, gv: GdnVars, sol: ConicSolution) -> GdnSchedule:
    T = sc.horizon
    dt = sc.market.dt_h
    p2g = _values(sol, gv.p2g) if gv.p2g else np.zeros((0, T))
    ht_flow = _values(sol, gv.ht_flow) if gv.ht_flow else np.zeros((0, T))
    h2 = np.zeros(T)
    for k, et in enumerate(sc.devices.electrolyzers):
        h2 += p2g[k] * et.efficiency * dt / sc.blend.hhv_h2
    h2 -= ht_flow.sum(axis=0)
    # the model keeps injection nonnegative, clip solver noise
    h2 = np.maximum(h2, 0.0)
    hgn = np.array([sol.value(i) for i in gv.hgn])
    blend = BlendState.from_volumes(h2, hgn, sc.blend)
    return GdnSchedule(
        hgn_m3=hgn,
        flow_m3=_values(sol, gv.flow) if gv.flow else np.zeros((0, T)),
        pressure_bar=_values(sol, gv.pressure),
        p2g_kw=p2g,
        h2_injected_m3=h2,
        g2p_m3=_values(sol, gv.g2p) if gv.g2p else np.zeros((0, T)),
        ht_flow_m3=ht_flow,
        ht_level_m3=_values(sol, gv.ht_level) if gv.ht_level else np.zeros((0, T)),
        blend=blend,
    )


def gdn_cost(
    sc: Scenario,
    schedule: GdnSchedule,
    price_p2g: Sequence[float] | None = None,
    price_g2p: Sequence[float] | None = None,
) -> GdnCostBreakdown:
    """Cost stack of the gas entity at a solved schedule.

    Prices default to None (unsettled trade, payments excluded), which is
    also the independent-operation case where quantities are zero.
    """
    dt = sc.market.dt_h
    T = sc.horizon
    hgn = float(np.dot(sc.market.gas_price, schedule.hgn_m3))
    et_wear = 0.0
    for k in range(len(sc.devices.electrolyzers)):
        et_wear += et_wear_rate(sc, k) * dt * float(schedule.p2g_kw[k].sum())
    p2g_payment = 0.0
    g2p_revenue = 0.0
    if price_p2g is not None:
        for t in range(T):
            p2g_payment += price_p2g[t] * float(schedule.p2g_kw[:, t].sum()) * dt
    if price_g2p is not None:
        for t in range(T):
            g2p_revenue += price_g2p[t] * float(schedule.g2p_m3[:, t].sum())
    ht_hold = tank_hold_cost(sc)
    tau = sc.pressure_penalty()
    src = sc.gas.node_index()[sc.gas.source]
    w_src = sc.gas.nodes[src].pressure_max
    penalty = tau * float(
        sum(
            w_src - schedule.pressure_bar[n][t]
            for n in range(len(sc.gas.nodes))
            if n != src
            for t in range(T)
        )
    )
    total = hgn + p2g_payment + et_wear + ht_hold - g2p_revenue
    return GdnCostBreakdown(
        total=total,
        hgn=hgn,
        p2g_payment=p2g_payment,
        et_wear=et_wear,
        ht_hold=ht_hold,
        g2p_revenue=g2p_revenue,
        pressure_penalty=penalty,
    )


def weymouth_tightness(sc: Scenario, schedule: GdnSchedule) -> float:
    """Max relative cone slack over pipes and periods; <= 1e-4 is exact."""
    node_of = sc.gas.node_index()
    oriented = orient_radial(
        [n.id for n in sc.gas.nodes],
        [(p.from_node, p.to_node) for p in sc.gas.pipes],
        sc.gas.source,
    )
    dt = sc.market.dt_h
    worst = 0.0
    for up, down, e in oriented:
        c = sc.gas.pipes[e].weymouth * dt
        for t in range(sc.horizon):
            rhs = c * schedule.pressure_bar[up][t]
            lhs = math.hypot(schedule.flow_m3[e][t], c * schedule.pressure_bar[down][t])
            worst = max(worst, (rhs - lhs) / max(abs(rhs), 1e-12))
    return worst


def run_blend_fixed_point(
    sc: Scenario,
    solve_with_blend: Callable[[BlendState], tuple[object, Array, Array]],
) -> tuple[object, BlendState, int]:
    """Iterate solves until the hydrogen fraction is self-consistent.

    ``solve_with_blend`` maps a frozen BlendState to (result, injected H2
    per period, CH4 purchase per period). Starts from the pure-methane
    blend; converged when the fraction moves less than ``blend_tol``
    everywhere. Raises RuntimeError at the round cap.
    """
    blend = BlendState.pure_methane(sc.horizon, sc.blend)
    for round_no in range(1, sc.algorithm.blend_max_rounds + 1):
        result, h2, ch4 = solve_with_blend(blend)
        new_blend = BlendState.from_volumes(h2, ch4, sc.blend)
        if new_blend.max_abs_omega_delta(blend) <= sc.algorithm.blend_tol:
            return result, new_blend, round_no
        blend = new_blend
    raise RuntimeError(
        f"hydrogen fraction did not settle within {sc.algorithm.blend_max_rounds} rounds"
    )


def solve_gdn_standalone(sc: Scenario) -> tuple[GdnSchedule, GdnCostBreakdown]:
    """Independent GDN operation: no trades, blend settled by fixed point."""
    T = sc.horizon
    zeros_et = np.zeros((len(sc.devices.electrolyzers), T))
    zeros_fc = np.zeros((len(sc.devices.fuel_cells), T))

    def solve_once(blend: BlendState) -> tuple[GdnSchedule, Array, Array]:
        prog, gv = build_gdn_problem(sc, blend, fixed_p2g=zeros_et, fixed_g2p=zeros_fc)
        sol = solve_or_explain(prog.compile())
        sched = extract_gdn_schedule(sc, gv, sol)
        return sched, sched.h2_injected_m3, sched.hgn_m3

    sched, blend, _ = run_blend_fixed_point(sc, solve_once)
    return sched, gdn_cost(sc, sched)
