"""Active distribution network scheduling.

Branch-flow SOCP over the radial feeder (squared voltage/current variables),
with dispatchable DER curtailment, li-ion batteries costed by depth-of-
discharge cycle life, fuel cells converting purchased HCNG to power, and
electrolyzer draws sold to the gas entity. The same block serves the
deterministic solve, the ADMM local problems, and the robust recourse stage
(loads pinned to a realization, DER capped by realized availability, battery
split into a first-stage baseline plus an adjustment).

Power-flow quantities are modeled in per-unit on the scenario base; device
variables stay in kW/kWh and enter nodal balances scaled by the base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .conic import ConicProgram, ConicSolution, Lin, solve_or_explain
from .netmodel import BlendState, Scenario, orient_radial

Array = np.ndarray


def battery_cycle_life(depth: float, a1: float, a2: float, b1: float, b2: float) -> float:
    """Cycle count at a given depth of discharge (double-exponential fit)."""
    if depth <= 0 or depth > 1:
        raise ValueError(f"depth of discharge must lie in (0, 1], got {depth}")
    return a1 * math.exp(b1 * depth) + a2 * math.exp(b2 * depth)


def battery_wear_rate(sc: Scenario, k: int) -> float:
    """Degradation cost per kWh of charge or discharge throughput."""
    bat = sc.devices.batteries[k]
    cycles = battery_cycle_life(
        bat.depth_of_discharge, bat.cycle_a1, bat.cycle_a2, bat.cycle_b1, bat.cycle_b2
    )
    installed = bat.capacity_cost * bat.capacity_kwh + bat.power_cost * bat.rated_kw
    return installed / (cycles * bat.capacity_kwh * bat.depth_of_discharge)


def fc_wear_rate(sc: Scenario, k: int) -> float:
    """Fuel-cell wear cost per kWh generated."""
    fc = sc.devices.fuel_cells[k]
    return fc.unit_cost / (fc.rated_kw * fc.lifetime_h)


@dataclass(frozen=True)
class AdnVars:
    """Variable indices for one ADN block inside a ConicProgram."""

    tg: list[int]  # grid import per period, kW
    tg_q: list[int]  # grid reactive support, kvar
    flow_p: list[list[int]]  # per branch, per period, pu
    flow_q: list[list[int]]
    cur: list[list[int]]  # squared current, pu
    volt: list[list[int]]  # squared voltage per bus, pu
    der: list[list[int]]  # DER dispatch per unit, kW
    bat_c: list[list[int]]  # charge, kW, nonpositive
    bat_d: list[list[int]]  # discharge, kW, nonnegative
    bat_e: list[list[int]]  # stored energy, kWh
    bat_adj: list[list[int]]  # redispatch on top of the baseline, kW
    p2g: list[list[int]]  # electricity sold to gas-side electrolyzers, kW
    g2p: list[list[int]]  # HCNG bought for fuel cells, m3
    se_p2g: list[list[int]]  # self-conversion electrolyzer draw, kW (model2)
    se_h2: list[list[int]]  # self-conversion fuel-cell hydrogen, m3 (model2)
    se_ht_flow: list[list[int]]  # model2 tank charge, m3
    se_ht_level: list[list[int]]
    cost: Lin  # the block's operating cost (incl. the current nudge)


@dataclass(frozen=True)
class AdnSchedule:
    tg_kw: Array  # (T,)
    flow_p_pu: Array  # (branches, T)
    flow_q_pu: Array
    cur_pu: Array
    volt_pu: Array  # (buses, T)
    der_kw: Array  # (ders, T)
    bat_c_kw: Array  # (batteries, T), nonpositive
    bat_d_kw: Array
    bat_e_kwh: Array
    bat_adj_kw: Array  # (batteries, T) redispatch; zero when no baseline
    g2p_kw: Array  # (fuel cells, T) electric output
    g2p_m3: Array  # (fuel cells, T) gas drawn
    p2g_kw: Array  # (electrolyzers, T) power sold for electrolysis
    se_p2g_kw: Array  # model2 self-conversion draw
    se_h2_m3: Array


@dataclass(frozen=True)
class AdnCostBreakdown:
    total: float  # C^E
    tg: float
    li_wear: float
    sofc_wear: float
    self_et_wear: float  # model2 only
    self_ht_hold: float  # model2 only
    hess: float  # li + sofc + self-conversion wear
    g2p_payment: float  # HCNG purchase
    p2g_revenue: float  # electricity sale


def add_adn_block(
    prog: ConicProgram,
    sc: Scenario,
    blend: BlendState,
    tag: str = "adn",
    fixed_p2g: Array | None = None,
    fixed_g2p: Array | None = None,
    load_real: Array | None = None,
    der_real: Array | None = None,
    baseline_battery: Array | Sequence[Sequence[Lin]] | None = None,
    allow_adjust: bool = True,
    self_conversion: bool = False,
    include_cost_in_objective: bool = True,
) -> AdnVars:
    """Add ADN variables, constraints, and operating cost to ``prog``.

    ``fixed_p2g``/``fixed_g2p`` pin the trade quantities; None leaves them
    free within ratings. ``load_real``/``der_real`` replace forecasts with a
    realization (shapes (buses, T) and (ders, T)). ``baseline_battery`` pins
    the first-stage net battery profile (batteries, T), given either as
    numbers or as expressions over variables of another block in the same
    program; the block then optimizes the adjustment on top of it, or fixes
    the adjustment to zero when ``allow_adjust`` is false.
    ``self_conversion`` builds the pure-hydrogen conversion loop owned by
    the ADN itself (no counterparty).

    The block's operating cost lands on ``AdnVars.cost``; it joins the
    program objective unless ``include_cost_in_objective`` is false (a
    caller may instead bound it with an epigraph variable). Trade payments
    are priced by callers.
    """
    T = sc.horizon
    dt = sc.market.dt_h
    pw = sc.power
    base = pw.base_kva
    bus_ids = [b.id for b in pw.buses]
    bus_of = pw.bus_index()
    oriented = orient_radial(bus_ids, [(b.from_bus, b.to_bus) for b in pw.branches], pw.slack)
    slack = bus_of[pw.slack]

    tg = prog.add_vars(f"{tag}.tg", T, lb=0.0)
    tg_q = prog.add_vars(f"{tag}.tgq", T)
    flow_p = [prog.add_vars(f"{tag}.p[{e}]", T) for e in range(len(pw.branches))]
    flow_q = [prog.add_vars(f"{tag}.q[{e}]", T) for e in range(len(pw.branches))]
    cur = [prog.add_vars(f"{tag}.i2[{e}]", T, lb=0.0) for e in range(len(pw.branches))]
    volt = [
        prog.add_vars(f"{tag}.u2[{b.id}]", T, lb=b.v_min**2, ub=b.v_max**2)
        for b in pw.buses
    ]
    der = [prog.add_vars(f"{tag}.der[{d.id}]", T, lb=0.0) for d in sc.devices.ders]
    bat_c = [
        prog.add_vars(f"{tag}.batc[{b.id}]", T, lb=-b.rated_kw, ub=0.0)
        for b in sc.devices.batteries
    ]
    bat_d = [
        prog.add_vars(f"{tag}.batd[{b.id}]", T, lb=0.0, ub=b.rated_kw)
        for b in sc.devices.batteries
    ]
    bat_e = [
        prog.add_vars(
            f"{tag}.bate[{b.id}]", T,
            lb=b.soc_min * b.capacity_kwh, ub=b.soc_max * b.capacity_kwh,
        )
        for b in sc.devices.batteries
    ]
    bat_adj = [
        prog.add_vars(f"{tag}.batadj[{b.id}]", T) for b in sc.devices.batteries
    ] if baseline_battery is not None else []
    p2g = [
        prog.add_vars(f"{tag}.p2g[{et.id}]", T, lb=0.0, ub=et.rated_kw)
        for et in sc.devices.electrolyzers
    ] if not self_conversion else []
    g2p = [
        prog.add_vars(f"{tag}.g2p[{fc.id}]", T, lb=0.0) for fc in sc.devices.fuel_cells
    ] if not self_conversion else []
    se_p2g = [
        prog.add_vars(f"{tag}.sep2g[{et.id}]", T, lb=0.0, ub=et.rated_kw)
        for et in sc.devices.electrolyzers
    ] if self_conversion else []
    se_h2 = [
        prog.add_vars(f"{tag}.seh2[{fc.id}]", T, lb=0.0) for fc in sc.devices.fuel_cells
    ] if self_conversion else []
    se_ht_flow = [
        prog.add_vars(f"{tag}.sehtf[{h.id}]", T) for h in sc.devices.tanks
    ] if self_conversion else []
    se_ht_level = [
        prog.add_vars(f"{tag}.sehtl[{h.id}]", T, lb=0.0, ub=h.capacity_m3)
        for h in sc.devices.tanks
    ] if self_conversion else []
    for t in range(T):
        prog.fix(volt[slack][t], 1.0)

    for k, d in enumerate(sc.devices.ders):
        avail = der_real[k] if der_real is not None else d.p_forecast_kw
        for t in range(T):
            prog.add_ineq(
                Lin.var(der[k][t]) - float(avail[t]), label=f"der-cap:{tag}[{d.id},{t}]"
            )

    if fixed_p2g is not None and not self_conversion:
        for k in range(len(sc.devices.electrolyzers)):
            for t in range(T):
                prog.fix(p2g[k][t], float(fixed_p2g[k][t]))
    if fixed_g2p is not None and not self_conversion:
        for k in range(len(sc.devices.fuel_cells)):
            for t in range(T):
                prog.fix(g2p[k][t], float(fixed_g2p[k][t]))

    # fuel-cell electric output per m3 of fuel under the frozen blend
    def g2p_gain(k: int, t: int) -> float:
        return blend.hhv[t] * sc.devices.fuel_cells[k].efficiency / dt

    if not self_conversion:
        for k, fc in enumerate(sc.devices.fuel_cells):
            for t in range(T):
                prog.add_ineq(
                    Lin.var(g2p[k][t], g2p_gain(k, t)) - fc.rated_kw,
                    label=f"sofc-rating:{tag}[{fc.id},{t}]",
                )

    # self-conversion loop burns pure hydrogen (model 2)
    h2_gain = sc.blend.hhv_h2  # heat units per m3, times efficiency below
    if self_conversion:
        for k, fc in enumerate(sc.devices.fuel_cells):
            for t in range(T):
                prog.add_ineq(
                    Lin.var(se_h2[k][t], h2_gain * fc.efficiency / dt) - fc.rated_kw,
                    label=f"sofc-rating:{tag}[{fc.id},{t}]",
                )
        for t in range(T):
            # one hydrogen pool per period: production - storage = burn
            pool = Lin()
            for k, et in enumerate(sc.devices.electrolyzers):
                pool = pool + Lin.var(se_p2g[k][t], et.efficiency * dt / sc.blend.hhv_h2)
            for j in range(len(sc.devices.tanks)):
                pool = pool + Lin.var(se_ht_flow[j][t], -1.0)
            for k in range(len(sc.devices.fuel_cells)):
                pool = pool + Lin.var(se_h2[k][t], -1.0)
            prog.add_eq(pool, label=f"h2-pool:{tag}[{t}]")
        # same least-norm nudge as the gas-side tanks: timing is otherwise
        # degenerate and the extracted schedule would be solver whim
        ht_reg = 1e-6 * sum(sc.market.power_price) / T
        for j, h in enumerate(sc.devices.tanks):
            half = 0.5 * h.capacity_m3
            for t in range(T):
                prev = Lin.of(half) if t == 0 else Lin.var(se_ht_level[j][t - 1])
                prog.add_eq(
                    Lin.var(se_ht_level[j][t]) - prev - Lin.var(se_ht_flow[j][t]),
                    label=f"ht-level:{tag}[{h.id},{t}]",
                )
                prog.add_square(ht_reg, Lin.var(se_ht_flow[j][t]))
            prog.add_eq(Lin.var(se_ht_level[j][T - 1]) - half, label=f"ht-cycle:{tag}[{h.id}]")

    # battery recomposition: realized net = baseline + adjustment
    if baseline_battery is not None:
        for k in range(len(sc.devices.batteries)):
            for t in range(T):
                base_kt = baseline_battery[k][t]
                base_term = base_kt if isinstance(base_kt, Lin) else Lin.of(float(base_kt))
                expr = (
                    Lin.var(bat_d[k][t]) + Lin.var(bat_c[k][t])
                    - Lin.var(bat_adj[k][t]) - base_term
                )
                prog.add_eq(expr, label=f"bat-recompose:{tag}[{k},{t}]")
                if not allow_adjust:
                    prog.fix(bat_adj[k][t], 0.0)

    for k, b in enumerate(sc.devices.batteries):
        half = 0.5 * b.capacity_kwh
        for t in range(T):
            prev = Lin.of(half) if t == 0 else Lin.var(bat_e[k][t - 1])
            # net grid injection depletes the store
            expr = (
                Lin.var(bat_e[k][t]) - prev
                + (Lin.var(bat_d[k][t]) + Lin.var(bat_c[k][t])) * dt
            )
            prog.add_eq(expr, label=f"bat-energy:{tag}[{b.id},{t}]")
        prog.add_eq(Lin.var(bat_e[k][T - 1]) - half, label=f"bat-cycle:{tag}[{b.id}]")

    ders_at: dict[int, list[int]] = {n: [] for n in range(len(pw.buses))}
    bats_at: dict[int, list[int]] = {n: [] for n in range(len(pw.buses))}
    ets_at: dict[int, list[int]] = {n: [] for n in range(len(pw.buses))}
    fcs_at: dict[int, list[int]] = {n: [] for n in range(len(pw.buses))}
    for k, d in enumerate(sc.devices.ders):
        ders_at[bus_of[d.bus]].append(k)
    for k, b in enumerate(sc.devices.batteries):
        bats_at[bus_of[b.bus]].append(k)
    for k, et in enumerate(sc.devices.electrolyzers):
        ets_at[bus_of[et.bus]].append(k)
    for k, fc in enumerate(sc.devices.fuel_cells):
        fcs_at[bus_of[fc.bus]].append(k)

    into: dict[int, list[int]] = {n: [] for n in range(len(pw.buses))}
    outof: dict[int, list[int]] = {n: [] for n in range(len(pw.buses))}
    up_of: dict[int, int] = {}
    for up, down, e in oriented:
        outof[up].append(e)
        into[down].append(e)
        up_of[e] = up

    for t in range(T):
        for j, bus in enumerate(pw.buses):
            p_load = float(load_real[j][t]) if load_real is not None else bus.p_load_kw[t]
            p_bal = Lin.of(-p_load / base)
            q_bal = Lin.of(-bus.q_load_kvar[t] / base)
            for e in into[j]:
                br = pw.branches[e]
                p_bal = p_bal + Lin.var(flow_p[e][t]) + Lin.var(cur[e][t], -br.r_pu)
                q_bal = q_bal + Lin.var(flow_q[e][t]) + Lin.var(cur[e][t], -br.x_pu)
            for e in outof[j]:
                p_bal = p_bal + Lin.var(flow_p[e][t], -1.0)
                q_bal = q_bal + Lin.var(flow_q[e][t], -1.0)
            if j == slack:
                p_bal = p_bal + Lin.var(tg[t], 1.0 / base)
                q_bal = q_bal + Lin.var(tg_q[t], 1.0 / base)
            for k in ders_at[j]:
                p_bal = p_bal + Lin.var(der[k][t], 1.0 / base)
                q_bal = q_bal + sc.devices.ders[k].q_kvar[t] / base
            for k in bats_at[j]:
                p_bal = p_bal + (Lin.var(bat_d[k][t]) + Lin.var(bat_c[k][t])) * (1.0 / base)
            if self_conversion:
                for k in ets_at[j]:
                    p_bal = p_bal + Lin.var(se_p2g[k][t], -1.0 / base)
                for k in fcs_at[j]:
                    gain = h2_gain * sc.devices.fuel_cells[k].efficiency / dt
                    p_bal = p_bal + Lin.var(se_h2[k][t], gain / base)
            else:
                for k in ets_at[j]:
                    p_bal = p_bal + Lin.var(p2g[k][t], -1.0 / base)
                for k in fcs_at[j]:
                    p_bal = p_bal + Lin.var(g2p[k][t], g2p_gain(k, t) / base)
            prog.add_eq(p_bal, label=f"p-balance:{tag}[{bus.id},{t}]")
            prog.add_eq(q_bal, label=f"q-balance:{tag}[{bus.id},{t}]")

        for up, down, e in oriented:
            br = pw.branches[e]
            prog.add_eq(
                Lin.var(volt[down][t]) - Lin.var(volt[up][t])
                + Lin.var(flow_p[e][t], 2.0 * br.r_pu)
                + Lin.var(flow_q[e][t], 2.0 * br.x_pu)
                + Lin.var(cur[e][t], -(br.r_pu**2 + br.x_pu**2)),
                label=f"volt-drop:{tag}[{e},{t}]",
            )
            prog.add_soc(
                [
                    Lin.var(flow_p[e][t], 2.0),
                    Lin.var(flow_q[e][t], 2.0),
                    Lin.var(cur[e][t]) - Lin.var(volt[up][t]),
                ],
                Lin.var(cur[e][t]) + Lin.var(volt[up][t]),
                label=f"branchflow:{tag}[{e},{t}]",
            )

    mean_mu = sum(sc.market.power_price) / T
    i2_coef = sc.algorithm.current_penalty_scale * mean_mu * base * dt
    cost = Lin()
    for t in range(T):
        cost = cost + Lin.var(tg[t], sc.market.power_price[t] * dt)
        for e in range(len(pw.branches)):
            # nudge keeps the current cone tight when curtailment is free
            cost = cost + Lin.var(cur[e][t], i2_coef)
    for k in range(len(sc.devices.batteries)):
        rate = battery_wear_rate(sc, k) * dt
        for t in range(T):
            cost = cost + Lin.var(bat_d[k][t], rate) + Lin.var(bat_c[k][t], -rate)
    for k in range(len(sc.devices.fuel_cells)):
        rate = fc_wear_rate(sc, k) * dt
        for t in range(T):
            if self_conversion:
                cost = cost + Lin.var(se_h2[k][t], rate * h2_gain * sc.devices.fuel_cells[k].efficiency / dt)
            else:
                cost = cost + Lin.var(g2p[k][t], rate * g2p_gain(k, t))
    if self_conversion:
        for k, et in enumerate(sc.devices.electrolyzers):
            rate = et.unit_cost / (et.rated_kw * et.lifetime_h) * dt
            for t in range(T):
                cost = cost + Lin.var(se_p2g[k][t], rate)
        cost = cost + Lin.of(sum(h.unit_cost * h.capacity_m3 / h.lifetime_h for h in sc.devices.tanks))
    if include_cost_in_objective:
        prog.add_obj(cost)
    return AdnVars(
        tg, tg_q, flow_p, flow_q, cur, volt, der, bat_c, bat_d, bat_e, bat_adj,
        p2g, g2p, se_p2g, se_h2, se_ht_flow, se_ht_level, cost,
    )


def build_adn_problem(
    sc: Scenario,
    blend: BlendState,
    fixed_p2g: Array | None = None,
    fixed_g2p: Array | None = None,
    load_real: Array | None = None,
    der_real: Array | None = None,
    baseline_battery: Array | None = None,
    allow_adjust: bool = True,
) -> tuple[ConicProgram, AdnVars]:
    """Standalone ADN program; objective = own operating cost."""
    if (load_real is not None or der_real is not None) and baseline_battery is None:
        raise ValueError("a realization requires the first-stage battery baseline")
    prog = ConicProgram(f"adn:{sc.name}")
    av = add_adn_block(
        prog, sc, blend,
        fixed_p2g=fixed_p2g, fixed_g2p=fixed_g2p,
        load_real=load_real, der_real=der_real,
        baseline_battery=baseline_battery, allow_adjust=allow_adjust,
        self_conversion=sc.variant == "model2",
    )
    return prog, av


def _values(sol: ConicSolution, idx: Sequence[Sequence[int]], T: int) -> Array:
    if not idx:
        return np.zeros((0, T))
    return np.array([[sol.value(i) for i in row] for row in idx])


def extract_adn_schedule(sc: Scenario, av: AdnVars, sol: ConicSolution, blend: BlendState) -> AdnSchedule:
    T = sc.horizon
    dt = sc.market.dt_h
    g2p_m3 = _values(sol, av.g2p, T)
    g2p_kw = np.zeros((len(sc.devices.fuel_cells), T))
    if av.g2p:
        for k, fc in enumerate(sc.devices.fuel_cells):
            for t in range(T):
                g2p_kw[k][t] = g2p_m3[k][t] * blend.hhv[t] * fc.efficiency / dt
    se_h2 = _values(sol, av.se_h2, T)
    if av.se_h2:
        for k, fc in enumerate(sc.devices.fuel_cells):
            g2p_kw[k] = se_h2[k] * sc.blend.hhv_h2 * fc.efficiency / dt
    return AdnSchedule(
        tg_kw=np.array([sol.value(i) for i in av.tg]),
        flow_p_pu=_values(sol, av.flow_p, T),
        flow_q_pu=_values(sol, av.flow_q, T),
        cur_pu=_values(sol, av.cur, T),
        volt_pu=_values(sol, av.volt, T),
        der_kw=_values(sol, av.der, T),
        bat_c_kw=_values(sol, av.bat_c, T),
        bat_d_kw=_values(sol, av.bat_d, T),
        bat_e_kwh=_values(sol, av.bat_e, T),
        bat_adj_kw=(
            _values(sol, av.bat_adj, T) if av.bat_adj
            else np.zeros((len(sc.devices.batteries), T))
        ),
        g2p_kw=g2p_kw,
        g2p_m3=g2p_m3,
        p2g_kw=_values(sol, av.p2g, T),
        se_p2g_kw=_values(sol, av.se_p2g, T),
        se_h2_m3=se_h2,
    )


def adn_cost(
    sc: Scenario,
    schedule: AdnSchedule,
    price_p2g: Sequence[float] | None = None,
    price_g2p: Sequence[float] | None = None,
) -> AdnCostBreakdown:
    """Cost stack of the electric entity at a solved schedule."""
    dt = sc.market.dt_h
    T = sc.horizon
    tg = float(np.dot(sc.market.power_price, schedule.tg_kw)) * dt
    li = 0.0
    for k in range(len(sc.devices.batteries)):
        li += battery_wear_rate(sc, k) * dt * float(
            (schedule.bat_d_kw[k] - schedule.bat_c_kw[k]).sum()
        )
    sofc = 0.0
    for k in range(len(sc.devices.fuel_cells)):
        sofc += fc_wear_rate(sc, k) * dt * float(schedule.g2p_kw[k].sum())
    self_et = 0.0
    self_ht = 0.0
    if schedule.se_p2g_kw.size:
        for k, et in enumerate(sc.devices.electrolyzers):
            self_et += et.unit_cost / (et.rated_kw * et.lifetime_h) * dt * float(
                schedule.se_p2g_kw[k].sum()
            )
        self_ht = sum(h.unit_cost * h.capacity_m3 / h.lifetime_h for h in sc.devices.tanks)
    g2p_payment = 0.0
    p2g_revenue = 0.0
    if price_g2p is not None:
        for t in range(T):
            g2p_payment += price_g2p[t] * float(schedule.g2p_m3[:, t].sum())
    if price_p2g is not None:
        for t in range(T):
            p2g_revenue += price_p2g[t] * float(schedule.p2g_kw[:, t].sum()) * dt
    hess = li + sofc + self_et + self_ht
    return AdnCostBreakdown(
        total=g2p_payment + tg + hess - p2g_revenue,
        tg=tg,
        li_wear=li,
        sofc_wear=sofc,
        self_et_wear=self_et,
        self_ht_hold=self_ht,
        hess=hess,
        g2p_payment=g2p_payment,
        p2g_revenue=p2g_revenue,
    )


def branchflow_tightness(sc: Scenario, schedule: AdnSchedule) -> float:
    """Max relative cone slack over branches and periods; <= 1e-4 is exact."""
    oriented = orient_radial(
        [b.id for b in sc.power.buses],
        [(b.from_bus, b.to_bus) for b in sc.power.branches],
        sc.power.slack,
    )
    worst = 0.0
    for up, down, e in oriented:
        for t in range(sc.horizon):
            rhs = schedule.cur_pu[e][t] + schedule.volt_pu[up][t]
            lhs = math.sqrt(
                (2.0 * schedule.flow_p_pu[e][t]) ** 2
                + (2.0 * schedule.flow_q_pu[e][t]) ** 2
                + (schedule.cur_pu[e][t] - schedule.volt_pu[up][t]) ** 2
            )
            worst = max(worst, (rhs - lhs) / max(abs(rhs), 1e-12))
    return worst


def simultaneous_flow_flag(schedule: AdnSchedule, sc: Scenario) -> bool:
    """True when any battery both charges and discharges materially in one
    period (economically suppressed, checked rather than excluded)."""
    for k, b in enumerate(sc.devices.batteries):
        thresh = 1e-6 * b.rated_kw
        for t in range(sc.horizon):
            if schedule.bat_d_kw[k][t] > thresh and -schedule.bat_c_kw[k][t] > thresh:
                return True
    return False


def solve_adn_standalone(sc: Scenario) -> tuple[AdnSchedule, AdnCostBreakdown]:
    """Independent ADN operation: trade quantities pinned to zero."""
    T = sc.horizon
    blend = BlendState.pure_methane(T, sc.blend)
    prog, av = build_adn_problem(
        sc, blend,
        fixed_p2g=np.zeros((len(sc.devices.electrolyzers), T)),
        fixed_g2p=np.zeros((len(sc.devices.fuel_cells), T)),
    )
    sol = solve_or_explain(prog.compile())
    sched = extract_adn_schedule(sc, av, sol, blend)
    return sched, adn_cost(sc, sched)
