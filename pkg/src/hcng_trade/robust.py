"""Immunizing the settled trade against forecast error.

Only the electric side is exposed: realized bus loads and DER availability
may land anywhere in a box around the forecast. The first stage (traded
profiles, prices, and the battery's planned net profile) must be fixed
before the realization shows; the battery's adjustment is the only
recourse. The resulting min-max-min settlement is solved by
constraint-and-column generation:

* Master: the quantity-round consensus ADMM, with one recourse block per
  stored realization riding in the electric local problem under an
  epigraph. Its settled value is a lower bound for the robust optimum.
* Subproblem: at a fixed first stage, the worst realization. The recourse
  cost is affine in the realization once dispatch is frozen, so the inner
  maximization lands on a box vertex with a sign rule per period; the
  outer alternation between the recourse dispatch and that vertex stops
  when the vertex repeats. The recourse-optimal cost at the final vertex
  upper-bounds the robust optimum.

Bounds close when the subproblem stops finding realizations the master
has not priced in. The disagreement point shifts accordingly: the
electric entity's fallback is its own standalone worst-case cost, found
by the same decomposition without the trade.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .adn import AdnCostBreakdown, AdnSchedule, adn_cost, build_adn_problem, extract_adn_schedule
from .bargain import (
    AdmmState,
    ConsensusMessage,
    Q1Result,
    TradeDecision,
    entity_views,
    log_margin,
    solve_q1_admm,
    solve_q2_admm,
    _build_q1_adn,
    _zero_trade,
)
from .conic import solve_or_explain
from .gdn import GdnSchedule, run_blend_fixed_point, solve_gdn_standalone
from .netmodel import BlendState, Scenario

Array = np.ndarray

CASES = ("case1", "case2", "case3", "case4")


# ---------------------------------------------------------------------------
# uncertainty geometry
# ---------------------------------------------------------------------------

@dataclass
class Realization:
    """One point of the uncertainty box."""

    load_kw: Array  # (buses, T)
    der_kw: Array  # (ders, T)

    def same_as(self, other: "Realization") -> bool:
        return np.array_equal(self.load_kw, other.load_kw) and np.array_equal(
            self.der_kw, other.der_kw
        )


def apply_case(sc: Scenario, case: str) -> Scenario:
    """Mask the deviation radii: case1 none, case2 load only, case3 DER
    only, case4 both."""
    if case not in CASES:
        raise ValueError(f"unknown case {case!r}; expected one of {CASES}")
    u = sc.uncertainty
    if case == "case1":
        u = replace(u, phi_load=0.0, phi_der=0.0)
    elif case == "case2":
        u = replace(u, phi_der=0.0)
    elif case == "case3":
        u = replace(u, phi_load=0.0)
    return replace(sc, uncertainty=u)


def forecast_arrays(sc: Scenario) -> tuple[Array, Array]:
    load = np.array([b.p_load_kw for b in sc.power.buses], dtype=float)
    der = np.array([d.p_forecast_kw for d in sc.devices.ders], dtype=float).reshape(
        len(sc.devices.ders), sc.horizon
    )
    return load, der


def box_bounds(sc: Scenario) -> tuple[Array, Array, Array, Array]:
    """(load_lo, load_hi, der_lo, der_hi). Zero-forecast entries collapse
    to a point and never become uncertain coordinates."""
    load, der = forecast_arrays(sc)
    u = sc.uncertainty
    if u.orientation == "symmetric":
        return (
            (1.0 - u.phi_load) * load,
            (1.0 + u.phi_load) * load,
            (1.0 - u.phi_der) * der,
            (1.0 + u.phi_der) * der,
        )
    if u.orientation == "asymmetric-up":
        # realized load only exceeds forecast; realized DER only falls short
        return load, (1.0 + u.phi_load) * load, (1.0 - u.phi_der) * der, der
    raise ValueError(f"unknown box orientation {u.orientation!r}")


def forecast_realization(sc: Scenario) -> Realization:
    load, der = forecast_arrays(sc)
    return Realization(load_kw=load, der_kw=der)


def uncertain_coordinates(sc: Scenario) -> int:
    load_lo, load_hi, der_lo, der_hi = box_bounds(sc)
    return int(np.count_nonzero(load_hi - load_lo)) + int(
        np.count_nonzero(der_hi - der_lo)
    )


# ---------------------------------------------------------------------------
# first stage and recourse
# ---------------------------------------------------------------------------

@dataclass
class FirstStage:
    """Everything the electric entity must commit before the realization."""

    p2g_kw: Array
    g2p_m3: Array
    battery_baseline: Array  # planned gross dispatch d+c (BAT, T)


@dataclass
class RecourseResult:
    value: float  # solver-scale cost of the recourse dispatch
    ops: float  # reported operating cost (breakdown total)
    breakdown: AdnCostBreakdown
    schedule: AdnSchedule
    adjustment: Array  # (BAT, T)
    realization: Realization


def solve_sp1(
    sc: Scenario,
    blend: BlendState,
    stage: FirstStage,
    realization: Realization,
    allow_adjust: bool = True,
) -> RecourseResult:
    """Recourse dispatch at a fixed first stage under one realization.

    Always feasible: the adjustment is free, the upstream purchase is
    uncapped, and DER dispatch may curtail; infeasibility here means the
    model inputs are broken, and the solve explains itself instead of
    cutting."""
    prog, av = build_adn_problem(
        sc, blend,
        fixed_p2g=stage.p2g_kw, fixed_g2p=stage.g2p_m3,
        load_real=realization.load_kw, der_real=realization.der_kw,
        baseline_battery=stage.battery_baseline,
        allow_adjust=allow_adjust,
    )
    sol = solve_or_explain(prog.compile())
    sched = extract_adn_schedule(sc, av, sol, blend)
    return RecourseResult(
        value=av.cost.value(sol.x),
        ops=adn_cost(sc, sched).total,
        breakdown=adn_cost(sc, sched),
        schedule=sched,
        adjustment=sched.bat_adj_kw,
        realization=realization,
    )


def evaluate_first_stage(
    sc: Scenario,
    blend: BlendState,
    stage: FirstStage,
    realization: Realization,
    allow_adjust: bool = True,
) -> RecourseResult:
    """Public name for pricing a committed first stage against one
    realization."""
    return solve_sp1(sc, blend, stage, realization, allow_adjust)


def solve_sp2(sc: Scenario) -> tuple[Realization, float]:
    """Worst box vertex of the affine surrogate.

    With dispatch frozen, each extra kW of load is served upstream at the
    period tariff and each kW of DER head-room withdrawn is replaced the
    same way, so the surrogate coefficient is the tariff with opposite
    signs for the two families. The argmax is therefore a vertex chosen
    per coordinate: loads high wherever the tariff is positive, DER low
    everywhere; zero-tariff ties go to the lower edge. Nothing in the rule
    depends on the first stage, which is what lets the alternation below
    terminate on a repeat.
    """
    load_lo, load_hi, der_lo, der_hi = box_bounds(sc)
    mu = np.asarray(sc.market.power_price, dtype=float)
    dt = sc.market.dt_h
    up = mu > 0.0
    load = np.where(up[None, :], load_hi, load_lo)
    der = der_lo.copy()
    value = float(np.dot(mu * dt, load.sum(axis=0) - der.sum(axis=0)))
    return Realization(load_kw=load, der_kw=der), value


@dataclass
class BcdStep:
    inner: int
    sp1_value: float
    sp2_value: float
    repeated: bool


@dataclass
class BcdResult:
    realization: Realization
    value: float  # solver-scale recourse cost at the final vertex
    ops: float
    breakdown: AdnCostBreakdown
    schedule: AdnSchedule
    adjustment: Array
    inner_iterations: int
    converged: bool
    steps: list[BcdStep]


def solve_sp_bcd(
    sc: Scenario,
    blend: BlendState,
    stage: FirstStage,
    start: Realization | None = None,
) -> BcdResult:
    """Alternate recourse dispatch and worst-vertex selection until the
    vertex repeats (or the inner cap trips). Returns the worst realization
    found with its recourse-optimal cost."""
    u = start or forecast_realization(sc)
    best = solve_sp1(sc, blend, stage, u)
    steps: list[BcdStep] = []
    converged = False
    inner = 0
    for inner in range(1, sc.algorithm.bcd_max_inner + 1):
        vertex, surrogate = solve_sp2(sc)
        repeated = vertex.same_as(u)
        steps.append(BcdStep(inner, best.value, surrogate, repeated))
        if repeated:
            converged = True
            break
        u = vertex
        cand = solve_sp1(sc, blend, stage, u)
        if cand.value >= best.value:
            best = cand
    return BcdResult(
        realization=best.realization,
        value=best.value,
        ops=best.ops,
        breakdown=best.breakdown,
        schedule=best.schedule,
        adjustment=best.adjustment,
        inner_iterations=inner,
        converged=converged,
        steps=steps,
    )


# ---------------------------------------------------------------------------
# constraint-and-column generation
# ---------------------------------------------------------------------------

@dataclass
class CcgStep:
    outer: int
    lower: float
    upper: float
    gap: float
    sp_value: float
    mp_iterations: int
    blend_rounds: int
    cut_added: bool
    realization: Realization


@dataclass
class RobustSolution:
    case: str
    c0_e: float  # electric fallback: standalone worst-case cost
    c0_g: float
    c_e: float
    c_g: float
    surplus_e: float
    surplus_g: float
    adn_worst_ops: float
    gdn_ops: float
    transfer: float
    trade: TradeDecision
    stage: FirstStage
    blend: BlendState
    worst: Realization
    recourse: RecourseResult
    adn_schedule: AdnSchedule  # committed forecast dispatch
    gdn_schedule: GdnSchedule
    steps: list[CcgStep]
    cuts: list[Realization]
    outer_iterations: int
    converged: bool
    q2_iterations: int
    q2_converged: bool
    no_bargain: bool
    messages: list[ConsensusMessage]
    standalone_steps: list[CcgStep]


def _running_bounds(lb: float, cand: float) -> float:
    # consensus settlement is exact but not exactly optimal, so the bound
    # sequence is kept monotone explicitly
    return max(lb, cand)


def adn_standalone_worst(
    sc: Scenario,
) -> tuple[float, RecourseResult, list[CcgStep], AdnSchedule]:
    """Standalone electric worst-case cost by the same decomposition with
    the trade pinned to zero. Returns the reported operating cost at the
    worst realization, that recourse, the bound trace, and the committed
    forecast dispatch behind the incumbent."""
    T = sc.horizon
    blend = BlendState.pure_methane(T, sc.blend)
    zeros_p = np.zeros((len(sc.devices.electrolyzers), T))
    zeros_g = np.zeros((len(sc.devices.fuel_cells), T))
    cuts: list[Realization] = []
    lb = -math.inf
    ub = math.inf
    best: RecourseResult | None = None
    best_master: AdnSchedule | None = None
    steps: list[CcgStep] = []
    converged = False
    outer = 0
    for outer in range(1, sc.algorithm.ccg_max_outer + 1):
        prog, av, theta, _ = _build_q1_adn(
            sc, blend, 0.0, 0.0,
            [(c.load_kw, c.der_kw) for c in cuts],
            fixed_p2g=zeros_p, fixed_g2p=zeros_g,
        )
        sol = solve_or_explain(prog.compile())
        value = sol.value(theta) if theta is not None else av.cost.value(sol.x)
        lb = _running_bounds(lb, value)
        sched = extract_adn_schedule(sc, av, sol, blend)
        stage = FirstStage(zeros_p, zeros_g, sched.bat_d_kw + sched.bat_c_kw)
        bcd = solve_sp_bcd(sc, blend, stage)
        if bcd.value < ub:
            ub = bcd.value
            best = RecourseResult(
                bcd.value, bcd.ops, bcd.breakdown, bcd.schedule,
                bcd.adjustment, bcd.realization,
            )
            best_master = sched
        gap = (ub - lb) / max(abs(ub), 1e-12)
        duplicate = any(bcd.realization.same_as(c) for c in cuts)
        steps.append(CcgStep(outer, lb, ub, gap, bcd.value, 0, 0, not duplicate, bcd.realization))
        if gap <= sc.algorithm.ccg_gap_tol:
            converged = True
            break
        if duplicate:
            break
        cuts.append(bcd.realization)
    if not converged and steps and steps[-1].gap > sc.algorithm.ccg_gap_tol:
        # honest cap: report the incumbent, the trace shows the residual gap
        pass
    assert best is not None and best_master is not None
    return best.ops, best, steps, best_master


def ccg(
    sc: Scenario,
    case: str = "case4",
    mode: str | None = None,
    collect_messages: bool = True,
) -> RobustSolution:
    """Robust settlement for one uncertainty case.

    The trading variant runs the full cut-generation loop around the
    consensus settlement. The self-conversion variant has no counterparty,
    so it reduces to each side's standalone problem with the electric one
    immunized by the same loop.
    """
    if sc.variant == "model3":
        raise ValueError("robust settlement needs a conversion path")
    sc_case = apply_case(sc, case)
    gdn_view, adn_view = entity_views(sc_case)

    gdn_sched0, gdn_break0 = solve_gdn_standalone(gdn_view)
    c0_g = gdn_break0.total
    c0_e, standalone_recourse, standalone_steps, standalone_master = (
        adn_standalone_worst(adn_view)
    )

    if sc_case.variant == "model2":
        converged = bool(standalone_steps) and (
            standalone_steps[-1].gap <= sc_case.algorithm.ccg_gap_tol
        )
        return RobustSolution(
            case=case,
            c0_e=c0_e, c0_g=c0_g, c_e=c0_e, c_g=c0_g,
            surplus_e=0.0, surplus_g=0.0,
            adn_worst_ops=standalone_recourse.ops, gdn_ops=gdn_break0.total,
            transfer=0.0,
            trade=_zero_trade(sc_case),
            stage=FirstStage(
                np.zeros((len(sc_case.devices.electrolyzers), sc_case.horizon)),
                np.zeros((len(sc_case.devices.fuel_cells), sc_case.horizon)),
                standalone_recourse.schedule.bat_d_kw
                + standalone_recourse.schedule.bat_c_kw
                - standalone_recourse.schedule.bat_adj_kw,
            ),
            blend=BlendState.pure_methane(sc_case.horizon, sc_case.blend),
            worst=standalone_recourse.realization,
            recourse=standalone_recourse,
            adn_schedule=standalone_master,
            gdn_schedule=gdn_sched0,
            steps=[], cuts=[],
            outer_iterations=len(standalone_steps), converged=converged,
            q2_iterations=0, q2_converged=True,
            no_bargain=True,
            messages=[],
            standalone_steps=standalone_steps,
        )

    cuts: list[Realization] = []
    lb = -math.inf
    ub = math.inf
    incumbent: tuple[FirstStage, Q1Result, BcdResult, BlendState] | None = None
    steps: list[CcgStep] = []
    messages: list[ConsensusMessage] = []
    holder: dict[str, AdmmState] = {}
    iter_offset = 0
    converged = False
    outer = 0

    for outer in range(1, sc_case.algorithm.ccg_max_outer + 1):
        rounds_seen: list[Q1Result] = []

        def solve_once(blend: BlendState):
            q1 = solve_q1_admm(
                sc_case, blend,
                cuts=[(c.load_kw, c.der_kw) for c in cuts],
                state=holder.get("state"),
                collect_messages=collect_messages,
            )
            holder["state"] = q1.state
            rounds_seen.append(q1)
            return q1, q1.gdn_schedule.h2_injected_m3, q1.gdn_schedule.hgn_m3

        q1, blend, blend_rounds = run_blend_fixed_point(sc_case, solve_once)
        for rnd, res in enumerate(rounds_seen, start=1):
            for m in res.messages:
                m.iteration += iter_offset
                m.round = rnd
                messages.append(m)
            iter_offset += res.iterations
        mp_iterations = sum(r.iterations for r in rounds_seen)

        lb = _running_bounds(lb, q1.gdn_value + q1.adn_value)
        stage = FirstStage(q1.p2g_kw, q1.g2p_m3, q1.battery_baseline)
        bcd = solve_sp_bcd(sc_case, blend, stage)
        ub_cand = q1.gdn_value + bcd.value
        if ub_cand < ub:
            ub = ub_cand
            incumbent = (stage, q1, bcd, blend)
        gap = (ub - lb) / max(abs(ub), 1e-12)
        duplicate = any(bcd.realization.same_as(c) for c in cuts)
        steps.append(CcgStep(
            outer, lb, ub, gap, bcd.value, mp_iterations, blend_rounds,
            not duplicate, bcd.realization,
        ))
        if gap <= sc_case.algorithm.ccg_gap_tol:
            converged = True
            break
        if duplicate:
            break
        cuts.append(bcd.realization)

    assert incumbent is not None
    stage, q1, bcd, blend = incumbent
    adn_worst_ops = bcd.ops
    gdn_ops = q1.gdn_breakdown.total
    s_e = c0_e - adn_worst_ops
    s_g = c0_g - gdn_ops
    margin = log_margin(sc_case, c0_e, c0_g)

    if s_e + s_g <= 2.0 * margin:
        return RobustSolution(
            case=case,
            c0_e=c0_e, c0_g=c0_g, c_e=c0_e, c_g=c0_g,
            surplus_e=0.0, surplus_g=0.0,
            adn_worst_ops=standalone_recourse.ops, gdn_ops=gdn_break0.total,
            transfer=0.0,
            trade=_zero_trade(sc_case),
            stage=FirstStage(
                np.zeros_like(stage.p2g_kw), np.zeros_like(stage.g2p_m3),
                standalone_recourse.schedule.bat_d_kw + standalone_recourse.schedule.bat_c_kw
                - standalone_recourse.schedule.bat_adj_kw,
            ),
            blend=blend,
            worst=standalone_recourse.realization,
            recourse=standalone_recourse,
            adn_schedule=standalone_master,
            gdn_schedule=gdn_sched0,
            steps=steps, cuts=cuts,
            outer_iterations=outer, converged=converged,
            q2_iterations=0, q2_converged=True,
            no_bargain=True,
            messages=messages,
            standalone_steps=standalone_steps,
        )

    q2 = solve_q2_admm(
        sc_case, blend, c0_e, c0_g, adn_worst_ops, gdn_ops,
        stage.p2g_kw, stage.g2p_m3,
        state=holder.get("state"), mode=mode, collect_messages=collect_messages,
    )
    messages.extend(q2.messages)
    trade = TradeDecision(
        p2g_kw=stage.p2g_kw, g2p_m3=stage.g2p_m3,
        price_p2g=q2.price_p2g, price_g2p=q2.price_g2p,
        gdn_p2g=stage.p2g_kw.copy(), gdn_g2p=stage.g2p_m3.copy(),
        adn_p2g=q1.adn_p2g, adn_g2p=q1.adn_g2p,
    )
    c_e = adn_worst_ops + q2.transfer
    c_g = gdn_ops - q2.transfer
    recourse = RecourseResult(
        bcd.value, bcd.ops, bcd.breakdown, bcd.schedule, bcd.adjustment,
        bcd.realization,
    )
    return RobustSolution(
        case=case,
        c0_e=c0_e, c0_g=c0_g, c_e=c_e, c_g=c_g,
        surplus_e=c0_e - c_e, surplus_g=c0_g - c_g,
        adn_worst_ops=adn_worst_ops, gdn_ops=gdn_ops,
        transfer=q2.transfer,
        trade=trade,
        stage=stage,
        blend=blend,
        worst=bcd.realization,
        recourse=recourse,
        adn_schedule=q1.adn_schedule,
        gdn_schedule=q1.gdn_schedule,
        steps=steps,
        cuts=cuts,
        outer_iterations=outer,
        converged=converged,
        q2_iterations=q2.iterations,
        q2_converged=q2.converged,
        no_bargain=False,
        messages=messages,
        standalone_steps=standalone_steps,
    )


def battery_recourse_value(
    sc: Scenario,
    blend: BlendState,
    stage: FirstStage,
    realization: Realization,
) -> float:
    """How much the battery's freedom to deviate from plan is worth under
    one realization: recourse cost with the adjustment pinned to zero
    minus with it free. Nonnegative by construction."""
    frozen = solve_sp1(sc, blend, stage, realization, allow_adjust=False)
    free = solve_sp1(sc, blend, stage, realization, allow_adjust=True)
    return frozen.value - free.value
