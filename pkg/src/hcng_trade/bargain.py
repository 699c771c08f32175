"""Cooperative trade settlement between the gas and electric entities.

The two networks trade electrolyzer power one way and blended gas the
other. Settlement runs in two rounds that mirror how the joint problem
separates:

1. Quantities. Maximizing the product of both entities' cost savings is,
   for any transfer-free split, equivalent to minimizing the sum of their
   operating costs. That joint dispatch is solved by consensus ADMM: each
   entity keeps a private copy of the traded profiles, a shared target is
   the average of the copies, and a multiplier price pulls the copies
   together. Neither side ever reads the other's network state, only the
   coupled profiles and multipliers.

2. Prices. With quantities frozen, the remaining degree of freedom is the
   payment schedule. Maximizing the product of the two surpluses splits
   the joint saving equally; the log-form objective is solved by the same
   consensus scheme over the per-period prices, with a small anchor that
   picks the commodity-indexed point from the flat manifold of equivalent
   schedules. A scalar fallback mode settles the transfer by bisection
   and spreads it across periods proportionally to traded energy value.

Robust dispatch reuses round 1: recourse blocks for stored worst-case
realizations ride along in the electric entity's local problem under an
epigraph variable, so the same message protocol covers the master problem
of the outer decomposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .adn import (
    AdnCostBreakdown,
    AdnSchedule,
    AdnVars,
    add_adn_block,
    adn_cost,
    extract_adn_schedule,
    solve_adn_standalone,
)
from .conic import ConicProgram, Lin, lsum, solve_or_explain
from .gdn import (
    GdnCostBreakdown,
    GdnSchedule,
    add_gdn_block,
    extract_gdn_schedule,
    g2p_volume_cap,
    gdn_cost,
    run_blend_fixed_point,
    solve_gdn_standalone,
)
from .netmodel import BlendState, DeviceFleet, Scenario

Array = np.ndarray


# ---------------------------------------------------------------------------
# shared types
# ---------------------------------------------------------------------------

@dataclass
class TradeDecision:
    """Settled trade: quantities, prices, and the final local copies."""

    p2g_kw: Array  # electrolyzer draw sold by the ADN, (ET, T)
    g2p_m3: Array  # blended gas sold by the GDN, (FC, T)
    price_p2g: Array  # $/kWh, (T,)
    price_g2p: Array  # $/m3, (T,)
    gdn_p2g: Array
    gdn_g2p: Array
    adn_p2g: Array
    adn_g2p: Array

    def transfer(self, dt: float) -> float:
        """Net payment from the electric to the gas entity."""
        gas_pay = float(np.dot(self.price_g2p, self.g2p_m3.sum(axis=0)))
        power_pay = float(np.dot(self.price_p2g, self.p2g_kw.sum(axis=0))) * dt
        return gas_pay - power_pay


@dataclass
class ConsensusMessage:
    """One coupled variable as exchanged in one iteration. This is the
    whole vocabulary of the negotiation; network internals never leave
    their owner."""

    iteration: int
    variable: str
    gdn_value: float
    adn_value: float
    multiplier: float
    phase: str = "quantity"  # quantity | price
    round: int = 1  # blend round for quantity messages


@dataclass
class AdmmState:
    """Multipliers and consensus targets, kept so later solves (another
    blend round, another master iteration) resume instead of restarting."""

    chi_p2g: Array  # (ET, T)
    chi_g2p: Array  # (FC, T)
    z_p2g: Array
    z_g2p: Array
    gamma_p2g: Array  # (T,)
    gamma_g2p: Array
    zp_p2g: Array | None
    zp_g2p: Array | None

    @classmethod
    def fresh(cls, n_et: int, n_fc: int, horizon: int) -> "AdmmState":
        return cls(
            chi_p2g=np.zeros((n_et, horizon)),
            chi_g2p=np.zeros((n_fc, horizon)),
            z_p2g=np.zeros((n_et, horizon)),
            z_g2p=np.zeros((n_fc, horizon)),
            gamma_p2g=np.zeros(horizon),
            gamma_g2p=np.zeros(horizon),
            zp_p2g=None,
            zp_g2p=None,
        )


@dataclass
class Q1Result:
    """Quantity round outcome at one frozen blend."""

    p2g_kw: Array  # settled at the gas entity's copy (always feasible there)
    g2p_m3: Array
    adn_p2g: Array  # electric entity's final local copy
    adn_g2p: Array
    adn_schedule: AdnSchedule
    gdn_schedule: GdnSchedule
    adn_breakdown: AdnCostBreakdown
    gdn_breakdown: GdnCostBreakdown
    adn_value: float  # solver-scale electric objective at settlement
    gdn_value: float  # solver-scale gas objective at settlement
    battery_baseline: Array  # first-stage net profile (BAT, T)
    cut_values: list[float]  # recourse block objectives at settlement
    cut_adjustments: list[Array]
    cut_schedules: list[AdnSchedule]
    iterations: int
    converged: bool
    state: AdmmState
    messages: list[ConsensusMessage]


@dataclass
class Q2Result:
    """Price round outcome."""

    price_p2g: Array
    price_g2p: Array
    transfer: float
    delta_e: float  # electric entity's surplus at these prices
    delta_g: float
    iterations: int
    converged: bool
    mode: str
    messages: list[ConsensusMessage]


@dataclass
class IndependentOutcome:
    """Disagreement point: each entity schedules alone, no trades."""

    c0_e: float
    c0_g: float
    adn_schedule: AdnSchedule
    gdn_schedule: GdnSchedule
    adn_breakdown: AdnCostBreakdown
    gdn_breakdown: GdnCostBreakdown


@dataclass
class BargainOutcome:
    variant: str
    c0_e: float
    c0_g: float
    c_e: float
    c_g: float
    surplus_e: float
    surplus_g: float
    joint_benefit: float
    transfer: float
    trade: TradeDecision
    blend: BlendState
    blend_rounds: int
    adn_schedule: AdnSchedule
    gdn_schedule: GdnSchedule
    adn_breakdown: AdnCostBreakdown
    gdn_breakdown: GdnCostBreakdown
    independent: IndependentOutcome
    q1_iterations: int
    q1_converged: bool
    q2_iterations: int
    q2_converged: bool
    no_bargain: bool
    messages: list[ConsensusMessage]


def nash_product(outcome: BargainOutcome) -> float:
    return max(outcome.surplus_e, 0.0) * max(outcome.surplus_g, 0.0)


def log_margin(sc: Scenario, c0_e: float, c0_g: float) -> float:
    """Smallest surplus either side may be left with in the price round."""
    return sc.algorithm.log_margin_factor * max(1.0, abs(c0_e) + abs(c0_g))


# ---------------------------------------------------------------------------
# ownership views per variant
# ---------------------------------------------------------------------------

def entity_views(sc: Scenario) -> tuple[Scenario, Scenario]:
    """(gas view, electric view) of the scenario under its variant.

    model1 trades through the coupling devices as given. model2 hands the
    electrolyzers, tanks, and fuel cells to the electric entity, which
    then runs them on pure hydrogen with no counterparty; the gas entity
    keeps only its pipeline customers. model3 drops the conversion fleet
    entirely and keeps the batteries.
    """
    if sc.variant == "model1":
        return sc, sc
    stripped = replace(
        sc.devices, electrolyzers=(), fuel_cells=(), tanks=()
    )
    if sc.variant == "model2":
        return replace(sc, devices=stripped), sc
    if sc.variant == "model3":
        bare = replace(sc, devices=stripped)
        return bare, bare
    raise ValueError(f"unknown variant {sc.variant!r}")


def solve_independent(sc: Scenario) -> IndependentOutcome:
    """Both disagreement schedules under the variant's ownership view."""
    gdn_view, adn_view = entity_views(sc)
    gdn_sched, gdn_break = solve_gdn_standalone(gdn_view)
    adn_sched, adn_break = solve_adn_standalone(adn_view)
    return IndependentOutcome(
        c0_e=adn_break.total,
        c0_g=gdn_break.total,
        adn_schedule=adn_sched,
        gdn_schedule=gdn_sched,
        adn_breakdown=adn_break,
        gdn_breakdown=gdn_break,
    )


# ---------------------------------------------------------------------------
# round 1: quantities by consensus ADMM
# ---------------------------------------------------------------------------

def _trade_scales(sc: Scenario, blend: BlendState) -> tuple[float, float]:
    p2g = max((et.rated_kw for et in sc.devices.electrolyzers), default=1.0)
    g2p = max(
        (
            g2p_volume_cap(sc, blend, k, t)
            for k in range(len(sc.devices.fuel_cells))
            for t in range(sc.horizon)
        ),
        default=1.0,
    )
    return p2g, g2p


def _penalty_weights(sc: Scenario, blend: BlendState) -> tuple[float, float]:
    """Quadratic weights sized so the penalty gradient at one quantity
    scale matches the commodity value that the multiplier has to reach."""
    mu_max = max(sc.market.power_price)
    eta = max((fc.efficiency for fc in sc.devices.fuel_cells), default=0.5)
    p2g_scale, g2p_scale = _trade_scales(sc, blend)
    rho1 = sc.algorithm.rho1 * mu_max * sc.market.dt_h / p2g_scale
    rho2 = sc.algorithm.rho2 * mu_max * sc.blend.hhv_ch4 * eta / g2p_scale
    return rho1, rho2


def _flat(vals: Sequence[Sequence[int]]) -> list[Lin]:
    return [Lin.var(idx) for row in vals for idx in row]


def _build_q1_gdn(sc: Scenario, blend: BlendState, rho1: float, rho2: float):
    prog = ConicProgram(f"q1-gdn:{sc.name}")
    gv = add_gdn_block(prog, sc, blend)
    prog.add_penalty_group("p2g", _flat(gv.p2g), rho1)
    prog.add_penalty_group("g2p", _flat(gv.g2p), rho2)
    return prog.compile(), gv


def _build_q1_adn(
    sc: Scenario,
    blend: BlendState,
    rho1: float,
    rho2: float,
    cuts: Sequence[tuple[Array, Array]],
    fixed_p2g: Array | None = None,
    fixed_g2p: Array | None = None,
):
    """Electric local problem: forecast block, plus one recourse block per
    stored realization bounded by a shared epigraph when cuts exist."""
    prog = ConicProgram(f"q1-adn:{sc.name}")
    self_conv = sc.variant == "model2"
    av = add_adn_block(
        prog, sc, blend,
        fixed_p2g=fixed_p2g, fixed_g2p=fixed_g2p,
        self_conversion=self_conv,
        include_cost_in_objective=not cuts,
    )
    theta = None
    cut_avs: list[AdnVars] = []
    if cuts:
        theta = prog.add_var("theta")
        prog.add_ineq(av.cost - Lin.var(theta), label="epigraph:main")
        baseline = [
            [Lin.var(av.bat_d[k][t]) + Lin.var(av.bat_c[k][t]) for t in range(sc.horizon)]
            for k in range(len(sc.devices.batteries))
        ]
        for l, (load_u, der_u) in enumerate(cuts):
            av_l = add_adn_block(
                prog, sc, blend, tag=f"cut{l}",
                load_real=load_u, der_real=der_u,
                baseline_battery=baseline, allow_adjust=True,
                self_conversion=self_conv,
                include_cost_in_objective=False,
            )
            # recourse keeps the first-stage trade, so tie the copies
            # (self-conversion has no trade links and nothing to tie)
            for k in range(len(av.p2g)):
                for t in range(sc.horizon):
                    prog.add_eq(
                        Lin.var(av_l.p2g[k][t]) - Lin.var(av.p2g[k][t]),
                        label=f"tie-p2g:cut{l}[{k},{t}]",
                    )
            for k in range(len(av.g2p)):
                for t in range(sc.horizon):
                    prog.add_eq(
                        Lin.var(av_l.g2p[k][t]) - Lin.var(av.g2p[k][t]),
                        label=f"tie-g2p:cut{l}[{k},{t}]",
                    )
            prog.add_ineq(av_l.cost - Lin.var(theta), label=f"epigraph:cut{l}")
            cut_avs.append(av_l)
        prog.add_obj(Lin.var(theta))
    if fixed_p2g is None:
        prog.add_penalty_group("p2g", _flat(av.p2g), rho1)
        prog.add_penalty_group("g2p", _flat(av.g2p), rho2)
    return prog, av, theta, cut_avs


def _trade_names(sc: Scenario) -> tuple[list[str], list[str]]:
    T = sc.horizon
    p = [f"p2g[{et.id},{t}]" for et in sc.devices.electrolyzers for t in range(T)]
    g = [f"g2p[{fc.id},{t}]" for fc in sc.devices.fuel_cells for t in range(T)]
    return p, g


def solve_q1_admm(
    sc: Scenario,
    blend: BlendState,
    cuts: Sequence[tuple[Array, Array]] | None = None,
    state: AdmmState | None = None,
    collect_messages: bool = True,
) -> Q1Result:
    """Settle the traded quantities at a frozen blend.

    Both entities solve against the same iteration snapshot (targets and
    multipliers from the previous sweep), so the result does not depend on
    which one answers first. Terminates when the copies agree and the
    consensus target has stopped moving, both to ``admm_tol`` relative to
    the quantity scale.

    ``cuts`` is a list of (load, DER) realizations whose recourse blocks
    ride along in the electric local problem; with none, this is plain
    deterministic settlement.
    """
    T = sc.horizon
    n_et = len(sc.devices.electrolyzers)
    n_fc = len(sc.devices.fuel_cells)
    cuts = list(cuts or [])
    if state is None:
        state = AdmmState.fresh(n_et, n_fc, T)
    rho1, rho2 = _penalty_weights(sc, blend)
    p2g_scale, g2p_scale = _trade_scales(sc, blend)
    tol_p = sc.algorithm.admm_tol * p2g_scale
    tol_g = sc.algorithm.admm_tol * g2p_scale

    gdn_comp, gv = _build_q1_gdn(sc, blend, rho1, rho2)
    adn_prog, av, _, _ = _build_q1_adn(sc, blend, rho1, rho2, cuts)
    adn_comp = adn_prog.compile()

    gdn_p_idx = [i for row in gv.p2g for i in row]
    gdn_g_idx = [i for row in gv.g2p for i in row]
    adn_p_idx = [i for row in av.p2g for i in row]
    adn_g_idx = [i for row in av.g2p for i in row]
    name_p, name_g = _trade_names(sc)

    chi_p = state.chi_p2g.reshape(-1).copy()
    chi_g = state.chi_g2p.reshape(-1).copy()
    z_p = state.z_p2g.reshape(-1).copy()
    z_g = state.z_g2p.reshape(-1).copy()

    messages: list[ConsensusMessage] = []
    iterations = 0
    converged = False
    xg_p, xg_g = z_p, z_g
    xa_p, xa_g = z_p, z_g
    sol_g = None
    for it in range(1, sc.algorithm.admm_max_iter + 1):
        iterations = it
        gdn_comp.set_group("p2g", chi_p, z_p)
        gdn_comp.set_group("g2p", chi_g, z_g)
        adn_comp.set_group("p2g", -chi_p, z_p)
        adn_comp.set_group("g2p", -chi_g, z_g)
        sol_g = solve_or_explain(gdn_comp)
        sol_a = solve_or_explain(adn_comp)
        xg_p = sol_g.values(gdn_p_idx) if gdn_p_idx else np.zeros(0)
        xg_g = sol_g.values(gdn_g_idx) if gdn_g_idx else np.zeros(0)
        xa_p = sol_a.values(adn_p_idx) if adn_p_idx else np.zeros(0)
        xa_g = sol_a.values(adn_g_idx) if adn_g_idx else np.zeros(0)

        if collect_messages:
            for j, name in enumerate(name_p):
                messages.append(ConsensusMessage(it, name, float(xg_p[j]), float(xa_p[j]), float(chi_p[j])))
            for j, name in enumerate(name_g):
                messages.append(ConsensusMessage(it, name, float(xg_g[j]), float(xa_g[j]), float(chi_g[j])))

        r_p = float(np.max(np.abs(xg_p - xa_p), initial=0.0))
        r_g = float(np.max(np.abs(xg_g - xa_g), initial=0.0))
        z_p_new = 0.5 * (xg_p + xa_p)
        z_g_new = 0.5 * (xg_g + xa_g)
        s_p = float(np.max(np.abs(z_p_new - z_p), initial=0.0))
        s_g = float(np.max(np.abs(z_g_new - z_g), initial=0.0))
        chi_p = chi_p + 0.5 * rho1 * (xg_p - xa_p)
        chi_g = chi_g + 0.5 * rho2 * (xg_g - xa_g)
        z_p, z_g = z_p_new, z_g_new
        if r_p <= tol_p and r_g <= tol_g and s_p <= tol_p and s_g <= tol_g:
            converged = True
            break

    state = AdmmState(
        chi_p2g=chi_p.reshape(n_et, T),
        chi_g2p=chi_g.reshape(n_fc, T),
        z_p2g=z_p.reshape(n_et, T),
        z_g2p=z_g.reshape(n_fc, T),
        gamma_p2g=state.gamma_p2g,
        gamma_g2p=state.gamma_g2p,
        zp_p2g=state.zp_p2g,
        zp_g2p=state.zp_g2p,
    )

    # settle at the gas entity's copy: it satisfies the blend cap and the
    # device ratings, which are the only trade constraints either side has;
    # sub-microscale residues are consensus noise, not trades
    p2g_kw = np.maximum(xg_p.reshape(n_et, T), 0.0)
    g2p_m3 = np.maximum(xg_g.reshape(n_fc, T), 0.0)
    p2g_kw[p2g_kw < 1e-6 * p2g_scale] = 0.0
    g2p_m3[g2p_m3 < 1e-6 * g2p_scale] = 0.0
    gdn_sched = extract_gdn_schedule(sc, gv, sol_g)
    gdn_break = gdn_cost(sc, gdn_sched)
    gdn_value = gdn_break.total + gdn_break.pressure_penalty

    settle_prog, av_s, theta_s, cut_avs_s = _build_q1_adn(
        sc, blend, rho1, rho2, cuts, fixed_p2g=p2g_kw, fixed_g2p=g2p_m3
    )
    sol_s = solve_or_explain(settle_prog.compile())
    adn_sched = extract_adn_schedule(sc, av_s, sol_s, blend)
    adn_break = adn_cost(sc, adn_sched)
    adn_value = sol_s.value(theta_s) if theta_s is not None else av_s.cost.value(sol_s.x)
    baseline = adn_sched.bat_d_kw + adn_sched.bat_c_kw
    cut_values = [avl.cost.value(sol_s.x) for avl in cut_avs_s]
    cut_adjustments = [
        np.array([[sol_s.value(i) for i in row] for row in avl.bat_adj]).reshape(
            len(sc.devices.batteries), T
        )
        if avl.bat_adj
        else np.zeros((len(sc.devices.batteries), T))
        for avl in cut_avs_s
    ]
    cut_schedules = [extract_adn_schedule(sc, avl, sol_s, blend) for avl in cut_avs_s]

    return Q1Result(
        p2g_kw=p2g_kw,
        g2p_m3=g2p_m3,
        adn_p2g=np.maximum(xa_p.reshape(n_et, T), 0.0),
        adn_g2p=np.maximum(xa_g.reshape(n_fc, T), 0.0),
        adn_schedule=adn_sched,
        gdn_schedule=gdn_sched,
        adn_breakdown=adn_break,
        gdn_breakdown=gdn_break,
        adn_value=adn_value,
        gdn_value=gdn_value,
        battery_baseline=baseline,
        cut_values=cut_values,
        cut_adjustments=cut_adjustments,
        cut_schedules=cut_schedules,
        iterations=iterations,
        converged=converged,
        state=state,
        messages=messages,
    )


@dataclass
class CentralizedResult:
    """Joint dispatch solved as one program, trades tied by equality."""

    joint_ops: float
    p2g_kw: Array
    g2p_m3: Array
    adn_schedule: AdnSchedule
    gdn_schedule: GdnSchedule
    adn_breakdown: AdnCostBreakdown
    gdn_breakdown: GdnCostBreakdown
    blend: BlendState
    blend_rounds: int


def solve_q1_centralized(
    sc: Scenario,
    blend: BlendState | None = None,
    pinned_g2p_kwh: float | None = None,
) -> CentralizedResult:
    """Trusted single-program reference for the consensus settlement.

    ``pinned_g2p_kwh`` pins the total electric energy the fuel cells
    deliver, which turns two solves of this function into a finite
    difference for the marginal conversion cost. Passing ``blend``
    freezes the gas quality instead of iterating it to its fixed point.
    """
    def build_and_solve(bl: BlendState):
        prog = ConicProgram(f"central:{sc.name}")
        gv = add_gdn_block(prog, sc, bl)
        av = add_adn_block(prog, sc, bl)
        for k in range(len(gv.p2g)):
            for t in range(sc.horizon):
                prog.add_eq(
                    Lin.var(gv.p2g[k][t]) - Lin.var(av.p2g[k][t]),
                    label=f"tie-p2g[{k},{t}]",
                )
        for k in range(len(gv.g2p)):
            for t in range(sc.horizon):
                prog.add_eq(
                    Lin.var(gv.g2p[k][t]) - Lin.var(av.g2p[k][t]),
                    label=f"tie-g2p[{k},{t}]",
                )
        if pinned_g2p_kwh is not None:
            total = Lin.of(-float(pinned_g2p_kwh))
            for k, fc in enumerate(sc.devices.fuel_cells):
                for t in range(sc.horizon):
                    total = total + Lin.var(av.g2p[k][t], bl.hhv[t] * fc.efficiency)
            prog.add_eq(total, label="g2p-energy-pin")
        sol = solve_or_explain(prog.compile())
        gs = extract_gdn_schedule(sc, gv, sol)
        asch = extract_adn_schedule(sc, av, sol, bl)
        return (gs, asch), gs.h2_injected_m3, gs.hgn_m3

    if blend is not None:
        (gs, asch), _, _ = build_and_solve(blend)
        final_blend, rounds = blend, 0
    else:
        (gs, asch), final_blend, rounds = run_blend_fixed_point(sc, build_and_solve)
    gb = gdn_cost(sc, gs)
    ab = adn_cost(sc, asch)
    return CentralizedResult(
        joint_ops=ab.total + gb.total,
        p2g_kw=gs.p2g_kw,
        g2p_m3=gs.g2p_m3,
        adn_schedule=asch,
        gdn_schedule=gs,
        adn_breakdown=ab,
        gdn_breakdown=gb,
        blend=final_blend,
        blend_rounds=rounds,
    )


# ---------------------------------------------------------------------------
# round 2: prices
# ---------------------------------------------------------------------------

def price_anchors(sc: Scenario, blend: BlendState) -> tuple[Array, Array]:
    """Commodity-indexed reference prices.

    Power trades reference the grid tariff; gas trades reference the
    source price scaled up to the blend's heat content, so a cubic meter
    of enriched gas is indexed to the methane it displaces.
    """
    mu = np.asarray(sc.market.power_price, dtype=float)
    eps = np.asarray(sc.market.gas_price, dtype=float)
    return mu.copy(), eps * np.asarray(blend.hhv) / sc.blend.hhv_ch4


def _q2_weights(coefs: Array, s_half: float, rho_base: float) -> Array:
    # match the log curvature: a payment lever with coefficient c moves the
    # surplus by c per price unit, and the log steepens as 1/s_half
    ref = float(coefs.max(initial=0.0))
    c = coefs + 0.01 * ref + 1e-9
    return rho_base * np.square(c / s_half) + 1e-8


def _build_q2_local(
    sc: Scenario,
    side: str,
    surplus0: float,
    pay_kwh: Array,
    gas_m3: Array,
    refs: tuple[Array, Array],
    caps: tuple[Array, Array],
    rho_pe: Array,
    rho_pg: Array,
    margin: float,
    anchor_w: float,
):
    """One entity's price problem: keep your own surplus positive and as
    large as the log makes worthwhile, near the commodity anchors."""
    T = len(pay_kwh)
    ref_pe, ref_pg = refs
    cap_pe, cap_pg = caps
    sign = 1.0 if side == "gdn" else -1.0
    prog = ConicProgram(f"q2-{side}:{sc.name}")
    pe = [prog.add_var(f"pe[{t}]", 0.0, cap_pe[t]) for t in range(T)]
    pg = [prog.add_var(f"pg[{t}]", 0.0, cap_pg[t]) for t in range(T)]
    surplus = Lin.of(surplus0)
    for t in range(T):
        surplus = surplus + Lin.var(pg[t], sign * gas_m3[t])
        surplus = surplus + Lin.var(pe[t], -sign * pay_kwh[t])
    prog.add_log(1.0, surplus, margin)
    for t in range(T):
        prog.add_square(anchor_w, Lin.var(pe[t]) - float(ref_pe[t]))
        prog.add_square(anchor_w, Lin.var(pg[t]) - float(ref_pg[t]))
    prog.add_penalty_group("pe", [Lin.var(i) for i in pe], rho_pe)
    prog.add_penalty_group("pg", [Lin.var(i) for i in pg], rho_pg)
    return prog.compile(), pe, pg


def solve_q2_admm(
    sc: Scenario,
    blend: BlendState,
    c0_e: float,
    c0_g: float,
    adn_ops: float,
    gdn_ops: float,
    p2g_kw: Array,
    g2p_m3: Array,
    state: AdmmState | None = None,
    mode: str | None = None,
    collect_messages: bool = True,
) -> Q2Result:
    """Split the settled joint saving by pricing the traded profiles.

    The default exp-cone mode maximizes the sum of the two surplus logs by
    consensus over the per-period prices; at the optimum the marginal log
    terms agree, which is the equal split. ``transfer-bisection`` instead
    settles the scalar transfer directly and spreads it over the periods
    by traded energy value.
    """
    mode = mode or sc.algorithm.q2_mode
    T = sc.horizon
    dt = sc.market.dt_h
    pay_kwh = p2g_kw.sum(axis=0) * dt  # kWh bought from the ADN per period
    gas_m3 = g2p_m3.sum(axis=0)
    s_e = c0_e - adn_ops
    s_g = c0_g - gdn_ops
    margin = log_margin(sc, c0_e, c0_g)
    refs = price_anchors(sc, blend)
    caps = (
        sc.algorithm.price_cap_factor * np.maximum(refs[0], 0.0),
        sc.algorithm.price_cap_factor * np.maximum(refs[1], 0.0),
    )

    if mode == "transfer-bisection":
        return _transfer_bisection(sc, s_e, s_g, pay_kwh, gas_m3, refs, caps, margin)
    if mode != "exp-cone":
        raise ValueError(f"unknown price mode {mode!r}")

    if state is None:
        state = AdmmState.fresh(
            len(sc.devices.electrolyzers), len(sc.devices.fuel_cells), T
        )
    s_half = max(0.5 * (s_e + s_g), 10.0 * margin)
    rho_pe = _q2_weights(pay_kwh, s_half, sc.algorithm.rho3)
    rho_pg = _q2_weights(gas_m3, s_half, sc.algorithm.rho4)
    # a price on an untraded quantity moves no money; such coordinates are
    # flat for both sides, so pin them to the reference with a firm weight
    # and keep them out of the convergence test
    live_pe = pay_kwh > 0.0
    live_pg = gas_m3 > 0.0
    rho_pe = np.where(live_pe, rho_pe, 1.0)
    rho_pg = np.where(live_pg, rho_pg, 1.0)
    ref_pe = np.minimum(refs[0], caps[0])
    ref_pg = np.minimum(refs[1], caps[1])
    anchor_w = sc.algorithm.price_anchor_weight
    gdn_c, g_pe, g_pg = _build_q2_local(
        sc, "gdn", s_g, pay_kwh, gas_m3, refs, caps, rho_pe, rho_pg, margin, anchor_w
    )
    adn_c, a_pe, a_pg = _build_q2_local(
        sc, "adn", s_e, pay_kwh, gas_m3, refs, caps, rho_pe, rho_pg, margin, anchor_w
    )

    gamma_e = state.gamma_p2g.copy()
    gamma_g = state.gamma_g2p.copy()
    z_pe = state.zp_p2g.copy() if state.zp_p2g is not None else ref_pe.copy()
    z_pg = state.zp_g2p.copy() if state.zp_g2p is not None else ref_pg.copy()
    z_pe = np.where(live_pe, z_pe, ref_pe)
    z_pg = np.where(live_pg, z_pg, ref_pg)
    scale_pe = np.maximum(refs[0], 0.01 * float(refs[0].max(initial=0.0)) + 1e-9)
    scale_pg = np.maximum(refs[1], 0.01 * float(refs[1].max(initial=0.0)) + 1e-9)
    tol = sc.algorithm.admm_tol

    messages: list[ConsensusMessage] = []
    iterations = 0
    converged = False
    for it in range(1, sc.algorithm.admm_max_iter + 1):
        iterations = it
        gdn_c.set_group("pe", gamma_e, z_pe)
        gdn_c.set_group("pg", gamma_g, z_pg)
        adn_c.set_group("pe", -gamma_e, z_pe)
        adn_c.set_group("pg", -gamma_g, z_pg)
        sol_g = solve_or_explain(gdn_c)
        sol_a = solve_or_explain(adn_c)
        xg_pe, xg_pg = sol_g.values(g_pe), sol_g.values(g_pg)
        xa_pe, xa_pg = sol_a.values(a_pe), sol_a.values(a_pg)
        if collect_messages:
            for t in range(T):
                messages.append(ConsensusMessage(
                    it, f"price-p2g[{t}]", float(xg_pe[t]), float(xa_pe[t]),
                    float(gamma_e[t]), phase="price", round=0,
                ))
                messages.append(ConsensusMessage(
                    it, f"price-g2p[{t}]", float(xg_pg[t]), float(xa_pg[t]),
                    float(gamma_g[t]), phase="price", round=0,
                ))
        r_ok = (
            np.all(np.abs(xg_pe - xa_pe)[live_pe] <= (tol * scale_pe)[live_pe])
            and np.all(np.abs(xg_pg - xa_pg)[live_pg] <= (tol * scale_pg)[live_pg])
        )
        z_pe_new = np.where(live_pe, 0.5 * (xg_pe + xa_pe), ref_pe)
        z_pg_new = np.where(live_pg, 0.5 * (xg_pg + xa_pg), ref_pg)
        s_ok = (
            np.all(np.abs(z_pe_new - z_pe)[live_pe] <= (tol * scale_pe)[live_pe])
            and np.all(np.abs(z_pg_new - z_pg)[live_pg] <= (tol * scale_pg)[live_pg])
        )
        gamma_e = gamma_e + 0.5 * rho_pe * np.where(live_pe, xg_pe - xa_pe, 0.0)
        gamma_g = gamma_g + 0.5 * rho_pg * np.where(live_pg, xg_pg - xa_pg, 0.0)
        z_pe, z_pg = z_pe_new, z_pg_new
        if r_ok and s_ok:
            converged = True
            break

    state.gamma_p2g = gamma_e
    state.gamma_g2p = gamma_g
    state.zp_p2g = z_pe
    state.zp_g2p = z_pg
    transfer = float(np.dot(z_pg, gas_m3) - np.dot(z_pe, pay_kwh))
    return Q2Result(
        price_p2g=z_pe,
        price_g2p=z_pg,
        transfer=transfer,
        delta_e=s_e - transfer,
        delta_g=s_g + transfer,
        iterations=iterations,
        converged=converged,
        mode=mode,
        messages=messages,
    )


def _transfer_bisection(
    sc: Scenario,
    s_e: float,
    s_g: float,
    pay_kwh: Array,
    gas_m3: Array,
    refs: tuple[Array, Array],
    caps: tuple[Array, Array],
    margin: float,
) -> Q2Result:
    """Scalar fallback: the optimal transfer solves
    1/(s_g + T) = 1/(s_e - T); bisect its monotone residual, then turn the
    transfer into per-period prices proportional to traded energy value."""
    ref_pe, ref_pg = refs
    cap_pe, cap_pg = caps
    lo = -s_g + margin
    hi = s_e - margin
    if hi <= lo:
        raise ValueError("price round started with no joint saving to split")

    def residual(tr: float) -> float:
        return 1.0 / (s_g + tr) - 1.0 / (s_e - tr)

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if residual(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(1.0, abs(s_e) + abs(s_g)):
            break
    transfer_star = 0.5 * (lo + hi)

    power_pay = float(np.dot(ref_pe, pay_kwh))
    price_pe = ref_pe.copy()
    price_pg = ref_pg.copy()
    gas_value = ref_pg * gas_m3
    if gas_value.sum() > 0.0:
        gas_total = transfer_star + power_pay
        shares = gas_value / gas_value.sum()
        with np.errstate(divide="ignore", invalid="ignore"):
            raw = np.where(gas_m3 > 0.0, gas_total * shares / np.where(gas_m3 > 0, gas_m3, 1.0), ref_pg)
        price_pg = np.clip(raw, 0.0, cap_pg)
    elif power_pay > 0.0:
        price_pg = np.minimum(ref_pg, cap_pg)
        scale = (power_pay - transfer_star) / power_pay
        price_pe = np.clip(ref_pe * scale, 0.0, cap_pe)
    transfer = float(np.dot(price_pg, gas_m3) - np.dot(price_pe, pay_kwh))
    deviation = abs((s_e - transfer) - (s_g + transfer))
    tol = 0.01 * max(s_e + s_g, 1e-12)
    return Q2Result(
        price_p2g=price_pe,
        price_g2p=price_pg,
        transfer=transfer,
        delta_e=s_e - transfer,
        delta_g=s_g + transfer,
        iterations=1,
        converged=deviation <= tol,
        mode="transfer-bisection",
        messages=[],
    )


# ---------------------------------------------------------------------------
# the full pipeline
# ---------------------------------------------------------------------------

def _zero_trade(sc: Scenario) -> TradeDecision:
    T = sc.horizon
    e = np.zeros((len(sc.devices.electrolyzers), T))
    f = np.zeros((len(sc.devices.fuel_cells), T))
    return TradeDecision(
        p2g_kw=e, g2p_m3=f,
        price_p2g=np.zeros(T), price_g2p=np.zeros(T),
        gdn_p2g=e.copy(), gdn_g2p=f.copy(),
        adn_p2g=e.copy(), adn_g2p=f.copy(),
    )


def _independent_outcome(
    sc: Scenario, ind: IndependentOutcome, blend_rounds: int = 0,
    q1_iterations: int = 0, q1_converged: bool = True,
    messages: list[ConsensusMessage] | None = None,
) -> BargainOutcome:
    return BargainOutcome(
        variant=sc.variant,
        c0_e=ind.c0_e, c0_g=ind.c0_g,
        c_e=ind.c0_e, c_g=ind.c0_g,
        surplus_e=0.0, surplus_g=0.0,
        joint_benefit=0.0, transfer=0.0,
        trade=_zero_trade(sc),
        blend=ind.gdn_schedule.blend,
        blend_rounds=blend_rounds,
        adn_schedule=ind.adn_schedule,
        gdn_schedule=ind.gdn_schedule,
        adn_breakdown=ind.adn_breakdown,
        gdn_breakdown=ind.gdn_breakdown,
        independent=ind,
        q1_iterations=q1_iterations, q1_converged=q1_converged,
        q2_iterations=0, q2_converged=True,
        no_bargain=True,
        messages=messages or [],
    )


def bargain(
    sc: Scenario,
    mode: str | None = None,
    collect_messages: bool = True,
) -> BargainOutcome:
    """Full settlement: disagreement points, quantity round inside the
    blend fixed point, then the price round. Non-trading variants and a
    nonpositive joint saving fall back to independent operation."""
    ind = solve_independent(sc)
    if sc.variant != "model1" or (
        not sc.devices.electrolyzers and not sc.devices.fuel_cells
    ):
        return _independent_outcome(sc, ind)

    rounds_seen: list[Q1Result] = []
    holder: dict[str, AdmmState] = {}

    def solve_once(blend: BlendState) -> tuple[Q1Result, Array, Array]:
        q1 = solve_q1_admm(
            sc, blend, state=holder.get("state"), collect_messages=collect_messages
        )
        holder["state"] = q1.state
        rounds_seen.append(q1)
        return q1, q1.gdn_schedule.h2_injected_m3, q1.gdn_schedule.hgn_m3

    q1, blend, blend_rounds = run_blend_fixed_point(sc, solve_once)

    messages: list[ConsensusMessage] = []
    offset = 0
    for rnd, res in enumerate(rounds_seen, start=1):
        for m in res.messages:
            m.iteration += offset
            m.round = rnd
            messages.append(m)
        offset += res.iterations
    q1_iterations = offset
    q1_converged = all(r.converged for r in rounds_seen)

    adn_ops = q1.adn_breakdown.total
    gdn_ops = q1.gdn_breakdown.total
    s_total = (ind.c0_e - adn_ops) + (ind.c0_g - gdn_ops)
    margin = log_margin(sc, ind.c0_e, ind.c0_g)
    if s_total <= 2.0 * margin:
        return _independent_outcome(
            sc, ind, blend_rounds, q1_iterations, q1_converged, messages
        )

    q2 = solve_q2_admm(
        sc, blend, ind.c0_e, ind.c0_g, adn_ops, gdn_ops,
        q1.p2g_kw, q1.g2p_m3,
        state=holder.get("state"), mode=mode, collect_messages=collect_messages,
    )
    messages.extend(q2.messages)

    trade = TradeDecision(
        p2g_kw=q1.p2g_kw, g2p_m3=q1.g2p_m3,
        price_p2g=q2.price_p2g, price_g2p=q2.price_g2p,
        gdn_p2g=q1.p2g_kw.copy(), gdn_g2p=q1.g2p_m3.copy(),
        adn_p2g=q1.adn_p2g, adn_g2p=q1.adn_g2p,
    )
    c_e = adn_ops + q2.transfer
    c_g = gdn_ops - q2.transfer
    return BargainOutcome(
        variant=sc.variant,
        c0_e=ind.c0_e, c0_g=ind.c0_g,
        c_e=c_e, c_g=c_g,
        surplus_e=ind.c0_e - c_e, surplus_g=ind.c0_g - c_g,
        joint_benefit=s_total, transfer=q2.transfer,
        trade=trade,
        blend=blend,
        blend_rounds=blend_rounds,
        adn_schedule=q1.adn_schedule,
        gdn_schedule=q1.gdn_schedule,
        adn_breakdown=adn_cost(sc, q1.adn_schedule, q2.price_p2g, q2.price_g2p),
        gdn_breakdown=gdn_cost(sc, q1.gdn_schedule, q2.price_p2g, q2.price_g2p),
        independent=ind,
        q1_iterations=q1_iterations, q1_converged=q1_converged,
        q2_iterations=q2.iterations, q2_converged=q2.converged,
        no_bargain=False,
        messages=messages,
    )
