"""Command line: scenario ingestion, pipeline selection, artifact emission.

Two invocation forms:

    hcng-trade --scenario tiny4x3 --mode cooperative [--out DIR] ...
    hcng-trade compare RUN_DIR RUN_DIR [...] --out DIR

A run executes one pipeline (independent, cooperative, robust, or the
oracle certificate suite) and writes CSV artifacts into the output
directory. Every file starts with a comment line carrying the schema
version and the scenario content hash, and identical configurations
produce byte-identical files: no timestamps, no machine state, and the
pipelines themselves are deterministic.

Exit codes: 0 success, 1 certificate failure (oracle suite only),
2 validation error, 3 solver error, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, fields as dataclass_fields, is_dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .adn import AdnSchedule, adn_cost, build_adn_problem, extract_adn_schedule
from .bargain import (
    BargainOutcome,
    bargain,
    nash_product,
    solve_independent,
    solve_q1_centralized,
)
from .conic import InfeasibleModel, Lin, SolverFailure, solve_or_explain
from .gdn import GdnSchedule
from .netmodel import (
    BlendState,
    Scenario,
    ScenarioFormatError,
    ScenarioValidationError,
    load_bundled,
    load_scenario,
    scenario_content_hash,
)
from .oracle import run_oracle_suite
from .robust import CASES, RobustSolution, ccg

Array = np.ndarray

SCHEMA_VERSION = "1"
MODES = ("independent", "cooperative", "robust", "oracle-suite")
VARIANTS = ("model1", "model2", "model3")

EXIT_OK = 0
EXIT_CERT_FAIL = 1
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_NONCONVERGENCE = 4

MARGINAL_STEP_KWH = 1.0  # finite-difference step for the conversion cost


class ValidationError(Exception):
    pass


@dataclass
class RunConfig:
    """One resolved invocation. ``seed`` is recorded for provenance; every
    pipeline is deterministic, so nothing consumes it."""

    scenario: str
    mode: str
    out: Path
    variant: str | None = None
    cases: tuple[str, ...] = ("case4",)
    overrides: tuple[tuple[str, str], ...] = ()
    emit_trace: bool = False
    seed: int = 0


# ---------------------------------------------------------------------------
# config resolution
# ---------------------------------------------------------------------------

def _load(config: RunConfig) -> Scenario:
    name = config.scenario
    if name.endswith((".yaml", ".yml")) or "/" in name or Path(name).exists():
        sc = load_scenario(name)
    else:
        sc = load_bundled(name)
    for key, raw in config.overrides:
        sc = _apply_override(sc, key, raw)
    if config.variant is not None:
        sc = replace(sc, variant=config.variant)
    return sc


def _apply_override(sc: Scenario, key: str, raw: str):
    """Set a dotted scenario field (e.g. algorithm.admm_tol=1e-4) on the
    frozen dataclass tree, coercing to the current value's type."""
    parts = key.split(".")
    target = sc
    chain = [sc]
    for part in parts[:-1]:
        if not is_dataclass(target) or not hasattr(target, part):
            raise ValidationError(f"unknown override path {key!r}")
        target = getattr(target, part)
        chain.append(target)
    leaf = parts[-1]
    if not is_dataclass(target) or leaf not in {f.name for f in dataclass_fields(target)}:
        raise ValidationError(f"unknown override key {key!r}")
    current = getattr(target, leaf)
    try:
        if isinstance(current, bool):
            value = raw.lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            value = int(raw)
        elif isinstance(current, float) or current is None:
            value = float(raw)
        elif isinstance(current, str):
            value = raw
        else:
            raise ValidationError(
                f"override {key!r} targets a non-scalar field"
            )
    except ValueError as err:
        raise ValidationError(f"override {key}={raw!r}: {err}") from err
    patched = replace(target, **{leaf: value})
    for owner, part in zip(reversed(chain[:-1]), reversed(parts[:-1])):
        patched = replace(owner, **{part: patched})
    return patched


def _validate(config: RunConfig) -> None:
    if config.mode not in MODES:
        raise ValidationError(f"unknown mode {config.mode!r}")
    if config.variant is not None and config.variant not in VARIANTS:
        raise ValidationError(f"unknown variant {config.variant!r}")
    for case in config.cases:
        if case not in CASES:
            raise ValidationError(f"unknown case {case!r}; expected one of {CASES}")
    if config.mode == "robust" and config.variant == "model3":
        raise ValidationError("robust mode needs a conversion path (model1 or model2)")
    if config.mode == "oracle-suite" and config.variant not in (None, "model1"):
        raise ValidationError("the certificate suite covers the trading variant only")


# ---------------------------------------------------------------------------
# csv plumbing
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return ""
        return f"{float(value):.12g}"
    if value is None:
        return ""
    return str(value)


def _write_csv(path: Path, sc_hash: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={SCHEMA_VERSION} scenario={sc_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _read_csv(path: Path) -> tuple[dict[str, str], list[str], list[list[str]]]:
    """Returns (stamp, header, rows); refuses files without the stamp."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ValidationError(f"{path}: missing schema stamp")
        stamp = dict(
            item.split("=", 1) for item in first[2:].strip().split(" ") if "=" in item
        )
        reader = csv.reader(fh)
        header = next(reader)
        return stamp, header, [row for row in reader]


# ---------------------------------------------------------------------------
# artifact rows
# ---------------------------------------------------------------------------

def _profile(series: str, unit: str, values: Array) -> list[list]:
    return [[series, unit, t, float(v)] for t, v in enumerate(np.asarray(values))]


def _adn_schedule_rows(sc: Scenario, sched: AdnSchedule) -> list[list]:
    rows: list[list] = []
    rows += _profile("tg_kw", "-", sched.tg_kw)
    for j, bus in enumerate(sc.power.buses):
        rows += _profile("volt_pu", bus.id, sched.volt_pu[j])
    for e, br in enumerate(sc.power.branches):
        link = f"{br.from_bus}->{br.to_bus}"
        rows += _profile("flow_p_pu", link, sched.flow_p_pu[e])
        rows += _profile("flow_q_pu", link, sched.flow_q_pu[e])
        rows += _profile("cur_pu", link, sched.cur_pu[e])
    for k, d in enumerate(sc.devices.ders):
        rows += _profile("der_kw", d.id, sched.der_kw[k])
    for k, b in enumerate(sc.devices.batteries):
        rows += _profile("bat_c_kw", b.id, sched.bat_c_kw[k])
        rows += _profile("bat_d_kw", b.id, sched.bat_d_kw[k])
        rows += _profile("bat_e_kwh", b.id, sched.bat_e_kwh[k])
        rows += _profile("bat_adj_kw", b.id, sched.bat_adj_kw[k])
    for k, fc in enumerate(sc.devices.fuel_cells):
        if len(sched.g2p_kw):
            rows += _profile("g2p_kw", fc.id, sched.g2p_kw[k])
        if len(sched.g2p_m3):
            rows += _profile("g2p_m3", fc.id, sched.g2p_m3[k])
        if len(sched.se_h2_m3):
            rows += _profile("se_h2_m3", fc.id, sched.se_h2_m3[k])
    for k, et in enumerate(sc.devices.electrolyzers):
        if len(sched.p2g_kw):
            rows += _profile("p2g_kw", et.id, sched.p2g_kw[k])
        if len(sched.se_p2g_kw):
            rows += _profile("se_p2g_kw", et.id, sched.se_p2g_kw[k])
    return rows


def _gdn_schedule_rows(sc: Scenario, sched: GdnSchedule) -> list[list]:
    rows: list[list] = []
    rows += _profile("hgn_m3", "-", sched.hgn_m3)
    rows += _profile("h2_injected_m3", "-", sched.h2_injected_m3)
    rows += _profile("blend_omega", "-", np.asarray(sched.blend.omega))
    rows += _profile("blend_hhv", "-", np.asarray(sched.blend.hhv))
    for i, node in enumerate(sc.gas.nodes):
        rows += _profile("pressure_bar", node.id, sched.pressure_bar[i])
    for p, pipe in enumerate(sc.gas.pipes):
        rows += _profile("flow_m3", f"{pipe.from_node}->{pipe.to_node}", sched.flow_m3[p])
    for k, et in enumerate(sc.devices.electrolyzers):
        if len(sched.p2g_kw):
            rows += _profile("p2g_kw", et.id, sched.p2g_kw[k])
    for k, fc in enumerate(sc.devices.fuel_cells):
        if len(sched.g2p_m3):
            rows += _profile("g2p_m3", fc.id, sched.g2p_m3[k])
    for k, ht in enumerate(sc.devices.tanks):
        rows += _profile("ht_flow_m3", ht.id, sched.ht_flow_m3[k])
        rows += _profile("ht_level_m3", ht.id, sched.ht_level_m3[k])
    return rows


def _trade_rows(sc: Scenario, trade) -> list[list]:
    rows: list[list] = []
    for k, et in enumerate(sc.devices.electrolyzers):
        for t in range(sc.horizon):
            rows.append([
                "p2g", et.id, t, float(trade.p2g_kw[k][t]), float(trade.price_p2g[t]),
            ])
    for k, fc in enumerate(sc.devices.fuel_cells):
        for t in range(sc.horizon):
            rows.append([
                "g2p", fc.id, t, float(trade.g2p_m3[k][t]), float(trade.price_g2p[t]),
            ])
    return rows


def _message_rows(messages) -> list[list]:
    return [
        [m.phase, m.round, m.iteration, m.variable, m.gdn_value, m.adn_value, m.multiplier]
        for m in messages
    ]


def _ccg_rows(solution: RobustSolution) -> list[list]:
    rows = []
    for s in solution.standalone_steps:
        rows.append([
            "standalone", s.outer, s.lower, s.upper, s.gap, s.sp_value,
            s.mp_iterations, s.blend_rounds, s.cut_added,
        ])
    for s in solution.steps:
        rows.append([
            "joint", s.outer, s.lower, s.upper, s.gap, s.sp_value,
            s.mp_iterations, s.blend_rounds, s.cut_added,
        ])
    return rows


def _realization_rows(sc: Scenario, label: str, realization) -> list[list]:
    rows = []
    for j, bus in enumerate(sc.power.buses):
        for t in range(sc.horizon):
            rows.append([label, "load", bus.id, t, float(realization.load_kw[j][t])])
    for k, d in enumerate(sc.devices.ders):
        for t in range(sc.horizon):
            rows.append([label, "der", d.id, t, float(realization.der_kw[k][t])])
    return rows


def _breakdown_rows(prefix: str, breakdown) -> list[tuple[str, float]]:
    return [
        (f"{prefix}_{f.name}", getattr(breakdown, f.name))
        for f in dataclass_fields(breakdown)
    ]


# ---------------------------------------------------------------------------
# marginal conversion cost
# ---------------------------------------------------------------------------

def marginal_conversion_cost(sc: Scenario, outcome: BargainOutcome) -> float | None:
    """Finite-difference cost of one more kWh delivered through the
    gas-to-power path, at the settled operating point.

    The trading variant re-solves the tied joint program at the settled
    blend with total delivered fuel-cell energy pinned to the settled
    value and to the settled value plus ``MARGINAL_STEP_KWH``. The
    self-conversion variant does the same on its own dispatch with the
    self-loop energy pinned. Returns None when the variant has no
    conversion path or the extra energy does not fit.
    """
    if not sc.devices.fuel_cells:
        return None
    if sc.variant == "model1":
        e0 = 0.0
        for k, fc in enumerate(sc.devices.fuel_cells):
            e0 += float(np.dot(outcome.trade.g2p_m3[k], outcome.blend.hhv)) * fc.efficiency
        try:
            base = solve_q1_centralized(sc, blend=outcome.blend, pinned_g2p_kwh=e0)
            plus = solve_q1_centralized(
                sc, blend=outcome.blend, pinned_g2p_kwh=e0 + MARGINAL_STEP_KWH
            )
        except InfeasibleModel:
            return None
        return (plus.joint_ops - base.joint_ops) / MARGINAL_STEP_KWH
    if sc.variant == "model2":
        blend = BlendState.pure_methane(sc.horizon, sc.blend)
        e0 = 0.0
        for k, fc in enumerate(sc.devices.fuel_cells):
            e0 += float(outcome.adn_schedule.se_h2_m3[k].sum()) * sc.blend.hhv_h2 * fc.efficiency

        def solve_pinned(e_kwh: float) -> float:
            prog, av = build_adn_problem(sc, blend)
            total = Lin.of(-e_kwh)
            for k, fc in enumerate(sc.devices.fuel_cells):
                for t in range(sc.horizon):
                    total = total + Lin.var(
                        av.se_h2[k][t], sc.blend.hhv_h2 * fc.efficiency
                    )
            prog.add_eq(total, label="self-energy-pin")
            sol = solve_or_explain(prog.compile())
            sched = extract_adn_schedule(sc, av, sol, blend)
            return adn_cost(sc, sched).total

        try:
            return (
                solve_pinned(e0 + MARGINAL_STEP_KWH) - solve_pinned(e0)
            ) / MARGINAL_STEP_KWH
        except InfeasibleModel:
            return None
    return None


# ---------------------------------------------------------------------------
# run pipelines
# ---------------------------------------------------------------------------

def _common_summary(sc: Scenario, config: RunConfig) -> list[tuple[str, object]]:
    return [
        ("scenario", sc.name),
        ("mode", config.mode),
        ("variant", sc.variant),
        ("horizon", sc.horizon),
        ("dt_h", sc.market.dt_h),
        ("seed", config.seed),
    ]


def _run_independent(sc: Scenario, config: RunConfig, out: Path, sc_hash: str) -> int:
    ind = solve_independent(sc)
    rows = _common_summary(sc, config)
    rows += [("c0_e", ind.c0_e), ("c0_g", ind.c0_g)]
    rows += _breakdown_rows("adn", ind.adn_breakdown)
    rows += _breakdown_rows("gdn", ind.gdn_breakdown)
    if sc.variant == "model2":
        marginal = marginal_conversion_cost(
            sc, _as_outcome_for_marginal(sc, ind)
        )
        rows.append(("marginal_conversion_cost", marginal))
    _write_csv(out / "summary.csv", sc_hash, ("key", "value"), rows)
    _write_csv(
        out / "adn_schedule.csv", sc_hash,
        ("series", "unit", "period", "value"), _adn_schedule_rows(sc, ind.adn_schedule),
    )
    _write_csv(
        out / "gdn_schedule.csv", sc_hash,
        ("series", "unit", "period", "value"), _gdn_schedule_rows(sc, ind.gdn_schedule),
    )
    return EXIT_OK


def _as_outcome_for_marginal(sc: Scenario, ind) -> BargainOutcome:
    """Wrap an independent solution so the marginal-cost helper can read
    the self-conversion schedule from it."""
    from .bargain import _independent_outcome

    return _independent_outcome(sc, ind)


def _run_cooperative(sc: Scenario, config: RunConfig, out: Path, sc_hash: str) -> int:
    outcome = bargain(sc, collect_messages=config.emit_trace)
    rows = _common_summary(sc, config)
    rows += [
        ("c0_e", outcome.c0_e), ("c0_g", outcome.c0_g),
        ("c_e", outcome.c_e), ("c_g", outcome.c_g),
        ("surplus_e", outcome.surplus_e), ("surplus_g", outcome.surplus_g),
        ("joint_benefit", outcome.joint_benefit),
        ("transfer", outcome.transfer),
        ("nash_product", nash_product(outcome)),
        ("no_bargain", outcome.no_bargain),
        ("q1_iterations", outcome.q1_iterations),
        ("q1_converged", outcome.q1_converged),
        ("q2_iterations", outcome.q2_iterations),
        ("q2_converged", outcome.q2_converged),
        ("blend_rounds", outcome.blend_rounds),
        ("blend_omega_max", max(outcome.blend.omega, default=0.0)),
        ("marginal_conversion_cost", marginal_conversion_cost(sc, outcome)),
    ]
    rows += _breakdown_rows("adn", outcome.adn_breakdown)
    rows += _breakdown_rows("gdn", outcome.gdn_breakdown)
    _write_csv(out / "summary.csv", sc_hash, ("key", "value"), rows)
    _write_csv(
        out / "adn_schedule.csv", sc_hash,
        ("series", "unit", "period", "value"), _adn_schedule_rows(sc, outcome.adn_schedule),
    )
    _write_csv(
        out / "gdn_schedule.csv", sc_hash,
        ("series", "unit", "period", "value"), _gdn_schedule_rows(sc, outcome.gdn_schedule),
    )
    _write_csv(
        out / "trades.csv", sc_hash,
        ("kind", "unit", "period", "quantity", "price"), _trade_rows(sc, outcome.trade),
    )
    if config.emit_trace:
        _write_csv(
            out / "admm_trace.csv", sc_hash,
            ("phase", "round", "iteration", "variable", "gdn_value", "adn_value", "multiplier"),
            _message_rows(outcome.messages),
        )
    if not (outcome.q1_converged and outcome.q2_converged):
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def _run_robust(
    sc: Scenario, config: RunConfig, out: Path, sc_hash: str, case: str
) -> int:
    solution = ccg(sc, case=case, collect_messages=config.emit_trace)
    rows = _common_summary(sc, config)
    rows += [
        ("case", case),
        ("c0_e", solution.c0_e), ("c0_g", solution.c0_g),
        ("c_e", solution.c_e), ("c_g", solution.c_g),
        ("surplus_e", solution.surplus_e), ("surplus_g", solution.surplus_g),
        ("adn_worst_ops", solution.adn_worst_ops),
        ("gdn_ops", solution.gdn_ops),
        ("transfer", solution.transfer),
        ("no_bargain", solution.no_bargain),
        ("outer_iterations", solution.outer_iterations),
        ("converged", solution.converged),
        ("final_gap", solution.steps[-1].gap if solution.steps else 0.0),
        ("cuts", len(solution.cuts)),
        ("q2_iterations", solution.q2_iterations),
        ("q2_converged", solution.q2_converged),
        ("blend_omega_max", max(solution.blend.omega, default=0.0)),
    ]
    _write_csv(out / "summary.csv", sc_hash, ("key", "value"), rows)
    _write_csv(
        out / "adn_schedule.csv", sc_hash,
        ("series", "unit", "period", "value"), _adn_schedule_rows(sc, solution.adn_schedule),
    )
    _write_csv(
        out / "gdn_schedule.csv", sc_hash,
        ("series", "unit", "period", "value"), _gdn_schedule_rows(sc, solution.gdn_schedule),
    )
    _write_csv(
        out / "trades.csv", sc_hash,
        ("kind", "unit", "period", "quantity", "price"), _trade_rows(sc, solution.trade),
    )
    _write_csv(
        out / "ccg_trace.csv", sc_hash,
        ("loop", "outer", "lower", "upper", "gap", "sp_value",
         "mp_iterations", "blend_rounds", "cut_added"),
        _ccg_rows(solution),
    )
    worst_rows: list[list] = []
    for idx, cut in enumerate(solution.cuts):
        worst_rows += _realization_rows(sc, str(idx), cut)
    worst_rows += _realization_rows(sc, "worst", solution.worst)
    _write_csv(
        out / "worst_cases.csv", sc_hash,
        ("cut", "kind", "unit", "period", "value"), worst_rows,
    )
    _write_csv(
        out / "recourse.csv", sc_hash,
        ("series", "unit", "period", "value"),
        _adn_schedule_rows(sc, solution.recourse.schedule),
    )
    if config.emit_trace:
        _write_csv(
            out / "admm_trace.csv", sc_hash,
            ("phase", "round", "iteration", "variable", "gdn_value", "adn_value", "multiplier"),
            _message_rows(solution.messages),
        )
    if not (solution.converged and solution.q2_converged):
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def _run_oracle_suite(sc: Scenario, config: RunConfig, out: Path, sc_hash: str) -> int:
    reports = run_oracle_suite(sc, case=config.cases[0])
    _write_csv(
        out / "oracle_report.csv", sc_hash,
        ("name", "oracle_value", "system_value", "abs_gap", "rel_gap",
         "tolerance", "passed", "enumeration_size", "note"),
        [
            [r.name, r.oracle_value, r.system_value, r.abs_gap, r.rel_gap,
             r.tolerance, r.passed, r.enumeration_size, r.note]
            for r in reports
        ],
    )
    for r in reports:
        state = "refused" if r.note.startswith("refused") else (
            "ok" if r.passed else "FAILED"
        )
        print(f"{r.name}: {state} (n={r.enumeration_size}) {r.note}")
    if any(not r.passed for r in reports):
        return EXIT_CERT_FAIL
    return EXIT_OK


def run(config: RunConfig) -> int:
    """Execute one configured run; returns the process exit code."""
    _validate(config)
    try:
        sc = _load(config)
    except (ScenarioFormatError, ScenarioValidationError, FileNotFoundError) as err:
        raise ValidationError(str(err)) from err
    sc_hash = scenario_content_hash(sc)

    codes = []
    if config.mode == "robust" and len(config.cases) > 1:
        for case in config.cases:
            sub = config.out / case
            sub.mkdir(parents=True, exist_ok=True)
            codes.append(_run_robust(sc, config, sub, sc_hash, case))
    else:
        config.out.mkdir(parents=True, exist_ok=True)
        if config.mode == "independent":
            codes.append(_run_independent(sc, config, config.out, sc_hash))
        elif config.mode == "cooperative":
            codes.append(_run_cooperative(sc, config, config.out, sc_hash))
        elif config.mode == "robust":
            codes.append(_run_robust(sc, config, config.out, sc_hash, config.cases[0]))
        else:
            codes.append(_run_oracle_suite(sc, config, config.out, sc_hash))
    return max(codes)


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def compare(run_dirs: Sequence[Path], out: Path) -> int:
    """Side-by-side table of ≥ 2 completed runs plus concatenated
    per-period profiles for plotting. Runs must share the schema version
    and the scenario content hash."""
    if len(run_dirs) < 2:
        raise ValidationError("compare needs at least two run directories")
    names: list[str] = []
    summaries: list[dict[str, str]] = []
    stamp_ref: dict[str, str] | None = None
    for d in run_dirs:
        path = Path(d) / "summary.csv"
        if not path.exists():
            raise ValidationError(f"{d}: no summary.csv (not a completed run)")
        stamp, header, rows = _read_csv(path)
        if stamp.get("schema") != SCHEMA_VERSION:
            raise ValidationError(
                f"{d}: schema {stamp.get('schema')!r} != {SCHEMA_VERSION!r}"
            )
        if stamp_ref is None:
            stamp_ref = stamp
        elif stamp.get("scenario") != stamp_ref.get("scenario"):
            raise ValidationError(
                f"{d}: scenario hash {stamp.get('scenario')} does not match "
                f"{stamp_ref.get('scenario')}; refusing to compare different data"
            )
        name = Path(d).name
        while name in names:
            name += "+"
        names.append(name)
        summaries.append({row[0]: row[1] for row in rows if len(row) == 2})

    keys: list[str] = []
    for summary in summaries:
        for key in summary:
            if key not in keys:
                keys.append(key)
    header = ["metric", *names]
    header += [f"delta_{n}" for n in names[1:]]
    table: list[list] = []
    for key in keys:
        values = [s.get(key, "") for s in summaries]
        row: list = [key, *values]
        base = _maybe_float(values[0])
        for v in values[1:]:
            other = _maybe_float(v)
            row.append("" if base is None or other is None else _fmt(other - base))
        table.append(row)
    out.mkdir(parents=True, exist_ok=True)
    sc_hash = stamp_ref.get("scenario", "") if stamp_ref else ""
    _write_csv(out / "comparison.csv", sc_hash, header, table)

    profile_rows: list[list] = []
    for name, d in zip(names, run_dirs):
        for fname in ("adn_schedule.csv", "gdn_schedule.csv", "recourse.csv", "trades.csv"):
            path = Path(d) / fname
            if not path.exists():
                continue
            _, header_f, rows = _read_csv(path)
            stem = fname[: -len(".csv")]
            if fname == "trades.csv":
                # two observations per trade row: quantity and price
                for kind, unit, period, qty, price in rows:
                    profile_rows.append([name, stem, kind, unit, period, qty])
                    profile_rows.append([name, stem, f"{kind}_price", unit, period, price])
            else:
                for row in rows:
                    profile_rows.append([name, stem, *row])
    if profile_rows:
        cols = ["run", "file", "series", "unit", "period", "value"]
        _write_csv(out / "profiles.csv", sc_hash, cols, profile_rows)
    return EXIT_OK


def _maybe_float(text: str) -> float | None:
    try:
        return float(text)
    except (TypeError, ValueError):
        return None


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _run_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hcng-trade",
        description="Day-ahead dispatch and trade settlement between a "
        "hydrogen-blending gas network and an electric distribution network.",
        epilog="Use 'hcng-trade compare DIR DIR [--out DIR]' to tabulate runs.",
    )
    p.add_argument("--scenario", required=True, help="bundled scenario name or YAML path")
    p.add_argument("--mode", required=True, choices=MODES)
    p.add_argument("--variant", choices=VARIANTS, default=None,
                   help="override the scenario's ownership variant")
    p.add_argument("--case", default="case4",
                   help="comma-separated robust cases (case1..case4)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override a scenario field, e.g. "
                   "algorithm.admm_tol=1e-4 (repeatable)")
    p.add_argument("--emit-trace", action="store_true",
                   help="also write the per-iteration negotiation trace")
    p.add_argument("--seed", type=int, default=0,
                   help="recorded in the summary; pipelines are deterministic")
    return p


def _compare_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hcng-trade compare")
    p.add_argument("run_dirs", nargs="+", help="completed run directories")
    p.add_argument("--out", default="comparison", help="output directory")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if argv and argv[0] == "compare":
            args = _compare_parser().parse_args(argv[1:])
            code = compare([Path(d) for d in args.run_dirs], Path(args.out))
            if code == EXIT_OK:
                print(f"ok: comparison in {args.out}")
            return code
        args = _run_parser().parse_args(argv)
        overrides = []
        for item in args.overrides:
            if "=" not in item:
                raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
            key, _, value = item.partition("=")
            overrides.append((key, value))
        cases = tuple(c.strip() for c in args.case.split(",") if c.strip())
        out = Path(args.out) if args.out else Path(f"{Path(args.scenario).stem}-{args.mode}")
        config = RunConfig(
            scenario=args.scenario,
            mode=args.mode,
            out=out,
            variant=args.variant,
            cases=cases or ("case4",),
            overrides=tuple(overrides),
            emit_trace=args.emit_trace,
            seed=args.seed,
        )
        code = run(config)
    except ValidationError as err:
        print(f"validation error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as err:
        print(f"validation error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except (InfeasibleModel, SolverFailure) as err:
        print(f"solver error: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except RuntimeError as err:
        print(f"did not converge: {err}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    if code == EXIT_OK:
        print(f"ok: artifacts in {config.out}")
    elif code == EXIT_NONCONVERGENCE:
        print("finished without reaching tolerance; traces show the residual",
              file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
