"""Conic program construction and solution behind one solver-facing seam.

Every optimization model in the package is assembled as a ``ConicProgram``:
bounded variables, linear equalities/inequalities, second-order cones,
and an objective of linear + convex quadratic + negative-log terms
(minimization sense). Programs compile to CLARABEL through cvxpy; the
compiled form is cached so the consensus loops can update multiplier and
target vectors and re-solve without re-canonicalizing.

Log terms always ride with an explicit linear strict-margin constraint on
their argument, so feasibility implies a safely positive argument.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

SOLVER_NAME = "CLARABEL"


class SolverFailure(Exception):
    """Backend failed outright (exception, unknown status)."""


# ---------------------------------------------------------------------------
# affine expressions
# ---------------------------------------------------------------------------

class Lin:
    """Sparse affine expression sum_i terms[i] * v_i + const."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: dict[int, float] | None = None, const: float = 0.0):
        self.terms = terms if terms is not None else {}
        self.const = const

    @classmethod
    def var(cls, idx: int, coef: float = 1.0) -> "Lin":
        return cls({idx: coef})

    @classmethod
    def of(cls, const: float) -> "Lin":
        return cls({}, float(const))

    def copy(self) -> "Lin":
        return Lin(dict(self.terms), self.const)

    def add_term(self, idx: int, coef: float) -> "Lin":
        if coef != 0.0:
            self.terms[idx] = self.terms.get(idx, 0.0) + coef
        return self

    def __add__(self, other: "Lin | float") -> "Lin":
        out = self.copy()
        if isinstance(other, Lin):
            for i, c in other.terms.items():
                out.add_term(i, c)
            out.const += other.const
        else:
            out.const += float(other)
        return out

    __radd__ = __add__

    def __sub__(self, other: "Lin | float") -> "Lin":
        return self + (other * -1.0 if isinstance(other, Lin) else -float(other))

    def __rsub__(self, other: float) -> "Lin":
        return (self * -1.0) + float(other)

    def __mul__(self, scale: float) -> "Lin":
        s = float(scale)
        return Lin({i: c * s for i, c in self.terms.items()}, self.const * s)

    __rmul__ = __mul__

    def __neg__(self) -> "Lin":
        return self * -1.0

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(c * x[i] for i, c in self.terms.items())


def lsum(items) -> Lin:
    out = Lin()
    for item in items:
        if isinstance(item, Lin):
            for i, c in item.terms.items():
                out.add_term(i, c)
            out.const += item.const
        else:
            out.const += float(item)
    return out


# ---------------------------------------------------------------------------
# program
# ---------------------------------------------------------------------------

@dataclass
class _PenaltyGroup:
    key: str
    exprs: list[Lin]
    rho: np.ndarray  # per-entry penalty weight, fixed at compile time
    mult: np.ndarray
    target: np.ndarray


@dataclass
class ConicSolution:
    status: str  # optimal | infeasible | unbounded | iteration-limit
    objective: float
    x: np.ndarray

    def value(self, idx: int) -> float:
        return float(self.x[idx])

    def values(self, idxs) -> np.ndarray:
        return self.x[np.asarray(list(idxs), dtype=int)]


class ConicProgram:
    """Minimization program over scalar variables with conic structure."""

    def __init__(self, name: str = ""):
        self.name = name
        self.var_names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.obj_lin = Lin()
        self.obj_const_extra = 0.0
        self.squares: list[tuple[float, Lin]] = []
        self.logs: list[tuple[float, Lin]] = []
        self.eqs: list[tuple[Lin, str]] = []
        self.ineqs: list[tuple[Lin, str]] = []  # expr <= 0
        self.socs: list[tuple[list[Lin], Lin, str]] = []  # ||lhs|| <= rhs
        self.groups: dict[str, _PenaltyGroup] = {}
        self.fixes: dict[int, float] = {}

    # -- construction -------------------------------------------------------

    def add_var(self, name: str, lb: float = -math.inf, ub: float = math.inf) -> int:
        if lb > ub:
            raise ValueError(f"variable {name}: lb {lb} > ub {ub}")
        self.var_names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        return len(self.var_names) - 1

    def add_vars(self, prefix: str, count: int, lb: float = -math.inf, ub: float = math.inf) -> list[int]:
        return [self.add_var(f"{prefix}[{k}]", lb, ub) for k in range(count)]

    def add_obj(self, expr: Lin | float) -> None:
        if isinstance(expr, Lin):
            self.obj_lin = self.obj_lin + expr
        else:
            self.obj_const_extra += float(expr)

    def add_square(self, coef: float, expr: Lin) -> None:
        """Adds coef * expr^2 to the objective (coef >= 0)."""
        if coef < 0:
            raise ValueError("square terms must have nonnegative coefficients")
        if coef > 0:
            self.squares.append((float(coef), expr))

    def add_log(self, coef: float, expr: Lin, margin: float) -> None:
        """Adds -coef * log(expr) to the minimized objective, plus the
        strict-margin constraint expr >= margin (margin > 0 required)."""
        if coef <= 0:
            raise ValueError("log terms must have positive coefficients")
        if margin <= 0:
            raise ValueError("log terms require a positive linear margin")
        self.logs.append((float(coef), expr))
        self.add_ineq(margin - expr, "log-margin")

    def add_eq(self, expr: Lin, label: str) -> None:
        self.eqs.append((expr, label))

    def add_ineq(self, expr: Lin, label: str) -> None:
        self.ineqs.append((expr, label))

    def add_soc(self, lhs: list[Lin], rhs: Lin, label: str) -> None:
        if not lhs:
            raise ValueError("second-order cone needs at least one lhs entry")
        self.socs.append((list(lhs), rhs, label))

    def add_penalty_group(self, key: str, exprs: list[Lin], rho) -> None:
        """Registers sum_k mult[k]*e_k + rho[k]/2*(e_k - target[k])^2 with
        mult/target updatable between solves. rho is fixed at compile."""
        rho_arr = np.broadcast_to(np.asarray(rho, dtype=float), (len(exprs),)).copy()
        if np.any(rho_arr <= 0):
            raise ValueError("penalty weights must be positive")
        self.groups[key] = _PenaltyGroup(
            key, list(exprs), rho_arr, np.zeros(len(exprs)), np.zeros(len(exprs))
        )

    def fix(self, idx: int, value: float) -> None:
        self.fixes[idx] = float(value)

    @property
    def n(self) -> int:
        return len(self.var_names)

    # -- evaluation helpers (solver-independent) ----------------------------

    def eq_residuals(self, x: np.ndarray) -> list[tuple[str, float]]:
        return [(label, abs(e.value(x))) for e, label in self.eqs]

    def ineq_violations(self, x: np.ndarray) -> list[tuple[str, float]]:
        return [(label, max(0.0, e.value(x))) for e, label in self.ineqs]

    def objective_at(self, x: np.ndarray) -> float:
        val = self.obj_lin.value(x) + self.obj_const_extra
        for coef, e in self.squares:
            val += coef * e.value(x) ** 2
        for g in self.groups.values():
            for k, e in enumerate(g.exprs):
                ev = e.value(x)
                val += g.mult[k] * ev + 0.5 * g.rho[k] * (ev - g.target[k]) ** 2
        for coef, e in self.logs:
            arg = e.value(x)
            val -= coef * math.log(arg) if arg > 0 else -math.inf
        return val

    def compile(self) -> "CompiledProgram":
        return CompiledProgram(self)

    def solve(self, **solver_opts) -> ConicSolution:
        return self.compile().solve(**solver_opts)


# ---------------------------------------------------------------------------
# compilation to the backend
# ---------------------------------------------------------------------------

def _stack(exprs: list[Lin], n: int) -> tuple[sp.csr_matrix, np.ndarray]:
    rows, cols, vals = [], [], []
    consts = np.zeros(len(exprs))
    for r, e in enumerate(exprs):
        consts[r] = e.const
        for i, c in e.terms.items():
            rows.append(r)
            cols.append(i)
            vals.append(c)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(len(exprs), n))
    return mat, consts


class CompiledProgram:
    """cvxpy problem with parameter hooks for the penalty groups."""

    def __init__(self, prog: ConicProgram):
        self.prog = prog
        n = prog.n
        v = cp.Variable(n) if n else cp.Variable(1)
        self._v = v

        constraints = []
        lb = np.array(prog.lb)
        ub = np.array(prog.ub)
        finite_lb = np.isfinite(lb)
        finite_ub = np.isfinite(ub)
        if n and finite_lb.any():
            constraints.append(v[finite_lb] >= lb[finite_lb])
        if n and finite_ub.any():
            constraints.append(v[finite_ub] <= ub[finite_ub])
        if prog.fixes:
            idxs = sorted(prog.fixes)
            constraints.append(v[idxs] == np.array([prog.fixes[i] for i in idxs]))

        if prog.eqs:
            A, b = _stack([e for e, _ in prog.eqs], n)
            constraints.append(A @ v + b == 0)
        if prog.ineqs:
            A, b = _stack([e for e, _ in prog.ineqs], n)
            constraints.append(A @ v + b <= 0)

        # cones grouped by dimension so canonicalization stays cheap
        by_dim: dict[int, list[tuple[list[Lin], Lin]]] = {}
        for lhs, rhs, _ in prog.socs:
            by_dim.setdefault(len(lhs), []).append((lhs, rhs))
        for dim, cones in sorted(by_dim.items()):
            flat = [e for lhs, _ in cones for e in lhs]
            A, b = _stack(flat, n)
            Ar, br = _stack([rhs for _, rhs in cones], n)
            lhs_mat = cp.reshape(A @ v + b, (len(cones), dim), order="C")
            constraints.append(cp.SOC(Ar @ v + br, lhs_mat, axis=1))

        c_lin, c_const = _stack([prog.obj_lin], n)
        objective = c_lin[0] @ v + (c_const[0] + prog.obj_const_extra)
        if prog.squares:
            coefs = np.array([c for c, _ in prog.squares])
            A, b = _stack([e for _, e in prog.squares], n)
            objective = objective + cp.sum(cp.multiply(coefs, cp.square(A @ v + b)))
        self._group_params: dict[str, tuple[cp.Parameter, cp.Parameter]] = {}
        for key, g in prog.groups.items():
            A, b = _stack(g.exprs, n)
            mult = cp.Parameter(len(g.exprs), name=f"{key}.mult")
            target = cp.Parameter(len(g.exprs), name=f"{key}.target")
            mult.value = g.mult
            target.value = g.target
            e = A @ v + b
            objective = objective + mult @ e
            objective = objective + 0.5 * cp.sum(cp.multiply(g.rho, cp.square(e - target)))
            self._group_params[key] = (mult, target)
        if prog.logs:
            coefs = np.array([c for c, _ in prog.logs])
            A, b = _stack([e for _, e in prog.logs], n)
            objective = objective - coefs @ cp.log(A @ v + b)

        self._problem = cp.Problem(cp.Minimize(objective), constraints)

    def set_group(self, key: str, mult: np.ndarray, target: np.ndarray) -> None:
        pm, pt = self._group_params[key]
        pm.value = np.asarray(mult, dtype=float)
        pt.value = np.asarray(target, dtype=float)
        g = self.prog.groups[key]
        g.mult = np.asarray(mult, dtype=float).copy()
        g.target = np.asarray(target, dtype=float).copy()

    #: interior-point tolerances well below the 1e-4 model-level exactness
    #: thresholds, so cone slack at reported optima stays decisively tight
    DEFAULT_OPTS = {"tol_gap_abs": 1e-11, "tol_gap_rel": 1e-11, "tol_feas": 1e-10}

    def solve(self, **solver_opts) -> ConicSolution:
        opts = {**self.DEFAULT_OPTS, **solver_opts}
        try:
            with warnings.catch_warnings():
                # reduced-accuracy termination is handled via the status map
                warnings.simplefilter("ignore", UserWarning)
                self._problem.solve(solver=SOLVER_NAME, **opts)
        except cp.error.SolverError as err:
            raise SolverFailure(f"{self.prog.name or 'program'}: {err}") from err
        status = self._problem.status
        if status == cp.OPTIMAL:
            out_status = "optimal"
        elif status == cp.INFEASIBLE:
            out_status = "infeasible"
        elif status == cp.UNBOUNDED:
            out_status = "unbounded"
        elif status in (cp.OPTIMAL_INACCURATE, cp.INFEASIBLE_INACCURATE, cp.UNBOUNDED_INACCURATE, cp.USER_LIMIT):
            out_status = "iteration-limit"
        else:
            raise SolverFailure(f"{self.prog.name or 'program'}: backend status {status!r}")
        x = self._v.value
        if x is None:
            x = np.full(self.prog.n, np.nan)
        return ConicSolution(out_status, float(self._problem.value) if self._problem.value is not None else math.nan, np.asarray(x, dtype=float)[: self.prog.n])


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def cone_residuals(prog: ConicProgram, sol: ConicSolution) -> list[tuple[str, float]]:
    """Relative slack of each second-order cone at the solution:
    (rhs - ||lhs||) / max(|rhs|, tiny). Zero means the cone is tight."""
    out = []
    for lhs, rhs, label in prog.socs:
        lhs_val = math.sqrt(sum(e.value(sol.x) ** 2 for e in lhs))
        rhs_val = rhs.value(sol.x)
        out.append((label, (rhs_val - lhs_val) / max(abs(rhs_val), 1e-12)))
    return out


def max_cone_slack(prog: ConicProgram, sol: ConicSolution) -> float:
    residuals = cone_residuals(prog, sol)
    return max((s for _, s in residuals), default=0.0)


def diagnose_infeasibility(prog: ConicProgram) -> list[tuple[str, float]]:
    """Relax linear rows with elastic slack and report which constraint
    families need it, largest first. Family = label text before ':'."""
    relaxed = ConicProgram(prog.name + ".diagnose")
    relaxed.var_names = list(prog.var_names)
    relaxed.lb = list(prog.lb)
    relaxed.ub = list(prog.ub)
    relaxed.fixes = dict(prog.fixes)
    relaxed.socs = [(list(lhs), rhs, lab) for lhs, rhs, lab in prog.socs]
    slack_of: list[tuple[str, int]] = []
    for e, label in prog.eqs:
        s_pos = relaxed.add_var(f"_slack+:{label}", 0.0)
        s_neg = relaxed.add_var(f"_slack-:{label}", 0.0)
        relaxed.add_eq(e + Lin.var(s_pos) - Lin.var(s_neg), label)
        relaxed.add_obj(Lin.var(s_pos) + Lin.var(s_neg))
        slack_of.extend([(label, s_pos), (label, s_neg)])
    for e, label in prog.ineqs:
        s = relaxed.add_var(f"_slack:{label}", 0.0)
        relaxed.add_ineq(e - Lin.var(s), label)
        relaxed.add_obj(Lin.var(s))
        slack_of.append((label, s))
    sol = relaxed.solve()
    if sol.status != "optimal":
        return [("cones", math.inf)]
    by_family: dict[str, float] = {}
    for label, idx in slack_of:
        family = label.split(":", 1)[0]
        by_family[family] = max(by_family.get(family, 0.0), float(sol.x[idx]))
    ranked = [(fam, v) for fam, v in by_family.items() if v > 1e-7]
    ranked.sort(key=lambda item: -item[1])
    return ranked


class InfeasibleModel(Exception):
    """An entity model came back infeasible; names the constraint families
    that had to be relaxed to restore feasibility."""

    def __init__(self, name: str, families: list[tuple[str, float]]):
        self.families = families
        listing = ", ".join(f"{fam} (slack {v:.3g})" for fam, v in families) or "unknown"
        super().__init__(f"{name}: infeasible; binding families: {listing}")


def solve_or_explain(prog: ConicProgram | CompiledProgram, **solver_opts) -> ConicSolution:
    """Solve; on infeasibility run the elastic diagnosis and raise
    InfeasibleModel naming the constraint families involved."""
    base = prog.prog if isinstance(prog, CompiledProgram) else prog
    sol = prog.solve(**solver_opts)
    if sol.status == "infeasible":
        raise InfeasibleModel(base.name or "program", diagnose_infeasibility(base))
    if sol.status == "unbounded":
        raise SolverFailure(f"{base.name or 'program'}: unbounded")
    return sol
