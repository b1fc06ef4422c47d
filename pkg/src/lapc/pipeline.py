"""Pipeline orchestration: preprocess, saturate, abstract, erase levels, emit,
and optionally drive an external prover with a wall-clock timeout.

Verdicts are taken on trust (token scan of the solver output); a warning is
recorded on every proved verdict since no proof reconstruction happens here.
"""
from __future__ import annotations

import csv
import io
import os
import shutil
import subprocess
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from . import errors
from .abstraction import AbstractionState, Substitution, extract_substitution, \
    get_lvar_name, lam_abst
from .emit import DatatypeHol, EmitPlan, emit_smt, emit_th0, problem_size
from .frontend import load_problem, pretty_print
from .holcalc import (
    HContext, HOL, HSortU, hol_infer_type, rho_star,
)
from .instantiation import saturate
from .kernel import Environment, infer_type, is_def_eq, logical_symbol, normalize
from .preprocess import Options, Problem, run_preprocess
from .term import App, Const, Term, mk_app, spine


@dataclass
class PipelineConfig:
    emit: tuple = ("th0",)
    out_dir: Optional[Path] = None
    solver: Optional[str] = None
    timeout: float = 10.0
    max_insts: Optional[int] = None
    absorb_instances: Optional[bool] = None
    drop_non_qmono: Optional[bool] = None
    smt_encoding: str = "applicative"
    th0_free_constructors: bool = False
    jobs: int = 1
    keep_files: bool = True


@dataclass
class RunReport:
    problem: str
    verdict: str = "unknown"  # proved | unknown | timeout | error
    timings_ms: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    dropped: list = field(default_factory=list)  # (premise label, reason)
    size_input: int = 0
    size_mono: int = 0
    emissions: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    error: Optional[str] = None

    @property
    def size_ratio(self) -> Optional[float]:
        if self.size_input:
            return self.size_mono / self.size_input
        return None


class _Clock:
    def __init__(self, report: RunReport):
        self.report = report

    def time(self, stage: str):
        clock = self

        class _Ctx:
            def __enter__(self):
                self.start = time.perf_counter()
                return self

            def __exit__(self, *exc):
                clock.report.timings_ms[stage] = round(
                    (time.perf_counter() - self.start) * 1000.0, 3)

        return _Ctx()


def _apply_overrides(p: Problem, config: PipelineConfig) -> Problem:
    opts = p.options
    if config.max_insts is not None:
        opts = replace(opts, max_insts=config.max_insts)
    if config.absorb_instances is not None:
        opts = replace(opts, absorb_instances=config.absorb_instances)
    if config.drop_non_qmono is not None:
        opts = replace(opts, drop_non_qmono=config.drop_non_qmono)
    return replace(p, options=opts)


def _is_equality_constant(env: Environment, name: str) -> Optional[int]:
    info = env.consts.get(name)
    if info is None or info.value is None:
        return None
    for level in range(1, 6):
        if info.value == logical_symbol("eq", level):
            return level
    return None


def _detect_eq_symbols(env: Environment, sub: Substitution) -> frozenset:
    out = set()
    for name in sub.term_vars():
        inst = sub.sigma[name]
        head, args = spine(inst)
        if isinstance(head, Const) and len(args) == 1 \
                and _is_equality_constant(env, head.name) is not None:
            out.add(name)
        elif len(args) == 1:
            for level in range(1, 6):
                if head == logical_symbol("eq", level):
                    out.add(name)
                    break
    return frozenset(out)


def _unmark_partial_eqs(plan: EmitPlan) -> EmitPlan:
    from .holcalc import HApp, HFreeVar, h_spine

    bad = set()

    def walk(t, applied=0):
        head, args = h_spine(t)
        if isinstance(head, HFreeVar) and head.name in plan.eq_symbols and len(args) != 2:
            bad.add(head.name)
        for a in args:
            walk(a)
        from .holcalc import HLam, HForall
        if isinstance(head, HLam):
            walk(head.binder_type)
            walk(head.body)
        if isinstance(head, HForall):
            walk(head.domain)

    for _, f in plan.axioms:
        walk(f)
    walk(plan.conjecture)
    plan.eq_symbols = plan.eq_symbols - bad
    return plan


@dataclass
class TranslationResult:
    problem: Problem
    substitution: Substitution
    plan: EmitPlan
    labels: list


def translate(problem: Problem, config: PipelineConfig,
              report: Optional[RunReport] = None) -> TranslationResult:
    """preprocess -> saturate -> abstract -> erase universe levels -> plan."""
    report = report or RunReport(problem="<memory>")
    clock = _Clock(report)
    report.size_input = problem_size(problem.premise_terms() + [problem.goal])

    with clock.time("preprocess"):
        p = run_preprocess(problem)
    opts = p.options

    with clock.time("saturate"):
        sat_stats: dict = {}
        instances = saturate(p.env, p.ctx, p.premise_terms(),
                             max_insts=opts.max_insts,
                             absorb_instances=opts.absorb_instances,
                             stats=sat_stats)
    report.counts.update(sat_stats)

    with clock.time("abstract"):
        state = AbstractionState(p.env, p.ctx,
                                 absorb_instances=opts.absorb_instances)
        axioms = []
        labels = []
        named = {t: n for n, t in p.premises}
        for i, inst in enumerate(instances):
            label = named.get(inst, f"inst{i}")
            try:
                axioms.append((label, lam_abst(state, frozenset(), inst)))
                labels.append(label)
            except errors.NotQuasiMono as exc:
                if opts.drop_non_qmono:
                    report.dropped.append((label, str(exc)))
                    warnings.warn(f"dropping premise {label}: {exc}")
                else:
                    raise
        goal_h = lam_abst(state, frozenset(), p.goal)

        datatypes_hol = _plan_datatypes(p, state)
        sub = extract_substitution(state)

    hol_axioms = [(label, rho_star(h)) for label, h in axioms]
    hol_goal = rho_star(goal_h)
    hol_ctx = HContext(tuple((n, rho_star(ty)) for n, ty in sub.hol_ctx))
    from .holcalc import BOOL
    for label, h in hol_axioms + [("goal", hol_goal)]:
        got = hol_infer_type(HOL, hol_ctx, h)
        if got != BOOL:
            raise errors.SubstitutionIllFormed(
                f"HOL output {label} has type {got!r}, expected Bool")
    report.size_mono = problem_size([h for _, h in hol_axioms] + [hol_goal])

    plan = EmitPlan(
        type_decls=[(n, ty.level) for n, ty in sub.hol_ctx
                    if isinstance(ty, HSortU)],
        symbol_decls=[(n, rho_star(ty)) for n, ty in sub.hol_ctx
                      if not isinstance(ty, HSortU)],
        axioms=hol_axioms,
        conjecture=hol_goal,
        datatypes=datatypes_hol,
        provenance=_provenance(sub),
        eq_symbols=_detect_eq_symbols(p.env, sub),
        ctor_symbols=frozenset(n for n, _ in _ctor_pairs(p, state)),
    )
    plan = _unmark_partial_eqs(plan)
    report.counts["premises"] = len(problem.premises)
    report.counts["axioms"] = len(plan.axioms)
    report.counts["term_vars"] = len(sub.term_vars())
    report.counts["type_vars"] = len(sub.type_vars())
    return TranslationResult(p, sub, plan, labels)


def _ctor_pairs(p: Problem, state: AbstractionState):
    pairs = []
    for inst in p.stats.get("datatypes", []):
        decl = p.env.inductives[inst.base_name]
        for cname, _ in decl.ctors:
            lc = normalize(p.env, mk_app(Const(cname), list(inst.type_args)))
            pairs.append((get_lvar_name(state, lc), lc))
    return pairs


def _plan_datatypes(p: Problem, state: AbstractionState):
    from .abstraction import abstract_type, get_tvar_name
    out = []
    for inst in p.stats.get("datatypes", []):
        decl = p.env.inductives[inst.base_name]
        lc_sort = normalize(p.env, mk_app(Const(inst.base_name), list(inst.type_args)))
        sort_name = get_tvar_name(state, lc_sort)
        ctors = []
        from .kernel import subst_extend
        sub = {pname: arg for (pname, _), arg in zip(decl.params, inst.type_args)}
        for cname, cty in decl.ctors:
            lc_ctor = normalize(p.env, mk_app(Const(cname), list(inst.type_args)))
            vname = get_lvar_name(state, lc_ctor)
            from .preprocess import _split_ctor_type
            arg_types, _ = _split_ctor_type(normalize(p.env, subst_extend(sub, cty)))
            fields = tuple(rho_star(abstract_type(state, a)) for a in arg_types)
            ctors.append((vname, fields))
        out.append(DatatypeHol(sort_name, tuple(ctors)))
    return out


def _provenance(sub: Substitution) -> list:
    lines = []
    for name, _ in sub.hol_ctx:
        lines.append(f"sigma {name} := {pretty_print(sub.sigma[name])}")
    return lines


# ---------------------------------------------------------------------------
# solvers

SOLVER_PRESETS = {
    # preset: (emission target, command template)
    "zipperposition": ("th0", "{bin} --input tptp --timeout {timeout_s} {file}"),
    "eprover-ho": ("th0", "{bin} --auto --cpu-limit={timeout_s} {file}"),
    "z3": ("smt2", "{bin} -T:{timeout_s} {file}"),
    "cvc5": ("smt2", "{bin} --tlimit={timeout_ms} {file}"),
}

_PROVED_TH0 = ("SZS status Theorem", "SZS status Unsatisfiable")


def find_solver_binary(name: str) -> Optional[str]:
    override = os.environ.get("LAPC_SOLVER_PATH")
    if override:
        cand = Path(override) / name
        if cand.exists():
            return str(cand)
    return shutil.which(name)


def solver_command(config: PipelineConfig):
    """Resolve the solver option into (target, argv template string)."""
    spec = config.solver
    if spec is None:
        return None
    if spec in SOLVER_PRESETS:
        target, template = SOLVER_PRESETS[spec]
        binary = find_solver_binary(spec)
        if binary is None:
            raise errors.ConfigError(
                f"solver preset {spec!r}: binary not found on PATH or LAPC_SOLVER_PATH")
        return target, template.replace("{bin}", binary)
    if "{file}" not in spec:
        raise errors.ConfigError(
            "custom solver commands must contain a {file} placeholder")
    target = config.emit[0] if config.emit else "th0"
    return target, spec


def run_solver(command_template: str, file: Path, timeout: float):
    """Run the solver; the subprocess never outlives timeout by more than 1s."""
    cmd = command_template.format(
        file=str(file), timeout_s=max(1, int(round(timeout))),
        timeout_ms=int(timeout * 1000))
    proc = subprocess.Popen(cmd.split(), stdout=subprocess.PIPE,
                            stderr=subprocess.STDOUT, text=True)
    try:
        out, _ = proc.communicate(timeout=timeout)
        timed_out = False
    except subprocess.TimeoutExpired:
        proc.kill()
        out, _ = proc.communicate()
        timed_out = True
    return _scan_verdict(out or "", timed_out), out or ""


def _scan_verdict(out: str, timed_out: bool) -> str:
    for token in _PROVED_TH0:
        if token in out:
            return "proved"
    for line in out.splitlines():
        if line.strip() == "unsat":
            return "proved"
    if timed_out:
        return "timeout"
    for line in out.splitlines():
        if line.strip() in ("sat", "unknown") or "SZS status" in line:
            return "unknown"
    return "unknown" if out.strip() else "error"


# ---------------------------------------------------------------------------

def run_pipeline(file, config: PipelineConfig) -> RunReport:
    """Full run on one .lap file: translate, emit, optionally prove."""
    file = Path(file)
    report = RunReport(problem=file.name)
    clock = _Clock(report)
    try:
        with clock.time("parse"):
            problem = load_problem(file)
        problem = _apply_overrides(problem, config)
        result = translate(problem, config, report)
    except errors.LapError as exc:
        report.verdict = "error"
        report.error = f"{type(exc).__name__}: {exc}"
        return report

    solver = None
    if config.solver is not None:
        solver = solver_command(config)

    targets = list(config.emit)
    if solver and solver[0] not in targets:
        targets.append(solver[0])
    out_dir = Path(config.out_dir) if config.out_dir else file.parent
    with clock.time("emit"):
        emitted = {}
        for target in targets:
            try:
                if target == "th0":
                    text = emit_th0(result.plan,
                                    free_constructors=config.th0_free_constructors)
                    path = out_dir / (file.stem + ".p")
                elif target == "smt2":
                    text = emit_smt(result.plan, encoding=config.smt_encoding)
                    path = out_dir / (file.stem + ".smt2")
                else:
                    raise errors.ConfigError(f"unknown emission target {target!r}")
            except errors.UnsupportedInEmission as exc:
                report.warnings.append(f"emit {target}: {exc}")
                continue
            path.write_text(text, encoding="utf-8")
            emitted[target] = path
            report.emissions.append(str(path))

    if solver is not None:
        target, template = solver
        if target not in emitted:
            report.verdict = "error"
            report.error = f"solver needs {target} emission, which failed"
            return report
        with clock.time("solve"):
            verdict, _out = run_solver(template, emitted[target], config.timeout)
        report.verdict = verdict
        if verdict == "proved":
            report.warnings.append(
                "trusting the prover's output; no proof reconstruction")
    return report


CSV_COLUMNS = [
    "file", "verdict", "error", "t_parse_ms", "t_preprocess_ms",
    "t_saturate_ms", "t_abstract_ms", "t_emit_ms", "t_solve_ms",
    "n_premises", "n_hyp_instances", "n_const_instances", "n_eq_theorems",
    "n_axioms", "n_dropped", "size_input", "size_mono", "size_ratio",
    "warnings",
]


def report_row(r: RunReport) -> dict:
    return {
        "file": r.problem,
        "verdict": r.verdict,
        "error": r.error or "",
        "t_parse_ms": r.timings_ms.get("parse", ""),
        "t_preprocess_ms": r.timings_ms.get("preprocess", ""),
        "t_saturate_ms": r.timings_ms.get("saturate", ""),
        "t_abstract_ms": r.timings_ms.get("abstract", ""),
        "t_emit_ms": r.timings_ms.get("emit", ""),
        "t_solve_ms": r.timings_ms.get("solve", ""),
        "n_premises": r.counts.get("premises", ""),
        "n_hyp_instances": r.counts.get("hyp_instances", ""),
        "n_const_instances": r.counts.get("const_instances", ""),
        "n_eq_theorems": r.counts.get("eq_theorems", ""),
        "n_axioms": r.counts.get("axioms", ""),
        "n_dropped": len(r.dropped),
        "size_input": r.size_input,
        "size_mono": r.size_mono,
        "size_ratio": f"{r.size_ratio:.4f}" if r.size_ratio is not None else "",
        "warnings": "; ".join(r.warnings),
    }


@dataclass
class BatchReport:
    reports: list
    solved: int = 0
    mean_time_ms: float = 0.0
    mean_size_ratio: Optional[float] = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in self.reports:
            w.writerow(report_row(r))
        return buf.getvalue()


def run_batch(directory, config: PipelineConfig) -> BatchReport:
    """Run every .lap file in the directory; failures are recorded, not fatal."""
    directory = Path(directory)
    files = sorted(directory.glob("*.lap"))

    def one(f):
        try:
            return run_pipeline(f, config)
        except Exception as exc:  # noqa: BLE001 - batch must keep going
            r = RunReport(problem=f.name, verdict="error",
                          error=f"{type(exc).__name__}: {exc}")
            return r

    if config.jobs > 1 and len(files) > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            reports = list(pool.map(one, files))
    else:
        reports = [one(f) for f in files]

    solved = sum(1 for r in reports if r.verdict == "proved")
    times = [sum(r.timings_ms.values()) for r in reports]
    ratios = [r.size_ratio for r in reports if r.size_ratio is not None]
    return BatchReport(
        reports=reports,
        solved=solved,
        mean_time_ms=(sum(times) / len(times)) if times else 0.0,
        mean_size_ratio=(sum(ratios) / len(ratios)) if ratios else None,
    )
