"""Serialization of the final HOL problem to TPTP TH0 and SMT-LIB 2.

Connective expansions (the β-images of the derived logical symbols) are
folded back to native connectives during printing, and symbols marked as
equality instances print as native =. SMT output uses an applicative
encoding: function-sorted values live in uninterpreted fun_* sorts applied
through apply_* symbols, and λ abstractions are lifted to fresh defined
symbols with extensionality axioms.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

from . import errors
from .holcalc import (
    BOOL, HApp, HArrow, HBool, HBot, HBoundVar, HForall, HFreeVar, HImp,
    HLam, HSortU, HSortUPrime, HTerm, h_size, h_spine,
)
from .term import Term, size_of as lc_size_of


def size_of(t: Union[Term, HTerm]) -> int:
    """Expression-tree node count (binder type and body both counted)."""
    if isinstance(t, HTerm):
        return h_size(t)
    return lc_size_of(t)


def problem_size(terms) -> int:
    return sum(size_of(t) for t in terms)


# ---------------------------------------------------------------------------
# plan

@dataclass(frozen=True)
class DatatypeHol:
    """A monomorphic datatype on the HOL side of the translation."""

    sort_name: str
    ctors: tuple  # ((ctor symbol name, (HTerm field types...)), ...)


@dataclass
class EmitPlan:
    type_decls: list  # (name, level) — arity-0 type variables
    symbol_decls: list  # (name, HTerm type)
    axioms: list  # (label, HTerm)
    conjecture: HTerm
    datatypes: list = field(default_factory=list)  # DatatypeHol, topo order
    provenance: list = field(default_factory=list)  # comment lines
    eq_symbols: frozenset = frozenset()
    ctor_symbols: frozenset = frozenset()


# ---------------------------------------------------------------------------
# connective recognizers (β-normal expansion shapes)

def h_has_loose(t: HTerm, idx: int = 0) -> bool:
    if isinstance(t, HBoundVar):
        return t.index == idx
    if isinstance(t, HApp):
        return h_has_loose(t.fn, idx) or h_has_loose(t.arg, idx)
    if isinstance(t, HLam):
        return h_has_loose(t.binder_type, idx) or h_has_loose(t.body, idx + 1)
    if isinstance(t, HForall):
        return h_has_loose(t.domain, idx)
    if isinstance(t, HArrow):
        return h_has_loose(t.domain, idx) or h_has_loose(t.codomain, idx)
    return False


def h_lower(t: HTerm, idx: int = 0) -> HTerm:
    """Remove an unused binder index."""
    assert not h_has_loose(t, idx)
    from .holcalc import h_instantiate
    return h_instantiate(t, HBot(), idx)


def match_imp(t: HTerm):
    if isinstance(t, HApp) and isinstance(t.fn, HApp) and isinstance(t.fn.fn, HImp):
        return t.fn.arg, t.arg
    return None


def match_not(t: HTerm):
    m = match_imp(t)
    if m and isinstance(m[1], HBot):
        return m[0]
    return None


def match_forall(t: HTerm):
    """(binder name, domain, body-open) for an applied ∀'."""
    if isinstance(t, HApp) and isinstance(t.fn, HForall):
        if isinstance(t.arg, HLam):
            return t.arg.binder_name, t.fn.domain, t.arg.body
        from .holcalc import h_shift
        return "X", t.fn.domain, HApp(h_shift(t.arg, 1), HBoundVar(0))
    return None


def match_and(t: HTerm):
    """∀'(r:Bool). ((A ->' (B ->' r)) ->' r), r fresh in A and B."""
    fa = match_forall(t)
    if not fa or fa[1] != BOOL:
        return None
    _, _, body = fa
    outer = match_imp(body)
    if not outer or outer[1] != HBoundVar(0):
        return None
    inner = match_imp(outer[0])
    if not inner:
        return None
    a, rest = inner
    inner2 = match_imp(rest)
    if not inner2 or inner2[1] != HBoundVar(0):
        return None
    b = inner2[0]
    if h_has_loose(a, 0) or h_has_loose(b, 0):
        return None
    return h_lower(a), h_lower(b)


def match_or(t: HTerm):
    """∀'(r:Bool). ((A ->' r) ->' ((B ->' r) ->' r))."""
    fa = match_forall(t)
    if not fa or fa[1] != BOOL:
        return None
    _, _, body = fa
    m1 = match_imp(body)
    if not m1:
        return None
    ar, rest = m1
    m2 = match_imp(ar)
    if not m2 or m2[1] != HBoundVar(0):
        return None
    a = m2[0]
    m3 = match_imp(rest)
    if not m3 or m3[1] != HBoundVar(0):
        return None
    m4 = match_imp(m3[0])
    if not m4 or m4[1] != HBoundVar(0):
        return None
    b = m4[0]
    if h_has_loose(a, 0) or h_has_loose(b, 0):
        return None
    return h_lower(a), h_lower(b)


def match_iff(t: HTerm):
    m = match_and(t)
    if not m:
        return None
    a, b = m
    ma, mb = match_imp(a), match_imp(b)
    if ma and mb and ma[0] == mb[1] and ma[1] == mb[0]:
        return ma
    return None


def match_eq_pattern(t: HTerm):
    """∀'(p : s -> Bool). <iff-expansion of (p x, p y)> — Leibniz equality."""
    fa = match_forall(t)
    if not fa:
        return None
    _, dom, body = fa
    if not (isinstance(dom, HArrow) and dom.codomain == BOOL):
        return None
    m = match_iff(body)
    if not m:
        return None
    u, v = m
    if not (isinstance(u, HApp) and u.fn == HBoundVar(0)
            and isinstance(v, HApp) and v.fn == HBoundVar(0)):
        return None
    x, y = u.arg, v.arg
    if h_has_loose(x, 0) or h_has_loose(y, 0):
        return None
    return dom.domain, h_lower(x), h_lower(y)


def match_exists(t: HTerm):
    """∀'(q:Bool). ((∀'(x:s). P ->' q) ->' q)."""
    fa = match_forall(t)
    if not fa or fa[1] != BOOL:
        return None
    _, _, body = fa
    m = match_imp(body)
    if not m or m[1] != HBoundVar(0):
        return None
    inner = match_forall(m[0])
    if not inner:
        return None
    name, s, ibody = inner
    mi = match_imp(ibody)
    if not mi or mi[1] != HBoundVar(1):
        return None
    p = mi[0]
    if h_has_loose(p, 1) or h_has_loose(s, 0):
        return None
    return name, h_lower(s, 0), h_lower(p, 1)


# ---------------------------------------------------------------------------
# name sanitization

_SAN = re.compile(r"[^A-Za-z0-9_]")


class Namer:
    """Injective map from plan names to target-legal identifiers."""

    def __init__(self, lower_first=True):
        self.lower_first = lower_first
        self.map: dict[str, str] = {}
        self.taken: set[str] = set()

    def __call__(self, name: str) -> str:
        if name in self.map:
            return self.map[name]
        base = _SAN.sub("_", name)
        if not base or not base[0].isalpha():
            base = "s" + base
        if self.lower_first:
            base = base[0].lower() + base[1:]
        out = base
        i = 1
        while out in self.taken:
            i += 1
            out = f"{base}_{i}"
        self.taken.add(out)
        self.map[name] = out
        return out


# ---------------------------------------------------------------------------
# TPTP TH0

def emit_th0(plan: EmitPlan, free_constructors: bool = False) -> str:
    """Valid TH0 text: type declarations, axioms, and the $false conjecture.

    Datatype instances have no TH0 counterpart; with free_constructors their
    constructors are declared as ordinary symbols (no induction, disjointness,
    or injectivity), otherwise emission fails.
    """
    if plan.datatypes and not free_constructors:
        raise errors.UnsupportedInEmission(
            "TH0 output carries no datatype axioms; "
            "pass free_constructors to declare constructors as plain symbols")
    namer = Namer()
    lines = [f"% lap: {c}" for c in plan.provenance]
    for name, _level in plan.type_decls:
        n = namer(name)
        lines.append(f"thf({n}_type, type, {n}: $tType).")
    for name, ty in plan.symbol_decls:
        if name in plan.eq_symbols:
            continue
        n = namer(name)
        lines.append(f"thf({n}_decl, type, {n}: {_th0_type(ty, namer)}).")
    for label, formula in plan.axioms:
        lab = namer(f"ax_{label}")
        lines.append(f"thf({lab}, axiom, {_th0(formula, [], namer, plan.eq_symbols)}).")
    conj = _th0(plan.conjecture, [], namer, plan.eq_symbols)
    lines.append(f"thf(goal, conjecture, {conj}).")
    return "\n".join(lines) + "\n"


def _th0_type(ty: HTerm, namer: Namer) -> str:
    if isinstance(ty, HBool):
        return "$o"
    if isinstance(ty, HFreeVar):
        return namer(ty.name)
    if isinstance(ty, HArrow):
        return f"({_th0_type(ty.domain, namer)} > {_th0_type(ty.codomain, namer)})"
    raise errors.UnsupportedInEmission(f"cannot render type {ty!r} in TH0")


def _th0(t: HTerm, bound: list, namer: Namer, eq_syms: frozenset) -> str:
    m = match_eq_pattern(t)
    if m:
        _, x, y = m
        return f"({_th0(x, bound, namer, eq_syms)} = {_th0(y, bound, namer, eq_syms)})"
    m = match_exists(t)
    if m:
        name, s, p = m
        var = f"X{len(bound)}"
        return (f"(?[{var}: {_th0_type(s, namer)}]: "
                f"{_th0(p, bound + [(var, s)], namer, eq_syms)})")
    m = match_iff(t)
    if m:
        return f"({_th0(m[0], bound, namer, eq_syms)} <=> {_th0(m[1], bound, namer, eq_syms)})"
    m = match_and(t)
    if m:
        return f"({_th0(m[0], bound, namer, eq_syms)} & {_th0(m[1], bound, namer, eq_syms)})"
    m = match_or(t)
    if m:
        return f"({_th0(m[0], bound, namer, eq_syms)} | {_th0(m[1], bound, namer, eq_syms)})"
    m = match_not(t)
    if m:
        return f"(~ {_th0(m, bound, namer, eq_syms)})"
    m = match_imp(t)
    if m:
        return f"({_th0(m[0], bound, namer, eq_syms)} => {_th0(m[1], bound, namer, eq_syms)})"
    m = match_forall(t)
    if m:
        _, s, body = m
        var = f"X{len(bound)}"
        return (f"(![{var}: {_th0_type(s, namer)}]: "
                f"{_th0(body, bound + [(var, s)], namer, eq_syms)})")
    if isinstance(t, HBot):
        return "$false"
    head, args = h_spine(t)
    if args and isinstance(head, HFreeVar) and head.name in eq_syms and len(args) == 2:
        return f"({_th0(args[0], bound, namer, eq_syms)} = {_th0(args[1], bound, namer, eq_syms)})"
    if args:
        parts = [_th0(head, bound, namer, eq_syms)] + \
            [_th0(a, bound, namer, eq_syms) for a in args]
        return "(" + " @ ".join(parts) + ")"
    if isinstance(t, HFreeVar):
        return namer(t.name)
    if isinstance(t, HBoundVar):
        return bound[-1 - t.index][0]
    if isinstance(t, HLam):
        var = f"X{len(bound)}"
        return (f"(^[{var}: {_th0_type(t.binder_type, namer)}]: "
                f"{_th0(t.body, bound + [(var, t.binder_type)], namer, eq_syms)})")
    raise errors.UnsupportedInEmission(f"cannot render {t!r} in TH0")


# ---------------------------------------------------------------------------
# SMT-LIB 2

class _SmtState:
    def __init__(self, plan: EmitPlan, encoding: str):
        self.plan = plan
        self.encoding = encoding
        self.namer = Namer(lower_first=False)
        self.fun_sorts: dict[str, str] = {}  # type key -> sort name
        self.fun_sort_types: dict[str, HTerm] = {}
        self.applies: dict[str, tuple[str, str, str]] = {}  # name -> (fun sort, arg, res)
        self.lifted: list[str] = []  # declarations + axioms for lifted lambdas
        self.lift_count = 0
        self.lift_cache: dict = {}
        self.arity: dict[str, int] = {}
        self.symbol_types = dict(plan.symbol_decls)


def _scan_arities(plan: EmitPlan, st: _SmtState):
    names = {name for name, _ in plan.symbol_decls}

    def walk(t: HTerm):
        head, args = h_spine(t)
        if isinstance(head, HFreeVar) and head.name in names:
            cur = st.arity.get(head.name)
            st.arity[head.name] = len(args) if cur is None else min(cur, len(args))
        for a in args:
            walk(a)
        if isinstance(head, HLam):
            walk(head.binder_type)
            walk(head.body)

    for _, f in plan.axioms:
        walk(f)
    walk(plan.conjecture)
    for name, ty in plan.symbol_decls:
        depth = 0
        cur = ty
        while isinstance(cur, HArrow):
            depth += 1
            cur = cur.codomain
        st.arity.setdefault(name, depth)
        st.arity[name] = min(st.arity[name], depth)
        if name in plan.ctor_symbols:
            st.arity[name] = depth  # constructors keep their full arity


def _smt_sort(ty: HTerm, st: _SmtState) -> str:
    if isinstance(ty, HBool):
        return "Bool"
    if isinstance(ty, HFreeVar):
        return st.namer(ty.name)
    if isinstance(ty, HArrow):
        if st.encoding == "ho":
            return f"(-> {_smt_sort(ty.domain, st)} {_smt_sort(ty.codomain, st)})"
        key = _type_key(ty)
        if key not in st.fun_sorts:
            st.fun_sorts[key] = f"fun{len(st.fun_sorts)}"
            st.fun_sort_types[key] = ty
        return st.fun_sorts[key]
    raise errors.UnsupportedInEmission(f"cannot render sort {ty!r} in SMT-LIB")


def _type_key(ty: HTerm) -> str:
    if isinstance(ty, HBool):
        return "o"
    if isinstance(ty, HFreeVar):
        return ty.name
    if isinstance(ty, HArrow):
        return f"({_type_key(ty.domain)}>{_type_key(ty.codomain)})"
    raise errors.UnsupportedInEmission(f"cannot key {ty!r}")


def _apply_name(fn_ty: HArrow, st: _SmtState) -> str:
    fsort = _smt_sort(fn_ty, st)
    name = f"apply_{fsort}"
    if name not in st.applies:
        st.applies[name] = (fsort, _smt_sort(fn_ty.domain, st),
                            _smt_sort(fn_ty.codomain, st))
    return name


def _h_type_of(t: HTerm, bound: list, st: _SmtState) -> HTerm:
    """Type of a β-normal term over declared symbols (emission-local)."""
    if isinstance(t, HFreeVar):
        ty = st.symbol_types.get(t.name)
        if ty is None:
            raise errors.UnsupportedInEmission(f"undeclared symbol {t.name!r}")
        return ty
    if isinstance(t, HBoundVar):
        return bound[-1 - t.index][1]
    if isinstance(t, HApp):
        fty = _h_type_of(t.fn, bound, st)
        if not isinstance(fty, HArrow):
            raise errors.UnsupportedInEmission("over-application in SMT rendering")
        return fty.codomain
    if isinstance(t, HLam):
        body_ty = _h_type_of(t.body, bound + [("_", t.binder_type)], st)
        return HArrow(t.binder_type, body_ty)
    if isinstance(t, HBot):
        return BOOL
    return BOOL  # folded connective positions are boolean


def _lift_lambda(t: HLam, bound: list, st: _SmtState, depth: int) -> str:
    """Lambda-lift a stray abstraction to a fresh symbol + extensionality."""
    if depth > 1:
        raise errors.UnsupportedInEmission(
            "nested λ abstractions beyond depth 1 in SMT emission")
    from .holcalc import h_instantiate, hfingerprint
    used = [i for i in range(len(bound)) if h_has_loose(t, i)]
    cache_key = (hfingerprint(t), tuple(bound[-1 - i][0] for i in used))
    hit = st.lift_cache.get(cache_key)
    if hit is not None:
        return hit
    name = f"lam{st.lift_count}"
    st.lift_count += 1
    # close the lambda over its enclosing binders, innermost first; used
    # binders become parameters of the lifted symbol
    closed: HTerm = t
    params: list[tuple[str, HTerm]] = []  # (param name, HOL type)
    call_args: list[str] = []  # how the call site refers to them
    for i in range(len(bound)):
        var_name, var_ty = bound[-1 - i]
        if h_has_loose(closed, 0):
            p = f"{name}_p{len(params)}"
            params.append((p, var_ty))
            call_args.append(var_name)
            closed = h_instantiate(closed, HFreeVar(p), 0)
        else:
            closed = h_lower(closed, 0)
    for p, ty in params:
        st.symbol_types[p] = ty
        st.namer.map[p] = p
        st.namer.taken.add(p)
    lam_ty = _h_type_of(closed, [], st)
    param_sorts = " ".join(_smt_sort(ty, st) for _, ty in params)
    st.lifted.append(f"(declare-fun {name} ({param_sorts}) {_smt_sort(lam_ty, st)})")

    # a prefix of consecutive lambdas is one lift with one apply per argument
    fn_for_axiom = f"({name} {' '.join(p for p, _ in params)})" if params else name
    xs: list[tuple[str, HTerm]] = []
    body = closed
    cur_ty = lam_ty
    lhs = fn_for_axiom
    while isinstance(body, HLam):
        xl = f"{name}_x{len(xs)}"
        st.symbol_types[xl] = body.binder_type
        st.namer.map[xl] = xl
        st.namer.taken.add(xl)
        app = _apply_name(cur_ty, st)
        lhs = f"({app} {lhs} {xl})"
        xs.append((xl, body.binder_type))
        body = h_instantiate(body.body, HFreeVar(xl))
        cur_ty = cur_ty.codomain
    body_smt = _smt(body, [], st, depth)
    binders = " ".join(f"({p} {_smt_sort(ty, st)})" for p, ty in params + xs)
    st.lifted.append(f"(assert (forall ({binders}) (= {lhs} {body_smt})))")
    result = f"({name} {' '.join(call_args)})" if call_args else name
    st.lift_cache[cache_key] = result
    return result


def _smt(t: HTerm, bound: list, st: _SmtState, depth: int = 0) -> str:
    eq = st.plan.eq_symbols
    m = match_eq_pattern(t)
    if m:
        return f"(= {_smt(m[1], bound, st, depth)} {_smt(m[2], bound, st, depth)})"
    m = match_exists(t)
    if m:
        name, s, p = m
        var = f"X{len(bound)}"
        return (f"(exists (({var} {_smt_sort(s, st)})) "
                f"{_smt(p, bound + [(var, s)], st, depth)})")
    m = match_iff(t)
    if m:
        return f"(= {_smt(m[0], bound, st, depth)} {_smt(m[1], bound, st, depth)})"
    m = match_and(t)
    if m:
        return f"(and {_smt(m[0], bound, st, depth)} {_smt(m[1], bound, st, depth)})"
    m = match_or(t)
    if m:
        return f"(or {_smt(m[0], bound, st, depth)} {_smt(m[1], bound, st, depth)})"
    m = match_not(t)
    if m:
        return f"(not {_smt(m, bound, st, depth)})"
    m = match_imp(t)
    if m:
        return f"(=> {_smt(m[0], bound, st, depth)} {_smt(m[1], bound, st, depth)})"
    m = match_forall(t)
    if m:
        _, s, body = m
        var = f"X{len(bound)}"
        return (f"(forall (({var} {_smt_sort(s, st)})) "
                f"{_smt(body, bound + [(var, s)], st, depth)})")
    if isinstance(t, HBot):
        return "false"
    head, args = h_spine(t)
    if args and isinstance(head, HFreeVar) and head.name in eq and len(args) == 2:
        return f"(= {_smt(args[0], bound, st, depth)} {_smt(args[1], bound, st, depth)})"
    if args:
        return _smt_app(head, args, bound, st, depth)
    if isinstance(t, HFreeVar):
        if t.name in eq:
            raise errors.UnsupportedInEmission(
                "partially applied equality in SMT emission")
        return st.namer(t.name)
    if isinstance(t, HBoundVar):
        return bound[-1 - t.index][0]
    if isinstance(t, HLam):
        if st.encoding == "ho":
            var = f"X{len(bound)}"
            return (f"(lambda (({var} {_smt_sort(t.binder_type, st)})) "
                    f"{_smt(t.body, bound + [(var, t.binder_type)], st, depth)})")
        return _lift_lambda(t, bound, st, depth + 1)
    raise errors.UnsupportedInEmission(f"cannot render {t!r} in SMT-LIB")


def _smt_app(head, args, bound, st: _SmtState, depth) -> str:
    if st.encoding == "ho":
        parts = [_smt(head, bound, st, depth)] + [_smt(a, bound, st, depth) for a in args]
        return "(" + " ".join(parts) + ")"
    if isinstance(head, HFreeVar) and head.name in st.arity:
        k = st.arity[head.name]
        if head.name in st.plan.ctor_symbols and len(args) != k:
            raise errors.UnsupportedInEmission(
                f"partially applied constructor {head.name!r} in SMT emission")
        direct = args[:k]
        rest = args[k:]
        if k == 0:
            out = st.namer(head.name)
        else:
            rendered = " ".join(_smt(a, bound, st, depth) for a in direct)
            out = f"({st.namer(head.name)} {rendered})"
        ty = st.symbol_types[head.name]
        for _ in range(k):
            ty = ty.codomain
        cur_ty = ty
    else:
        out = _smt(head, bound, st, depth)
        cur_ty = _h_type_of(head, bound, st)
        rest = args
    for a in rest:
        if not isinstance(cur_ty, HArrow):
            raise errors.UnsupportedInEmission("over-application in SMT rendering")
        app = _apply_name(cur_ty, st)
        out = f"({app} {out} {_smt(a, bound, st, depth)})"
        cur_ty = cur_ty.codomain
    return out


def emit_smt(plan: EmitPlan, encoding: str = "applicative") -> str:
    """SMT-LIB 2 script ending in (check-sat); unsat means proved."""
    if encoding not in ("applicative", "ho"):
        raise errors.ConfigError(f"unknown SMT encoding {encoding!r}")
    st = _SmtState(plan, encoding)
    if encoding == "applicative":
        _scan_arities(plan, st)
    else:
        for name, ty in plan.symbol_decls:
            st.arity[name] = 0
    datatype_sorts = {d.sort_name for d in plan.datatypes}
    # render assertions first so sorts/applies/lifts are all collected
    asserts = []
    for label, formula in plan.axioms:
        asserts.append((label, _smt(formula, [], st)))
    conj = None
    if not isinstance(plan.conjecture, HBot):
        conj = _smt(plan.conjecture, [], st)

    lines = [f"; lap: {c}" for c in plan.provenance]
    lines.append("(set-logic HO_ALL)" if encoding == "ho" else "(set-logic ALL)")
    for name, _level in plan.type_decls:
        if name in datatype_sorts:
            continue
        lines.append(f"(declare-sort {st.namer(name)} 0)")
    for d in plan.datatypes:
        lines.append(_smt_datatype(d, st))
    for key, sort in st.fun_sorts.items():
        lines.append(f"(declare-sort {sort} 0)")
    for name, (fsort, asort, rsort) in st.applies.items():
        lines.append(f"(declare-fun {name} ({fsort} {asort}) {rsort})")
    for name, ty in plan.symbol_decls:
        if name in plan.eq_symbols or name in plan.ctor_symbols:
            continue
        k = st.arity.get(name, 0)
        doms = []
        cur = ty
        for _ in range(k):
            doms.append(_smt_sort(cur.domain, st))
            cur = cur.codomain
        lines.append(f"(declare-fun {st.namer(name)} ({' '.join(doms)}) {_smt_sort(cur, st)})")
    lines.extend(st.lifted)
    for label, text in asserts:
        lines.append(f"(assert {text})")
    if conj is not None:
        lines.append(f"(assert (not {conj}))")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


def _smt_datatype(d: DatatypeHol, st: _SmtState) -> str:
    sort = st.namer(d.sort_name)
    ctor_parts = []
    for cname, fields in d.ctors:
        cn = st.namer(cname)
        sels = " ".join(f"({cn}_{i} {_smt_sort(fty, st)})"
                        for i, fty in enumerate(fields))
        ctor_parts.append(f"({cn}{(' ' + sels) if sels else ''})")
    return f"(declare-datatypes (({sort} 0)) ((" + " ".join(ctor_parts) + ")))"
