"""Saturation-based quantifier instantiation.

matchInst strips the leading non-proposition quantifiers of a hypothesis into
metavariables, matches a HOL* instance against the lFun of every subterm, and
re-generalizes whatever stayed unassigned. The saturation loop feeds new
hypothesis instances and their HOL* instances back into the queue until it
drains or the instance threshold trips. Unification is deliberately
incomplete: at most one unifier per pair unless the enumeration flag is set.
"""
from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field

from . import errors
from .depanalysis import InstanceSet, analyze_args, hol_insts, q_mono
from .kernel import (
    Context, Environment, Reducibility, infer_type, is_def_eq, logical_symbol,
    normalize, subst_extend,
)
from .term import (
    App, BoundVar, Const, FreeVar, Lam, Pi, PROP, Sort, Term, abstract_free,
    consts_of, fingerprint, free_vars, instantiate, mk_app, spine,
)


@dataclass(frozen=True)
class Unifier:
    """An M-unifier: assignment is identity outside meta_set."""

    meta_set: frozenset[str]
    assignment: dict
    domain_ctx: Context
    codomain_ctx: Context

    def resolve(self, t: Term) -> Term:
        while True:
            t2 = subst_extend(self.assignment, t)
            if t2 == t:
                return t
            t = t2


def subst_well_formed(env: Environment, domain_ctx: Context,
                      codomain_ctx: Context, sigma) -> bool:
    """The Appendix-style condition: codomain ⊢ σ(u) : σ̄(τ) for (u:τ) in domain."""
    for name, ty in domain_ctx:
        val = sigma.get(name, FreeVar(name))
        try:
            actual = infer_type(env, codomain_ctx, val)
        except errors.TypeError:
            return False
        expected = normalize(env, subst_extend(dict(sigma), ty))
        if not is_def_eq(env, codomain_ctx, actual, expected):
            return False
    return True


# ---------------------------------------------------------------------------
# unification (structural, first-order flavored, one unifier)

class _USt:
    __slots__ = ("env", "ctx", "metas", "barrier", "sigma")

    def __init__(self, env, ctx, metas, barrier):
        self.env = env
        self.ctx = ctx
        self.metas = metas
        self.barrier = barrier
        self.sigma: dict[str, Term] = {}

    def resolve(self, t: Term) -> Term:
        while True:
            t2 = subst_extend(self.sigma, t)
            if t2 == t:
                return t
            t = t2


def _assign(st: _USt, name: str, v: Term) -> bool:
    v = _touch(st, v)
    fv = free_vars(v)
    if name in fv:  # occurs check
        return False
    if fv & st.barrier:  # would escape a local binder
        return False
    declared = st.ctx.lookup(name)
    if declared is None:
        return False
    try:
        vty = infer_type(st.env, st.ctx, v)
    except errors.TypeError:
        return False
    expected = _touch(st, declared)
    if not is_def_eq(st.env, st.ctx, vty, expected):
        return False
    st.sigma[name] = v
    return True


def _touch(st: _USt, t: Term) -> Term:
    """Resolve assigned metas and renormalize, but only when t mentions one
    (inputs stay β-normal through structural decomposition otherwise)."""
    if st.sigma and free_vars(t) & st.sigma.keys():
        return normalize(st.env, st.resolve(t))
    return t


def _u(st: _USt, a: Term, b: Term, deltad: bool = False) -> bool:
    a = _touch(st, a)
    b = _touch(st, b)
    if a == b:
        return True
    if isinstance(a, FreeVar) and a.name in st.metas and a.name not in st.sigma:
        return _assign(st, a.name, b)
    if isinstance(b, FreeVar) and b.name in st.metas and b.name not in st.sigma:
        return _assign(st, b.name, a)
    if isinstance(a, App) and isinstance(b, App):
        if _u(st, a.fn, b.fn, deltad) and _u(st, a.arg, b.arg, deltad):
            return True
    elif isinstance(a, Pi) and isinstance(b, Pi) or isinstance(a, Lam) and isinstance(b, Lam):
        if _u(st, a.binder_type, b.binder_type, deltad):
            fresh = f"?u{len(st.ctx)}"
            st2 = _USt(st.env, st.ctx.extend(fresh, _touch(st, a.binder_type)),
                       st.metas, st.barrier | {fresh})
            st2.sigma = st.sigma
            return _u(st2, instantiate(a.body, FreeVar(fresh)),
                      instantiate(b.body, FreeVar(fresh)), deltad)
        return False
    if not deltad:
        a2 = normalize(st.env, st.resolve(a), delta=Reducibility.DEFAULT)
        b2 = normalize(st.env, st.resolve(b), delta=Reducibility.DEFAULT)
        if a2 != a or b2 != b:
            return _u(st, a2, b2, True)
    return False


def unify(env: Environment, ctx: Context, M: frozenset[str], t1: Term, t2: Term,
          barrier: frozenset[str] = frozenset(),
          enumerate_alternatives: bool = False) -> list[Unifier]:
    """Zero or one M-unifier of t1 and t2 (a complete set is not attempted).

    With enumerate_alternatives a small bounded set (≤ 4) of distinct
    unifiers found along δ-variant routes is returned instead.
    """
    t1 = normalize(env, t1)
    t2 = normalize(env, t2)
    attempts = [(t1, t2, False)]
    if enumerate_alternatives:
        attempts.append((normalize(env, t1, delta=Reducibility.DEFAULT),
                         normalize(env, t2, delta=Reducibility.DEFAULT), True))
    out: list[Unifier] = []
    seen = set()
    for a, b, deltad in attempts:
        st = _USt(env, ctx, M, barrier)
        try:
            ok = _u(st, a, b, deltad)
        except errors.ReductionBudgetError:
            ok = False
        if not ok:
            continue
        if not is_def_eq(env, ctx, st.resolve(t1), st.resolve(t2)):
            continue
        key = tuple(sorted((k, fingerprint(v)) for k, v in st.sigma.items()))
        if key in seen:
            continue
        seen.add(key)
        out.append(Unifier(M, dict(st.sigma), ctx, ctx))
        if len(out) >= 4 or not enumerate_alternatives:
            break
    return out


# ---------------------------------------------------------------------------
# matching (Algorithm 3) and matchInst

def match_term(env: Environment, ctx: Context, M: frozenset[str], m: Term,
               h: Term, barrier: frozenset[str] = frozenset(),
               absorb_instances: bool = False) -> list[Unifier]:
    """All unifiers of m against the lFun of subterms of h."""
    out: list[Unifier] = []
    seen = set()

    def push(u: Unifier):
        key = tuple(sorted((k, fingerprint(v)) for k, v in u.assignment.items()))
        if key not in seen:
            seen.add(key)
            out.append(u)

    def rec(ctx: Context, h: Term, barrier: frozenset[str]):
        head, args = spine(h)
        if isinstance(head, (FreeVar, Const)) and args:
            for a in args:
                rec(ctx, a, barrier)
            try:
                analysis = analyze_args(env, ctx, head, args, absorb_instances)
            except errors.TypeError:
                return
            for u in unify(env, ctx, M, m, analysis.l_fun, barrier):
                push(u)
            return
        if isinstance(h, (Pi, Lam)):
            rec(ctx, h.binder_type, barrier)
            fresh = f"?b{len(ctx)}"
            ctx2 = ctx.extend(fresh, normalize(env, h.binder_type))
            rec(ctx2, instantiate(h.body, FreeVar(fresh)), barrier | {fresh})
            return
        # bare variables, sorts: nothing to match

    rec(ctx, h, barrier)
    return out


def _strip_leading_nonprop(env: Environment, ctx: Context, h: Term, prefix: str):
    """Open leading ∀ binders whose domain is not a proposition."""
    opened = []  # (fresh name, display name, declared type under ctx')
    body = h
    ctx2 = ctx
    while isinstance(body, Pi):
        dom = normalize(env, body.binder_type)
        if infer_type(env, ctx2, dom) == PROP:
            break
        fresh = f"{prefix}{len(opened)}@{len(ctx2)}"
        opened.append((fresh, body.binder_name, dom))
        ctx2 = ctx2.extend(fresh, dom)
        body = instantiate(body.body, FreeVar(fresh))
    return ctx2, opened, body


def _first_occurrence_order(body: Term, names: list[str]) -> dict[str, int]:
    pos = {}
    counter = [0]

    def walk(t: Term):
        counter[0] += 1
        if isinstance(t, FreeVar):
            if t.name not in pos:
                pos[t.name] = counter[0]
            return
        if isinstance(t, App):
            walk(t.fn)
            walk(t.arg)
        elif isinstance(t, (Lam, Pi)):
            walk(t.binder_type)
            walk(t.body)

    walk(body)
    return {n: pos.get(n, 1 << 30) for n in names}


def _generalize(env: Environment, sigma: dict, body: Term, unassigned) -> Term:
    """Re-introduce unassigned metas as leading ∀ binders.

    Order: first occurrence in the instantiated body, corrected so a binder
    is only placed once the metas occurring in its type are placed (absent
    metas fall back to their original relative order).
    """
    names = [n for n, _, _ in unassigned]
    occ = _first_occurrence_order(body, names)
    info = {n: (disp, normalize(env, subst_extend(sigma, ty)))
            for n, disp, ty in unassigned}
    deps = {n: free_vars(info[n][1]) & set(names) for n in names}
    original = {n: i for i, n in enumerate(names)}
    placed: list[str] = []
    remaining = set(names)
    while remaining:
        ready = [n for n in remaining if not (deps[n] - set(placed))]
        if not ready:  # give up on correction; original order is always valid
            ready = sorted(remaining, key=lambda n: original[n])
            placed.extend(ready)
            break
        ready.sort(key=lambda n: (occ[n], original[n]))
        placed.append(ready[0])
        remaining.discard(ready[0])
    inst = body
    for n in reversed(placed):
        disp, ty = info[n]
        inst = Pi(disp, ty, abstract_free(inst, n))
    return inst


def match_inst(env: Environment, ctx: Context, m: Term, h: Term,
               absorb_instances: bool = False) -> list[Term]:
    """All hypothesis instances of h with a subterm lFun matching m."""
    ctx2, opened, body = _strip_leading_nonprop(env, ctx, h, "?m")
    M = frozenset(n for n, _, _ in opened)
    out: list[Term] = []
    for u in match_term(env, ctx2, M, m, body, absorb_instances=absorb_instances):
        sigma = u.assignment
        inst_body = normalize(env, u.resolve(body))
        unassigned = [(n, disp, ty) for n, disp, ty in opened if n not in sigma]
        inst = _generalize(env, sigma, inst_body, unassigned)
        try:
            if infer_type(env, ctx, inst) != PROP:
                continue
        except errors.TypeError:
            warnings.warn("dropping ill-typed hypothesis instance", stacklevel=2)
            continue
        if all(inst != prev for prev in out):
            out.append(inst)
    return out


def hyp_equiv(env: Environment, ctx: Context, t1: Term, t2: Term) -> bool:
    """Equivalence as hypotheses: each is a hypothesis instance of the other."""
    if t1 == t2:
        return True
    # instantiating in both directions cannot change the constant set
    if consts_of(t1) != consts_of(t2):
        return False
    return (_is_hyp_instance(env, ctx, t2, t1)
            and _is_hyp_instance(env, ctx, t1, t2))


def _is_hyp_instance(env: Environment, ctx: Context, gen: Term, special: Term) -> bool:
    ctx2, _, sbody = _strip_leading_nonprop(env, ctx, special, "!s")
    ctx3, opened, gbody = _strip_leading_nonprop(env, ctx2, gen, "?g")
    M = frozenset(n for n, _, _ in opened)
    return bool(unify(env, ctx3, M, gbody, sbody))


# ---------------------------------------------------------------------------
# equational theorems between HOL* instances

_EQ_ARITY_CAP = 8


def _peel_and_saturate(env: Environment, ctx: Context, c: Term, prefix: str):
    """Open c's λ binders, then apply fresh variables until the type is not
    a Pi (capped); returns (ctx', opened names+display+types, applied term)."""
    opened = []
    ctx2 = ctx
    t = c
    while isinstance(t, Lam) and len(opened) < _EQ_ARITY_CAP:
        dom = normalize(env, t.binder_type)
        fresh = f"{prefix}{len(opened)}@{len(ctx2)}"
        opened.append((fresh, t.binder_name, dom))
        ctx2 = ctx2.extend(fresh, dom)
        t = instantiate(t.body, FreeVar(fresh))
    while len(opened) < _EQ_ARITY_CAP:
        ty = infer_type(env, ctx2, t)
        if not isinstance(ty, Pi):
            break
        dom = normalize(env, ty.binder_type)
        fresh = f"{prefix}{len(opened)}@{len(ctx2)}"
        opened.append((fresh, ty.binder_name, dom))
        ctx2 = ctx2.extend(fresh, dom)
        t = App(t, FreeVar(fresh))
    return ctx2, opened, t


def gen_eq_theorems(env: Environment, ctx: Context, c1: Term, c2: Term):
    """Best-effort equation relating two definitionally unequal instances.

    Unfolds one δ-layer of c1's head and tries to express the result as c2
    applied to some arguments; on success returns the typechecked closed
    equation, else None.
    """
    if c1 == c2:
        return None
    ctx2, opened, applied = _peel_and_saturate(env, ctx, c1, "?q")
    head, args = spine(applied)
    if not isinstance(head, Const):
        return None
    info = env.consts.get(head.name)
    if info is None or info.value is None or info.reducibility >= Reducibility.OPAQUE:
        return None
    unfolded = normalize(env, mk_app(info.value, args))

    # how many arguments can c2 still take
    try:
        c2_ty = infer_type(env, ctx2, c2)
    except errors.TypeError:
        return None
    arity = 0
    ty = c2_ty
    scan_ctx = ctx2
    while isinstance(ty, Pi) and arity < _EQ_ARITY_CAP:
        fresh = f"?a{arity}@{len(scan_ctx)}"
        scan_ctx = scan_ctx.extend(fresh, normalize(env, ty.binder_type))
        ty = normalize(env, instantiate(ty.body, FreeVar(fresh)))
        arity += 1

    for n in range(arity, -1, -1):
        ctx3 = ctx2
        metas = []
        probe_ty = c2_ty
        ok = True
        for i in range(n):
            if not isinstance(probe_ty, Pi):
                ok = False
                break
            fresh = f"?t{i}@{len(ctx3)}"
            dom = normalize(env, probe_ty.binder_type)
            ctx3 = ctx3.extend(fresh, dom)
            metas.append(fresh)
            probe_ty = normalize(env, instantiate(probe_ty.body, FreeVar(fresh)))
        if not ok:
            continue
        target = normalize(env, mk_app(c2, [FreeVar(x) for x in metas]))
        us = unify(env, ctx3, frozenset(metas), target, unfolded)
        if not us:
            continue
        u = us[0]
        if any(x not in u.assignment for x in metas):
            continue
        rhs = normalize(env, u.resolve(target))
        lhs = normalize(env, applied)
        if lhs == rhs:  # the unfolding round-tripped; nothing worth stating
            continue
        try:
            lhs_ty = normalize(env, infer_type(env, ctx2, lhs))
            sort = infer_type(env, ctx2, lhs_ty)
        except errors.TypeError:
            return None
        if not isinstance(sort, Sort) or sort.level < 1:
            return None
        eq = normalize(env, mk_app(logical_symbol("eq", sort.level),
                                   [lhs_ty, lhs, rhs]))
        for name, disp, dom in reversed(opened):
            eq = Pi(disp, dom, abstract_free(eq, name))
        try:
            if infer_type(env, ctx, eq) != PROP:
                return None
        except errors.TypeError:
            return None
        return eq
    return None


# ---------------------------------------------------------------------------
# the saturation loop (Algorithm 1 plus equational-theorem generation)

class InstanceQueue:
    """hi: hypothesis instances (dedup up to hypothesis equivalence);
    ci: HOL* instances (dedup fingerprint+isDefEq); active: FIFO of tags."""

    def __init__(self, env: Environment, ctx: Context):
        self.env = env
        self.ctx = ctx
        self.hi: list[Term] = []
        self.ci = InstanceSet(env, ctx)
        self.active: deque = deque()
        self.eq_theorems = 0
        self._equiv_cache: dict = {}

    def size(self) -> int:
        return len(self.hi) + len(self.ci.items)

    def _equiv(self, a: Term, b: Term) -> bool:
        key = (fingerprint(a), fingerprint(b))
        cached = self._equiv_cache.get(key)
        if cached is None:
            cached = hyp_equiv(self.env, self.ctx, a, b)
            self._equiv_cache[key] = cached
        return cached

    def add_hypothesis(self, h: Term, activate: bool = True) -> bool:
        for prev in self.hi:
            if self._equiv(prev, h):
                return False
        self.hi.append(h)
        if activate:
            self.active.append((0, h))
        return True

    def add_constant(self, c: Term) -> bool:
        before = list(self.ci.items)
        if not self.ci.add(c):
            return False
        self.active.append((1, c))
        for prev in before:
            for x, y in ((c, prev), (prev, c)):
                eq = gen_eq_theorems(self.env, self.ctx, x, y)
                if eq is not None and self.add_hypothesis(eq):
                    self.eq_theorems += 1
        return True


def saturate(env: Environment, ctx: Context, H, max_insts: int = 256,
             absorb_instances: bool = False, stats: dict = None) -> list[Term]:
    """Algorithm 1: returns the quasi-monomorphic hypothesis instances
    reachable from H within the instance threshold. Always halts."""
    q = InstanceQueue(env, ctx)
    for h in H:
        q.add_hypothesis(h, activate=False)
        for c in hol_insts(env, ctx, frozenset(), h, absorb_instances):
            q.add_constant(c)
    while q.active:
        if q.size() > max_insts:
            break
        tag, front = q.active.popleft()
        if tag == 0:
            for c in list(q.ci.items):
                _match_one_pair(env, ctx, c, front, q, absorb_instances)
                if q.size() > max_insts:
                    break
        else:
            for h in list(q.hi):
                _match_one_pair(env, ctx, front, h, q, absorb_instances)
                if q.size() > max_insts:
                    break
    result = [h for h in q.hi if q_mono(env, ctx, frozenset(), h, absorb_instances)]
    if stats is not None:
        stats["hyp_instances"] = len(q.hi)
        stats["const_instances"] = len(q.ci.items)
        stats["eq_theorems"] = q.eq_theorems
        stats["qmono_output"] = len(result)
    return result


def _match_one_pair(env, ctx, c, h, q: InstanceQueue, absorb):
    for nh in match_inst(env, ctx, c, h, absorb):
        if not q.add_hypothesis(nh):
            continue
        for nc in hol_insts(env, ctx, frozenset(), nh, absorb):
            q.add_constant(nc)
