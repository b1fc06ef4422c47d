"""Dynamic dependent-argument analysis and the quasi-monomorphic classifier.

Whether an argument position is dependent is decided after instantiating the
preceding arguments, so positions can stop being dependent once an earlier
type argument is filled in (the DFunLike behavior). lFun packages the head
with its dependent arguments; everything else becomes LArgs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from . import errors
from .kernel import (
    Context, Environment, Reducibility, infer_type, is_def_eq, normalize, whnf,
)
from .term import (
    App, BoundVar, Const, FreeVar, Lam, Pi, PROP, Sort, Term, fingerprint,
    free_vars, has_loose_bvar, instantiate, is_bvar_closed, mk_app, shift,
    spine,
)


def is_ladt(env: Environment, ctx: Context, s: Term) -> bool:
    """Leading-argument-dependent type: s = ∀(x:s1). s2 with x occurring in s2.

    s must be in β-normal form.
    """
    return isinstance(s, Pi) and has_loose_bvar(s.body, 0)


def is_lad(env: Environment, ctx: Context, t: Term) -> bool:
    """t has a leading-argument-dependent (β-normal) type."""
    return is_ladt(env, ctx, infer_type(env, ctx, t))


@dataclass(frozen=True)
class ArgAnalysis:
    head: Term
    args: tuple[Term, ...]
    dep_indices: frozenset[int]  # 1-based
    l_fun: Term
    l_args: tuple[Term, ...]
    d_args: tuple[Term, ...]


def analyze_args(env: Environment, ctx: Context, head: Term, args,
                 absorb_instances: bool = False) -> ArgAnalysis:
    """Classify each argument position of ``head args`` as dependent or not,
    walking left to right so earlier instantiations influence later positions.

    With absorb_instances, instance-implicit binder positions count as
    dependent regardless of occurrence, pulling typeclass arguments into lFun.
    """
    args = tuple(args)
    for a in args:
        assert is_bvar_closed(a), "analyze_args expects opened (BV-closed) arguments"
    ty = infer_type(env, ctx, head)
    dep = set()
    for i, a in enumerate(args, 1):
        if not isinstance(ty, Pi):
            ty = normalize(env, whnf(env, ty, Reducibility.DEFAULT))
        if not isinstance(ty, Pi):
            raise errors.TypeError(
                "application of a non-function during argument analysis",
                subterm=mk_app(head, args[:i]), rule="application")
        if has_loose_bvar(ty.body, 0) or (absorb_instances and ty.inst):
            dep.add(i)
        ty = normalize(env, instantiate(ty.body, a))

    l_args = tuple(a for i, a in enumerate(args, 1) if i not in dep)
    d_args = tuple(a for i, a in enumerate(args, 1) if i in dep)
    l_fun = _mk_lfun(env, ctx, head, args, dep)
    return ArgAnalysis(head, args, frozenset(dep), l_fun, l_args, d_args)


def _mk_lfun(env: Environment, ctx: Context, head: Term, args: tuple[Term, ...],
             dep: set[int]) -> Term:
    nondep = [i for i in range(1, len(args) + 1) if i not in dep]
    m = len(nondep)
    w = []
    for i, a in enumerate(args, 1):
        if i in dep:
            w.append(a)
        else:
            # r-th non-dependent binder, bound at distance m-1-r in the body
            r = nondep.index(i)
            w.append(BoundVar(m - 1 - r))
    body = mk_app(head, w)
    binders = [(f"x{i}", normalize(env, infer_type(env, ctx, args[i - 1])))
               for i in nondep]
    # η-reduce trailing binders that are applied in order
    while binders and isinstance(body, App) and isinstance(body.arg, BoundVar) \
            and body.arg.index == 0 and not has_loose_bvar(body.fn, 0):
        binders.pop()
        body = shift(body.fn, -1)
    for name, bty in reversed(binders):
        body = Lam(name, bty, body)
    return body


# ---------------------------------------------------------------------------
# QMono: the five-clause inductive definition

def q_mono(env: Environment, ctx: Context, B: frozenset[str], t: Term,
           absorb_instances: bool = False) -> bool:
    """True when t is quasi-monomorphic under ctx with bound-variable set B."""
    return _q_mono(env, ctx, B, t, absorb_instances) is None


def q_mono_violation(env: Environment, ctx: Context, B: frozenset[str], t: Term,
                     absorb_instances: bool = False):
    """None when QMono holds, else (subterm, clause) naming the violation."""
    return _q_mono(env, ctx, B, t, absorb_instances)


def _is_prop_type(env: Environment, ctx: Context, s: Term) -> bool:
    try:
        return infer_type(env, ctx, s) == PROP
    except errors.TypeError:
        return False


def _q_mono(env, ctx, B, t, absorb):
    head, args = spine(t)
    if isinstance(head, (FreeVar, Const)):
        name = head.name if isinstance(head, FreeVar) else None
        try:
            analysis = analyze_args(env, ctx, head, args, absorb)
        except errors.TypeError:
            return (t, 0)
        if name is not None and name in B:
            if analysis.dep_indices:
                return (t, 1)
            for a in args:
                bad = _q_mono(env, ctx, B, a, absorb)
                if bad is not None:
                    return bad
            return None
        for d in analysis.d_args:
            if free_vars(d) & B:
                return (t, 2)
        for a in analysis.l_args:
            bad = _q_mono(env, ctx, B, a, absorb)
            if bad is not None:
                return bad
        return None
    if isinstance(t, Lam):
        if free_vars(t.binder_type) & B:
            return (t, 3)
        if _is_prop_type(env, ctx, t.binder_type):
            return (t, 3)
        fresh = f"{t.binder_name}${len(ctx)}"
        ctx2 = ctx.extend(fresh, normalize(env, t.binder_type))
        return _q_mono(env, ctx2, B | {fresh}, instantiate(t.body, FreeVar(fresh)), absorb)
    if isinstance(t, Pi):
        if has_loose_bvar(t.body, 0):
            if free_vars(t.binder_type) & B:
                return (t, 4)
            if _is_prop_type(env, ctx, t.binder_type):
                return (t, 4)
            fresh = f"{t.binder_name}${len(ctx)}"
            ctx2 = ctx.extend(fresh, normalize(env, t.binder_type))
            opened = instantiate(t.body, FreeVar(fresh))
            if not _is_prop_type(env, ctx2, opened):
                return (t, 4)
            return _q_mono(env, ctx2, B | {fresh}, opened, absorb)
        lhs = t.binder_type
        rhs = shift(t.body, -1)
        if not _is_prop_type(env, ctx, lhs) or not _is_prop_type(env, ctx, rhs):
            return (t, 5)
        bad = _q_mono(env, ctx, B, lhs, absorb)
        if bad is not None:
            return bad
        return _q_mono(env, ctx, B, rhs, absorb)
    # sorts and lambda-headed redexes have no QMono clause
    return (t, 0)


# ---------------------------------------------------------------------------
# HOL* instance collection

class InstanceSet:
    """Ordered, duplicate-free (fingerprint then isDefEq) collection of terms."""

    def __init__(self, env: Environment, ctx: Context):
        self.env = env
        self.ctx = ctx
        self.items: list[Term] = []
        self._by_fp: dict[int, list[Term]] = {}

    def __contains__(self, t: Term) -> bool:
        for prev in self._by_fp.get(fingerprint(t), ()):
            if prev == t:
                return True
        for prev in self.items:
            if is_def_eq(self.env, self.ctx, prev, t):
                return True
        return False

    def add(self, t: Term) -> bool:
        if t in self:
            return False
        self.items.append(t)
        self._by_fp.setdefault(fingerprint(t), []).append(t)
        return True


def hol_insts(env: Environment, ctx: Context, B: frozenset[str], t: Term,
              absorb_instances: bool = False) -> list[Term]:
    """All HOL* instances occurring in t whose free variables avoid B.

    Bare unapplied variables are not collected (they carry no dependent
    instantiation and the worked examples exclude them); bare constants are.
    """
    out = InstanceSet(env, ctx)
    _hol_insts(env, ctx, B, t, absorb_instances, out)
    return list(out.items)


def _hol_insts(env, ctx, B, t, absorb, out: InstanceSet):
    head, args = spine(t)
    if isinstance(head, (FreeVar, Const)):
        try:
            analysis = analyze_args(env, ctx, head, args, absorb)
        except errors.TypeError:
            return
        l = analysis.l_fun
        bare_var = isinstance(l, FreeVar)
        if not bare_var and not (free_vars(l) & B):
            out.add(l)
        for a in analysis.l_args:
            _hol_insts(env, ctx, B, a, absorb, out)
        return
    if isinstance(t, (Lam, Pi)):
        _hol_insts(env, ctx, B, t.binder_type, absorb, out)
        fresh = f"{t.binder_name}${len(ctx)}"
        ctx2 = ctx.extend(fresh, normalize(env, t.binder_type))
        _hol_insts(env, ctx2, B | {fresh}, instantiate(t.body, FreeVar(fresh)),
                   absorb, out)
        return
    # sorts and redex heads contribute nothing
