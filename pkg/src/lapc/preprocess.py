"""Problem-level preprocessing passes.

Pass order: reducible-level normalization, unfold instruction, defeq
instruction, quantifier introduction, proof by contradiction, subexpression
equational theorems, and monomorphic inductive-instance collection.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

from . import errors
from .instantiation import gen_eq_theorems
from .kernel import (
    BOT, Context, Environment, Reducibility, infer_type, is_def_eq,
    logical_symbol, normalize,
)
from .term import (
    App, BoundVar, Const, FreeVar, Lam, Pi, PROP, Sort, Term, abstract_free,
    consts_of, fingerprint, free_vars, has_loose_bvar, instantiate,
    is_bvar_closed, mk_app, shift, spine, subst_const,
)


@dataclass(frozen=True)
class Instructions:
    unfold: tuple[str, ...] = ()
    defeq: tuple[str, ...] = ()


@dataclass(frozen=True)
class Options:
    absorb_instances: bool = False
    max_insts: int = 256
    drop_non_qmono: bool = False
    subexpr_pair_budget: int = 64


@dataclass(frozen=True)
class Problem:
    env: Environment
    ctx: Context
    premises: tuple[tuple[str, Term], ...]
    goal: Term
    instructions: Instructions = Instructions()
    options: Options = Options()
    stats: dict = field(default_factory=dict, compare=False)

    def premise_terms(self) -> list[Term]:
        return [t for _, t in self.premises]


@dataclass(frozen=True)
class DatatypeInstance:
    base_name: str
    type_args: tuple[Term, ...]
    constructors: tuple[tuple[str, tuple[Term, ...]], ...]


# ---------------------------------------------------------------------------

def normalize_problem(p: Problem) -> Problem:
    """Stage 0: β η ι plus reducible-level δ over premises, goal, and context."""
    ctx = Context(tuple((n, normalize(p.env, ty, delta=Reducibility.REDUCIBLE))
                        for n, ty in p.ctx))
    premises = tuple((n, normalize(p.env, t, delta=Reducibility.REDUCIBLE))
                     for n, t in p.premises)
    goal = normalize(p.env, p.goal, delta=Reducibility.REDUCIBLE)
    return replace(p, ctx=ctx, premises=premises, goal=goal)


def intro_foralls(p: Problem) -> Problem:
    """Move the goal's leading ∀ binders into the context; afterwards every
    proposition-typed context entry is collected into the premise list."""
    ctx = p.ctx
    premises = list(p.premises)
    goal = p.goal
    used = set(ctx.names()) | {n for n, _ in premises} | set(p.env.consts)
    while isinstance(goal, Pi):
        name = goal.binder_name if goal.binder_name not in used else _uniq(goal.binder_name, used)
        used.add(name)
        dom = normalize(p.env, goal.binder_type)
        ctx = ctx.extend(name, dom)
        goal = normalize(p.env, instantiate(goal.body, FreeVar(name)))
    have = {fingerprint(t) for _, t in premises}
    for name, ty in ctx:
        if infer_type(p.env, ctx, ty) == PROP and fingerprint(ty) not in have:
            premises.append((name, ty))
            have.add(fingerprint(ty))
    return replace(p, ctx=ctx, premises=tuple(premises), goal=goal)


def _uniq(base: str, used) -> str:
    i = 1
    while f"{base}{i}" in used:
        i += 1
    return f"{base}{i}"


def by_contradiction(p: Problem) -> Problem:
    """Add neg_goal : ¬goal and replace the goal with ⊥ (classical)."""
    neg = Pi("_", p.goal, shift(BOT, 1))
    premises = p.premises + (("neg_goal", neg),)
    return replace(p, premises=premises, goal=BOT)


# ---------------------------------------------------------------------------
# unfolding and definitional-equality instructions

def _unfold_order(env: Environment, names) -> list[str]:
    """Topological order: f before g when g occurs in f's definition."""
    names = list(names)
    nameset = set(names)
    deps = {}
    for f in names:
        info = env.consts.get(f)
        if info is None:
            raise errors.UnknownConstant(f"unfold instruction names {f!r}")
        body = info.value
        deps[f] = (consts_of(body) & nameset) if body is not None else frozenset()

    order: list[str] = []
    state = {n: 0 for n in names}  # 0 new, 1 visiting, 2 done
    stack: list[str] = []

    def visit(n):
        if state[n] == 2:
            return
        if state[n] == 1:
            cycle = stack[stack.index(n):] + [n]
            raise errors.CyclicUnfold(cycle)
        state[n] = 1
        stack.append(n)
        for d in sorted(deps[n]):
            visit(d)
        stack.pop()
        state[n] = 2
        order.append(n)

    for n in names:
        visit(n)
    # post-order puts dependencies first; unfolding wants f before what it uses
    order.reverse()
    return order


def apply_unfold_instruction(p: Problem) -> Problem:
    if not p.instructions.unfold:
        return p
    order = _unfold_order(p.env, p.instructions.unfold)
    premises = list(p.premises)
    goal = p.goal
    ctx_entries = list(p.ctx.entries)
    for f in order:
        info = p.env.get(f)
        if info.value is None:
            warnings.warn(f"unfold instruction skips {f!r}: no definition")
            continue
        premises = [(n, subst_const(t, f, info.value)) for n, t in premises]
        goal = subst_const(goal, f, info.value)
        ctx_entries = [(n, subst_const(t, f, info.value)) for n, t in ctx_entries]
    premises = [(n, normalize(p.env, t)) for n, t in premises]
    goal = normalize(p.env, goal)
    ctx = Context(tuple((n, normalize(p.env, t)) for n, t in ctx_entries))
    return replace(p, ctx=ctx, premises=tuple(premises), goal=goal)


def unfolding_equation(env: Environment, name: str):
    """∀ (args). name args = unfolded-body, at one quantifier depth."""
    info = env.get(name)
    if info.value is None:
        return None
    binders = []
    body = info.value
    ctx = Context()
    while isinstance(body, Lam):
        fresh = f"{body.binder_name}#{len(ctx)}"
        dom = normalize(env, body.binder_type)
        binders.append((fresh, body.binder_name, dom))
        ctx = ctx.extend(fresh, dom)
        body = instantiate(body.body, FreeVar(fresh))
    lhs = mk_app(Const(name), [FreeVar(n) for n, _, _ in binders])
    rhs = normalize(env, body)
    ty = normalize(env, infer_type(env, ctx, lhs))
    sort = infer_type(env, ctx, ty)
    if not isinstance(sort, Sort) or sort.level < 1:
        return None
    eq = normalize(env, mk_app(logical_symbol("eq", sort.level), [ty, lhs, rhs]))
    for fresh, disp, dom in reversed(binders):
        eq = Pi(disp, dom, abstract_free(eq, fresh))
    assert infer_type(env, Context(), eq) == PROP
    return eq


def apply_defeq_instruction(p: Problem) -> Problem:
    if not p.instructions.defeq:
        return p
    premises = list(p.premises)
    for g in p.instructions.defeq:
        if g not in p.env:
            raise errors.UnknownConstant(f"defeq instruction names {g!r}")
        eq = unfolding_equation(p.env, g)
        if eq is None:
            warnings.warn(f"defeq instruction skips {g!r}: nothing to equate")
            continue
        premises.append((f"{g}.defeq", eq))
    return replace(p, premises=tuple(premises))


# ---------------------------------------------------------------------------
# maximal logic-free subexpressions and their equational theorems

def _is_logical_const(env: Environment, name: str) -> bool:
    info = env.consts.get(name)
    if info is None or info.value is None:
        return False
    for which in ("bot", "not", "and", "or", "iff"):
        if info.value == logical_symbol(which):
            return True
    for level in range(0, 4):
        if info.value == logical_symbol("eq", level + 1) \
                or info.value == logical_symbol("exists", level + 1):
            return True
    return False


def _contains_logic(env: Environment, ctx: Context, t: Term) -> bool:
    if isinstance(t, Pi):
        return True  # prop structure or a type; either way not a plain term
    if isinstance(t, Const) and _is_logical_const(env, t.name):
        return True
    if isinstance(t, App):
        return _contains_logic(env, ctx, t.fn) or _contains_logic(env, ctx, t.arg)
    if isinstance(t, Lam):
        return _contains_logic(env, ctx, t.binder_type) or _contains_logic(env, ctx, t.body)
    return False


def collect_logic_free_subexprs(env: Environment, ctx: Context, terms) -> list[Term]:
    """Maximal subexpressions containing no logical symbols, collected under
    the formula structure; open subterms contribute their closed lFun heads."""
    from .depanalysis import analyze_args

    out: list[Term] = []
    seen: set[int] = set()

    def add(t: Term):
        fp = fingerprint(t)
        if fp not in seen:
            seen.add(fp)
            out.append(t)

    def collect_heads(ctx: Context, B: frozenset[str], t: Term):
        # largest B-closed pieces of an open term
        head, args = spine(t)
        if isinstance(head, (FreeVar, Const)):
            try:
                analysis = analyze_args(env, ctx, head, args)
            except errors.TypeError:
                return
            l = analysis.l_fun
            if not isinstance(l, FreeVar) and not (free_vars(l) & B):
                add(l)
            for a in analysis.l_args:
                walk_term(ctx, B, a)
        elif isinstance(t, (Lam, Pi)):
            fresh = f"{t.binder_name}%{len(ctx)}"
            ctx2 = ctx.extend(fresh, normalize(env, t.binder_type))
            collect_heads(ctx2, B | {fresh}, instantiate(t.body, FreeVar(fresh)))

    def walk_term(ctx: Context, B: frozenset[str], t: Term):
        # a non-formula position: collect t whole when logic-free and closed
        if not _contains_logic(env, ctx, t):
            if not (free_vars(t) & B) and not isinstance(t, (FreeVar, Sort)):
                add(t)
            collect_heads(ctx, B, t)
            return
        descend(ctx, B, t)

    def descend(ctx: Context, B: frozenset[str], t: Term):
        if isinstance(t, Pi):
            if not has_loose_bvar(t.body, 0):
                walk_term(ctx, B, t.binder_type)
                walk_term(ctx, B, shift(t.body, -1))
                return
            fresh = f"{t.binder_name}%{len(ctx)}"
            ctx2 = ctx.extend(fresh, normalize(env, t.binder_type))
            descend(ctx2, B | {fresh}, instantiate(t.body, FreeVar(fresh)))
            return
        if isinstance(t, Lam):
            fresh = f"{t.binder_name}%{len(ctx)}"
            ctx2 = ctx.extend(fresh, normalize(env, t.binder_type))
            descend(ctx2, B | {fresh}, instantiate(t.body, FreeVar(fresh)))
            return
        head, args = spine(t)
        if isinstance(head, Const) and _is_logical_const(env, head.name):
            skip = 1 if _head_is_typed_symbol(env, head.name) else 0
            for a in args[skip:]:
                walk_term(ctx, B, a)
            return
        if args:
            for a in args:
                walk_term(ctx, B, a)
            return

    def _head_is_typed_symbol(env, name):
        info = env.consts.get(name)
        if info is None or info.value is None:
            return False
        for level in range(0, 4):
            if info.value == logical_symbol("eq", level + 1) \
                    or info.value == logical_symbol("exists", level + 1):
                return True
        return False

    for t in terms:
        if _contains_logic(env, ctx, t):
            descend(ctx, frozenset(), t)
        else:
            walk_term(ctx, frozenset(), t)
    return out


def subexpr_eq_theorems(p: Problem) -> Problem:
    """Equational theorems between the maximal logic-free subexpressions."""
    exprs = collect_logic_free_subexprs(
        p.env, p.ctx, [t for _, t in p.premises] + [p.goal])
    budget = p.options.subexpr_pair_budget
    pairs = 0
    truncated = False
    added = []
    have = {fingerprint(t) for _, t in p.premises}
    for i in range(len(exprs)):
        for j in range(i + 1, len(exprs)):
            if pairs >= budget:
                truncated = True
                break
            pairs += 1
            eq = gen_eq_theorems(p.env, p.ctx, exprs[i], exprs[j])
            if eq is None:
                eq = gen_eq_theorems(p.env, p.ctx, exprs[j], exprs[i])
            if eq is not None and fingerprint(eq) not in have:
                have.add(fingerprint(eq))
                added.append(eq)
        if truncated:
            break
    premises = list(p.premises)
    for k, eq in enumerate(added):
        premises.append((f"subexpr.eq{k}", eq))
    stats = dict(p.stats)
    stats["subexpr_pairs"] = pairs
    stats["subexpr_eqs"] = len(added)
    stats["subexpr_truncated"] = truncated
    q = replace(p, premises=tuple(premises))
    q.stats.update(stats)
    return q


# ---------------------------------------------------------------------------
# inductive instances

def check_inductive_decl(env: Environment, decl) -> None:
    """Reject nested, mutual, and dependently-indexed declarations."""
    for pname, pty in decl.params:
        if not isinstance(pty, Sort):
            raise errors.UnsupportedInductive(
                f"inductive {decl.name!r}: parameter {pname!r} is not a sort "
                "(dependently-indexed families are not supported)")
    other_inductives = set(env.inductives) - {decl.name}
    for cname, cty in decl.ctors:
        arg_types, target = _split_ctor_type(cty)
        head, targs = spine(target)
        if not (isinstance(head, Const) and head.name == decl.name):
            raise errors.UnsupportedInductive(
                f"constructor {cname!r} does not target {decl.name!r}")
        expected = [FreeVar(p) for p, _ in decl.params]
        if list(targs) != expected:
            raise errors.UnsupportedInductive(
                f"constructor {cname!r} instantiates the family's indices "
                "(dependently-indexed families are not supported)")
        for aty in arg_types:
            _check_ctor_arg(env, decl, cname, aty, other_inductives)


def _split_ctor_type(cty: Term):
    """Split an opened constructor type into argument types and target."""
    args = []
    i = 0
    t = cty
    while isinstance(t, Pi):
        if has_loose_bvar(t.body, 0):
            raise errors.UnsupportedInductive(
                "dependent constructor arguments are not supported")
        args.append(t.binder_type)
        t = shift(t.body, -1)
    return args, t


def _check_ctor_arg(env, decl, cname, aty, other_inductives):
    head, args = spine(aty)
    if isinstance(head, Const) and head.name == decl.name:
        # recursive occurrence: must be exactly the declared parameters
        expected = [FreeVar(p) for p, _ in decl.params]
        if list(args) != expected:
            raise errors.UnsupportedInductive(
                f"constructor {cname!r}: nested recursive occurrence")
        return
    refs = consts_of(aty)
    if decl.name in refs:
        raise errors.UnsupportedInductive(
            f"constructor {cname!r}: nested recursive occurrence of {decl.name!r}")
    for other in refs & other_inductives:
        other_decl = env.inductives[other]
        for _, octy in other_decl.ctors:
            if decl.name in consts_of(octy):
                raise errors.UnsupportedInductive(
                    f"inductives {decl.name!r} and {other!r} are mutually recursive")


def collect_inductive_instances(p: Problem) -> list[DatatypeInstance]:
    """Fully applied inductive-type instances with closed arguments, with the
    inductives inside instantiated constructor types collected first."""
    env = p.env
    found: list[tuple[str, tuple[Term, ...]]] = []
    out: list[DatatypeInstance] = []
    emitted: list[tuple[str, tuple[Term, ...]]] = []

    def scan(ctx: Context, B: frozenset[str], t: Term, acc):
        head, args = spine(t)
        if isinstance(head, Const) and head.name in env.inductives:
            decl = env.inductives[head.name]
            if len(args) == len(decl.params) \
                    and all(is_bvar_closed(a) and not (free_vars(a) & B) for a in args):
                acc.append((head.name, tuple(args)))
        for a in args:
            scan(ctx, B, a, acc)
        if isinstance(t, (Lam, Pi)):
            scan(ctx, B, t.binder_type, acc)
            fresh = f"{t.binder_name}&{len(ctx)}"
            ctx2 = ctx.extend(fresh, normalize(env, t.binder_type))
            scan(ctx2, B | {fresh}, instantiate(t.body, FreeVar(fresh)), acc)

    roots: list[tuple[str, tuple[Term, ...]]] = []
    for _, t in p.premises:
        scan(p.ctx, frozenset(), t, roots)
    scan(p.ctx, frozenset(), p.goal, roots)
    for _, ty in p.ctx:
        scan(p.ctx, frozenset(), ty, roots)

    def emit(name: str, targs: tuple[Term, ...], trail):
        for ename, eargs in emitted:
            if ename == name and len(eargs) == len(targs) \
                    and all(is_def_eq(env, p.ctx, a, b) for a, b in zip(eargs, targs)):
                return
        if (name, targs) in trail:
            return
        decl = env.inductives[name]
        check_inductive_decl(env, decl)
        sub = {pname: arg for (pname, _), arg in zip(decl.params, targs)}
        ctors = []
        for cname, cty in decl.ctors:
            from .kernel import subst_extend
            inst_ty = normalize(env, subst_extend(sub, cty))
            arg_types, _ = _split_ctor_type(inst_ty)
            nested: list[tuple[str, tuple[Term, ...]]] = []
            for aty in arg_types:
                scan(p.ctx, frozenset(), aty, nested)
            for nname, nargs in nested:
                if (nname, nargs) != (name, targs):
                    emit(nname, nargs, trail + [(name, targs)])
            ctors.append((cname, tuple(arg_types)))
        emitted.append((name, targs))
        out.append(DatatypeInstance(name, targs, tuple(ctors)))

    for name, targs in roots:
        emit(name, targs, [])
    return out


# ---------------------------------------------------------------------------

def run_preprocess(p: Problem) -> Problem:
    """All passes in order; inductive collection result lands in stats."""
    p = normalize_problem(p)
    p = apply_unfold_instruction(p)
    p = apply_defeq_instruction(p)
    p = intro_foralls(p)
    p = by_contradiction(p)
    p = subexpr_eq_theorems(p)
    datatypes = collect_inductive_instances(p)
    p.stats["datatypes"] = datatypes
    return p
