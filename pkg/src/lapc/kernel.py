"""λC kernel: PTS typechecking, reduction, definitional equality.

Every operation here is a pure function over immutable values. Reduction is
budgeted (default 10^6 steps); whnf/normalize raise ReductionBudgetError on
exhaustion while isDefEq degrades to False plus a BudgetWarning.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import IntEnum
from typing import Mapping, Optional

from . import errors
from .term import (
    App, BoundVar, Const, FreeVar, Lam, Level, Pi, PROP, Sort, Term,
    abstract_free, arrow, bind_lam, bind_pi, has_loose_bvar, imax,
    instantiate, mk_app, shift, spine,
)

DEFAULT_BUDGET = 1_000_000


class Reducibility(IntEnum):
    REDUCIBLE = 0
    DEFAULT = 1
    OPAQUE = 2


class _Fuel:
    __slots__ = ("left",)

    def __init__(self, budget: int):
        self.left = budget

    def tick(self):
        self.left -= 1
        if self.left < 0:
            raise errors.ReductionBudgetError("reduction step budget exhausted")


@dataclass(frozen=True)
class Context:
    """Ordered variable declarations; extension returns a new context."""

    entries: tuple[tuple[str, Term], ...] = ()

    def extend(self, name: str, ty: Term) -> "Context":
        return Context(self.entries + ((name, ty),))

    def lookup(self, name: str) -> Optional[Term]:
        for n, ty in reversed(self.entries):
            if n == name:
                return ty
        return None

    def names(self) -> frozenset[str]:
        return frozenset(n for n, _ in self.entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


EMPTY_CTX = Context()


@dataclass(frozen=True)
class ConstInfo:
    type: Term
    value: Optional[Term] = None
    reducibility: Reducibility = Reducibility.DEFAULT
    is_theorem: bool = False


@dataclass(frozen=True)
class IotaRule:
    """outer a (inner a' x) args...  =>  x args...   (the GLift up/down laws)."""

    outer: str
    inner: str


@dataclass(frozen=True)
class InductiveDecl:
    name: str
    params: tuple[tuple[str, Term], ...]
    ctors: tuple[tuple[str, Term], ...]  # constructor name, full Pi type


class Environment:
    """Constant declarations plus inductive records and registered ι-rules.

    Treated as immutable: declare/with_* return new environments. Every
    declaration is typechecked eagerly against the previously declared ones.
    """

    def __init__(self, consts=None, inductives=None, iota_rules=()):
        self.consts: dict[str, ConstInfo] = dict(consts or {})
        self.inductives: dict[str, InductiveDecl] = dict(inductives or {})
        self.iota_rules: tuple[IotaRule, ...] = tuple(iota_rules)
        self._infer_cache: dict = {}
        self._norm_cache: dict = {}
        self._defeq_cache: dict = {}

    def declare(self, name: str, ty: Term, value: Optional[Term] = None,
                reducibility: Reducibility = Reducibility.DEFAULT,
                is_theorem: bool = False, check: bool = True) -> "Environment":
        if name in self.consts:
            raise errors.DuplicateName(f"constant {name!r} already declared")
        if check:
            sort = infer_type(self, EMPTY_CTX, ty)
            if not isinstance(sort, Sort):
                raise errors.TypeError(f"type of {name!r} is not a sort", subterm=ty)
            ty = normalize(self, ty)
            if value is not None:
                vty = infer_type(self, EMPTY_CTX, value)
                if not is_def_eq(self, EMPTY_CTX, vty, ty):
                    raise errors.TypeError(
                        f"value of {name!r} has type {vty!r}, expected {ty!r}",
                        subterm=value, rule="def")
        env = Environment(self.consts, self.inductives, self.iota_rules)
        env.consts[name] = ConstInfo(ty, value, reducibility, is_theorem)
        return env

    def with_inductive(self, decl: InductiveDecl) -> "Environment":
        env = Environment(self.consts, self.inductives, self.iota_rules)
        env.inductives[decl.name] = decl
        return env

    def with_iota_rule(self, rule: IotaRule) -> "Environment":
        return Environment(self.consts, self.inductives, self.iota_rules + (rule,))

    def get(self, name: str) -> ConstInfo:
        try:
            return self.consts[name]
        except KeyError:
            raise errors.UnknownConstant(f"unknown constant {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.consts


EMPTY_ENV = Environment()


# ---------------------------------------------------------------------------
# reduction

def _unfoldable(env: Environment, name: str, level: Optional[Reducibility]) -> Optional[Term]:
    if level is None:
        return None
    info = env.consts.get(name)
    if info is None or info.value is None:
        return None
    if info.reducibility <= level:
        return info.value
    return None


def _iota_step(env: Environment, head: Term, args: list[Term]) -> Optional[Term]:
    if not isinstance(head, Const) or len(args) < 2:
        return None
    for rule in env.iota_rules:
        if head.name != rule.outer:
            continue
        inner_head, inner_args = spine(args[1])
        if isinstance(inner_head, Const) and inner_head.name == rule.inner and len(inner_args) == 2:
            return mk_app(inner_args[1], args[2:])
    return None


def _whnf_core(env: Environment, t: Term, fuel: _Fuel,
               delta: Optional[Reducibility]) -> Term:
    while True:
        head, args = spine(t)
        if isinstance(head, Lam) and args:
            fuel.tick()
            t = mk_app(instantiate(head.body, args[0]), args[1:])
            continue
        red = _iota_step(env, head, args)
        if red is not None:
            fuel.tick()
            t = red
            continue
        if isinstance(head, Const):
            value = _unfoldable(env, head.name, delta)
            if value is not None:
                fuel.tick()
                t = mk_app(value, args)
                continue
        return t


def whnf(env: Environment, t: Term,
         unfold: Optional[Reducibility] = Reducibility.DEFAULT,
         budget: int = DEFAULT_BUDGET) -> Term:
    """Weak-head normal form under β, the registered ι-rules, and δ up to
    the given reducibility (pass None for no δ)."""
    return _whnf_core(env, t, _Fuel(budget), unfold)


def _normalize(env: Environment, t: Term, fuel: _Fuel,
               delta: Optional[Reducibility]) -> Term:
    t = _whnf_core(env, t, fuel, delta)
    if isinstance(t, App):
        head, args = spine(t)
        return mk_app(head, [_normalize(env, a, fuel, delta) for a in args])
    if isinstance(t, Lam):
        ty = _normalize(env, t.binder_type, fuel, delta)
        body = _normalize(env, t.body, fuel, delta)
        # η-contraction: λ x. f x  ->  f  when x not free in f; the body is
        # already normal, so the contracted term is normal too.
        if isinstance(body, App) and isinstance(body.arg, BoundVar) \
                and body.arg.index == 0 and not has_loose_bvar(body.fn, 0):
            fuel.tick()
            return shift(body.fn, -1)
        return Lam(t.binder_name, ty, body)
    if isinstance(t, Pi):
        return Pi(t.binder_name, _normalize(env, t.binder_type, fuel, delta),
                  _normalize(env, t.body, fuel, delta), t.inst)
    return t


def normalize(env: Environment, t: Term, delta: Optional[Reducibility] = None,
              budget: int = DEFAULT_BUDGET) -> Term:
    """Full βη-normal form (plus ι); δ only when a reducibility is passed."""
    if budget == DEFAULT_BUDGET:
        key = (t, delta)
        cached = env._norm_cache.get(key)
        if cached is None:
            cached = _normalize(env, t, _Fuel(budget), delta)
            env._norm_cache[key] = cached
            env._norm_cache[(cached, delta)] = cached
        return cached
    return _normalize(env, t, _Fuel(budget), delta)


# ---------------------------------------------------------------------------
# definitional equality (lazy: head-compare, unfold on demand)

def _def_eq(env: Environment, a: Term, b: Term, fuel: _Fuel) -> bool:
    if a == b:
        return True
    fuel.tick()
    a = _whnf_core(env, a, fuel, None)
    b = _whnf_core(env, b, fuel, None)
    if a == b:
        return True
    if isinstance(a, Pi) and isinstance(b, Pi):
        return (_def_eq(env, a.binder_type, b.binder_type, fuel)
                and _def_eq(env, a.body, b.body, fuel))
    if isinstance(a, Lam) and isinstance(b, Lam):
        return (_def_eq(env, a.binder_type, b.binder_type, fuel)
                and _def_eq(env, a.body, b.body, fuel))
    if isinstance(a, Lam) != isinstance(b, Lam):
        # η: compare the lambda's body against (other x) under the binder;
        # δ inside the recursion exposes a lambda hidden behind a constant.
        if isinstance(b, Lam):
            a, b = b, a
        return _def_eq(env, a.body, App(shift(b, 1), BoundVar(0)), fuel)

    ha, aargs = spine(a)
    hb, bargs = spine(b)
    rigid_equal = (
        (isinstance(ha, FreeVar) and isinstance(hb, FreeVar) and ha.name == hb.name)
        or (isinstance(ha, BoundVar) and isinstance(hb, BoundVar) and ha.index == hb.index)
        or (isinstance(ha, Const) and isinstance(hb, Const) and ha.name == hb.name)
        or (isinstance(ha, Sort) and isinstance(hb, Sort) and ha.level == hb.level)
    )
    if rigid_equal and len(aargs) == len(bargs):
        if all(_def_eq(env, x, y, fuel) for x, y in zip(aargs, bargs)):
            return True
    # lazy δ: unfold one side and retry (Sort/Pi mismatches also land here
    # so that constants hiding a sort or a product still compare correctly)
    if isinstance(ha, Const):
        value = _unfoldable(env, ha.name, Reducibility.DEFAULT)
        if value is not None:
            return _def_eq(env, mk_app(value, aargs), b, fuel)
    if isinstance(hb, Const):
        value = _unfoldable(env, hb.name, Reducibility.DEFAULT)
        if value is not None:
            return _def_eq(env, a, mk_app(value, bargs), fuel)
    return False


def is_def_eq(env: Environment, ctx: Context, t1: Term, t2: Term,
              budget: int = DEFAULT_BUDGET) -> bool:
    """Sound test for t1 ≅ t2 (βηδι); may answer False on budget exhaustion,
    in which case a BudgetWarning is emitted."""
    if budget == DEFAULT_BUDGET:
        key = (t1, t2)
        cached = env._defeq_cache.get(key)
        if cached is not None:
            return cached
    try:
        result = _def_eq(env, t1, t2, _Fuel(budget))
    except errors.ReductionBudgetError:
        warnings.warn("isDefEq budget exhausted; answering False",
                      errors.BudgetWarning, stacklevel=2)
        return False
    if budget == DEFAULT_BUDGET:
        env._defeq_cache[(t1, t2)] = result
        env._defeq_cache[(t2, t1)] = result
    return result


# ---------------------------------------------------------------------------
# type inference (PTS rules for λC, β-normal results)

def infer_type(env: Environment, ctx: Context, t: Term,
               budget: int = DEFAULT_BUDGET) -> Term:
    """The βη-normal type of t per the λC PTS rules.

    Raises errors.TypeError for ill-typed input, naming the failing subterm
    and rule.
    """
    key = (ctx, t)
    cached = env._infer_cache.get(key)
    if cached is not None:
        return cached
    result = _infer(env, ctx, t, _Fuel(budget))
    env._infer_cache[key] = result
    return result


def _infer(env: Environment, ctx: Context, t: Term, fuel: _Fuel) -> Term:
    if isinstance(t, Sort):
        return Sort(t.level + 1)
    if isinstance(t, FreeVar):
        ty = ctx.lookup(t.name)
        if ty is None:
            raise errors.TypeError(f"variable {t.name!r} not in context",
                                   subterm=t, rule="start")
        return ty
    if isinstance(t, Const):
        return env.get(t.name).type
    if isinstance(t, BoundVar):
        raise errors.TypeError("unbound de Bruijn variable", subterm=t)
    if isinstance(t, App):
        fty = _infer(env, ctx, t.fn, fuel)
        if not isinstance(fty, Pi):
            fty = _whnf_core(env, fty, fuel, Reducibility.DEFAULT)
        if not isinstance(fty, Pi):
            raise errors.TypeError("application head is not a function",
                                   subterm=t, rule="application")
        aty = _infer(env, ctx, t.arg, fuel)
        if not _def_eq(env, aty, fty.binder_type, fuel):
            raise errors.TypeError(
                f"argument type mismatch: got {aty!r}, expected {fty.binder_type!r}",
                subterm=t, rule="application")
        return _normalize(env, instantiate(fty.body, t.arg), fuel, None)
    if isinstance(t, Lam):
        dom_sort = _infer(env, ctx, t.binder_type, fuel)
        if not isinstance(dom_sort, Sort):
            raise errors.TypeError("binder type is not a type",
                                   subterm=t.binder_type, rule="abstraction")
        dom = _normalize(env, t.binder_type, fuel, None)
        fresh = f"#{len(ctx)}"
        body_ty = _infer(env, ctx.extend(fresh, dom),
                         instantiate(t.body, FreeVar(fresh)), fuel)
        return Pi(t.binder_name, dom, abstract_free(body_ty, fresh))
    if isinstance(t, Pi):
        dom_sort = _infer(env, ctx, t.binder_type, fuel)
        if not isinstance(dom_sort, Sort):
            raise errors.TypeError("binder type is not a type",
                                   subterm=t.binder_type, rule="product")
        dom = _normalize(env, t.binder_type, fuel, None)
        fresh = f"#{len(ctx)}"
        body_sort = _infer(env, ctx.extend(fresh, dom),
                           instantiate(t.body, FreeVar(fresh)), fuel)
        if not isinstance(body_sort, Sort):
            body_sort = _whnf_core(env, body_sort, fuel, Reducibility.DEFAULT)
        if not isinstance(body_sort, Sort):
            raise errors.TypeError("Pi body is not a type", subterm=t.body,
                                   rule="product")
        return Sort(imax(dom_sort.level, body_sort.level))
    raise AssertionError(f"not a Term: {t!r}")


def is_prop(env: Environment, ctx: Context, ty: Term) -> bool:
    """True when ty itself is a proposition (a type of type U0)."""
    return infer_type(env, ctx, ty) == PROP


def check_is_type(env: Environment, ctx: Context, ty: Term) -> Level:
    s = infer_type(env, ctx, ty)
    if not isinstance(s, Sort):
        raise errors.TypeError(f"{ty!r} is not a type", subterm=ty)
    return s.level


# ---------------------------------------------------------------------------
# substitution extension (σ̄ of Appendix F, on the λC side)

def subst_extend(sigma: Mapping[str, Term], t: Term) -> Term:
    """Capture-avoiding replacement of free variables; identity on sorts.

    Values must be BV-closed (context-level terms); bound variables are
    indices so binders shadow mechanically.
    """
    if isinstance(t, FreeVar):
        return sigma.get(t.name, t)
    if isinstance(t, App):
        return App(subst_extend(sigma, t.fn), subst_extend(sigma, t.arg))
    if isinstance(t, Lam):
        return Lam(t.binder_name, subst_extend(sigma, t.binder_type),
                   subst_extend(sigma, t.body))
    if isinstance(t, Pi):
        return Pi(t.binder_name, subst_extend(sigma, t.binder_type),
                  subst_extend(sigma, t.body), t.inst)
    return t


# ---------------------------------------------------------------------------
# the logical symbols of λC (closed definitions)

def _mk_bot() -> Term:
    return bind_pi("p", PROP, lambda p: p)


def _mk_not() -> Term:
    bot = _mk_bot()
    return bind_lam("p", PROP, lambda p: arrow(p, bot))


def _mk_and() -> Term:
    return bind_lam("p", PROP, lambda p:
                    bind_lam("q", PROP, lambda q:
                             bind_pi("r", PROP, lambda r:
                                     arrow(arrow(p, arrow(q, r)), r))))


def _mk_or() -> Term:
    return bind_lam("p", PROP, lambda p:
                    bind_lam("q", PROP, lambda q:
                             bind_pi("r", PROP, lambda r:
                                     arrow(arrow(p, r), arrow(arrow(q, r), r)))))


def _mk_iff() -> Term:
    land = _mk_and()
    return bind_lam("p", PROP, lambda p:
                    bind_lam("q", PROP, lambda q:
                             mk_app(land, [arrow(p, q), arrow(q, p)])))


def _mk_eq(level: Level) -> Term:
    liff = _mk_iff()
    return bind_lam("a", Sort(level), lambda a:
                    bind_lam("x", a, lambda x:
                             bind_lam("y", a, lambda y:
                                      bind_pi("p", arrow(a, PROP), lambda p:
                                              mk_app(liff, [App(p, x), App(p, y)])))))


def _mk_exists(level: Level) -> Term:
    return bind_lam("a", Sort(level), lambda a:
                    bind_lam("p", arrow(a, PROP), lambda p:
                             bind_pi("q", PROP, lambda q:
                                     arrow(bind_pi("x", a, lambda x:
                                                   arrow(App(p, x), q)), q))))


_SYMBOL_BUILDERS = {
    "bot": lambda lvl: _mk_bot(),
    "not": lambda lvl: _mk_not(),
    "and": lambda lvl: _mk_and(),
    "or": lambda lvl: _mk_or(),
    "iff": lambda lvl: _mk_iff(),
    "eq": _mk_eq,
    "exists": _mk_exists,
}

_LEVELED = ("eq", "exists")
_symbol_cache: dict[tuple[str, Optional[Level]], Term] = {}


def logical_symbol(which: str, level: Optional[Level] = None) -> Term:
    """The closed λC definition of ⊥, ¬, ∧, ∨, ↔, =ℓ, or ∃ℓ."""
    if which in _LEVELED:
        if level is None:
            raise ValueError(f"{which} needs a universe level")
    elif level is not None:
        raise ValueError(f"{which} takes no universe level")
    key = (which, level)
    if key not in _symbol_cache:
        builder = _SYMBOL_BUILDERS.get(which)
        if builder is None:
            raise ValueError(f"unknown logical symbol {which!r}")
        _symbol_cache[key] = builder(level)
    return _symbol_cache[key]


BOT = logical_symbol("bot")


def mk_not(p: Term) -> Term:
    """¬p in β-normal form: p -> ⊥."""
    return arrow(p, BOT)


def mk_eq(level: Level, ty: Term, lhs: Term, rhs: Term) -> Term:
    """The applied (unreduced) equality =ℓ ty lhs rhs."""
    return mk_app(logical_symbol("eq", level), [ty, lhs, rhs])
