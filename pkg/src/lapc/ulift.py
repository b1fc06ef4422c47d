"""Universe lifting: a GLift up/down facility plus the level-ℓ translations.

The facility is axiomatized as opaque constants with the two bijectivity
equations registered as kernel ι-rules. uliftTrans is implemented and tested
as the λC-side soundness witness; emission itself erases levels with ρ*.
"""
from __future__ import annotations

from . import errors
from .holcalc import HTerm, pi_star, rho_l
from .kernel import (
    Context, Environment, IotaRule, Reducibility, infer_type, normalize,
)
from .term import (
    App, BoundVar, Const, FreeVar, Lam, Level, Pi, Sort, Term, bind_pi,
    has_loose_bvar, instantiate, mk_app, shift,
)


def glift_name(u: Level, v: Level) -> str:
    return f"GLift.{u}.{v}"


def up_name(u: Level, v: Level) -> str:
    return f"GLift.up.{u}.{v}"


def down_name(u: Level, v: Level) -> str:
    return f"GLift.down.{u}.{v}"


def register_glift(env: Environment, u: Level, v: Level) -> Environment:
    """Declare GLift_{u,v}, up, down and the two ι-rules (idempotent)."""
    g = glift_name(u, v)
    if g in env:
        return env
    lift_sort = max(u, v + 1)
    glift_ty = Pi("a", Sort(u), Sort(lift_sort))
    env = env.declare(g, glift_ty, reducibility=Reducibility.OPAQUE)
    up_ty = bind_pi("a", Sort(u), lambda a: Pi("_", a, App(Const(g), shift(a, 1))))
    env = env.declare(up_name(u, v), up_ty, reducibility=Reducibility.OPAQUE)
    down_ty = bind_pi("a", Sort(u),
                      lambda a: Pi("_", App(Const(g), a), shift(a, 1)))
    env = env.declare(down_name(u, v), down_ty, reducibility=Reducibility.OPAQUE)
    env = env.with_iota_rule(IotaRule(down_name(u, v), up_name(u, v)))
    env = env.with_iota_rule(IotaRule(up_name(u, v), down_name(u, v)))
    return env


def _atom_level(env: Environment, ctx: Context, s: Term) -> Level:
    sort = infer_type(env, ctx, s)
    if not isinstance(sort, Sort):
        raise errors.UnsupportedType(f"{s!r} is not a type")
    return sort.level


def _split_arrow(s: Term):
    if isinstance(s, Pi):
        if has_loose_bvar(s.body, 0):
            raise errors.UnsupportedType(
                "dependent products are outside the lifting fragment")
        return s.binder_type, shift(s.body, -1)
    return None


def up_type(env: Environment, ctx: Context, s: Term, level: Level) -> Term:
    """UpType: atoms x become GLift_{ℓ',ℓ} x, arrows map structurally."""
    split = _split_arrow(s)
    if split is not None:
        a, b = split
        return Pi("_", up_type(env, ctx, a, level),
                  shift(up_type(env, ctx, b, level), 1))
    u = _atom_level(env, ctx, s)
    return App(Const(glift_name(u, level)), s)


def ensure_glift(env: Environment, ctx: Context, s: Term, level: Level) -> Environment:
    """Register every GLift family that up_type/mk_up of s will mention."""
    split = _split_arrow(s)
    if split is not None:
        a, b = split
        env = ensure_glift(env, ctx, a, level)
        return ensure_glift(env, ctx, b, level)
    return register_glift(env, _atom_level(env, ctx, s), level)


def mk_up(env: Environment, ctx: Context, s: Term, level: Level) -> Term:
    """A function of type s -> UpType s, built by the structural recursion."""
    split = _split_arrow(s)
    if split is None:
        u = _atom_level(env, ctx, s)
        return App(Const(up_name(u, level)), s)
    a, b = split
    up_b = mk_up(env, ctx, b, level)
    down_a = mk_down(env, ctx, a, level)
    # λ (f : a -> b) (x : UpType a). Up_b (f (Down_a x))
    return Lam("f", s,
               Lam("x", shift(up_type(env, ctx, a, level), 1),
                   App(shift(up_b, 2),
                       App(BoundVar(1), App(shift(down_a, 2), BoundVar(0))))))


def mk_down(env: Environment, ctx: Context, s: Term, level: Level) -> Term:
    split = _split_arrow(s)
    if split is None:
        u = _atom_level(env, ctx, s)
        return App(Const(down_name(u, level)), s)
    a, b = split
    down_b = mk_down(env, ctx, b, level)
    up_a = mk_up(env, ctx, a, level)
    # λ (f : UpType a -> UpType b) (x : a). Down_b (f (Up_a x))
    return Lam("f", up_type(env, ctx, s, level),
               Lam("x", shift(a, 1),
                   App(shift(down_b, 2),
                       App(BoundVar(1), App(shift(up_a, 2), BoundVar(0))))))


def max_level_in(t: Term) -> Level:
    if isinstance(t, Sort):
        return t.level
    if isinstance(t, App):
        return max(max_level_in(t.fn), max_level_in(t.arg))
    if isinstance(t, (Lam, Pi)):
        return max(max_level_in(t.binder_type), max_level_in(t.body))
    return 0


def choose_level(env: Environment, ctx: Context, terms) -> Level:
    """1 + the largest universe level occurring in the terms and their types."""
    top = 0
    for t in terms:
        top = max(top, max_level_in(t))
        try:
            top = max(top, max_level_in(infer_type(env, ctx, t)))
        except errors.TypeError:
            pass
    for _, ty in ctx:
        top = max(top, max_level_in(ty))
    return top + 1


def ulift_trans(env: Environment, ctx: Context, t: Term, level: Level) -> Term:
    """Translate a canonical-embedding term into its level-ℓ lifted companion.

    Free variables x : s become Up_s x, bound variables are renamed only
    (their binder is retyped to UpType s), and applications map structurally.
    The input must stay inside the variable/application/λ fragment over
    arrow-and-atom types.
    """
    if level <= max_level_in(t):
        raise errors.LevelTooLow(
            f"lift level {level} does not dominate the term's universe levels")
    from .term import abstract_free

    def go(ctx: Context, bound: frozenset[str], t: Term) -> Term:
        if isinstance(t, FreeVar):
            if t.name in bound:
                return t
            s = normalize(env, infer_type(env, ctx, t))
            return App(mk_up(env, ctx, s, level), t)
        if isinstance(t, App):
            return App(go(ctx, bound, t.fn), go(ctx, bound, t.arg))
        if isinstance(t, Lam):
            s = normalize(env, t.binder_type)
            fresh = f"@u{len(ctx)}"
            ctx2 = ctx.extend(fresh, s)
            body = go(ctx2, bound | {fresh}, instantiate(t.body, FreeVar(fresh)))
            return Lam(t.binder_name + "'", up_type(env, ctx, s, level),
                       abstract_free(body, fresh))
        raise errors.UnsupportedType(
            f"uliftTrans does not handle {type(t).__name__}")

    return go(ctx, frozenset(), t)


def pi_l(level: Level, t: HTerm) -> Term:
    """The ℓ-embedding of HOL into λC: π* after ρℓ."""
    return pi_star(rho_l(level, t))
