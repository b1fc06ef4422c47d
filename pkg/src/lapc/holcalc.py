"""HOL and HOL* term calculi plus the inter-system maps ρ*, ρℓ, π*.

HOL terms are simply-typed lambda terms over Bool, ⊥', →' and the ∀'_s
family; HOL* is the same with a ladder of universe levels ℓ ≥ 1. There is no
Pi constructor: function types use the dedicated HArrow form. Only the term
calculus and typing are implemented; provability is the external provers' job.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields
from typing import Optional

from . import errors
from .term import (
    App, BoundVar, FreeVar, Lam, Level, Pi, PROP, Sort, Term,
    abstract_free as lc_abstract_free, mk_app, shift as lc_shift,
)


class HTerm:
    __hash__ = None

    def __repr__(self):
        cls = type(self).__name__
        parts = ", ".join(repr(getattr(self, f.name)) for f in fields(self))
        return f"{cls}({parts})"


def _hnode(cls):
    cls = dataclass(frozen=True, repr=False)(cls)
    cls.__hash__ = _hterm_hash
    return cls


def _hterm_hash(self):
    return hfingerprint(self)


@_hnode
class HBoundVar(HTerm):
    index: int


@_hnode
class HFreeVar(HTerm):
    name: str


@_hnode
class HSortU(HTerm):
    level: Level

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("HOL* universe levels start at 1")


@_hnode
class HSortUPrime(HTerm):
    level: Level

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("HOL* universe levels start at 1")


@_hnode
class HBool(HTerm):
    pass


@_hnode
class HBot(HTerm):
    pass


@_hnode
class HImp(HTerm):
    pass


@_hnode
class HForall(HTerm):
    domain: HTerm


@_hnode
class HApp(HTerm):
    fn: HTerm
    arg: HTerm


@_hnode
class HLam(HTerm):
    binder_name: str = field(compare=False)
    binder_type: HTerm = None
    body: HTerm = None


@_hnode
class HArrow(HTerm):
    domain: HTerm
    codomain: HTerm


BOOL = HBool()
HBOT = HBot()
HIMP = HImp()

HOL = "HOL"
HOLSTAR = "HOL*"


_HFP_PERSON = b"lapc.hterm.v1"


def _hfp(*chunks: bytes) -> int:
    h = hashlib.blake2b(digest_size=8, person=_HFP_PERSON)
    for c in chunks:
        h.update(c)
    return int.from_bytes(h.digest(), "little")


def _i2b(n: int) -> bytes:
    return (n & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")


def hfingerprint(t: HTerm) -> int:
    fp = t.__dict__.get("_fp")
    if fp is not None:
        return fp
    if isinstance(t, HBoundVar):
        fp = _hfp(b"B", _i2b(t.index))
    elif isinstance(t, HFreeVar):
        fp = _hfp(b"F", t.name.encode())
    elif isinstance(t, HSortU):
        fp = _hfp(b"U", _i2b(t.level))
    elif isinstance(t, HSortUPrime):
        fp = _hfp(b"V", _i2b(t.level))
    elif isinstance(t, HBool):
        fp = _hfp(b"o")
    elif isinstance(t, HBot):
        fp = _hfp(b"0")
    elif isinstance(t, HImp):
        fp = _hfp(b"i")
    elif isinstance(t, HForall):
        fp = _hfp(b"!", _i2b(hfingerprint(t.domain)))
    elif isinstance(t, HApp):
        fp = _hfp(b"A", _i2b(hfingerprint(t.fn)), _i2b(hfingerprint(t.arg)))
    elif isinstance(t, HLam):
        fp = _hfp(b"L", _i2b(hfingerprint(t.binder_type)), _i2b(hfingerprint(t.body)))
    elif isinstance(t, HArrow):
        fp = _hfp(b">", _i2b(hfingerprint(t.domain)), _i2b(hfingerprint(t.codomain)))
    else:
        raise AssertionError(f"not an HTerm: {t!r}")
    object.__setattr__(t, "_fp", fp)
    return fp


# ---------------------------------------------------------------------------
# structural helpers

def h_shift(t: HTerm, d: int, cutoff: int = 0) -> HTerm:
    if d == 0:
        return t
    if isinstance(t, HBoundVar):
        return HBoundVar(t.index + d) if t.index >= cutoff else t
    if isinstance(t, HApp):
        return HApp(h_shift(t.fn, d, cutoff), h_shift(t.arg, d, cutoff))
    if isinstance(t, HLam):
        return HLam(t.binder_name, h_shift(t.binder_type, d, cutoff),
                    h_shift(t.body, d, cutoff + 1))
    if isinstance(t, HForall):
        return HForall(h_shift(t.domain, d, cutoff))
    if isinstance(t, HArrow):
        return HArrow(h_shift(t.domain, d, cutoff), h_shift(t.codomain, d, cutoff))
    return t


def h_instantiate(body: HTerm, value: HTerm, j: int = 0) -> HTerm:
    if isinstance(body, HBoundVar):
        if body.index == j:
            return h_shift(value, j)
        if body.index > j:
            return HBoundVar(body.index - 1)
        return body
    if isinstance(body, HApp):
        return HApp(h_instantiate(body.fn, value, j), h_instantiate(body.arg, value, j))
    if isinstance(body, HLam):
        return HLam(body.binder_name, h_instantiate(body.binder_type, value, j),
                    h_instantiate(body.body, value, j + 1))
    if isinstance(body, HForall):
        return HForall(h_instantiate(body.domain, value, j))
    if isinstance(body, HArrow):
        return HArrow(h_instantiate(body.domain, value, j),
                      h_instantiate(body.codomain, value, j))
    return body


def h_abstract_free(t: HTerm, name: str, depth: int = 0) -> HTerm:
    if isinstance(t, HFreeVar):
        return HBoundVar(depth) if t.name == name else t
    if isinstance(t, HBoundVar):
        return HBoundVar(t.index + 1) if t.index >= depth else t
    if isinstance(t, HApp):
        return HApp(h_abstract_free(t.fn, name, depth), h_abstract_free(t.arg, name, depth))
    if isinstance(t, HLam):
        return HLam(t.binder_name, h_abstract_free(t.binder_type, name, depth),
                    h_abstract_free(t.body, name, depth + 1))
    if isinstance(t, HForall):
        return HForall(h_abstract_free(t.domain, name, depth))
    if isinstance(t, HArrow):
        return HArrow(h_abstract_free(t.domain, name, depth),
                      h_abstract_free(t.codomain, name, depth))
    return t


def h_free_vars(t: HTerm) -> frozenset[str]:
    if isinstance(t, HFreeVar):
        return frozenset((t.name,))
    if isinstance(t, HApp):
        return h_free_vars(t.fn) | h_free_vars(t.arg)
    if isinstance(t, HLam):
        return h_free_vars(t.binder_type) | h_free_vars(t.body)
    if isinstance(t, HForall):
        return h_free_vars(t.domain)
    if isinstance(t, HArrow):
        return h_free_vars(t.domain) | h_free_vars(t.codomain)
    return frozenset()


def h_size(t: HTerm) -> int:
    if isinstance(t, HApp):
        return 1 + h_size(t.fn) + h_size(t.arg)
    if isinstance(t, HLam):
        return 1 + h_size(t.binder_type) + h_size(t.body)
    if isinstance(t, HForall):
        return 1 + h_size(t.domain)
    if isinstance(t, HArrow):
        return 1 + h_size(t.domain) + h_size(t.codomain)
    return 1


def h_mk_app(fn: HTerm, args) -> HTerm:
    for a in args:
        fn = HApp(fn, a)
    return fn


def h_spine(t: HTerm) -> tuple[HTerm, list[HTerm]]:
    args = []
    while isinstance(t, HApp):
        args.append(t.arg)
        t = t.fn
    args.reverse()
    return t, args


def himp(a: HTerm, b: HTerm) -> HTerm:
    return HApp(HApp(HIMP, a), b)


def hforall(name: str, domain: HTerm, body: HTerm) -> HTerm:
    """∀'(name : domain). body, with body given de Bruijn-open (BV 0 bound)."""
    return HApp(HForall(domain), HLam(name, domain, body))


# ---------------------------------------------------------------------------
# contexts and typing

@dataclass(frozen=True)
class HContext:
    """HOL/HOL* variable declarations only; premises never live here."""

    entries: tuple[tuple[str, HTerm], ...] = ()

    def extend(self, name: str, ty: HTerm) -> "HContext":
        return HContext(self.entries + ((name, ty),))

    def lookup(self, name: str) -> Optional[HTerm]:
        for n, ty in reversed(self.entries):
            if n == name:
                return ty
        return None

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


EMPTY_HCTX = HContext()


def _require_level_one(mode: str, level: Level, where: HTerm):
    if mode == HOL and level != 1:
        raise errors.TypeError(
            f"universe level {level} is not available in HOL", subterm=where)


def hol_infer_type(mode: str, ctx: HContext, t: HTerm) -> HTerm:
    """PTS typing for λ→ / λ→* plus the four logical-symbol rules."""
    if isinstance(t, HBool):
        return HSortU(1)
    if isinstance(t, HSortU):
        _require_level_one(mode, t.level, t)
        return HSortUPrime(t.level)
    if isinstance(t, HSortUPrime):
        raise errors.TypeError("U' sorts have no type", subterm=t)
    if isinstance(t, HBot):
        return BOOL
    if isinstance(t, HImp):
        return HArrow(BOOL, HArrow(BOOL, BOOL))
    if isinstance(t, HForall):
        ds = hol_infer_type(mode, ctx, t.domain)
        if not isinstance(ds, HSortU):
            raise errors.TypeError("∀' parameter is not a type", subterm=t,
                                   rule="forall")
        return HArrow(HArrow(t.domain, BOOL), BOOL)
    if isinstance(t, HFreeVar):
        ty = ctx.lookup(t.name)
        if ty is None:
            raise errors.TypeError(f"variable {t.name!r} not in context",
                                   subterm=t, rule="start")
        return ty
    if isinstance(t, HBoundVar):
        raise errors.TypeError("unbound de Bruijn variable", subterm=t)
    if isinstance(t, HArrow):
        ds = hol_infer_type(mode, ctx, t.domain)
        cs = hol_infer_type(mode, ctx, t.codomain)
        if not isinstance(ds, HSortU) or not isinstance(cs, HSortU):
            raise errors.TypeError("arrow between non-types", subterm=t,
                                   rule="product")
        return HSortU(max(ds.level, cs.level))
    if isinstance(t, HLam):
        ds = hol_infer_type(mode, ctx, t.binder_type)
        if not isinstance(ds, HSortU):
            raise errors.TypeError("binder type is not a type",
                                   subterm=t.binder_type, rule="abstraction")
        fresh = f"#{len(ctx)}"
        body_ty = hol_infer_type(mode, ctx.extend(fresh, t.binder_type),
                                 h_instantiate(t.body, HFreeVar(fresh)))
        return HArrow(t.binder_type, body_ty)
    if isinstance(t, HApp):
        fty = hol_infer_type(mode, ctx, t.fn)
        if not isinstance(fty, HArrow):
            raise errors.TypeError("application head is not a function",
                                   subterm=t, rule="application")
        aty = hol_infer_type(mode, ctx, t.arg)
        if aty != fty.domain:
            raise errors.TypeError(
                f"argument type mismatch: got {aty!r}, expected {fty.domain!r}",
                subterm=t, rule="application")
        return fty.codomain
    raise AssertionError(f"not an HTerm: {t!r}")


# ---------------------------------------------------------------------------
# derived logical symbols (Appendix D shapes, closed terms)

def _hbind(name: str, ty: HTerm, fn) -> HTerm:
    fresh = f"#d{name}"
    body = fn(HFreeVar(fresh))
    return HLam(name, ty, h_abstract_free(body, fresh))


def _hall(name: str, ty: HTerm, fn) -> HTerm:
    fresh = f"#d{name}"
    body = fn(HFreeVar(fresh))
    return HApp(HForall(ty), HLam(name, ty, h_abstract_free(body, fresh)))


def _mk_hnot() -> HTerm:
    return _hbind("p", BOOL, lambda p: himp(p, HBOT))


def _mk_hand() -> HTerm:
    return _hbind("p", BOOL, lambda p:
                  _hbind("q", BOOL, lambda q:
                         _hall("r", BOOL, lambda r:
                               himp(himp(p, himp(q, r)), r))))


def _mk_hor() -> HTerm:
    return _hbind("p", BOOL, lambda p:
                  _hbind("q", BOOL, lambda q:
                         _hall("r", BOOL, lambda r:
                               himp(himp(p, r), himp(himp(q, r), r)))))


def _mk_hiff() -> HTerm:
    hand = _mk_hand()
    return _hbind("p", BOOL, lambda p:
                  _hbind("q", BOOL, lambda q:
                         h_mk_app(hand, [himp(p, q), himp(q, p)])))


def _mk_heq(s: HTerm) -> HTerm:
    hiff = _mk_hiff()
    return _hbind("x", s, lambda x:
                  _hbind("y", s, lambda y:
                         _hall("p", HArrow(s, BOOL), lambda p:
                               h_mk_app(hiff, [HApp(p, x), HApp(p, y)]))))


def _mk_hexists(s: HTerm) -> HTerm:
    return _hbind("p", HArrow(s, BOOL), lambda p:
                  _hall("q", BOOL, lambda q:
                        himp(_hall("x", s, lambda x: himp(HApp(p, x), q)), q)))


def hol_derived_symbol(which: str, s: Optional[HTerm] = None) -> HTerm:
    """The closed HOL* definition of ¬', ∧', ∨', ↔', ='_s, or ∃'_s."""
    leveled = which in ("eq", "exists")
    if leveled and s is None:
        raise ValueError(f"{which} needs a type parameter")
    if not leveled and s is not None:
        raise ValueError(f"{which} takes no type parameter")
    if which == "not":
        return _mk_hnot()
    if which == "and":
        return _mk_hand()
    if which == "or":
        return _mk_hor()
    if which == "iff":
        return _mk_hiff()
    if which == "eq":
        return _mk_heq(s)
    if which == "exists":
        return _mk_hexists(s)
    raise ValueError(f"unknown derived symbol {which!r}")


# ---------------------------------------------------------------------------
# ρ*: forget universe levels (HOL* -> HOL)

def rho_star(t: HTerm) -> HTerm:
    if isinstance(t, HSortU):
        return HSortU(1)
    if isinstance(t, HSortUPrime):
        return HSortUPrime(1)
    if isinstance(t, HApp):
        return HApp(rho_star(t.fn), rho_star(t.arg))
    if isinstance(t, HLam):
        return HLam(t.binder_name, rho_star(t.binder_type), rho_star(t.body))
    if isinstance(t, HForall):
        return HForall(rho_star(t.domain))
    if isinstance(t, HArrow):
        return HArrow(rho_star(t.domain), rho_star(t.codomain))
    return t


def rho_star_ctx(ctx: HContext) -> HContext:
    return HContext(tuple((n, rho_star(ty)) for n, ty in ctx.entries))


# ---------------------------------------------------------------------------
# ρℓ: raise U1 to Uℓ (HOL -> HOL*)

def rho_l(level: Level, t: HTerm) -> HTerm:
    if level < 1:
        raise ValueError("ρℓ needs ℓ ≥ 1")
    if isinstance(t, HSortU):
        return HSortU(level)
    if isinstance(t, HSortUPrime):
        return HSortUPrime(level)
    if isinstance(t, HApp):
        return HApp(rho_l(level, t.fn), rho_l(level, t.arg))
    if isinstance(t, HLam):
        return HLam(t.binder_name, rho_l(level, t.binder_type), rho_l(level, t.body))
    if isinstance(t, HForall):
        return HForall(rho_l(level, t.domain))
    if isinstance(t, HArrow):
        return HArrow(rho_l(level, t.domain), rho_l(level, t.codomain))
    return t


def rho_l_ctx(level: Level, ctx: HContext) -> HContext:
    return HContext(tuple((n, rho_l(level, ty)) for n, ty in ctx.entries))


# ---------------------------------------------------------------------------
# π*: canonical embedding of HOL* into λC

def _pi_star_forall_image(s_img: Term) -> Term:
    # λ (p : π*(s) -> U0). ∀ (x : π*(s)). p x
    return Lam("p", Pi("_", s_img, PROP),
               Pi("x", lc_shift(s_img, 1), App(BoundVar(1), BoundVar(0))))


def _pi_star_imp_image() -> Term:
    return Lam("p", PROP, Lam("q", PROP, Pi("_", BoundVar(1), BoundVar(1))))


def pi_star(t: HTerm, reduce_symbols: bool = True) -> Term:
    """Bool ↦ U0, Uℓ ↦ Uℓ, Uℓ' ↦ U_{ℓ+1}, logical symbols to their λC
    definitions; homomorphic elsewhere.

    With reduce_symbols (the default), images of applied logical symbols are
    β-reduced on the fly so that π*(p →' q) is literally p → q and
    π*(∀'_s (λx. b)) is ∀(x : π*(s)). π*(b).
    """
    if reduce_symbols:
        if isinstance(t, HApp) and isinstance(t.fn, HApp) and isinstance(t.fn.fn, HImp):
            lhs = pi_star(t.fn.arg, True)
            rhs = pi_star(t.arg, True)
            return Pi("_", lhs, lc_shift(rhs, 1))
        if isinstance(t, HApp) and isinstance(t.fn, HForall):
            dom = pi_star(t.fn.domain, True)
            if isinstance(t.arg, HLam):
                return Pi(t.arg.binder_name, dom, pi_star(t.arg.body, True))
            pred = pi_star(t.arg, True)
            return Pi("x", dom, App(lc_shift(pred, 1), BoundVar(0)))
        if isinstance(t, HApp) and isinstance(t.fn, HImp):
            rhs_img = pi_star(t.arg, True)
            return Lam("q", PROP, Pi("_", lc_shift(rhs_img, 1), BoundVar(1)))
    if isinstance(t, HBool):
        return PROP
    if isinstance(t, HSortU):
        return Sort(t.level)
    if isinstance(t, HSortUPrime):
        return Sort(t.level + 1)
    if isinstance(t, HBoundVar):
        return BoundVar(t.index)
    if isinstance(t, HFreeVar):
        return FreeVar(t.name)
    if isinstance(t, HBot):
        return Pi("a", PROP, BoundVar(0))
    if isinstance(t, HImp):
        return _pi_star_imp_image()
    if isinstance(t, HForall):
        return _pi_star_forall_image(pi_star(t.domain, reduce_symbols))
    if isinstance(t, HApp):
        return App(pi_star(t.fn, reduce_symbols), pi_star(t.arg, reduce_symbols))
    if isinstance(t, HLam):
        return Lam(t.binder_name, pi_star(t.binder_type, reduce_symbols),
                   pi_star(t.body, reduce_symbols))
    if isinstance(t, HArrow):
        return Pi("_", pi_star(t.domain, reduce_symbols),
                  lc_shift(pi_star(t.codomain, reduce_symbols), 1))
    raise AssertionError(f"not an HTerm: {t!r}")


def pi_star_ctx(ctx: HContext, reduce_symbols: bool = True):
    from .kernel import Context
    return Context(tuple((n, pi_star(ty, reduce_symbols)) for n, ty in ctx.entries))
