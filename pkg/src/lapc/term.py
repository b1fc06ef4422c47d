"""λC terms with de Bruijn indices.

Binder names are carried for display only: they never take part in equality,
hashing, or fingerprints, so ``==`` is α-equality by construction.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields

Level = int


def imax(m: Level, n: Level) -> Level:
    """Impredicative max: 0 when n = 0, else max(m, n)."""
    return 0 if n == 0 else max(m, n)


class Term:
    __hash__ = None  # replaced below once fingerprint exists

    def __repr__(self):  # compact structural repr, helpful in test failures
        cls = type(self).__name__
        parts = ", ".join(repr(getattr(self, f.name)) for f in fields(self))
        return f"{cls}({parts})"


def _node(cls):
    cls = dataclass(frozen=True, repr=False)(cls)
    cls.__hash__ = _term_hash
    return cls


def _term_hash(self):
    return fingerprint(self)


@_node
class BoundVar(Term):
    index: int


@_node
class FreeVar(Term):
    name: str


@_node
class Const(Term):
    name: str


@_node
class Sort(Term):
    level: Level


@_node
class App(Term):
    fn: Term
    arg: Term


@_node
class Lam(Term):
    binder_name: str = field(compare=False)
    binder_type: Term = None
    body: Term = None


@_node
class Pi(Term):
    binder_name: str = field(compare=False)
    binder_type: Term = None
    body: Term = None
    inst: bool = field(default=False, compare=False)


PROP = Sort(0)


# ---------------------------------------------------------------------------
# fingerprints

_FP_PERSON = b"lapc.term.v1"


def _fp_bytes(*chunks: bytes) -> int:
    h = hashlib.blake2b(digest_size=8, person=_FP_PERSON)
    for c in chunks:
        h.update(c)
    return int.from_bytes(h.digest(), "little")


def _i2b(n: int) -> bytes:
    return (n & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")


def fingerprint(t: Term) -> int:
    """64-bit structural digest; invariant under bound-variable renaming."""
    fp = t.__dict__.get("_fp")
    if fp is not None:
        return fp
    if isinstance(t, BoundVar):
        fp = _fp_bytes(b"B", _i2b(t.index))
    elif isinstance(t, FreeVar):
        fp = _fp_bytes(b"F", t.name.encode())
    elif isinstance(t, Const):
        fp = _fp_bytes(b"C", t.name.encode())
    elif isinstance(t, Sort):
        fp = _fp_bytes(b"S", _i2b(t.level))
    elif isinstance(t, App):
        fp = _fp_bytes(b"A", _i2b(fingerprint(t.fn)), _i2b(fingerprint(t.arg)))
    elif isinstance(t, Lam):
        fp = _fp_bytes(b"L", _i2b(fingerprint(t.binder_type)), _i2b(fingerprint(t.body)))
    elif isinstance(t, Pi):
        fp = _fp_bytes(b"P", _i2b(fingerprint(t.binder_type)), _i2b(fingerprint(t.body)))
    else:
        raise AssertionError(f"not a Term: {t!r}")
    object.__setattr__(t, "_fp", fp)
    return fp


# ---------------------------------------------------------------------------
# spine helpers

def get_app_fn(t: Term) -> Term:
    while isinstance(t, App):
        t = t.fn
    return t


def get_app_args(t: Term) -> list[Term]:
    args = []
    while isinstance(t, App):
        args.append(t.arg)
        t = t.fn
    args.reverse()
    return args


def spine(t: Term) -> tuple[Term, list[Term]]:
    return get_app_fn(t), get_app_args(t)


def mk_app(fn: Term, args) -> Term:
    for a in args:
        fn = App(fn, a)
    return fn


# ---------------------------------------------------------------------------
# de Bruijn manipulation

def shift(t: Term, d: int, cutoff: int = 0) -> Term:
    if d == 0:
        return t
    if isinstance(t, BoundVar):
        return BoundVar(t.index + d) if t.index >= cutoff else t
    if isinstance(t, App):
        return App(shift(t.fn, d, cutoff), shift(t.arg, d, cutoff))
    if isinstance(t, Lam):
        return Lam(t.binder_name, shift(t.binder_type, d, cutoff), shift(t.body, d, cutoff + 1))
    if isinstance(t, Pi):
        return Pi(t.binder_name, shift(t.binder_type, d, cutoff), shift(t.body, d, cutoff + 1), t.inst)
    return t


def _subst_bvar(t: Term, j: int, v: Term) -> Term:
    if isinstance(t, BoundVar):
        if t.index == j:
            return shift(v, j)
        if t.index > j:
            return BoundVar(t.index - 1)
        return t
    if isinstance(t, App):
        return App(_subst_bvar(t.fn, j, v), _subst_bvar(t.arg, j, v))
    if isinstance(t, Lam):
        return Lam(t.binder_name, _subst_bvar(t.binder_type, j, v), _subst_bvar(t.body, j + 1, v))
    if isinstance(t, Pi):
        return Pi(t.binder_name, _subst_bvar(t.binder_type, j, v), _subst_bvar(t.body, j + 1, v), t.inst)
    return t


def instantiate(body: Term, value: Term) -> Term:
    """Substitute the binder variable (index 0) of an opened body by value."""
    return _subst_bvar(body, 0, value)


def abstract_free(t: Term, name: str, depth: int = 0) -> Term:
    """Turn FreeVar(name) back into the bound variable at the given depth."""
    if isinstance(t, FreeVar):
        return BoundVar(depth) if t.name == name else t
    if isinstance(t, BoundVar):
        return BoundVar(t.index + 1) if t.index >= depth else t
    if isinstance(t, App):
        return App(abstract_free(t.fn, name, depth), abstract_free(t.arg, name, depth))
    if isinstance(t, Lam):
        return Lam(t.binder_name, abstract_free(t.binder_type, name, depth),
                   abstract_free(t.body, name, depth + 1))
    if isinstance(t, Pi):
        return Pi(t.binder_name, abstract_free(t.binder_type, name, depth),
                  abstract_free(t.body, name, depth + 1), t.inst)
    return t


def has_loose_bvar(t: Term, idx: int = 0) -> bool:
    if isinstance(t, BoundVar):
        return t.index == idx
    if isinstance(t, App):
        return has_loose_bvar(t.fn, idx) or has_loose_bvar(t.arg, idx)
    if isinstance(t, (Lam, Pi)):
        return has_loose_bvar(t.binder_type, idx) or has_loose_bvar(t.body, idx + 1)
    return False


def loose_bvar_range(t: Term) -> int:
    """1 + the largest loose de Bruijn index in t, or 0 if t is BV-closed."""
    if isinstance(t, BoundVar):
        return t.index + 1
    if isinstance(t, App):
        return max(loose_bvar_range(t.fn), loose_bvar_range(t.arg))
    if isinstance(t, (Lam, Pi)):
        return max(loose_bvar_range(t.binder_type), loose_bvar_range(t.body) - 1)
    return 0


def is_bvar_closed(t: Term) -> bool:
    return loose_bvar_range(t) == 0


def free_vars(t: Term) -> frozenset[str]:
    fv = t.__dict__.get("_fv")
    if fv is not None:
        return fv
    if isinstance(t, FreeVar):
        fv = frozenset((t.name,))
    elif isinstance(t, App):
        fv = free_vars(t.fn) | free_vars(t.arg)
    elif isinstance(t, (Lam, Pi)):
        fv = free_vars(t.binder_type) | free_vars(t.body)
    else:
        fv = frozenset()
    object.__setattr__(t, "_fv", fv)
    return fv


def consts_of(t: Term) -> frozenset[str]:
    if isinstance(t, Const):
        return frozenset((t.name,))
    if isinstance(t, App):
        return consts_of(t.fn) | consts_of(t.arg)
    if isinstance(t, (Lam, Pi)):
        return consts_of(t.binder_type) | consts_of(t.body)
    return frozenset()


def subst_const(t: Term, name: str, value: Term) -> Term:
    """Replace every occurrence of the constant by a BV-closed value."""
    if isinstance(t, Const):
        return value if t.name == name else t
    if isinstance(t, App):
        return App(subst_const(t.fn, name, value), subst_const(t.arg, name, value))
    if isinstance(t, Lam):
        return Lam(t.binder_name, subst_const(t.binder_type, name, value),
                   subst_const(t.body, name, value))
    if isinstance(t, Pi):
        return Pi(t.binder_name, subst_const(t.binder_type, name, value),
                  subst_const(t.body, name, value), t.inst)
    return t


def size_of(t: Term) -> int:
    """Node count; binder type and body both counted."""
    if isinstance(t, App):
        return 1 + size_of(t.fn) + size_of(t.arg)
    if isinstance(t, (Lam, Pi)):
        return 1 + size_of(t.binder_type) + size_of(t.body)
    return 1


# ---------------------------------------------------------------------------
# readable builders (used to spell out closed definitions such as the logical
# symbols; fn receives the fresh variable and the result is re-closed)

_builder_counter = [0]


def _fresh_builder_name() -> str:
    _builder_counter[0] += 1
    return f"#b{_builder_counter[0]}"


def bind_pi(name: str, ty: Term, fn, inst: bool = False) -> Term:
    fresh = _fresh_builder_name()
    body = fn(FreeVar(fresh))
    return Pi(name, ty, abstract_free(body, fresh), inst)


def bind_lam(name: str, ty: Term, fn) -> Term:
    fresh = _fresh_builder_name()
    body = fn(FreeVar(fresh))
    return Lam(name, ty, abstract_free(body, fresh))


def arrow(a: Term, b: Term) -> Term:
    """Non-dependent Pi; the codomain is shifted under the new binder."""
    return Pi("_", a, shift(b, 1))
