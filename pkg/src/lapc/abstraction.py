"""λ→* abstraction: rewrite quasi-monomorphic λC terms into HOL* terms.

The traversal turns every HOL* instance it meets into a HOL* variable,
recording the instance ↔ variable table; inverting that table afterwards
yields the substitution triple that witnesses essential higher-order
provability (σ̄(π*(output)) ≅ input).
"""
from __future__ import annotations

from dataclasses import dataclass, field

from . import errors
from .depanalysis import analyze_args
from .holcalc import (
    BOOL, HApp, HArrow, HBool, HBot, HContext, HForall, HFreeVar, HImp, HLam,
    HSortU, HTerm, h_abstract_free, h_mk_app, himp, pi_star,
)
from .kernel import (
    BOT, Context, Environment, infer_type, is_def_eq, normalize, subst_extend,
)
from .term import (
    Const, FreeVar, Lam, Pi, PROP, Sort, Term, fingerprint, free_vars,
    has_loose_bvar, instantiate, mk_app, shift, spine,
)


class _InstanceTable:
    """λC term -> HOL* variable name, keyed by fingerprint, resolved by isDefEq."""

    def __init__(self, env: Environment, ctx: Context, prefix: str):
        self.env = env
        self.ctx = ctx
        self.prefix = prefix
        self.entries: list[tuple[str, Term]] = []
        self._by_fp: dict[int, list[tuple[Term, str]]] = {}

    def lookup_or_add(self, t: Term) -> str:
        for prev, name in self._by_fp.get(fingerprint(t), ()):
            if prev == t:
                return name
        for name, prev in self.entries:
            if is_def_eq(self.env, self.ctx, prev, t):
                return name
        name = f"{self.prefix}{len(self.entries)}"
        self.entries.append((name, t))
        self._by_fp.setdefault(fingerprint(t), []).append((t, name))
        return name


@dataclass
class AbstractionState:
    """Single-writer state for one problem's abstraction run."""

    env: Environment
    ctx: Context
    absorb_instances: bool = False
    table: _InstanceTable = None
    type_table: _InstanceTable = None

    def __post_init__(self):
        if self.table is None:
            self.table = _InstanceTable(self.env, self.ctx, "v")
        if self.type_table is None:
            self.type_table = _InstanceTable(self.env, self.ctx, "t")


def get_lvar_name(state: AbstractionState, t: Term) -> str:
    """HOL* term variable for a λC instance; defeq instances share one name."""
    return state.table.lookup_or_add(t)


def get_tvar_name(state: AbstractionState, t: Term) -> str:
    return state.type_table.lookup_or_add(t)


def abstract_type(state: AbstractionState, a: Term) -> HTerm:
    """Abstract a λC type into a HOL* type.

    U0 becomes Bool, non-dependent arrows decompose structurally, and
    everything else becomes a HOL* type variable (so List A behaves as the
    atomic type LA). Quantification over universes has no HOL* image.
    """
    a = normalize(state.env, a)
    if a == PROP:
        return BOOL
    if isinstance(a, Sort):
        raise errors.NotQuasiMono(
            "universe sorts cannot be abstracted into HOL* types", subterm=a)
    if isinstance(a, Pi) and not has_loose_bvar(a.body, 0):
        dom = abstract_type(state, a.binder_type)
        cod = abstract_type(state, shift(a.body, -1))
        return HArrow(dom, cod)
    level = infer_type(state.env, state.ctx, a)
    if not isinstance(level, Sort):
        raise errors.NotQuasiMono("binder type is not a type", subterm=a)
    if level == PROP:
        raise errors.NotQuasiMono(
            "propositions cannot serve as HOL* type instances", subterm=a)
    return HFreeVar(get_tvar_name(state, a))


def lam_abst(state: AbstractionState, B: frozenset[str], t: Term,
             check: bool = True) -> HTerm:
    """Abstract a QMono λC term into HOL* (Algorithm 2).

    Raises NotQuasiMono when the traversal leaves the quasi-monomorphic
    fragment; quantifier instantiation is then responsible for the premise.
    """
    if check:
        from .depanalysis import q_mono_violation
        bad = q_mono_violation(state.env, state.ctx, B, t, state.absorb_instances)
        if bad is not None:
            raise errors.NotQuasiMono(
                f"term violates QMono clause {bad[1]}", subterm=bad[0],
                clause=bad[1])
    return _abst(state, state.ctx, B, t)


def _abst(state: AbstractionState, ctx: Context, B: frozenset[str], t: Term) -> HTerm:
    env = state.env
    head, args = spine(t)
    if isinstance(head, FreeVar) and head.name in B:
        out = HFreeVar(head.name)
        return h_mk_app(out, [_abst(state, ctx, B, a) for a in args])
    if isinstance(head, (FreeVar, Const)):
        analysis = analyze_args(env, ctx, head, args, state.absorb_instances)
        for d in analysis.d_args:
            if free_vars(d) & B:
                raise errors.NotQuasiMono(
                    "dependent argument mentions a bound variable",
                    subterm=t, clause=2)
        name = get_lvar_name(state, analysis.l_fun)
        return h_mk_app(HFreeVar(name),
                        [_abst(state, ctx, B, a) for a in analysis.l_args])
    if isinstance(t, Pi):
        if t == BOT:
            return HBot()
        dom_sort = infer_type(env, ctx, t.binder_type)
        if dom_sort == PROP:
            if has_loose_bvar(t.body, 0):
                raise errors.NotQuasiMono(
                    "proofs cannot be bound by dependent quantifiers",
                    subterm=t, clause=4)
            lhs = _abst(state, ctx, B, t.binder_type)
            rhs = _abst(state, ctx, B, shift(t.body, -1))
            return himp(lhs, rhs)
        htype = abstract_type(state, t.binder_type)
        fresh = f"{t.binder_name}${len(ctx)}"
        ctx2 = ctx.extend(fresh, normalize(env, t.binder_type))
        babst = _abst(state, ctx2, B | {fresh}, instantiate(t.body, FreeVar(fresh)))
        return HApp(HForall(htype),
                    HLam(t.binder_name, htype, h_abstract_free(babst, fresh)))
    if isinstance(t, Lam):
        htype = abstract_type(state, t.binder_type)
        fresh = f"{t.binder_name}${len(ctx)}"
        ctx2 = ctx.extend(fresh, normalize(env, t.binder_type))
        babst = _abst(state, ctx2, B | {fresh}, instantiate(t.body, FreeVar(fresh)))
        return HLam(t.binder_name, htype, h_abstract_free(babst, fresh))
    raise errors.NotQuasiMono(f"no abstraction case for {t!r}", subterm=t)


@dataclass(frozen=True)
class Substitution:
    """(Γ', Γ, σ): HOL* context, λC context, and the variable ↦ instance map."""

    hol_ctx: HContext
    lc_ctx: Context
    sigma: dict[str, Term]

    def term_vars(self) -> list[str]:
        return [n for n, _ in self.hol_ctx if n.startswith("v")]

    def type_vars(self) -> list[str]:
        return [n for n, _ in self.hol_ctx if n.startswith("t")]


def extract_substitution(state: AbstractionState) -> Substitution:
    """Invert the abstraction tables into a validated substitution triple.

    The HOL* type of each term variable is the abstraction of its instance's
    λC type; validation checks the Appendix-style well-formedness condition
    lcCtx ⊢ σ(u) : σ̄(π*(τ)) for every declaration and raises
    SubstitutionIllFormed on failure (an abstraction bug, never swallowed).
    """
    env, ctx = state.env, state.ctx
    term_types: list[tuple[str, HTerm]] = []
    for name, inst in list(state.table.entries):
        lc_ty = normalize(env, infer_type(env, ctx, inst))
        term_types.append((name, abstract_type(state, lc_ty)))

    entries: list[tuple[str, HTerm]] = []
    sigma: dict[str, Term] = {}
    for name, lc_ty in state.type_table.entries:
        level = infer_type(env, ctx, lc_ty)
        assert isinstance(level, Sort) and level.level >= 1
        entries.append((name, HSortU(level.level)))
        sigma[name] = lc_ty
    for (name, hol_ty), (_, inst) in zip(term_types, state.table.entries):
        entries.append((name, hol_ty))
        sigma[name] = inst

    sub = Substitution(HContext(tuple(entries)), ctx, sigma)
    _validate(env, sub)
    return sub


def _validate(env: Environment, sub: Substitution):
    for name, hol_ty in sub.hol_ctx:
        expected = normalize(env, subst_extend(sub.sigma, pi_star(hol_ty)))
        actual = infer_type(env, sub.lc_ctx, sub.sigma[name])
        if not is_def_eq(env, sub.lc_ctx, actual, expected):
            raise errors.SubstitutionIllFormed(
                f"sigma({name}) : {actual!r} but the declaration demands {expected!r}")
