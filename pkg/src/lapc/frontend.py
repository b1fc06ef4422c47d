"""Surface syntax: an s-expression problem language (.lap files).

Keyword heads declare constants, definitions, inductives, context variables,
premises, the goal, instructions, and options; terms use ASCII aliases
(forall, fun, Sort, ->). Parsing is deterministic recursive descent with
byte-precise error locations; elaboration resolves names to de Bruijn form
and typechecks every declaration with the kernel.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from . import errors
from .holcalc import (
    HApp, HArrow, HBool, HBot, HBoundVar, HForall, HFreeVar, HImp, HLam,
    HSortU, HSortUPrime, HTerm,
)
from .kernel import (
    Context, EMPTY_CTX, EMPTY_ENV, Environment, InductiveDecl, Reducibility,
    infer_type, logical_symbol, normalize,
)
from .preprocess import Instructions, Options, Problem, check_inductive_decl
from .term import (
    App, BoundVar, Const, FreeVar, Lam, Pi, PROP, Sort, Term, abstract_free,
    fingerprint, free_vars, has_loose_bvar, mk_app, shift, spine,
)

RESERVED = {
    "Sort", "Prop", "forall", "fun", "->", "eq", "exists",
    "false", "not", "and", "or", "iff",
    "const", "axiom", "def", "inductive", "mutual", "var", "premise", "goal",
    "unfold", "defeq", "set-option",
}

_DECL_KEYWORDS = {"const", "axiom", "def", "inductive", "mutual", "var",
                  "premise", "goal", "unfold", "defeq", "set-option"}


# ---------------------------------------------------------------------------
# reader

@dataclass(frozen=True)
class SAtom:
    text: str
    line: int
    col: int


@dataclass(frozen=True)
class SList:
    items: tuple
    line: int
    col: int


def _tokenize(text: str):
    tokens = []
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
        elif c in " \t\r":
            col += 1
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            tokens.append((c, line, col))
            col += 1
            i += 1
        else:
            start = i
            start_col = col
            while i < n and text[i] not in " \t\r\n();":
                i += 1
                col += 1
            tokens.append((text[start:i], line, start_col))
    return tokens


def _read_all(text: str):
    tokens = _tokenize(text)
    pos = [0]

    def read():
        if pos[0] >= len(tokens):
            raise errors.ParseError(0, 0, "a form", found="end of input")
        tok, line, col = tokens[pos[0]]
        pos[0] += 1
        if tok == "(":
            items = []
            while True:
                if pos[0] >= len(tokens):
                    raise errors.ParseError(line, col, "')'", found="end of input")
                if tokens[pos[0]][0] == ")":
                    pos[0] += 1
                    return SList(tuple(items), line, col)
                items.append(read())
        if tok == ")":
            raise errors.ParseError(line, col, "a form", found=")")
        return SAtom(tok, line, col)

    forms = []
    while pos[0] < len(tokens):
        forms.append(read())
    return forms


# ---------------------------------------------------------------------------
# surface declarations

@dataclass(frozen=True)
class Declaration:
    kind: str
    name: Optional[str]
    payload: tuple
    line: int
    col: int


@dataclass(frozen=True)
class SourceFile:
    declarations: tuple[Declaration, ...]


def _expect_atom(s, what) -> str:
    if not isinstance(s, SAtom):
        raise errors.ParseError(s.line, s.col, what, found="a list")
    return s.text


def _check_name(s: SAtom) -> str:
    name = _expect_atom(s, "an identifier")
    if name in RESERVED or name[0].isdigit() or name.startswith(":"):
        raise errors.ParseError(s.line, s.col, "an identifier", found=name)
    for ch in name:
        if not (ch.isalnum() or ch in "_.'"):
            raise errors.ParseError(s.line, s.col, "an identifier", found=name)
    return name


def parse(text: str) -> SourceFile:
    """Parse the surface language without resolving names."""
    forms = _read_all(text)
    decls = []
    for f in forms:
        if not isinstance(f, SList) or not f.items or not isinstance(f.items[0], SAtom):
            raise errors.ParseError(f.line, f.col, "a declaration form")
        head = f.items[0].text
        if head not in _DECL_KEYWORDS:
            raise errors.ParseError(f.items[0].line, f.items[0].col,
                                    "a declaration keyword", found=head)
        items = f.items[1:]
        if head in ("const", "axiom"):
            if len(items) != 2:
                raise errors.ParseError(f.line, f.col, f"({head} name type)")
            decls.append(Declaration(head, _check_name(items[0]), (items[1],),
                                     f.line, f.col))
        elif head == "def":
            red = Reducibility.DEFAULT
            if items and isinstance(items[-1], SAtom) and items[-1].text.startswith(":"):
                key = items[-1].text
                table = {":reducible": Reducibility.REDUCIBLE,
                         ":default": Reducibility.DEFAULT,
                         ":opaque": Reducibility.OPAQUE}
                if key not in table:
                    raise errors.ParseError(items[-1].line, items[-1].col,
                                            "a reducibility keyword", found=key)
                red = table[key]
                items = items[:-1]
            if len(items) != 3:
                raise errors.ParseError(f.line, f.col, "(def name type value)")
            decls.append(Declaration("def", _check_name(items[0]),
                                     (items[1], items[2], red), f.line, f.col))
        elif head == "inductive":
            if len(items) != 3 or not isinstance(items[1], SList) \
                    or not isinstance(items[2], SList):
                raise errors.ParseError(f.line, f.col,
                                        "(inductive name (params) (ctors))")
            decls.append(Declaration("inductive", _check_name(items[0]),
                                     (items[1], items[2]), f.line, f.col))
        elif head == "mutual":
            decls.append(Declaration("mutual", None, tuple(items), f.line, f.col))
        elif head == "var":
            if len(items) != 2:
                raise errors.ParseError(f.line, f.col, "(var name type)")
            decls.append(Declaration("var", _check_name(items[0]), (items[1],),
                                     f.line, f.col))
        elif head == "premise":
            if len(items) != 2:
                raise errors.ParseError(f.line, f.col, "(premise name prop)")
            decls.append(Declaration("premise", _check_name(items[0]),
                                     (items[1],), f.line, f.col))
        elif head == "goal":
            if len(items) != 1:
                raise errors.ParseError(f.line, f.col, "(goal prop)")
            decls.append(Declaration("goal", None, (items[0],), f.line, f.col))
        elif head in ("unfold", "defeq"):
            names = tuple(_check_name(s) for s in items)
            decls.append(Declaration(head, None, names, f.line, f.col))
        elif head == "set-option":
            if len(items) != 2:
                raise errors.ParseError(f.line, f.col, "(set-option name value)")
            decls.append(Declaration("set-option", _expect_atom(items[0], "an option name"),
                                     (_expect_atom(items[1], "an option value"),),
                                     f.line, f.col))
    return SourceFile(tuple(decls))


# ---------------------------------------------------------------------------
# surface terms -> kernel terms

def _nat(s) -> int:
    text = _expect_atom(s, "a natural number")
    if not text.isdigit():
        raise errors.ParseError(s.line, s.col, "a natural number", found=text)
    return int(text)


_ATOM_SYMBOLS = {
    "Prop": lambda: PROP,
    "false": lambda: logical_symbol("bot"),
    "not": lambda: logical_symbol("not"),
    "and": lambda: logical_symbol("and"),
    "or": lambda: logical_symbol("or"),
    "iff": lambda: logical_symbol("iff"),
}


def _parse_binders(group, scope, resolve, build):
    """group: SList of (name+ type [:inst]); returns [(name, type-sexpr, inst)]
    in binding order (types re-converted per name for correct indices)."""
    if not isinstance(group, SList) or not group.items:
        raise errors.ParseError(group.line, group.col, "a binder list")
    binders = []
    for b in group.items:
        if not isinstance(b, SList) or len(b.items) < 2:
            raise errors.ParseError(b.line, b.col, "(name... type [:inst])")
        items = list(b.items)
        inst = False
        if isinstance(items[-1], SAtom) and items[-1].text == ":inst":
            inst = True
            items = items[:-1]
        if len(items) < 2:
            raise errors.ParseError(b.line, b.col, "(name... type)")
        ty_sexpr = items[-1]
        for name_s in items[:-1]:
            binders.append((_check_name(name_s), ty_sexpr, inst))
    return binders


def to_term(sexpr, scope: tuple[str, ...], resolve) -> Term:
    """Convert a surface term; scope is the binder-name stack (innermost last),
    resolve maps other names to kernel terms."""
    if isinstance(sexpr, SAtom):
        text = sexpr.text
        if text in _ATOM_SYMBOLS:
            return _ATOM_SYMBOLS[text]()
        if text in RESERVED:
            raise errors.ParseError(sexpr.line, sexpr.col, "a term", found=text)
        for depth, name in enumerate(reversed(scope)):
            if name == text:
                return BoundVar(depth)
        return resolve(text, sexpr)
    items = sexpr.items
    if not items:
        raise errors.ParseError(sexpr.line, sexpr.col, "a term", found="()")
    head = items[0]
    if isinstance(head, SAtom):
        kw = head.text
        if kw == "Sort":
            if len(items) != 2:
                raise errors.ParseError(sexpr.line, sexpr.col, "(Sort n)")
            return Sort(_nat(items[1]))
        if kw in ("eq", "exists"):
            if len(items) != 2:
                raise errors.ParseError(sexpr.line, sexpr.col, f"({kw} n)")
            return logical_symbol(kw, _nat(items[1]))
        if kw == "->":
            if len(items) < 3:
                raise errors.ParseError(sexpr.line, sexpr.col, "(-> a b ...)")
            parts = [to_term(s, scope, resolve) for s in items[1:]]
            out = parts[-1]
            for a in reversed(parts[:-1]):
                out = Pi("_", a, shift(out, 1))
            return out
        if kw in ("forall", "fun"):
            if len(items) != 3:
                raise errors.ParseError(sexpr.line, sexpr.col,
                                        f"({kw} (binders) body)")
            binders = _parse_binders(items[1], scope, resolve, kw)
            inner_scope = scope
            parsed = []
            for name, ty_sexpr, inst in binders:
                ty = to_term(ty_sexpr, inner_scope, resolve)
                parsed.append((name, ty, inst))
                inner_scope = inner_scope + (name,)
            body = to_term(items[2], inner_scope, resolve)
            for name, ty, inst in reversed(parsed):
                if kw == "forall":
                    body = Pi(name, ty, body, inst)
                else:
                    body = Lam(name, ty, body)
            return body
        if kw in RESERVED and kw not in _ATOM_SYMBOLS:
            raise errors.ParseError(head.line, head.col, "a term", found=kw)
    if len(items) < 2:
        raise errors.ParseError(sexpr.line, sexpr.col, "an application")
    fn = to_term(items[0], scope, resolve)
    return mk_app(fn, [to_term(s, scope, resolve) for s in items[1:]])


def parse_term(text: str, resolve=None) -> Term:
    """Parse a single closed surface term; unknown names become free variables."""
    forms = _read_all(text)
    if len(forms) != 1:
        raise errors.ParseError(1, 1, "exactly one term")
    if resolve is None:
        resolve = lambda name, s: FreeVar(name)
    return to_term(forms[0], (), resolve)


# ---------------------------------------------------------------------------
# elaboration

_OPTION_NAMES = {"absorb-instances", "max-insts", "drop-non-qmono",
                 "subexpr-pair-budget"}


def elaborate(sf: SourceFile) -> Problem:
    """Build the environment and problem, typechecking every declaration."""
    env = EMPTY_ENV
    ctx = EMPTY_CTX
    premises: list[tuple[str, Term]] = []
    goal: Optional[Term] = None
    unfold: tuple[str, ...] = ()
    defeq: tuple[str, ...] = ()
    opts = {}
    names_in_use: set[str] = set()

    def resolver(ctx_snapshot: Context, env_snapshot: Environment):
        def resolve(name: str, s):
            if ctx_snapshot.lookup(name) is not None:
                return FreeVar(name)
            if name in env_snapshot:
                return Const(name)
            raise errors.UnknownConstant(
                f"{s.line}:{s.col}: unknown constant {name!r}")
        return resolve

    def claim(name: str, decl: Declaration):
        if name in names_in_use:
            raise errors.DuplicateName(
                f"{decl.line}:{decl.col}: {name!r} is already declared")
        names_in_use.add(name)

    for decl in sf.declarations:
        if decl.kind in ("const", "axiom"):
            claim(decl.name, decl)
            ty = to_term(decl.payload[0], (), resolver(ctx, env))
            env = env.declare(decl.name, ty)
        elif decl.kind == "def":
            claim(decl.name, decl)
            ty = to_term(decl.payload[0], (), resolver(ctx, env))
            value = to_term(decl.payload[1], (), resolver(ctx, env))
            env = env.declare(decl.name, ty, value=value,
                              reducibility=decl.payload[2])
        elif decl.kind == "inductive":
            claim(decl.name, decl)
            env = _elaborate_inductive(env, decl, resolver)
            for cname, _ in env.inductives[decl.name].ctors:
                names_in_use.add(cname)
        elif decl.kind == "mutual":
            raise errors.UnsupportedInductive(
                f"{decl.line}:{decl.col}: mutual inductive types are not supported")
        elif decl.kind == "var":
            claim(decl.name, decl)
            ty = to_term(decl.payload[0], (), resolver(ctx, env))
            sort = infer_type(env, ctx, ty)
            if not isinstance(sort, Sort):
                raise errors.TypeError(
                    f"type of variable {decl.name!r} is not a type", subterm=ty)
            ctx = ctx.extend(decl.name, normalize(env, ty))
        elif decl.kind == "premise":
            claim(decl.name, decl)
            t = to_term(decl.payload[0], (), resolver(ctx, env))
            if infer_type(env, ctx, t) != PROP:
                raise errors.TypeError(
                    f"premise {decl.name!r} is not a proposition", subterm=t)
            premises.append((decl.name, normalize(env, t)))
        elif decl.kind == "goal":
            if goal is not None:
                raise errors.ParseError(decl.line, decl.col, "a single goal",
                                        found="second goal")
            t = to_term(decl.payload[0], (), resolver(ctx, env))
            if infer_type(env, ctx, t) != PROP:
                raise errors.TypeError("goal is not a proposition", subterm=t)
            goal = normalize(env, t)
        elif decl.kind == "unfold":
            for n in decl.payload:
                if n not in env:
                    raise errors.UnknownConstant(f"unfold names {n!r}")
            unfold = unfold + decl.payload
        elif decl.kind == "defeq":
            for n in decl.payload:
                if n not in env:
                    raise errors.UnknownConstant(f"defeq names {n!r}")
            defeq = defeq + decl.payload
        elif decl.kind == "set-option":
            key = decl.name
            if key not in _OPTION_NAMES:
                raise errors.ConfigError(f"unknown option {key!r}")
            opts[key.replace("-", "_")] = decl.payload[0]

    if goal is None:
        raise errors.ParseError(0, 0, "a goal declaration", found="none")

    options = Options(
        absorb_instances=_as_bool(opts.get("absorb_instances", "false")),
        max_insts=int(opts.get("max_insts", 256)),
        drop_non_qmono=_as_bool(opts.get("drop_non_qmono", "false")),
        subexpr_pair_budget=int(opts.get("subexpr_pair_budget", 64)),
    )
    return Problem(env=env, ctx=ctx, premises=tuple(premises), goal=goal,
                   instructions=Instructions(unfold=unfold, defeq=defeq),
                   options=options)


def _as_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    if text in ("true", "on", "1"):
        return True
    if text in ("false", "off", "0"):
        return False
    raise errors.ConfigError(f"expected a boolean, got {text!r}")


def _elaborate_inductive(env: Environment, decl: Declaration, resolver) -> Environment:
    params_sexpr, ctors_sexpr = decl.payload
    binders = _parse_binders(params_sexpr, (), None, "inductive") if params_sexpr.items else []
    params: list[tuple[str, Term]] = []
    for name, ty_sexpr, _ in binders:
        ty = to_term(ty_sexpr, (), resolver(EMPTY_CTX, env))
        if not isinstance(ty, Sort):
            raise errors.UnsupportedInductive(
                f"inductive {decl.name!r}: parameter {name!r} must be a sort")
        params.append((name, ty))

    former_ty = Sort(1)
    for name, ty in reversed(params):
        former_ty = Pi(name, ty, shift(former_ty, 1))
    env = env.declare(decl.name, former_ty, reducibility=Reducibility.OPAQUE)

    param_ctx = EMPTY_CTX
    for name, ty in params:
        param_ctx = param_ctx.extend(name, ty)

    def ctor_resolve(name, s):
        if param_ctx.lookup(name) is not None:
            return FreeVar(name)
        if name in env:
            return Const(name)
        raise errors.UnknownConstant(f"{s.line}:{s.col}: unknown constant {name!r}")

    ctors: list[tuple[str, Term]] = []
    for c in ctors_sexpr.items:
        if not isinstance(c, SList) or len(c.items) != 2:
            raise errors.ParseError(c.line, c.col, "(ctor type)")
        cname = _check_name(c.items[0])
        cty = to_term(c.items[1], (), ctor_resolve)
        sort = infer_type(env, param_ctx, cty)
        if not isinstance(sort, Sort):
            raise errors.TypeError(f"constructor {cname!r} type is not a type",
                                   subterm=cty)
        ctors.append((cname, normalize(env, cty)))

    idecl = InductiveDecl(decl.name, tuple(params), tuple(ctors))
    check_inductive_decl(env.with_inductive(idecl), idecl)
    env = env.with_inductive(idecl)
    for cname, cty in ctors:
        closed = cty
        for name, ty in reversed(params):
            closed = Pi(name, ty, abstract_free(closed, name))
        env = env.declare(cname, closed, reducibility=Reducibility.OPAQUE)
    return env


# ---------------------------------------------------------------------------
# pretty printing (the output re-parses and elaborates to an α-equal term)

def _symbol_atom(t: Term) -> Optional[str]:
    for name in ("bot", "not", "and", "or", "iff"):
        if t == logical_symbol(name):
            return "false" if name == "bot" else name
    for level in range(0, 5):
        if t == logical_symbol("eq", level + 1):
            return f"(eq {level + 1})"
        if t == logical_symbol("exists", level + 1):
            return f"(exists {level + 1})"
    return None


def _display_name(base: str, used: set[str]) -> str:
    base = base if base and base not in RESERVED else "x"
    base = "".join(ch if (ch.isalnum() or ch in "_.'") else "x" for ch in base)
    if base[0].isdigit():
        base = "x" + base
    name = base
    i = 0
    while name in used or name in RESERVED:
        i += 1
        name = f"{base}{i}"
    return name


def pretty_print(t: Union[Term, HTerm]) -> str:
    """Canonical s-expression text; parse(pretty_print(t)) is α-equal to t."""
    if isinstance(t, HTerm):
        return _pretty_h(t, [])
    used = set(free_vars(t)) | set(consts_in(t))
    return _pretty(t, [], used)


def consts_in(t: Term):
    from .term import consts_of
    return consts_of(t)


def _pretty(t: Term, scope: list[str], used: set[str]) -> str:
    sym = _symbol_atom(t)
    if sym is not None:
        return sym
    if isinstance(t, BoundVar):
        if t.index < len(scope):
            return scope[-1 - t.index]
        return f"_bv{t.index}"
    if isinstance(t, FreeVar) or isinstance(t, Const):
        return t.name
    if isinstance(t, Sort):
        return f"(Sort {t.level})"
    if isinstance(t, App):
        head, args = spine(t)
        parts = [_pretty(head, scope, used)] + [_pretty(a, scope, used) for a in args]
        return "(" + " ".join(parts) + ")"
    if isinstance(t, Pi):
        if not has_loose_bvar(t.body, 0):
            parts = []
            cur = t
            while isinstance(cur, Pi) and not has_loose_bvar(cur.body, 0) \
                    and _symbol_atom(cur) is None:
                parts.append(_pretty(cur.binder_type, scope, used))
                cur = shift(cur.body, -1)
            parts.append(_pretty(cur, scope, used))
            return "(-> " + " ".join(parts) + ")"
        return _pretty_binder(t, Pi, "forall", scope, used)
    if isinstance(t, Lam):
        return _pretty_binder(t, Lam, "fun", scope, used)
    raise AssertionError(f"not a Term: {t!r}")


def _pretty_binder(t, cls, kw, scope, used) -> str:
    groups = []
    cur = t
    scope2 = list(scope)
    used2 = set(used)
    while isinstance(cur, cls) and _symbol_atom(cur) is None \
            and not (cls is Pi and not has_loose_bvar(cur.body, 0)):
        name = _display_name(cur.binder_name, used2)
        used2.add(name)
        ty_str = _pretty(cur.binder_type, scope2, used2)
        inst = getattr(cur, "inst", False)
        if groups and groups[-1][1] == ty_str and groups[-1][2] == inst:
            groups[-1][0].append(name)
        else:
            groups.append(([name], ty_str, inst))
        scope2.append(name)
        cur = cur.body
    body = _pretty(cur, scope2, used2)
    rendered = " ".join(
        "(" + " ".join(names) + " " + ty + (" :inst" if inst else "") + ")"
        for names, ty, inst in groups)
    return f"({kw} ({rendered}) {body})"


def _pretty_h(t: HTerm, scope: list[str]) -> str:
    if isinstance(t, HBool):
        return "Bool"
    if isinstance(t, HBot):
        return "false'"
    if isinstance(t, HImp):
        return "imp'"
    if isinstance(t, HSortU):
        return f"(U {t.level})"
    if isinstance(t, HSortUPrime):
        return f"(U' {t.level})"
    if isinstance(t, HBoundVar):
        return scope[-1 - t.index] if t.index < len(scope) else f"_bv{t.index}"
    if isinstance(t, HFreeVar):
        return t.name
    if isinstance(t, HForall):
        return f"(forall' {_pretty_h(t.domain, scope)})"
    if isinstance(t, HArrow):
        return f"(-> {_pretty_h(t.domain, scope)} {_pretty_h(t.codomain, scope)})"
    if isinstance(t, HApp):
        fn = _pretty_h(t.fn, scope)
        return f"({fn} {_pretty_h(t.arg, scope)})"
    if isinstance(t, HLam):
        name = t.binder_name or "x"
        name = f"{name}{len(scope)}"
        return f"(fun (({name} {_pretty_h(t.binder_type, scope)})) {_pretty_h(t.body, scope + [name])})"
    raise AssertionError(f"not an HTerm: {t!r}")


def load_problem(path) -> Problem:
    with open(path, "r", encoding="utf-8") as fh:
        return elaborate(parse(fh.read()))
