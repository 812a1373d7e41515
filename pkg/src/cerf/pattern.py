"""Symbolic regular expressions with memory: the AST, a textual pattern
language, the derivation-relation membership oracle, and the streaming
transform.

Pattern files look like:

    # declarations first, then one expression
    pred TypeIsT(x): x.type == "T"
    pred TypeIsH(x): x.type == "H"
    pred EqualId(x, y): x.id == y.id

    (TypeIsT(~) -> r1) ; TRUE* ; (TypeIsH(~) & EqualId(~, r1))

Operators: `;` concatenation, `+` alternation, postfix `*` iteration,
postfix `-> rN` stores the matched element into a register, `& | !` build
conditions, `TRUE`/`EPS`/`NONE` are the tautology, the empty string and the
empty language, `within N` (outermost only) bounds match length, `~` is the
element currently being consumed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .algebra import (
    CURRENT,
    EMPTY_VALUATION,
    TRUE,
    And,
    Atom,
    Condition,
    EvalScope,
    Event,
    Not,
    Or,
    Predicate,
    PredicateLibrary,
    Register,
    TrueCondition,
    UnknownPredicate,
    Valuation,
    _compare_values,
    registers_of,
)


class PatternSyntaxError(SyntaxError):
    """Pattern text does not conform to the grammar; carries line/column."""

    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class UnknownRegister(KeyError):
    """A condition reads a register that nothing in scope ever writes."""


# ---------------------------------------------------------------------------
# AST


class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class Empty(Expr):
    """The empty language (NONE)."""


@dataclass(frozen=True)
class Epsilon(Expr):
    """The empty string (EPS)."""


@dataclass(frozen=True)
class Cond(Expr):
    condition: Condition


@dataclass(frozen=True)
class CondWrite(Expr):
    condition: Condition
    register: Register


@dataclass(frozen=True)
class Concat(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Alt(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Star(Expr):
    body: Expr


@dataclass(frozen=True)
class Window(Expr):
    """Bounds accepted strings to at most `width` elements.

    The parser admits windows only at the outermost position; nested windows
    inside user patterns are rejected there. The AST itself tolerates a
    Window under a Concat because the streaming transform wraps windowed
    expressions in a TRUE* prefix.
    """

    body: Expr
    width: int

    def __post_init__(self) -> None:
        if self.width < 1:
            raise ValueError("window width must be at least 1")
        if _contains_window(self.body):
            raise ValueError("windows do not nest")


def _contains_window(e: Expr) -> bool:
    if isinstance(e, Window):
        return True
    if isinstance(e, (Concat, Alt)):
        return _contains_window(e.left) or _contains_window(e.right)
    if isinstance(e, Star):
        return _contains_window(e.body)
    return False


EMPTY = Empty()
EPSILON = Epsilon()
TRUE_COND = Cond(TRUE)


def top_registers(e: Expr) -> frozenset[Register]:
    """Every register read or written anywhere in the expression."""
    if isinstance(e, Cond):
        return registers_of(e.condition)
    if isinstance(e, CondWrite):
        return registers_of(e.condition) | {e.register}
    if isinstance(e, (Concat, Alt)):
        return top_registers(e.left) | top_registers(e.right)
    if isinstance(e, (Star, Window)):
        return top_registers(e.body)
    return frozenset()


def written_registers(e: Expr) -> frozenset[Register]:
    if isinstance(e, CondWrite):
        return frozenset((e.register,))
    if isinstance(e, (Concat, Alt)):
        return written_registers(e.left) | written_registers(e.right)
    if isinstance(e, (Star, Window)):
        return written_registers(e.body)
    return frozenset()


def to_streaming(e: Expr) -> Expr:
    """Prefix the expression with TRUE* so that a run over a whole stream
    prefix succeeds exactly when some suffix of it matches the original
    expression. A window stays inside the wrapper, bounding only the match
    body."""
    return Concat(Star(TRUE_COND), e)


# ---------------------------------------------------------------------------
# Tokenizer


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>\#[^\n]*)
  | (?P<number>-?\d+(?:\.\d+)?)
  | (?P<string>"[^"\n]*")
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<arrow>->)
  | (?P<op>==|!=|<=|>=|[()<>,:;+*&|!~.])
    """,
    re.VERBOSE,
)

_REGISTER_RE = re.compile(r"^r\d+$")

_KEYWORDS = frozenset({"pred", "within", "TRUE", "EPS", "NONE"})


@dataclass(frozen=True)
class _Token:
    kind: str  # number | string | name | arrow | op | eof
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    line = 1
    line_start = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PatternSyntaxError(
                f"unexpected character {text[pos]!r}", line, pos - line_start + 1
            )
        kind = m.lastgroup
        value = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, value, line, m.start() - line_start + 1))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + value.rfind("\n") + 1
        pos = m.end()
    tokens.append(_Token("eof", "", line, len(text) - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(
        self,
        tokens: list[_Token],
        library: PredicateLibrary,
        register_names: Optional[frozenset[str]] = None,
    ) -> None:
        self.tokens = tokens
        self.pos = 0
        self.library = library
        # When set, any of these names is a register argument; otherwise the
        # pattern-language rule applies (r followed by digits).
        self.register_names = register_names

    # -- token plumbing

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def error(self, message: str, tok: Optional[_Token] = None) -> PatternSyntaxError:
        tok = tok or self.peek()
        return PatternSyntaxError(message, tok.line, tok.column)

    def expect(self, text: str, what: Optional[str] = None) -> _Token:
        tok = self.peek()
        if tok.text != text:
            if tok.text == "within":
                raise self.error("a window is allowed only at the outermost level")
            shown = what or f"{text!r}"
            found = repr(tok.text) if tok.kind != "eof" else "end of input"
            raise self.error(f"expected {shown}, found {found}")
        return self.advance()

    # -- predicate declarations

    def parse_declarations(self) -> None:
        while self.peek().text == "pred":
            self.parse_declaration()

    def parse_declaration(self) -> None:
        self.expect("pred")
        name_tok = self.peek()
        if name_tok.kind != "name" or name_tok.text in _KEYWORDS:
            raise self.error("expected a predicate name")
        name = self.advance().text
        self.expect("(")
        params: list[str] = []
        while True:
            tok = self.peek()
            if tok.kind != "name":
                raise self.error("expected a parameter name")
            if tok.text in params:
                raise self.error(f"duplicate parameter {tok.text!r}")
            params.append(self.advance().text)
            if self.peek().text == ",":
                self.advance()
                continue
            break
        self.expect(")")
        self.expect(":")
        left = self.parse_operand(params)
        op_tok = self.peek()
        if op_tok.text not in ("==", "!=", "<", "<=", ">", ">="):
            raise self.error("expected a comparison operator")
        op = self.advance().text
        right = self.parse_operand(params)
        if left[0] == "lit" and right[0] == "lit":
            raise self.error("a predicate must reference at least one parameter", op_tok)
        self.library.define(_declared_predicate(name, params, left, op, right))

    def parse_operand(self, params: list[str]):
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            text = tok.text
            return ("lit", float(text) if "." in text else int(text))
        if tok.kind == "string":
            self.advance()
            return ("lit", tok.text[1:-1])
        if tok.kind == "name":
            if tok.text not in params:
                raise self.error(f"unknown parameter {tok.text!r}")
            self.advance()
            self.expect(".")
            attr_tok = self.peek()
            if attr_tok.kind != "name":
                raise self.error("expected an attribute name")
            self.advance()
            return ("attr", params.index(tok.text), attr_tok.text)
        raise self.error("expected a parameter.attribute reference or a literal")

    # -- expression grammar

    def parse_expression(self) -> Expr:
        expr = self.parse_alt()
        if self.peek().text == "within":
            self.advance()
            tok = self.peek()
            if tok.kind != "number" or not tok.text.isdigit() or int(tok.text) < 1:
                raise self.error("expected a positive integer window width")
            self.advance()
            expr = Window(expr, int(tok.text))
        return expr

    def parse_alt(self) -> Expr:
        expr = self.parse_cat()
        while self.peek().text == "+":
            self.advance()
            expr = Alt(expr, self.parse_cat())
        return expr

    def parse_cat(self) -> Expr:
        expr = self.parse_postfix()
        while self.peek().text == ";":
            self.advance()
            expr = Concat(expr, self.parse_postfix())
        return expr

    def parse_postfix(self) -> Expr:
        expr = self.parse_primary()
        while True:
            tok = self.peek()
            if tok.text == "*":
                self.advance()
                expr = Star(expr)
            elif tok.kind == "arrow":
                self.advance()
                reg = self.parse_register_name()
                if not isinstance(expr, Cond):
                    raise self.error("-> stores a condition match; it cannot follow this operand", tok)
                expr = CondWrite(expr.condition, reg)
            else:
                return expr

    def parse_register_name(self) -> Register:
        tok = self.peek()
        if tok.kind == "name" and self.is_register_name(tok.text):
            self.advance()
            return Register(tok.text)
        raise self.error("expected a register (r1, r2, …)")

    def is_register_name(self, text: str) -> bool:
        if self.register_names is not None:
            return text in self.register_names
        return _REGISTER_RE.match(text) is not None

    def parse_primary(self) -> Expr:
        tok = self.peek()
        if tok.text == "EPS":
            self.advance()
            return EPSILON
        if tok.text == "NONE":
            self.advance()
            return EMPTY
        if tok.text == "(":
            mark = self.pos
            try:
                return Cond(self.parse_condition())
            except PatternSyntaxError:
                self.pos = mark
            self.expect("(")
            expr = self.parse_alt()
            self.expect(")")
            return expr
        if tok.text == "TRUE" or tok.text == "!" or tok.kind == "name":
            return Cond(self.parse_condition())
        found = repr(tok.text) if tok.kind != "eof" else "end of input"
        raise self.error(f"expected an expression, found {found}")

    # -- condition grammar

    def parse_condition(self) -> Condition:
        cond = self.parse_cond_and()
        while self.peek().text == "|":
            self.advance()
            cond = Or(cond, self.parse_cond_and())
        return cond

    def parse_cond_and(self) -> Condition:
        cond = self.parse_cond_unary()
        while self.peek().text == "&":
            self.advance()
            cond = And(cond, self.parse_cond_unary())
        return cond

    def parse_cond_unary(self) -> Condition:
        if self.peek().text == "!":
            self.advance()
            return Not(self.parse_cond_unary())
        return self.parse_cond_atom()

    def parse_cond_atom(self) -> Condition:
        tok = self.peek()
        if tok.text == "TRUE":
            self.advance()
            return TRUE
        if tok.text == "(":
            self.advance()
            cond = self.parse_condition()
            self.expect(")")
            return cond
        if tok.kind == "name" and tok.text not in _KEYWORDS:
            name = self.advance().text
            self.expect("(", "'(' after predicate name")
            # lookup failures propagate as UnknownPredicate so callers can
            # tell a missing declaration apart from a malformed pattern
            predicate = self.library.get(name)
            args = [self.parse_argument()]
            while self.peek().text == ",":
                self.advance()
                args.append(self.parse_argument())
            self.expect(")")
            if len(args) != predicate.arity:
                raise self.error(
                    f"{name} expects {predicate.arity} argument(s), got {len(args)}", tok
                )
            return Atom(predicate, tuple(args))
        found = repr(tok.text) if tok.kind != "eof" else "end of input"
        raise self.error(f"expected a condition, found {found}")

    def parse_argument(self):
        tok = self.peek()
        if tok.text == "~":
            self.advance()
            return CURRENT
        if tok.kind == "name" and self.is_register_name(tok.text):
            self.advance()
            return Register(tok.text)
        raise self.error("expected ~ or a register argument")


def _declared_predicate(name: str, params: list[str], left, op: str, right) -> Predicate:
    def resolver(operand):
        if operand[0] == "lit":
            value = operand[1]
            return lambda events: value
        _, index, attr = operand
        return lambda events: events[index].get(attr)

    resolve_left = resolver(left)
    resolve_right = resolver(right)

    def ev(*events: Event) -> bool:
        return _compare_values(resolve_left(events), op, resolve_right(events))

    def render(operand) -> str:
        if operand[0] == "lit":
            value = operand[1]
            return f'"{value}"' if isinstance(value, str) else repr(value)
        _, index, attr = operand
        return f"{params[index]}.{attr}"

    source = f"pred {name}({', '.join(params)}): {render(left)} {op} {render(right)}"
    return Predicate(name, len(params), ev, source)


def parse(text: str, library: Optional[PredicateLibrary] = None) -> tuple[PredicateLibrary, Expr]:
    """Parse a full pattern file: predicate declarations, one expression.

    Returns the library (extended with the declared predicates) and the AST.
    Raises PatternSyntaxError, UnknownPredicate (via unknown atom names), or
    UnknownRegister when a register is read but never written anywhere in the
    pattern.
    """
    library = library if library is not None else PredicateLibrary()
    parser = _Parser(_tokenize(text), library)
    parser.parse_declarations()
    expr = parser.parse_expression()
    tok = parser.peek()
    if tok.kind != "eof":
        raise parser.error(f"unexpected trailing input {tok.text!r}")
    unwritten = {r.name for r in top_registers(expr)} - {
        r.name for r in written_registers(expr)
    }
    if unwritten:
        raise UnknownRegister(
            f"register(s) read but never written: {', '.join(sorted(unwritten))}"
        )
    return library, expr


def parse_predicates(text: str, library: Optional[PredicateLibrary] = None) -> PredicateLibrary:
    """Parse declaration lines only (used when loading serialized automata)."""
    library = library if library is not None else PredicateLibrary()
    parser = _Parser(_tokenize(text), library)
    parser.parse_declarations()
    tok = parser.peek()
    if tok.kind != "eof":
        raise parser.error(f"unexpected trailing input {tok.text!r}")
    return library


def parse_condition(
    text: str, library: PredicateLibrary, register_names: Iterable[str] = ()
) -> Condition:
    """Parse a single condition, resolving register arguments against an
    explicit name set (serialized automata may carry minted registers that do
    not follow the pattern-language rN rule)."""
    parser = _Parser(_tokenize(text), library, frozenset(register_names))
    cond = parser.parse_condition()
    tok = parser.peek()
    if tok.kind != "eof":
        raise parser.error(f"unexpected trailing input {tok.text!r}")
    return cond


# ---------------------------------------------------------------------------
# Unparser


def unparse_condition(cond: Condition, level: int = 0) -> str:
    """Render a condition in pattern syntax. Levels: 0=or, 1=and, 2=unary."""
    if isinstance(cond, TrueCondition):
        return "TRUE"
    if isinstance(cond, Atom):
        args = ", ".join(
            arg.name if isinstance(arg, Register) else "~" for arg in cond.args
        )
        return f"{cond.predicate.name}({args})"
    if isinstance(cond, Not):
        return f"!{unparse_condition(cond.operand, 2)}"
    if isinstance(cond, And):
        text = f"{unparse_condition(cond.left, 1)} & {unparse_condition(cond.right, 2)}"
        return f"({text})" if level > 1 else text
    if isinstance(cond, Or):
        text = f"{unparse_condition(cond.left, 0)} | {unparse_condition(cond.right, 1)}"
        return f"({text})" if level > 0 else text
    raise TypeError(f"not a condition: {cond!r}")


def _unparse_cond_operand(cond: Condition) -> str:
    if isinstance(cond, (TrueCondition, Atom)):
        return unparse_condition(cond)
    return f"({unparse_condition(cond)})"


def _unparse_expr(e: Expr, level: int) -> str:
    """Levels: 1=alt, 2=cat, 3=postfix, 4=primary."""
    if isinstance(e, Empty):
        return "NONE"
    if isinstance(e, Epsilon):
        return "EPS"
    if isinstance(e, Cond):
        return _unparse_cond_operand(e.condition)
    if isinstance(e, CondWrite):
        text = f"{_unparse_cond_operand(e.condition)} -> {e.register.name}"
        return f"({text})" if level > 3 else text
    if isinstance(e, Star):
        return f"{_unparse_expr(e.body, 4)}*"
    if isinstance(e, Concat):
        text = f"{_unparse_expr(e.left, 2)} ; {_unparse_expr(e.right, 3)}"
        return f"({text})" if level > 2 else text
    if isinstance(e, Alt):
        text = f"{_unparse_expr(e.left, 1)} + {_unparse_expr(e.right, 2)}"
        return f"({text})" if level > 1 else text
    if isinstance(e, Window):
        raise ValueError("a window is rendered only at the outermost level")
    raise TypeError(f"not an expression: {e!r}")


def unparse(e: Expr) -> str:
    """Render an AST in pattern syntax; parse(unparse(e)) returns e."""
    if isinstance(e, Window):
        return f"{_unparse_expr(e.body, 1)} within {e.width}"
    return _unparse_expr(e, 1)


def unparse_pattern(library: PredicateLibrary, e: Expr) -> str:
    """Render a complete pattern file: declarations (for the predicates the
    expression actually uses), then the expression."""
    used: set[str] = set()

    def collect_cond(c: Condition) -> None:
        if isinstance(c, Atom):
            used.add(c.predicate.name)
        elif isinstance(c, Not):
            collect_cond(c.operand)
        elif isinstance(c, (And, Or)):
            collect_cond(c.left)
            collect_cond(c.right)

    def collect(x: Expr) -> None:
        if isinstance(x, (Cond, CondWrite)):
            collect_cond(x.condition)
        elif isinstance(x, (Concat, Alt)):
            collect(x.left)
            collect(x.right)
        elif isinstance(x, (Star, Window)):
            collect(x.body)

    collect(e)
    lines = []
    for name in sorted(used):
        pred = library.get(name)
        if pred.source:
            lines.append(pred.source)
    lines.append("")
    lines.append(unparse(e))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Derivation oracle


def derive(
    e: Expr, events: Sequence[Event], valuation: Valuation = EMPTY_VALUATION
) -> frozenset[Valuation]:
    """All valuations the expression can produce by consuming exactly the
    given string, starting from the given valuation.

    Structural recursion over the expression with memoization on
    (node, span, valuation). A Star iteration must consume at least one
    element, which keeps the recursion finite on nullable bodies without
    changing the language (an empty iteration leaves the valuation as it is).
    Atoms reading unbound registers are simply unsatisfied.
    """
    events = tuple(events)
    memo: dict = {}

    def sat(cond: Condition, index: int, v: Valuation) -> bool:
        return EvalScope(v, strict=False).evaluate(cond, events[index])

    def go(node: Expr, i: int, j: int, v: Valuation) -> frozenset[Valuation]:
        key = (node, i, j, v)
        hit = memo.get(key)
        if hit is not None:
            return hit
        out: frozenset[Valuation]
        if isinstance(node, Empty):
            out = frozenset()
        elif isinstance(node, Epsilon):
            out = frozenset((v,)) if i == j else frozenset()
        elif isinstance(node, Cond):
            if j == i + 1 and sat(node.condition, i, v):
                out = frozenset((v,))
            else:
                out = frozenset()
        elif isinstance(node, CondWrite):
            if j == i + 1 and sat(node.condition, i, v):
                out = frozenset((v.set(node.register, events[i]),))
            else:
                out = frozenset()
        elif isinstance(node, Concat):
            acc = set()
            for k in range(i, j + 1):
                for mid in go(node.left, i, k, v):
                    acc.update(go(node.right, k, j, mid))
            out = frozenset(acc)
        elif isinstance(node, Alt):
            out = go(node.left, i, j, v) | go(node.right, i, j, v)
        elif isinstance(node, Star):
            if i == j:
                out = frozenset((v,))
            else:
                acc = set()
                for k in range(i + 1, j + 1):
                    for mid in go(node.body, i, k, v):
                        acc.update(go(node, k, j, mid))
                out = frozenset(acc)
        elif isinstance(node, Window):
            if j - i <= node.width:
                out = go(node.body, i, j, v)
            else:
                out = frozenset()
        else:
            raise TypeError(f"not an expression: {node!r}")
        memo[key] = out
        return out

    return go(e, 0, len(events), valuation)


def accepts(e: Expr, events: Sequence[Event]) -> bool:
    """Membership: whether the expression derives the string from an empty
    valuation."""
    return bool(derive(e, events))
