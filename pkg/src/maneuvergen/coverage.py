"""Predicates over maneuver aggregates and their differentiable coverage indicators.

Grammar (whitespace-insensitive, one predicate per line = one branch)::

    pred     := or_expr
    or_expr  := and_expr ("or" and_expr)*
    and_expr := unary ("and" unary)*
    unary    := "not" unary | "(" pred ")" | cmp
    cmp      := value ("<" | ">") value
    value    := NUMBER | AGG
    AGG      := ("mean" | "max" | "min") "(" IDENT "[" INT ":" INT "]" ")"

Compiled indicators replace ``a < b`` by ``a - b``, ``a > b`` by ``b - a``,
``and`` by max, ``or`` by min and ``not`` by negation, so a negative value
certifies that the predicate holds.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import torch

from .errors import ManeuverGenError
from .synth import SIGNAL_NAMES, Maneuver

AGGREGATES = ("mean", "max", "min")


class DSLError(ManeuverGenError, ValueError):
    pass


class DSLSyntaxError(DSLError):
    def __init__(self, message, line, col):
        self.line = line
        self.col = col
        super().__init__(f"line {line}, column {col}: {message}")


class UnsupportedOperatorError(DSLSyntaxError):
    pass


class UnknownChannelError(DSLError):
    pass


class EmptySliceError(DSLError):
    pass


class SliceRangeError(DSLError):
    pass


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Aggregate:
    op: str
    channel: str
    start: int
    stop: int


@dataclass(frozen=True)
class Compare:
    op: str
    left: Union[Const, Aggregate]
    right: Union[Const, Aggregate]


@dataclass(frozen=True)
class And:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Or:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Not:
    child: "Node"


Node = Union[Compare, And, Or, Not]


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>[-−]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?)
  | (?P<ident>[A-Za-z_]\w*)
  | (?P<badop>==|!=|<=|>=|=)
  | (?P<op>[<>()\[\]:])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text, line):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise DSLSyntaxError(f"unexpected character {text[pos]!r}", line, pos + 1)
        kind = m.lastgroup
        if kind == "badop":
            op = m.group()
            if op in ("==", "!=", "="):
                raise UnsupportedOperatorError(
                    f"operator {op!r} is not expressible as a difference function", line, pos + 1
                )
            raise DSLSyntaxError(f"operator {op!r} not supported; use strict '<' or '>'", line, pos + 1)
        if kind != "ws":
            out.append(_Tok(kind, m.group(), line, pos + 1))
        pos = m.end()
    out.append(_Tok("eof", "", line, len(text) + 1))
    return out


class _Parser:
    def __init__(self, tokens, signal_names, length):
        self.toks = tokens
        self.i = 0
        self.signal_names = tuple(signal_names)
        self.length = length

    @property
    def tok(self):
        return self.toks[self.i]

    def error(self, message, tok=None):
        tok = tok or self.tok
        return DSLSyntaxError(message, tok.line, tok.col)

    def advance(self):
        tok = self.tok
        self.i += 1
        return tok

    def expect(self, text):
        if self.tok.text != text:
            raise self.error(f"expected {text!r}, found {self.tok.text or 'end of line'!r}")
        return self.advance()

    def is_keyword(self, word):
        return self.tok.kind == "ident" and self.tok.text == word

    def parse(self):
        node = self.or_expr()
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r}")
        return node

    def or_expr(self):
        node = self.and_expr()
        while self.is_keyword("or"):
            self.advance()
            node = Or(node, self.and_expr())
        return node

    def and_expr(self):
        node = self.unary()
        while self.is_keyword("and"):
            self.advance()
            node = And(node, self.unary())
        return node

    def unary(self):
        if self.is_keyword("not"):
            self.advance()
            return Not(self.unary())
        if self.tok.text == "(":
            self.advance()
            node = self.or_expr()
            self.expect(")")
            return node
        return self.cmp()

    def cmp(self):
        left = self.value()
        if self.tok.text not in ("<", ">"):
            raise self.error(f"expected '<' or '>', found {self.tok.text or 'end of line'!r}")
        op = self.advance().text
        return Compare(op, left, self.value())

    def value(self):
        tok = self.tok
        if tok.kind == "number":
            self.advance()
            return Const(float(tok.text.replace("−", "-")))
        if tok.kind == "ident" and tok.text in AGGREGATES:
            return self.aggregate()
        raise self.error(f"expected a number or aggregate, found {tok.text or 'end of line'!r}")

    def integer(self):
        tok = self.tok
        if tok.kind != "number" or not tok.text.isdigit():
            raise self.error(f"expected a nonnegative integer, found {tok.text!r}")
        self.advance()
        return int(tok.text)

    def aggregate(self):
        op = self.advance().text
        self.expect("(")
        name_tok = self.tok
        if name_tok.kind != "ident":
            raise self.error("expected a channel name")
        self.advance()
        if name_tok.text not in self.signal_names:
            raise UnknownChannelError(
                f"line {name_tok.line}, column {name_tok.col}: unknown channel {name_tok.text!r}"
                f" (known: {', '.join(self.signal_names)})"
            )
        self.expect("[")
        start_tok = self.tok
        start = self.integer()
        self.expect(":")
        stop = self.integer()
        self.expect("]")
        self.expect(")")
        if stop <= start:
            raise EmptySliceError(f"line {start_tok.line}, column {start_tok.col}: empty slice [{start}:{stop}]")
        if self.length is not None and stop > self.length:
            raise SliceRangeError(f"slice [{start}:{stop}] exceeds signal length {self.length}")
        return Aggregate(op, name_tok.text, start, stop)


def _lines(source):
    for n, raw in enumerate(source.splitlines(), start=1):
        text = raw.split("#", 1)[0]
        if text.strip():
            yield n, text


def parse_branches(source: str, signal_names=SIGNAL_NAMES, length=None) -> list:
    """Parse every non-blank line of ``source`` into one predicate AST."""
    return [
        _Parser(_tokenize(text, n), signal_names, length).parse() for n, text in _lines(source)
    ]


def parse(source: str, signal_names=SIGNAL_NAMES, length=None):
    """Parse a predicate; multi-line sources give a list, one AST per branch."""
    branches = parse_branches(source, signal_names, length)
    if not branches:
        raise DSLSyntaxError("empty predicate source", 1, 1)
    return branches[0] if len(branches) == 1 else branches


def to_source(node) -> str:
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Aggregate):
        return f"{node.op}({node.channel}[{node.start}:{node.stop}])"
    if isinstance(node, Compare):
        return f"{to_source(node.left)} {node.op} {to_source(node.right)}"
    if isinstance(node, And):
        return f"({to_source(node.left)} and {to_source(node.right)})"
    if isinstance(node, Or):
        return f"({to_source(node.left)} or {to_source(node.right)})"
    if isinstance(node, Not):
        return f"not ({to_source(node.child)})"
    raise TypeError(f"not a predicate node: {node!r}")


def _values(m):
    return m.values if isinstance(m, Maneuver) else np.asarray(m)


def _check_slice(node, length):
    if node.stop > length:
        raise SliceRangeError(f"slice [{node.start}:{node.stop}] exceeds signal length {length}")


def _aggregate_np(node, x, names):
    _check_slice(node, x.shape[-1])
    seg = x[names.index(node.channel), node.start:node.stop].astype(float)
    return {"mean": np.mean, "max": np.max, "min": np.min}[node.op](seg)


def eval_bool(ast, m, signal_names=None) -> bool:
    """Reference boolean semantics with strict comparisons."""
    x = _values(m)
    names = tuple(signal_names or getattr(m, "signal_names", SIGNAL_NAMES))

    def value(node):
        if isinstance(node, Const):
            return node.value
        return _aggregate_np(node, x, names)

    def ev(node):
        if isinstance(node, Compare):
            a, b = value(node.left), value(node.right)
            return bool(a < b) if node.op == "<" else bool(a > b)
        if isinstance(node, And):
            return ev(node.left) and ev(node.right)
        if isinstance(node, Or):
            return ev(node.left) or ev(node.right)
        if isinstance(node, Not):
            return not ev(node.child)
        raise TypeError(f"not a predicate node: {node!r}")

    return ev(ast)


def lt(a, b):
    return a - b


def gt(a, b):
    return b - a


def and_(c, d):
    return torch.maximum(c, d)


def or_(c, d):
    return torch.minimum(c, d)


def not_(c):
    return -c


def _compile(node, names):
    if isinstance(node, Const):
        v = node.value
        return lambda x: torch.full(x.shape[:-2], v, dtype=x.dtype)
    if isinstance(node, Aggregate):
        ch = names.index(node.channel)
        reduce = {"mean": torch.mean, "max": torch.amax, "min": torch.amin}[node.op]

        def agg(x):
            _check_slice(node, x.shape[-1])
            return reduce(x[..., ch, node.start:node.stop], dim=-1)

        return agg
    if isinstance(node, Compare):
        left, right = _compile(node.left, names), _compile(node.right, names)
        diff = lt if node.op == "<" else gt
        return lambda x: diff(left(x), right(x))
    if isinstance(node, And):
        left, right = _compile(node.left, names), _compile(node.right, names)
        return lambda x: and_(left(x), right(x))
    if isinstance(node, Or):
        left, right = _compile(node.left, names), _compile(node.right, names)
        return lambda x: or_(left(x), right(x))
    if isinstance(node, Not):
        child = _compile(node.child, names)
        return lambda x: not_(child(x))
    raise TypeError(f"not a predicate node: {node!r}")


class SearchFn:
    """Maps a maneuver (L, T) or batch (B, L, T) to one indicator per branch."""

    def __init__(self, branches: Sequence[Node], signal_names=SIGNAL_NAMES):
        self.branches = tuple(branches)
        self.signal_names = tuple(signal_names)
        self._fns = [_compile(b, self.signal_names) for b in self.branches]

    @property
    def n_branches(self):
        return len(self.branches)

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        return torch.stack([f(x) for f in self._fns], dim=-1)

    def __repr__(self):
        return f"SearchFn({[to_source(b) for b in self.branches]})"


def compile_indicators(ast, signal_names=SIGNAL_NAMES) -> SearchFn:
    branches = list(ast) if isinstance(ast, (list, tuple)) else [ast]
    return SearchFn(branches, signal_names)


def eval_search(fn: SearchFn, m):
    """Indicator vector for ``m``: a tensor for tensor input, else a numpy array."""
    if isinstance(m, torch.Tensor):
        return fn(m)
    x = torch.from_numpy(np.ascontiguousarray(_values(m)))
    return fn(x).numpy()
