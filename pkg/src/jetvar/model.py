"""Model-file parsing and canonical emission.

A model is a sectioned key-value file: ``[section]`` headers followed by
``name = expression`` lines, ``#`` comments.  The expression grammar is the
one documented in docs/grammar.ebnf; the emitter prints exactly that grammar
back, in canonical order, so ``emit(parse(emit(m))) == emit(m)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field as dataclass_field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from .algebra import (
    Expr,
    FuncAtom,
    FunctionSymbol,
    JetContext,
    JetError,
    ZERO,
    normalize,
    x_,
    z_,
)
from .fields import ProjectableField, TensorType
from .forms import DiffForm, PolySection, wedge
from .render import atom_text, expr_text, form_text
from .variational import Lagrangian


class ModelError(JetError):
    """Syntax or consistency error in a model file, with location."""

    def __init__(self, message: str, line: int = 0, column: int = 0,
                 expected: Tuple[str, ...] = ()):
        loc = f" at line {line}, column {column}" if line else ""
        hint = f" (expected {', '.join(expected)})" if expected else ""
        super().__init__(f"{message}{loc}{hint}")
        self.line = line
        self.column = column
        self.expected = expected


# ---------------------------------------------------------------------------
# Expression tokenizer / parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|"
    r"(?P<op>[-+*/^(),]))"
)

_COORD_X = re.compile(r"^x([1-9])$")
_COORD_Y = re.compile(r"^y([1-9][0-9]?)(?:_([1-9]+))?$")


@dataclass
class _Token:
    kind: str       # num | ident | op | end
    text: str
    column: int


def _tokenize(text: str, line: int) -> List[_Token]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            break
        out.append(
            _Token(m.lastgroup, m.group(m.lastgroup), m.start(m.lastgroup) + 1)
        )
        pos = m.end()
    if text[pos:].strip():
        bad = text[pos:].lstrip()[0]
        raise ModelError(f"unexpected character {bad!r}", line, pos + 1)
    out.append(_Token("end", "", len(text) + 1))
    return out


class _ExprParser:
    """Recursive-descent parser producing Expr or DiffForm values."""

    def __init__(self, tokens: List[_Token], ctx: JetContext, line: int,
                 allow_forms: bool, warnings: List[str]):
        self.tokens = tokens
        self.i = 0
        self.ctx = ctx
        self.line = line
        self.allow_forms = allow_forms
        self.warnings = warnings

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str) -> None:
        tok = self.next()
        if tok.kind != "op" or tok.text != op:
            raise ModelError(
                f"unexpected token {tok.text!r}", self.line, tok.column,
                expected=(repr(op),),
            )

    def error(self, message: str, tok: _Token, expected=()):
        raise ModelError(message, self.line, tok.column, expected)

    # grammar: expr := term (('+'|'-') term)*
    def parse(self):
        value = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            self.error(f"trailing input {tok.text!r}", tok)
        return value

    def expr(self):
        value = self.term()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in "+-":
                self.next()
                rhs = self.term()
                try:
                    value = value + rhs if tok.text == "+" else value - rhs
                except (JetError, TypeError):
                    self.error("cannot add values of different kind", tok)
                if value is NotImplemented:
                    self.error("cannot add values of different kind", tok)
            else:
                return value

    def term(self):
        value = self.unary()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in "*/":
                self.next()
                rhs = self.unary()
                if tok.text == "*":
                    if isinstance(value, DiffForm) or isinstance(rhs, DiffForm):
                        lhs_f = value if isinstance(value, DiffForm) \
                            else DiffForm.of_expr(value)
                        rhs_f = rhs if isinstance(rhs, DiffForm) \
                            else DiffForm.of_expr(rhs)
                        value = wedge(lhs_f, rhs_f)
                    else:
                        value = value * rhs
                else:
                    if isinstance(rhs, DiffForm) or isinstance(value, DiffForm):
                        self.error("division is not defined for forms", tok)
                    try:
                        value = value / rhs
                    except (JetError, ZeroDivisionError) as exc:
                        self.error(str(exc), tok)
            else:
                return value

    def unary(self):
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.next()
            return -self.unary()
        if tok.kind == "op" and tok.text == "+":
            self.next()
            return self.unary()
        return self.power()

    def power(self):
        base = self.primary()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.next()
            neg = False
            etok = self.next()
            if etok.kind == "op" and etok.text == "-":
                neg = True
                etok = self.next()
            if etok.kind != "num":
                self.error("exponent must be an integer", etok,
                           expected=("integer",))
            k = int(etok.text)
            if isinstance(base, DiffForm):
                self.error("powers are not defined for forms", tok)
            if neg:
                try:
                    const = base.constant_value()
                except JetError:
                    self.error("negative powers need a constant base", tok)
                return Expr.const(Fraction(1) / const ** k)
            return base ** k
        return base

    def primary(self):
        tok = self.next()
        if tok.kind == "num":
            return Expr.const(int(tok.text))
        if tok.kind == "op" and tok.text == "(":
            value = self.expr()
            self.expect_op(")")
            return value
        if tok.kind == "ident":
            return self.identifier(tok)
        self.error(f"unexpected token {tok.text!r}", tok,
                   expected=("number", "coordinate", "function", "'('"))

    def identifier(self, tok: _Token):
        name = tok.text
        if name == "diff":
            return self.diff_call(tok)
        coord = self.classify_coord(name, tok)
        if coord is not None:
            return Expr.atom(coord)
        if name.startswith("d") and len(name) > 1:
            inner = self.classify_coord(name[1:], tok)
            if inner is not None:
                if not self.allow_forms:
                    self.error("covectors are only allowed in [forms]", tok)
                return DiffForm.covector(inner)
        try:
            symbol = self.ctx.function(name)
        except JetError:
            self.error(f"undeclared function symbol {name}", tok)
        return Expr.atom(FuncAtom(symbol))

    def classify_coord(self, name: str, tok: _Token):
        m = _COORD_X.match(name)
        if m:
            i = int(m.group(1))
            if i > self.ctx.n:
                self.error(f"base coordinate {name} out of range", tok)
            return x_(i)
        m = _COORD_Y.match(name)
        if m:
            mu = int(m.group(1))
            if mu > self.ctx.m:
                self.error(f"fiber index of {name} out of range", tok)
            digits = m.group(2) or ""
            index = tuple(int(c) for c in digits)
            if any(i > self.ctx.n for i in index):
                self.error(f"derivative index of {name} out of range", tok)
            if len(index) > self.ctx.max_order:
                self.error(
                    f"{name} exceeds the declared order {self.ctx.max_order}",
                    tok,
                )
            if list(index) != sorted(index):
                fixed = "".join(str(i) for i in sorted(index))
                self.warnings.append(
                    f"line {self.line}: y{mu}_{digits} normalized to y{mu}_{fixed}"
                )
            return z_(mu, index)
        return None

    def diff_call(self, tok: _Token):
        self.expect_op("(")
        name_tok = self.next()
        if name_tok.kind != "ident":
            self.error("diff needs a function name", name_tok,
                       expected=("function name",))
        try:
            symbol = self.ctx.function(name_tok.text)
        except JetError:
            self.error(f"undeclared function symbol {name_tok.text}", name_tok)
        deriv = []
        while True:
            sep = self.next()
            if sep.kind == "op" and sep.text == ")":
                break
            if sep.kind != "op" or sep.text != ",":
                self.error("expected ',' or ')'", sep, expected=("','", "')'"))
            arg_tok = self.next()
            coord = None
            if arg_tok.kind == "ident":
                coord = self.classify_coord(arg_tok.text, arg_tok)
            if coord is None:
                self.error("diff arguments must be coordinates", arg_tok)
            try:
                deriv.append(symbol.args.index(coord))
            except ValueError:
                self.error(
                    f"{atom_text(coord)} is not an argument of {symbol.name}",
                    arg_tok,
                )
        if not deriv:
            self.error("diff needs at least one coordinate", tok)
        return Expr.atom(FuncAtom(symbol, deriv))


def parse_expression(text: str, ctx: JetContext, line: int = 0,
                     allow_forms: bool = False,
                     warnings: Optional[List[str]] = None):
    tokens = _tokenize(text, line)
    parser = _ExprParser(tokens, ctx, line, allow_forms,
                         warnings if warnings is not None else [])
    return parser.parse()


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

_SECTIONS = ("space", "tensor_type", "functions", "lagrangian", "fields",
             "forms", "sections")


@dataclass
class ModelFile:
    """Parsed model: ambient space, declarations, and named objects."""

    context: JetContext
    tensor_type: Optional[TensorType] = None
    lagrangian: Optional[Lagrangian] = None
    fields: Dict[str, ProjectableField] = dataclass_field(default_factory=dict)
    forms: Dict[str, DiffForm] = dataclass_field(default_factory=dict)
    sections: Dict[str, PolySection] = dataclass_field(default_factory=dict)
    warnings: List[str] = dataclass_field(default_factory=list)

    def emit(self) -> str:
        """Canonical text; stable under parse-emit round trips."""
        ctx = self.context
        out = ["[space]",
               f"base_dim = {ctx.n}",
               f"fiber_dim = {ctx.m}",
               f"order = {ctx.max_order}"]
        if self.tensor_type is not None:
            out.append("")
            out.append("[tensor_type]")
            out.append(f"variance = {self.tensor_type.slots}")
            out.append(f"cov_sign = {self.tensor_type.cov_sign}")
        if ctx.functions:
            out.append("")
            out.append("[functions]")
            for f in sorted(ctx.functions, key=lambda f: f.name):
                args = ", ".join(atom_text(a) for a in f.args)
                out.append(f"{f.name} = {args}")
        if self.lagrangian is not None:
            out.append("")
            out.append("[lagrangian]")
            out.append(f"L = {expr_text(self.lagrangian.density)}")
        if self.fields:
            out.append("")
            out.append("[fields]")
            for name in sorted(self.fields):
                fld = self.fields[name]
                for i, e in enumerate(fld.xi, start=1):
                    if not e.is_zero():
                        out.append(f"{name}.x{i} = {expr_text(e)}")
                for mu, e in enumerate(fld.eta, start=1):
                    if not e.is_zero():
                        out.append(f"{name}.y{mu} = {expr_text(e)}")
                if all(e.is_zero() for e in fld.xi) and \
                        all(e.is_zero() for e in fld.eta):
                    out.append(f"{name}.y1 = 0")
        if self.forms:
            out.append("")
            out.append("[forms]")
            for name in sorted(self.forms):
                out.append(f"{name} = {form_text(self.forms[name])}")
        if self.sections:
            out.append("")
            out.append("[sections]")
            for name in sorted(self.sections):
                sec = self.sections[name]
                for mu, e in enumerate(sec.components, start=1):
                    out.append(f"{name}.y{mu} = {expr_text(e)}")
        return "\n".join(out) + "\n"


_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_COMPONENT_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\.(x[1-9]|y[1-9][0-9]?)$")


def _split_sections(text: str):
    sections: Dict[str, List[Tuple[int, str]]] = {}
    current: Optional[str] = None
    order: List[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ModelError("unterminated section header", lineno, 1)
            name = stripped[1:-1].strip()
            if name not in _SECTIONS:
                raise ModelError(
                    f"unknown section [{name}]", lineno, 1,
                    expected=tuple(f"[{s}]" for s in _SECTIONS),
                )
            current = name
            sections.setdefault(name, [])
            order.append(name)
            continue
        if current is None:
            raise ModelError("content before any [section] header", lineno, 1)
        if "=" not in line:
            raise ModelError("expected 'name = value'", lineno, 1,
                             expected=("'='",))
        sections[current].append((lineno, line))
    return sections


def _parse_assignments(rows):
    out = []
    for lineno, line in rows:
        key, _, value = line.partition("=")
        out.append((lineno, key.strip(), value.strip()))
    return out


def parse_model(text: str, order_override: Optional[int] = None) -> ModelFile:
    """Parse a model file or raise ModelError with a location diagnostic.

    ``order_override`` replaces the declared order cap before any expression
    is validated against it.
    """
    sections = _split_sections(text)
    if "space" not in sections:
        raise ModelError("missing [space] section", 1, 1)
    space: Dict[str, int] = {}
    for lineno, key, value in _parse_assignments(sections["space"]):
        if key not in ("base_dim", "fiber_dim", "order"):
            raise ModelError(f"unknown space key {key!r}", lineno, 1,
                             expected=("base_dim", "fiber_dim", "order"))
        try:
            space[key] = int(value)
        except ValueError:
            raise ModelError(f"{key} must be an integer", lineno, 1) from None
    for key in ("base_dim", "fiber_dim", "order"):
        if key not in space:
            raise ModelError(f"[space] is missing {key}", 1, 1)
    if order_override is not None:
        space["order"] = order_override
    if space["base_dim"] > 9:
        raise ModelError("base_dim must be at most 9 (single-digit indices)", 1, 1)
    if space["fiber_dim"] > 99:
        raise ModelError("fiber_dim must be at most 99", 1, 1)

    tensor_type = None
    if "tensor_type" in sections:
        variance = None
        cov_sign = 1
        for lineno, key, value in _parse_assignments(sections["tensor_type"]):
            if key == "variance":
                variance = value
            elif key == "cov_sign":
                if value not in ("1", "+1", "-1"):
                    raise ModelError("cov_sign must be +1 or -1", lineno, 1)
                cov_sign = int(value)
            else:
                raise ModelError(f"unknown tensor_type key {key!r}", lineno, 1,
                                 expected=("variance", "cov_sign"))
        if variance is None:
            raise ModelError("[tensor_type] needs a variance string", 1, 1)
        try:
            tensor_type = TensorType(variance, cov_sign)
        except JetError as exc:
            raise ModelError(str(exc), 1, 1) from None

    warnings: List[str] = []
    # functions need a provisional context for argument parsing
    base_ctx = JetContext(space["base_dim"], space["fiber_dim"], space["order"])
    functions = []
    for lineno, key, value in _parse_assignments(sections.get("functions", [])):
        if not _NAME_RE.match(key):
            raise ModelError(f"invalid function name {key!r}", lineno, 1)
        args = []
        for chunk in value.split(","):
            chunk = chunk.strip()
            tokens = _tokenize(chunk, lineno)
            parser = _ExprParser(tokens, base_ctx, lineno, False, warnings)
            tok = parser.next()
            coord = parser.classify_coord(tok.text, tok) \
                if tok.kind == "ident" else None
            if coord is None or parser.peek().kind != "end":
                raise ModelError(
                    "function arguments must be order-0 coordinates",
                    lineno, tok.column,
                )
            if getattr(coord, "order", 0) and coord.order > 0:
                raise ModelError(
                    "function arguments must have jet order 0",
                    lineno, tok.column,
                )
            args.append(coord)
        try:
            functions.append(FunctionSymbol(key, args))
        except JetError as exc:
            raise ModelError(str(exc), lineno, 1) from None

    ctx = JetContext(space["base_dim"], space["fiber_dim"], space["order"],
                     functions)
    if tensor_type is not None and ctx.m != tensor_type.fiber_dim(ctx.n):
        raise ModelError(
            f"fiber_dim {ctx.m} does not match tensor type "
            f"(expected {tensor_type.fiber_dim(ctx.n)})", 1, 1,
        )

    model = ModelFile(context=ctx, tensor_type=tensor_type, warnings=warnings)

    rows = _parse_assignments(sections.get("lagrangian", []))
    if rows:
        if len(rows) > 1:
            raise ModelError("only one Lagrangian is allowed", rows[1][0], 1)
        lineno, key, value = rows[0]
        if key != "L":
            raise ModelError("the Lagrangian key must be 'L'", lineno, 1,
                             expected=("L",))
        e = parse_expression(value, ctx, lineno, False, warnings)
        model.lagrangian = Lagrangian(normalize(e, ctx))

    field_parts: Dict[str, Dict[str, Expr]] = {}
    for lineno, key, value in _parse_assignments(sections.get("fields", [])):
        m = _COMPONENT_RE.match(key)
        if not m:
            raise ModelError(
                f"field components look like NAME.x1 or NAME.y1, got {key!r}",
                lineno, 1,
            )
        name, comp = m.group(1), m.group(2)
        e = parse_expression(value, ctx, lineno, False, warnings)
        field_parts.setdefault(name, {})[comp] = normalize(e, ctx)
    for name, comps in field_parts.items():
        xi = [comps.get(f"x{i}", ZERO) for i in ctx.base_range()]
        eta = [comps.get(f"y{mu}", ZERO) for mu in ctx.fiber_range()]
        for comp in comps:
            idx = int(comp[1:])
            if comp[0] == "x" and idx > ctx.n or comp[0] == "y" and idx > ctx.m:
                raise ModelError(f"component {name}.{comp} out of range", 0, 0)
        try:
            model.fields[name] = ProjectableField(xi, eta)
        except JetError as exc:
            raise ModelError(f"field {name}: {exc}", 0, 0) from None

    for lineno, key, value in _parse_assignments(sections.get("forms", [])):
        if not _NAME_RE.match(key):
            raise ModelError(f"invalid form name {key!r}", lineno, 1)
        v = parse_expression(value, ctx, lineno, True, warnings)
        if not isinstance(v, DiffForm):
            v = DiffForm.of_expr(v)
        model.forms[key] = v

    section_parts: Dict[str, Dict[int, Expr]] = {}
    for lineno, key, value in _parse_assignments(sections.get("sections", [])):
        m = _COMPONENT_RE.match(key)
        if not m or m.group(2)[0] != "y":
            raise ModelError(
                f"section components look like NAME.y1, got {key!r}", lineno, 1,
            )
        name, comp = m.group(1), int(m.group(2)[1:])
        if comp > ctx.m:
            raise ModelError(f"component {key} out of range", lineno, 1)
        e = parse_expression(value, ctx, lineno, False, warnings)
        section_parts.setdefault(name, {})[comp] = normalize(e, ctx)
    for name, comps in section_parts.items():
        try:
            model.sections[name] = PolySection(
                [comps.get(mu, ZERO) for mu in ctx.fiber_range()]
            )
        except JetError as exc:
            raise ModelError(f"section {name}: {exc}", 0, 0) from None

    return model
