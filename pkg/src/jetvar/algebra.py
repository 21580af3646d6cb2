"""Exact differential-polynomial arithmetic over jet coordinates.

The scalar domain is polynomials with rational coefficients in three kinds of
atoms: base coordinates ``x_i``, jet coordinates ``z_{I,mu}`` (``I`` a sorted
multi-index over base directions, the empty index denoting the fiber
coordinate ``y_mu``), and opaque function symbols carrying a formal
partial-derivative record.  Every expression is kept in a unique canonical
form, so equality and the zero test are structural.

All values are immutable and all operations are pure; everything here can be
shared freely between threads.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Iterable, Mapping, Union


class JetError(Exception):
    """Base class for all domain errors raised by this package."""


class ContextError(JetError):
    """An atom refers to a coordinate outside the ambient context."""


class OrderError(JetError):
    """An operation would need jet coordinates beyond the context's cap."""


class SubstitutionError(JetError):
    """A substitution map is missing a binding for an occurring coordinate."""


Rational = Union[int, Fraction]


# ---------------------------------------------------------------------------
# Multi-indices
# ---------------------------------------------------------------------------

class MultiIndex:
    """A symmetric multi-index: a non-decreasing tuple of base directions.

    The sorted tuple is the canonical representative; two multi-indices are
    equal iff their sorted entry sequences are equal.
    """

    __slots__ = ("entries",)

    def __init__(self, entries: Iterable[int] = ()):
        self.entries = tuple(sorted(entries))

    @property
    def order(self) -> int:
        return len(self.entries)

    def append(self, i: int) -> "MultiIndex":
        return MultiIndex(self.entries + (i,))

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        return isinstance(other, MultiIndex) and self.entries == other.entries

    def __hash__(self):
        return hash(self.entries)

    def __repr__(self):
        return f"MultiIndex{self.entries}"


def _sorted_index(index) -> tuple:
    if isinstance(index, MultiIndex):
        return index.entries
    return tuple(sorted(index))


# ---------------------------------------------------------------------------
# Atoms
# ---------------------------------------------------------------------------

class BaseCoord:
    """Base coordinate x_i, 1-based."""

    __slots__ = ("i", "_key", "_hash")

    def __init__(self, i: int):
        if i < 1:
            raise ContextError(f"base index must be >= 1, got {i}")
        self.i = i
        self._key = (0, i)
        self._hash = hash(self._key)

    def __eq__(self, other):
        return self is other or (isinstance(other, BaseCoord) and other.i == self.i)

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self._key < other._key

    def __repr__(self):
        return f"x{self.i}"


class JetCoord:
    """Jet coordinate z_{I,mu}; the empty index I denotes y_mu itself."""

    __slots__ = ("mu", "index", "_key", "_hash")

    def __init__(self, mu: int, index=()):
        if mu < 1:
            raise ContextError(f"fiber index must be >= 1, got {mu}")
        idx = _sorted_index(index)
        if idx and idx[0] < 1:
            raise ContextError(f"derivative index must be >= 1, got {idx}")
        self.mu = mu
        self.index = idx
        self._key = (1, mu, len(idx), idx)
        self._hash = hash(self._key)

    @property
    def order(self) -> int:
        return len(self.index)

    def __eq__(self, other):
        return self is other or (
            isinstance(other, JetCoord)
            and other.mu == self.mu
            and other.index == self.index
        )

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self._key < other._key

    def __repr__(self):
        if not self.index:
            return f"y{self.mu}"
        return f"y{self.mu}_" + "".join(str(i) for i in self.index)


Coord = Union[BaseCoord, JetCoord]

_BASE_CACHE: dict = {}
_JET_CACHE: dict = {}


def x_(i: int) -> BaseCoord:
    c = _BASE_CACHE.get(i)
    if c is None:
        c = _BASE_CACHE[i] = BaseCoord(i)
    return c


def y_(mu: int) -> JetCoord:
    return z_(mu)


def z_(mu: int, *index) -> JetCoord:
    if len(index) == 1 and isinstance(index[0], (tuple, list, MultiIndex)):
        index = tuple(index[0])
    key = (mu, _sorted_index(index))
    c = _JET_CACHE.get(key)
    if c is None:
        c = _JET_CACHE[key] = JetCoord(mu, key[1])
    return c


class FunctionSymbol:
    """An opaque function of declared order-zero coordinates.

    Arguments must be distinct base or fiber coordinates (no jet coordinates
    of positive order); the argument list fixes the positions that formal
    partial derivatives refer to.
    """

    __slots__ = ("name", "args", "_hash")

    def __init__(self, name: str, args: Iterable[Coord]):
        args = tuple(args)
        if len(set(args)) != len(args):
            raise ContextError(f"function {name}: duplicate arguments")
        for a in args:
            if isinstance(a, JetCoord) and a.order > 0:
                raise ContextError(
                    f"function {name}: argument {a} has positive jet order"
                )
        self.name = name
        self.args = args
        self._hash = hash((name, args))

    def __eq__(self, other):
        return self is other or (
            isinstance(other, FunctionSymbol)
            and other.name == self.name
            and other.args == self.args
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"{self.name}({', '.join(map(repr, self.args))})"


class FuncAtom:
    """A formal partial derivative of a function symbol.

    ``deriv`` is a sorted tuple of argument positions; sorting makes mixed
    partials commute by construction.
    """

    __slots__ = ("symbol", "deriv", "_key", "_hash")

    def __init__(self, symbol: FunctionSymbol, deriv: Iterable[int] = ()):
        deriv = tuple(sorted(deriv))
        for p in deriv:
            if not 0 <= p < len(symbol.args):
                raise ContextError(
                    f"derivative position {p} out of range for {symbol.name}"
                )
        self.symbol = symbol
        self.deriv = deriv
        self._key = (2, symbol.name, deriv)
        self._hash = hash((symbol, deriv))

    def __eq__(self, other):
        return self is other or (
            isinstance(other, FuncAtom)
            and other.symbol == self.symbol
            and other.deriv == self.deriv
        )

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self._key < other._key

    def __repr__(self):
        if not self.deriv:
            return self.symbol.name
        parts = ",".join(repr(self.symbol.args[p]) for p in self.deriv)
        return f"diff({self.symbol.name},{parts})"


Atom = Union[BaseCoord, JetCoord, FuncAtom]


def atom_key(a: Atom) -> tuple:
    return a._key


# ---------------------------------------------------------------------------
# Context
# ---------------------------------------------------------------------------

class JetContext:
    """Ambient dimensions and the jet-order cap.

    Contexts are cheap immutable values; operations that need higher-order
    coordinates work in a bumped copy rather than mutating anything global.
    """

    __slots__ = ("n", "m", "max_order", "functions", "_by_name")

    def __init__(self, n: int, m: int, max_order: int = 1,
                 functions: Iterable[FunctionSymbol] = ()):
        if n < 1 or m < 1:
            raise ContextError("base and fiber dimensions must be >= 1")
        if max_order < 0:
            raise ContextError("max_order must be >= 0")
        self.n = n
        self.m = m
        self.max_order = max_order
        self.functions = tuple(functions)
        self._by_name = {f.name: f for f in self.functions}
        if len(self._by_name) != len(self.functions):
            raise ContextError("duplicate function symbol names")

    def bump(self, k: int = 1) -> "JetContext":
        return JetContext(self.n, self.m, self.max_order + k, self.functions)

    def with_order(self, max_order: int) -> "JetContext":
        if max_order <= self.max_order:
            return self
        return JetContext(self.n, self.m, max_order, self.functions)

    def function(self, name: str) -> FunctionSymbol:
        try:
            return self._by_name[name]
        except KeyError:
            raise ContextError(f"undeclared function symbol {name}") from None

    def base_range(self):
        return range(1, self.n + 1)

    def fiber_range(self):
        return range(1, self.m + 1)

    def multi_indices(self, order: int):
        """All sorted multi-indices of exactly the given order."""
        return itertools.combinations_with_replacement(self.base_range(), order)

    def check_atom(self, a: Atom) -> None:
        if isinstance(a, BaseCoord):
            if a.i > self.n:
                raise ContextError(f"{a!r} out of range for n={self.n}")
        elif isinstance(a, JetCoord):
            if a.mu > self.m:
                raise ContextError(f"{a!r} out of range for m={self.m}")
            if any(i > self.n for i in a.index):
                raise ContextError(f"{a!r} has base index out of range")
            if a.order > self.max_order:
                raise OrderError(
                    f"{a!r} exceeds max_order={self.max_order}"
                )
        elif isinstance(a, FuncAtom):
            declared = self._by_name.get(a.symbol.name)
            if declared is None or declared != a.symbol:
                raise ContextError(
                    f"function symbol {a.symbol.name} not declared in context"
                )
            for arg in a.symbol.args:
                if isinstance(arg, FuncAtom):
                    raise ContextError("function arguments must be coordinates")
                self.check_atom(arg)
        else:
            raise ContextError(f"unknown atom {a!r}")

    def __eq__(self, other):
        return (
            isinstance(other, JetContext)
            and (self.n, self.m, self.max_order, self.functions)
            == (other.n, other.m, other.max_order, other.functions)
        )

    def __hash__(self):
        return hash((self.n, self.m, self.max_order, self.functions))

    def __repr__(self):
        return f"JetContext(n={self.n}, m={self.m}, max_order={self.max_order})"


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

# A monomial is a tuple of (atom, power) pairs, sorted by atom key, powers >= 1.
Monomial = tuple

_ONE_MONO: Monomial = ()


def _mono_key(mono: Monomial) -> tuple:
    return tuple((a._key, p) for a, p in mono)


def _mono_mul(m1: Monomial, m2: Monomial) -> Monomial:
    if not m1:
        return m2
    if not m2:
        return m1
    out = []
    i = j = 0
    while i < len(m1) and j < len(m2):
        a1, p1 = m1[i]
        a2, p2 = m2[j]
        k1, k2 = a1._key, a2._key
        if k1 == k2:
            out.append((a1, p1 + p2))
            i += 1
            j += 1
        elif k1 < k2:
            out.append(m1[i])
            i += 1
        else:
            out.append(m2[j])
            j += 1
    out.extend(m1[i:])
    out.extend(m2[j:])
    return tuple(out)


def _mono_remove(mono: Monomial, atom: Atom) -> Monomial:
    """Divide the monomial by one power of ``atom`` (must occur)."""
    out = []
    for a, p in mono:
        if a == atom:
            if p > 1:
                out.append((a, p - 1))
        else:
            out.append((a, p))
    return tuple(out)


class Expr:
    """A differential polynomial in canonical form.

    ``terms`` is a tuple of (monomial, coefficient) pairs sorted by monomial
    key, with no zero coefficients and no duplicate monomials.  Structural
    equality of canonical forms is expression equality, which makes the zero
    test decidable.
    """

    __slots__ = ("terms", "_hash")

    def __init__(self, terms):
        self.terms = terms
        self._hash = None

    # -- constructors ------------------------------------------------------

    @staticmethod
    def _from_dict(d: dict) -> "Expr":
        items = [(m, c) for m, c in d.items() if c != 0]
        items.sort(key=lambda mc: _mono_key(mc[0]))
        return Expr(tuple(items))

    @staticmethod
    def const(c: Rational) -> "Expr":
        c = Fraction(c)
        if c == 0:
            return ZERO
        return Expr((((), c),))

    @staticmethod
    def atom(a: Atom) -> "Expr":
        return Expr(((((a, 1),), Fraction(1)),))

    # -- predicates --------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return not self.terms or (len(self.terms) == 1 and not self.terms[0][0])

    def constant_value(self) -> Fraction:
        if not self.terms:
            return Fraction(0)
        if len(self.terms) == 1 and not self.terms[0][0]:
            return self.terms[0][1]
        raise JetError("expression is not a constant")

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, (Expr, int, Fraction, BaseCoord, JetCoord, FuncAtom)):
            return NotImplemented
        other = as_expr(other)
        d = dict(self.terms)
        for m, c in other.terms:
            nc = d.get(m, 0) + c
            if nc:
                d[m] = nc
            elif m in d:
                del d[m]
        return Expr._from_dict(d)

    __radd__ = __add__

    def __neg__(self):
        return Expr(tuple((m, -c) for m, c in self.terms))

    def __sub__(self, other):
        if not isinstance(other, (Expr, int, Fraction, BaseCoord, JetCoord, FuncAtom)):
            return NotImplemented
        return self + (-as_expr(other))

    def __rsub__(self, other):
        return as_expr(other) + (-self)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            if other == 0:
                return ZERO
            q = Fraction(other)
            return Expr(tuple((m, c * q) for m, c in self.terms))
        if not isinstance(other, (Expr, BaseCoord, JetCoord, FuncAtom)):
            return NotImplemented
        other = as_expr(other)
        d: dict = {}
        for m1, c1 in self.terms:
            for m2, c2 in other.terms:
                m = _mono_mul(m1, m2)
                nc = d.get(m, 0) + c1 * c2
                if nc:
                    d[m] = nc
                elif m in d:
                    del d[m]
        return Expr._from_dict(d)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise JetError("only non-negative integer powers are supported")
        out = ONE
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base if k > 1 else base
            k >>= 1
        return out

    def __truediv__(self, other):
        if isinstance(other, Expr):
            other = other.constant_value()
        q = Fraction(other)
        if q == 0:
            raise ZeroDivisionError("division by zero")
        return self * Fraction(1, 1) * Fraction(q.denominator, q.numerator)

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Expr.const(other)
        return isinstance(other, Expr) and self.terms == other.terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.terms)
        return self._hash

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for m, c in self.terms:
            mono = "*".join(
                repr(a) + (f"^{p}" if p > 1 else "") for a, p in m
            )
            if not mono:
                parts.append(str(c))
            elif c == 1:
                parts.append(mono)
            elif c == -1:
                parts.append("-" + mono)
            else:
                parts.append(f"{c}*{mono}")
        return " + ".join(parts).replace("+ -", "- ")

    # -- structure ---------------------------------------------------------

    def atoms(self):
        """All distinct atoms occurring in the expression."""
        seen = set()
        for m, _ in self.terms:
            for a, _p in m:
                if a not in seen:
                    seen.add(a)
                    yield a

    def order(self) -> int:
        """Maximum jet order of any coordinate occurring (0 if none)."""
        best = 0
        for a in self.atoms():
            if isinstance(a, JetCoord) and a.order > best:
                best = a.order
        return best

    def depends_on_fiber(self) -> bool:
        """True if any fiber coordinate occurs, directly or as a function arg."""
        for a in self.atoms():
            if isinstance(a, JetCoord):
                return True
            if isinstance(a, FuncAtom):
                if any(isinstance(arg, JetCoord) for arg in a.symbol.args):
                    return True
        return False


ZERO = Expr(())
ONE = Expr((((), Fraction(1)),))


def as_expr(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, Fraction)):
        return Expr.const(v)
    if isinstance(v, (BaseCoord, JetCoord, FuncAtom)):
        return Expr.atom(v)
    raise JetError(f"cannot interpret {v!r} as an expression")


def normalize(raw, ctx: JetContext) -> Expr:
    """Canonicalize ``raw`` and validate every atom against the context.

    Idempotent: canonical forms pass through unchanged.
    """
    e = as_expr(raw)
    for a in e.atoms():
        ctx.check_atom(a)
    return e


# ---------------------------------------------------------------------------
# Differentiation and substitution
# ---------------------------------------------------------------------------

def _atom_partial(a: Atom, c: Coord):
    """d(atom)/d(coordinate): 1, 0, or a new function atom."""
    if isinstance(a, FuncAtom):
        try:
            pos = a.symbol.args.index(c)
        except ValueError:
            return ZERO
        return Expr.atom(FuncAtom(a.symbol, a.deriv + (pos,)))
    if a == c:
        return ONE
    return ZERO


def partial(e: Expr, c: Coord) -> Expr:
    """Partial derivative treating every canonical atom as independent."""
    d: dict = {}
    for mono, coeff in e.terms:
        for a, p in mono:
            da = _atom_partial(a, c)
            if da.is_zero():
                continue
            rest = _mono_remove(mono, a)
            for m2, c2 in (da * Expr(((rest, coeff * p),))).terms:
                nc = d.get(m2, 0) + c2
                if nc:
                    d[m2] = nc
                elif m2 in d:
                    del d[m2]
    return Expr._from_dict(d)


def _atom_total(a: Atom, i: int) -> Expr:
    """Total derivative of a single atom along base direction i."""
    if isinstance(a, BaseCoord):
        return ONE if a.i == i else ZERO
    if isinstance(a, JetCoord):
        return Expr.atom(z_(a.mu, a.index + (i,)))
    # Function atom: chain rule over its declared arguments.
    out = ZERO
    for pos, arg in enumerate(a.symbol.args):
        darg = _atom_total(arg, i)
        if darg.is_zero():
            continue
        out = out + Expr.atom(FuncAtom(a.symbol, a.deriv + (pos,))) * darg
    return out


def derivative_order_needed(e: Expr) -> int:
    """Jet order of the coordinates D_i would introduce."""
    best = 0
    for a in e.atoms():
        if isinstance(a, JetCoord):
            best = max(best, a.order + 1)
        elif isinstance(a, FuncAtom):
            if any(isinstance(arg, JetCoord) for arg in a.symbol.args):
                best = max(best, 1)
    return best


def total_derivative(e: Expr, i: int, ctx: JetContext) -> Expr:
    """The formal derivative D_i: y-coordinates differentiate to z's.

    Raises OrderError when the result would need coordinates beyond the
    context cap; bump the context to go higher.
    """
    if not 1 <= i <= ctx.n:
        raise ContextError(f"base direction {i} out of range for n={ctx.n}")
    if derivative_order_needed(e) > ctx.max_order:
        raise OrderError(
            f"total derivative needs order {derivative_order_needed(e)} "
            f"coordinates but max_order={ctx.max_order}; raise max_order"
        )
    d: dict = {}
    for mono, coeff in e.terms:
        for a, p in mono:
            da = _atom_total(a, i)
            if da.is_zero():
                continue
            rest = _mono_remove(mono, a)
            for m2, c2 in (da * Expr(((rest, coeff * p),))).terms:
                nc = d.get(m2, 0) + c2
                if nc:
                    d[m2] = nc
                elif m2 in d:
                    del d[m2]
    return Expr._from_dict(d)


def total_derivative_multi(e: Expr, index, ctx: JetContext) -> Expr:
    """Iterated total derivative D_I (order of application is immaterial)."""
    out = e
    for i in _sorted_index(index):
        out = total_derivative(out, i, ctx)
    return out


def substitute(e: Expr, sigma: Mapping[Coord, "Expr"]) -> Expr:
    """Homomorphic image under a coordinate substitution, re-normalized.

    The map must cover every coordinate occurring in ``e``.  Function atoms
    pass through unchanged: their argument lists are declarations, not
    occurrences.
    """
    out = ZERO
    for mono, coeff in e.terms:
        term = Expr.const(coeff)
        for a, p in mono:
            if isinstance(a, FuncAtom):
                term = term * Expr.atom(a) ** p
            else:
                if a not in sigma:
                    raise SubstitutionError(f"no binding for {a!r}")
                term = term * as_expr(sigma[a]) ** p
        out = out + term
    return out
