"""Exterior algebra of differential forms over jet coordinates.

A form is a canonical sum of terms ``coefficient * dc_1 ^ ... ^ dc_p`` where
the covector basis is a strictly increasing tuple of coordinates under the
fixed total order (base coordinates first, then jet coordinates by fiber and
index).  All signs derive from sorting permutation parity, so form equality
is decidable.
"""

from __future__ import annotations

from typing import Iterable, Mapping

from .algebra import (
    BaseCoord,
    Coord,
    Expr,
    FuncAtom,
    JetContext,
    JetCoord,
    JetError,
    ONE,
    ZERO,
    as_expr,
    atom_key,
    partial,
    substitute,
    x_,
    z_,
)


class DegreeError(JetError):
    """Operands have incompatible or unsupported form degrees."""


def _sort_basis(basis):
    """Sort covectors, returning (sorted tuple, sign); sign 0 if repeated."""
    basis = list(basis)
    for a in basis:
        if isinstance(a, FuncAtom):
            raise DegreeError("function atoms cannot serve as covectors")
    sign = 1
    # insertion sort; bases are tiny
    for i in range(1, len(basis)):
        j = i
        while j > 0 and atom_key(basis[j]) < atom_key(basis[j - 1]):
            basis[j], basis[j - 1] = basis[j - 1], basis[j]
            sign = -sign
            j -= 1
    for a, b in zip(basis, basis[1:]):
        if a == b:
            return None, 0
    return tuple(basis), sign


class DiffForm:
    """Exterior form with Expr coefficients; degree-0 forms wrap a scalar."""

    __slots__ = ("degree", "terms", "_hash")

    def __init__(self, degree: int, terms):
        self.degree = degree
        self.terms = terms
        self._hash = None

    @staticmethod
    def from_terms(degree: int, items: Iterable) -> "DiffForm":
        d: dict = {}
        for basis, coeff in items:
            coeff = as_expr(coeff)
            if coeff.is_zero():
                continue
            if len(basis) != degree:
                raise DegreeError(
                    f"term of degree {len(basis)} in a degree-{degree} form"
                )
            sorted_basis, sign = _sort_basis(basis)
            if sign == 0:
                continue
            if sign < 0:
                coeff = -coeff
            prev = d.get(sorted_basis)
            coeff = coeff if prev is None else prev + coeff
            if coeff.is_zero():
                d.pop(sorted_basis, None)
            else:
                d[sorted_basis] = coeff
        return DiffForm(degree, tuple(sorted(d.items(), key=lambda kv: tuple(atom_key(a) for a in kv[0]))))

    @staticmethod
    def zero(degree: int = 0) -> "DiffForm":
        return DiffForm(degree, ())

    @staticmethod
    def of_expr(e) -> "DiffForm":
        e = as_expr(e)
        if e.is_zero():
            return DiffForm(0, ())
        return DiffForm(0, (((), e),))

    @staticmethod
    def covector(c: Coord) -> "DiffForm":
        return DiffForm(1, (((c,), ONE),))

    # -- basic structure ----------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, basis) -> Expr:
        sorted_basis, sign = _sort_basis(basis)
        if sign == 0:
            return ZERO
        for b, c in self.terms:
            if b == sorted_basis:
                return c if sign > 0 else -c
        return ZERO

    def as_expr(self) -> Expr:
        if self.degree != 0:
            raise DegreeError("only degree-0 forms convert to scalars")
        return self.terms[0][1] if self.terms else ZERO

    def order(self) -> int:
        best = 0
        for basis, coeff in self.terms:
            best = max(best, coeff.order())
            for c in basis:
                if isinstance(c, JetCoord):
                    best = max(best, c.order)
        return best

    def atoms(self):
        seen = set()
        for basis, coeff in self.terms:
            for a in coeff.atoms():
                if a not in seen:
                    seen.add(a)
                    yield a

    def covectors(self):
        seen = set()
        for basis, _ in self.terms:
            for c in basis:
                if c not in seen:
                    seen.add(c)
                    yield c

    # -- linear operations --------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, DiffForm):
            if self.degree != 0:
                raise DegreeError("cannot add a scalar to a positive-degree form")
            other = DiffForm.of_expr(other)
        if self.degree != other.degree:
            if self.is_zero():
                return other
            if other.is_zero():
                return self
            raise DegreeError("cannot add forms of different degree")
        return DiffForm.from_terms(self.degree, list(self.terms) + list(other.terms))

    def __neg__(self):
        return DiffForm(self.degree, tuple((b, -c) for b, c in self.terms))

    def __sub__(self, other):
        return self + (-other if isinstance(other, DiffForm) else -as_expr(other))

    def __mul__(self, other):
        """Scale by a scalar, or wedge with another form."""
        if isinstance(other, DiffForm):
            return wedge(self, other)
        other = as_expr(other)
        return DiffForm.from_terms(
            self.degree, ((b, c * other) for b, c in self.terms)
        )

    def __rmul__(self, other):
        return self * other

    def __eq__(self, other):
        return (
            isinstance(other, DiffForm)
            and self.degree == other.degree
            and self.terms == other.terms
        )

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.degree, self.terms))
        return self._hash

    def __repr__(self):
        if not self.terms:
            return f"0 (degree {self.degree})"
        parts = []
        for basis, coeff in self.terms:
            b = "^".join("d" + repr(c) for c in basis)
            if not b:
                parts.append(repr(coeff))
            else:
                parts.append(f"({coeff!r}) {b}")
        return " + ".join(parts)


def wedge(a: DiffForm, b: DiffForm) -> DiffForm:
    """Exterior product; bilinear, associative, graded-commutative."""
    items = []
    for b1, c1 in a.terms:
        for b2, c2 in b.terms:
            items.append((b1 + b2, c1 * c2))
    return DiffForm.from_terms(a.degree + b.degree, items)


def wedge_all(forms: Iterable[DiffForm]) -> DiffForm:
    out = None
    for f in forms:
        out = f if out is None else wedge(out, f)
    if out is None:
        return DiffForm.of_expr(1)
    return out


def _dependent_coords(e: Expr):
    """Coordinates the expression depends on, through function args too."""
    seen = set()
    for a in e.atoms():
        if isinstance(a, FuncAtom):
            for arg in a.symbol.args:
                seen.add(arg)
        else:
            seen.add(a)
    return sorted(seen, key=atom_key)


def ext_d(a: DiffForm) -> DiffForm:
    """Exterior differential; d(fa) = df ^ a + f da and d(d(a)) = 0."""
    items = []
    for basis, coeff in a.terms:
        for c in _dependent_coords(coeff):
            dc = partial(coeff, c)
            if not dc.is_zero():
                items.append(((c,) + basis, dc))
    return DiffForm.from_terms(a.degree + 1, items)


class JetField:
    """A vector field on a jet space: a finitely supported map Coord -> Expr."""

    __slots__ = ("components", "_comp")

    def __init__(self, components: Mapping[Coord, Expr]):
        comp = {c: as_expr(e) for c, e in components.items()
                if not as_expr(e).is_zero()}
        self._comp = comp
        self.components = tuple(sorted(comp.items(), key=lambda kv: atom_key(kv[0])))

    def component(self, c: Coord) -> Expr:
        return self._comp.get(c, ZERO)

    def apply(self, e: Expr) -> Expr:
        """Act as a derivation on a scalar (chain rule through function args)."""
        out = ZERO
        for c in _dependent_coords(e):
            comp = self._comp.get(c)
            if comp is None:
                continue
            de = partial(e, c)
            if not de.is_zero():
                out = out + comp * de
        return out

    def __eq__(self, other):
        return isinstance(other, JetField) and self.components == other.components

    def __hash__(self):
        return hash(self.components)

    def __repr__(self):
        if not self.components:
            return "0-field"
        return " + ".join(f"({e!r}) d/d{c!r}" for c, e in self.components)


def contract(xi: JetField, a: DiffForm) -> DiffForm:
    """Interior product i(xi); an antiderivation of degree -1."""
    if a.degree < 1:
        raise DegreeError("cannot contract a degree-0 form")
    items = []
    for basis, coeff in a.terms:
        for j, c in enumerate(basis):
            comp = xi.component(c)
            if comp.is_zero():
                continue
            sign = -1 if j % 2 else 1
            items.append((basis[:j] + basis[j + 1:], coeff * comp * sign))
    return DiffForm.from_terms(a.degree - 1, items)


def lie_derivative(xi: JetField, a: DiffForm) -> DiffForm:
    """Cartan formula: L_xi = i(xi) d + d i(xi)."""
    out = ext_d(contract(xi, a)) if a.degree >= 1 else DiffForm.zero(0)
    da = ext_d(a)
    if not da.is_zero():
        out = out + contract(xi, da)
    elif out.is_zero():
        out = DiffForm.zero(a.degree)
    return out


class PolySection:
    """A polynomial local section: one base-coordinate Expr per fiber index."""

    __slots__ = ("components",)

    def __init__(self, components: Iterable[Expr]):
        comps = tuple(as_expr(e) for e in components)
        for e in comps:
            for a in e.atoms():
                if not isinstance(a, BaseCoord):
                    raise JetError(
                        f"section components must be base-only, found {a!r}"
                    )
        self.components = comps

    @property
    def m(self) -> int:
        return len(self.components)

    def jet(self, mu: int, index) -> Expr:
        """Iterated base-partial of the mu-th component."""
        e = self.components[mu - 1]
        for i in index:
            e = partial(e, x_(i))
        return e

    def __repr__(self):
        return f"PolySection{self.components}"


def section_substitution(gamma: PolySection, ctx: JetContext, order: int):
    """Coordinate map sending each jet coordinate to the matching derivative."""
    sigma = {}
    for i in ctx.base_range():
        sigma[x_(i)] = Expr.atom(x_(i))
    for mu in ctx.fiber_range():
        for s in range(order + 1):
            for index in ctx.multi_indices(s):
                sigma[z_(mu, index)] = gamma.jet(mu, index)
    return sigma


def pullback_by_section(a: DiffForm, gamma: PolySection, ctx: JetContext) -> DiffForm:
    """Pull a form on a jet space back along the prolonged section.

    Coefficients must not contain function atoms with fiber arguments: those
    do not compose polynomially with a section.
    """
    if gamma.m != ctx.m:
        raise JetError("section fiber dimension does not match context")
    for atom in a.atoms():
        if isinstance(atom, FuncAtom):
            if any(isinstance(arg, JetCoord) for arg in atom.symbol.args):
                raise JetError(
                    "cannot pull back a form whose coefficients contain "
                    f"fiber-dependent function symbol {atom.symbol.name}"
                )
    sigma = section_substitution(gamma, ctx, a.order())
    items = []
    for basis, coeff in a.terms:
        new_coeff = substitute(coeff, sigma)
        if new_coeff.is_zero():
            continue
        factors = []
        for c in basis:
            if isinstance(c, BaseCoord):
                factors.append(DiffForm.covector(c))
            else:
                one_form = DiffForm.from_terms(1, (
                    ((x_(k),), partial(sigma[c], x_(k)))
                    for k in ctx.base_range()
                ))
                factors.append(one_form)
        term = DiffForm.of_expr(new_coeff)
        for f in factors:
            term = wedge(term, f)
        items.extend(term.terms)
    return DiffForm.from_terms(a.degree, items)


# ---------------------------------------------------------------------------
# Standard forms
# ---------------------------------------------------------------------------

def omega0(ctx: JetContext) -> DiffForm:
    """The coordinate volume form dx_1 ^ ... ^ dx_n."""
    return DiffForm.from_terms(
        ctx.n, [(tuple(x_(i) for i in ctx.base_range()), ONE)]
    )


def contact_form(mu: int, ctx: JetContext) -> DiffForm:
    """dy_mu - z_{k,mu} dx_k."""
    items = [((z_(mu),), ONE)]
    for k in ctx.base_range():
        items.append(((x_(k),), -Expr.atom(z_(mu, (k,)))))
    return DiffForm.from_terms(1, items)


def contact_form_jet(mu: int, index, ctx: JetContext) -> DiffForm:
    """dz_{I,mu} - z_{I+k,mu} dx_k."""
    index = tuple(sorted(index))
    items = [((z_(mu, index),), ONE)]
    for k in ctx.base_range():
        items.append(((x_(k),), -Expr.atom(z_(mu, index + (k,)))))
    return DiffForm.from_terms(1, items)
