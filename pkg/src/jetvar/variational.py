"""The variational operators: horizontalization, the Euler mapping, Lepage
equivalents, null-Lagrangian detection and certification, and the first
variation split.

Everything is exact: identities asserted here are structural equalities of
canonical differential polynomials, never numeric approximations.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Sequence

from .algebra import (
    BaseCoord,
    Expr,
    JetContext,
    JetCoord,
    JetError,
    ONE,
    OrderError,
    ZERO,
    as_expr,
    partial,
    total_derivative,
    total_derivative_multi,
    x_,
    z_,
)
from .fields import ProjectableField, prolong
from .forms import (
    DegreeError,
    DiffForm,
    PolySection,
    contact_form,
    contact_form_jet,
    ext_d,
    omega0,
    section_substitution,
    wedge,
    wedge_all,
)


class HorizontalityError(JetError):
    """A form fails the horizontality precondition of an operation."""


class StructureError(JetError):
    """A Lagrangian lacks the multilinear column structure; carries the
    offending monomial's printable description."""

    def __init__(self, message: str, monomial: str = ""):
        super().__init__(message)
        self.monomial = monomial


class ConsistencyError(JetError):
    """An internal identity that should hold by construction failed."""


# ---------------------------------------------------------------------------
# Lagrangians and Euler systems
# ---------------------------------------------------------------------------

class Lagrangian:
    """A Lagrange density L, implicitly the horizontal form L*omega0."""

    __slots__ = ("density", "order")

    def __init__(self, density):
        self.density = as_expr(density)
        self.order = self.density.order()

    def form(self, ctx: JetContext) -> DiffForm:
        return self.density * omega0(ctx)

    def __eq__(self, other):
        return isinstance(other, Lagrangian) and self.density == other.density

    def __repr__(self):
        return f"Lagrangian({self.density!r})"


def as_lagrangian(L) -> Lagrangian:
    if isinstance(L, Lagrangian):
        return L
    return Lagrangian(as_expr(L))


class EulerSystem:
    """One Euler expression per fiber index."""

    __slots__ = ("components",)

    def __init__(self, components: Sequence[Expr]):
        self.components = tuple(as_expr(e) for e in components)

    def is_zero(self) -> bool:
        return all(e.is_zero() for e in self.components)

    def form(self, ctx: JetContext) -> DiffForm:
        """The pseudovertical 1-form sum E_mu (dy_mu - z_{k,mu} dx_k)."""
        out = DiffForm.zero(1)
        for mu, e in enumerate(self.components, start=1):
            if not e.is_zero():
                out = out + e * contact_form(mu, ctx)
        return out

    def __eq__(self, other):
        return isinstance(other, EulerSystem) and self.components == other.components

    def __repr__(self):
        return f"EulerSystem{self.components}"


def euler(L, ctx: JetContext) -> EulerSystem:
    """Euler expressions E_mu = sum_I (-1)^|I| D_I (dL/dz_{I,mu}).

    The sum runs over sorted multi-indices with no multinomial weights, which
    together with the canonical z-coordinates reproduces the usual pattern
    dL/dy - D_i dL/dz_i + sum_{i<=j} D_i D_j dL/dz_{ij} at order two.
    """
    L = as_lagrangian(L)
    work = ctx.with_order(max(ctx.max_order, 2 * L.order))
    comps = []
    for mu in work.fiber_range():
        e = ZERO
        for s in range(L.order + 1):
            sign = -1 if s % 2 else 1
            for index in work.multi_indices(s):
                dL = partial(L.density, z_(mu, index))
                if dL.is_zero():
                    continue
                e = e + sign * total_derivative_multi(dL, index, work)
        comps.append(e)
    return EulerSystem(comps)


# ---------------------------------------------------------------------------
# Horizontalization and its extension to (n+1)-forms
# ---------------------------------------------------------------------------

def horizontal_differential(c, ctx: JetContext) -> DiffForm:
    """h(dc) = sum_k (D_k c) dx_k for a single coordinate covector."""
    if isinstance(c, BaseCoord):
        return DiffForm.covector(c)
    return DiffForm.from_terms(1, (
        ((x_(k),), Expr.atom(z_(c.mu, c.index + (k,))))
        for k in ctx.base_range()
    ))


def horizontalize(rho: DiffForm, ctx: JetContext) -> DiffForm:
    """Replace every covector by its horizontal differential.

    Zero for degree above the base dimension; coefficients lift unchanged.
    """
    if rho.degree > ctx.n:
        return DiffForm.zero(rho.degree)
    items = []
    for basis, coeff in rho.terms:
        term = DiffForm.of_expr(coeff)
        for c in basis:
            term = wedge(term, horizontal_differential(c, ctx))
        items.extend(term.terms)
    return DiffForm.from_terms(rho.degree, items)


def pseudovertical(rho: DiffForm, ctx: JetContext) -> DiffForm:
    """p(rho) = lift minus horizontal part; killed by every section pullback."""
    return rho - horizontalize(rho, ctx)


def h_tilde(rho: DiffForm, ctx: JetContext) -> DiffForm:
    """Extension of horizontalization to (n+1)-forms.

    Expands each basis term through a distinguished slot: the j-th covector is
    kept, the others are horizontalized.  The output satisfies
    ``h(i(xi) lift rho) = i(xi) h_tilde(rho)`` for every vertical field xi,
    which determines it uniquely.
    """
    if rho.degree != ctx.n + 1:
        raise DegreeError(
            f"h_tilde needs degree {ctx.n + 1}, got {rho.degree}"
        )
    items = []
    for basis, coeff in rho.terms:
        horiz = [horizontal_differential(c, ctx) for c in basis]
        for j, c in enumerate(basis):
            sign = -1 if j % 2 else 1
            rest = wedge_all(horiz[:j] + horiz[j + 1:])
            term = wedge(DiffForm.from_terms(1, (((c,), coeff * sign),)), rest)
            items.extend(term.terms)
    return DiffForm.from_terms(rho.degree, items)


# ---------------------------------------------------------------------------
# Canonical split of h_tilde(d rho) and the Lepage test
# ---------------------------------------------------------------------------

class CanonicalSplit:
    """G, A_{k,nu} and E_nu of the canonical decomposition of h_tilde(d rho)."""

    __slots__ = ("G", "A", "E")

    def __init__(self, G: Expr, A: dict, E: "EulerSystem"):
        self.G = G
        self.A = A
        self.E = E

    def reconstruction(self, ctx: JetContext) -> DiffForm:
        """sum (E_nu + D_k A_{k,nu}) dy_nu ^ omega0 + A_{k,nu} dz_{k,nu} ^ omega0."""
        work = ctx.with_order(max(ctx.max_order, 2))
        vol = omega0(ctx)
        out = DiffForm.zero(ctx.n + 1)
        for nu in ctx.fiber_range():
            coeff = self.E.components[nu - 1]
            for k in ctx.base_range():
                a = self.A.get((k, nu), ZERO)
                if not a.is_zero():
                    coeff = coeff + total_derivative(a, k, work)
            if not coeff.is_zero():
                out = out + coeff * wedge(DiffForm.covector(z_(nu)), vol)
        for (k, nu), a in sorted(self.A.items()):
            if not a.is_zero():
                out = out + a * wedge(DiffForm.covector(z_(nu, (k,))), vol)
        return out


def canonical_split(rho: DiffForm, ctx: JetContext) -> CanonicalSplit:
    """Split an n-form with no dz covectors into its G, A and E data.

    ``G`` is the density of h(rho); ``A_{k,nu}`` collects the z-derivatives of
    the coefficients weighted by the horizontalized basis monomials; ``E`` is
    the Euler system of G.
    """
    if rho.degree != ctx.n:
        raise DegreeError(f"expected an n-form, got degree {rho.degree}")
    for c in rho.covectors():
        if isinstance(c, JetCoord) and c.order > 0:
            raise HorizontalityError(
                f"form is not horizontal over the fibered manifold: d{c!r}"
            )
    if rho.order() > 1:
        raise OrderError("the canonical split expects a form on the first "
                         "jet prolongation")
    work = ctx.with_order(max(ctx.max_order, 2))
    vol_basis = tuple(x_(i) for i in ctx.base_range())
    G = ZERO
    A: dict = {}
    for basis, coeff in rho.terms:
        h_basis = wedge_all([horizontal_differential(c, ctx) for c in basis])
        hprod = h_basis.coefficient(vol_basis)
        if hprod.is_zero():
            continue
        G = G + coeff * hprod
        for k in ctx.base_range():
            for nu in ctx.fiber_range():
                dc = partial(coeff, z_(nu, (k,)))
                if not dc.is_zero():
                    key = (k, nu)
                    A[key] = A.get(key, ZERO) + dc * hprod
    A = {k: v for k, v in A.items() if not v.is_zero()}
    E = []
    for nu in ctx.fiber_range():
        e = partial(G, z_(nu))
        for k in ctx.base_range():
            dG = partial(G, z_(nu, (k,)))
            if not dG.is_zero():
                e = e - total_derivative(dG, k, work)
        E.append(e)
    return CanonicalSplit(G, A, EulerSystem(E))


def is_lepagean(rho: DiffForm, ctx: JetContext):
    """Whether all A_{k,nu} vanish; returns (verdict, offending entries)."""
    split = canonical_split(rho, ctx)
    offending = {k: v for k, v in split.A.items() if not v.is_zero()}
    return (not offending), offending


# ---------------------------------------------------------------------------
# Lepage equivalents
# ---------------------------------------------------------------------------

def lepage_theta(L, ctx: JetContext) -> DiffForm:
    """The order-respecting Lepage equivalent of a Lagrangian of order <= 2.

    Theta = L omega0 + f_sigma^i w_sigma^i + (1/2) f_{j sigma}^i w_{j sigma}^i
    with the contact forms w built at slot i; h(Theta) = L omega0 and
    h_tilde(d Theta) carries exactly the Euler expressions.
    """
    L = as_lagrangian(L)
    if L.order > 2:
        raise OrderError("this Lepage equivalent needs order <= 2")
    work = ctx.with_order(max(ctx.max_order, 3))
    n = ctx.n
    vol_slots = [DiffForm.covector(x_(i)) for i in ctx.base_range()]

    def slot_form(i: int, inner: DiffForm) -> DiffForm:
        factors = vol_slots[: i - 1] + [inner] + vol_slots[i:]
        return wedge_all(factors)

    out = L.density * omega0(ctx)
    for sigma in ctx.fiber_range():
        contact0 = contact_form(sigma, ctx)
        for i in ctx.base_range():
            # f_sigma^i
            f = partial(L.density, z_(sigma, (i,)))
            dii = partial(L.density, z_(sigma, (i, i)))
            if not dii.is_zero():
                f = f - total_derivative(dii, i, work)
            for j in ctx.base_range():
                if j == i:
                    continue
                dij = partial(L.density, z_(sigma, tuple(sorted((i, j)))))
                if not dij.is_zero():
                    f = f - Fraction(1, 2) * total_derivative(dij, j, work)
            if not f.is_zero():
                out = out + f * slot_form(i, contact0)
            # f_{j sigma}^i terms, weight 1/2 with f_{i sigma}^i = 2 dL/dz_{ii}
            for j in ctx.base_range():
                if j == i:
                    fij = 2 * partial(L.density, z_(sigma, (i, i)))
                else:
                    fij = partial(L.density, z_(sigma, tuple(sorted((i, j)))))
                if not fij.is_zero():
                    out = out + Fraction(1, 2) * fij * slot_form(
                        i, contact_form_jet(sigma, (j,), ctx)
                    )
    return out


def _multi_z_partial(e: Expr, pairs) -> Expr:
    """Iterated dz-partials for a sequence of (base index, fiber) pairs."""
    for k, sigma in pairs:
        e = partial(e, z_(sigma, (k,)))
        if e.is_zero():
            break
    return e


def _assemble_slot_form(f0: Expr, coeffs: dict, ctx: JetContext) -> DiffForm:
    """Build f0 omega0 + sum (1/r!) f^{s...}_{sig...} dx..dy_{sig}@s..dx.

    ``coeffs`` maps (s_tuple, sigma_tuple) with s strictly increasing to Expr
    coefficients (pair-antisymmetric families).
    """
    vol_slots = [DiffForm.covector(x_(i)) for i in ctx.base_range()]
    total = f0 * omega0(ctx)
    for (s_tuple, sigma_tuple), f in sorted(coeffs.items()):
        if f.is_zero():
            continue
        fac = Fraction(1, math.factorial(len(s_tuple)))
        slots = list(vol_slots)
        for s, sigma in zip(s_tuple, sigma_tuple):
            slots[s - 1] = DiffForm.covector(z_(sigma))
        total = total + (fac * f) * wedge_all(slots)
    return total


def lepage_delta(L, ctx: JetContext) -> DiffForm:
    """The multilinear Lepage equivalent of a first-order Lagrangian.

    Coefficients descend from the top z-derivative block down to the residual
    density; the result satisfies h(Delta) = L omega0, is Lepagean, and
    inverts the horizontalization of forms lifted from the total space.
    """
    L = as_lagrangian(L)
    if L.order > 1:
        raise OrderError("the multilinear Lepage equivalent needs order 1")
    n, m = ctx.n, ctx.m
    density = L.density
    coeffs: dict = {}
    for r in range(n, 0, -1):
        for s_tuple in itertools.combinations(range(1, n + 1), r):
            for sigma_tuple in itertools.product(range(1, m + 1), repeat=r):
                value = ZERO
                for perm in itertools.permutations(range(r)):
                    sign = _perm_sign(perm)
                    pairs = [(s_tuple[perm[t]], sigma_tuple[t]) for t in range(r)]
                    term = _multi_z_partial(density, pairs)
                    # subtract higher coefficients' contributions
                    for (l_tuple, nu_tuple), f in coeffs.items():
                        if len(l_tuple) <= r or f.is_zero():
                            continue
                        mono = ONE
                        for l, nu in zip(l_tuple, nu_tuple):
                            mono = mono * Expr.atom(z_(nu, (l,)))
                        dmono = _multi_z_partial(mono, pairs)
                        if not dmono.is_zero():
                            term = term - f * dmono
                    if not term.is_zero():
                        value = value + sign * term
                value = value / math.factorial(r)
                if not value.is_zero():
                    coeffs[(s_tuple, sigma_tuple)] = value
    f0 = density
    for (s_tuple, sigma_tuple), f in coeffs.items():
        mono = ONE
        for s, sigma in zip(s_tuple, sigma_tuple):
            mono = mono * Expr.atom(z_(sigma, (s,)))
        f0 = f0 - f * mono
    return _assemble_slot_form(f0, coeffs, ctx)


def _perm_sign(perm) -> int:
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j = i
        length = 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


# ---------------------------------------------------------------------------
# Null Lagrangians
# ---------------------------------------------------------------------------

def null_test(L, ctx: JetContext) -> bool:
    """True iff every Euler expression of L vanishes identically."""
    return euler(L, ctx).is_zero()


def null_from_form(eta: DiffForm, ctx: JetContext) -> Lagrangian:
    """The total-divergence Lagrangian h(d eta) of an order-zero (n-1)-form."""
    if eta.degree != ctx.n - 1:
        raise DegreeError(
            f"expected degree {ctx.n - 1}, got {eta.degree}"
        )
    if eta.order() > 0:
        raise JetError("the generating form must have jet order 0")
    for c in eta.covectors():
        if isinstance(c, JetCoord) and c.order > 0:
            raise JetError("the generating form must have order-0 covectors")
    h = horizontalize(ext_d(eta), ctx)
    return Lagrangian(h.coefficient(tuple(x_(i) for i in ctx.base_range())))


def _multilinear_decomposition(L: Lagrangian):
    """Split L into f0 and coefficients keyed by (columns, fibers).

    Requires every monomial to be multilinear in the z's with pairwise
    distinct base columns and order-zero residual factors.
    """
    f0 = ZERO
    coeffs: dict = {}
    for mono, c in L.density.terms:
        z_pairs = []
        rest = ONE
        for a, p in mono:
            if isinstance(a, JetCoord) and a.order >= 1:
                if a.order > 1:
                    raise StructureError(
                        "monomial contains a coordinate of order > 1",
                        monomial=repr(Expr(((mono, c),))),
                    )
                if p > 1:
                    raise StructureError(
                        "monomial is not multilinear in the first-order "
                        "coordinates",
                        monomial=repr(Expr(((mono, c),))),
                    )
                z_pairs.append((a.index[0], a.mu))
            else:
                rest = rest * Expr.atom(a) ** p
        if rest.order() > 0:
            raise StructureError(
                "coefficient factors must have jet order 0",
                monomial=repr(Expr(((mono, c),))),
            )
        if not z_pairs:
            f0 = f0 + c * rest
            continue
        cols = [s for s, _ in z_pairs]
        if len(set(cols)) != len(cols):
            raise StructureError(
                "monomial repeats a base column",
                monomial=repr(Expr(((mono, c),))),
            )
        z_pairs.sort()
        s_tuple = tuple(s for s, _ in z_pairs)
        sigma_tuple = tuple(sig for _, sig in z_pairs)
        key = (s_tuple, sigma_tuple)
        coeffs[key] = coeffs.get(key, ZERO) + c * rest
    return f0, coeffs


def _antisymmetrize_pairs(coeffs: dict) -> dict:
    """Project extracted coefficients onto column/fiber antisymmetric families.

    At a fixed sorted column tuple, permuting the fiber assignment must flip
    the sign.  Monomial extraction from a commutative polynomial carries no
    such constraint, so the projection is applied before assembly; it is the
    identity exactly when the Lagrangian is null.
    """
    out: dict = {}
    groups: dict = {}
    for (s_tuple, sigma_tuple) in coeffs:
        groups.setdefault(s_tuple, set()).add(sigma_tuple)
    for s_tuple, sigmas in groups.items():
        r = len(s_tuple)
        fac = Fraction(1, math.factorial(r))
        closure = set()
        for sigma_tuple in sigmas:
            for perm in itertools.permutations(range(r)):
                closure.add(tuple(sigma_tuple[perm[t]] for t in range(r)))
        for sigma_tuple in closure:
            value = ZERO
            for perm in itertools.permutations(range(r)):
                sign = _perm_sign(perm)
                key = (s_tuple, tuple(sigma_tuple[perm[t]] for t in range(r)))
                entry = coeffs.get(key)
                if entry is not None and not entry.is_zero():
                    value = value + sign * entry
            value = fac * value
            if not value.is_zero():
                out[(s_tuple, sigma_tuple)] = value
    return out


def null_certificate(L, ctx: JetContext) -> DiffForm:
    """A closed n-form on the total space whose horizontal part is L omega0.

    The Lagrangian must decompose multilinearly over distinct base columns;
    the assembled form is verified closed and horizontally equal to L omega0
    before it is returned.
    """
    L = as_lagrangian(L)
    if L.order > 1:
        raise StructureError("a certificate needs a first-order Lagrangian")
    f0, raw = _multilinear_decomposition(L)
    coeffs = _antisymmetrize_pairs(raw)
    rho = _assemble_slot_form(f0, coeffs, ctx)
    if not ext_d(rho).is_zero():
        raise ConsistencyError(
            "assembled certificate is not closed; the Lagrangian is not null"
        )
    h = horizontalize(rho, ctx)
    if h.coefficient(tuple(x_(i) for i in ctx.base_range())) != L.density:
        raise ConsistencyError("certificate horizontal part mismatch")
    return rho


# ---------------------------------------------------------------------------
# First variation
# ---------------------------------------------------------------------------

def lie_density(L, field: ProjectableField, ctx: JetContext) -> Expr:
    """Coefficient of omega0 in the Lie derivative of L omega0.

    Equals the pairing of dL with the prolonged field plus L times the base
    divergence (the volume form is the coordinate one).
    """
    L = as_lagrangian(L)
    work = ctx.with_order(max(ctx.max_order, L.order + 1))
    pro = prolong(field, L.order, work)
    out = pro.apply(L.density)
    div = ZERO
    for k, xi in enumerate(field.xi, start=1):
        d = partial(xi, x_(k))
        if not d.is_zero():
            div = div + d
    if not div.is_zero():
        out = out + L.density * div
    return out


class VariationSplit:
    """Euler part, characteristics, and boundary currents of a variation.

    The defining identity ``L_Xi = sum_mu E_mu Q_mu + sum_k D_k J_k`` is
    checked exactly at construction time.
    """

    __slots__ = ("euler_part", "characteristics", "currents", "lie_value")

    def __init__(self, euler_part, characteristics, currents, lie_value, ctx):
        self.euler_part = euler_part
        self.characteristics = tuple(characteristics)
        self.currents = tuple(currents)
        self.lie_value = lie_value
        residual = self.residual(ctx)
        if not residual.is_zero():
            raise ConsistencyError(
                f"first-variation identity failed with residual {residual!r}"
            )

    def residual(self, ctx: JetContext) -> Expr:
        from .algebra import derivative_order_needed

        needed = max(
            (derivative_order_needed(j) for j in self.currents), default=0
        )
        work = ctx.with_order(max(ctx.max_order, needed))
        out = self.lie_value
        for e, q in zip(self.euler_part.components, self.characteristics):
            out = out - e * q
        for k, j in enumerate(self.currents, start=1):
            if not j.is_zero():
                out = out - total_derivative(j, k, work)
        return out


def characteristic(field: ProjectableField, ctx: JetContext):
    """Q_mu = Xi_mu - z_{i,mu} xi_i."""
    out = []
    for mu in ctx.fiber_range():
        q = field.eta[mu - 1]
        for i in ctx.base_range():
            if not field.xi[i - 1].is_zero():
                q = q - Expr.atom(z_(mu, (i,))) * field.xi[i - 1]
        out.append(q)
    return tuple(out)


def first_variation(L, field: ProjectableField, ctx: JetContext) -> VariationSplit:
    """Split the Lie derivative of the action density along a projectable
    field into Euler terms against the characteristics plus a divergence.

    Works for Lagrangians of order at most two; the boundary currents carry
    the usual momentum terms plus, at second order, the derivative-weighted
    corrections.
    """
    L = as_lagrangian(L)
    if L.order > 2:
        raise OrderError("first variation implemented for order <= 2")
    work = ctx.with_order(max(ctx.max_order, 2 * L.order + 1, 2))
    E = euler(L, work)
    Q = characteristic(field, work)
    DQ = {}
    if L.order >= 2:
        for mu in work.fiber_range():
            for i in work.base_range():
                DQ[(i, mu)] = total_derivative(Q[mu - 1], i, work)
    currents = []
    for k in work.base_range():
        j = L.density * field.xi[k - 1]
        for mu in work.fiber_range():
            dLdz = partial(L.density, z_(mu, (k,)))
            if not dLdz.is_zero():
                j = j + dLdz * Q[mu - 1]
            if L.order >= 2:
                for i in work.base_range():
                    if i <= k:
                        p = partial(L.density, z_(mu, (i, k)))
                        if not p.is_zero():
                            j = j + p * DQ[(i, mu)]
                    if i >= k:
                        p = partial(L.density, z_(mu, (k, i)))
                        if not p.is_zero():
                            j = j - total_derivative(p, i, work) * Q[mu - 1]
        currents.append(j)
    lie_value = lie_density(L, field, work)
    return VariationSplit(E, Q, currents, lie_value, work)


def extremal_residual(L, gamma: PolySection, ctx: JetContext):
    """Euler expressions evaluated along the prolonged section.

    All residuals vanish exactly iff the section solves the Euler equations.
    """
    L = as_lagrangian(L)
    E = euler(L, ctx)
    order = max((e.order() for e in E.components), default=0)
    sigma = section_substitution(gamma, ctx, order)
    from .algebra import substitute as _subst

    return tuple(_subst(e, sigma) for e in E.components)
