"""Noether analysis: invariance of Lagrangians under projectable fields,
conserved currents, prescribed-symmetry Euler systems, weak critical
equations on tensor bundles, and general-covariance coefficient extraction.
"""

from __future__ import annotations

from typing import Optional, Sequence

from .algebra import (
    Expr,
    FuncAtom,
    FunctionSymbol,
    JetContext,
    OrderError,
    ZERO,
    partial,
    total_derivative,
    x_,
    z_,
)
from .fields import (
    DimensionError,
    ProjectableField,
    SigmaConstants,
    TensorType,
    tensor_lift,
)
from .forms import DiffForm
from .variational import (
    ConsistencyError,
    StructureError,
    as_lagrangian,
    characteristic,
    euler,
    lie_density,
    null_certificate,
)


def lie_lagrangian(L, field: ProjectableField, ctx: JetContext) -> Expr:
    """Lie derivative density of a first-order Lagrangian.

    ``L_Xi = xi_k dL/dx_k + Xi_mu dL/dy_mu + Xi_{i,mu} dL/dz_{i,mu} + L div xi``
    with the first-order components supplied by prolongation and the base
    divergence taken in-chart.
    """
    L = as_lagrangian(L)
    if L.order > 1:
        raise OrderError("invariance analysis expects a first-order Lagrangian")
    return lie_density(L, field, ctx)


def noether_check(L, field: ProjectableField, ctx: JetContext):
    """Invariance test; returns (verdict, residual Lie density)."""
    residual = lie_lagrangian(L, field, ctx)
    return residual.is_zero(), residual


class SymmetryVerdict:
    """Classification of a projectable field against a Lagrangian.

    Invariance means the Lie density vanishes; generalized invariance means
    its Euler system vanishes.  The first implies the second.  When the
    generalized condition holds and the Lie density has the multilinear
    structure, a closed certificate form is attached.
    """

    __slots__ = ("invariant", "generalized_invariant", "lie_value",
                 "euler_of_lie", "certificate")

    def __init__(self, invariant, generalized_invariant, lie_value,
                 euler_of_lie, certificate):
        self.invariant = invariant
        self.generalized_invariant = generalized_invariant
        self.lie_value = lie_value
        self.euler_of_lie = euler_of_lie
        self.certificate = certificate


def generalized_invariance_check(L, field: ProjectableField,
                                 ctx: JetContext) -> SymmetryVerdict:
    """Decide invariance and generalized invariance of L under the field.

    The decision is the exact vanishing of the Euler system of the Lie
    density; the certificate is attempted opportunistically and its absence
    is not an error.
    """
    lie = lie_lagrangian(L, field, ctx)
    e = euler(lie, ctx)
    generalized = e.is_zero()
    certificate: Optional[DiffForm] = None
    if generalized and not lie.is_zero():
        try:
            certificate = null_certificate(lie, ctx)
        except (StructureError, ConsistencyError):
            certificate = None
    elif generalized and lie.is_zero():
        certificate = DiffForm.zero(ctx.n)
    return SymmetryVerdict(lie.is_zero(), generalized, lie, e, certificate)


class ConservedCurrent:
    """Boundary currents of a symmetry variation.

    The off-shell identity ``sum_k D_k J_k + sum_mu E_mu Q_mu = L_Xi`` holds
    exactly by construction; along extremals the divergence reduces to the
    Lie density.
    """

    __slots__ = ("currents", "divergence", "euler_pairing", "lie_value")

    def __init__(self, currents, divergence, euler_pairing, lie_value):
        self.currents = tuple(currents)
        self.divergence = divergence
        self.euler_pairing = euler_pairing
        self.lie_value = lie_value
        if not (divergence + euler_pairing - lie_value).is_zero():
            raise ConsistencyError("off-shell current identity failed")


def conserved_current(L, field: ProjectableField,
                      ctx: JetContext) -> ConservedCurrent:
    """J_k = L xi_k + dL/dz_{k,mu} Q_mu, with the exact off-shell identity."""
    L = as_lagrangian(L)
    if L.order > 1:
        raise OrderError("currents are built for first-order Lagrangians")
    work = ctx.with_order(max(ctx.max_order, 3))
    Q = characteristic(field, work)
    currents = []
    for k in work.base_range():
        j = L.density * field.xi[k - 1]
        for mu in work.fiber_range():
            dL = partial(L.density, z_(mu, (k,)))
            if not dL.is_zero():
                j = j + dL * Q[mu - 1]
        currents.append(j)
    divergence = ZERO
    for k, j in enumerate(currents, start=1):
        if not j.is_zero():
            divergence = divergence + total_derivative(j, k, work)
    E = euler(L, work)
    pairing = ZERO
    for e, q in zip(E.components, Q):
        pairing = pairing + e * q
    lie = lie_lagrangian(L, field, work)
    return ConservedCurrent(currents, divergence, pairing, lie)


def symmetric_system(L, fields: Sequence[ProjectableField],
                     ctx: JetContext):
    """Euler system of L followed by the Euler systems of its Lie densities.

    A section solves the prescribed-symmetry problem iff every listed system
    vanishes along it.
    """
    out = [euler(L, ctx)]
    for field in fields:
        out.append(euler(lie_lagrangian(L, field, ctx), ctx))
    return out


# ---------------------------------------------------------------------------
# Tensor-bundle problems
# ---------------------------------------------------------------------------

def weak_critical_system(L, tensor_type: TensorType, ctx: JetContext):
    """The n combinations E_mu z_{l,mu} + D_q(E_mu sigma_{mu l}^{nu q} y_nu).

    Solutions of these equations are exactly the sections critical under all
    variations generated by lifted base fields.
    """
    L = as_lagrangian(L)
    if L.order > 2:
        raise OrderError("weak critical system expects order <= 2")
    n = ctx.n
    if ctx.m != tensor_type.fiber_dim(n):
        raise DimensionError("context fiber dimension does not match type")
    work = ctx.with_order(max(ctx.max_order, 2 * max(L.order, 1) + 1))
    E = euler(L, work)
    sigma = SigmaConstants(tensor_type, n)
    out = []
    for l in work.base_range():
        w = ZERO
        for mu in work.fiber_range():
            e = E.components[mu - 1]
            if not e.is_zero():
                w = w + e * Expr.atom(z_(mu, (l,)))
        flux = {q: ZERO for q in work.base_range()}
        for A, p, B, q, v in sigma.nonzero():
            if p != l:
                continue
            mu_a = tensor_type.label_to_mu(A, n)
            mu_b = tensor_type.label_to_mu(B, n)
            e = E.components[mu_a - 1]
            if not e.is_zero():
                flux[q] = flux[q] + v * e * Expr.atom(z_(mu_b))
        for q, val in flux.items():
            if not val.is_zero():
                w = w + total_derivative(val, q, work)
        out.append(w)
    return tuple(out)


class CovarianceTable:
    """Coefficient blocks of the Euler system of the lifted Lie density.

    ``blocks[d]`` maps (fiber index C, base index p, sorted derivative
    multi-index of length d) to the extracted coefficient Expr.  The table is
    all-zero exactly for generally covariant Lagrangians.
    """

    __slots__ = ("blocks", "first_block_check")

    def __init__(self, blocks, first_block_check):
        self.blocks = blocks
        self.first_block_check = first_block_check

    def is_zero(self) -> bool:
        return all(
            e.is_zero() for block in self.blocks.values()
            for e in block.values()
        )

    def entries(self):
        for d in sorted(self.blocks):
            for key in sorted(self.blocks[d]):
                yield d, key, self.blocks[d][key]


def _fresh_lift_symbols(ctx: JetContext):
    """Opaque base-field components xi_p(x_1..x_n) with unused names."""
    existing = {f.name for f in ctx.functions}
    args = tuple(x_(i) for i in ctx.base_range())
    symbols = []
    for p in ctx.base_range():
        name = f"xi{p}"
        while name in existing:
            name = "_" + name
        symbols.append(FunctionSymbol(name, args))
    return symbols


def covariance_system(L, tensor_type: TensorType,
                      ctx: JetContext) -> CovarianceTable:
    """Extract the coefficients of an opaque lifted field from the Euler
    system of the Lie density.

    The Euler expressions are exactly linear in the opaque components and
    their derivatives up to order three; a nonzero extraction residual is an
    internal error.  The zeroth block always equals the explicit
    base-derivatives of the Euler expressions of L, which is recorded as a
    cross-check.
    """
    L = as_lagrangian(L)
    if L.order > 1:
        raise OrderError("covariance analysis expects a first-order Lagrangian")
    n = ctx.n
    if ctx.m != tensor_type.fiber_dim(n):
        raise DimensionError("context fiber dimension does not match type")
    symbols = _fresh_lift_symbols(ctx)
    work = JetContext(ctx.n, ctx.m, max(ctx.max_order, 3),
                      tuple(ctx.functions) + tuple(symbols))
    xi = [Expr.atom(FuncAtom(s)) for s in symbols]
    lifted = tensor_lift(tensor_type, xi, work)
    lie = lie_lagrangian(L, lifted, work)
    E = euler(lie, work)
    names = {s.name: p for p, s in enumerate(symbols, start=1)}
    blocks: dict = {0: {}, 1: {}, 2: {}, 3: {}}
    residual_terms = []
    for C in work.fiber_range():
        e = E.components[C - 1]
        for mono, coeff in e.terms:
            xi_factors = [
                (a, p) for a, p in mono
                if isinstance(a, FuncAtom) and a.symbol.name in names
            ]
            if len(xi_factors) != 1 or xi_factors[0][1] != 1:
                residual_terms.append(Expr(((mono, coeff),)))
                continue
            atom = xi_factors[0][0]
            p = names[atom.symbol.name]
            deriv = tuple(sorted(pos + 1 for pos in atom.deriv))
            rest = [(a, q) for a, q in mono if a is not atom and a != atom]
            rest_expr = Expr(((tuple(rest), coeff),))
            d = len(deriv)
            if d > 3:
                residual_terms.append(Expr(((mono, coeff),)))
                continue
            key = (C, p, deriv)
            blocks[d][key] = blocks[d].get(key, ZERO) + rest_expr
        if residual_terms:
            raise ConsistencyError(
                "covariance extraction left a nonlinear residual: "
                + repr(sum(residual_terms, ZERO))
            )
    for d in blocks:
        blocks[d] = {k: v for k, v in blocks[d].items() if not v.is_zero()}
    # cross-check: the underived block must be the explicit x-derivatives
    E0 = euler(L, work)
    first_ok = True
    for C in work.fiber_range():
        for i in work.base_range():
            expected = partial(E0.components[C - 1], x_(i))
            got = blocks[0].get((C, i, ()), ZERO)
            if expected != got:
                first_ok = False
    return CovarianceTable(blocks, first_ok)


def general_covariance_check(L, tensor_type: TensorType,
                             ctx: JetContext) -> bool:
    """True iff every extracted covariance coefficient vanishes."""
    return covariance_system(L, tensor_type, ctx).is_zero()
