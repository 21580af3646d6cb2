"""Prolongation of projectable vector fields and tensor-bundle lifts.

A projectable field has base components depending on base coordinates only
and fiber components of jet order zero.  Its prolongation to a jet space is
produced by the usual recurrence: each new fiber component is the total
derivative of the previous one minus the transport terms coming from the
moving base frame.
"""

from __future__ import annotations

import itertools
from typing import Sequence

from .algebra import (
    Expr,
    JetContext,
    JetCoord,
    JetError,
    OrderError,
    ZERO,
    as_expr,
    partial,
    total_derivative,
    x_,
    z_,
)
from .forms import JetField


class DimensionError(JetError):
    """Component counts do not match the ambient dimensions."""


def _check_base_only(e: Expr, what: str) -> None:
    for a in e.atoms():
        if isinstance(a, JetCoord):
            raise JetError(f"{what} must not depend on fiber coordinates: {a!r}")


def _check_order_zero(e: Expr, what: str) -> None:
    if e.order() > 0:
        raise JetError(f"{what} must have jet order 0")


class ProjectableField:
    """xi_k d/dx_k + eta_mu d/dy_mu with xi base-only and eta of order 0."""

    __slots__ = ("xi", "eta")

    def __init__(self, xi: Sequence, eta: Sequence):
        self.xi = tuple(as_expr(e) for e in xi)
        self.eta = tuple(as_expr(e) for e in eta)
        for e in self.xi:
            _check_base_only(e, "base component")
        for e in self.eta:
            _check_order_zero(e, "fiber component")

    @property
    def n(self) -> int:
        return len(self.xi)

    @property
    def m(self) -> int:
        return len(self.eta)

    def is_vertical(self) -> bool:
        return all(e.is_zero() for e in self.xi)

    def apply_order0(self, e: Expr) -> Expr:
        """Act as a derivation on functions of x and y."""
        out = ZERO
        for k, comp in enumerate(self.xi, start=1):
            if not comp.is_zero():
                out = out + comp * partial(e, x_(k))
        for mu, comp in enumerate(self.eta, start=1):
            if not comp.is_zero():
                out = out + comp * partial(e, z_(mu))
        return out

    def __eq__(self, other):
        return (
            isinstance(other, ProjectableField)
            and self.xi == other.xi
            and self.eta == other.eta
        )

    def __repr__(self):
        return f"ProjectableField(xi={self.xi}, eta={self.eta})"


def _split_index(index: tuple) -> tuple:
    """Split a sorted multi-index into (rest, last entry)."""
    return index[:-1], index[-1]


def prolong(field: ProjectableField, r: int, ctx: JetContext) -> JetField:
    """Jet prolongation of a projectable field to order ``r``.

    Fiber components obey
    ``Xi_{I+i} = D_i Xi_I - sum_l z_{I+l} * d(xi_l)/dx_i``
    seeded with the order-zero components; the result does not depend on the
    order in which indices are appended.
    """
    if field.n != ctx.n or field.m != ctx.m:
        raise DimensionError("field dimensions do not match context")
    if r > ctx.max_order:
        raise OrderError(f"prolongation order {r} exceeds max_order={ctx.max_order}")
    work = ctx.with_order(max(ctx.max_order, r))
    comps: dict = {}
    for k, e in enumerate(field.xi, start=1):
        comps[x_(k)] = e
    dxi = {
        (l, i): partial(field.xi[l - 1], x_(i))
        for l in ctx.base_range()
        for i in ctx.base_range()
    }
    for mu, e in enumerate(field.eta, start=1):
        comps[z_(mu)] = e
    for s in range(1, r + 1):
        for index in ctx.multi_indices(s):
            rest, i0 = _split_index(index)
            for mu in ctx.fiber_range():
                prev = comps[z_(mu, rest)]
                value = total_derivative(prev, i0, work)
                for l in ctx.base_range():
                    d = dxi[(l, i0)]
                    if not d.is_zero():
                        value = value - Expr.atom(z_(mu, rest + (l,))) * d
                comps[z_(mu, index)] = value
    return JetField(comps)


def vertical_part(field: ProjectableField, r: int, ctx: JetContext) -> JetField:
    """Characteristic components Q_I = Xi_I - z_{I+l} xi_l, base part zero."""
    if r + 1 > ctx.max_order:
        raise OrderError(
            f"vertical part at order {r} needs order {r + 1} coordinates"
        )
    pro = prolong(field, r, ctx)
    comps: dict = {}
    for mu in ctx.fiber_range():
        for s in range(r + 1):
            for index in ctx.multi_indices(s):
                q = pro.component(z_(mu, index))
                for l in ctx.base_range():
                    if not field.xi[l - 1].is_zero():
                        q = q - Expr.atom(z_(mu, index + (l,))) * field.xi[l - 1]
                comps[z_(mu, index)] = q
    return JetField(comps)


def bracket(f1: ProjectableField, f2: ProjectableField) -> ProjectableField:
    """Lie bracket; the result is projectable again."""
    if (f1.n, f1.m) != (f2.n, f2.m):
        raise DimensionError("bracket of fields on different spaces")
    xi = []
    for k in range(1, f1.n + 1):
        e = ZERO
        for l in range(1, f1.n + 1):
            e = e + f1.xi[l - 1] * partial(f2.xi[k - 1], x_(l))
            e = e - f2.xi[l - 1] * partial(f1.xi[k - 1], x_(l))
        xi.append(e)
    eta = []
    for mu in range(1, f1.m + 1):
        eta.append(
            f1.apply_order0(f2.eta[mu - 1]) - f2.apply_order0(f1.eta[mu - 1])
        )
    return ProjectableField(xi, eta)


def jet_bracket(a: JetField, b: JetField) -> JetField:
    """Bracket of general jet-space fields: [a,b]^c = a(b^c) - b(a^c)."""
    coords = {c for c, _ in a.components} | {c for c, _ in b.components}
    comps = {}
    for c in coords:
        comps[c] = a.apply(b.component(c)) - b.apply(a.component(c))
    return JetField(comps)


# ---------------------------------------------------------------------------
# Tensor bundles
# ---------------------------------------------------------------------------

CONTRAVARIANT = "+"
COVARIANT = "-"


class TensorType:
    """Variance signature of a tensor bundle over the base manifold.

    ``slots`` is a string over {'+', '-'}; the fiber dimension is n**len(slots)
    with components indexed by multi-labels (a_1, ..., a_k), a_t in [1, n].
    ``cov_sign`` selects the sign convention for covariant slots; the default
    +1 follows the transport rule that carries dx_j to (df_j/dx_l) dx_l, the
    pushforward convention is -1.
    """

    __slots__ = ("slots", "cov_sign")

    def __init__(self, slots: str, cov_sign: int = 1):
        if not slots:
            raise DimensionError("tensor type needs at least one slot")
        if any(s not in (CONTRAVARIANT, COVARIANT) for s in slots):
            raise DimensionError(f"invalid variance string {slots!r}")
        if cov_sign not in (1, -1):
            raise DimensionError("cov_sign must be +1 or -1")
        self.slots = slots
        self.cov_sign = cov_sign

    @property
    def rank(self) -> int:
        return len(self.slots)

    def fiber_dim(self, n: int) -> int:
        return n ** self.rank

    def labels(self, n: int):
        """All component multi-labels in fiber-index order."""
        return itertools.product(range(1, n + 1), repeat=self.rank)

    def label_to_mu(self, label: tuple, n: int) -> int:
        mu = 0
        for a in label:
            mu = mu * n + (a - 1)
        return mu + 1

    def mu_to_label(self, mu: int, n: int) -> tuple:
        mu -= 1
        out = []
        for _ in range(self.rank):
            out.append(mu % n + 1)
            mu //= n
        return tuple(reversed(out))

    def __repr__(self):
        return f"TensorType({self.slots!r}, cov_sign={self.cov_sign})"


class SigmaConstants:
    """The structure constants of the tensor-bundle lift.

    ``value(A, p, B, q)`` is a sum over slots of Kronecker-delta products:
    a contravariant slot t contributes ``delta(A_t,p) delta(B_t,q)`` and a
    covariant slot contributes ``cov_sign * delta(B_t,p) delta(A_t,q)``, in
    both cases times agreement of all remaining slot labels.
    """

    __slots__ = ("tensor_type", "n", "_table")

    def __init__(self, tensor_type: TensorType, n: int):
        self.tensor_type = tensor_type
        self.n = n
        table: dict = {}
        for A in tensor_type.labels(n):
            for t, variance in enumerate(tensor_type.slots):
                for q_or_p in range(1, n + 1):
                    B = A[:t] + (q_or_p,) + A[t + 1:]
                    if variance == CONTRAVARIANT:
                        key = (A, A[t], B, q_or_p)
                        table[key] = table.get(key, 0) + 1
                    else:
                        key = (A, q_or_p, B, A[t])
                        table[key] = table.get(key, 0) + tensor_type.cov_sign
        self._table = {k: v for k, v in table.items() if v != 0}

    def value(self, A: tuple, p: int, B: tuple, q: int) -> int:
        return self._table.get((A, p, B, q), 0)

    def nonzero(self):
        """Iterate (A, p, B, q, value) over the nonzero entries."""
        for (A, p, B, q), v in sorted(self._table.items()):
            yield A, p, B, q, v


def tensor_lift(tensor_type: TensorType, xi: Sequence, ctx: JetContext) -> ProjectableField:
    """Lift of a base vector field to the tensor bundle of the given type.

    Fiber components are ``sigma_{Ap}^{Bq} (d xi_p / dx_q) y_B``; the xi
    components may be polynomials in x or opaque function symbols of x.
    """
    xi = tuple(as_expr(e) for e in xi)
    n = ctx.n
    if len(xi) != n:
        raise DimensionError(f"expected {n} base components, got {len(xi)}")
    for e in xi:
        _check_base_only(e, "lifted field component")
    if ctx.m != tensor_type.fiber_dim(n):
        raise DimensionError(
            f"context fiber dimension {ctx.m} != n^rank = {tensor_type.fiber_dim(n)}"
        )
    sigma = SigmaConstants(tensor_type, n)
    eta = {label: ZERO for label in tensor_type.labels(n)}
    dxi = {
        (p, q): partial(xi[p - 1], x_(q))
        for p in range(1, n + 1)
        for q in range(1, n + 1)
    }
    for A, p, B, q, v in sigma.nonzero():
        d = dxi[(p, q)]
        if d.is_zero():
            continue
        mu_b = tensor_type.label_to_mu(B, n)
        eta[A] = eta[A] + v * d * Expr.atom(z_(mu_b))
    ordered = [eta[tensor_type.mu_to_label(mu, n)] for mu in range(1, ctx.m + 1)]
    return ProjectableField(xi, ordered)
