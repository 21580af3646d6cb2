"""Independent numeric verification layer.

Exact evaluation of expressions at rational points, randomized zero testing
(a sanity layer only; the canonical form is the decision procedure), a
flow-based oracle for prolonged vector fields, and a discrete-action gradient
check of the Euler expressions.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Optional, Sequence

import numpy as np

from .algebra import (
    Coord,
    Expr,
    FuncAtom,
    FunctionSymbol,
    JetContext,
    JetCoord,
    JetError,
    ZERO,
    partial,
    x_,
    z_,
)
from .fields import ProjectableField, prolong
from .forms import PolySection
from .variational import Lagrangian, as_lagrangian, euler


class UngroundedAtomError(JetError):
    """An atom of the evaluated expression has no assigned value."""


class PointAssignment:
    """Values for coordinates plus polynomial realizations for functions.

    A realization is an Expr in the symbol's declared arguments; formal
    partials evaluate by differentiating the realization.
    """

    __slots__ = ("coords", "functions", "_deriv_cache")

    def __init__(self, coords: Dict[Coord, object],
                 functions: Dict[FunctionSymbol, Expr] | None = None):
        self.coords = dict(coords)
        self.functions = dict(functions or {})
        self._deriv_cache: dict = {}

    def _realized(self, atom: FuncAtom) -> Expr:
        key = (atom.symbol, atom.deriv)
        got = self._deriv_cache.get(key)
        if got is None:
            real = self.functions.get(atom.symbol)
            if real is None:
                raise UngroundedAtomError(
                    f"no realization for function {atom.symbol.name}"
                )
            got = real
            for pos in atom.deriv:
                got = partial(got, atom.symbol.args[pos])
            self._deriv_cache[key] = got
        return got


def eval_expr(e: Expr, assignment: PointAssignment):
    """Evaluate exactly (Fractions in, Fraction out; floats propagate)."""
    total = 0
    for mono, coeff in e.terms:
        value = coeff
        for a, p in mono:
            if isinstance(a, FuncAtom):
                base = eval_expr(assignment._realized(a), assignment)
            else:
                try:
                    base = assignment.coords[a]
                except KeyError:
                    raise UngroundedAtomError(f"no value for {a!r}") from None
            value = value * base ** p
        total = total + value
    return total


@dataclass
class ZeroCheckVerdict:
    probably_zero: bool
    trials: int
    witness: Optional[PointAssignment] = None
    witness_value: object = None


def _random_rational(rng: random.Random) -> Fraction:
    return Fraction(rng.randint(-97, 97), rng.randint(1, 97))


def _random_realization(symbol: FunctionSymbol, rng: random.Random,
                        degree: int = 3) -> Expr:
    out = ZERO
    for powers in itertools.product(range(degree + 1), repeat=len(symbol.args)):
        if sum(powers) > degree:
            continue
        c = rng.randint(-5, 5)
        if c == 0:
            continue
        mono = Expr.const(c)
        for arg, p in zip(symbol.args, powers):
            if p:
                mono = mono * Expr.atom(arg) ** p
        out = out + mono
    return out


def random_assignment(e: Expr, rng: random.Random) -> PointAssignment:
    """Ground every atom of ``e`` with small rationals and random cubics."""
    coords: dict = {}
    functions: dict = {}
    for a in e.atoms():
        if isinstance(a, FuncAtom):
            if a.symbol not in functions:
                functions[a.symbol] = _random_realization(a.symbol, rng)
            for arg in a.symbol.args:
                coords.setdefault(arg, _random_rational(rng))
        else:
            coords.setdefault(a, _random_rational(rng))
    return PointAssignment(coords, functions)


def randomized_zero_check(e: Expr, trials: int = 20,
                          seed: int = 0) -> ZeroCheckVerdict:
    """Evaluate at random rational points; any nonzero hit is decisive.

    This is a sanity layer: "probably zero" is never used as the decision
    procedure, the canonical zero test is.
    """
    rng = random.Random(seed)
    for t in range(trials):
        assignment = random_assignment(e, rng)
        value = eval_expr(e, assignment)
        if value != 0:
            return ZeroCheckVerdict(False, t + 1, assignment, value)
    return ZeroCheckVerdict(True, trials)


# ---------------------------------------------------------------------------
# Expression compilation (floats; used by the oracles below)
# ---------------------------------------------------------------------------

def compile_expr(e: Expr, variables: Sequence[Coord]):
    """Compile a function-symbol-free Expr to a float lambda."""
    index = {v: i for i, v in enumerate(variables)}
    source_terms = []
    for mono, coeff in e.terms:
        factors = [repr(float(coeff))]
        for a, p in mono:
            if isinstance(a, FuncAtom):
                raise JetError("cannot compile opaque function symbols")
            try:
                name = f"v[{index[a]}]"
            except KeyError:
                raise JetError(f"unbound variable {a!r} in compilation") from None
            factors.append(name if p == 1 else f"{name}**{p}")
        source_terms.append("*".join(factors))
    body = " + ".join(source_terms) if source_terms else "0.0"
    return eval(f"lambda v: {body}")  # noqa: S307 - generated from canonical data


# ---------------------------------------------------------------------------
# Flow oracle for prolongations
# ---------------------------------------------------------------------------

class OracleInconclusive(JetError):
    """The flow left the coordinate chart; the oracle has no verdict."""


def _rk4(f, state: np.ndarray, t_total: float, max_step: float) -> np.ndarray:
    steps = max(1, int(math.ceil(abs(t_total) / max_step)))
    h = t_total / steps
    y = np.array(state, dtype=float)
    for _ in range(steps):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(y)):
        raise OracleInconclusive("flow escaped the chart")
    return y


def flow_prolong_oracle(field: ProjectableField, gamma: PolySection,
                        x0: Sequence[float], r: int, ctx: JetContext,
                        h_t: float = 1e-4, rk_step: float = 1e-3,
                        h_x: float = 1e-3) -> Dict[JetCoord, float]:
    """Numeric prolongation components at the jet of ``gamma`` over ``x0``.

    Transports the section with the field's flow, takes spatial central
    differences for the jet coordinates of the transported section, and a
    symmetric t-difference at zero.  Supports jet orders up to two.
    """
    if r > 2:
        raise JetError("flow oracle supports jet order <= 2")
    n, m = ctx.n, ctx.m
    base_vars = [x_(i) for i in ctx.base_range()]
    point_vars = base_vars + [z_(mu) for mu in ctx.fiber_range()]
    xi_f = [compile_expr(e, base_vars) for e in field.xi]
    eta_f = [compile_expr(e, point_vars) for e in field.eta]
    gamma_f = [compile_expr(e, base_vars) for e in gamma.components]

    def base_rate(v):
        return np.array([f(v) for f in xi_f])

    def total_rate(v):
        return np.array([f(v[:n]) for f in xi_f] + [f(v) for f in eta_f])

    def transported(t: float, xprime: np.ndarray) -> np.ndarray:
        """Fiber values of the flow-transported section at x'."""
        xsrc = _rk4(base_rate, xprime, -t, rk_step) if t else np.array(xprime)
        y0 = np.array([f(xsrc) for f in gamma_f])
        state = np.concatenate([xsrc, y0])
        moved = _rk4(total_rate, state, t, rk_step) if t else state
        return moved[n:]

    def jet_components(t: float) -> Dict[JetCoord, float]:
        xt = _rk4(base_rate, np.array(x0, dtype=float), t, rk_step) \
            if t else np.array(x0, dtype=float)
        comps: Dict[JetCoord, float] = {}

        def value(offsets) -> np.ndarray:
            shifted = xt + h_x * np.array(offsets)
            return transported(t, shifted)

        center = value([0] * n)
        for mu in ctx.fiber_range():
            comps[z_(mu)] = center[mu - 1]
        if r >= 1:
            for i in range(n):
                plus = value([1 if k == i else 0 for k in range(n)])
                minus = value([-1 if k == i else 0 for k in range(n)])
                d = (plus - minus) / (2 * h_x)
                for mu in ctx.fiber_range():
                    comps[z_(mu, (i + 1,))] = d[mu - 1]
        if r >= 2:
            for i in range(n):
                for j in range(i, n):
                    if i == j:
                        plus = value([1 if k == i else 0 for k in range(n)])
                        minus = value([-1 if k == i else 0 for k in range(n)])
                        dd = (plus - 2 * center + minus) / (h_x ** 2)
                    else:
                        pp = value([1 if k in (i, j) else 0 for k in range(n)])
                        pm = value([1 if k == i else (-1 if k == j else 0)
                                    for k in range(n)])
                        mp = value([-1 if k == i else (1 if k == j else 0)
                                    for k in range(n)])
                        mm = value([-1 if k in (i, j) else 0 for k in range(n)])
                        dd = (pp - pm - mp + mm) / (4 * h_x ** 2)
                    for mu in ctx.fiber_range():
                        comps[z_(mu, (i + 1, j + 1))] = dd[mu - 1]
        return comps

    forward = jet_components(h_t)
    backward = jet_components(-h_t)
    out: Dict[JetCoord, float] = {}
    for c in forward:
        out[c] = (forward[c] - backward[c]) / (2 * h_t)
    return out


def prolong_vs_flow(field: ProjectableField, gamma: PolySection,
                    x0: Sequence[float], r: int, ctx: JetContext,
                    **kw) -> float:
    """Max relative deviation between symbolic and flow-oracle prolongation."""
    oracle = flow_prolong_oracle(field, gamma, x0, r, ctx, **kw)
    symbolic = prolong(field, r, ctx.with_order(max(ctx.max_order, r + 1)))
    jet_point = {x_(i): float(v) for i, v in zip(ctx.base_range(), x0)}
    base_assign = PointAssignment(
        {x_(i): Fraction(v).limit_denominator(10 ** 12)
         for i, v in zip(ctx.base_range(), x0)}
    )
    for mu in ctx.fiber_range():
        for s in range(r + 1):
            for index in ctx.multi_indices(s):
                jet_point[z_(mu, index)] = float(
                    eval_expr(gamma.jet(mu, index), base_assign)
                )
    assignment = PointAssignment(jet_point)
    scale = max(1.0, max(abs(v) for v in oracle.values()) if oracle else 1.0)
    worst = 0.0
    for c, numeric in oracle.items():
        exact = float(eval_expr(symbolic.component(c), assignment))
        worst = max(worst, abs(numeric - exact) / max(1.0, abs(exact), scale))
    return worst


# ---------------------------------------------------------------------------
# Discrete action gradient check
# ---------------------------------------------------------------------------

@dataclass
class GridSpec:
    """Rectangular grid on the unit cube with fixed boundary values."""

    n: int
    nodes: int

    def __post_init__(self):
        if self.nodes < 4:
            raise JetError("grid needs at least 4 nodes per axis")
        if self.n not in (1, 2):
            raise JetError("discrete action supports n in {1, 2}")


@dataclass
class GradCheckReport:
    """Outcome of the discrete-action derivative comparison."""

    max_rel_error: float
    convergence_order: float
    vacuous: bool
    errors_by_nodes: Dict[int, float] = field(default_factory=dict)
    boundary_flux: float = 0.0
    interior_ratio: float = 0.0


class _DiscreteAction1D:
    """Trapezoid quadrature over nodal jets, central differences inside,
    first-order one-sided differences at the two boundary nodes."""

    def __init__(self, Lf, m: int, u: np.ndarray, h: float):
        self.Lf = Lf
        self.m = m
        self.u = u  # shape (m, N)
        self.h = h
        self.N = u.shape[1]

    def node_term(self, j: int) -> float:
        u, h, N = self.u, self.h, self.N
        args = [j * h]
        for mu in range(self.m):
            args.append(u[mu, j])
        for mu in range(self.m):
            if j == 0:
                zj = (u[mu, 1] - u[mu, 0]) / h
            elif j == N - 1:
                zj = (u[mu, N - 1] - u[mu, N - 2]) / h
            else:
                zj = (u[mu, j + 1] - u[mu, j - 1]) / (2 * h)
            args.append(zj)
        w = h / 2 if j in (0, N - 1) else h
        return w * self.Lf(args)

    def _touched(self, j: int):
        touched = {j}
        if j - 1 >= 0:
            touched.add(j - 1)
        if j + 1 <= self.N - 1:
            touched.add(j + 1)
        if j == 1:
            touched.add(0)
        if j == self.N - 2:
            touched.add(self.N - 1)
        return touched

    def local_gradient(self, mu: int, j: int, eps: float) -> float:
        touched = self._touched(j)
        orig = self.u[mu, j]

        def total(shift: float) -> float:
            self.u[mu, j] = orig + shift
            return sum(self.node_term(k) for k in touched)

        d1 = (total(eps) - total(-eps)) / (2 * eps)
        d2 = (total(2 * eps) - total(-2 * eps)) / (4 * eps)
        self.u[mu, j] = orig
        # Richardson: exact for polynomial node-dependence of degree <= 4
        return (4 * d1 - d2) / 3


class _DiscreteAction2D:
    """Same scheme on a tensor grid: trapezoid weights, central differences
    at interior nodes, one-sided first-order normals on the boundary."""

    def __init__(self, Lf, m: int, u: np.ndarray, h: float):
        self.Lf = Lf
        self.m = m
        self.u = u  # shape (m, N, N)
        self.h = h
        self.N = u.shape[1]

    def _z(self, mu: int, axis: int, idx) -> float:
        u, h, N = self.u[mu], self.h, self.N
        j = idx[axis]
        lo = list(idx)
        hi = list(idx)
        if j == 0:
            hi[axis] = 1
            return (u[tuple(hi)] - u[tuple(idx)]) / h
        if j == N - 1:
            lo[axis] = N - 2
            return (u[tuple(idx)] - u[tuple(lo)]) / h
        hi[axis] = j + 1
        lo[axis] = j - 1
        return (u[tuple(hi)] - u[tuple(lo)]) / (2 * h)

    def node_term(self, idx) -> float:
        h, N = self.h, self.N
        args = [idx[0] * h, idx[1] * h]
        for mu in range(self.m):
            args.append(self.u[mu][idx])
        for mu in range(self.m):
            for axis in (0, 1):
                args.append(self._z(mu, axis, idx))
        w = 1.0
        for a in idx:
            w *= h / 2 if a in (0, N - 1) else h
        return w * self.Lf(args)

    def _touched(self, idx):
        N = self.N
        touched = {idx}
        for axis in (0, 1):
            for d in (-1, 1):
                nb = list(idx)
                nb[axis] += d
                if 0 <= nb[axis] <= N - 1:
                    touched.add(tuple(nb))
            if idx[axis] == 1:
                nb = list(idx)
                nb[axis] = 0
                touched.add(tuple(nb))
            if idx[axis] == N - 2:
                nb = list(idx)
                nb[axis] = N - 1
                touched.add(tuple(nb))
        return touched

    def local_gradient(self, mu: int, idx, eps: float) -> float:
        touched = self._touched(idx)
        orig = self.u[mu][idx]

        def total(shift: float) -> float:
            self.u[mu][idx] = orig + shift
            return sum(self.node_term(k) for k in touched)

        d1 = (total(eps) - total(-eps)) / (2 * eps)
        d2 = (total(2 * eps) - total(-2 * eps)) / (4 * eps)
        self.u[mu][idx] = orig
        return (4 * d1 - d2) / 3


def _grad_check_single(L: Lagrangian, gamma: PolySection, nodes: int,
                       ctx: JetContext, eps: float, want_flux: bool):
    n, m = ctx.n, ctx.m
    h = 1.0 / (nodes - 1)
    base_vars = [x_(i) for i in ctx.base_range()]
    jet_vars = list(base_vars) + [z_(mu) for mu in ctx.fiber_range()] + [
        z_(mu, (i,)) for mu in ctx.fiber_range() for i in ctx.base_range()
    ]
    Lf = compile_expr(L.density, jet_vars)
    E = euler(L, ctx)
    full_vars = jet_vars + [
        z_(mu, idx) for mu in ctx.fiber_range()
        for idx in itertools.combinations_with_replacement(ctx.base_range(), 2)
    ]
    Ef = [compile_expr(e, full_vars) for e in E.components]
    gamma_f = [compile_expr(e, base_vars) for e in gamma.components]
    gamma_derivs = {}
    for mu in ctx.fiber_range():
        for s in range(3):
            for idx in itertools.combinations_with_replacement(
                    ctx.base_range(), s):
                gamma_derivs[(mu, idx)] = compile_expr(
                    gamma.jet(mu, idx), base_vars
                )

    def euler_at(xs) -> list:
        args = list(xs)
        for mu in ctx.fiber_range():
            args.append(gamma_derivs[(mu, ())](xs))
        for mu in ctx.fiber_range():
            for i in ctx.base_range():
                args.append(gamma_derivs[(mu, (i,))](xs))
        for mu in ctx.fiber_range():
            for idx in itertools.combinations_with_replacement(
                    ctx.base_range(), 2):
                args.append(gamma_derivs[(mu, idx)](xs))
        return [f(args) for f in Ef]

    deviations: list = []
    targets: list = []
    interior_grads: list = []
    flux = 0.0
    if n == 1:
        u = np.zeros((m, nodes))
        for mu in range(m):
            for j in range(nodes):
                u[mu, j] = gamma_f[mu]([j * h])
        action = _DiscreteAction1D(Lf, m, u, h)
        for j in range(2, nodes - 2):
            ev = euler_at([j * h])
            for mu in range(m):
                g = action.local_gradient(mu, j, eps)
                target = h * ev[mu]
                deviations.append(abs(g - target))
                targets.append(abs(target))
                interior_grads.append(abs(g))
        if want_flux:
            for j in (0, nodes - 1):
                for mu in range(m):
                    flux = max(flux, abs(action.local_gradient(mu, j, eps)))
    else:
        u = np.zeros((m, nodes, nodes))
        xs_axis = np.arange(nodes) * h
        for mu in range(m):
            for j in range(nodes):
                for k in range(nodes):
                    u[mu, j, k] = gamma_f[mu]([xs_axis[j], xs_axis[k]])
        action = _DiscreteAction2D(Lf, m, u, h)
        for j in range(2, nodes - 2):
            for k in range(2, nodes - 2):
                ev = euler_at([xs_axis[j], xs_axis[k]])
                for mu in range(m):
                    g = action.local_gradient(mu, (j, k), eps)
                    target = h * h * ev[mu]
                    deviations.append(abs(g - target))
                    targets.append(abs(target))
                    interior_grads.append(abs(g))
        if want_flux:
            ring = [(0, k) for k in range(nodes)] + [(nodes - 1, k) for k in range(nodes)] \
                + [(j, 0) for j in range(1, nodes - 1)] \
                + [(j, nodes - 1) for j in range(1, nodes - 1)]
            for idx in ring:
                for mu in range(m):
                    flux = max(flux, abs(action.local_gradient(mu, idx, eps)))
    scale = max(targets) if targets else 0.0
    vacuous = scale < 1e-12 * max(1.0, max(interior_grads, default=0.0))
    max_dev = max(deviations) if deviations else 0.0
    rel = max_dev / scale if scale > 0 else max(interior_grads, default=0.0)
    interior_ratio = (
        max(interior_grads, default=0.0) / flux if flux > 0 else float("nan")
    )
    return rel, vacuous, flux, interior_ratio


def convergence_study(L, gamma: PolySection, node_counts: Sequence[int],
                      ctx: JetContext, eps: float = 1e-5,
                      want_flux: bool = False):
    """Relative gradient errors per grid size and the orders between them."""
    L = as_lagrangian(L)
    if L.order > 1:
        raise JetError("the discrete action supports first-order Lagrangians")
    for a in L.density.atoms():
        if isinstance(a, FuncAtom):
            raise JetError("the discrete action needs a polynomial Lagrangian")
    work = ctx.with_order(max(ctx.max_order, 2))
    rows = []
    for nodes in node_counts:
        GridSpec(ctx.n, nodes)  # validate
        rel, vac, flux, ratio = _grad_check_single(
            L, gamma, nodes, work, eps, want_flux
        )
        rows.append({
            "nodes": nodes, "rel_error": float(rel), "vacuous": bool(vac),
            "boundary_flux": float(flux), "interior_ratio": float(ratio),
        })
    orders = []
    for a, b in zip(rows, rows[1:]):
        if a["vacuous"] or b["vacuous"] or b["rel_error"] <= 0:
            orders.append(float("nan"))
        else:
            ratio = math.log(b["nodes"] - 1) - math.log(a["nodes"] - 1)
            orders.append(
                (math.log(a["rel_error"]) - math.log(b["rel_error"])) / ratio
            )
    return rows, orders


def discrete_action_gradient_check(L, gamma: PolySection, grid: GridSpec,
                                   ctx: JetContext,
                                   eps: float = 1e-5,
                                   want_flux: bool = False) -> GradCheckReport:
    """Compare node-wise action derivatives against quadrature-weighted Euler
    expressions at the grid size and its double.

    The comparison runs over interior nodes at depth two and more: nodes
    adjacent to the fixed boundary see the one-sided stencils and carry a
    non-converging defect of the trapezoid scheme.
    """
    rows, orders = convergence_study(
        L, gamma, [grid.nodes, grid.nodes * 2], ctx, eps, want_flux
    )
    return GradCheckReport(
        max_rel_error=rows[0]["rel_error"],
        convergence_order=orders[0],
        vacuous=rows[0]["vacuous"] and rows[1]["vacuous"],
        errors_by_nodes={r["nodes"]: r["rel_error"] for r in rows},
        boundary_flux=rows[0]["boundary_flux"],
        interior_ratio=rows[0]["interior_ratio"],
    )
