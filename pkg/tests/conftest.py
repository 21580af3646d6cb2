"""Shared deterministic random generators for the property tests."""

import itertools
import random
from fractions import Fraction

import pytest

from jetvar import (
    Expr,
    ProjectableField,
    PolySection,
    DiffForm,
    ZERO,
    x_,
    z_,
)


@pytest.fixture
def rng(request):
    """Deterministic per-test RNG, seeded by the test name."""
    return random.Random(hash(request.node.name) % (2 ** 31))


def small_fraction(rnd, lo=-4, hi=4):
    num = rnd.randint(lo, hi)
    den = rnd.randint(1, 3)
    return Fraction(num, den)


def coordinate_pool(ctx, order):
    pool = [x_(i) for i in ctx.base_range()]
    for mu in ctx.fiber_range():
        for s in range(order + 1):
            for index in ctx.multi_indices(s):
                pool.append(z_(mu, index))
    return pool


def random_expr(ctx, rnd, order=1, terms=3, max_pow=2, max_factors=2):
    """Random differential polynomial of bounded jet order."""
    pool = coordinate_pool(ctx, order)
    out = ZERO
    for _ in range(terms):
        coeff = small_fraction(rnd)
        if coeff == 0:
            coeff = Fraction(1)
        term = Expr.const(coeff)
        for _ in range(rnd.randint(0, max_factors)):
            atom = rnd.choice(pool)
            term = term * Expr.atom(atom) ** rnd.randint(1, max_pow)
        out = out + term
    return out


def random_lagrangian(ctx, rnd, order=1, terms=3):
    e = random_expr(ctx, rnd, order=order, terms=terms)
    if e.order() < order:
        # make sure the top order actually appears
        index = tuple(sorted(rnd.choice(list(ctx.multi_indices(order)))))
        e = e + Expr.atom(z_(rnd.randint(1, ctx.m), index))
    return e


def random_base_poly(ctx, rnd, degree=2, terms=2):
    out = ZERO
    for _ in range(terms):
        coeff = small_fraction(rnd)
        term = Expr.const(coeff if coeff else Fraction(1))
        for _ in range(rnd.randint(0, degree)):
            term = term * Expr.atom(x_(rnd.randint(1, ctx.n)))
        out = out + term
    return out


def random_order0_poly(ctx, rnd, degree=2, terms=2):
    pool = [x_(i) for i in ctx.base_range()] + [z_(mu) for mu in ctx.fiber_range()]
    out = ZERO
    for _ in range(terms):
        coeff = small_fraction(rnd)
        term = Expr.const(coeff if coeff else Fraction(1))
        for _ in range(rnd.randint(0, degree)):
            term = term * Expr.atom(rnd.choice(pool))
        out = out + term
    return out


def random_projectable_field(ctx, rnd, vertical=False):
    xi = [
        ZERO if vertical else random_base_poly(ctx, rnd, degree=2, terms=2)
        for _ in ctx.base_range()
    ]
    eta = [random_order0_poly(ctx, rnd, degree=2, terms=2)
           for _ in ctx.fiber_range()]
    return ProjectableField(xi, eta)


def random_section(ctx, rnd, degree=3):
    comps = []
    for _ in ctx.fiber_range():
        e = ZERO
        for powers in itertools.product(range(degree + 1), repeat=ctx.n):
            if sum(powers) > degree or rnd.random() < 0.4:
                continue
            term = Expr.const(small_fraction(rnd) or Fraction(1, 2))
            for i, p in zip(ctx.base_range(), powers):
                term = term * Expr.atom(x_(i)) ** p if p else term
            e = e + term
        if e.is_zero():
            e = Expr.atom(x_(1)) ** 2
        comps.append(e)
    return PolySection(comps)


def random_form(ctx, rnd, degree, order=1, terms=3):
    pool = coordinate_pool(ctx, order)
    items = []
    for _ in range(terms):
        basis = tuple(rnd.sample(pool, degree)) if degree else ()
        items.append((basis, random_expr(ctx, rnd, order=order, terms=2)))
    return DiffForm.from_terms(degree, items)


def random_order0_form(ctx, rnd, degree, terms=3):
    pool = [x_(i) for i in ctx.base_range()] + [z_(mu) for mu in ctx.fiber_range()]
    items = []
    for _ in range(terms):
        if degree > len(pool):
            break
        basis = tuple(rnd.sample(pool, degree)) if degree else ()
        items.append((basis, random_order0_poly(ctx, rnd)))
    return DiffForm.from_terms(degree, items)
