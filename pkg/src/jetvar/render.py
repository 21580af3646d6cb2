"""Deterministic text and LaTeX renderers for expressions and forms.

The text renderer emits exactly the grammar the model parser reads, so every
canonical value round-trips; identical values always produce identical bytes.
"""

from __future__ import annotations

from fractions import Fraction

from .algebra import BaseCoord, Expr, FuncAtom, JetCoord
from .forms import DiffForm


def atom_text(a) -> str:
    if isinstance(a, BaseCoord):
        return f"x{a.i}"
    if isinstance(a, JetCoord):
        if not a.index:
            return f"y{a.mu}"
        return f"y{a.mu}_" + "".join(str(i) for i in a.index)
    if isinstance(a, FuncAtom):
        if not a.deriv:
            return a.symbol.name
        inner = ", ".join(atom_text(a.symbol.args[p]) for p in a.deriv)
        return f"diff({a.symbol.name}, {inner})"
    raise TypeError(f"not an atom: {a!r}")


def _coeff_text(c: Fraction) -> str:
    if c.denominator == 1:
        return str(c.numerator)
    return f"{c.numerator}/{c.denominator}"


def expr_text(e: Expr) -> str:
    if not e.terms:
        return "0"
    chunks = []
    for mono, coeff in e.terms:
        mono_txt = "*".join(
            atom_text(a) + (f"^{p}" if p > 1 else "") for a, p in mono
        )
        neg = coeff < 0
        mag = -coeff if neg else coeff
        if not mono_txt:
            body = _coeff_text(mag)
        elif mag == 1:
            body = mono_txt
        else:
            body = f"{_coeff_text(mag)}*{mono_txt}"
        chunks.append(("-" if neg else "+", body))
    sign, body = chunks[0]
    out = ("-" if sign == "-" else "") + body
    for sign, body in chunks[1:]:
        out += f" {sign} {body}"
    return out


def covector_text(c) -> str:
    return "d" + atom_text(c)


def form_text(f: DiffForm) -> str:
    if f.degree == 0:
        return expr_text(f.as_expr())
    if not f.terms:
        return "0"
    parts = []
    for basis, coeff in f.terms:
        basis_txt = "*".join(covector_text(c) for c in basis)
        if coeff == Expr.const(1):
            parts.append(("+", basis_txt))
        elif coeff == Expr.const(-1):
            parts.append(("-", basis_txt))
        elif len(coeff.terms) == 1 and coeff.terms[0][1] > 0:
            parts.append(("+", f"{expr_text(coeff)}*{basis_txt}"))
        else:
            parts.append(("+", f"({expr_text(coeff)})*{basis_txt}"))
    sign, body = parts[0]
    out = ("-" if sign == "-" else "") + body
    for sign, body in parts[1:]:
        out += f" {sign} {body}"
    return out


# ---------------------------------------------------------------------------
# LaTeX
# ---------------------------------------------------------------------------

def atom_latex(a) -> str:
    if isinstance(a, BaseCoord):
        return f"x_{{{a.i}}}"
    if isinstance(a, JetCoord):
        if not a.index:
            return f"y_{{{a.mu}}}"
        idx = "".join(str(i) for i in a.index)
        return f"z^{{{a.mu}}}_{{{idx}}}"
    if isinstance(a, FuncAtom):
        if not a.deriv:
            return a.symbol.name
        subs = " ".join(atom_latex(a.symbol.args[p]) for p in a.deriv)
        return f"{a.symbol.name}_{{{subs}}}"
    raise TypeError(f"not an atom: {a!r}")


def _coeff_latex(c: Fraction) -> str:
    if c.denominator == 1:
        return str(c.numerator)
    sign = "-" if c < 0 else ""
    return f"{sign}\\tfrac{{{abs(c.numerator)}}}{{{c.denominator}}}"


def expr_latex(e: Expr) -> str:
    if not e.terms:
        return "0"
    chunks = []
    for mono, coeff in e.terms:
        mono_txt = " ".join(
            atom_latex(a) + (f"^{{{p}}}" if p > 1 else "") for a, p in mono
        )
        neg = coeff < 0
        mag = -coeff if neg else coeff
        if not mono_txt:
            body = _coeff_latex(mag)
        elif mag == 1:
            body = mono_txt
        else:
            body = f"{_coeff_latex(mag)} {mono_txt}"
        chunks.append(("-" if neg else "+", body))
    sign, body = chunks[0]
    out = ("-" if sign == "-" else "") + body
    for sign, body in chunks[1:]:
        out += f" {sign} {body}"
    return out


def covector_latex(c) -> str:
    if isinstance(c, BaseCoord):
        return f"\\mathrm{{d}}x_{{{c.i}}}"
    if not c.index:
        return f"\\mathrm{{d}}y_{{{c.mu}}}"
    idx = "".join(str(i) for i in c.index)
    return f"\\mathrm{{d}}z^{{{c.mu}}}_{{{idx}}}"


def form_latex(f: DiffForm) -> str:
    if f.degree == 0:
        return expr_latex(f.as_expr())
    if not f.terms:
        return "0"
    parts = []
    for basis, coeff in f.terms:
        basis_txt = " \\wedge ".join(covector_latex(c) for c in basis)
        if coeff == Expr.const(1):
            parts.append(basis_txt)
        else:
            parts.append(
                f"\\left({expr_latex(coeff)}\\right) {basis_txt}"
            )
    return " + ".join(parts)
