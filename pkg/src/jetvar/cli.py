"""Command-line interface: parse a model file, run one operation, emit the
result as text, JSON, or LaTeX.

Exit codes: 0 on success, 1 on a domain error from the engine or the model
file, 2 on usage errors.  The model path ``-`` reads from stdin; the
environment variable ``JETVAR_MAX_ORDER`` overrides the declared order cap.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Optional

from .algebra import Expr, JetError
from .fields import TensorType
from .forms import DiffForm
from .model import ModelError, ModelFile, parse_model
from .numeric import GridSpec, convergence_study
from .render import expr_latex, expr_text, form_latex, form_text
from .symmetry import (
    conserved_current,
    covariance_system,
    generalized_invariance_check,
    noether_check,
    symmetric_system,
    weak_critical_system,
)
from .variational import (
    EulerSystem,
    canonical_split,
    euler,
    extremal_residual,
    lepage_delta,
    lepage_theta,
    null_certificate,
    null_from_form,
    StructureError,
    ConsistencyError,
)


class _Usage(Exception):
    pass


def _euler_dict(E: EulerSystem) -> dict:
    return {str(mu): e for mu, e in enumerate(E.components, start=1)}


def _need(model: ModelFile, attr: str, what: str):
    value = getattr(model, attr, None)
    if not value:
        raise JetError(f"the model declares no {what}")
    return value


def _named(mapping: dict, name: str, what: str):
    try:
        return mapping[name]
    except KeyError:
        known = ", ".join(sorted(mapping)) or "none"
        raise JetError(f"unknown {what} {name!r} (declared: {known})") from None


def _lagrangian(model: ModelFile):
    if model.lagrangian is None:
        raise JetError("the model declares no Lagrangian")
    return model.lagrangian


def _tensor_type(model: ModelFile) -> TensorType:
    if model.tensor_type is None:
        raise JetError("the model declares no tensor_type")
    return model.tensor_type


# ---------------------------------------------------------------------------
# Command implementations: each returns a structured result
# ---------------------------------------------------------------------------

def cmd_euler(model: ModelFile, args) -> dict:
    E = euler(_lagrangian(model), model.context)
    return {"E": _euler_dict(E)}


def cmd_lepage(model: ModelFile, args) -> dict:
    L = _lagrangian(model)
    if args.method == "theta":
        form = lepage_theta(L, model.context)
    else:
        form = lepage_delta(L, model.context)
    return {"method": args.method, "form": form}


def cmd_split(model: ModelFile, args) -> dict:
    ctx = model.context
    if args.form:
        rho = _named(model.forms, args.form, "form")
    else:
        rho = _lagrangian(model).form(ctx)
    split = canonical_split(rho, ctx)
    A = {
        f"{k},{nu}": e for (k, nu), e in sorted(split.A.items())
    }
    return {
        "G": split.G,
        "A": A,
        "E": _euler_dict(split.E),
        "lepagean": not A,
    }


def cmd_nulltest(model: ModelFile, args) -> dict:
    ctx = model.context
    L = _lagrangian(model)
    E = euler(L, ctx)
    result: dict = {"is_null": E.is_zero()}
    if E.is_zero():
        try:
            result["certificate"] = null_certificate(L, ctx)
        except (StructureError, ConsistencyError, JetError):
            result["certificate"] = None
    else:
        result["certificate"] = None
        result["E"] = _euler_dict(E)
    return result


def cmd_makenull(model: ModelFile, args) -> dict:
    ctx = model.context
    eta = _named(model.forms, args.form, "form")
    L = null_from_form(eta, ctx)
    return {"L": L.density}


def cmd_noether(model: ModelFile, args) -> dict:
    field = _named(model.fields, args.field, "field")
    ok, residual = noether_check(_lagrangian(model), field, model.context)
    return {"invariant": ok, "residual": residual}


def cmd_invariance(model: ModelFile, args) -> dict:
    field = _named(model.fields, args.field, "field")
    verdict = generalized_invariance_check(
        _lagrangian(model), field, model.context
    )
    return {
        "invariant": verdict.invariant,
        "generalized_invariant": verdict.generalized_invariant,
        "lie_derivative": verdict.lie_value,
        "euler_of_lie": _euler_dict(verdict.euler_of_lie),
        "certificate": verdict.certificate,
    }


def cmd_current(model: ModelFile, args) -> dict:
    field = _named(model.fields, args.field, "field")
    cc = conserved_current(_lagrangian(model), field, model.context)
    return {
        "J": {str(k): j for k, j in enumerate(cc.currents, start=1)},
        "divergence": cc.divergence,
        "euler_pairing": cc.euler_pairing,
        "lie_derivative": cc.lie_value,
    }


def cmd_symmetric(model: ModelFile, args) -> dict:
    names = [n for n in args.fields.split(",") if n]
    fields = [_named(model.fields, n, "field") for n in names]
    systems = symmetric_system(_lagrangian(model), fields, model.context)
    out = [{"field": None, "E": _euler_dict(systems[0])}]
    for name, system in zip(names, systems[1:]):
        out.append({"field": name, "E": _euler_dict(system)})
    return {"systems": out}


def cmd_covariance(model: ModelFile, args) -> dict:
    table = covariance_system(
        _lagrangian(model), _tensor_type(model), model.context
    )
    blocks = {}
    for d in sorted(table.blocks):
        entries = {}
        for (C, p, deriv) in sorted(table.blocks[d]):
            key = f"C{C},p{p}"
            if deriv:
                key += "," + "".join(str(i) for i in deriv)
            entries[key] = table.blocks[d][(C, p, deriv)]
        blocks[str(d)] = entries
    return {
        "generally_covariant": table.is_zero(),
        "blocks": blocks,
        "first_block_matches_x_derivatives": table.first_block_check,
    }


def cmd_weakcritical(model: ModelFile, args) -> dict:
    W = weak_critical_system(
        _lagrangian(model), _tensor_type(model), model.context
    )
    return {"W": {str(l): w for l, w in enumerate(W, start=1)}}


def cmd_residual(model: ModelFile, args) -> dict:
    section = _named(model.sections, args.section, "section")
    res = extremal_residual(_lagrangian(model), section, model.context)
    return {"residuals": {str(mu): e for mu, e in enumerate(res, start=1)}}


def cmd_gradcheck(model: ModelFile, args) -> dict:
    section = _named(model.sections, args.section, "section")
    ctx = model.context
    GridSpec(ctx.n, args.grid)
    node_counts = [args.grid * (2 ** k) for k in range(args.levels)]
    rows, orders = convergence_study(
        _lagrangian(model), section, node_counts, ctx, want_flux=args.flux
    )
    if args.csv:
        from .report import write_convergence_csv

        write_convergence_csv(args.csv, rows, orders)
    if args.plot:
        from .report import write_convergence_figure

        write_convergence_figure(args.plot, rows)
    result = {
        "max_rel_error": rows[0]["rel_error"],
        "convergence_order": orders[0] if orders else None,
        "vacuous": bool(rows[0]["vacuous"]),
        "errors_by_nodes": {
            str(r["nodes"]): r["rel_error"] for r in rows
        },
    }
    if args.flux:
        result["boundary_flux"] = rows[0]["boundary_flux"]
        result["interior_ratio"] = rows[0]["interior_ratio"]
    if args.csv:
        result["csv"] = args.csv
    if args.plot:
        result["figure"] = args.plot
    return result


_COMMANDS = {
    "euler": cmd_euler,
    "lepage": cmd_lepage,
    "split": cmd_split,
    "nulltest": cmd_nulltest,
    "makenull": cmd_makenull,
    "noether": cmd_noether,
    "invariance": cmd_invariance,
    "current": cmd_current,
    "symmetric": cmd_symmetric,
    "covariance": cmd_covariance,
    "weakcritical": cmd_weakcritical,
    "residual": cmd_residual,
    "gradcheck": cmd_gradcheck,
}


# ---------------------------------------------------------------------------
# Serialization of structured results
# ---------------------------------------------------------------------------

def _to_json(value):
    if isinstance(value, Expr):
        return expr_text(value)
    if isinstance(value, DiffForm):
        return form_text(value)
    if isinstance(value, dict):
        return {k: _to_json(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_json(v) for v in value]
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            return None
        return float(value)
    return value


def _flatten(value, path: str, mode: str, lines: list) -> None:
    if isinstance(value, Expr):
        body = expr_text(value) if mode == "text" else f"$ {expr_latex(value)} $"
        lines.append(f"{path} = {body}")
    elif isinstance(value, DiffForm):
        body = form_text(value) if mode == "text" else f"$ {form_latex(value)} $"
        lines.append(f"{path} = {body}")
    elif isinstance(value, dict):
        for k in value:
            sub = f"{path}.{k}" if path else str(k)
            _flatten(value[k], sub, mode, lines)
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            _flatten(v, f"{path}[{i}]", mode, lines)
    elif value is None:
        lines.append(f"{path} = none")
    elif isinstance(value, bool):
        lines.append(f"{path} = {'true' if value else 'false'}")
    elif isinstance(value, float):
        lines.append(f"{path} = {value!r}")
    else:
        lines.append(f"{path} = {value}")


def render_result(model: ModelFile, result: dict, fmt: str) -> str:
    envelope = {
        "context": {
            "base_dim": model.context.n,
            "fiber_dim": model.context.m,
            "order": model.context.max_order,
        },
        "result": result,
        "warnings": list(model.warnings),
    }
    if fmt == "json":
        return json.dumps(_to_json(envelope), sort_keys=True, indent=2) + "\n"
    lines: list = []
    _flatten(envelope["context"], "context", fmt, lines)
    _flatten(result, "result", fmt, lines)
    for w in model.warnings:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jetvar",
        description="Symbolic variational calculus on jet bundles.",
    )
    parser.add_argument(
        "--format", choices=("text", "json", "latex"), default="text",
        help="output rendering (default: text)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("model", help="model file path, or - for stdin")
        return p

    add("euler", "Euler expressions of the Lagrangian")
    p = add("lepage", "a Lepage equivalent of the Lagrangian")
    p.add_argument("--method", choices=("theta", "delta"), default="delta")
    p = add("split", "canonical split of an n-form (G, A, E)")
    p.add_argument("--form", help="use a named form instead of L*omega0")
    add("nulltest", "decide whether the Lagrangian is null")
    p = add("makenull", "Lagrangian h(d eta) generated by a form on Y")
    p.add_argument("--form", required=True)
    p = add("noether", "invariance of L under a field")
    p.add_argument("--field", required=True)
    p = add("invariance", "invariance and generalized invariance verdicts")
    p.add_argument("--field", required=True)
    p = add("current", "conserved current of a field")
    p.add_argument("--field", required=True)
    p = add("symmetric", "Euler systems of a prescribed-symmetry problem")
    p.add_argument("--fields", required=True,
                   help="comma-separated field names")
    add("covariance", "general-covariance coefficient table")
    add("weakcritical", "weak critical equations on the tensor bundle")
    p = add("residual", "Euler residuals along a section")
    p.add_argument("--section", required=True)
    p = add("gradcheck", "discrete-action gradient check along a section")
    p.add_argument("--section", required=True)
    p.add_argument("--grid", type=int, default=50,
                   help="nodes per axis (default 50)")
    p.add_argument("--levels", type=int, default=2,
                   help="number of doublings to measure (default 2)")
    p.add_argument("--flux", action="store_true",
                   help="also measure the boundary flux")
    p.add_argument("--csv", help="write per-grid errors as CSV")
    p.add_argument("--plot", help="render the convergence figure to a file")
    return parser


def _load_model(path: str) -> ModelFile:
    if path == "-":
        text = sys.stdin.read()
    else:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise JetError(f"cannot read model: {exc}") from None
    override = None
    env = os.environ.get("JETVAR_MAX_ORDER")
    if env is not None:
        try:
            override = int(env)
        except ValueError:
            raise JetError("JETVAR_MAX_ORDER must be an integer") from None
    return parse_model(text, order_override=override)


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        model = _load_model(args.model)
        result = _COMMANDS[args.command](model, args)
        sys.stdout.write(render_result(model, result, args.format))
        return 0
    except (JetError, ModelError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
