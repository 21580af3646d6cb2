"""Command dispatch, output formats, exit codes, and the golden models."""

import io
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from jetvar.cli import main

ROOT = Path(__file__).resolve().parent.parent
MODELS = ROOT / "models"
GOLDEN = Path(__file__).resolve().parent / "golden"


def run_cli(args, stdin_text=None, env=None):
    """Invoke the entry point in-process, capturing stdout/stderr."""
    old_out, old_err, old_in = sys.stdout, sys.stderr, sys.stdin
    sys.stdout, sys.stderr = io.StringIO(), io.StringIO()
    old_env = {}
    for k, v in (env or {}).items():
        old_env[k] = os.environ.get(k)
        os.environ[k] = v
    if stdin_text is not None:
        sys.stdin = io.StringIO(stdin_text)
    try:
        try:
            code = main(args)
        except SystemExit as exc:  # argparse usage errors
            code = exc.code if isinstance(exc.code, int) else 2
        return code, sys.stdout.getvalue(), sys.stderr.getvalue()
    finally:
        sys.stdout, sys.stderr, sys.stdin = old_out, old_err, old_in
        for k, v in old_env.items():
            if v is None:
                os.environ.pop(k, None)
            else:
                os.environ[k] = v


class TestGolden:
    CASES = [
        (["--format", "json", "nulltest", str(MODELS / "counterexample.jv")],
         "counterexample_nulltest.json"),
        (["--format", "json", "euler", str(MODELS / "free_particle.jv")],
         "free_particle_euler.json"),
        (["--format", "json", "invariance", "--field", "Xb",
          str(MODELS / "free_particle.jv")],
         "free_particle_invariance_boost.json"),
        (["--format", "json", "current", "--field", "Xx",
          str(MODELS / "free_particle.jv")],
         "free_particle_current_energy.json"),
        (["--format", "json", "covariance", str(MODELS / "tx_covariance.jv")],
         "tx_covariance_covariance.json"),
    ]

    @pytest.mark.parametrize("args,golden", CASES)
    def test_byte_identical_output(self, args, golden):
        code, out, err = run_cli(args)
        assert code == 0, err
        assert out == (GOLDEN / golden).read_text()

    def test_json_deterministic(self):
        args = ["--format", "json", "euler", str(MODELS / "free_particle.jv")]
        outs = {run_cli(args)[1] for _ in range(3)}
        assert len(outs) == 1

    def test_euler_result_shape(self):
        code, out, _ = run_cli(
            ["--format", "json", "euler", str(MODELS / "free_particle.jv")]
        )
        payload = json.loads(out)
        assert payload["result"]["E"] == {"1": "-y1_11"}

    def test_counterexample_is_null(self):
        code, out, _ = run_cli(
            ["--format", "json", "nulltest", str(MODELS / "counterexample.jv")]
        )
        assert json.loads(out)["result"]["is_null"] is True


class TestDispatch:
    def test_noether_translation(self):
        code, out, _ = run_cli(
            ["--format", "json", "noether", "--field", "Xy",
             str(MODELS / "free_particle.jv")]
        )
        payload = json.loads(out)["result"]
        assert payload == {"invariant": True, "residual": "0"}

    def test_makenull_roundtrip(self):
        code, out, _ = run_cli(
            ["--format", "json", "makenull", "--form", "eta",
             str(MODELS / "counterexample.jv")]
        )
        assert code == 0
        L = json.loads(out)["result"]["L"]
        assert "diff(f, x1)" in L

    def test_lepage_both_methods(self):
        for method in ("theta", "delta"):
            code, out, _ = run_cli(
                ["--format", "json", "lepage", "--method", method,
                 str(MODELS / "free_particle.jv")]
            )
            assert code == 0
            assert json.loads(out)["result"]["form"]

    def test_split_reports_momenta(self):
        code, out, _ = run_cli(
            ["--format", "json", "split", str(MODELS / "free_particle.jv")]
        )
        payload = json.loads(out)["result"]
        assert payload["A"] == {"1,1": "y1_1"}
        assert payload["lepagean"] is False

    def test_weakcritical(self):
        code, out, _ = run_cli(
            ["--format", "json", "weakcritical",
             str(MODELS / "tx_covariance.jv")]
        )
        assert code == 0
        assert set(json.loads(out)["result"]["W"]) == {"1", "2"}

    def test_residual_on_extremal(self):
        code, out, _ = run_cli(
            ["--format", "json", "residual", "--section", "line",
             str(MODELS / "free_particle.jv")]
        )
        assert json.loads(out)["result"]["residuals"] == {"1": "0"}

    def test_symmetric_systems(self):
        code, out, _ = run_cli(
            ["--format", "json", "symmetric", "--fields", "Xb,Xy",
             str(MODELS / "free_particle.jv")]
        )
        systems = json.loads(out)["result"]["systems"]
        assert systems[0]["E"] == {"1": "-y1_11"}
        assert systems[1]["E"] == {"1": "0"}

    def test_gradcheck_with_reports(self, tmp_path):
        csv_path = tmp_path / "conv.csv"
        fig_path = tmp_path / "conv.png"
        code, out, _ = run_cli(
            ["--format", "json", "gradcheck", "--section", "para",
             "--grid", "40", "--csv", str(csv_path), "--plot", str(fig_path),
             str(MODELS / "free_particle.jv")]
        )
        assert code == 0
        payload = json.loads(out)["result"]
        assert payload["max_rel_error"] < 1e-3
        assert csv_path.exists()
        assert csv_path.read_text().startswith("nodes,rel_error")
        assert fig_path.exists() and fig_path.stat().st_size > 1000

    def test_stdin_model(self):
        code, out, _ = run_cli(
            ["--format", "json", "euler", "-"],
            stdin_text=(MODELS / "free_particle.jv").read_text(),
        )
        assert code == 0
        assert json.loads(out)["result"]["E"] == {"1": "-y1_11"}

    def test_warnings_surface_in_envelope(self):
        text = (
            "[space]\nbase_dim = 2\nfiber_dim = 1\norder = 2\n"
            "[lagrangian]\nL = y1_21\n"
        )
        code, out, _ = run_cli(
            ["--format", "json", "euler", "-"], stdin_text=text
        )
        assert code == 0
        payload = json.loads(out)
        assert any("normalized" in w for w in payload["warnings"])

    def test_env_order_override(self):
        text = (MODELS / "free_particle.jv").read_text().replace(
            "1/2 * y1_1^2", "1/2 * y1_11^2"
        )
        code, _, err = run_cli(
            ["euler", "-"], stdin_text=text,
        )
        assert code == 1  # order 2 coordinate under a cap of 1
        code, out, _ = run_cli(
            ["--format", "json", "euler", "-"], stdin_text=text,
            env={"JETVAR_MAX_ORDER": "2"},
        )
        assert code == 0
        assert json.loads(out)["result"]["E"] == {"1": "y1_1111"}


class TestExitCodes:
    def test_domain_error(self):
        code, _, err = run_cli(
            ["noether", "--field", "nope", str(MODELS / "free_particle.jv")]
        )
        assert code == 1
        assert "unknown field" in err

    def test_missing_file(self):
        code, _, err = run_cli(["euler", str(MODELS / "missing.jv")])
        assert code == 1

    def test_usage_error(self):
        code, _, _ = run_cli(["not-a-command", "x"])
        assert code == 2

    def test_parse_error_is_domain(self):
        code, _, err = run_cli(["euler", "-"], stdin_text="[space]\n")
        assert code == 1
        assert "missing" in err

    def test_console_script_installed(self):
        proc = subprocess.run(
            ["jetvar", "--format", "json", "euler",
             str(MODELS / "free_particle.jv")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["result"]["E"] == {"1": "-y1_11"}


class TestFormatsAgree:
    def test_three_renderings_same_exprs(self):
        base = ["euler", str(MODELS / "free_particle.jv")]
        _, text_out, _ = run_cli(["--format", "text"] + base)
        _, json_out, _ = run_cli(["--format", "json"] + base)
        _, latex_out, _ = run_cli(["--format", "latex"] + base)
        canonical = json.loads(json_out)["result"]["E"]["1"]
        assert f"result.E.1 = {canonical}" in text_out
        from jetvar.model import parse_expression
        from jetvar import JetContext
        from jetvar.render import expr_latex

        ctx = JetContext(1, 1, 4)
        expr = parse_expression(canonical, ctx)
        assert f"result.E.1 = $ {expr_latex(expr)} $" in latex_out
