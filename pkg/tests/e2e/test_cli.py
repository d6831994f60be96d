from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any

import pytest

from apps.solver.__main__ import main

pytestmark = pytest.mark.e2e

ROOT = Path(__file__).resolve().parents[2]


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch: pytest.MonkeyPatch) -> None:
    for key in list(os.environ):
        if key.startswith("EJH_"):
            monkeypatch.delenv(key)


def _write(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "run.toml"
    path.write_text(text, encoding="utf-8")
    return path


def _report(out: Path) -> dict[str, Any]:
    return json.loads((out / "report.json").read_text(encoding="utf-8"))


CONSTANT_COST = """
mode = "ergodic"

[problem]
family = "constant-cost"
kappa = 2.0

[grid]
hx = 0.25
radii = [4.0, 8.0]

[solver]
tol = 1e-8
alphas = [0.5, 0.25, 0.125]
"""


def test_constant_cost_ergodic_run(tmp_path: Path):
    out = tmp_path / "out"
    code = main(["--config", str(_write(tmp_path, CONSTANT_COST)), "--output", str(out), "--quiet"])
    assert code == 0

    report = _report(out)
    assert report["status"] == "ok"
    assert report["lambda_star"] == pytest.approx(2.0, abs=1e-9)
    assert [lv["alpha"] for lv in report["alpha_trace"]] == [0.5, 0.25, 0.125]
    assert all(i["passed"] for i in report["invariants"] if i["hard"])

    header = (out / "solution.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "x1,u"
    assert (out / "trace.csv").exists()
    meta = json.loads((out / "metadata.json").read_text(encoding="utf-8"))
    assert meta["workers"] == 1


def test_report_is_byte_identical_across_runs(tmp_path: Path):
    config = str(_write(tmp_path, CONSTANT_COST))
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["--config", config, "--output", str(first), "--quiet"]) == 0
    assert main(["--config", config, "--output", str(second), "--workers", "2", "--quiet"]) == 0
    assert (first / "report.json").read_bytes() == (second / "report.json").read_bytes()
    assert (first / "solution.csv").read_bytes() == (second / "solution.csv").read_bytes()


def test_certify_shipped_example(tmp_path: Path):
    out = tmp_path / "cert"
    config = ROOT / "configs" / "runs" / "example-certify.toml"
    assert main(["--config", str(config), "--output", str(out), "--quiet"]) == 0

    cert = json.loads((out / "certificate.json").read_text(encoding="utf-8"))
    assert cert["violations"] == []
    assert cert["envelope"]["k0"] > 0.0
    assert _report(out)["summary"]["fit"] == "slope"
    assert (out / "certificate.csv").read_text(encoding="utf-8").startswith("x1,LV,envelope\n")


def test_unknown_key_is_a_validation_failure(tmp_path: Path, capsys: pytest.CaptureFixture[str]):
    out = tmp_path / "out"
    config = _write(tmp_path, "[grid]\nhx = 0.25\nspacing = 0.1\n")
    assert main(["--config", str(config), "--output", str(out), "--quiet"]) == 1

    report = _report(out)
    assert report["status"] == "validation-failed"
    assert report["error"]["code"] == "config"
    assert "spacing" in report["error"]["key"]
    assert "spacing" in capsys.readouterr().err


def test_broken_constraint_chain_is_reported(tmp_path: Path):
    out = tmp_path / "out"
    config = _write(
        tmp_path,
        'mode = "certify"\n[problem]\nfamily = "example-1-1"\ngamma = 1.2\ntheta = 0.1\ns = 0.9\n',
    )
    assert main(["--config", str(config), "--output", str(out), "--quiet"]) == 1
    error = _report(out)["error"]
    assert error["code"] == "constraint"
    assert "gamma > s + 1/2" in error["detail"]


def test_unstabilized_domain_exits_with_not_converged(tmp_path: Path):
    out = tmp_path / "out"
    config = _write(
        tmp_path,
        """
        mode = "discounted"

        [problem]
        family = "constant-cost"

        [grid]
        hx = 0.25
        radii = [4.0, 8.0]

        [solver]
        alpha = 0.5
        exterior = "zero"
        domain_tol = 1e-12
        """,
    )
    assert main(["--config", str(config), "--output", str(out), "--quiet"]) == 2

    report = _report(out)
    assert report["status"] == "not-converged"
    failed = {i["name"] for i in report["invariants"] if not i["passed"]}
    assert "domain-stabilized" in failed
    assert (out / "solution.csv").read_text(encoding="utf-8").splitlines()[0] == "x1,w"


@pytest.mark.slow
def test_shipped_ergodic_example_is_accepted(tmp_path: Path):
    out = tmp_path / "ergodic"
    config = ROOT / "configs" / "runs" / "example-ergodic.toml"
    assert main(["--config", str(config), "--output", str(out), "--quiet"]) == 0

    report = _report(out)
    invariants = {i["name"]: i for i in report["invariants"]}
    assert invariants["converged"]["passed"]
    assert invariants["ergodic-residual"]["passed"]
    assert invariants["ergodic-residual"]["value"] <= 1e-4
    assert invariants["uniqueness-probe"]["passed"]
    assert report["alpha_trace"][-1]["remainder"] <= 1e-4


@pytest.mark.slow
def test_shipped_discounted_example_stabilizes(tmp_path: Path):
    out = tmp_path / "discounted"
    config = ROOT / "configs" / "runs" / "example-discounted.toml"
    assert main(["--config", str(config), "--output", str(out), "--quiet"]) == 0

    report = _report(out)
    changes = [r["change"] for r in report["radius_trace"] if r["change"] is not None]
    assert changes[-1] <= 1e-2
    assert all(b < a for a, b in zip(changes, changes[1:], strict=False))
