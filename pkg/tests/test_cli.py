import json
import math
import subprocess
import sys

import numpy as np
import pytest

from thin_inductor.cli import EXIT_CONFIG, EXIT_OK, EXIT_STAGE, main, run, validate


def _write(tmp_path, cfg, name="config.json"):
    cfg = dict(cfg)
    cfg.setdefault("output_dir", str(tmp_path / "out"))
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


CIRCLE = {"curve": {"preset": "circle", "R": 1.0}, "delta": 0.4}


def _codes(payload):
    return {d["code"] for d in payload["diagnostics"]}


def test_validate_echoes_delta_and_length(tmp_path):
    code, payload = validate(_write(tmp_path, CIRCLE))
    assert code == EXIT_OK and payload["diagnostics"] == []
    assert payload["delta"] == 0.4
    assert payload["length"] == pytest.approx(2 * np.pi, rel=1e-14)
    assert payload["eps_list"] == [0.2, 0.1, 0.05, 0.025, 0.0125]


def test_validate_eta_default_for_ellipse(tmp_path):
    code, payload = validate(_write(tmp_path, {"curve": {"preset": "ellipse", "a": 1.0,
                                                         "b": 0.5}}))
    assert code == EXIT_OK
    assert payload["delta"] == pytest.approx(0.125, rel=1e-9)


@pytest.mark.parametrize("cfg,code", [
    ({**CIRCLE, "eps_list": [0.25]}, "eps_out_of_range"),
    ({**CIRCLE, "eps_list": [0.1, -0.01]}, "eps_out_of_range"),
    ({"curve": {"preset": "fourier", "cos": [[1, 0, 0]], "sin": []}}, "curvature_vanishes"),
    ({"curve": {"preset": "torus_knot", "p": 2, "q": 3, "R": 1.0, "r": 0.3}},
     "tube_not_injective"),
    ({**CIRCLE, "colour": "red"}, "unknown_key"),
    ({**CIRCLE, "mc": {"samples": 5000, "seeds": 1}}, "unknown_key"),
    ({**CIRCLE, "stages": ["fit"]}, "stage_dependency"),
    ({**CIRCLE, "stages": ["plot"]}, "unknown_stage"),
    ({**CIRCLE, "cutoff": "cubic"}, "bad_cutoff"),
    ({**CIRCLE, "delta": 1.2}, "delta_invalid"),
    ({"delta": 0.4}, "missing_curve"),
    ({**CIRCLE, "curve": {"preset": "spiral"}}, "bad_curve"),
    ({**CIRCLE, "seed": -1}, "bad_seed"),
])
def test_validate_diagnostics(tmp_path, cfg, code):
    rc, payload = validate(_write(tmp_path, cfg))
    assert rc == EXIT_CONFIG
    assert code in _codes(payload)


def test_unreadable_and_non_json(tmp_path):
    rc, payload = validate(tmp_path / "missing.json")
    assert rc == EXIT_CONFIG and _codes(payload) == {"config_unreadable"}
    p = tmp_path / "bad.json"
    p.write_text("{curve: circle}")
    rc, payload = validate(p)
    assert rc == EXIT_CONFIG and _codes(payload) == {"config_not_json"}


def test_env_workers_must_be_integer(tmp_path, monkeypatch):
    monkeypatch.setenv("THIN_INDUCTOR_WORKERS", "many")
    rc, payload = validate(_write(tmp_path, CIRCLE))
    assert rc == EXIT_CONFIG and "bad_workers" in _codes(payload)


def test_run_lprime_writes_breakdown(tmp_path):
    rc, report = run(_write(tmp_path, {**CIRCLE, "stages": ["lprime"]}))
    assert rc == EXIT_OK
    lp = json.loads((tmp_path / "out" / "lprime.json").read_text())
    assert {"term_log", "term_phi", "term_tau", "term_tail", "L_prime"} <= set(lp)
    assert lp["L_prime"] == ((lp["term_log"] + lp["term_phi"]) + lp["term_tau"]) + lp["term_tail"]
    assert lp["term_log"] == pytest.approx(math.log(0.2), rel=1e-14)
    saved = json.loads((tmp_path / "out" / "report.json").read_text())
    # every resolved default is echoed
    assert saved["config"]["quadrature"] == {"order": 16}
    assert saved["config"]["delta"]["resolved"] == 0.4
    assert saved["stages"]["lprime"]["status"] == "ok"


def test_run_sweep_oracle_fit(tmp_path):
    cfg = {**CIRCLE, "stages": ["sweep", "oracle", "fit"], "sweep": {"count": 4}}
    rc, report = run(_write(tmp_path, cfg))
    assert rc == EXIT_OK
    lines = (tmp_path / "out" / "sweep.csv").read_text().splitlines()
    assert lines[0] == "eps,asymptotic,oracle,residual,oracle_stderr"
    assert len(lines) == 5
    fit = report["stages"]["fit"]["result"]
    assert fit["slope"] == pytest.approx(1.0, rel=1e-2)
    assert fit["expected_slope"] == pytest.approx(1.0, rel=1e-14)


def test_sweep_without_oracle_writes_nan_columns(tmp_path):
    rc, _ = run(_write(tmp_path, {**CIRCLE, "stages": ["sweep"], "eps_list": [0.1]}))
    assert rc == EXIT_OK
    row = (tmp_path / "out" / "sweep.csv").read_text().splitlines()[1].split(",")
    assert row[0] == "0.10000000000000001" and row[2:] == ["nan", "nan", "nan"]


def test_stage_failure_exit_code(tmp_path):
    # corrections are implemented for axisymmetric tubes only
    cfg = {"curve": {"preset": "ellipse", "a": 1.0, "b": 0.5}, "stages": ["corrections"]}
    rc, report = run(_write(tmp_path, cfg))
    assert rc == EXIT_STAGE
    assert report["stages"]["corrections"]["status"] == "failed"
    assert (tmp_path / "out" / "report.json").exists()


def test_main_exit_codes(tmp_path, capsys):
    good = _write(tmp_path, CIRCLE)
    assert main(["validate", str(good)]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["diagnostics"] == []
    bad = _write(tmp_path, {**CIRCLE, "eps_list": [0.3]}, "bad.json")
    assert main(["run", str(bad)]) == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert err["diagnostics"][0]["code"] == "eps_out_of_range"


def test_console_script_entry_point(tmp_path):
    p = _write(tmp_path, CIRCLE)
    res = subprocess.run([sys.executable, "-m", "thin_inductor.cli", "validate", str(p)],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0, res.stderr
    assert json.loads(res.stdout)["delta"] == 0.4


MC_CFG = {**CIRCLE, "stages": ["sweep", "oracle"], "eps_list": [0.2, 0.1],
          "energy_method": "cartesian_mc", "mc": {"samples": 20000, "batch_size": 4096},
          "seed": 7}


def test_determinism_across_runs_and_workers(tmp_path, monkeypatch):
    texts = []
    for i, workers in enumerate((1, 1, 3)):
        d = tmp_path / f"r{i}"
        rc, _ = run(_write(tmp_path, {**MC_CFG, "workers": workers, "output_dir": str(d)},
                           f"c{i}.json"))
        assert rc == EXIT_OK
        texts.append((d / "sweep.csv").read_bytes())
    monkeypatch.setenv("THIN_INDUCTOR_WORKERS", "2")
    d = tmp_path / "env"
    assert run(_write(tmp_path, {**MC_CFG, "output_dir": str(d)}, "env.json"))[0] == EXIT_OK
    texts.append((d / "sweep.csv").read_bytes())
    assert all(t == texts[0] for t in texts)
    # a different seed changes the Monte-Carlo column
    d = tmp_path / "seed"
    run(_write(tmp_path, {**MC_CFG, "seed": 8, "output_dir": str(d)}, "s.json"))
    assert (d / "sweep.csv").read_bytes() != texts[0]
