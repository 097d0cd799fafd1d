import json
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from sle_lab import experiments as X
from sle_lab.cli import main
from sle_lab.config import validate_config
from sle_lab.experiments import (CSV_HEADER, BatchFailure, read_rows, report_bundle,
                                 run_experiment)
from sle_lab.svg import plot_fit

# Cheap settings per kind: enough to exercise the dispatch, fit and report paths.
SMOKE = {
    "escape": "scales = 2, 4, 8\ntrials = 12\ndt = 0.02",
    "disconnection": "scales = 0.5, 0.25, 0.125\ntrials = 6\ndt = 0.02\nrefine = 50",
    "radial-survival": "scales = 1, 2, 3\ntrials = 200\nstep = 0.01",
    "flow-moment": "scales = 0.5, 1, 1.5\ntrials = 3\nstep = 0.01",
    "bessel": "scales = 1, 4, 16\ntrials = 200\nstep = 0.01",
    "cut-sde": "scales = 0.5, 1, 1.5\ntrials = 200\nstep = 0.01",
    "boundary-times": "scales = 0.002, 0.004, 0.008\ntrials = 3\ndt = 1e-3\na = 0.05",
    "cut-times": "scales = 0.002, 0.004, 0.008\ntrials = 3\ndt = 1e-3\na = 0.05",
    "trace-dimension": "scales = 0.25, 0.125, 0.0625\ntrials = 4\nmethod = box\ndt = 1e-3",
    "boundary-dimension": "scales = 0.25, 0.125, 0.0625\ntrials = 2\ndt = 1e-4\n"
                          "epsilon = 1e-3",
    "perco-two-arm": "scales = 0.5, 0.25, 0.125\ntrials = 20\ndelta = 0.03125",
    "perco-three-arm": "scales = 0.5, 0.25, 0.125\ntrials = 20\ndelta = 0.03125",
    "perco-disk-hit": "scales = 0.5, 0.25, 0.125\ntrials = 10\ndelta = 0.03125\n"
                      "max_radius = 2",
    "prop1-harness": "trials = 40\ndt = 0.01\nepsilon = 0.1",
}


def _cfg(kind, tmp_path, extra=""):
    return validate_config(f"kind = {kind}\nseed = 11\n{SMOKE[kind]}\n{extra}",
                           {"output": str(tmp_path / kind)})


def _bytes(directory):
    out = {}
    for root, _, files in os.walk(directory):
        for f in files:
            if f != "manifest.json":
                p = os.path.join(root, f)
                with open(p, "rb") as fh:
                    out[os.path.relpath(p, directory)] = fh.read()
    return out


@pytest.mark.parametrize("kind", sorted(SMOKE))
def test_every_kind_runs_and_reports(kind, tmp_path):
    cfg = _cfg(kind, tmp_path)
    bundle = run_experiment(cfg)
    for name in ("manifest.json", "trials.csv", "fit.json", "plot.svg"):
        assert os.path.exists(os.path.join(bundle.directory, name))
    fit = bundle.fit
    assert fit["kind"] == kind and fit["master_seed"] == 11
    assert fit["n_scales"] >= 2 and np.isfinite(bundle.slope)
    assert bundle.manifest["status"] == "complete"
    with open(os.path.join(bundle.directory, "trials.csv")) as fh:
        assert fh.readline().strip().split(",") == CSV_HEADER
    rows = read_rows(os.path.join(bundle.directory, "trials.csv"))
    assert {r[0] for r in rows} == set(range(len(cfg.scales)))
    # re-fitting the stored rows reproduces the stored fit
    assert report_bundle(bundle.directory)["slope"] == pytest.approx(bundle.slope, abs=0)


def test_worker_count_does_not_change_results(tmp_path):
    a = run_experiment(_cfg("escape", tmp_path / "w1", "workers = 1\nchunk = 3"))
    b = run_experiment(_cfg("escape", tmp_path / "w3", "workers = 3\nchunk = 3"))
    assert _bytes(a.directory) == _bytes(b.directory)
    c = run_experiment(_cfg("perco-two-arm", tmp_path / "w1", "chunk = 7"))
    d = run_experiment(_cfg("perco-two-arm", tmp_path / "w3", "chunk = 7\nworkers = 3"))
    assert _bytes(c.directory) == _bytes(d.directory)


def test_chunk_size_does_not_change_results(tmp_path):
    a = run_experiment(_cfg("bessel", tmp_path / "c1", "chunk = 200"))
    b = run_experiment(_cfg("bessel", tmp_path / "c2", "chunk = 7"))
    assert _bytes(a.directory) == _bytes(b.directory)


def test_resume_skips_completed_batches(tmp_path, monkeypatch):
    cfg = _cfg("perco-two-arm", tmp_path)
    first = run_experiment(cfg)
    before = _bytes(first.directory)
    os.remove(os.path.join(cfg.output, "trials.csv"))
    os.remove(os.path.join(cfg.output, "batches", "batch_001.csv"))
    calls = []
    real = X._run_unit
    monkeypatch.setattr(X, "_run_unit", lambda args: calls.append(args[1]) or real(args))
    second = run_experiment(cfg)
    assert set(calls) == {1}
    assert second.manifest["resumed"] == [0, 2]
    assert _bytes(second.directory) == before


def test_changed_config_restarts(tmp_path):
    cfg = _cfg("escape", tmp_path)
    run_experiment(cfg)
    other = run_experiment(cfg.replace(seed=12))
    assert other.manifest["resumed"] == []
    assert any("different configuration" in w for w in other.manifest["warnings"])


def test_config_warnings_reach_manifest(tmp_path):
    cfg = _cfg("cut-sde", tmp_path, "kappa = 9")
    bundle = run_experiment(cfg)
    assert any("outside (4, 8)" in w for w in bundle.manifest["warnings"])


def test_batch_failure(tmp_path, monkeypatch):
    cfg = _cfg("escape", tmp_path)
    real = X._trial

    def flaky(cfg, j, seed):
        if seed % 3 == 0:
            raise RuntimeError("boom")
        return real(cfg, j, seed)

    monkeypatch.setattr(X, "_trial", flaky)
    with pytest.raises(BatchFailure):
        run_experiment(cfg)
    with open(os.path.join(cfg.output, "manifest.json")) as fh:
        man = json.load(fh)
    assert man["status"] == "aborted" and man["failed_batches"] == [0]
    rows = read_rows(os.path.join(cfg.output, "trials.csv"))
    assert any(r[6] for r in rows) and not all(r[6] for r in rows)


def test_env_overrides_workers(tmp_path, monkeypatch):
    cfg = _cfg("escape", tmp_path)
    monkeypatch.setenv("SLE_LAB_WORKERS", "2")
    assert X.worker_count(cfg) == 2
    monkeypatch.setenv("SLE_LAB_WORKERS", "zero")
    with pytest.raises(ValueError):
        X.worker_count(cfg)


def test_plot_is_deterministic_svg():
    x, y = [1, 2, 4, 8], [0.5, 0.3, 0.2, 0.1]
    kw = dict(lo=[0.4, 0.2, 0.15, 0.05], hi=[0.6, 0.4, 0.25, 0.15], line=lambda t: 0.5 * t**-0.3,
              logx=True, title="t", xlabel="x", ylabel="y")
    s1, s2 = plot_fit(x, y, **kw), plot_fit(x, y, **kw)
    assert s1 == s2
    root = ET.fromstring(s1)
    assert root.tag.endswith("svg")


# --- command line ---------------------------------------------------------------------

def _write_cfg(tmp_path, text):
    p = tmp_path / "exp.cfg"
    p.write_text(text)
    return str(p)


def test_cli_validate(tmp_path, capsys):
    good = _write_cfg(tmp_path, "kind = bessel\nkappa = 8\n")
    assert main(["validate", good]) == 0
    assert "kind = bessel" in capsys.readouterr().out
    bad = _write_cfg(tmp_path, "kind = bessel\nkappa = 3\ntrials = -1\n")
    assert main(["validate", bad]) == 2
    err = capsys.readouterr().err
    assert "trials" in err and "kappa" in err


def test_cli_run_and_report(tmp_path, capsys):
    path = _write_cfg(tmp_path, f"kind = escape\n{SMOKE['escape']}\n")
    out = str(tmp_path / "bundle")
    assert main(["run", path, "--set", f"output={out}"]) == 0
    fit = json.loads(capsys.readouterr().out)
    assert {"slope", "stderr", "r2", "derived"} <= set(fit)
    assert main(["report", out]) == 0
    assert "escape: slope" in capsys.readouterr().out
    assert main(["report", str(tmp_path / "missing")]) == 2


def test_cli_exit_codes(tmp_path, monkeypatch):
    path = _write_cfg(tmp_path, f"kind = escape\n{SMOKE['escape']}\n")
    out = f"output={tmp_path / 'b'}"
    assert main(["run", str(tmp_path / "nope.cfg")]) == 2
    assert main(["run", path, "--set", "trials"]) == 2
    monkeypatch.setenv("SLE_LAB_WORKERS", "-1")
    assert main(["run", path, "--set", out]) == 2
    monkeypatch.delenv("SLE_LAB_WORKERS")
    monkeypatch.setattr(X, "_trial", lambda *a: 1 / 0)
    assert main(["run", path, "--set", out]) == 3
    assert main(["accept", "13"]) == 2
