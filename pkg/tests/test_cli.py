import numpy as np
import pytest

from ratiobound import io
from ratiobound.cli import main
from ratiobound.core import InstanceVolume, IntervalEstimate, Method


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    for name, seed in (("val", 1), ("test", 2)):
        (d / f"{name}.cfg").write_text(f"n_instances = 500\nseed = {seed}\npixels_min = 200\npixels_max = 2000\n")
        assert run("synth", "--config", d / f"{name}.cfg", "--out", d / name) == 0
    assert run("fit", "--val", d / "val", "--out", d / "vb.prof") == 0
    return d


def test_end_to_end_coverage(workspace):
    d = workspace
    assert run("estimate", "--in", d / "test", "--profile", d / "vb.prof", "--method", "care_vbias", "--out", d / "care.csv") == 0
    assert run("eval", "--in", d / "test", "--results", d / "care.csv", "--out", d / "care.rep") == 0
    text = (d / "care.rep").read_text()
    assert text.startswith("method: CARE_VBIAS")
    coverage = float(next(l for l in text.splitlines() if "coverage:" in l).split(":")[1])
    assert coverage >= 0.68
    strata = io.read_table(d / "care.rep.strata.csv")
    assert [r["stratum"] for r in strata] == ["S", "M", "L"]
    assert sum(int(r["n"]) for r in strata) == 500


def test_unit_acqr_matches_cqr_table(workspace):
    d = workspace
    assert run("fit", "--val", d / "val", "--acqr-kind", "unit", "--out", d / "unit.prof") == 0
    for m in ("cqr", "acqr_unit", "acqr"):
        assert run("estimate", "--in", d / "test", "--profile", d / "unit.prof", "--method", m, "--out", d / f"{m}.csv") == 0
    cqr = (d / "cqr.csv").read_bytes()
    assert cqr == (d / "acqr_unit.csv").read_bytes() == (d / "acqr.csv").read_bytes()


def test_estimate_is_reproducible_and_sorted(workspace):
    d = workspace
    for out in ("m1.csv", "m2.csv"):
        assert run("estimate", "--in", d / "test", "--profile", d / "vb.prof", "--method", "markov", "--out", d / out) == 0
    assert (d / "m1.csv").read_bytes() == (d / "m2.csv").read_bytes()
    ids = [r["id"] for r in io.read_table(d / "m1.csv")]
    assert ids == sorted(ids)


def test_bootstrap_needs_no_profile(workspace):
    d = workspace
    assert run("estimate", "--in", d / "val", "--method", "bootstrap", "--out", d / "boot.csv") == 0
    assert io.read_table(d / "boot.csv")[0]["method"] == "BOOTSTRAP"


def test_alarm(tmp_path):
    io.write_results(
        tmp_path / "r.csv",
        {
            "p1": IntervalEstimate(0.25, 0.2, 0.3, Method.CARE_ECE),
            "p2": IntervalEstimate(0.35, 0.3, 0.4, Method.CARE_ECE),
            "p3": IntervalEstimate(0.15, 0.1, 0.2, Method.CARE_ECE),
        },
    )
    assert run("alarm", "--results", tmp_path / "r.csv", "--threshold", "0.25", "--out", tmp_path / "a.csv") == 0
    rows = {r["id"]: r["alarm"] for r in io.read_table(tmp_path / "a.csv")}
    assert rows == {"p1": "REVIEW", "p2": "CLEAR_ABOVE", "p3": "CLEAR_BELOW"}


def test_decompose(workspace, capsys):
    d = workspace
    assert run("fit", "--val", d / "val", "--alpha", "0.12", "--out", d / "v12.prof") == 0
    assert run("fit", "--val", d / "val", "--alpha", "0.12", "--source", "ece", "--out", d / "e12.prof") == 0
    assert run("decompose", "--in", d / "test", "--profiles", f"{d / 'v12.prof'},{d / 'e12.prof'}", "--out", d / "dec.csv") == 0
    rows = io.read_table(d / "dec.csv")
    assert len(rows) == 500
    for r in rows:
        if float(r["i_overall"]) < 0.99:
            assert float(r["i_overall"]) <= float(r["i_ece"]) + float(r["i_est"]) + 1e-12
    assert run("fit", "--val", d / "val", "--alpha", "0.1", "--source", "ece", "--out", d / "e10.prof") == 0
    code = run("decompose", "--in", d / "test", "--profiles", f"{d / 'v12.prof'},{d / 'e10.prof'}", "--out", d / "x.csv")
    assert code == 2
    assert "same alpha" in capsys.readouterr().err


def test_usage_errors(workspace, capsys):
    d = workspace
    with pytest.raises(SystemExit) as exc:
        run("estimate", "--in", d / "test")
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        run("frobnicate")
    assert exc.value.code == 1
    assert run("estimate", "--in", d / "test", "--method", "cqr", "--out", d / "x.csv") == 1
    assert run("fit", "--val", d / "val", "--confidence", "1.5", "--out", d / "x") == 1
    assert run("decompose", "--in", d / "test", "--profiles", "one", "--out", d / "x") == 1


def test_data_errors(tmp_path, capsys):
    assert run("estimate", "--in", tmp_path / "nowhere", "--method", "bootstrap", "--out", tmp_path / "x.csv") == 2
    (tmp_path / "bad.cfg").write_text("temperature = -1\n")
    assert run("synth", "--config", tmp_path / "bad.cfg", "--out", tmp_path / "o") == 2
    unlabeled = [InstanceVolume(f"u{i}", [0.1, 0.2], [0.3, 0.4]) for i in range(3)]
    io.write_dataset(tmp_path / "unl", unlabeled)
    assert run("fit", "--val", tmp_path / "unl", "--out", tmp_path / "p") == 2
    assert "error" in capsys.readouterr().err


def test_compute_error_on_every_instance(tmp_path, capsys):
    empty = [InstanceVolume(f"z{i}", np.zeros(20), np.zeros(20)) for i in range(3)]
    io.write_dataset(tmp_path / "z", empty)
    assert run("estimate", "--in", tmp_path / "z", "--method", "bootstrap", "--out", tmp_path / "r.csv") == 3
    err = capsys.readouterr().err
    assert "z0" in err and "z2" in err
    assert not (tmp_path / "r.csv").exists()
