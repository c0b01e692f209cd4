import csv
import io
import os

import pytest

from hift import cli
from hift.config import RunConfig
from hift.errors import NumericalError

from cli_helpers import TINY_INI, read, run_all


@pytest.fixture
def ini(tmp_path):
    p = tmp_path / "tiny.ini"
    p.write_text(TINY_INI)
    return str(p)


def test_every_subcommand_is_deterministic(ini, tmp_path):
    a = run_all(ini, tmp_path / "a")
    b = run_all(ini, tmp_path / "b")
    assert a.keys() == b.keys()
    for k in a:
        assert a[k] == b[k], k
    for name in ("run/config.echo", "run/checkpoint.hift", "run/loss.csv", "run/metrics.csv",
                 "run/precision.csv", "run/success.csv", "run/eval000/results.txt",
                 "run/eval000/scores.npy", "abl/ablation.csv", "gc/gradcheck.txt"):
        assert name in a


def test_parallel_jobs_match_serial(ini, tmp_path):
    a = run_all(ini, tmp_path / "serial", jobs="1")
    b = run_all(ini, tmp_path / "parallel", jobs="2")
    for k in a:
        if k.startswith(("run/", "abl/")):
            assert a[k] == b[k], k


def test_config_echo_reloads_identically(ini, tmp_path):
    assert cli.main(["train", "--config", ini, "--out", str(tmp_path / "r")]) == 0
    echo = RunConfig.load(tmp_path / "r" / "config.echo")
    assert echo == RunConfig.load(ini)
    assert cli.main(["train", "--config", str(tmp_path / "r" / "config.echo"),
                     "--out", str(tmp_path / "r2")]) == 0
    assert read(tmp_path / "r" / "checkpoint.hift") == read(tmp_path / "r2" / "checkpoint.hift")
    assert read(tmp_path / "r" / "loss.csv") == read(tmp_path / "r2" / "loss.csv")


def test_seed_flag_changes_run(ini, tmp_path):
    cli.main(["train", "--config", ini, "--out", str(tmp_path / "a")])
    cli.main(["train", "--config", ini, "--seed", "5", "--out", str(tmp_path / "b")])
    assert read(tmp_path / "a" / "loss.csv") != read(tmp_path / "b" / "loss.csv")
    assert RunConfig.load(tmp_path / "b" / "config.echo").train.seed == 5


def test_bad_config_exits_one(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[train]\nbogus = 1\n")
    assert cli.main(["train", "--config", str(p), "--out", str(tmp_path / "x")]) == 1
    assert "bogus" in capsys.readouterr().err


def test_missing_groundtruth_exits_one(ini, tmp_path):
    cli.main(["train", "--config", ini, "--out", str(tmp_path / "run")])
    cli.main(["synth", "--config", ini, "--out", str(tmp_path / "seqs")])
    os.remove(tmp_path / "seqs" / "eval000" / "groundtruth.txt")
    code = cli.main(["track", str(tmp_path / "seqs" / "eval000"),
                     "--checkpoint", str(tmp_path / "run" / "checkpoint.hift")])
    assert code == 1


def test_numerical_failure_exits_two(tmp_path, monkeypatch):
    def boom(cfg, out=None, seqs=None):
        raise NumericalError("non-finite loss nan at step 0")

    monkeypatch.setattr(cli, "train", boom)
    assert cli.main(["train", "--out", str(tmp_path)]) == 2


def test_gradcheck_failure_exits_two(ini, monkeypatch, capsys):
    real = cli.gradcheck.run

    def corrupted(cfg):
        return real(cfg, corrupt=lambda n, g: g * 2 if n == "heads.cls2.1.bias" else g)

    monkeypatch.setattr(cli.gradcheck, "run", corrupted)
    assert cli.main(["gradcheck", "--config", ini]) == 2
    out = capsys.readouterr().out
    assert "FAIL heads.cls2.1.bias" in out
    lines = [l for l in out.splitlines() if l.startswith(("PASS", "FAIL"))]
    assert len(lines) == len({l.split()[1] for l in lines})


def test_eval_single_files(tmp_path, capsys):
    (tmp_path / "gt.txt").write_text("0,0,10,10\n0,0,10,10\n")
    (tmp_path / "res.txt").write_text("0,0,10,10\n5,0,10,10\n")
    assert cli.main(["eval", str(tmp_path / "res.txt"), str(tmp_path / "gt.txt"),
                     "--out", str(tmp_path / "m")]) == 0
    rows = list(csv.reader(io.StringIO((tmp_path / "m" / "metrics.csv").read_text())))
    assert rows[0] == ["precision@20", "success_auc"]
    assert float(rows[1][0]) == 1.0
    prec = (tmp_path / "m" / "precision.csv").read_text().splitlines()
    assert prec[0] == "threshold,score" and len(prec) == 52


def test_ablation_table_layout(ini, tmp_path, monkeypatch):
    real = cli.train

    def flaky(cfg, out=None, seqs=None):
        if cfg.transformer.variant == "ot":
            raise NumericalError("diverged")
        return real(cfg, out, seqs)

    monkeypatch.setattr(cli, "train", flaky)
    assert cli.main(["ablate", "--config", ini, "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "ablation.csv").read_text())))
    assert [r["variant"] for r in rows] == list(cli.ABLATIONS)
    base = rows[0]
    assert base["delta_pre_pct"] == "+0.00" and base["delta_suc_pct"] == "+0.00"
    assert rows[1]["precision@20"] == "FAILED"
    hft = rows[-1]
    assert hft["reference_precision"] == "0.763" and hft["reference_success"] == "0.566"
    assert "not reproducible" in hft["reference_note"]
    want = 100 * (float(hft["precision@20"]) - float(base["precision@20"])) / float(base["precision@20"]) \
        if float(base["precision@20"]) else None
    if want is not None:
        assert float(hft["delta_pre_pct"]) == pytest.approx(want, abs=0.006)


def test_reference_deltas_reproduce_published_table():
    rows = [(v, p, s, 0.0) for v, (p, s) in cli.REFERENCE.items()]
    table = list(csv.DictReader(io.StringIO(cli.ablation_table(rows))))
    got = {r["variant"]: (r["delta_pre_pct"], r["delta_suc_pct"]) for r in table}
    assert got["Baseline+OT"] == ("-2.29", "-3.67")
    assert got["Baseline+FT"] == ("+10.47", "+7.13")
    assert got["Baseline+HFT+PE"] == ("+12.77", "+12.96")


def test_variant_configs():
    cfg = RunConfig()
    assert cli.variant_config(cfg, "Baseline").transformer.variant == "baseline"
    assert cli.variant_config(cfg, "Baseline+HFT+PE").transformer.decoder_pe is True
    assert cli.variant_config(cfg, "Baseline+HFT+RL").label.mode == "rectangle"
    assert cli.variant_config(cfg, "Baseline+HFT").train.steps == cfg.ablate.steps


def test_module_entry_point():
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-m", "hift", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for sub in ("gradcheck", "train", "track", "eval", "ablate"):
        assert sub in out.stdout
