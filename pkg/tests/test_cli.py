import json
import subprocess
import sys

import pytest

from conftest import synthetic_rows, write_rows
from otcnet.cli import main

FAMILIES = {"stats", "rank_activity", "cumulative_share", "otc_ratio", "rank_comparison",
            "network", "kcore", "correlation", "frames"}


@pytest.fixture(scope="module")
def panel57(tmp_path_factory):
    rows = synthetic_rows(n_inst=61, start="1998-Q4", end="2012-Q4", seed=21)
    return write_rows(tmp_path_factory.mktemp("p57") / "panel.csv", rows)


def _config(tmp_path, panel, **extra):
    doc = {"panel": str(panel), "ks_trials": 200, "seed": 3, **extra}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(doc))
    return path


def test_ingest_is_deterministic(raw_small, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["ingest", "--panel", str(raw_small), "--tolerant", "--out", str(out)]) == 0
        outs.append(out)
    for name in ("panel.csv", "registry.json", "recovery.log", "merge.log"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_ingest_tolerant_logs_one_recovery(raw_small, tmp_path):
    assert main(["ingest", "--panel", str(raw_small), "--tolerant", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "recovery.log").read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("skipped line 8")


def test_ingest_strict_fails_on_broken_row(raw_small, tmp_path, capsys):
    assert main(["ingest", "--panel", str(raw_small), "--out", str(tmp_path)]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 1 and "line 8" in err["message"]


def test_missing_alias_file(raw_small, tmp_path, capsys):
    missing = tmp_path / "nowhere" / "aliases.tsv"
    code = main(["ingest", "--panel", str(raw_small), "--tolerant", "--aliases", str(missing),
                 "--out", str(tmp_path / "o")])
    assert code != 0
    assert str(missing) in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"panel": "x.csv", "colour": "red"}))
    assert main(["stats", "--config", str(cfg)]) == 1
    assert "colour" in capsys.readouterr().err


def test_report_manifest_and_reproducibility(synthetic_csv, tmp_path):
    cfg = _config(tmp_path, synthetic_csv)
    manifests = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert main(["report", "--config", str(cfg), "--out", str(out)]) == 0
        manifests.append(json.loads((out / "manifest.json").read_text()))
    a, b = manifests
    assert set(a["families"]) == FAMILIES
    assert a["parameters"]["rng"] == "PCG64" and a["parameters"]["seed"] == 3
    assert [x["sha256"] for x in a["artifacts"]] == [x["sha256"] for x in b["artifacts"]]
    assert {k: v for k, v in a.items() if k != "config"} == \
        {k: v for k, v in b.items() if k != "config"}


def test_report_split_gives_two_matrices_per_exposure(synthetic_csv, tmp_path):
    out = tmp_path / "o"
    cfg = _config(tmp_path, synthetic_csv, split="2002-Q1")
    assert main(["report", "--config", str(cfg), "--out", str(out)]) == 0
    for field in ("cce", "tce"):
        assert (out / f"corr_{field}_before2002Q1.csv").exists()
        assert (out / f"corr_{field}_from2002Q1.csv").exists()
    assert not (out / "corr_activity_total_before2002Q1.csv").exists()


def test_frames_57_quarters(panel57, tmp_path):
    out = tmp_path / "f"
    assert main(["frames", "--panel", str(panel57), "--out", str(out)]) == 0
    frames = sorted((out / "frames").glob("frame_*.json"))
    assert len(frames) == 57
    doc = json.loads(frames[0].read_text())
    assert doc["quarter"] == "1998-Q4" and len(doc["nodes"]) == 25 and len(doc["links"]) == 300


def test_frames_single_quarter(panel57, tmp_path):
    rows = [r for r in synthetic_rows(n_inst=61, start="1998-Q4", end="2012-Q4", seed=21)
            if r[0] == "2005-Q2"]
    panel = write_rows(tmp_path / "one.csv", rows)
    out = tmp_path / "f"
    assert main(["frames", "--panel", str(panel), "--quarters", "2005-Q2:2005-Q2",
                 "--out", str(out)]) == 0
    assert [p.name for p in (out / "frames").glob("*.json")] == ["frame_2005Q2.json"]


def test_subcommands_write_their_files(synthetic_csv, tmp_path):
    cfg = _config(tmp_path, synthetic_csv)
    expected = {
        "stats": "stats.json", "network": "network_rank.graphml", "kcore": "kcore.csv",
        "correlate": "corr_activity_total_all.csv",
    }
    for cmd, name in expected.items():
        out = tmp_path / cmd
        assert main([cmd, "--config", str(cfg), "--out", str(out)]) == 0
        assert (out / name).exists()
    stats = json.loads((tmp_path / "stats" / "stats.json").read_text())
    assert stats["ks"]["trials"] == 200 and 0 < stats["gini"] < 1


def test_console_script_entry_point(raw_small, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "otcnet.cli", "ingest", "--panel", str(raw_small),
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 1
    assert json.loads(proc.stderr)["error"] == "RowError"
