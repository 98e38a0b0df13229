"""End-to-end command-line behavior."""

import json
import os

import pytest

from agforecast.cli import main
from agforecast.pipeline import snapshot_digest

STAGE_MAP = "GEN serD*\tserD\tlow\nGEN *\tother\tmedium\n"

IDS_CSV = """timestamp,signature,src_ip,src_port,dst_ip,dst_port
2024-05-01T10:00:00,GEN serD activity on 80,10.0.0.1,50000,10.0.0.24,80
2024-05-01T10:00:30,GEN serD activity on 80,10.0.0.1,50001,10.0.0.24,80
2024-05-01T11:00:00,GEN vulnD burst,10.0.0.1,50002,10.0.0.24,443
"""

EDR_CSV = """timestamp,signature,severity,tactics,techniques,hosts
2024-05-01T09:00:00,Credential dump,high,CredentialAccess,OSCredDump,H1;H2
2024-05-01T09:10:00,Recon,low,Discovery,,H1
"""


@pytest.fixture
def synth_alerts(tmp_path):
    out = tmp_path / "alerts.jsonl"
    code = main(["synth", "--attackers", "2", "--victims", "3",
                 "--seed", "3", "-o", str(out)])
    assert code == 0
    return out


class TestIngest:
    def test_ids_ingest(self, tmp_path, capsys):
        src = tmp_path / "in.csv"
        src.write_text(IDS_CSV)
        mapfile = tmp_path / "stages.map"
        mapfile.write_text(STAGE_MAP)
        out = tmp_path / "alerts.jsonl"
        code = main(["ingest", "--kind", "ids", "--map", str(mapfile),
                     str(src), "-o", str(out)])
        assert code == 0
        assert "parsed=3" in capsys.readouterr().err
        lines = out.read_text().splitlines()
        assert len(lines) == 3
        assert json.loads(lines[0])["stage"]["rendered"] == "serD"
        assert (tmp_path / "manifest.json").exists()

    def test_missing_map_is_usage_error(self, tmp_path):
        src = tmp_path / "in.csv"
        src.write_text(IDS_CSV)
        code = main(["ingest", "--kind", "ids", "--map",
                     str(tmp_path / "nope.map"), str(src),
                     "-o", str(tmp_path / "out.jsonl")])
        assert code == 2

    def test_edr_on_ids_shaped_file_names_bad_field(self, tmp_path, capsys):
        src = tmp_path / "in.csv"
        src.write_text(IDS_CSV)
        code = main(["ingest", "--kind", "edr", str(src),
                     "-o", str(tmp_path / "out.jsonl")])
        assert code == 2
        assert "severity" in capsys.readouterr().err

    def test_edr_ingest_splits_hosts(self, tmp_path):
        src = tmp_path / "edr.csv"
        src.write_text(EDR_CSV)
        out = tmp_path / "alerts.jsonl"
        assert main(["ingest", "--kind", "edr", str(src), "-o", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 3


class TestRun:
    def test_run_writes_snapshot(self, tmp_path, synth_alerts):
        outdir = tmp_path / "snap"
        code = main(["run", str(synth_alerts), "-o", str(outdir),
                     "--strategy", "hc", "--factor", "55", "--window", "5"])
        assert code == 0
        names = {p.name for p in outdir.iterdir()}
        assert {"model.json", "traces.txt", "forecasts.jsonl", "ag_index.json",
                "summary.json", "manifest.json"} <= names
        assert any(n.startswith("AG-") and n.endswith(".dot") for n in names)

    def test_run_is_reproducible(self, tmp_path, synth_alerts):
        for name in ("one", "two"):
            assert main(["run", str(synth_alerts), "-o",
                         str(tmp_path / name), "--seed", "9"]) == 0
        assert snapshot_digest(tmp_path / "one") == \
            snapshot_digest(tmp_path / "two")

    def test_missing_input(self, tmp_path):
        assert main(["run", str(tmp_path / "absent.jsonl"),
                     "-o", str(tmp_path / "x")]) == 2

    def test_episode_dump(self, tmp_path, synth_alerts):
        dump = tmp_path / "episodes.jsonl"
        assert main(["run", str(synth_alerts), "-o", str(tmp_path / "s"),
                     "--dump-episodes", str(dump)]) == 0
        lines = dump.read_text().splitlines()
        assert lines and all("stage" in json.loads(l) for l in lines)


class TestReplay:
    def test_replay_windows(self, tmp_path, synth_alerts):
        outdir = tmp_path / "stream"
        code = main(["replay", str(synth_alerts), "-o", str(outdir),
                     "--interval", "2h"])
        assert code == 0
        snapshots = sorted(p.name for p in outdir.iterdir() if p.is_dir())
        assert snapshots and all(n.startswith("t") for n in snapshots)
        assert (outdir / "replay_summary.csv").exists()
        assert (outdir / "replay_summary.json").exists()
        assert (outdir / "replay_evolution.png").exists()

    def test_interval_larger_than_span(self, tmp_path, synth_alerts):
        outdir = tmp_path / "stream"
        assert main(["replay", str(synth_alerts), "-o", str(outdir),
                     "--interval", "4d"]) == 0
        dirs = [p for p in outdir.iterdir() if p.is_dir()]
        assert len(dirs) == 1

    def test_sliding_history_flag(self, tmp_path, synth_alerts):
        assert main(["replay", str(synth_alerts), "-o",
                     str(tmp_path / "s"), "--history", "sliding:3h"]) == 0
        assert main(["replay", str(synth_alerts), "-o",
                     str(tmp_path / "bad"), "--history", "rolling:3h"]) == 1


class TestEval:
    def test_eval_writes_report_files(self, tmp_path, synth_alerts):
        outdir = tmp_path / "eval"
        code = main(["eval", str(synth_alerts), "-o", str(outdir),
                     "--k", "3", "--methods", "all"])
        assert code == 0
        assert (outdir / "report.csv").exists()
        assert (outdir / "report.json").exists()
        assert (outdir / "report.png").exists()
        rows = (outdir / "report.csv").read_text().splitlines()
        assert len(rows) == 7  # header + six methods

    def test_eval_sweep(self, tmp_path):
        alerts = tmp_path / "alerts.jsonl"
        # The k sweep runs k in {5, 10, 15}, so it needs a corpus with
        # more than 15 multi-symbol traces.
        assert main(["synth", "--attackers", "5", "--victims", "8",
                     "--seed", "3", "-o", str(alerts)]) == 0
        outdir = tmp_path / "sweep"
        code = main(["eval", str(alerts), "-o", str(outdir),
                     "--methods", "as,hc", "--sweep", "k"])
        assert code == 0
        assert (outdir / "sweep_k.csv").exists()
        assert (outdir / "sweep_k.png").exists()

    def test_invalid_method_lists_valid_names(self, tmp_path, synth_alerts,
                                              capsys):
        code = main(["eval", str(synth_alerts), "-o", str(tmp_path / "x"),
                     "--methods", "hc,psychic"])
        assert code == 2
        err = capsys.readouterr().err
        assert "psychic" in err and "frequency" in err


class TestModelCommands:
    def test_export_then_import(self, tmp_path, synth_alerts):
        snap = tmp_path / "snap"
        assert main(["run", str(synth_alerts), "-o", str(snap)]) == 0
        model = tmp_path / "model.json"
        code = main(["export-model", "--traces", str(snap / "traces.txt"),
                     "-o", str(model), "--dot", str(tmp_path / "model.dot")])
        assert code == 0
        assert main(["import-model", str(model)]) == 0
        assert (tmp_path / "model.dot").read_text().startswith("digraph")

    def test_import_invalid_model_lists_violations(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({
            "direction": "suffix", "root": 0,
            "states": [{"id": 0, "total": 2, "continue": 2, "final": 0},
                       {"id": 1, "total": 9, "continue": 0, "final": 1}],
            "transitions": [{"from": 0, "to": 1, "symbol": "a|x", "count": 2}],
        }))
        assert main(["import-model", str(bad)]) == 1
        assert "total 9" in capsys.readouterr().err


class TestSeedHandling:
    def test_env_seed_used(self, tmp_path, monkeypatch):
        monkeypatch.setenv("AGF_SEED", "7")
        a = tmp_path / "a.jsonl"
        assert main(["synth", "-o", str(a)]) == 0
        monkeypatch.delenv("AGF_SEED")
        b = tmp_path / "b.jsonl"
        assert main(["synth", "--seed", "7", "-o", str(b)]) == 0
        assert a.read_text() == b.read_text()

    def test_flag_beats_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("AGF_SEED", "7")
        a = tmp_path / "a.jsonl"
        assert main(["synth", "--seed", "1", "-o", str(a)]) == 0
        monkeypatch.setenv("AGF_SEED", "99")
        b = tmp_path / "b.jsonl"
        assert main(["synth", "--seed", "1", "-o", str(b)]) == 0
        assert a.read_text() == b.read_text()

    def test_bad_env_seed(self, tmp_path, monkeypatch):
        monkeypatch.setenv("AGF_SEED", "lots")
        assert main(["synth", "-o", str(tmp_path / "x.jsonl")]) == 2


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["run"])  # missing required arguments
    assert exc.value.code == 2


def test_manifest_contents(tmp_path, synth_alerts):
    outdir = tmp_path / "snap"
    assert main(["run", str(synth_alerts), "-o", str(outdir),
                 "--seed", "4"]) == 0
    manifest = json.loads((outdir / "manifest.json").read_text())
    assert manifest["command"] == "run"
    assert manifest["seed"] == 4
    assert manifest["version"]
    assert str(synth_alerts) in manifest["inputs"]
    assert len(next(iter(manifest["inputs"].values()))) == 64
    assert "pipeline" in manifest["timings_s"]
