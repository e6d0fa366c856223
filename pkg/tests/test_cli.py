import json
import shutil
from pathlib import Path

import pytest

from alignpipe.cli import main

from corpus import build_corpus, read_manifest, snapshot_outputs


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    return build_corpus(root)


def _fresh(corpus, tmp_path) -> Path:
    """Copy of the corpus config pointing at a fresh store."""
    store = tmp_path / "store"
    cfg = dict(corpus["config_dict"])
    cfg["store_dir"] = str(store)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


def test_run_all_end_to_end(corpus, tmp_path):
    cfg = _fresh(corpus, tmp_path)
    assert main(["--config", str(cfg), "run-all"]) == 0
    store = tmp_path / "store"
    manifest = read_manifest(store)
    assert len(manifest) == sum(corpus["expected_segments"].values())
    assert all(row["cer"] == "0.000000" for row in manifest)
    assert all(row["split"] == "train" for row in manifest)
    assert {row["language"] for row in manifest} == {"de", "fr", "lt"}
    for row in manifest:
        assert set(row) == {
            "segment_id", "audio_path", "start_s", "end_s",
            "text", "cer", "language", "split",
        }
        assert row["text"]
        assert Path(row["audio_path"]).exists()


def test_stage_order_violation(corpus, tmp_path):
    cfg = _fresh(corpus, tmp_path)
    assert main(["--config", str(cfg), "ingest"]) == 0
    assert main(["--config", str(cfg), "align"]) == 3


def test_stats_on_empty_store(corpus, tmp_path):
    cfg = _fresh(corpus, tmp_path)
    assert main(["--config", str(cfg), "stats"]) == 0
    stats = json.loads(
        (tmp_path / "store" / "manifest" / "corpus_stats.json").read_text()
    )
    assert stats == {}


def test_invalid_config_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    assert main(["--config", str(bad), "stats"]) == 2

    missing_adapter = tmp_path / "cfg.json"
    missing_adapter.write_text(
        json.dumps({
            "store_dir": str(tmp_path / "s"),
            "adapters": {"asr": "/no/such/binary-xyz"},
        }),
        encoding="utf-8",
    )
    assert main(["--config", str(missing_adapter), "stats"]) == 2


def test_run_all_requires_asr_adapter(corpus, tmp_path):
    cfg_dict = dict(corpus["config_dict"])
    cfg_dict["store_dir"] = str(tmp_path / "store")
    cfg_dict["adapters"] = {"convert": "cp {in} {out}"}
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg_dict), encoding="utf-8")
    assert main(["--config", str(path), "run-all"]) == 2


def test_stage_by_stage_equals_run_all(corpus, tmp_path):
    (tmp_path / "a").mkdir(exist_ok=True)
    cfg_a = _fresh(corpus, tmp_path / "a")
    assert main(["--config", str(cfg_a), "run-all"]) == 0
    uninterrupted = snapshot_outputs(tmp_path / "a" / "store")

    (tmp_path / "b").mkdir(exist_ok=True)
    cfg_b = _fresh(corpus, tmp_path / "b")
    for command in ("ingest", "fetch", "segment", "transcribe", "align",
                    "select", "emit", "splits", "stats"):
        assert main(["--config", str(cfg_b), command]) == 0, command
    stepped = snapshot_outputs(tmp_path / "b" / "store")

    # store paths differ; compare after normalizing the absolute prefix
    def normalize(snap, root):
        return {
            k: v.replace(str(root).encode(), b"STORE") for k, v in snap.items()
        }

    assert normalize(uninterrupted, tmp_path / "a") == normalize(stepped, tmp_path / "b")


def test_session_filter(corpus, tmp_path):
    cfg = _fresh(corpus, tmp_path)
    assert main(["--config", str(cfg), "ingest"]) == 0
    assert main(["--config", str(cfg), "--sessions", "sess00", "fetch"]) == 0
    store = tmp_path / "store"
    states = {
        p.stem: json.loads(p.read_text())["job"]["state"]
        for p in (store / "sessions").glob("*.json")
    }
    assert states["sess00"] == "downloaded"
    assert states["sess01"] == "pending"


def test_failed_session_gives_exit_1(corpus, tmp_path):
    cfg = _fresh(corpus, tmp_path)
    assert main(["--config", str(cfg), "ingest"]) == 0
    # Break one session's media so fetch fails for it.
    store = tmp_path / "store"
    rec_path = store / "sessions" / "sess01.json"
    rec = json.loads(rec_path.read_text())
    rec["media_url"] = (corpus["remote"] / "missing.wav").as_uri()
    rec_path.write_text(json.dumps(rec), encoding="utf-8")
    assert main(["--config", str(cfg), "fetch"]) == 1
    states = {
        p.stem: json.loads(p.read_text())["job"]["state"]
        for p in (store / "sessions").glob("*.json")
    }
    assert states["sess01"] == "failed"
    assert states["sess00"] == "downloaded"


def test_progress_log_lines_are_json(corpus, tmp_path, capsys):
    cfg = _fresh(corpus, tmp_path)
    main(["--config", str(cfg), "ingest"])
    main(["--config", str(cfg), "fetch"])
    out = capsys.readouterr().out
    events = [json.loads(line) for line in out.splitlines() if line.strip()]
    transitions = [e for e in events if e["event"] == "transition"]
    assert any(e["to"] == "downloaded" for e in transitions)
    assert all("session" in e for e in transitions)
