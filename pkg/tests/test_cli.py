"""CLI and stage orchestration on the synthetic corpus fixture."""

import hashlib
import json
from pathlib import Path

import pytest

from helpers import build_corpus_fixture

from bitextmine.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from bitextmine.config import load_config
from bitextmine.corpus import load_jsonl
from bitextmine.errors import ConfigInvalid, MissingPriorStage
from bitextmine.stages import STAGES, run_stage


@pytest.fixture(scope="module")
def fixture_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("fixture")
    info = build_corpus_fixture(root)
    info["root"] = root
    return info


def base_args(info, workspace, extra=()):
    return [
        "--manifest",
        str(info["manifest"]),
        "--workspace",
        str(workspace),
        "--backend",
        "mock",
        "--seed-map",
        str(info["seed_map"]),
        "--holdout",
        "lec3",
        "--test-top-k",
        "5",
        *extra,
    ]


def tree_digest(root: Path) -> dict:
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


class TestStageOrdering:
    def test_align_before_embed_is_missing_prior_stage(self, fixture_root, tmp_path):
        ws = tmp_path / "work"
        config = load_config(
            None,
            {
                "manifest": str(fixture_root["manifest"]),
                "workspace": str(ws),
                "backend": "mock",
                "seed_map": str(fixture_root["seed_map"]),
            },
        )
        run_stage("ingest", config)
        run_stage("segment", config)
        with pytest.raises(MissingPriorStage):
            run_stage("align", config)

    def test_unknown_stage(self, tmp_path):
        config = load_config(None, {"workspace": str(tmp_path)})
        with pytest.raises(ConfigInvalid):
            run_stage("teleport", config)


class TestFullRun:
    def test_run_all_and_reports(self, fixture_root, tmp_path):
        ws = tmp_path / "work"
        report_path = tmp_path / "report.json"
        code = main(["run-all", *base_args(fixture_root, ws, ["--report", str(report_path)])])
        assert code == EXIT_OK
        report = json.loads(report_path.read_text())
        assert report["fatal"] is None
        assert [r["stage"] for r in report["stages"]] == list(STAGES)
        corpus = load_jsonl(ws / "corpus" / "corpus.jsonl")
        assert len(corpus) > 0
        assert (ws / "stats" / "stats.json").exists()
        # Pivoted pairs present for every Indic combination.
        langs = {(p.src_lang, p.tgt_lang) for p in corpus.pairs}
        assert ("hi", "ta") in langs and ("bn", "hi") in langs and ("bn", "ta") in langs
        test_corpus = load_jsonl(ws / "split" / "test.jsonl")
        assert all(p.lecture_id == "lec3" for p in test_corpus.pairs)

    def test_stagewise_equals_run_all(self, fixture_root, tmp_path):
        ws_all = tmp_path / "work_all"
        assert main(["run-all", *base_args(fixture_root, ws_all)]) == EXIT_OK
        ws_steps = tmp_path / "work_steps"
        for stage in STAGES:
            assert main([stage, *base_args(fixture_root, ws_steps)]) == EXIT_OK
        assert tree_digest(ws_all) == tree_digest(ws_steps)

    def test_rerun_stage_is_byte_identical(self, fixture_root, tmp_path):
        ws = tmp_path / "work"
        args = base_args(fixture_root, ws)
        for stage in ("ingest", "segment", "embed", "align"):
            assert main([stage, *args]) == EXIT_OK
        before = tree_digest(ws)
        for stage in ("segment", "align"):
            assert main([stage, *args]) == EXIT_OK
        assert tree_digest(ws) == before

    def test_downstream_outputs_reproducible_after_delete(self, fixture_root, tmp_path):
        import shutil

        ws = tmp_path / "work"
        args = base_args(fixture_root, ws)
        assert main(["run-all", *args]) == EXIT_OK
        before = tree_digest(ws)
        shutil.rmtree(ws / "align")
        shutil.rmtree(ws / "corpus")
        for stage in ("align", "pivot", "collate"):
            assert main([stage, *args]) == EXIT_OK
        after = tree_digest(ws)
        assert after == before


class TestErrorPaths:
    def test_empty_manifest_exits_zero(self, tmp_path):
        manifest = tmp_path / "manifest.tsv"
        manifest.write_text("# nothing here\n", encoding="utf-8")
        ws = tmp_path / "work"
        code = main(
            ["run-all", "--manifest", str(manifest), "--workspace", str(ws), "--backend", "mock"]
        )
        assert code == EXIT_OK
        assert len(load_jsonl(ws / "corpus" / "corpus.jsonl")) == 0

    def test_unreachable_remote_is_fatal_runtime(self, fixture_root, tmp_path):
        ws = tmp_path / "work"
        args = [
            "--manifest",
            str(fixture_root["manifest"]),
            "--workspace",
            str(ws),
            "--backend",
            "remote",
            "--endpoint",
            "http://127.0.0.1:1",
        ]
        assert main(["ingest", *args]) == EXIT_OK
        assert main(["segment", *args]) == EXIT_OK
        assert main(["embed", *args]) == EXIT_RUNTIME

    def test_missing_manifest_is_config_error(self, tmp_path):
        code = main(
            ["ingest", "--manifest", str(tmp_path / "absent.tsv"), "--workspace", str(tmp_path)]
        )
        assert code == EXIT_CONFIG

    def test_bad_flag_value_is_config_error(self, fixture_root, tmp_path):
        code = main(
            [
                "align",
                *base_args(fixture_root, tmp_path / "w"),
                "--skip-cost",
                "-2",
            ]
        )
        assert code == EXIT_CONFIG

    def test_no_command_prints_help(self):
        assert main([]) == EXIT_CONFIG


class TestConfigFile:
    def test_file_plus_flag_override(self, fixture_root, tmp_path):
        cfg = tmp_path / "pipeline.yaml"
        cfg.write_text(
            "\n".join(
                [
                    f"manifest: {fixture_root['manifest']}",
                    f"workspace: {tmp_path / 'work'}",
                    "export_format: tsv",
                    "align:",
                    "  skip_cost: 0.5",
                    "provider:",
                    "  backend: mock",
                    f"  seed_map: {fixture_root['seed_map']}",
                ]
            ),
            encoding="utf-8",
        )
        config = load_config(cfg, {"threshold": 0.8})
        assert config.align.skip_cost == 0.5
        assert config.align.keep_threshold == 0.8
        assert config.export_format == "tsv"
        # Flags win over the file.
        config2 = load_config(cfg, {"format": "jsonl"})
        assert config2.export_format == "jsonl"

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text("mystery: 1\n", encoding="utf-8")
        with pytest.raises(ConfigInvalid):
            load_config(cfg, {})

    def test_print_config(self, fixture_root, tmp_path, capsys):
        code = main(
            ["run-all", *base_args(fixture_root, tmp_path / "w"), "--print-config"]
        )
        assert code == EXIT_OK
        data = json.loads(capsys.readouterr().out)
        assert data["provider"]["backend"] == "mock"
        assert data["align"]["max_merge"] == 4

    def test_version_flag(self, capsys):
        assert main(["--version"]) == EXIT_OK
        assert capsys.readouterr().out.strip()
