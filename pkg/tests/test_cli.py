from __future__ import annotations

import hashlib
import json

import pytest

from afncd.cli import (
    DATASET_DIR_ENV,
    EXIT_COMPUTE,
    EXIT_CONFIG,
    EXIT_INGEST,
    EXIT_OK,
    ConfigError,
    main,
    parse_k_spec,
    verify_checksums,
)
from afncd.dataset import read_windows_manifest
from afncd.ncd import load_matrix


def _run(*argv):
    return main([str(a) for a in argv])


# ----------------------------------------------------------- arg parsing


def test_parse_k_spec_forms():
    assert parse_k_spec("51,101,501") == ((51, 101, 501), False)
    assert parse_k_spec(" 7 ") == ((7,), False)
    assert parse_k_spec("scan") == ((1,), True)
    assert parse_k_spec("scan:1:9:2") == ((1, 3, 5, 7, 9), False)
    assert parse_k_spec("scan:5:5:1") == ((5,), False)


@pytest.mark.parametrize(
    "bad", ["", "0", "-3", "a,b", "scan:1:9", "scan:a:9:2", "scan:9:1:2", "scan:1:9:0"]
)
def test_parse_k_spec_rejections(bad):
    with pytest.raises(ConfigError, match="k:"):
        parse_k_spec(bad)


def test_unknown_subcommand_exits_via_argparse():
    with pytest.raises(SystemExit) as exc:
        _run("frobnicate")
    assert exc.value.code == 2


def test_bad_scheme_choice_exits_via_argparse(synth_dir):
    with pytest.raises(SystemExit) as exc:
        _run("ingest", "--dataset-dir", synth_dir, "--scheme", "i9_raw")
    assert exc.value.code == 2


# -------------------------------------------------------- config layering


def test_dataset_dir_is_required_without_env(monkeypatch, capsys):
    monkeypatch.delenv(DATASET_DIR_ENV, raising=False)
    assert _run("ingest") == EXIT_CONFIG
    assert DATASET_DIR_ENV in capsys.readouterr().err


def test_dataset_dir_env_fallback(monkeypatch, synth_dir, tmp_path):
    monkeypatch.setenv(DATASET_DIR_ENV, str(synth_dir))
    assert _run("ingest", "--output-dir", tmp_path / "out") == EXIT_OK


def test_config_file_layering_and_flag_override(synth_dir, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(
        json.dumps(
            {"dataset_dir": str(synth_dir), "measure": "rr", "m_seq": 32}
        )
    )
    out = tmp_path / "out"
    assert (
        _run("ingest", "--config", cfg, "--output-dir", out, "--mseq", 64) == EXIT_OK
    )
    manifest = json.loads((out / "ingest-manifest.json").read_text())
    assert manifest["config"]["measure"] == "rr"  # from file
    assert manifest["config"]["m_seq"] == 64  # flag wins
    assert (out / "windows-rr-m64.csv").exists()


def test_config_file_rejects_unknown_keys(synth_dir, tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"dataset_dir": str(synth_dir), "mseq": 32}))
    assert _run("ingest", "--config", cfg) == EXIT_CONFIG
    assert "unknown keys" in capsys.readouterr().err


def test_config_file_must_be_json_object(synth_dir, tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text("[1, 2]")
    assert _run("ingest", "--dataset-dir", synth_dir, "--config", cfg) == EXIT_CONFIG


def test_missing_dataset_dir_is_an_ingest_error(tmp_path, capsys):
    assert (
        _run("ingest", "--dataset-dir", tmp_path / "nope", "--output-dir", tmp_path)
        == EXIT_INGEST
    )
    assert "ingest error" in capsys.readouterr().err


def test_bad_gate_and_threads_are_config_errors(synth_dir, tmp_path):
    common = ("ingest", "--dataset-dir", synth_dir, "--output-dir", tmp_path)
    assert _run(*common, "--gate", "3000:50") == EXIT_CONFIG
    assert _run(*common, "--gate", "50") == EXIT_CONFIG
    assert _run(*common, "--threads", "zero") == EXIT_CONFIG
    assert _run(*common, "--threads", "0") == EXIT_CONFIG


# -------------------------------------------------------------- checksums


def test_checksum_verification_gate(synth_dir, tmp_path, capsys):
    files = sorted(p for p in synth_dir.iterdir() if p.suffix == ".qrs")
    good = "\n".join(
        f"{hashlib.sha256(p.read_bytes()).hexdigest()}  {p.name}" for p in files
    )
    ok_list = tmp_path / "ok.sha256"
    ok_list.write_text(good + "\n# trailing comment\n")
    assert verify_checksums(synth_dir, ok_list) == len(files)

    bad_list = tmp_path / "bad.sha256"
    bad_list.write_text("0" * 64 + f"  {files[0].name}\n")
    out = tmp_path / "out"
    code = _run(
        "ingest",
        "--dataset-dir",
        synth_dir,
        "--output-dir",
        out,
        "--checksums",
        bad_list,
    )
    assert code == EXIT_INGEST
    assert "checksum mismatch" in capsys.readouterr().err

    missing_list = tmp_path / "missing.sha256"
    missing_list.write_text("0" * 64 + "  ghost.qrs\n")
    with pytest.raises(Exception, match="missing"):
        verify_checksums(synth_dir, missing_list)


# ------------------------------------------------------------ subcommands


def test_ingest_writes_windows_and_manifest(synth_dir, tmp_path, capsys):
    out = tmp_path / "out"
    code = _run(
        "ingest",
        "--dataset-dir",
        synth_dir,
        "--output-dir",
        out,
        "--measure",
        "drr",
        "--mseq",
        "32",
    )
    assert code == EXIT_OK
    printed = capsys.readouterr().out
    assert "records" in printed and "windows" in printed
    with open(out / "windows-drr-m32.csv", encoding="utf-8") as fh:
        windows = read_windows_manifest(fh)
    assert windows and all(w.m_seq == 32 and w.measure == "drr" for w in windows)
    manifest = json.loads((out / "ingest-manifest.json").read_text())
    assert manifest["config"]["seed"] == 0
    assert len(manifest["fingerprint"]) == 16
    assert manifest["windows"] == len(windows)


def test_crossval_end_to_end_reruns_bit_identically(synth_dir, tmp_path):
    def run(out):
        code = _run(
            "crossval",
            "--dataset-dir",
            synth_dir,
            "--output-dir",
            out,
            "--mseq",
            "32",
            "--k",
            "1,3",
        )
        assert code == EXIT_OK
        return (out / "crossval.csv").read_bytes()

    first = run(tmp_path / "a")
    second = run(tmp_path / "b")
    assert first == second
    manifest = json.loads((tmp_path / "a" / "crossval-manifest.json").read_text())
    assert manifest["best_k"] in (1, 3)
    assert set(manifest["avg_by_k"]) == {"1", "3"}
    assert len(manifest["folds"]) == 5
    assert not (tmp_path / "a" / "predictions.csv").exists()


def test_crossval_keep_predictions_flag(synth_dir, tmp_path):
    out = tmp_path / "out"
    code = _run(
        "crossval",
        "--dataset-dir",
        synth_dir,
        "--output-dir",
        out,
        "--mseq",
        "32",
        "--k",
        "1",
        "--keep-predictions",
    )
    assert code == EXIT_OK
    lines = (out / "predictions.csv").read_text().splitlines()
    assert lines[0] == "test_id,true_label,predicted_label,k"
    assert len(lines) > 1


def test_fewshot_command(synth_dir, tmp_path, capsys):
    out = tmp_path / "out"
    code = _run(
        "fewshot",
        "--dataset-dir",
        synth_dir,
        "--output-dir",
        out,
        "--mseq",
        "32",
        "--shots",
        "2,5",
        "--fold",
        "1",
    )
    assert code == EXIT_OK
    assert "n=2" in capsys.readouterr().out
    lines = (out / "fewshot.csv").read_text().splitlines()
    assert lines[0] == "subfold_id,n,k,accuracy,macro_f1,faulty_flag"
    assert len(lines) > 2
    manifest = json.loads((out / "fewshot-manifest.json").read_text())
    assert manifest["config"]["fold_index"] == 1
    assert set(manifest["subfold_counts"]) == {"2", "5"}


def test_fewshot_infeasible_shots_is_a_compute_error(synth_dir, tmp_path, capsys):
    code = _run(
        "fewshot",
        "--dataset-dir",
        synth_dir,
        "--output-dir",
        tmp_path / "out",
        "--mseq",
        "32",
        "--shots",
        "999999",
    )
    assert code == EXIT_COMPUTE
    assert "feasible" in capsys.readouterr().err


def test_matrix_command(synth_dir, tmp_path, capsys):
    out = tmp_path / "out"
    code = _run(
        "matrix",
        "--dataset-dir",
        synth_dir,
        "--output-dir",
        out,
        "--mseq",
        "32",
        "--per-class",
        "3",
        "--train-record",
        "s00",
        "--test-record",
        "s01",
    )
    assert code == EXIT_OK
    assert "mean NCD" in capsys.readouterr().out
    matrix = load_matrix(out / "matrix.ncdm")
    assert matrix.values.shape == (6, 6)
    manifest = json.loads((out / "matrix-manifest.json").read_text())
    assert len(manifest["block_means"]) == 4
    assert (out / "matrix.csv").exists()


def test_matrix_requires_both_records(synth_dir, tmp_path, capsys):
    code = _run(
        "matrix",
        "--dataset-dir",
        synth_dir,
        "--output-dir",
        tmp_path,
        "--train-record",
        "s00",
    )
    assert code == EXIT_CONFIG
    assert "--test-record" in capsys.readouterr().err


def test_records_filter_limits_ingest(synth_dir, tmp_path):
    out = tmp_path / "out"
    code = _run(
        "ingest",
        "--dataset-dir",
        synth_dir,
        "--output-dir",
        out,
        "--records",
        "s00,s02",
        "--mseq",
        "32",
    )
    assert code == EXIT_OK
    with open(out / "windows-drr-m32.csv", encoding="utf-8") as fh:
        windows = read_windows_manifest(fh)
    assert {w.record_id for w in windows} == {"s00", "s02"}
