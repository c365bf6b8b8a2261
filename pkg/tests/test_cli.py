import json

import pytest

from lyricgen.cli import main
from lyricgen.config import CONFIG_ENV_VAR


def run_cli(*argv):
    return main(list(argv))


def test_synth_data_deterministic(tmp_path, capsys):
    for sub in ("a", "b"):
        (tmp_path / sub).mkdir()
        assert run_cli("synth-data", "--out", str(tmp_path / sub / "c.jsonl"),
                       "--vectors", str(tmp_path / sub / "v.txt"),
                       "--seed", "3", "--songs", "10") == 0
    assert (tmp_path / "a" / "c.jsonl").read_bytes() == \
        (tmp_path / "b" / "c.jsonl").read_bytes()
    assert (tmp_path / "a" / "v.txt").read_bytes() == \
        (tmp_path / "b" / "v.txt").read_bytes()
    out = capsys.readouterr().out
    assert "wrote" in out


def test_prepare_missing_corpus_fails(tmp_path, capsys):
    code = run_cli("prepare", "--corpus", str(tmp_path / "nope.jsonl"),
                   "--out-dir", str(tmp_path / "prep"))
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_prepare_corrupt_record_reports_line(tmp_path, capsys):
    corpus = tmp_path / "c.jsonl"
    corpus.write_text(
        '{"song_id": "s", "line_index": 0, "syllables": ["a", "b"], '
        '"notes": [[60, 4], [62, 4]]}\n'
        '{"song_id": "s", "line_index": 1, "syllables": ["a"], '
        '"notes": [[200, 4]]}\n')
    code = run_cli("prepare", "--corpus", str(corpus),
                   "--out-dir", str(tmp_path / "prep"))
    assert code == 1
    err = capsys.readouterr().err
    assert ":2:" in err and "pitch" in err


def test_generate_cli_deterministic(workspace, tmp_path, capsys):
    args = ("generate", "--checkpoint", str(workspace["mc_ckpt"]),
            "--prep", str(workspace["prep"].path),
            "--melody", "60:4 62:4 64:8", "--count", "2", "--seed", "9")
    assert run_cli(*args, "--out", str(tmp_path / "a.txt")) == 0
    assert run_cli(*args, "--out", str(tmp_path / "b.txt")) == 0
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    text = (tmp_path / "a.txt").read_text()
    assert len(text.splitlines()) == 2
    assert "[aligned" in text or "[off" in text


def test_generate_cli_json_shape(workspace, capsys):
    assert run_cli("generate", "--checkpoint", str(workspace["mc_ckpt"]),
                   "--prep", str(workspace["prep"].path),
                   "--melody", "60:4 62:4", "--json", "--seed", "4") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["model"] == "mc" and doc["seed"] == 4
    assert len(doc["lines"]) == 1
    assert isinstance(doc["lines"][0]["aligned"], bool)


def test_generate_cli_bad_melody_token(workspace, capsys):
    code = run_cli("generate", "--checkpoint", str(workspace["mc_ckpt"]),
                   "--prep", str(workspace["prep"].path),
                   "--melody", "60:4 oops:4")
    assert code == 1
    assert "token 2" in capsys.readouterr().err


def test_train_adv_without_mle_fails(workspace, tmp_path, capsys):
    code = run_cli("train", "--prep", str(workspace["prep"].path),
                   "--out-dir", str(tmp_path), "--mode", "none",
                   "--phase", "adv", "--seed", "7")
    assert code == 1
    assert "--phase mle" in capsys.readouterr().err


def test_train_tmc_without_theme_fails(workspace, tmp_path, capsys):
    code = run_cli("train", "--prep", str(workspace["prep"].path),
                   "--out-dir", str(tmp_path), "--mode", "tmc",
                   "--phase", "mle", "--seed", "7")
    assert code == 1
    assert "lyricgen lda" in capsys.readouterr().err


def test_evaluate_cli_baselines(workspace, tmp_path, capsys):
    assert run_cli("evaluate", "--prep", str(workspace["prep"].path),
                   "--out-dir", str(tmp_path / "rep"), "--seed", "7") == 0
    out = capsys.readouterr().out
    assert "bigram" in out and "mc-bigram" in out and "+/-" in out
    report = json.loads((tmp_path / "rep" / "report.json").read_text())
    assert report["seed"] == 7


def test_config_file_and_env_var(workspace, tmp_path, capsys, monkeypatch):
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps({
        "prep_dir": str(workspace["prep"].path),
        "report_dir": str(tmp_path / "rep"),
        "seed": 7,
    }))
    monkeypatch.setenv(CONFIG_ENV_VAR, str(cfg_path))
    assert run_cli("evaluate") == 0          # all paths from the config file
    assert (tmp_path / "rep" / "report.json").exists()
    capsys.readouterr()
    monkeypatch.delenv(CONFIG_ENV_VAR)
    code = run_cli("evaluate")               # no config, no flags -> error
    assert code != 0


def test_missing_config_file_reports(tmp_path, capsys):
    code = run_cli("evaluate", "--config", str(tmp_path / "absent.json"))
    assert code == 1
    assert "config file not found" in capsys.readouterr().err


def test_lda_cli_prints_themes(workspace, tmp_path, capsys):
    assert run_cli("lda", "--prep", str(workspace["prep"].path),
                   "--out-dir", str(tmp_path / "theme"), "--themes", "3",
                   "--iterations", "20", "--seed", "7") == 0
    out = capsys.readouterr().out
    assert out.count("theme ") == 3
    assert (tmp_path / "theme" / "theme_model.json").exists()
