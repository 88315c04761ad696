import json
import subprocess
import sys

import pytest

from canonparse import DATA_DIR, __version__
from canonparse.cli import SUBCOMMANDS, main
from canonparse.grammar import recognize, tokenize

GR = str(DATA_DIR / "toy_pizza.gr")
SCHEME = str(DATA_DIR / "toy_pizza.scheme")
GOLDEN = str(DATA_DIR / "toy_golden.jsonl")
HELDOUT = str(DATA_DIR / "toy_heldout.jsonl")
UNLABELED = str(DATA_DIR / "toy_unlabeled.jsonl")


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def model(tmp_path_factory):
    path = tmp_path_factory.mktemp("m") / "model.tsv"
    assert main(["train", "--data", GOLDEN, "--output", str(path)]) == 0
    return path


def test_sample(capsys, toy):
    code, out, _ = run(["sample", "--grammar", GR, "--n", "5", "--seed", "3"], capsys)
    lines = out.splitlines()
    assert code == 0 and len(lines) == 5
    assert all(recognize(toy, line.split()) for line in lines)
    assert run(["sample", "--grammar", GR, "--n", "5", "--seed", "3"], capsys)[1] == out


def test_enumerate(capsys, toy_forms_oracle):
    code, out, _ = run(["enumerate", "--grammar", GR], capsys)
    lines = out.splitlines()
    assert code == 0 and len(lines) == 192
    assert lines == sorted(lines)
    assert lines == [" ".join(f) for f in toy_forms_oracle]


def test_mask_and_noise(capsys, tmp_path):
    code, out, _ = run(["mask", "--input", UNLABELED, "--seed", "1"], capsys)
    rows = [json.loads(line) for line in out.splitlines()]
    assert code == 0 and len(rows) == 60
    assert all("MASK" in r["source"] and r["task"] == "mask" for r in rows)
    code, out, _ = run(["noise", "--grammar", GR, "--sample", "20", "--op-weights", "delete=1"], capsys)
    rows = [json.loads(line) for line in out.splitlines()]
    assert code == 0 and len(rows) == 20
    assert all(len(r["source"].split()) <= len(r["target"].split()) for r in rows)


def test_joint_counts(capsys):
    code, out, _ = run(["joint", "--grammar", GR, "--labeled", GOLDEN, "--utterances", UNLABELED,
                        "--sample", "50"], capsys)
    tasks = [json.loads(line)["task"] for line in out.splitlines()]
    assert code == 0
    assert (tasks.count("parse"), tasks.count("mask"), tasks.count("denoise")) == (16, 60, 50)


def test_decode_constrained_vs_unconstrained(capsys, model, tmp_path):
    code, out, _ = run(["decode", "--model", str(model), "--grammar", GR, "--input", HELDOUT], capsys)
    con = [json.loads(line) for line in out.splitlines()]
    code2, out2, _ = run(["decode", "--model", str(model), "--grammar", GR, "--input", HELDOUT,
                          "--unconstrained"], capsys)
    unc = [json.loads(line) for line in out2.splitlines()]
    assert code == code2 == 0 and len(con) == len(unc) == 60
    assert all(r["valid"] for r in con)
    assert sum(r["valid"] for r in unc) <= 60


def test_decode_needs_grammar(capsys, model):
    code, _, err = run(["decode", "--model", str(model), "--input", HELDOUT], capsys)
    assert code == 1 and json.loads(err)["command"] == "decode"


def test_eval_outputs(capsys, model, tmp_path):
    preds = tmp_path / "preds.jsonl"
    assert main(["decode", "--model", str(model), "--grammar", GR, "--input", HELDOUT,
                 "--output", str(preds)]) == 0
    tsv, png = tmp_path / "eval.tsv", tmp_path / "eval.png"
    code, out, _ = run(["eval", "--scheme", SCHEME, "--predictions", str(preds), "--gold", HELDOUT,
                        "--tsv", str(tsv), "--plot", str(png)], capsys)
    res = json.loads(out)
    assert code == 0 and res["n"] == 60 and res["valid_form_rate"] == 1.0
    assert res["em"] <= res["unordered_em"]
    assert len(tsv.read_text().splitlines()) == 61
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_eval_gold_against_itself(capsys):
    code, out, _ = run(["eval", "--scheme", SCHEME, "--predictions", HELDOUT, "--field", "target",
                        "--gold", HELDOUT], capsys)
    assert code == 0 and json.loads(out)["em"] == 1.0


def test_eval_length_mismatch(capsys):
    code, _, err = run(["eval", "--scheme", SCHEME, "--predictions", GOLDEN, "--field", "target",
                        "--gold", HELDOUT], capsys)
    assert code == 1 and json.loads(err)["error"] == "DataError"


def test_selftrain_outputs_and_rerun(capsys, tmp_path):
    argv = ["selftrain", "--scheme", SCHEME, "--golden", GOLDEN, "--unlabeled", UNLABELED,
            "--heldout", HELDOUT, "--sample", "100"]
    paths = {}
    for tag in ("a", "b"):
        paths[tag] = [tmp_path / f"{tag}.json", tmp_path / f"{tag}.silver", tmp_path / f"{tag}.model",
                      tmp_path / f"{tag}.png"]
        rep, silver, model, png = paths[tag]
        assert main(argv + ["--output", str(rep), "--silver-out", str(silver), "--model-out", str(model),
                            "--plot", str(png)]) == 0
    for a, b in zip(paths["a"], paths["b"]):
        assert a.read_bytes() == b.read_bytes(), a.name
    rnd = json.loads(paths["a"][0].read_text())["rounds"][0]
    assert rnd["silver_count"] + rnd["failed_count"] == 60
    assert "durations" not in rnd


def test_missing_file_exit_1(capsys, tmp_path):
    code, _, err = run(["sample", "--grammar", str(tmp_path / "nope.gr")], capsys)
    assert code == 1
    assert set(json.loads(err)) == {"error", "message", "command"}


def test_bad_grammar_exit_1(capsys, tmp_path):
    bad = tmp_path / "bad.gr"
    bad.write_text("S -> A\n")
    code, _, err = run(["enumerate", "--grammar", str(bad)], capsys)
    assert code == 1 and "A" in json.loads(err)["message"]


def test_bad_op_weights_exit_1(capsys):
    code, _, _ = run(["noise", "--grammar", GR, "--sample", "2", "--op-weights", "delete"], capsys)
    assert code == 1


def test_usage_errors_exit_2(capsys):
    for argv in (["sample"], ["nosuchcmd"], ["sample", "--grammar", GR, "--n", "many"]):
        with pytest.raises(SystemExit) as ei:
            main(argv)
        assert ei.value.code == 2
    capsys.readouterr()


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["--help"])
    out = capsys.readouterr().out
    assert ei.value.code == 0
    for name in SUBCOMMANDS:
        assert name in out


def test_version(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["--version"])
    assert ei.value.code == 0 and __version__ in capsys.readouterr().out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "canonparse", "sample", "--grammar", GR, "--n", "2"],
                         capture_output=True, text=True, check=True)
    assert len(res.stdout.splitlines()) == 2
    assert all(tokenize(line) for line in res.stdout.splitlines())
