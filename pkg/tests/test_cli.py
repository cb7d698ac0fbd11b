import csv
import json
import shutil

import pytest

from polarlens import cli
from polarlens.cli import REPORT_FILES, build_config, build_parser, main, sha256_file

FAST = ["--sweeps", "40", "--topics", "4"]


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    spec = d / "spec.json"
    spec.write_text(json.dumps({"n_users": 240, "tweets_per_user": [8, 12], "rng_seed": 5}))
    assert main(["synth", "--spec", str(spec), "--out", str(d / "corpus.jsonl"), "--truth", str(d / "truth.csv")]) == 0
    return d


def _base(bundle, workdir, vectors=True):
    args = ["--workdir", str(workdir), "--catalog-dir", str(bundle / "catalogs"), "--seeds-dir", str(bundle / "seeds")]
    if vectors:
        args += ["--vectors", str(bundle / "vectors.txt")]
    return args


@pytest.fixture(scope="module")
def full_run(bundle, tmp_path_factory):
    work = tmp_path_factory.mktemp("run")
    assert main(["run", "--input", str(bundle / "corpus.jsonl"), *_base(bundle, work), *FAST]) == 0
    return work


def test_synth_writes_inputs(bundle):
    assert (bundle / "corpus.jsonl").stat().st_size > 0
    assert (bundle / "truth.csv").exists() and (bundle / "vectors.txt").exists()
    assert sorted(p.name for p in (bundle / "catalogs").iterdir()) == ["moderacy.csv", "political.csv", "science.csv"]
    assert len(list((bundle / "seeds").iterdir())) == 3


def test_ingest_then_score(bundle, tmp_path, capsys):
    base = _base(bundle, tmp_path)
    assert main(["ingest", "--input", str(bundle / "corpus.jsonl"), *base]) == 0
    capsys.readouterr()
    assert main(["score", *base]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert set(summary) == {"science", "political", "moderacy"}
    assert (tmp_path / "scores.csv").exists()
    cut = json.loads((tmp_path / "scores.cutoffs.json").read_text())
    assert set(cut["cutoffs"]) == {"science", "political", "moderacy"}
    man = json.loads((tmp_path / "manifests" / "score.json").read_text())
    assert man["inputs"]["users.jsonl"] == sha256_file(tmp_path / "users.jsonl")
    assert man["outputs"]["scores.csv"] == sha256_file(tmp_path / "scores.csv")
    assert man["config"]["q"] == 0.3 and "workdir" not in man["config"]


def test_train_before_score(bundle, tmp_path, capsys):
    base = _base(bundle, tmp_path)
    assert main(["ingest", "--input", str(bundle / "corpus.jsonl"), *base]) == 0
    capsys.readouterr()
    assert main(["train", *base]) == 2
    assert "run score first" in capsys.readouterr().err


def test_score_before_ingest(bundle, tmp_path, capsys):
    assert main(["score", *_base(bundle, tmp_path)]) == 2
    assert "run ingest first" in capsys.readouterr().err


def test_report_before_analyze_lists_missing(bundle, tmp_path, capsys):
    assert main(["report", *_base(bundle, tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "drift.csv" in err and "run analyze first" in err


def test_missing_input_is_validation_error(bundle, tmp_path, capsys):
    assert main(["ingest", "--input", str(tmp_path / "nope.jsonl"), "--workdir", str(tmp_path)]) == 2
    assert main(["lpa", *_base(bundle, tmp_path), "--dim", "galaxy"]) == 2


def test_runtime_error_exit_code(bundle, tmp_path, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr(cli, "stage_ingest", boom)
    assert main(["ingest", "--input", str(bundle / "corpus.jsonl"), "--workdir", str(tmp_path)]) == 1


def test_full_run_report(full_run):
    report = full_run / "report"
    assert len(REPORT_FILES) == 6
    for name in REPORT_FILES:
        assert (report / name).exists(), name
    rows = list(csv.DictReader(open(report / "evaluation.csv")))
    methods = {r["method"] for r in rows}
    assert {"lpa", "bow", "lda", "embed"} <= methods
    assert all(r["note"] == "" for r in rows if r["method"] == "embed")
    man = json.loads((report / "manifest.json").read_text())
    assert set(man["outputs"]) == {f"report/{n}" for n in REPORT_FILES}
    for stage in ("ingest", "score", "graph", "lpa", "train", "classify", "analyze"):
        assert f"manifests/{stage}.json" in man["inputs"]


def test_fraction_tables_normalize(full_run):
    for name in ("activity.csv", "states.csv"):
        for row in csv.DictReader(open(full_run / "report" / name)):
            vals = [float(v) for k, v in row.items() if "-" in k and v != ""]
            if vals:
                assert abs(sum(vals) - 1) <= 1e-9


def test_rerun_is_byte_identical(bundle, full_run, tmp_path):
    assert main(["run", "--input", str(bundle / "corpus.jsonl"), *_base(bundle, tmp_path), *FAST]) == 0
    for name in REPORT_FILES:
        assert (tmp_path / "report" / name).read_bytes() == (full_run / "report" / name).read_bytes(), name
    for p in sorted(full_run.glob("*.*")):
        assert (tmp_path / p.name).read_bytes() == p.read_bytes(), p.name


def test_stage_rerun_in_place_is_identical(bundle, full_run, tmp_path):
    work = tmp_path / "w"
    shutil.copytree(full_run, work)
    before = {p.name: p.read_bytes() for p in work.glob("*.*")}
    assert main(["score", *_base(bundle, work)]) == 0
    assert main(["report", *_base(bundle, work)]) == 0
    assert {p.name: p.read_bytes() for p in work.glob("*.*")} == before
    assert (work / "report" / "evaluation.csv").read_bytes() == (full_run / "report" / "evaluation.csv").read_bytes()


def test_missing_embeddings_noted(bundle, tmp_path):
    assert main(["run", "--input", str(bundle / "corpus.jsonl"), *_base(bundle, tmp_path, vectors=False), *FAST]) == 0
    rows = list(csv.DictReader(open(tmp_path / "report" / "evaluation.csv")))
    embed = [r for r in rows if r["method"] == "embed"]
    assert embed and all("not run" in r["note"] and r["accuracy"] == "" for r in embed)
    assert all(r["note"] == "" for r in rows if r["method"] == "bow")


def _config(args):
    return build_config(build_parser().parse_args(args))


def test_config_precedence(bundle, tmp_path):
    conf = tmp_path / "sub" / "p.ini"
    conf.parent.mkdir()
    shutil.copytree(bundle / "catalogs", tmp_path / "cats")
    conf.write_text("[polarlens]\nq = 0.25\nmin_domains = 4\ncatalog_dir = ../cats\nwindow = 2020-02-01:2020-03-01\n")
    cfg = _config(["score", "--config", str(conf), "--workdir", str(tmp_path)])
    assert cfg.q == 0.25 and cfg.min_domains == 4
    assert cfg.catalog_dir.resolve() == (tmp_path / "cats").resolve()
    assert str(cfg.window_start) == "2020-02-01"
    cfg = _config(["score", "--config", str(conf), "--workdir", str(tmp_path), "--q", "0.2"])
    assert cfg.q == 0.2 and cfg.min_domains == 4
    assert _config(["score", "--workdir", str(tmp_path)]).q == 0.3


@pytest.mark.parametrize(
    "body",
    ["[polarlens]\ncolour = red\n", "[other]\nq = 0.3\n", "[polarlens]\nq = 0.9\n", "[polarlens]\nq = lots\n"],
)
def test_bad_config_file(tmp_path, body, capsys):
    conf = tmp_path / "c.ini"
    conf.write_text(body)
    assert main(["score", "--config", str(conf), "--workdir", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_bad_flag_values(tmp_path):
    assert main(["score", "--workdir", str(tmp_path), "--q", "0"]) == 2
    assert main(["score", "--workdir", str(tmp_path), "--catalog-dir", str(tmp_path / "none")]) == 2
    assert main(["train", "--workdir", str(tmp_path), "--kind", "tarot"]) == 2
