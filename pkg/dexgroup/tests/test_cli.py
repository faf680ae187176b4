"""Tests of the dexgroup command."""

import pytest # type:ignore

from dexgroup import __version__
from dexgroup.classifier import deserialize_model  # type:ignore
from dexgroup.cli import (
    EXIT_DATA,
    EXIT_OK,
    EXIT_USAGE,
    RunConfig,
    run,
)
from dexgroup.corpus import ExtractedCorpus


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A small synthetic corpus, generated and extracted once."""
    root = tmp_path_factory.mktemp("cli")
    assert run(["generate-synthetic", "--out", str(root / "apps"), "--apps-per-class", "4", "--seed", "1"]) == EXIT_OK
    assert run(["extract", "--manifest", str(root / "apps" / "manifest.tsv"), "--out", str(root / "work")]) == EXIT_OK
    return root


def body(text):
    """A file's lines without the run header."""
    return [line for line in text.splitlines() if not line.startswith("#")]


def sweep_args(workspace, out, *extra):
    return [
        "sweep", "--corpus", str(workspace / "work"), "--out", str(out),
        "--kinds", "tree,nb-tree", "--n-list", "5,10",
    ] + list(extra)


class TestRunConfig(object):

    def test_header(self):
        config = RunConfig("sweep", "results", corpus="work", kinds=("tree", "forest"), relative=True)
        header = config.header()
        assert header[0] == "dexgroup %s" % __version__
        assert "subcommand: sweep" in header
        assert "kinds: tree,forest" in header
        assert "relative: true" in header
        assert "manifest: -" in header
        assert not any(line.startswith("out:") for line in header)

    def test_settings(self):
        config = RunConfig("train", "x", seed=4, test_fraction=0.5, n_trees=7, prune=True)
        assert config.split_spec().seed == 4
        assert config.split_spec().test_fraction == 0.5
        assert config.hyperparameters().n_trees == 7
        assert config.hyperparameters().prune


class TestPipeline(object):

    def test_generate(self, workspace):
        text = (workspace / "apps" / "synthetic.txt").read_text()
        assert "# planted SMS: 0x" in text
        assert (workspace / "apps" / "manifest.tsv").exists()

    def test_extract(self, workspace):
        work = workspace / "work"
        corpus = ExtractedCorpus.read(work)
        assert len(corpus) == 9 * 8
        assert (work / "quarantine.tsv").read_text().startswith("# dexgroup-quarantine 1\n")
        assert any((work / "cache").iterdir())
        # The default cache directory is written out in full.
        assert "# cache: %s\n" % (work / "cache") in (work / "quarantine.tsv").read_text()

    def test_extract_again_uses_cache(self, workspace, tmp_path, capsys):
        args = [
            "extract", "--manifest", str(workspace / "apps" / "manifest.tsv"),
            "--out", str(tmp_path), "--cache", str(workspace / "work" / "cache"),
        ]
        assert run(args) == EXIT_OK
        assert "0 apps extracted, 72 from cache" in capsys.readouterr().out
        assert "# cache: %s\n" % (workspace / "work" / "cache") in (tmp_path / "quarantine.tsv").read_text()
        assert body((tmp_path / "histograms.csv").read_text()) == body(
            (workspace / "work" / "histograms.csv").read_text()
        )

    def test_group(self, workspace, tmp_path):
        assert run(["group", "--corpus", str(workspace / "work"), "--out", str(tmp_path)]) == EXIT_OK
        lines = (tmp_path / "groups.tsv").read_text().splitlines()
        assert "group\tbenign\tmalicious\ttotal" in lines
        assert "SMS\t4\t4\t8" in lines
        assert "Others\t4\t4\t8" in lines
        assignments = (tmp_path / "assignments.tsv").read_text().splitlines()
        assert "sms-benign-0000\tSMS" in assignments

    def test_select(self, workspace, tmp_path):
        args = ["select", "--corpus", str(workspace / "work"), "--out", str(tmp_path), "--top", "5"]
        assert run(args) == EXIT_OK
        assert (tmp_path / "ranking-sms.tsv").exists()
        differences = (tmp_path / "differences-camera.tsv").read_text().splitlines()
        rows = [line for line in differences if not line.startswith("#")]
        assert rows[0] == "mnemonic\tscore"
        assert len(rows) == 1 + 5

    def test_select_one_group(self, workspace, tmp_path):
        args = ["select", "--corpus", str(workspace / "work"), "--out", str(tmp_path), "--group", "sms"]
        assert run(args) == EXIT_OK
        assert sorted(p.name for p in tmp_path.iterdir()) == ["differences-sms.tsv", "ranking-sms.tsv"]

    def test_train_then_evaluate_model(self, workspace, tmp_path, capsys):
        common = ["--corpus", str(workspace / "work"), "--out", str(tmp_path), "--group", "SMS", "--n", "5"]
        assert run(["train", "--kind", "tree"] + common) == EXIT_OK
        model_file = tmp_path / "model-sms-tree-5.dxgm"
        model = deserialize_model(model_file.read_bytes())
        assert model.kind == "tree"
        assert len(model.feature_list) == 5
        assert "features: 0x" in (tmp_path / "model-sms-tree-5.txt").read_text()

        assert run(["evaluate", "--model", str(model_file)] + common) == EXIT_OK
        from_model = (tmp_path / "evaluate-sms-tree-5.tsv").read_text()
        assert run(["evaluate", "--kind", "tree"] + common) == EXIT_OK
        retrained = (tmp_path / "evaluate-sms-tree-5.tsv").read_text()
        # Training again with the same seed gives the same cell.
        assert body(from_model) == body(retrained)
        assert "SMS/tree/n=5: accuracy" in capsys.readouterr().out

    def test_sweep_and_report(self, workspace, tmp_path):
        results = tmp_path / "results"
        assert run(sweep_args(workspace, results, "--include-ungrouped")) == EXIT_OK
        names = {p.name for p in results.iterdir()}
        assert {"records.tsv", "tables.txt", "plot-sms.dat", "plot-all.dat"} <= names

        again = tmp_path / "again"
        args = ["report", "--records", str(results / "records.tsv"), "--out", str(again), "--formats", "tables"]
        assert run(args) == EXIT_OK
        assert [p.name for p in again.iterdir()] == ["tables.txt"]
        assert body((again / "tables.txt").read_text()) == body((results / "tables.txt").read_text())

    def test_sweep_is_reproducible(self, workspace, tmp_path):
        assert run(sweep_args(workspace, tmp_path / "a", "--seed", "3")) == EXIT_OK
        assert run(sweep_args(workspace, tmp_path / "b", "--seed", "3")) == EXIT_OK
        for name in ("records.tsv", "tables.txt", "plot-sms.dat"):
            assert (tmp_path / "a" / name).read_text() == (tmp_path / "b" / name).read_text()

    def test_workers_do_not_change_results(self, workspace, tmp_path):
        assert run(sweep_args(workspace, tmp_path / "one")) == EXIT_OK
        assert run(sweep_args(workspace, tmp_path / "two", "--workers", "2")) == EXIT_OK
        one = (tmp_path / "one" / "records.tsv").read_text().splitlines()
        two = (tmp_path / "two" / "records.tsv").read_text().splitlines()
        # Only the workers line of the header differs.
        assert [l for l in one if not l.startswith("# workers")] == [
            l for l in two if not l.startswith("# workers")
        ]

    def test_synthetic_benchmark_sweep(self, tmp_path, capsys):
        args = [
            "sweep", "--synthetic-benchmark", "--apps-per-class", "5",
            "--kinds", "tree", "--n-list", "10", "--out", str(tmp_path),
        ]
        assert run(args) == EXIT_OK
        assert "Average of per-group best accuracies" in capsys.readouterr().out


class TestUsageErrors(object):

    @pytest.mark.parametrize(
        "args",
        [
            [],
            ["shred"],
            ["sweep", "--out", "x"],
            ["sweep", "--out", "x", "--corpus", "c", "--test-fraction", "1.5"],
            ["sweep", "--out", "x", "--corpus", "c", "--n-list", "ten"],
            ["sweep", "--out", "x", "--corpus", "c", "--seed", "-1"],
            ["extract", "--out", "x", "--manifest", "m", "--on-unknown", "shrug"],
        ],
    )
    def test_bad_arguments(self, args, capsys):
        assert run(args) == EXIT_USAGE
        assert "error" in capsys.readouterr().err

    @pytest.mark.parametrize(
        "extra",
        [
            ["--kinds", "tree,svm"],
            ["--n-list", "10,0"],
            ["--n-list", "300"],
        ],
    )
    def test_bad_plan(self, workspace, tmp_path, extra, capsys):
        args = ["sweep", "--corpus", str(workspace / "work"), "--out", str(tmp_path)] + extra
        assert run(args) == EXIT_USAGE
        assert "dexgroup: error:" in capsys.readouterr().err
        assert not (tmp_path / "records.tsv").exists()

    def test_unknown_group(self, workspace, tmp_path):
        args = ["train", "--corpus", str(workspace / "work"), "--out", str(tmp_path),
                "--group", "Nonsense", "--kind", "tree", "--n", "5"]
        assert run(args) == EXIT_USAGE

    def test_evaluate_needs_kind_or_model(self, workspace, tmp_path):
        args = ["evaluate", "--corpus", str(workspace / "work"), "--out", str(tmp_path), "--group", "SMS", "--n", "5"]
        assert run(args) == EXIT_USAGE

    @pytest.mark.parametrize("flag", ["--relative", "--include-test-in-selection"])
    def test_selection_flags_with_saved_model(self, workspace, tmp_path, flag):
        common = ["--corpus", str(workspace / "work"), "--out", str(tmp_path), "--group", "SMS", "--n", "5"]
        assert run(["train", "--kind", "tree"] + common) == EXIT_OK
        model_file = tmp_path / "model-sms-tree-5.dxgm"
        assert run(["evaluate", "--model", str(model_file), flag] + common) == EXIT_USAGE
        assert not (tmp_path / "evaluate-sms-tree-5.tsv").exists()

    def test_unknown_report_format(self, tmp_path):
        args = ["report", "--records", str(tmp_path / "r.tsv"), "--out", str(tmp_path), "--formats", "html"]
        assert run(args) == EXIT_USAGE

    def test_version(self, capsys):
        assert run(["--version"]) == EXIT_OK
        assert __version__ in capsys.readouterr().out


class TestDataErrors(object):

    def test_every_app_quarantined(self, tmp_path, capsys):
        (tmp_path / "corpus.tsv").write_text("gone\tbenign\tmissing.apk\n")
        args = ["extract", "--manifest", str(tmp_path / "corpus.tsv"), "--out", str(tmp_path / "work")]
        assert run(args) == EXIT_DATA
        assert "0 apps extracted, 0 from cache, 1 quarantined." in capsys.readouterr().out
        assert "gone\tmissing.apk\t" in (tmp_path / "work" / "quarantine.tsv").read_text()

    def test_missing_corpus(self, tmp_path, capsys):
        args = ["sweep", "--corpus", str(tmp_path / "nowhere"), "--out", str(tmp_path)]
        assert run(args) == EXIT_DATA
        assert "CorruptArtifact" in capsys.readouterr().err

    def test_damaged_records(self, tmp_path):
        (tmp_path / "records.tsv").write_text("not records\n")
        args = ["report", "--records", str(tmp_path / "records.tsv"), "--out", str(tmp_path)]
        assert run(args) == EXIT_DATA

    def test_skipped_cell(self, workspace, tmp_path):
        # No generated app asks for body sensors.
        args = ["evaluate", "--corpus", str(workspace / "work"), "--out", str(tmp_path),
                "--group", "Sensors", "--kind", "tree", "--n", "5"]
        assert run(args) == EXIT_DATA
        assert "\tskipped\t" in (tmp_path / "evaluate-sensors-tree-5.tsv").read_text()
