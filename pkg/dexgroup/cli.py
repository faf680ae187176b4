"""The ``dexgroup`` command.

Each pipeline stage is its own subcommand, and stages hand their
results to each other through files in an explicit ``--out``
directory::

    dexgroup extract --manifest corpus.tsv --out work
    dexgroup sweep --corpus work --out results
    dexgroup report --records results/records.tsv --out results

Exit status is 0 on success, 1 for a usage error and 2 for a data
error, such as a corpus where every app was quarantined.
"""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

import argparse
import contextlib
import functools
import io
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import (
    Callable,
    IO,
    Iterator,
    List,
    NoReturn,
    Optional,
    Sequence,
    Tuple,
)

from dexgroup import __version__
from dexgroup._io import (
    atomic_write_bytes,
    atomic_write_text,
)
from dexgroup._typing import _MapFunction
from dexgroup.classifier import (
    Hyperparameters,
    Label,
    classifier_registry,
    predict_many,
    project,
    serialize_model,  # type:ignore
    deserialize_model,  # type:ignore
    train,
)
from dexgroup.corpus import (
    CorpusManifest,
    ExtractedCorpus,
    QUARANTINE_FILE,
    UNGROUPED,
    ingest,
)
from dexgroup.evaluation import (
    CellResult,
    ConfusionCounts,
    DEFAULT_KINDS,
    DEFAULT_N_LIST,
    DEFAULT_TEST_FRACTION,
    EvaluationReport,
    SplitSpec,
    cell_seed,
    evaluate_cell,
    prepare_group,
    sweep,
)
from dexgroup.exceptions import (
    DexgroupError,
    EvaluationError,
    UsageError,
)
from dexgroup.grouping import (
    GroupId,
    active_groups,
    group_tallies,
)
from dexgroup.report import (
    ReportFormatter,
    read_records,
)
from dexgroup.selection import (
    difference_report,
    dump_ranking,
    format_difference_report,
    top_n,
)
from dexgroup.synthetic import (
    SyntheticSpec,
    generate_synthetic,
    materialize,
    synthetic_corpus,
)

__all__ = ["RunConfig", "main", "run"]

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


@dataclass(frozen=True)
class RunConfig:
    """The resolved settings of one run. Every artifact starts with
    these as comment lines, so a result file records how it was made.
    """

    subcommand: str
    out: str
    manifest: Optional[str] = None
    corpus: Optional[str] = None
    records: Optional[str] = None
    model: Optional[str] = None
    cache: Optional[str] = None
    synthetic_benchmark: bool = False
    seed: int = 0
    test_fraction: float = DEFAULT_TEST_FRACTION
    n_list: Tuple[int, ...] = DEFAULT_N_LIST
    kinds: Tuple[str, ...] = DEFAULT_KINDS
    group: Optional[str] = None
    kind: Optional[str] = None
    n: Optional[int] = None
    top: int = 20
    include_sensors: bool = False
    include_ungrouped: bool = False
    include_test_in_selection: bool = False
    relative: bool = False
    verify_checksum: bool = False
    on_unknown: str = "warn"
    n_trees: int = 100
    prune: bool = False
    formats: Tuple[str, ...] = ("records", "tables", "plot")
    preset: str = "benchmark"
    apps_per_class: int = 83
    scale: float = 0.1
    dispersion: float = 0.3
    emit_dex: bool = False
    binary_manifest: bool = False
    workers: int = 1

    def header(self) -> List[str]:
        """``key: value`` lines describing this run. The output
        directory is left out, since artifacts live in it.
        """
        lines = ["dexgroup %s" % __version__]
        for f in fields(self):
            if f.name == "out":
                continue
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            elif value is None:
                value = "-"
            lines.append("%s: %s" % (f.name, value))
        return lines

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.test_fraction, self.seed)

    def hyperparameters(self) -> Hyperparameters:
        return Hyperparameters(n_trees=self.n_trees, prune=self.prune)

    @property
    def out_dir(self) -> Path:
        return Path(self.out)


class _ArgumentParser(argparse.ArgumentParser):
    """Exit with status 1, not argparse's 2, on a usage error."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, "%s: error: %s\n" % (self.prog, message))


def _int_list(text: str) -> Tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated integers, got %r" % text)
    return values


def _str_list(text: str) -> Tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError("must be between 0 and 1, got %s" % text)
    return value


def _non_negative(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be non-negative, got %s" % text)
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1, got %s" % text)
    return value


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", required=True, help="Directory to write results to.")
    parser.add_argument(
        "-v", "--verbose", action="count", default=0,
        help="Log progress (-v) or everything (-vv).",
    )


def _add_split(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=_non_negative, default=0, help="Seed for every random choice (default 0).")
    parser.add_argument(
        "--test-fraction", type=_fraction, default=DEFAULT_TEST_FRACTION,
        help="Share of each group's apps held out for testing (default %(default)s).",
    )
    parser.add_argument(
        "--include-sensors", action="store_true",
        help="Treat Sensors as a group of its own.",
    )
    parser.add_argument(
        "--include-test-in-selection", action="store_true",
        help="Rank opcodes on all of a group's apps, test apps included.",
    )
    parser.add_argument(
        "--relative", action="store_true",
        help="Rank opcodes by relative frequency instead of raw counts.",
    )


def _add_hyper(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n-trees", type=_positive, default=100, help="Trees per forest (default 100).")
    parser.add_argument("--prune", action="store_true", help="Reduced-error pruning for the tree learner.")


def _add_workers(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--workers", type=_positive, default=1,
        help="Worker processes (default 1, meaning none).",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="dexgroup",
        description="Detect Android malware from opcode histograms, per permission group.",
        epilog="Exit status: 0 success, 1 usage error, 2 data error.",
    )
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    commands = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    commands.required = True

    p = commands.add_parser("extract", help="Extract histograms and permissions from a corpus.")
    _add_common(p)
    p.add_argument("--manifest", required=True, help="Corpus manifest file.")
    p.add_argument("--cache", help="Extraction cache directory (default OUT/cache).")
    p.add_argument("--verify-checksum", action="store_true", help="Check DEX checksums and signatures.")
    p.add_argument(
        "--on-unknown", choices=("warn", "fail"), default="warn",
        help="What to do with an unknown smali mnemonic (default warn).",
    )
    _add_workers(p)

    p = commands.add_parser("group", help="Count each permission group's apps.")
    _add_common(p)
    p.add_argument("--corpus", required=True, help="Directory written by extract.")
    p.add_argument("--include-sensors", action="store_true", help="Treat Sensors as a group of its own.")

    p = commands.add_parser("select", help="Rank opcodes for each group.")
    _add_common(p)
    p.add_argument("--corpus", required=True, help="Directory written by extract.")
    p.add_argument("--group", help="Only this group (or %s)." % UNGROUPED)
    p.add_argument("--top", type=_positive, default=20, help="Opcodes in the difference report (default 20).")
    p.add_argument("--include-ungrouped", action="store_true", help="Also rank the whole corpus.")
    _add_split(p)

    for name, help_text in (
        ("train", "Train and save one model."),
        ("evaluate", "Evaluate one (group, kind, n) cell."),
    ):
        p = commands.add_parser(name, help=help_text)
        _add_common(p)
        p.add_argument("--corpus", required=True, help="Directory written by extract.")
        p.add_argument("--group", required=True, help="Group name, or %s." % UNGROUPED)
        p.add_argument("--n", type=int, required=True, help="Number of opcodes to use.")
        if name == "evaluate":
            p.add_argument("--kind", help="Classifier kind.")
            p.add_argument("--model", help="Score this saved model instead of training one.")
        else:
            p.add_argument("--kind", required=True, help="Classifier kind.")
        _add_split(p)
        _add_hyper(p)

    p = commands.add_parser("sweep", help="Evaluate every group, classifier and feature count.")
    _add_common(p)
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--corpus", help="Directory written by extract.")
    source.add_argument(
        "--synthetic-benchmark", action="store_true",
        help="Run on the built-in synthetic benchmark corpus.",
    )
    p.add_argument("--apps-per-class", type=_positive, default=83, help="Synthetic benchmark size (default 83).")
    p.add_argument("--kinds", type=_str_list, default=DEFAULT_KINDS, help="Comma-separated classifier kinds.")
    p.add_argument("--n-list", type=_int_list, default=DEFAULT_N_LIST, help="Comma-separated feature counts.")
    p.add_argument("--include-ungrouped", action="store_true", help="Also evaluate the whole corpus as one group.")
    _add_split(p)
    _add_hyper(p)
    _add_workers(p)

    p = commands.add_parser("report", help="Regenerate tables and plots from a records file.")
    _add_common(p)
    p.add_argument("--records", required=True, help="records.tsv written by sweep.")
    p.add_argument(
        "--formats", type=_str_list, default=("tables", "plot"),
        help="Comma-separated: %s." % ", ".join(sorted(ReportFormatter.REGISTRY)),
    )

    p = commands.add_parser("generate-synthetic", help="Write a synthetic corpus to disk.")
    _add_common(p)
    p.add_argument("--preset", choices=("benchmark", "field-shaped"), default="benchmark")
    p.add_argument("--seed", type=_non_negative, default=0)
    p.add_argument("--apps-per-class", type=_positive, default=83, help="Benchmark size (default 83).")
    p.add_argument("--scale", type=float, default=0.1, help="field-shaped size factor (default 0.1).")
    p.add_argument("--dispersion", type=float, default=0.3, help="Spread of counts around the means (default 0.3).")
    p.add_argument("--emit-dex", action="store_true", help="Also write classes.dex for each app.")
    p.add_argument("--binary-manifest", action="store_true", help="Write binary AndroidManifest.xml files.")
    return parser


def _config_from(args: argparse.Namespace) -> RunConfig:
    values = {
        f.name: getattr(args, f.name)
        for f in fields(RunConfig)
        if getattr(args, f.name, None) is not None
    }
    return RunConfig(**values)


@contextlib.contextmanager
def _map_function(workers: int) -> Iterator[_MapFunction]:
    if workers <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield functools.partial(pool.map, chunksize=4)


def _render(text_writer: Callable[[IO[str]], None]) -> str:
    buffer = io.StringIO()
    text_writer(buffer)
    return buffer.getvalue()


def _load_corpus(config: RunConfig) -> ExtractedCorpus:
    assert config.corpus is not None
    corpus = ExtractedCorpus.read(config.corpus)
    if len(corpus) == 0:
        raise EvaluationError("Corpus %s holds no apps." % config.corpus)
    return corpus


def _check_group(name: Optional[str]) -> Optional[str]:
    if name is None or name == UNGROUPED:
        return name
    try:
        return str(GroupId.from_name(name))
    except ValueError as e:
        raise UsageError(e)


def _check_kinds(kinds: Sequence[str]) -> None:
    for kind in kinds:
        if classifier_registry.lookup(kind) is None:
            raise UsageError(
                "Unknown classifier %r. Try one of: %s"
                % (kind, ", ".join(classifier_registry.names()))
            )


def _check_n(n: Sequence[int]) -> None:
    for value in n:
        if not 1 <= value <= 256:
            raise UsageError("Feature counts must be between 1 and 256, not %d." % value)


def run_extract(config: RunConfig) -> int:
    assert config.manifest is not None
    manifest = CorpusManifest.read(config.manifest)
    cache = config.cache if config.cache is not None else str(config.out_dir / "cache")
    config = replace(config, cache=cache)
    with _map_function(config.workers) as map_fn:
        result = ingest(
            manifest,
            cache_dir=cache,
            map_fn=map_fn,
            verify_checksum=config.verify_checksum,
            on_unknown=config.on_unknown,  # type:ignore
        )
    header = config.header()
    result.corpus.write(config.out_dir, header)
    atomic_write_text(
        config.out_dir / QUARANTINE_FILE,
        _render(lambda fh: result.write_quarantine(fh, header)),
    )
    print(
        "%d apps extracted, %d from cache, %d quarantined."
        % (result.extracted, result.cache_hits, len(result.quarantine))
    )
    if len(result.corpus) == 0:
        logger.error("No app could be extracted; see %s.", QUARANTINE_FILE)
        return EXIT_DATA
    return EXIT_OK


def run_group(config: RunConfig) -> int:
    corpus = _load_corpus(config)
    assignments = corpus.assignments(config.include_sensors)
    partition = corpus.partition(config.include_sensors)
    tallies = group_tallies(
        {g: [a.app_id for a in apps] for g, apps in partition.items()}, corpus.labels()
    )
    lines = ["# %s" % line for line in config.header()]
    lines.append("group\tbenign\tmalicious\ttotal")
    for group in active_groups(config.include_sensors):
        counts = tallies[group]
        benign, malicious = counts[Label.BENIGN], counts[Label.MALICIOUS]
        lines.append("%s\t%d\t%d\t%d" % (group, benign, malicious, benign + malicious))
    atomic_write_text(config.out_dir / "groups.tsv", "\n".join(lines) + "\n")

    lines = ["# %s" % line for line in config.header()]
    lines.append("app_id\tgroups")
    for assignment in assignments:
        names = sorted(str(g) for g in assignment.groups)
        lines.append("%s\t%s" % (assignment.app_id, ",".join(names)))
    atomic_write_text(config.out_dir / "assignments.tsv", "\n".join(lines) + "\n")
    return EXIT_OK


def _selected_groups(config: RunConfig) -> List[str]:
    if config.group is not None:
        return [config.group]
    groups = [str(g) for g in active_groups(config.include_sensors)]
    if config.include_ungrouped:
        groups.append(UNGROUPED)
    return groups


def run_select(config: RunConfig) -> int:
    corpus = _load_corpus(config)
    written = 0
    for group in _selected_groups(config):
        prepared = prepare_group(
            group,
            corpus.bucket(group, config.include_sensors),
            config.split_spec(),
            config.relative,
            config.include_test_in_selection,
        )
        if prepared.ranking is None:
            logger.warning("Can't rank %s: %s", group, prepared.skip_reason)
            continue
        ranking = prepared.ranking
        slug = group.lower()
        atomic_write_text(
            config.out_dir / ("ranking-%s.tsv" % slug),
            _render(lambda fh: dump_ranking(ranking, fh, group, config.header())),
        )
        rows = difference_report(ranking, min(config.top, 256))
        text = "".join("# %s\n" % line for line in config.header())
        text += format_difference_report(rows)
        atomic_write_text(config.out_dir / ("differences-%s.tsv" % slug), text)
        written += 1
    if not written:
        logger.error("No group could be ranked.")
        return EXIT_DATA
    return EXIT_OK


def _model_name(config: RunConfig) -> str:
    return "model-%s-%s-%d" % ((config.group or "").lower(), config.kind, config.n)


def run_train(config: RunConfig) -> int:
    assert config.group is not None and config.kind is not None and config.n is not None
    corpus = _load_corpus(config)
    prepared = prepare_group(
        config.group,
        corpus.bucket(config.group, config.include_sensors),
        config.split_spec(),
        config.relative,
        config.include_test_in_selection,
    )
    if prepared.ranking is None:
        raise EvaluationError("Can't train on %s: %s" % (config.group, prepared.skip_reason))
    features = top_n(prepared.ranking, config.n)
    model = train(
        config.kind,
        [project(a.histogram, features, a.label) for a in prepared.train],
        config.hyperparameters(),
        cell_seed(config.seed, config.group, config.kind, config.n),
        features,
    )
    name = _model_name(config)
    atomic_write_bytes(config.out_dir / (name + ".dxgm"), serialize_model(model))
    lines = config.header() + ["features: " + ",".join("0x%02x" % op for op in features)]
    atomic_write_text(
        config.out_dir / (name + ".txt"), "".join("# %s\n" % line for line in lines)
    )
    return EXIT_OK


def run_evaluate(config: RunConfig) -> int:
    assert config.group is not None and config.n is not None
    corpus = _load_corpus(config)
    if config.model is not None:
        if config.relative or config.include_test_in_selection:
            # Both only change how features are picked, and a saved
            # model already has its features.
            raise UsageError("--relative and --include-test-in-selection can't be used with --model.")
        model = deserialize_model(Path(config.model).read_bytes())
        prepared = prepare_group(
            config.group,
            corpus.bucket(config.group, config.include_sensors),
            config.split_spec(),
        )
        if not prepared.test:
            raise EvaluationError("Can't evaluate %s: %s" % (config.group, prepared.skip_reason))
        predictions = predict_many(
            model, [project(a.histogram, model.feature_list) for a in prepared.test]
        )
        counts = ConfusionCounts.tally(
            (a.label for a in prepared.test), (p.label for p in predictions)
        )
        result = CellResult(
            config.group, model.kind, model.n_features, counts,
            n_train=len(prepared.train), n_test=len(prepared.test),
        )
    else:
        if config.kind is None:
            raise UsageError("evaluate needs --kind or --model.")
        result = evaluate_cell(
            config.group,
            config.kind,
            config.n,
            corpus,
            config.split_spec(),
            config.hyperparameters(),
            config.relative,
            config.include_test_in_selection,
            config.include_sensors,
        )
    report = EvaluationReport((result.group,), (result.kind,), (result.n,))
    report.add(result)
    files = ReportFormatter.lookup("records").render(report, config.header())
    name = "evaluate-%s-%s-%d.tsv" % (result.group.lower(), result.kind, result.n)
    atomic_write_text(config.out_dir / name, files["records.tsv"])
    if result.counts is None:
        logger.error("Cell was skipped: %s", result.skip_reason)
        return EXIT_DATA
    print("%s/%s/n=%d: accuracy %.2f%%" % (result.group, result.kind, result.n, result.counts.accuracy))
    return EXIT_OK


def _write_report(config: RunConfig, report: EvaluationReport, formats: Sequence[str]) -> None:
    for name in formats:
        formatter = ReportFormatter.lookup(name)
        for file_name, text in formatter.render(report, config.header()).items():
            atomic_write_text(config.out_dir / file_name, text)


def run_sweep(config: RunConfig) -> int:
    if config.synthetic_benchmark:
        corpus = synthetic_corpus(SyntheticSpec.benchmark(config.seed, config.apps_per_class))
    else:
        corpus = _load_corpus(config)
    with _map_function(config.workers) as map_fn:
        report = sweep(
            corpus,
            config.split_spec(),
            config.kinds,
            config.n_list,
            config.hyperparameters(),
            relative=config.relative,
            include_test_in_selection=config.include_test_in_selection,
            include_sensors=config.include_sensors,
            include_ungrouped=config.include_ungrouped,
            map_fn=map_fn,
        )
    _write_report(config, report, ("records", "tables", "plot"))
    overall = report.overall_best_average()
    if overall is None:
        logger.error("Every cell was skipped.")
        return EXIT_DATA
    print("Average of per-group best accuracies: %.2f%%" % overall)
    return EXIT_OK


def run_report(config: RunConfig) -> int:
    assert config.records is not None
    for name in config.formats:
        if name not in ReportFormatter.REGISTRY:
            raise UsageError(
                "Unknown report format %r. Try one of: %s"
                % (name, ", ".join(sorted(ReportFormatter.REGISTRY)))
            )
    with open(config.records, encoding="utf-8") as fh:
        report = read_records(fh)
    _write_report(config, report, config.formats)
    return EXIT_OK


def run_generate_synthetic(config: RunConfig) -> int:
    if config.preset == "benchmark":
        spec = SyntheticSpec.benchmark(config.seed, config.apps_per_class)
    else:
        spec = SyntheticSpec.field_shaped(config.scale, config.seed)
    if config.dispersion != spec.dispersion:
        spec = replace(spec, dispersion=config.dispersion)
    apps = generate_synthetic(spec)
    materialize(apps, config.out_dir, config.emit_dex, config.binary_manifest)
    lines = config.header() + [
        "planted %s: %s" % (group, ",".join("0x%02x" % op for op in planted))
        for group, planted in spec.planted_opcodes().items()
    ]
    atomic_write_text(
        config.out_dir / "synthetic.txt", "".join("# %s\n" % line for line in lines)
    )
    print("Wrote %d apps to %s." % (len(apps), config.out))
    return EXIT_OK


_COMMANDS = {
    "extract": run_extract,
    "group": run_group,
    "select": run_select,
    "train": run_train,
    "evaluate": run_evaluate,
    "sweep": run_sweep,
    "report": run_report,
    "generate-synthetic": run_generate_synthetic,
}


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv`` and run the subcommand.

    :return: The exit status.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    _configure_logging(args.verbose)
    try:
        config = _config_from(args)
        config = replace(config, group=_check_group(config.group))
        if config.kind is not None:
            _check_kinds([config.kind])
        if config.subcommand == "sweep":
            _check_kinds(config.kinds)
            _check_n(config.n_list)
        if config.n is not None:
            _check_n([config.n])
        return _COMMANDS[config.subcommand](config)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        sys.stderr.write("dexgroup: error: %s\n" % e)
        return EXIT_USAGE
    except (DexgroupError, OSError, ValueError) as e:
        sys.stderr.write("dexgroup: %s: %s\n" % (e.__class__.__name__, e))
        return EXIT_DATA


def main() -> None:
    sys.exit(run())
