"""Per-group train/test experiments.

A sweep evaluates every (group, classifier kind, feature count) cell.
Each group's apps are split into training and test portions once;
opcodes are ranked on the training portion; then each cell takes the
top ``n`` opcodes, trains one classifier and scores it on the test
portion.

All randomness comes from `SplitSpec.seed` mixed with CRC-32 checksums
of the group and classifier names, so results don't depend on which
process ran a cell or in what order.
"""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

import logging
import math
import warnings
import zlib
from dataclasses import dataclass, field
from typing import (
    Dict,
    Iterable,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
    TypeVar,
)

import numpy as np

from dexgroup._typing import _MapFunction
from dexgroup._warnings import SkippedCellWarning
from dexgroup.classifier import (
    Hyperparameters,
    Label,
    classifier_registry,
    derive_seed,
    predict_many,
    project,
    train,
)
from dexgroup.corpus import (
    ExtractedApp,
    ExtractedCorpus,
    UNGROUPED,
)
from dexgroup.exceptions import (
    ClassifierError,
    NOutOfRange,
    SelectionError,
    TooSmallForSplit,
    UnknownClassifier,
)
from dexgroup.grouping import active_groups
from dexgroup.opcodes import OPCODE_COUNT
from dexgroup.selection import (
    FeatureRanking,
    compute_profile,
    rank_features,
    top_n,
)

__all__ = [
    "CellResult",
    "ConfusionCounts",
    "EvaluationReport",
    "GroupBest",
    "PreparedGroup",
    "SplitSpec",
    "evaluate_cell",
    "prepare_group",
    "split",
    "sweep",
    "DEFAULT_KINDS",
    "DEFAULT_N_LIST",
    "DEFAULT_TEST_FRACTION",
    "UNGROUPED",
]

logger = logging.getLogger(__name__)

DEFAULT_TEST_FRACTION: float = 0.2
DEFAULT_N_LIST: Tuple[int, ...] = tuple(range(20, 201, 20))
DEFAULT_KINDS: Tuple[str, ...] = ("tree", "forest", "nb-tree")

_T = TypeVar("_T", bound=ExtractedApp)


def name_salt(name: str) -> int:
    """A stable integer for a group or classifier name."""
    return zlib.crc32(name.encode("utf-8")) & 0xFFFFFFFF


@dataclass(frozen=True)
class SplitSpec:
    """How to divide a bucket into training and test apps.

    :ivar test_fraction: Share of each label's apps that go to the test
        portion.
    :ivar stratified: Split each label separately, so both portions
        keep the bucket's class balance.
    """

    test_fraction: float = DEFAULT_TEST_FRACTION
    seed: int = 0
    stratified: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError(
                "test_fraction must be between 0 and 1, not %r." % self.test_fraction
            )
        if self.seed < 0:
            raise ValueError("Split seeds must be non-negative.")

    def test_size(self, n: int) -> int:
        """How many of ``n`` apps go to the test portion."""
        # The epsilon keeps 0.2 * 70 from landing on 13.999...
        k = math.floor(n * self.test_fraction + 1e-9)
        return min(max(k, 1), n - 1)


def _choose(n: int, k: int, seed: int) -> List[int]:
    rng = np.random.default_rng(seed)
    return sorted(int(i) for i in rng.choice(n, size=k, replace=False))


def split(
    bucket: Sequence[_T], spec: SplitSpec, salt: int = 0
) -> Tuple[List[_T], List[_T]]:
    """Divide a bucket of labelled apps into (train, test).

    Both portions list apps in bucket order. The same bucket, spec and
    salt always give the same split.

    :param salt: Mixed into the seed, so each group gets its own split.
    :raise TooSmallForSplit: If a label (or, unstratified, the whole
        bucket) has fewer than two apps.
    """
    test_positions = set()
    if spec.stratified:
        for label in Label:
            positions = [i for i, app in enumerate(bucket) if app.label is label]
            if len(positions) < 2:
                raise TooSmallForSplit(
                    "Need at least 2 %s apps to split, have %d." % (label, len(positions)),
                    size=len(positions),
                )
            chosen = _choose(
                len(positions),
                spec.test_size(len(positions)),
                derive_seed(spec.seed, salt, label.value),
            )
            test_positions.update(positions[i] for i in chosen)
    else:
        if len(bucket) < 2:
            raise TooSmallForSplit(
                "Need at least 2 apps to split, have %d." % len(bucket), size=len(bucket)
            )
        test_positions.update(
            _choose(len(bucket), spec.test_size(len(bucket)), derive_seed(spec.seed, salt))
        )
    train_part = [app for i, app in enumerate(bucket) if i not in test_positions]
    test_part = [app for i, app in enumerate(bucket) if i in test_positions]
    return train_part, test_part


class ConfusionCounts(NamedTuple):
    """Test outcomes, with malicious as the positive class."""

    tp: int
    tn: int
    fp: int
    fn: int

    @classmethod
    def tally(cls, actual: Iterable[Label], predicted: Iterable[Label]) -> ConfusionCounts:
        tp = tn = fp = fn = 0
        for truth, guess in zip(actual, predicted):
            if truth is Label.MALICIOUS:
                if guess is Label.MALICIOUS:
                    tp += 1
                else:
                    fn += 1
            elif guess is Label.MALICIOUS:
                fp += 1
            else:
                tn += 1
        return cls(tp, tn, fp, fn)

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def accuracy(self) -> float:
        """Percentage of test apps classified correctly."""
        if self.total == 0:
            return 0.0
        return (self.tp + self.tn) / self.total * 100

    @property
    def tp_rate(self) -> float:
        positives = self.tp + self.fn
        return self.tp / positives if positives else 0.0

    @property
    def tn_rate(self) -> float:
        negatives = self.tn + self.fp
        return self.tn / negatives if negatives else 0.0


class CellResult(NamedTuple):
    """The outcome of one (group, kind, n) cell. A skipped cell has no
    counts and says why in ``skip_reason``.
    """

    group: str
    kind: str
    n: int
    counts: Optional[ConfusionCounts] = None
    skip_reason: Optional[str] = None
    n_train: int = 0
    n_test: int = 0

    @property
    def skipped(self) -> bool:
        return self.counts is None

    @property
    def accuracy(self) -> Optional[float]:
        return None if self.counts is None else self.counts.accuracy

    @property
    def tp_rate(self) -> Optional[float]:
        return None if self.counts is None else self.counts.tp_rate

    @property
    def tn_rate(self) -> Optional[float]:
        return None if self.counts is None else self.counts.tn_rate


class PreparedGroup(NamedTuple):
    """A group's split and the ranking computed from it, shared by all
    of the group's cells.
    """

    group: str
    train: List[ExtractedApp]
    test: List[ExtractedApp]
    ranking: Optional[FeatureRanking] = None
    skip_reason: Optional[str] = None


def prepare_group(
    group: str,
    bucket: Sequence[ExtractedApp],
    spec: SplitSpec,
    relative: bool = False,
    include_test_in_selection: bool = False,
) -> PreparedGroup:
    """Split a group's bucket and rank its opcodes.

    Ranking uses only the training portion unless
    ``include_test_in_selection`` is set. Problems that make the group
    unusable are recorded in ``skip_reason`` rather than raised.
    """
    try:
        train_part, test_part = split(bucket, spec, name_salt(group))
    except TooSmallForSplit as e:
        return PreparedGroup(group, [], [], skip_reason="TooSmallForSplit: %s" % e)
    selection_apps = list(train_part)
    if include_test_in_selection:
        selection_apps = list(bucket)
    try:
        profile = compute_profile(
            [a.histogram for a in selection_apps if a.label is Label.BENIGN],
            [a.histogram for a in selection_apps if a.label is Label.MALICIOUS],
            relative,
        )
    except SelectionError as e:
        return PreparedGroup(
            group, train_part, test_part, skip_reason="%s: %s" % (e.__class__.__name__, e)
        )
    return PreparedGroup(group, train_part, test_part, rank_features(profile))


def cell_seed(seed: int, group: str, kind: str, n: int) -> int:
    """The training seed for one cell."""
    return derive_seed(seed, name_salt(group), name_salt(kind), n)


def _run_prepared(
    prepared: PreparedGroup,
    kind: str,
    n: int,
    seed: int,
    hyper: Optional[Hyperparameters],
) -> CellResult:
    group = prepared.group
    if prepared.ranking is None:
        return CellResult(group, kind, n, skip_reason=prepared.skip_reason)
    features = top_n(prepared.ranking, n)
    training = [project(a.histogram, features, a.label) for a in prepared.train]
    try:
        model = train(kind, training, hyper, cell_seed(seed, group, kind, n), features)
    except ClassifierError as e:
        if isinstance(e, UnknownClassifier):
            raise
        return CellResult(
            group, kind, n,
            skip_reason="%s: %s" % (e.__class__.__name__, e),
            n_train=len(prepared.train), n_test=len(prepared.test),
        )
    test_vectors = [project(a.histogram, features) for a in prepared.test]
    predictions = predict_many(model, test_vectors)
    counts = ConfusionCounts.tally(
        (a.label for a in prepared.test), (p.label for p in predictions)
    )
    return CellResult(
        group, kind, n, counts, n_train=len(prepared.train), n_test=len(prepared.test)
    )


def evaluate_cell(
    group: str,
    kind: str,
    n: int,
    corpus: ExtractedCorpus,
    spec: SplitSpec,
    hyper: Optional[Hyperparameters] = None,
    relative: bool = False,
    include_test_in_selection: bool = False,
    include_sensors: bool = False,
    prepared: Optional[PreparedGroup] = None,
) -> CellResult:
    """Select, train and test one cell.

    :param group: A group name, or `UNGROUPED` for the whole corpus.
    :param prepared: A `PreparedGroup` to reuse; by default the group
        is split and ranked from scratch.
    :return: A result with confusion counts, or a skipped result that
        records why the cell couldn't be evaluated.
    :raise NOutOfRange: Unless 1 <= n <= 256.
    :raise UnknownClassifier: If ``kind`` isn't registered.
    """
    if prepared is None:
        prepared = prepare_group(
            group,
            corpus.bucket(group, include_sensors),
            spec,
            relative,
            include_test_in_selection,
        )
    return _run_prepared(prepared, kind, n, spec.seed, hyper)


class _CellJob(NamedTuple):
    prepared: PreparedGroup
    kind: str
    n: int
    seed: int
    hyper: Optional[Hyperparameters]


def _run_job(job: _CellJob) -> CellResult:
    return _run_prepared(job.prepared, job.kind, job.n, job.seed, job.hyper)


class GroupBest(NamedTuple):
    """A group's best cell, in the shape of a group-wise maximum table."""

    group: str
    kind: str
    accuracy: float
    n: int
    tn_rate: float
    tp_rate: float


@dataclass
class EvaluationReport:
    """Every cell of a sweep, and the summaries computed from them.

    :ivar groups: The permission groups, in reporting order. The
        ungrouped baseline is not among them.
    :ivar ungrouped: True if `UNGROUPED` cells were evaluated too.
    """

    groups: Tuple[str, ...]
    kinds: Tuple[str, ...]
    n_list: Tuple[int, ...]
    cells: Dict[Tuple[str, str, int], CellResult] = field(default_factory=dict)
    ungrouped: bool = False

    def add(self, result: CellResult) -> None:
        self.cells[(result.group, result.kind, result.n)] = result

    def cell(self, group: str, kind: str, n: int) -> CellResult:
        return self.cells[(group, kind, n)]

    @property
    def all_groups(self) -> Tuple[str, ...]:
        """The groups, plus `UNGROUPED` if it was evaluated."""
        if self.ungrouped:
            return self.groups + (UNGROUPED,)
        return self.groups

    def ordered_cells(self) -> List[CellResult]:
        """Cells in group, kind, n order."""
        return [
            self.cells[key]
            for key in (
                (g, k, n) for g in self.all_groups for k in self.kinds for n in self.n_list
            )
            if key in self.cells
        ]

    def skipped_cells(self) -> List[CellResult]:
        return [c for c in self.ordered_cells() if c.skipped]

    def average_accuracy(self, kind: str, n: int) -> Optional[float]:
        """Mean accuracy of one (kind, n) column across the groups,
        each group weighted equally. Skipped cells and the ungrouped
        baseline don't take part. None if every cell was skipped.
        """
        values = []
        for group in self.groups:
            result = self.cells.get((group, kind, n))
            if result is not None and result.accuracy is not None:
                values.append(result.accuracy)
        if not values:
            return None
        return math.fsum(values) / len(values)

    def average_table(self) -> Dict[str, Dict[int, Optional[float]]]:
        return {
            kind: {n: self.average_accuracy(kind, n) for n in self.n_list}
            for kind in self.kinds
        }

    def _extreme_average(self, kind: str, pick: str) -> Optional[Tuple[int, float]]:
        best: Optional[Tuple[int, float]] = None
        for n in self.n_list:
            value = self.average_accuracy(kind, n)
            if value is None:
                continue
            if (
                best is None
                or (pick == "max" and value > best[1])
                or (pick == "min" and value < best[1])
            ):
                best = (n, value)
        return best

    def maximum_average(self, kind: str) -> Optional[Tuple[int, float]]:
        """The feature count with the highest average for ``kind``,
        and that average. The smaller count wins a tie.
        """
        return self._extreme_average(kind, "max")

    def minimum_average(self, kind: str) -> Optional[Tuple[int, float]]:
        return self._extreme_average(kind, "min")

    def best_of_group(self, group: str) -> Optional[GroupBest]:
        """The group's most accurate cell. Ties go to the kind listed
        first, then to the smaller feature count.
        """
        best: Optional[CellResult] = None
        for kind in self.kinds:
            for n in self.n_list:
                result = self.cells.get((group, kind, n))
                if result is None or result.counts is None:
                    continue
                if best is None or result.counts.accuracy > best.counts.accuracy:  # type:ignore
                    best = result
        if best is None or best.counts is None:
            return None
        return GroupBest(
            group, best.kind, best.counts.accuracy, best.n,
            best.counts.tn_rate, best.counts.tp_rate,
        )

    def best_per_group(self) -> Dict[str, GroupBest]:
        """Each group's best cell, including the ungrouped baseline if
        it was evaluated. Groups whose cells were all skipped are left
        out.
        """
        bests = {}
        for group in self.all_groups:
            best = self.best_of_group(group)
            if best is not None:
                bests[group] = best
        return bests

    def overall_best_average(self) -> Optional[float]:
        """Mean of the per-group best accuracies, leaving out the
        ungrouped baseline.
        """
        values = [
            best.accuracy
            for group, best in self.best_per_group().items()
            if group != UNGROUPED
        ]
        if not values:
            return None
        return math.fsum(values) / len(values)


def _check_plan(kinds: Sequence[str], n_list: Sequence[int]) -> None:
    if not kinds:
        raise ValueError("No classifier kinds to evaluate.")
    if not n_list:
        raise ValueError("No feature counts to evaluate.")
    for kind in kinds:
        if classifier_registry.lookup(kind) is None:
            raise UnknownClassifier(
                "No classifier called %r. Try one of: %s"
                % (kind, ", ".join(classifier_registry.names()))
            )
    for n in n_list:
        if not 1 <= n <= OPCODE_COUNT:
            raise NOutOfRange("n must be between 1 and %d, not %r." % (OPCODE_COUNT, n))


def sweep(
    corpus: ExtractedCorpus,
    spec: Optional[SplitSpec] = None,
    kinds: Sequence[str] = DEFAULT_KINDS,
    n_list: Sequence[int] = DEFAULT_N_LIST,
    hyper: Optional[Hyperparameters] = None,
    relative: bool = False,
    include_test_in_selection: bool = False,
    include_sensors: bool = False,
    include_ungrouped: bool = False,
    map_fn: _MapFunction = map,
) -> EvaluationReport:
    """Evaluate every (group, kind, n) cell.

    Every cell appears in the report; cells that can't be evaluated
    are recorded as skipped, with a `SkippedCellWarning`.

    :param include_ungrouped: Also evaluate the whole corpus as one
        `UNGROUPED` bucket. It's reported next to the groups but never
        counts toward averages.
    :param map_fn: How to run the cells; see `dexgroup.corpus.ingest`.
    :raise UnknownClassifier: If a kind isn't registered.
    :raise NOutOfRange: If a feature count is outside 1..256.
    """
    if spec is None:
        spec = SplitSpec()
    kinds = tuple(kinds)
    n_list = tuple(n_list)
    _check_plan(kinds, n_list)

    partition = corpus.partition(include_sensors)
    groups = tuple(str(g) for g in active_groups(include_sensors))
    buckets: List[Tuple[str, Sequence[ExtractedApp]]] = [
        (str(g), partition[g]) for g in active_groups(include_sensors)
    ]
    if include_ungrouped:
        buckets.append((UNGROUPED, corpus.apps))

    jobs = []
    for group, bucket in buckets:
        prepared = prepare_group(group, bucket, spec, relative, include_test_in_selection)
        if prepared.skip_reason is not None:
            logger.info("Group %s can't be evaluated: %s", group, prepared.skip_reason)
        else:
            logger.info(
                "Group %s: %d training and %d test apps.",
                group, len(prepared.train), len(prepared.test),
            )
        for kind in kinds:
            for n in n_list:
                jobs.append(_CellJob(prepared, kind, n, spec.seed, hyper))

    report = EvaluationReport(groups, kinds, n_list, ungrouped=include_ungrouped)
    for result in map_fn(_run_job, jobs):
        report.add(result)
        if result.skipped:
            warnings.warn(
                SkippedCellWarning.MESSAGE
                % dict(group=result.group, kind=result.kind, n=result.n, reason=result.skip_reason),
                SkippedCellWarning,
                stacklevel=2,
            )
        else:
            logger.debug(
                "%s/%s/n=%d: %.2f%%", result.group, result.kind, result.n, result.accuracy
            )
    return report
