"""Render an `EvaluationReport` to text.

Renderers are kept in `ReportFormatter.REGISTRY` under the names
``records``, ``tables`` and ``plot``. Each one turns a report into one
or more named text files.
"""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

from typing import (
    Dict,
    IO,
    List,
    Optional,
    Sequence,
)

from dexgroup.corpus import UNGROUPED
from dexgroup.evaluation import (
    CellResult,
    ConfusionCounts,
    EvaluationReport,
)
from dexgroup.exceptions import CorruptArtifact

__all__ = [
    "ReportFormatter",
    "RecordsFormatter",
    "TablesFormatter",
    "PlotFormatter",
    "read_records",
    "RECORDS_FORMAT_VERSION",
]

RECORDS_FORMAT_VERSION = 1
_RECORDS_LINE = "# dexgroup-records %d" % RECORDS_FORMAT_VERSION

#: Columns of a records file, in order.
RECORD_COLUMNS = (
    "group", "kind", "n", "status", "tp", "tn", "fp", "fn",
    "accuracy", "tp_rate", "tn_rate", "n_train", "n_test", "reason",
)


def _header_lines(header: Sequence[str]) -> List[str]:
    return ["# %s" % line for line in header]


def _percent(value: Optional[float]) -> str:
    return "-" if value is None else "%.2f" % value


class ReportFormatter(object):
    """Turns a report into named text files.

    Formatters are looked up by name in `REGISTRY`:

     * 'records' - One tab-separated line per cell, readable with
                   `read_records`.
     * 'tables' - Average accuracy per classifier and feature count,
                  and each group's best cell.
     * 'plot' - One file per group of accuracy-against-feature-count
                data, with a gnuplot index block per classifier.
    """

    REGISTRY: Dict[str, ReportFormatter] = {}

    #: The name this formatter is registered under.
    name: str = "[unknown]"

    def render(self, report: EvaluationReport, header: Sequence[str] = ()) -> Dict[str, str]:
        """:return: File name -> file contents."""
        raise NotImplementedError()

    @classmethod
    def lookup(cls, name: str) -> ReportFormatter:
        try:
            return cls.REGISTRY[name]
        except KeyError:
            raise ValueError(
                "No report format called %r. Try one of: %s"
                % (name, ", ".join(sorted(cls.REGISTRY)))
            )


class RecordsFormatter(ReportFormatter):
    """One line per cell. Skipped cells keep their place, with ``-``
    for every number and the reason in the last column.
    """

    name = "records"
    file_name = "records.tsv"

    def format_cell(self, result: CellResult) -> str:
        counts = result.counts
        if counts is None:
            fields = [result.group, result.kind, str(result.n), "skipped"]
            fields += ["-"] * 7
            fields += [str(result.n_train), str(result.n_test)]
            fields.append((result.skip_reason or "").replace("\t", " ").replace("\n", " "))
        else:
            fields = [result.group, result.kind, str(result.n), "ok"]
            fields += [str(c) for c in counts]
            fields += [
                "%.4f" % counts.accuracy,
                "%.4f" % counts.tp_rate,
                "%.4f" % counts.tn_rate,
                str(result.n_train),
                str(result.n_test),
                "",
            ]
        return "\t".join(fields)

    def render(self, report: EvaluationReport, header: Sequence[str] = ()) -> Dict[str, str]:
        lines = [_RECORDS_LINE] + _header_lines(header)
        lines.append("\t".join(RECORD_COLUMNS))
        lines.extend(self.format_cell(r) for r in report.ordered_cells())
        return {self.file_name: "\n".join(lines) + "\n"}


class TablesFormatter(ReportFormatter):
    """Human-readable summary tables."""

    name = "tables"
    file_name = "tables.txt"

    def average_table(self, report: EvaluationReport) -> List[str]:
        width = max([8] + [len(k) for k in report.kinds])
        lines = ["Average accuracy (%) over " + ", ".join(report.groups)]
        lines.append("%-8s" % "Features" + "".join(" %*s" % (width, k) for k in report.kinds))
        for n in report.n_list:
            row = "%-8d" % n
            for kind in report.kinds:
                row += " %*s" % (width, _percent(report.average_accuracy(kind, n)))
            lines.append(row)
        for label, extreme in (("Maximum", report.maximum_average), ("Minimum", report.minimum_average)):
            row = "%-8s" % label
            for kind in report.kinds:
                found = extreme(kind)
                row += " %*s" % (width, "-" if found is None else _percent(found[1]))
            lines.append(row)
        return lines

    def best_table(self, report: EvaluationReport) -> List[str]:
        bests = report.best_per_group()
        lines = ["Best cell per group"]
        lines.append(
            "%-12s %-10s %8s %8s %6s %6s"
            % ("Group", "Classifier", "Accuracy", "Features", "TN", "TP")
        )
        for group in report.all_groups:
            best = bests.get(group)
            if best is None:
                lines.append("%-12s %-10s %8s %8s %6s %6s" % (group, "-", "-", "-", "-", "-"))
                continue
            lines.append(
                "%-12s %-10s %8.2f %8d %6.2f %6.2f"
                % (group, best.kind, best.accuracy, best.n, best.tn_rate, best.tp_rate)
            )
        lines.append("%-12s %-10s %8s" % ("Average", "", _percent(report.overall_best_average())))
        return lines

    def render(self, report: EvaluationReport, header: Sequence[str] = ()) -> Dict[str, str]:
        lines = _header_lines(header)
        if lines:
            lines.append("")
        lines += self.average_table(report)
        lines.append("")
        lines += self.best_table(report)
        skipped = report.skipped_cells()
        if skipped:
            lines.append("")
            lines.append("%d cells were skipped; see %s." % (len(skipped), RecordsFormatter.file_name))
        return {self.file_name: "\n".join(lines) + "\n"}


class PlotFormatter(ReportFormatter):
    """Accuracy against feature count, one file per group.

    Blocks are separated by two blank lines, so gnuplot's ``index``
    picks out one classifier's curve. Skipped cells are left out of
    their block.
    """

    name = "plot"

    @staticmethod
    def file_name(group: str) -> str:
        return "plot-%s.dat" % group.lower()

    def render(self, report: EvaluationReport, header: Sequence[str] = ()) -> Dict[str, str]:
        files = {}
        for group in report.all_groups:
            lines = _header_lines(header)
            lines.append("# group: %s" % group)
            blocks = []
            for index, kind in enumerate(report.kinds):
                block = ["# index %d: %s" % (index, kind), "# features accuracy"]
                for n in report.n_list:
                    result = report.cells.get((group, kind, n))
                    if result is None or result.accuracy is None:
                        continue
                    block.append("%d %.4f" % (n, result.accuracy))
                blocks.append("\n".join(block))
            files[self.file_name(group)] = "\n".join(lines) + "\n" + "\n\n\n".join(blocks) + "\n"
        return files


ReportFormatter.REGISTRY["records"] = RecordsFormatter()
ReportFormatter.REGISTRY["tables"] = TablesFormatter()
ReportFormatter.REGISTRY["plot"] = PlotFormatter()


def read_records(fh: IO[str]) -> EvaluationReport:
    """Rebuild a report from a records file, so tables and plots can be
    regenerated without running the sweep again.

    Accuracies and rates are recomputed from the confusion counts.

    :raise CorruptArtifact: If the file isn't a records file or a line
        is damaged.
    """
    lines = [line.rstrip("\n") for line in fh]
    if not lines or lines[0] != _RECORDS_LINE:
        raise CorruptArtifact("Not a version %d records file." % RECORDS_FORMAT_VERSION)
    groups: List[str] = []
    kinds: List[str] = []
    n_list: List[int] = []
    results = []
    for line in lines[1:]:
        if not line or line.startswith("#") or line.startswith("group\t"):
            continue
        fields = line.split("\t")
        if len(fields) != len(RECORD_COLUMNS):
            raise CorruptArtifact("Bad record line: %r" % line)
        group, kind, n_text, status = fields[:4]
        try:
            n = int(n_text)
            n_train, n_test = int(fields[11]), int(fields[12])
            if status == "ok":
                counts: Optional[ConfusionCounts] = ConfusionCounts(*(int(f) for f in fields[4:8]))
                reason = None
            elif status == "skipped":
                counts = None
                reason = fields[13]
            else:
                raise ValueError("unknown status %r" % status)
        except ValueError as e:
            raise CorruptArtifact("Bad record line %r: %s" % (line, e))
        if group != UNGROUPED and group not in groups:
            groups.append(group)
        if kind not in kinds:
            kinds.append(kind)
        if n not in n_list:
            n_list.append(n)
        results.append(CellResult(group, kind, n, counts, reason, n_train, n_test))
    report = EvaluationReport(
        tuple(groups),
        tuple(kinds),
        tuple(n_list),
        ungrouped=any(r.group == UNGROUPED for r in results),
    )
    for result in results:
        report.add(result)
    return report
