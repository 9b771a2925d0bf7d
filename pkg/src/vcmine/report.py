"""Serialisation of records, totals and the analysis outputs.

CSV files use a pinned dialect (UTF-8, LF, header row, minimal quoting) and
print decimals with three fractional digits so reruns are byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
import os
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from . import analytics, store
from .analytics import JS, PY, UNKNOWN, MitigationRecord, ReactionStat
from .lang import ProjectLanguage
from .nvd import NvdCache

RECORDS_FILE = "records.ndjson"
TOTALS_FILE = "totals.csv"
CACHE_FILE = "nvd-cache.ndjson"
REPORT_FILES = ("year_stats.csv", "ratio.csv", "cwe_counts.csv",
                "reaction_by_year.csv", "reaction_by_cwe.csv", "overlap.json")

_REACTION_HEADER = ["n", "mean_days", "n_nonnegative", "mean_days_nonnegative"]


def fmt_decimal(x: float | None) -> str:
    if x is None:
        return ""
    s = f"{x:.3f}"
    return "0.000" if s == "-0.000" else s


def to_csv(header: list[str], rows: Iterable[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_text(path: str | os.PathLike, text: str) -> None:
    with store.atomic_open(path) as fp:
        fp.write(text)


# -- records and totals --------------------------------------------------------

def record_sort_key(rec: MitigationRecord):
    return (rec.date, rec.repo_id, rec.commit_id)


def write_records(path, records: Iterable[MitigationRecord]) -> int:
    return store.write_table(path, store.RECORDS,
                             (r.to_row() for r in sorted(records, key=record_sort_key)))


def read_records(path, cache: NvdCache) -> list[MitigationRecord]:
    return [MitigationRecord.from_row(row, cache) for row in store.read_table(path, store.RECORDS)]


def totals_csv(totals: Mapping[tuple[int, ProjectLanguage], int]) -> str:
    keys = sorted((k for k, n in totals.items() if n), key=lambda k: (k[0], analytics.lang_order(k[1])))
    return to_csv(["year", "language", "total_commits"],
                  ([y, lang.short, totals[(y, lang)]] for y, lang in keys))


def read_totals(path) -> Counter:
    totals: Counter = Counter()
    with open(path, encoding="utf-8", newline="") as fp:
        reader = csv.DictReader(fp)
        if reader.fieldnames != ["year", "language", "total_commits"]:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            totals[(int(row["year"]), ProjectLanguage.from_text(row["language"]))] += int(row["total_commits"])
    return totals


# -- analysis ------------------------------------------------------------------

@dataclass(frozen=True)
class AnalyzeOptions:
    threshold: int = 150
    include_both: bool = True
    include_unknown: bool = False
    years: tuple[int, int] | None = None

    def __post_init__(self):
        if self.threshold < 1:
            raise ValueError("threshold must be at least 1")

    @property
    def series(self) -> list[ProjectLanguage]:
        return [JS, PY, UNKNOWN] if self.include_unknown else [JS, PY]


def _in_years(year: int, years) -> bool:
    return years is None or years[0] <= year <= years[1]


def _reaction_rows(stats: list[ReactionStat], key_fmt) -> list[list]:
    return [[key_fmt(s.key), s.language.short, s.n, fmt_decimal(s.mean_days),
             s.n_nonnegative, fmt_decimal(s.mean_days_nonnegative)] for s in stats]


def analyze(records: Iterable[MitigationRecord], totals: Mapping, cache: NvdCache | None,
            opts: AnalyzeOptions = AnalyzeOptions()) -> dict[str, str]:
    """Compute every report and return ``{file name: content}``."""
    records = sorted((r for r in records if _in_years(r.year, opts.years)), key=record_sort_key)
    totals = {k: n for k, n in totals.items() if _in_years(k[0], opts.years)}
    both, unknown = opts.include_both, opts.include_unknown
    series = opts.series
    out = {}

    vuln, tot = analytics.year_counts(records, totals, both, unknown)
    years = sorted({y for (y, lang) in tot if lang in series} | {y for (y, lang) in vuln if lang in series})
    out["year_stats.csv"] = to_csv(
        ["year"] + [f"vuln_{l.short}" for l in series] + [f"total_{l.short}" for l in series],
        ([y] + [vuln.get((y, l), 0) for l in series] + [tot.get((y, l), 0) for l in series] for y in years))

    ratios = analytics.ratio_per_100k(vuln, tot)
    out["ratio.csv"] = to_csv(
        ["year", "language", "vuln_commits", "total_commits", "ratio_per_100k"],
        ([s.year, s.language.short, s.vuln_commits, s.total_commits, fmt_decimal(s.ratio_per_100k)]
         for s in ratios if s.language in series))

    dist, overlap = analytics.cwe_distribution(records, both, unknown)
    out["cwe_counts.csv"] = to_csv(
        ["cwe"] + [f"count_{l.short}" for l in series],
        ([str(s.cwe)] + [s.count(l) for l in series] for s in dist))

    out["reaction_by_year.csv"] = to_csv(
        ["year", "language"] + _REACTION_HEADER,
        _reaction_rows(analytics.reaction_by_year(records, cache, both, unknown), str))

    top = analytics.top_cwes(dist, opts.threshold)
    out["reaction_by_cwe.csv"] = to_csv(
        ["cwe", "language"] + _REACTION_HEADER,
        _reaction_rows(analytics.reaction_by_cwe(records, cache, top, both, unknown), str))

    a, b = overlap.a.short, overlap.b.short
    sets = {"shared": overlap.shared, f"only_{a}": overlap.only_a, f"only_{b}": overlap.only_b}
    doc = {
        "languages": [a, b],
        "threshold": opts.threshold,
        "top_cwes": [str(c) for c in sorted(top)],
        **{k: [str(c) for c in sorted(v)] for k, v in sets.items()},
        "sizes": {k: len(v) for k, v in sets.items()},
    }
    out["overlap.json"] = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    return out


def write_reports(out_dir: str | os.PathLike, reports: Mapping[str, str]) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []
    for name in REPORT_FILES:
        write_text(out_dir / name, reports[name])
        paths.append(out_dir / name)
    return paths
