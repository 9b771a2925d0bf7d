"""Mitigation records and the statistics computed over them.

A mitigation record is one commit whose message names at least one CVE or
CWE. Everything downstream (per-year ratios, CWE distributions, reaction
times) is computed from records plus per-(year, language) commit totals, and
never depends on the order records arrive in.
"""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Iterable, Mapping

from . import store
from .ingest import CommitRecord
from .lang import ProjectLanguage, classify, series_for
from .nvd import CveEntry, NvdCache, ResolvedRefs, resolve_refs
from .refs import CveId, CweId, VulnRefSet, classify_message

JS = ProjectLanguage.JAVASCRIPT
PY = ProjectLanguage.PYTHON
UNKNOWN = ProjectLanguage.UNKNOWN

_DAY = timedelta(days=1)

YearLang = tuple[int, ProjectLanguage]


@dataclass(frozen=True)
class MitigationRecord:
    commit_id: str
    repo_id: str
    language: ProjectLanguage
    date: datetime
    resolved: ResolvedRefs

    def __post_init__(self):
        r = self.resolved
        if not (r.cwes or r.unresolved_cves or r.resolved_cves):
            raise ValueError(f"{self.commit_id}: record without any reference")

    @property
    def year(self) -> int:
        return self.date.astimezone(timezone.utc).year

    @property
    def key(self) -> tuple[str, str]:
        return (self.repo_id, self.commit_id)

    def to_row(self) -> dict:
        r = self.resolved
        return {
            "repo": self.repo_id,
            "commit": self.commit_id,
            "language": self.language.value,
            "date": store.format_utc(self.date),
            "cves": [str(c) for c in r.cves],
            "direct_cwes": sorted(c.number for c in r.direct_cwes),
            "cwes": sorted(c.number for c in r.cwes),
            "unresolved": [str(c) for c in r.unresolved_cves],
        }

    @classmethod
    def from_row(cls, row: dict, cache: NvdCache) -> "MitigationRecord":
        """Rebuild a record, re-resolving its CVEs against ``cache``."""
        refs = VulnRefSet(frozenset(CveId.parse(c) for c in row["cves"]),
                          frozenset(CweId(n) for n in row["direct_cwes"]))
        return cls(row["commit"], row["repo"], ProjectLanguage(row["language"]),
                   store.parse_utc(row["date"]), resolve_refs(refs, cache))


class RecordBuilder:
    """Single reducer turning commits into records while counting totals."""

    def __init__(self, cache: NvdCache, date_field: str = "committer"):
        self.cache = cache
        self.date_field = date_field
        self.totals: Counter[YearLang] = Counter()
        self.false_positives = 0
        self.commits = 0

    def add(self, commit: CommitRecord) -> MitigationRecord | None:
        date = commit.date(self.date_field)
        language = classify(commit.root_entries)
        self.commits += 1
        self.totals[(date.astimezone(timezone.utc).year, language)] += 1
        report = classify_message(commit.message)
        if report.false_positive:
            self.false_positives += 1
        if not report.refs:
            return None
        return MitigationRecord(commit.commit_id, commit.repo_id, language, date,
                                resolve_refs(report.refs, self.cache))


@dataclass
class BuildResult:
    records: list[MitigationRecord]
    totals: Counter
    false_positives: int = 0
    commits: int = 0


def build_records(commits: Iterable[CommitRecord], cache: NvdCache,
                  date_field: str = "committer") -> BuildResult:
    builder = RecordBuilder(cache, date_field)
    records = [r for r in map(builder.add, commits) if r is not None]
    return BuildResult(records, builder.totals, builder.false_positives, builder.commits)


# -- per-year ratio ----------------------------------------------------------

@dataclass(frozen=True)
class YearLangStat:
    year: int
    language: ProjectLanguage
    vuln_commits: int
    total_commits: int
    ratio_per_100k: float | None


def ratio(vuln: int, total: int) -> float | None:
    return 100000 * vuln / total if total > 0 else None


def year_counts(records: Iterable[MitigationRecord], totals: Mapping[YearLang, int],
                include_both: bool = True, include_unknown: bool = False,
                ) -> tuple[Counter, Counter]:
    """Fold raw per-classification counts into per-series (vuln, total) counts.

    Revisions classified ``Both`` count towards JavaScript and Python.
    """
    vuln: Counter[YearLang] = Counter()
    for rec in records:
        for lang in series_for(rec.language, include_both, include_unknown):
            vuln[(rec.year, lang)] += 1
    tot: Counter[YearLang] = Counter()
    for (year, raw_lang), n in totals.items():
        for lang in series_for(raw_lang, include_both, include_unknown):
            tot[(year, lang)] += n
    return vuln, tot


def ratio_per_100k(vuln: Mapping[YearLang, int], totals: Mapping[YearLang, int]) -> list[YearLangStat]:
    """Mitigation commits per 100k commits for every (year, language) with commits."""
    out = []
    for key in sorted(totals, key=_yl_order):
        total = totals[key]
        if total <= 0:
            continue
        v = vuln.get(key, 0)
        out.append(YearLangStat(key[0], key[1], v, total, ratio(v, total)))
    return out


_LANG_ORDER = {JS: 0, PY: 1, ProjectLanguage.BOTH: 2, UNKNOWN: 3}


def lang_order(lang: ProjectLanguage) -> int:
    return _LANG_ORDER[lang]


def _yl_order(key: YearLang):
    return (key[0], lang_order(key[1]))


# -- CWE distribution --------------------------------------------------------

@dataclass(frozen=True)
class CweStat:
    cwe: CweId
    count_per_language: dict[ProjectLanguage, int]

    def count(self, lang: ProjectLanguage) -> int:
        return self.count_per_language.get(lang, 0)


@dataclass(frozen=True)
class Overlap:
    a: ProjectLanguage
    b: ProjectLanguage
    shared: frozenset[CweId] = frozenset()
    only_a: frozenset[CweId] = frozenset()
    only_b: frozenset[CweId] = frozenset()


def cwe_distribution(records: Iterable[MitigationRecord], include_both: bool = True,
                     include_unknown: bool = False, a: ProjectLanguage = JS,
                     b: ProjectLanguage = PY) -> tuple[list[CweStat], Overlap]:
    """Count (commit, CWE) pairs per language, and the per-language CWE overlap.

    A commit contributes at most once to each CWE, however many of its CVEs
    map there.
    """
    counts: dict[CweId, Counter] = defaultdict(Counter)
    seen: set[tuple] = set()
    for rec in records:
        for cwe in rec.resolved.cwes:
            if (rec.key, cwe) in seen:
                continue
            seen.add((rec.key, cwe))
            for lang in series_for(rec.language, include_both, include_unknown):
                counts[cwe][lang] += 1
    stats = [CweStat(c, dict(counts[c])) for c in sorted(counts)]
    in_a = {s.cwe for s in stats if s.count(a) >= 1}
    in_b = {s.cwe for s in stats if s.count(b) >= 1}
    overlap = Overlap(a, b, frozenset(in_a & in_b), frozenset(in_a - in_b), frozenset(in_b - in_a))
    return stats, overlap


def top_cwes(distribution: Iterable[CweStat], threshold: int = 150) -> set[CweId]:
    """CWEs referenced at least ``threshold`` times in at least one language."""
    return {s.cwe for s in distribution
            if threshold <= 0 or any(n >= threshold for n in s.count_per_language.values())}


# -- reaction times ----------------------------------------------------------

@dataclass(frozen=True)
class ReactionStat:
    key: int | CweId
    language: ProjectLanguage
    mean_days: float
    n: int
    mean_days_nonnegative: float | None
    n_nonnegative: int = 0


def reaction_days(record: MitigationRecord | datetime, entry: CveEntry | datetime) -> int:
    """Whole days from publication to the commit, floored (negative if earlier)."""
    commit_date = record.date if isinstance(record, MitigationRecord) else record
    published = entry.publish_date if isinstance(entry, CveEntry) else entry
    return (commit_date - published) // _DAY


@dataclass(frozen=True)
class ReactionPair:
    record: MitigationRecord
    cve: CveId
    entry: CveEntry
    days: int


def reaction_pairs(records: Iterable[MitigationRecord], cache: NvdCache | None = None) -> list[ReactionPair]:
    """One pair per (commit, resolved CVE).

    With a cache, CVEs are looked up there; otherwise the entries stored on
    each record are used.
    """
    pairs = []
    for rec in records:
        if cache is None:
            resolved = list(rec.resolved.resolved_cves)
        else:
            cves = [c for c, _ in rec.resolved.resolved_cves] + list(rec.resolved.unresolved_cves)
            resolved = [(c, e) for c in cves if (e := cache.lookup(c)) is not None]
        for cve, entry in resolved:
            pairs.append(ReactionPair(rec, cve, entry, reaction_days(rec, entry)))
    return pairs


def _mean(values: list[int]) -> float | None:
    return math.fsum(values) / len(values) if values else None


def _summarise(groups: Mapping[tuple, list[int]]) -> list[ReactionStat]:
    out = []
    for (key, lang), days in groups.items():
        if not days:
            continue
        nonneg = [d for d in days if d >= 0]
        out.append(ReactionStat(key, lang, _mean(days), len(days), _mean(nonneg), len(nonneg)))
    out.sort(key=lambda s: (s.key, lang_order(s.language)))
    return out


def reaction_by_year(records: Iterable[MitigationRecord], cache: NvdCache | None = None,
                     include_both: bool = True, include_unknown: bool = False) -> list[ReactionStat]:
    groups: dict[tuple, list[int]] = defaultdict(list)
    for p in reaction_pairs(records, cache):
        for lang in series_for(p.record.language, include_both, include_unknown):
            groups[(p.record.year, lang)].append(p.days)
    return _summarise(groups)


def reaction_by_cwe(records: Iterable[MitigationRecord], cache: NvdCache | None = None,
                    cwes: Iterable[CweId] | None = None, include_both: bool = True,
                    include_unknown: bool = False) -> list[ReactionStat]:
    """Mean reaction per CWE; a pair counts towards every CWE of its CVE."""
    wanted = None if cwes is None else set(cwes)
    groups: dict[tuple, list[int]] = defaultdict(list)
    for p in reaction_pairs(records, cache):
        for cwe in p.entry.cwe_ids:
            if wanted is not None and cwe not in wanted:
                continue
            for lang in series_for(p.record.language, include_both, include_unknown):
                groups[(cwe, lang)].append(p.days)
    return _summarise(groups)
