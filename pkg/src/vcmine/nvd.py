"""NVD JSON 1.1 feed parsing, the CVE lookup cache, and reference resolution."""
from __future__ import annotations

import enum
import gzip
import json
import logging
import os
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Iterable

from . import store
from .refs import CveId, CweId, VulnRefSet

log = logging.getLogger(__name__)

_CWE_VALUE_RE = re.compile(r"CWE-(\d+)", re.ASCII)


class Severity(str, enum.Enum):
    LOW = "LOW"
    MEDIUM = "MEDIUM"
    HIGH = "HIGH"
    CRITICAL = "CRITICAL"
    UNKNOWN = "UNKNOWN"

    @classmethod
    def coerce(cls, value) -> "Severity":
        if isinstance(value, str):
            try:
                return cls(value.strip().upper())
            except ValueError:
                pass
        return cls.UNKNOWN


@dataclass(frozen=True)
class CveEntry:
    id: CveId
    publish_date: datetime
    cwe_ids: tuple[CweId, ...] = ()
    severity: Severity = Severity.UNKNOWN
    base_impact_score: float | None = None

    def __post_init__(self):
        if self.publish_date.tzinfo is None:
            raise ValueError("publish_date must be timezone-aware")
        if len(set(self.cwe_ids)) != len(self.cwe_ids):
            raise ValueError(f"{self.id}: duplicate CWE ids")
        score = self.base_impact_score
        if score is not None and not 0.0 <= score <= 10.0:
            raise ValueError(f"{self.id}: impact score {score} outside [0, 10]")

    def to_row(self) -> dict:
        return {
            "id": str(self.id),
            "published": store.format_utc(self.publish_date),
            "cwes": [c.number for c in self.cwe_ids],
            "severity": self.severity.value,
            "impact": self.base_impact_score,
        }

    @classmethod
    def from_row(cls, row: dict) -> "CveEntry":
        return cls(
            id=CveId.parse(row["id"]),
            publish_date=store.parse_utc(row["published"]),
            cwe_ids=tuple(CweId(n) for n in row["cwes"]),
            severity=Severity(row["severity"]),
            base_impact_score=None if row["impact"] is None else float(row["impact"]),
        )


class FeedError(ValueError):
    """The feed as a whole could not be parsed."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass
class ParseReport:
    items: int = 0
    parsed: int = 0
    skipped: int = 0
    reasons: list[str] = field(default_factory=list)

    def skip(self, index: int, reason: str) -> None:
        self.skipped += 1
        self.reasons.append(f"item {index}: {reason}")


def _read_bytes(feed: bytes | str | os.PathLike | IO[bytes]) -> bytes:
    if isinstance(feed, (bytes, bytearray)):
        data = bytes(feed)
    elif isinstance(feed, (str, os.PathLike)):
        data = Path(feed).read_bytes()
    else:
        data = feed.read()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def _byte_offset(data: bytes, char_pos: int) -> int:
    text = data.decode("utf-8", errors="replace")
    return len(text[:char_pos].encode("utf-8"))


def _problemtype_cwes(cve: dict) -> tuple[CweId, ...]:
    seen: dict[CweId, None] = {}
    for pt in (cve.get("problemtype") or {}).get("problemtype_data") or []:
        for desc in pt.get("description") or []:
            m = _CWE_VALUE_RE.fullmatch(str(desc.get("value", "")).strip())
            # NVD-CWE-noinfo / NVD-CWE-Other carry no category
            if m and 1 <= int(m.group(1)) <= 9999:
                seen.setdefault(CweId(int(m.group(1))), None)
    return tuple(seen)


def _cvss(item: dict) -> tuple[Severity, float | None]:
    impact = item.get("impact") or {}
    v3 = impact.get("baseMetricV3")
    if v3:
        sev = (v3.get("cvssV3") or {}).get("baseSeverity")
        return Severity.coerce(sev), _score(v3.get("impactScore"))
    v2 = impact.get("baseMetricV2")
    if v2:
        sev = v2.get("severity") or (v2.get("cvssV2") or {}).get("baseSeverity")
        return Severity.coerce(sev), _score(v2.get("impactScore"))
    return Severity.UNKNOWN, None


def _score(value) -> float | None:
    if value is None or isinstance(value, bool):
        return None
    return float(value)


def parse_item(item: dict) -> CveEntry:
    """Turn one ``CVE_Items`` element into a :class:`CveEntry`.

    Raises ``ValueError`` (or ``KeyError``/``TypeError``) when the item
    violates an entry invariant.
    """
    cve = item.get("cve") or {}
    raw_id = (cve.get("CVE_data_meta") or {}).get("ID")
    if not raw_id:
        raise KeyError("missing CVE id")
    cve_id = CveId.parse(raw_id)
    published = item.get("publishedDate")
    if not published:
        raise KeyError("missing publishedDate")
    severity, score = _cvss(item)
    return CveEntry(
        id=cve_id,
        publish_date=store.parse_utc(published),
        cwe_ids=_problemtype_cwes(cve),
        severity=severity,
        base_impact_score=score,
    )


def parse_feed(feed, report: ParseReport | None = None) -> list[CveEntry]:
    """Parse an NVD 1.1 JSON feed (raw or gzip bytes, a path, or a binary file).

    Items that break an entry invariant are skipped and tallied in ``report``.
    Raises :class:`FeedError` when the document itself is unusable.
    """
    report = report if report is not None else ParseReport()
    data = _read_bytes(feed)
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise FeedError(f"malformed feed JSON: {exc.msg}", _byte_offset(data, exc.pos)) from None
    except UnicodeDecodeError as exc:
        raise FeedError(f"feed is not UTF-8: {exc.reason}", exc.start) from None
    if not isinstance(doc, dict) or not isinstance(doc.get("CVE_Items"), list):
        raise FeedError("feed has no CVE_Items array")

    entries = []
    for i, item in enumerate(doc["CVE_Items"]):
        report.items += 1
        if not isinstance(item, dict):
            report.skip(i, "item is not an object")
            continue
        try:
            entries.append(parse_item(item))
        except (KeyError, ValueError, TypeError, AttributeError) as exc:
            report.skip(i, str(exc))
            continue
        report.parsed += 1
    if report.skipped:
        log.warning("skipped %d of %d feed items", report.skipped, report.items)
    return entries


# -- cache -----------------------------------------------------------------

@dataclass
class NvdCache:
    entries: dict[CveId, CveEntry] = field(default_factory=dict)
    feed_versions: list[tuple[str, datetime]] = field(default_factory=list)

    def ingest(self, name: str, entries: Iterable[CveEntry],
               when: datetime | None = None) -> int:
        """Merge ``entries``; later ingestion wins for a repeated id."""
        n = 0
        for entry in entries:
            self.entries[entry.id] = entry
            n += 1
        self.feed_versions.append((name, when or datetime.now(timezone.utc)))
        return n

    def lookup(self, cve_id: CveId) -> CveEntry | None:
        return self.entries.get(cve_id)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, cve_id) -> bool:
        return cve_id in self.entries

    def save(self, path: str | os.PathLike) -> int:
        rows = (self.entries[k].to_row() for k in sorted(self.entries, key=lambda c: c.sort_key))
        return store.write_table(path, store.NVD_CACHE, rows)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "NvdCache":
        cache = cls()
        cache.ingest(str(path), (CveEntry.from_row(r) for r in store.read_table(path, store.NVD_CACHE)))
        return cache


def feed_files(directory: str | os.PathLike, pattern: str = "*.json*") -> list[Path]:
    return sorted(p for p in Path(directory).glob(pattern)
                  if p.is_file() and p.name.endswith((".json", ".json.gz")))


def build_cache(paths: Iterable[str | os.PathLike], threads: int = 1) -> NvdCache:
    """Parse feed files (optionally in parallel) and merge them in path order."""
    paths = [Path(p) for p in paths]

    def _parse(p: Path) -> tuple[Path, list[CveEntry], ParseReport]:
        report = ParseReport()
        return p, parse_feed(p, report), report

    if threads > 1 and len(paths) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parsed = list(pool.map(_parse, paths))
    else:
        parsed = [_parse(p) for p in paths]

    cache = NvdCache()
    for p, entries, report in parsed:
        cache.ingest(p.name, entries)
        log.info("%s: %d entries, %d skipped", p.name, report.parsed, report.skipped)
    return cache


# -- resolution ------------------------------------------------------------

@dataclass(frozen=True)
class ResolvedRefs:
    cwes: frozenset[CweId]
    resolved_cves: tuple[tuple[CveId, CveEntry], ...]
    unresolved_cves: tuple[CveId, ...]
    direct_cwes: frozenset[CweId]

    @property
    def cves(self) -> list[CveId]:
        ids = [c for c, _ in self.resolved_cves] + list(self.unresolved_cves)
        return sorted(ids, key=lambda c: c.sort_key)


def resolve_refs(refs: VulnRefSet, cache: NvdCache) -> ResolvedRefs:
    resolved = []
    unresolved = []
    cwes = set(refs.cwes)
    for cve in refs.sorted_cves():
        entry = cache.lookup(cve)
        if entry is None:
            unresolved.append(cve)
        else:
            resolved.append((cve, entry))
            cwes.update(entry.cwe_ids)
    return ResolvedRefs(frozenset(cwes), tuple(resolved), tuple(unresolved), frozenset(refs.cwes))
