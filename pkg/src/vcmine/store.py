"""Versioned NDJSON tables: headers, atomic writes, readers and validation.

Every table starts with a header line ``{"schema":"<name>/<version>"}``
followed by one JSON object per line.
"""
from __future__ import annotations

import contextlib
import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator

from .lang import ProjectLanguage
from .refs import CveId


class SchemaError(ValueError):
    """A table header is missing, malformed or of an unsupported version."""


@dataclass(frozen=True)
class SchemaVersion:
    name: str
    version: int

    def header(self) -> str:
        return json.dumps({"schema": f"{self.name}/{self.version}"}, separators=(",", ":"))

    @classmethod
    def parse_header(cls, line: str) -> "SchemaVersion":
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"header is not JSON: {exc}") from None
        tag = obj.get("schema") if isinstance(obj, dict) else None
        m = re.fullmatch(r"([A-Za-z0-9_.-]+)/(\d+)", tag or "")
        if m is None:
            raise SchemaError(f"bad schema header: {line.strip()!r}")
        return cls(m.group(1), int(m.group(2)))

    def __str__(self) -> str:
        return f"{self.name}/{self.version}"


_SEVERITIES = frozenset({"LOW", "MEDIUM", "HIGH", "CRITICAL", "UNKNOWN"})

NVD_CACHE = SchemaVersion("nvd-cache", 1)
RECORDS = SchemaVersion("records", 1)
COMMITS = SchemaVersion("commits", 1)


# -- time ------------------------------------------------------------------

_FRACTION_RE = re.compile(r"\.(\d+)(?=[+-]\d\d:?\d\d$|$)")


def parse_utc(text: str) -> datetime:
    """Parse an ISO 8601 / RFC 3339 timestamp into an aware UTC datetime.

    Naive timestamps are taken to be UTC. NVD's minute-precision form
    ("2019-01-02T12:00Z") is accepted.
    """
    if not isinstance(text, str):
        raise ValueError(f"timestamp must be text, got {type(text).__name__}")
    s = text.strip()
    if s[-1:] in ("Z", "z"):
        s = s[:-1] + "+00:00"
    # 3.10's fromisoformat wants exactly 3 or 6 fractional digits
    s = _FRACTION_RE.sub(lambda m: "." + (m.group(1) + "000000")[:6], s, count=1)
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_utc(dt: datetime) -> str:
    dt = dt.astimezone(timezone.utc)
    if dt.microsecond:
        return dt.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


# -- writing ---------------------------------------------------------------

@contextlib.contextmanager
def atomic_open(path: str | os.PathLike, mode: str = "w"):
    """Open a temp file next to ``path``; rename over it on clean exit."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        if "b" in mode:
            fp = os.fdopen(fd, mode)
        else:
            fp = os.fdopen(fd, mode, encoding="utf-8", newline="")
        with fp:
            yield fp
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def dumps_row(row: dict) -> str:
    return json.dumps(row, ensure_ascii=False, separators=(",", ":"), sort_keys=True)


def write_table(path: str | os.PathLike, schema: SchemaVersion, rows: Iterable[dict]) -> int:
    n = 0
    with atomic_open(path) as fp:
        fp.write(schema.header() + "\n")
        for row in rows:
            fp.write(dumps_row(row) + "\n")
            n += 1
    return n


# -- reading ---------------------------------------------------------------

def check_header(line: str, expected: SchemaVersion) -> SchemaVersion:
    found = SchemaVersion.parse_header(line)
    if found.name != expected.name:
        raise SchemaError(f"expected a {expected.name} table, found {found}")
    if found.version != expected.version:
        raise SchemaError(f"unsupported {found.name} version {found.version} "
                          f"(supported: {expected.version})")
    return found


def read_table(path: str | os.PathLike, expected: SchemaVersion) -> Iterator[dict]:
    """Yield the rows of a table, raising on the first bad header or row."""
    with open(path, encoding="utf-8") as fp:
        first = fp.readline()
        if not first:
            raise SchemaError(f"{path}: empty file, no header")
        check_header(first, expected)
        for lineno, line in enumerate(fp, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
            problems = row_problems(expected, obj)
            if problems:
                raise SchemaError(f"{path}:{lineno}: {'; '.join(problems)}")
            yield obj


# -- validation ------------------------------------------------------------

@dataclass
class Violation:
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}"


@dataclass
class ValidationReport:
    path: str
    expected: SchemaVersion
    rows: int = 0
    rejected: bool = False
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.rejected and not self.violations


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _check_time(v: Any) -> str | None:
    try:
        parse_utc(v)
    except (ValueError, TypeError):
        return "not an RFC 3339 timestamp"
    return None


def _check_cve(v: Any) -> str | None:
    try:
        CveId.parse(v)
    except (ValueError, TypeError, AttributeError):
        return "not a CVE id"
    return None


def _check_cwe_list(v: Any) -> str | None:
    if not isinstance(v, list) or not all(_is_int(x) and 1 <= x <= 9999 for x in v):
        return "must be a list of CWE numbers 1..9999"
    if len(set(v)) != len(v):
        return "contains duplicates"
    return None


def _check_cve_list(v: Any) -> str | None:
    if not isinstance(v, list):
        return "must be a list"
    for x in v:
        if _check_cve(x):
            return f"{x!r} is not a CVE id"
    if len(set(v)) != len(v):
        return "contains duplicates"
    return None


def _check_text(v: Any) -> str | None:
    return None if isinstance(v, str) else "must be text"


def _check_nonempty_text(v: Any) -> str | None:
    return None if isinstance(v, str) and v else "must be non-empty text"


def _check_impact(v: Any) -> str | None:
    if v is None:
        return None
    if isinstance(v, (int, float)) and not isinstance(v, bool) and 0.0 <= v <= 10.0:
        return None
    return "must be null or a number in [0, 10]"


def _check_severity(v: Any) -> str | None:
    return None if v in _SEVERITIES else f"must be one of {sorted(_SEVERITIES)}"


def _check_language(v: Any) -> str | None:
    try:
        ProjectLanguage(v)
    except ValueError:
        return "unknown language"
    return None


def _check_names(v: Any) -> str | None:
    if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
        return "must be a list of names"
    return None


Checker = Callable[[Any], "str | None"]

_FIELDS: dict[str, dict[str, Checker]] = {
    "nvd-cache": {
        "id": _check_cve,
        "published": _check_time,
        "cwes": _check_cwe_list,
        "severity": _check_severity,
        "impact": _check_impact,
    },
    "records": {
        "repo": _check_text,
        "commit": _check_nonempty_text,
        "language": _check_language,
        "date": _check_time,
        "cves": _check_cve_list,
        "direct_cwes": _check_cwe_list,
        "cwes": _check_cwe_list,
        "unresolved": _check_cve_list,
    },
    "commits": {
        "repo": _check_text,
        "id": _check_nonempty_text,
        "author_date": _check_time,
        "committer_date": _check_time,
        "message": _check_text,
        "root": _check_names,
    },
}


def row_problems(schema: SchemaVersion, obj: Any) -> list[str]:
    if not isinstance(obj, dict):
        return ["row is not a JSON object"]
    problems = []
    for key, check in _FIELDS[schema.name].items():
        if key not in obj:
            problems.append(f"missing key {key!r}")
            continue
        msg = check(obj[key])
        if msg:
            problems.append(f"{key}: {msg}")
    if schema.name == "records" and not (obj.get("cves") or obj.get("direct_cwes")):
        problems.append("record has no CVE or CWE reference")
    return problems


def validate_file(path: str | os.PathLike, expected: SchemaVersion) -> ValidationReport:
    """Check header, JSON well-formedness and field invariants line by line.

    Raises ``OSError`` when the file cannot be read; everything else ends up
    in the returned report.
    """
    report = ValidationReport(str(path), expected)
    with open(path, encoding="utf-8") as fp:
        first = fp.readline()
        try:
            if not first:
                raise SchemaError("empty file, no header")
            check_header(first, expected)
        except SchemaError as exc:
            report.rejected = True
            report.violations.append(Violation(1, str(exc)))
            return report
        for lineno, line in enumerate(fp, start=2):
            if not line.strip():
                continue
            report.rows += 1
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                report.violations.append(Violation(lineno, f"invalid JSON: {exc.msg}"))
                continue
            for msg in row_problems(expected, obj):
                report.violations.append(Violation(lineno, msg))
    return report
