"""Commit records from git repositories or from NDJSON commit exports."""
from __future__ import annotations

import json
import logging
import os
import subprocess
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import IO, Iterable, Iterator

from . import store

log = logging.getLogger(__name__)

DATE_FIELDS = ("author", "committer")
BRANCH_POLICIES = ("all-refs", "default-branch")


class ScanError(RuntimeError):
    """The repository could not be read at all."""


@dataclass(frozen=True)
class CommitRecord:
    repo_id: str
    commit_id: str
    author_date: datetime
    committer_date: datetime
    message: str
    root_entries: frozenset[str] = frozenset()

    def date(self, date_field: str = "committer") -> datetime:
        return self.committer_date if date_field == "committer" else self.author_date

    def to_row(self) -> dict:
        return {
            "repo": self.repo_id,
            "id": self.commit_id,
            "author_date": store.format_utc(self.author_date),
            "committer_date": store.format_utc(self.committer_date),
            "message": self.message,
            "root": sorted(self.root_entries),
        }

    @classmethod
    def from_row(cls, row: dict) -> "CommitRecord":
        root = row["root"]
        if not isinstance(root, list) or not all(isinstance(n, str) for n in root):
            raise ValueError("root must be a list of names")
        message, repo, cid = row["message"], row["repo"], row["id"]
        if not isinstance(message, str) or not isinstance(repo, str) or not isinstance(cid, str) or not cid:
            raise ValueError("repo, id and message must be text")
        return cls(
            repo_id=repo,
            commit_id=cid,
            author_date=store.parse_utc(row["author_date"]),
            committer_date=store.parse_utc(row["committer_date"]),
            message=message,
            root_entries=frozenset(root),
        )


@dataclass(frozen=True)
class ScanConfig:
    date_field: str = "committer"
    since: datetime | None = None
    until: datetime | None = None
    branches: str = "all-refs"

    def __post_init__(self):
        if self.date_field not in DATE_FIELDS:
            raise ValueError(f"date_field must be one of {DATE_FIELDS}")
        if self.branches not in BRANCH_POLICIES:
            raise ValueError(f"branches must be one of {BRANCH_POLICIES}")
        if self.since and self.until and self.since > self.until:
            raise ValueError("since is after until")

    def accepts(self, commit: CommitRecord) -> bool:
        d = commit.date(self.date_field)
        if self.since and d < self.since:
            return False
        if self.until and d > self.until:
            return False
        return True


@dataclass
class IngestReport:
    records: int = 0
    skipped: int = 0
    warnings: list[str] = field(default_factory=list)

    def warn(self, msg: str) -> None:
        self.skipped += 1
        self.warnings.append(msg)
        log.warning(msg)


# -- git -------------------------------------------------------------------

_LOG_FORMAT = "%H%x1f%T%x1f%aI%x1f%cI%x1f%B"


def _git(path, *args) -> list[str]:
    return ["git", "-C", os.fspath(path), *args]


class _TreeReader:
    """Reads root-tree listings through one long-lived ``git cat-file --batch``."""

    def __init__(self, path):
        self.proc = subprocess.Popen(_git(path, "cat-file", "--batch"),
                                     stdin=subprocess.PIPE, stdout=subprocess.PIPE)

    def names(self, tree: str) -> frozenset[str]:
        self.proc.stdin.write(tree.encode() + b"\n")
        self.proc.stdin.flush()
        header = self.proc.stdout.readline().split()
        if len(header) != 3 or header[1] != b"tree":
            raise ValueError(f"tree {tree} unreadable: {b' '.join(header).decode(errors='replace')}")
        body = self.proc.stdout.read(int(header[2]) + 1)[:-1]
        hash_len = len(tree) // 2
        names = []
        pos = 0
        # each entry: "<mode> <name>\0<raw object id>"
        while pos < len(body):
            space = body.index(b" ", pos)
            nul = body.index(b"\0", space)
            names.append(body[space + 1:nul].decode("utf-8", errors="surrogateescape"))
            pos = nul + 1 + hash_len
        return frozenset(names)

    def close(self):
        if self.proc.stdin:
            self.proc.stdin.close()
        self.proc.wait()


def scan_repository(path: str | os.PathLike, cfg: ScanConfig = ScanConfig(),
                    repo_id: str | None = None, report: IngestReport | None = None,
                    seen: set[str] | None = None) -> Iterator[CommitRecord]:
    """Stream every commit reachable under ``cfg.branches``, each exactly once.

    ``seen`` may be shared between calls to deduplicate across repositories
    (forks); by default deduplication is per repository.
    """
    path = Path(path)
    repo_id = repo_id or path.resolve().name
    report = report if report is not None else IngestReport()
    seen = set() if seen is None else seen

    probe = subprocess.run(_git(path, "rev-parse", "--git-dir"), capture_output=True, text=True)
    if probe.returncode != 0:
        raise ScanError(f"{path}: not a readable git repository: {probe.stderr.strip()}")
    has_head = subprocess.run(_git(path, "rev-parse", "--verify", "-q", "HEAD"),
                              capture_output=True).returncode == 0
    revs = ["--all"] if cfg.branches == "all-refs" else ["HEAD"]
    if not has_head and cfg.branches == "default-branch":
        return

    proc = subprocess.Popen(_git(path, "log", "-z", "--topo-order", f"--format={_LOG_FORMAT}", *revs),
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE)
    trees = _TreeReader(path)
    try:
        for raw in _split_nul(proc.stdout):
            text = raw.decode("utf-8", errors="replace")
            parts = text.split("\x1f", 4)
            if len(parts) != 5:
                report.warn(f"{repo_id}: unparseable log entry skipped")
                continue
            sha, tree, adate, cdate, message = parts
            if sha in seen:
                continue
            seen.add(sha)
            try:
                commit = CommitRecord(repo_id, sha, store.parse_utc(adate), store.parse_utc(cdate),
                                      message, trees.names(tree))
            except ValueError as exc:
                report.warn(f"{repo_id}: commit {sha} skipped: {exc}")
                continue
            if cfg.accepts(commit):
                report.records += 1
                yield commit
    finally:
        trees.close()
        proc.stdout.close()
        err = proc.stderr.read().decode(errors="replace")
        proc.stderr.close()
        rc = proc.wait()
    if rc != 0 and has_head:
        raise ScanError(f"{path}: git log failed: {err.strip()}")


def _split_nul(stream: IO[bytes], chunk: int = 1 << 16) -> Iterator[bytes]:
    buf = b""
    while True:
        data = stream.read(chunk)
        if not data:
            break
        buf += data
        *complete, buf = buf.split(b"\0")
        yield from complete
    if buf.strip(b"\n"):
        yield buf


# -- export ----------------------------------------------------------------

def read_export(lines: Iterable[str] | IO[str], report: IngestReport | None = None,
                cfg: ScanConfig | None = None) -> Iterator[CommitRecord]:
    """Parse a commit export, one JSON object per line, in file order.

    A leading ``{"schema":"commits/1"}`` header is accepted but optional, so
    exports produced by other tools load too. Bad lines are skipped and counted.
    """
    report = report if report is not None else IngestReport()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            report.warn(f"line {lineno}: malformed JSON ({exc.msg})")
            continue
        if lineno == 1 and isinstance(obj, dict) and set(obj) == {"schema"}:
            store.check_header(line, store.COMMITS)
            continue
        if not isinstance(obj, dict):
            report.warn(f"line {lineno}: not a JSON object")
            continue
        try:
            commit = CommitRecord.from_row(obj)
        except KeyError as exc:
            report.warn(f"line {lineno}: missing key {exc}")
            continue
        except (ValueError, TypeError) as exc:
            report.warn(f"line {lineno}: {exc}")
            continue
        if cfg is None or cfg.accepts(commit):
            report.records += 1
            yield commit


def write_export(path: str | os.PathLike, commits: Iterable[CommitRecord]) -> int:
    return store.write_table(path, store.COMMITS, (c.to_row() for c in commits))
