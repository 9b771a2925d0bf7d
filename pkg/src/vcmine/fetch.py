"""Download yearly NVD 1.1 JSON feeds, skipping files whose checksum still matches."""
from __future__ import annotations

import gzip
import hashlib
import logging
import os
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import store

log = logging.getLogger(__name__)

DEFAULT_FEED_URL = "https://nvd.nist.gov/feeds/json/cve/1.1"
FIRST_FEED_YEAR = 2002
CHECKSUM_LOG = "feeds.sha256"


class FetchError(RuntimeError):
    """A feed or its metadata could not be retrieved."""


@dataclass
class FetchResult:
    downloaded: list[str] = field(default_factory=list)
    unchanged: list[str] = field(default_factory=list)
    checksums: dict[str, str] = field(default_factory=dict)


def feed_name(year: int) -> str:
    return f"nvdcve-1.1-{year}.json.gz"


def parse_meta(text: str) -> dict[str, str]:
    """Parse a ``.meta`` file (``key:value`` lines)."""
    meta = {}
    for line in text.splitlines():
        key, sep, value = line.partition(":")
        if sep:
            meta[key.strip()] = value.strip()
    return meta


def local_sha256(path: Path) -> str | None:
    """SHA-256 of the decompressed feed, or None if unreadable."""
    try:
        with gzip.open(path, "rb") as fp:
            h = hashlib.sha256()
            for chunk in iter(lambda: fp.read(1 << 20), b""):
                h.update(chunk)
    except (OSError, EOFError):
        return None
    return h.hexdigest().upper()


def _get(url: str, timeout: float) -> bytes:
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            return resp.read()
    except (urllib.error.URLError, OSError) as exc:
        raise FetchError(f"{url}: {exc}") from exc


def default_years() -> list[int]:
    return list(range(FIRST_FEED_YEAR, datetime.now(timezone.utc).year + 1))


def fetch_feeds(dest: str | os.PathLike, years: list[int] | None = None,
                base_url: str = DEFAULT_FEED_URL, timeout: float = 60.0) -> FetchResult:
    """Bring ``dest`` up to date with the remote yearly feeds.

    A feed is downloaded only when it is absent locally or its decompressed
    SHA-256 differs from the remote ``.meta``. Downloads land in a temp file
    and replace the old feed only after the checksum verifies, so a failure
    never damages feeds already on disk.
    """
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    base_url = base_url.rstrip("/")
    result = FetchResult()
    for year in years or default_years():
        name = feed_name(year)
        meta_url = f"{base_url}/nvdcve-1.1-{year}.meta"
        expected = parse_meta(_get(meta_url, timeout).decode("utf-8", "replace")).get("sha256", "").upper()
        if not expected:
            raise FetchError(f"{meta_url}: no sha256 field")
        target = dest / name
        if target.exists() and local_sha256(target) == expected:
            result.unchanged.append(name)
            result.checksums[name] = expected
            continue
        data = _get(f"{base_url}/{name}", timeout)
        try:
            got = hashlib.sha256(gzip.decompress(data)).hexdigest().upper()
        except (OSError, EOFError) as exc:
            raise FetchError(f"{name}: download is not valid gzip: {exc}") from exc
        if got != expected:
            raise FetchError(f"{name}: checksum mismatch (got {got}, expected {expected})")
        with store.atomic_open(target, "wb") as fp:
            fp.write(data)
        log.info("downloaded %s sha256=%s", name, got)
        result.downloaded.append(name)
        result.checksums[name] = got
    _write_checksum_log(dest, result.checksums)
    return result


def _write_checksum_log(dest: Path, checksums: dict[str, str]) -> None:
    path = dest / CHECKSUM_LOG
    known = {}
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            digest, _, name = line.partition("  ")
            if name:
                known[name] = digest
    known.update(checksums)
    with store.atomic_open(path) as fp:
        fp.writelines(f"{known[n]}  {n}\n" for n in sorted(known))
