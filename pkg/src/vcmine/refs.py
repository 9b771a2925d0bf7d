"""CVE/CWE reference detection and extraction for commit messages.

Two stages: a cheap case-insensitive substring filter ("CVE-", "CWE-",
"NVD-"), then regex extraction of well-formed identifiers. Everything here is
pure and ASCII-only: ``\\d`` means ``[0-9]`` and "alphanumeric" means
``[A-Za-z0-9]``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

MIN_CVE_YEAR = 1999

_FILTER_RE = re.compile(r"CVE-|CWE-|NVD-", re.IGNORECASE | re.ASCII)
# The lookbehind rejects "XCVE-2020-1234" but keeps "(CVE-2020-1234)".
_CVE_RE = re.compile(r"(?<![A-Za-z0-9])CVE-(\d{4})-(\d{4,})", re.IGNORECASE | re.ASCII)
_CWE_RE = re.compile(r"(?<![A-Za-z0-9])CWE-(\d{1,4})", re.IGNORECASE | re.ASCII)


@dataclass(frozen=True, order=True)
class CveId:
    year: int
    # kept as text so "CVE-2019-0001" keeps its zero padding
    sequence: str

    def __post_init__(self):
        if not 1000 <= self.year <= 9999:
            raise ValueError(f"CVE year must have 4 digits: {self.year}")
        if self.year < MIN_CVE_YEAR:
            raise ValueError(f"CVE year before {MIN_CVE_YEAR}: {self.year}")
        if len(self.sequence) < 4 or not (self.sequence.isascii() and self.sequence.isdigit()):
            raise ValueError(f"bad CVE sequence: {self.sequence!r}")

    @classmethod
    def parse(cls, text: str) -> "CveId":
        m = re.fullmatch(r"CVE-(\d{4})-(\d{4,})", text.strip(), re.IGNORECASE | re.ASCII)
        if m is None:
            raise ValueError(f"not a CVE id: {text!r}")
        return cls(int(m.group(1)), m.group(2))

    def __str__(self) -> str:
        return f"CVE-{self.year}-{self.sequence}"

    @property
    def sort_key(self) -> tuple[int, int, str]:
        return (self.year, int(self.sequence), self.sequence)


@dataclass(frozen=True, order=True)
class CweId:
    number: int

    def __post_init__(self):
        if not 1 <= self.number <= 9999:
            raise ValueError(f"CWE number out of range: {self.number}")

    @classmethod
    def parse(cls, text: str) -> "CweId":
        m = re.fullmatch(r"CWE-(\d{1,4})", text.strip(), re.IGNORECASE | re.ASCII)
        if m is None:
            raise ValueError(f"not a CWE id: {text!r}")
        return cls(int(m.group(1)))

    def __str__(self) -> str:
        return f"CWE-{self.number}"


@dataclass(frozen=True)
class VulnRefSet:
    cves: frozenset[CveId] = field(default_factory=frozenset)
    cwes: frozenset[CweId] = field(default_factory=frozenset)

    def __bool__(self) -> bool:
        return bool(self.cves or self.cwes)

    def sorted_cves(self) -> list[CveId]:
        return sorted(self.cves, key=lambda c: c.sort_key)

    def sorted_cwes(self) -> list[CweId]:
        return sorted(self.cwes)

    def render(self) -> str:
        """Space-joined canonical forms; ``extract_refs(render())`` is a fixpoint."""
        return " ".join([str(c) for c in self.sorted_cves()] + [str(c) for c in self.sorted_cwes()])


@dataclass(frozen=True)
class ExtractionReport:
    matched_filter: bool
    refs: VulnRefSet
    false_positive: bool


def first_stage_filter(message: str) -> bool:
    return _FILTER_RE.search(message) is not None


def extract_refs(message: str) -> VulnRefSet:
    """Return the distinct CVE and CWE identifiers mentioned in ``message``.

    Matches whose CVE year predates 1999 or whose CWE number is zero are
    dropped; they are syntactically matched but are not valid identifiers.
    """
    cves = set()
    for m in _CVE_RE.finditer(message):
        year = int(m.group(1))
        if year >= MIN_CVE_YEAR:
            cves.add(CveId(year, m.group(2)))
    cwes = set()
    for m in _CWE_RE.finditer(message):
        number = int(m.group(1))
        if number >= 1:
            cwes.add(CweId(number))
    return VulnRefSet(frozenset(cves), frozenset(cwes))


def classify_message(message: str) -> ExtractionReport:
    matched = first_stage_filter(message)
    refs = extract_refs(message) if matched else VulnRefSet()
    return ExtractionReport(matched, refs, matched and not refs)
