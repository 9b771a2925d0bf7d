"""Mine version-control histories for vulnerability-mitigation commits.

The pipeline: commits (git or NDJSON export) -> CVE/CWE reference extraction
-> root-directory language classification -> NVD enrichment -> statistics.
"""
from .analytics import (MitigationRecord, build_records, cwe_distribution, ratio_per_100k,
                        reaction_by_cwe, reaction_by_year, reaction_days, top_cwes)
from .ingest import CommitRecord, ScanConfig, read_export, scan_repository, write_export
from .lang import ProjectLanguage, classify
from .nvd import CveEntry, NvdCache, Severity, parse_feed, resolve_refs
from .refs import CveId, CweId, VulnRefSet, classify_message, extract_refs, first_stage_filter
from .store import SchemaVersion, validate_file

__version__ = "0.1.0"

__all__ = [
    "CommitRecord", "CveEntry", "CveId", "CweId", "MitigationRecord", "NvdCache", "ProjectLanguage",
    "ScanConfig", "SchemaVersion", "Severity", "VulnRefSet", "build_records", "classify",
    "classify_message", "cwe_distribution", "extract_refs", "first_stage_filter", "parse_feed",
    "ratio_per_100k", "reaction_by_cwe", "reaction_by_year", "reaction_days", "read_export",
    "resolve_refs", "scan_repository", "top_cwes", "validate_file", "write_export",
]
