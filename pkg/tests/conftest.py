from __future__ import annotations

import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

GIT_ENV = {
    "GIT_AUTHOR_NAME": "Fixture Author",
    "GIT_AUTHOR_EMAIL": "author@example.org",
    "GIT_COMMITTER_NAME": "Fixture Committer",
    "GIT_COMMITTER_EMAIL": "committer@example.org",
    "GIT_CONFIG_GLOBAL": os.devnull,
    "GIT_CONFIG_NOSYSTEM": "1",
}


def git(repo: Path, *args: str, env: dict | None = None) -> str:
    full_env = {**os.environ, **GIT_ENV, **(env or {})}
    out = subprocess.run(["git", "-C", str(repo), *args], check=True, capture_output=True,
                         text=True, env=full_env)
    return out.stdout


def init_repo(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    git(path, "init", "-q", "-b", "main")
    return path


def commit(repo: Path, message: str, files: dict[str, str | None] | None = None,
           author_date: str = "2018-01-01T00:00:00+00:00",
           committer_date: str | None = None) -> str:
    """Write/delete ``files`` (None deletes) and commit; returns the sha."""
    for name, content in (files or {}).items():
        p = repo / name
        if content is None:
            git(repo, "rm", "-q", name)
        else:
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(content)
            git(repo, "add", name)
    env = {"GIT_AUTHOR_DATE": author_date, "GIT_COMMITTER_DATE": committer_date or author_date}
    git(repo, "commit", "-q", "--allow-empty", "-m", message, env=env)
    return git(repo, "rev-parse", "HEAD").strip()


def nvd_item(cve_id: str, published: str | None = "2019-01-02T12:00Z", cwes=("CWE-79",),
             v3: tuple | None = None, v2: tuple | None = None) -> dict:
    """Build one NVD 1.1 ``CVE_Items`` element; v3/v2 are (severity, impactScore)."""
    item = {
        "cve": {
            "data_type": "CVE",
            "data_format": "MITRE",
            "data_version": "4.0",
            "CVE_data_meta": {"ID": cve_id, "ASSIGNER": "cve@mitre.org"} if cve_id else {"ASSIGNER": "x"},
            "problemtype": {"problemtype_data": [
                {"description": [{"lang": "en", "value": c} for c in cwes]}]},
            "references": {"reference_data": []},
            "description": {"description_data": [{"lang": "en", "value": "fixture"}]},
        },
        "configurations": {"CVE_data_version": "4.0", "nodes": []},
        "impact": {},
        "lastModifiedDate": "2020-01-01T00:00Z",
    }
    if published is not None:
        item["publishedDate"] = published
    if v3 is not None:
        sev, score = v3
        cvss = {"version": "3.1", "baseScore": 7.5}
        if sev is not None:
            cvss["baseSeverity"] = sev
        block = {"cvssV3": cvss, "exploitabilityScore": 3.9}
        if score is not None:
            block["impactScore"] = score
        item["impact"]["baseMetricV3"] = block
    if v2 is not None:
        sev, score = v2
        block = {"cvssV2": {"version": "2.0", "baseScore": 5.0}, "exploitabilityScore": 10.0}
        if sev is not None:
            block["severity"] = sev
        if score is not None:
            block["impactScore"] = score
        item["impact"]["baseMetricV2"] = block
    return item


def nvd_feed(items: list[dict]) -> bytes:
    doc = {"CVE_data_type": "CVE", "CVE_data_format": "MITRE", "CVE_data_version": "4.0",
           "CVE_data_numberOfCVEs": str(len(items)), "CVE_data_timestamp": "2020-01-01T00:00Z",
           "CVE_Items": items}
    return json.dumps(doc).encode()


@pytest.fixture
def linear_repo(tmp_path):
    repo = init_repo(tmp_path / "linear")
    shas = [
        commit(repo, "initial import", {"setup.py": "", "README.md": "x"}, "2018-01-01T00:00:00+00:00"),
        commit(repo, "Fix CVE-2018-1000620 in parser", {"a.py": "1"}, "2018-02-01T00:00:00+00:00"),
        commit(repo, "docs", {"README.md": "y"}, "2018-03-01T00:00:00+00:00"),
    ]
    return repo, shas


_ACCEPTANCE: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.failed:
        _ACCEPTANCE[name] = "FAIL"
    elif report.when == "call":
        _ACCEPTANCE.setdefault(name, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE.items():
        terminalreporter.write_line(f"{outcome}  {name}")
