# %%
# Parse an NVD 1.1 JSON feed held in memory, then run the analytics on a
# handful of hand-made mitigation records.
import json
from datetime import datetime, timezone

from vcmine import (MitigationRecord, NvdCache, ProjectLanguage, cwe_distribution,
                    extract_refs, parse_feed, ratio_per_100k, reaction_by_cwe, reaction_by_year,
                    resolve_refs)
from vcmine.nvd import ParseReport


def item(cve, published, cwes, severity, impact):
    return {
        "cve": {"CVE_data_meta": {"ID": cve},
                "problemtype": {"problemtype_data": [{"description": [{"lang": "en", "value": c}
                                                                      for c in cwes]}]}},
        "impact": {"baseMetricV3": {"cvssV3": {"baseSeverity": severity}, "impactScore": impact}},
        "publishedDate": published,
    }


feed = json.dumps({"CVE_Items": [
    item("CVE-2018-3721", "2018-06-07T02:29Z", ["CWE-471"], "MEDIUM", 3.6),
    item("CVE-2018-16487", "2019-02-01T18:29Z", ["CWE-400"], "MEDIUM", 3.6),
    item("CVE-2018-1000620", "2018-07-09T20:29Z", ["CWE-331"], "CRITICAL", 5.9),
    item("CVE-2018-18074", "2018-10-09T17:29Z", ["CWE-522"], "HIGH", 3.6),
    item("CVE-2018-7750", "2018-03-13T18:29Z", ["NVD-CWE-noinfo"], "CRITICAL", 5.9),
]}).encode()

report = ParseReport()
cache = NvdCache()
cache.ingest("demo-feed", parse_feed(feed, report))
print(f"parsed {report.parsed}/{report.items} items")

# %%
JS, PY = ProjectLanguage.JAVASCRIPT, ProjectLanguage.PYTHON
UTC = timezone.utc
commits = [
    ("lodash", JS, datetime(2018, 2, 1, tzinfo=UTC), "Prototype pollution fix CVE-2018-3721"),
    ("lodash", JS, datetime(2018, 11, 20, tzinfo=UTC), "merge: fix CVE-2018-16487"),
    ("cryptiles", JS, datetime(2018, 7, 10, tzinfo=UTC), "CVE-2018-1000620 random digits"),
    ("requests", PY, datetime(2018, 10, 10, tzinfo=UTC), "Strip auth on redirect, CVE-2018-18074"),
    ("paramiko", PY, datetime(2018, 3, 14, tzinfo=UTC), "CVE-2018-7750 auth bypass"),
]
records = [MitigationRecord(f"c{i}", repo, lang, when, resolve_refs(extract_refs(msg), cache))
           for i, (repo, lang, when, msg) in enumerate(commits)]

# Made-up commit totals, just to show the scale of the ratio.
totals = {(2018, JS): 37_729, (2018, PY): 6_315}
vuln = {}
for r in records:
    vuln[(r.year, r.language)] = vuln.get((r.year, r.language), 0) + 1
for s in ratio_per_100k(vuln, totals):
    print(s.year, s.language.short, f"{s.ratio_per_100k:.3f} per 100k")

# %%
dist, overlap = cwe_distribution(records)
for s in dist:
    print(s.cwe, {k.short: v for k, v in s.count_per_language.items()})

for s in reaction_by_year(records, cache) + reaction_by_cwe(records, cache):
    print(s.key, s.language.short, f"n={s.n} mean={s.mean_days:.1f} days")
