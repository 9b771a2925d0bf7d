# %%
# Pull CVE/CWE ids out of commit messages and see which ones are noise.
from vcmine import classify_message, extract_refs

messages = [
    "Fix CVE-2018-1000620: cryptiles randomDigits bias",
    "harden json parser (cve-2017-16226, CWE-400)",
    "CVE-2020-20500/330/34/345",
    "Fixed XSS (with CVE number 2020-100)",
    "execve-safe wrapper for subprocess calls",
    "Merge pull request #12 from Glennvd-patch-1",
    "bump deps",
]

for msg in messages:
    rep = classify_message(msg)
    tag = "noise" if rep.false_positive else ("hit" if rep.refs else "-")
    print(f"{tag:6} {rep.refs.render() or '':40} {msg}")

# %%
# Ids are canonical, so case and zero padding fold together.
refs = extract_refs("CWE-079 cwe-79 CVE-2019-0001 cve-2019-0001")
print(refs.render())
