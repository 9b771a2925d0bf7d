# %%
# Build two throwaway git repositories and a feed file, then run the whole
# pipeline through the command line entry point.
import json
import os
import subprocess
import tempfile
from pathlib import Path

from vcmine import cli

work = Path(tempfile.mkdtemp(prefix="vcm-demo-"))
env = {**os.environ, "GIT_AUTHOR_NAME": "demo", "GIT_AUTHOR_EMAIL": "demo@example.org",
       "GIT_COMMITTER_NAME": "demo", "GIT_COMMITTER_EMAIL": "demo@example.org"}


def make_repo(name, history):
    repo = work / name
    repo.mkdir()
    subprocess.run(["git", "init", "-q", repo], check=True)
    for date, message, files in history:
        for path, text in files.items():
            (repo / path).write_text(text)
        subprocess.run(["git", "-C", repo, "add", "-A"], check=True)
        subprocess.run(["git", "-C", repo, "commit", "-q", "--allow-empty", "-m", message],
                       check=True, env={**env, "GIT_AUTHOR_DATE": date, "GIT_COMMITTER_DATE": date})
    return repo


py = make_repo("pyproj", [
    ("2018-01-02T00:00:00Z", "init", {"setup.py": ""}),
    ("2018-03-15T00:00:00Z", "Fix CVE-2018-7750", {"auth.py": "1"}),
    ("2018-10-11T00:00:00Z", "Redirect fix (CVE-2018-18074)", {"auth.py": "2"}),
])
js = make_repo("jsproj", [
    ("2018-01-05T00:00:00Z", "init", {"index.js": ""}),
    ("2018-07-12T00:00:00Z", "CVE-2018-1000620 bias in randomDigits", {"lib.js": "1"}),
    ("2018-08-01T00:00:00Z", "execve-safe spawn", {"lib.js": "2"}),
])

feeds = work / "feeds"
feeds.mkdir()


def item(cve, published, cwe):
    return {"cve": {"CVE_data_meta": {"ID": cve},
                    "problemtype": {"problemtype_data": [{"description": [{"value": cwe}]}]}},
            "impact": {}, "publishedDate": published}


(feeds / "nvdcve-1.1-2018.json").write_text(json.dumps({"CVE_Items": [
    item("CVE-2018-7750", "2018-03-13T18:29Z", "CWE-287"),
    item("CVE-2018-18074", "2018-10-09T17:29Z", "CWE-522"),
    item("CVE-2018-1000620", "2018-07-09T20:29Z", "CWE-331"),
]}))

# %%
out = work / "out"
code = cli.main(["report", str(py), str(js), "--nvd-dir", str(feeds), "--out", str(out),
                 "--threshold", "1"])
print("exit", code)
for name in sorted(os.listdir(out)):
    print(f"--- {name}")
    print((out / name).read_text().rstrip())
