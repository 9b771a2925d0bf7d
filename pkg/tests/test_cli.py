import gzip
import hashlib
import http.server
import json
import threading
from functools import partial
from pathlib import Path

import pytest

import corpus
from conftest import nvd_feed, nvd_item
from vcmine import cli, report, store
from vcmine.ingest import scan_repository, write_export

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="module")
def fixture_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    repos, feed = corpus.build(root)
    return root, repos, feed


def run(*argv, env=None, monkeypatch=None):
    return cli.main([str(a) for a in argv])


def read_reports(out: Path) -> dict[str, str]:
    return {name: (out / name).read_text() for name in report.REPORT_FILES}


def test_report_matches_oracle(fixture_corpus, tmp_path):
    root, repos, feed = fixture_corpus
    for threshold in (1, 2, 150):
        out = tmp_path / f"t{threshold}"
        assert run("report", *repos, "--nvd-dir", feed.parent, "--out", out,
                   "--threshold", threshold) == 0
        assert read_reports(out) == corpus.expected_reports(threshold)


def test_report_matches_golden(fixture_corpus, tmp_path):
    root, repos, feed = fixture_corpus
    out = tmp_path / "out"
    assert run("report", *repos, "--nvd-dir", feed.parent, "--out", out, "--threshold", 2) == 0
    for name in report.REPORT_FILES:
        assert (out / name).read_bytes() == (GOLDEN / name).read_bytes(), name


def test_scan_outputs_validate(fixture_corpus, tmp_path):
    root, repos, feed = fixture_corpus
    out = tmp_path / "out"
    assert run("scan", *repos, "--nvd-dir", feed.parent, "--out", out) == 0
    assert store.validate_file(out / "records.ndjson", store.RECORDS).ok
    assert store.validate_file(out / "nvd-cache.ndjson", store.NVD_CACHE).ok
    n_records = sum(1 for c in corpus.flat_commits() if c[3] or c[4])
    assert len((out / "records.ndjson").read_text().splitlines()) == 1 + n_records
    summary = json.loads((out / "scan-summary.json").read_text())
    assert summary["commits"] == 40 and summary["records"] == n_records
    assert summary["false_positives"] == 4  # execve-safe, Glennvd, nvd-downloader, no CVE-id


def test_separability(fixture_corpus, tmp_path):
    root, repos, feed = fixture_corpus
    out = tmp_path / "out"
    run("scan", *repos, "--nvd-dir", feed.parent, "--out", out)
    keep = {"records.ndjson", "totals.csv", "nvd-cache.ndjson"}
    for p in out.iterdir():
        if p.name not in keep:
            p.unlink()
    assert run("analyze", "--out", out, "--threshold", 2) == 0
    assert read_reports(out) == corpus.expected_reports(2)


def test_export_input_equivalent_to_repos(fixture_corpus, tmp_path):
    root, repos, feed = fixture_corpus
    export = tmp_path / "commits.ndjson"
    write_export(export, [c for r in repos for c in scan_repository(r)])
    out = tmp_path / "out"
    assert run("report", export, "--nvd-dir", feed.parent, "--out", out, "--threshold", 2) == 0
    assert read_reports(out) == corpus.expected_reports(2)


def test_no_inputs_is_config_error(tmp_path, capsys):
    assert run("scan", "--out", tmp_path) == cli.EXIT_CONFIG
    assert "usage" in capsys.readouterr().err


def test_bad_flag_exits_2(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("scan", "--date-field", "tomorrow", "x")
    assert exc.value.code == 2


def test_partial_input_failure(fixture_corpus, tmp_path):
    root, repos, feed = fixture_corpus
    single, both = tmp_path / "single", tmp_path / "both"
    assert run("scan", repos[0], "--nvd-dir", feed.parent, "--out", single) == 0
    assert run("scan", repos[0], tmp_path / "missing", "--nvd-dir", feed.parent, "--out", both) == 0
    assert (single / "records.ndjson").read_text() == (both / "records.ndjson").read_text()
    summary = json.loads((both / "scan-summary.json").read_text())
    assert summary["failed_inputs"] == 1 and summary["warnings"] >= 1


def test_all_inputs_unreadable(tmp_path):
    assert run("scan", tmp_path / "a", tmp_path / "b", "--out", tmp_path / "o") == cli.EXIT_INPUT


def test_analyze_missing_input(tmp_path):
    assert run("analyze", "--out", tmp_path) == cli.EXIT_INPUT


def test_empty_records_headers_only(tmp_path):
    export = tmp_path / "commits.ndjson"
    export.write_text(json.dumps({"repo": "r", "id": "a", "author_date": "2018-01-01T00:00:00Z",
                                  "committer_date": "2018-01-01T00:00:00Z", "message": "chore",
                                  "root": ["setup.py"]}) + "\n")
    out = tmp_path / "out"
    assert run("report", export, "--out", out) == 0
    reports = read_reports(out)
    for name in ("cwe_counts.csv", "reaction_by_year.csv", "reaction_by_cwe.csv"):
        assert reports[name].count("\n") == 1, name
    assert reports["year_stats.csv"] == "year,vuln_JS,vuln_PY,total_JS,total_PY\n2018,0,0,0,1\n"
    assert json.loads(reports["overlap.json"])["sizes"] == {"only_JS": 0, "only_PY": 0, "shared": 0}


def test_threshold_one_covers_every_cwe(fixture_corpus, tmp_path):
    root, repos, feed = fixture_corpus
    out = tmp_path / "out"
    run("report", *repos, "--nvd-dir", feed.parent, "--out", out, "--threshold", 1)
    counted = {line.split(",")[0] for line in (out / "cwe_counts.csv").read_text().splitlines()[1:]}
    with_dates = {line.split(",")[0] for line in (out / "reaction_by_cwe.csv").read_text().splitlines()[1:]}
    # CWE-264 only ever appears directly, CWE-400 also via CVE-2018-0201
    assert with_dates <= counted
    assert counted - with_dates == set()


def test_include_flags(fixture_corpus, tmp_path):
    root, repos, feed = fixture_corpus
    out = tmp_path / "out"
    run("scan", *repos, "--nvd-dir", feed.parent, "--out", out)
    run("analyze", "--out", out, "--no-include-both", "--include-unknown")
    header = (out / "year_stats.csv").read_text().splitlines()[0]
    assert header == "year,vuln_JS,vuln_PY,vuln_Unknown,total_JS,total_PY,total_Unknown"
    rows = {l.split(",")[0]: l for l in (out / "year_stats.csv").read_text().splitlines()[1:]}
    # jsapp's first commit predates index.js: Unknown, 1 commit, 1 record in 2017
    assert rows["2017"].split(",")[3] == "1" and rows["2017"].split(",")[6] == "1"


def test_years_filter(fixture_corpus, tmp_path):
    root, repos, feed = fixture_corpus
    out = tmp_path / "out"
    run("report", *repos, "--nvd-dir", feed.parent, "--out", out, "--years", "2018-2018")
    years = {l.split(",")[0] for l in (out / "ratio.csv").read_text().splitlines()[1:]}
    assert years == {"2018"}


def test_settings_precedence(tmp_path):
    cfg = tmp_path / "vcm.toml"
    cfg.write_text('out = "from-config"\nthreshold = 7\nthreads = 2\ninputs = ["a"]\n')
    args = cli.build_parser().parse_args(["scan", "--config", str(cfg)])
    s = cli.resolve_settings(args, environ={})
    assert (s["out"], s["threshold"], s["threads"], s["inputs"]) == ("from-config", 7, 2, ["a"])
    s = cli.resolve_settings(args, environ={"VCM_OUT": "from-env", "VCM_THREADS": "3"})
    assert (s["out"], s["threads"]) == ("from-env", 3)
    args = cli.build_parser().parse_args(["scan", "--config", str(cfg), "--out", "from-cli", "b"])
    s = cli.resolve_settings(args, environ={"VCM_OUT": "from-env"})
    assert (s["out"], s["inputs"]) == ("from-cli", ["b"])
    args = cli.build_parser().parse_args(["scan", "x"])
    assert cli.resolve_settings(args, environ={})["out"] == cli.DEFAULTS["out"]


def test_bad_config_is_exit_2(tmp_path):
    cfg = tmp_path / "vcm.toml"
    cfg.write_text("bogus = 1\n")
    assert run("scan", "x", "--config", cfg) == cli.EXIT_CONFIG
    assert run("analyze", "--threshold", 0, "--out", tmp_path) == cli.EXIT_CONFIG


def test_parallel_scan_matches_serial(fixture_corpus, tmp_path):
    root, repos, feed = fixture_corpus
    a, b = tmp_path / "a", tmp_path / "b"
    run("report", *repos, "--nvd-dir", feed.parent, "--out", a)
    run("report", *repos, "--nvd-dir", feed.parent, "--out", b, "--threads", 3)
    for name in report.REPORT_FILES + ("records.ndjson", "totals.csv", "nvd-cache.ndjson"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


# -- fetch-nvd ---------------------------------------------------------------

class FeedServer:
    def __init__(self, root: Path):
        self.root = root
        self.requests: list[str] = []
        outer = self

        class Handler(http.server.SimpleHTTPRequestHandler):
            def log_message(self, *a):
                pass

            def do_GET(self):
                outer.requests.append(self.path)
                super().do_GET()

        self.httpd = http.server.ThreadingHTTPServer(("127.0.0.1", 0), partial(Handler, directory=str(root)))
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()
        self.url = f"http://127.0.0.1:{self.httpd.server_address[1]}"

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def feed_server(tmp_path):
    remote = tmp_path / "remote"
    remote.mkdir()
    for year in (2018, 2019):
        raw = nvd_feed([nvd_item(f"CVE-{year}-{i:04d}") for i in range(1, 4)])
        (remote / f"nvdcve-1.1-{year}.json.gz").write_bytes(gzip.compress(raw, mtime=0))
        sha = hashlib.sha256(raw).hexdigest().upper()
        (remote / f"nvdcve-1.1-{year}.meta").write_text(
            f"lastModifiedDate:2019-01-01T00:00:00-05:00\r\nsize:{len(raw)}\r\nsha256:{sha}\r\n")
    server = FeedServer(remote)
    yield server
    server.close()


def _downloads(server):
    return [p for p in server.requests if p.endswith(".gz")]


def test_fetch_and_idempotent_rerun(feed_server, tmp_path):
    dest = tmp_path / "feeds"
    args = ["fetch-nvd", "--nvd-dir", dest, "--feed-url", feed_server.url, "--feed-years", "2018-2019"]
    assert run(*args) == 0
    assert len(_downloads(feed_server)) == 2
    log = (dest / "feeds.sha256").read_text().splitlines()
    assert [l.split("  ")[1] for l in log] == ["nvdcve-1.1-2018.json.gz", "nvdcve-1.1-2019.json.gz"]
    assert run(*args) == 0
    assert len(_downloads(feed_server)) == 2


def test_corrupted_feed_redownloaded(feed_server, tmp_path):
    dest = tmp_path / "feeds"
    args = ["fetch-nvd", "--nvd-dir", dest, "--feed-url", feed_server.url, "--feed-years", "2018-2019"]
    run(*args)
    target = dest / "nvdcve-1.1-2018.json.gz"
    data = bytearray(target.read_bytes())
    data[len(data) // 2] ^= 0xFF
    target.write_bytes(bytes(data))
    assert run(*args) == 0
    assert _downloads(feed_server)[2:] == ["/nvdcve-1.1-2018.json.gz"]
    assert target.read_bytes() == (feed_server.root / target.name).read_bytes()


def test_network_failure_leaves_feeds(tmp_path):
    dest = tmp_path / "feeds"
    dest.mkdir()
    (dest / "nvdcve-1.1-2018.json.gz").write_bytes(b"old")
    rc = run("fetch-nvd", "--nvd-dir", dest, "--feed-url", "http://127.0.0.1:9", "--feed-years", "2018")
    assert rc == cli.EXIT_NETWORK
    assert (dest / "nvdcve-1.1-2018.json.gz").read_bytes() == b"old"


def test_offline_with_feeds_present(tmp_path):
    dest = tmp_path / "feeds"
    corpus.write_feed(dest / "nvdcve-1.1-2018.json.gz")
    before = sorted(p.name for p in dest.iterdir())
    assert run("fetch-nvd", "--nvd-dir", dest, "--offline", "--feed-years", "2018") == 0
    assert sorted(p.name for p in dest.iterdir()) == before
