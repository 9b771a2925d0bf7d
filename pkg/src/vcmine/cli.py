"""``vcm`` command line: scan, analyze, report, fetch-nvd.

Settings resolve as CLI flags > ``VCM_*`` environment variables > config file
(TOML ``key = value``) > built-in defaults.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import fetch, ingest, nvd, report, store
from .analytics import RecordBuilder

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("vcmine")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_NETWORK = 4

DEFAULTS = {
    "inputs": [],
    "out": "vcm-out",
    "nvd_dir": None,
    "cache": None,
    "date_field": "committer",
    "since": None,
    "until": None,
    "branches": "all-refs",
    "global_dedup": False,
    "threshold": 150,
    "include_both": True,
    "include_unknown": False,
    "years": None,
    "threads": 1,
    "feed_url": fetch.DEFAULT_FEED_URL,
    "feed_years": None,
    "offline": False,
}

ENV_VARS = {"VCM_NVD_DIR": "nvd_dir", "VCM_OUT": "out", "VCM_THREADS": "threads"}


class ConfigError(ValueError):
    pass


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--out", help="output directory (env VCM_OUT)")
    common.add_argument("--nvd-dir", dest="nvd_dir", help="directory of NVD JSON feeds (env VCM_NVD_DIR)")
    common.add_argument("--cache", help="nvd-cache.ndjson to use instead of building from feeds")
    common.add_argument("--threads", type=int, help="worker threads (env VCM_THREADS)")
    common.add_argument("-v", "--verbose", action="store_true")

    scan_opts = argparse.ArgumentParser(add_help=False)
    scan_opts.add_argument("inputs", nargs="*", help="git repositories and/or commit-export NDJSON files")
    scan_opts.add_argument("--date-field", dest="date_field", choices=ingest.DATE_FIELDS)
    scan_opts.add_argument("--since", help="ignore commits dated before this UTC timestamp")
    scan_opts.add_argument("--until", help="ignore commits dated after this UTC timestamp")
    scan_opts.add_argument("--branches", choices=ingest.BRANCH_POLICIES)
    scan_opts.add_argument("--global-dedup", dest="global_dedup", action="store_true", default=None,
                           help="deduplicate commits shared between repositories")

    analyze_opts = argparse.ArgumentParser(add_help=False)
    analyze_opts.add_argument("--threshold", type=int, help="top-CWE reference threshold (default 150)")
    analyze_opts.add_argument("--include-both", dest="include_both", action=argparse.BooleanOptionalAction,
                              help="count Both-classified revisions as JS and PY (default on)")
    analyze_opts.add_argument("--include-unknown", dest="include_unknown",
                              action=argparse.BooleanOptionalAction,
                              help="add Unknown-language revisions as a third series")
    analyze_opts.add_argument("--years", help="restrict analysis to a year range, e.g. 2010-2018")

    p = argparse.ArgumentParser(prog="vcm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("scan", parents=[common, scan_opts], help="extract mitigation records")
    sub.add_parser("analyze", parents=[common, analyze_opts], help="compute reports from scan output")
    sub.add_parser("report", parents=[common, scan_opts, analyze_opts], help="scan then analyze")
    f = sub.add_parser("fetch-nvd", parents=[common], help="download yearly NVD feeds")
    f.add_argument("--feed-url", dest="feed_url")
    f.add_argument("--feed-years", dest="feed_years", help="year range to fetch, e.g. 2015-2019")
    f.add_argument("--offline", action="store_true", default=None,
                   help="do not touch the network; only check feeds already present")
    return p


def resolve_settings(args: argparse.Namespace, environ=os.environ) -> dict:
    settings = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config, "rb") as fp:
                cfg = tomllib.load(fp)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"config file {args.config}: {exc}") from None
        unknown = set(cfg) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        settings.update(cfg)
    for var, key in ENV_VARS.items():
        if environ.get(var):
            settings[key] = environ[var]
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None and value != []:
            settings[key] = value
    return _coerce(settings)


def _year_range(text) -> tuple[int, int] | None:
    if text is None:
        return None
    if isinstance(text, (list, tuple)) and len(text) == 2:
        lo, hi = int(text[0]), int(text[1])
    else:
        lo_s, _, hi_s = str(text).partition("-")
        lo = int(lo_s)
        hi = int(hi_s) if hi_s else lo
    if lo > hi:
        raise ConfigError(f"empty year range {text!r}")
    return lo, hi


def _coerce(s: dict) -> dict:
    try:
        s["threads"] = int(s["threads"])
        s["threshold"] = int(s["threshold"])
        s["years"] = _year_range(s["years"])
        s["feed_years"] = _year_range(s["feed_years"])
        for key in ("since", "until"):
            if s[key] is not None and not hasattr(s[key], "tzinfo"):
                s[key] = store.parse_utc(str(s[key]))
        if isinstance(s["inputs"], str):
            s["inputs"] = [s["inputs"]]
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if s["threshold"] < 1:
        raise ConfigError("threshold must be at least 1")
    if s["threads"] < 1:
        raise ConfigError("threads must be at least 1")
    return s


# -- scan --------------------------------------------------------------------

def _load_cache(s: dict, out: Path) -> nvd.NvdCache:
    if s["cache"]:
        return nvd.NvdCache.load(s["cache"])
    if s["nvd_dir"]:
        files = nvd.feed_files(s["nvd_dir"])
        if not files:
            log.warning("no feed files in %s", s["nvd_dir"])
        return nvd.build_cache(files, threads=s["threads"])
    if (out / report.CACHE_FILE).exists():
        return nvd.NvdCache.load(out / report.CACHE_FILE)
    log.warning("no NVD data given; every CVE will be unresolved")
    return nvd.NvdCache()


def _scan_input(spec: str, cfg: ingest.ScanConfig, cache: nvd.NvdCache,
                seen: set | None) -> tuple[RecordBuilder, list, ingest.IngestReport]:
    path = Path(spec)
    builder = RecordBuilder(cache, cfg.date_field)
    records = []
    rep = ingest.IngestReport()
    if path.is_dir():
        commits = ingest.scan_repository(path, cfg, report=rep, seen=seen)
        for commit in commits:
            if (rec := builder.add(commit)) is not None:
                records.append(rec)
    elif path.is_file():
        with open(path, encoding="utf-8") as fp:
            for commit in ingest.read_export(fp, rep, cfg):
                if (rec := builder.add(commit)) is not None:
                    records.append(rec)
    else:
        raise FileNotFoundError(f"{spec}: no such repository or export file")
    return builder, records, rep


def cmd_scan(s: dict) -> int:
    if not s["inputs"]:
        raise ConfigError("scan needs at least one input (repository path or export file)")
    out = Path(s["out"])
    try:
        cfg = ingest.ScanConfig(s["date_field"], s["since"], s["until"], s["branches"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        cache = _load_cache(s, out)
    except (OSError, ValueError) as exc:
        log.error("cannot load NVD data: %s", exc)
        return EXIT_INPUT
    seen = set() if s["global_dedup"] else None
    threads = 1 if seen is not None else s["threads"]

    def run(spec):
        try:
            return spec, _scan_input(spec, cfg, cache, seen), None
        except (OSError, ingest.ScanError, store.SchemaError, UnicodeDecodeError) as exc:
            return spec, None, exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, s["inputs"]))
    else:
        results = [run(spec) for spec in s["inputs"]]

    totals: Counter = Counter()
    records = []
    summary = {"inputs": {}, "warnings": 0, "failed_inputs": 0, "commits": 0,
               "records": 0, "false_positives": 0, "skipped_lines": 0}
    for spec, res, err in results:
        if err is not None:
            log.warning("input %s unreadable: %s", spec, err)
            summary["inputs"][spec] = {"error": str(err)}
            summary["failed_inputs"] += 1
            summary["warnings"] += 1
            continue
        builder, recs, rep = res
        totals.update(builder.totals)
        records.extend(recs)
        summary["inputs"][spec] = {"commits": builder.commits, "records": len(recs),
                                   "skipped": rep.skipped}
        summary["commits"] += builder.commits
        summary["records"] += len(recs)
        summary["false_positives"] += builder.false_positives
        summary["skipped_lines"] += rep.skipped
        summary["warnings"] += len(rep.warnings)

    if summary["failed_inputs"] == len(s["inputs"]):
        log.error("no input could be read")
        return EXIT_INPUT

    out.mkdir(parents=True, exist_ok=True)
    report.write_records(out / report.RECORDS_FILE, records)
    report.write_text(out / report.TOTALS_FILE, report.totals_csv(totals))
    cache_out = out / report.CACHE_FILE
    if not (s["cache"] and Path(s["cache"]).resolve() == cache_out.resolve()):
        cache.save(cache_out)
    report.write_text(out / "scan-summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    log.info("%d commits, %d mitigation records, %d warnings",
             summary["commits"], summary["records"], summary["warnings"])
    return EXIT_OK


# -- analyze -----------------------------------------------------------------

def cmd_analyze(s: dict) -> int:
    out = Path(s["out"])
    needed = [out / report.RECORDS_FILE, out / report.TOTALS_FILE,
              Path(s["cache"]) if s["cache"] else out / report.CACHE_FILE]
    missing = [str(p) for p in needed if not p.is_file()]
    if missing:
        log.error("missing input files: %s", ", ".join(missing))
        return EXIT_INPUT
    try:
        cache = nvd.NvdCache.load(needed[2])
        records = report.read_records(needed[0], cache)
        totals = report.read_totals(needed[1])
    except (OSError, ValueError, KeyError) as exc:
        log.error("cannot read scan output: %s", exc)
        return EXIT_INPUT
    opts = report.AnalyzeOptions(s["threshold"], s["include_both"], s["include_unknown"], s["years"])
    report.write_reports(out, report.analyze(records, totals, cache, opts))
    log.info("wrote %d report files to %s", len(report.REPORT_FILES), out)
    return EXIT_OK


def cmd_report(s: dict) -> int:
    rc = cmd_scan(s)
    if rc != EXIT_OK:
        return rc
    s = dict(s, cache=None)
    return cmd_analyze(s)


# -- fetch -------------------------------------------------------------------

def cmd_fetch_nvd(s: dict) -> int:
    dest = s["nvd_dir"]
    if not dest:
        raise ConfigError("fetch-nvd needs --nvd-dir (or VCM_NVD_DIR)")
    if s["feed_years"]:
        years = list(range(s["feed_years"][0], s["feed_years"][1] + 1))
    else:
        years = fetch.default_years()
    if s["offline"]:
        present = [fetch.feed_name(y) for y in years if (Path(dest) / fetch.feed_name(y)).exists()]
        log.info("offline: %d of %d feeds present in %s", len(present), len(years), dest)
        return EXIT_OK
    try:
        res = fetch.fetch_feeds(dest, years, s["feed_url"])
    except fetch.FetchError as exc:
        log.error("fetch failed: %s", exc)
        return EXIT_NETWORK
    log.info("downloaded %d feeds, %d unchanged", len(res.downloaded), len(res.unchanged))
    return EXIT_OK


COMMANDS = {"scan": cmd_scan, "analyze": cmd_analyze, "report": cmd_report,
            "fetch-nvd": cmd_fetch_nvd}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve_settings(args)
        return COMMANDS[args.command](settings)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"vcm: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
