"""Command line experiment runner.

    finslerdet VERB --config FILE [--seed S] [--samples M] [--out DIR] [--workers K] [--no-cache]
    finslerdet report [--out DIR] [--require VERB,...]

Each verb writes ``<verb>.json`` (deterministic primary output),
``<verb>.meta.json`` (timestamps, cache status) and, for ``flow`` and
``spectrum``, a CSV file. Results are cached under ``DIR/.cache`` keyed by
a content hash of the verb, its parameters and the field sources.
"""

from __future__ import annotations

import argparse
import json
import platform
import shutil
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from .. import __version__, errors
from ..errors import CheckFailedError, ConfigError, FinslerError, MissingArtifactsError
from .config import VERBS, ExperimentConfig, load_config
from .output import SCHEMA_VERSION, atomic_write, dumps
from .verbs import VERB_RUNNERS, Outcome, recheck_invariant

__all__ = ["main", "run_experiment", "emit_report", "load_config", "ExperimentConfig"]


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="finslerdet", description="Randers geometry experiments")
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--config", help="experiment config file")
    p.add_argument("--seed", type=int, help="overrides [run] seed")
    p.add_argument("--samples", type=int, help="overrides [run] samples")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--workers", type=int, default=1, help="threads for Monte Carlo averaging")
    p.add_argument("--no-cache", action="store_true", help="ignore and do not write the cache")
    p.add_argument("--require", default="", help="report: comma separated verbs that must be present")
    return p


def versions() -> dict:
    return {"finslerdet": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def primary_document(verb: str, cfg: ExperimentConfig, key: str, outcome: Outcome) -> dict:
    return {"schema_version": SCHEMA_VERSION, "verb": verb, "config_hash": key,
            "seed": cfg.seed, "samples": cfg.samples, "pass": outcome.passed,
            "checks": outcome.checks, "result": outcome.result}


def _cache_load(cache_dir: Path, verb: str, cfg: ExperimentConfig, key: str):
    entry = cache_dir / key
    primary = entry / f"{verb}.json"
    if not primary.is_file():
        return None
    name, ok = recheck_invariant(cfg, key)
    if not ok:
        shutil.rmtree(entry, ignore_errors=True)
        return None
    files = {p.name: p.read_text(encoding="utf-8") for p in sorted(entry.iterdir()) if p.is_file()}
    return files, name


def run_experiment(verb: str, cfg: ExperimentConfig, out_dir: Path, workers: int = 1,
                   use_cache: bool = True) -> int:
    """Run one verb, write its artifacts and return the exit status."""
    if verb == "report":
        return emit_report(out_dir)[1]
    started = time.time()
    opts = argparse.Namespace(workers=max(1, workers))
    key = cfg.content_hash(verb)
    cache_dir = out_dir / ".cache"
    cached = _cache_load(cache_dir, verb, cfg, key) if use_cache else None
    meta = {"verb": verb, "config_hash": key,
            "config_path": str(cfg.path) if cfg.path else None,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
            "workers": opts.workers, "versions": versions()}
    if cached is not None:
        files, invariant = cached
        meta["cache"] = "hit"
        meta["cache_recheck"] = invariant
        doc = json.loads(files[f"{verb}.json"])
        passed, failure = doc["pass"], None
    else:
        outcome = VERB_RUNNERS[verb](cfg, opts)
        doc = primary_document(verb, cfg, key, outcome)
        files = {f"{verb}.json": dumps(doc), **outcome.files}
        passed, failure = outcome.passed, outcome.failure
        meta["cache"] = "miss" if use_cache else "disabled"
        if use_cache:
            for name, text in files.items():
                atomic_write(cache_dir / key / name, text)
            atomic_write(cache_dir / key / "failure.txt", failure.__name__ if not passed else "")
    for name, text in files.items():
        if name != "failure.txt":
            atomic_write(out_dir / name, text)
    meta["elapsed_s"] = time.time() - started
    meta["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    atomic_write(out_dir / f"{verb}.meta.json", dumps(meta))
    if passed:
        return 0
    if failure is None:
        failure = getattr(errors, files.get("failure.txt", "") or "CheckFailedError", CheckFailedError)
    failed = [c["name"] for c in doc["checks"] if not c["pass"]]
    print(f"finslerdet {verb}: failed checks: {', '.join(failed)}", file=sys.stderr)
    return failure.exit_code


def emit_report(out_dir: Path, require: tuple[str, ...] = ()) -> tuple[dict, int]:
    """Aggregate every primary JSON output in ``out_dir`` into ``report.json``."""
    out_dir = Path(out_dir)
    entries, missing = [], []
    paths = sorted(out_dir.glob("*.json")) if out_dir.is_dir() else []
    for path in paths:
        if path.name.endswith(".meta.json") or path.name == "report.json":
            continue
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            checks = doc["checks"]
            entry = {"file": path.name, "verb": doc["verb"], "pass": bool(doc["pass"]),
                     "config_hash": doc.get("config_hash"), "seed": doc.get("seed"),
                     "schema_version": doc.get("schema_version"),
                     "checks": [{k: c.get(k) for k in ("name", "pass", "value", "tolerance", "relation")}
                                for c in checks]}
        except (OSError, ValueError, KeyError, TypeError) as exc:
            missing.append({"artifact": path.name, "reason": f"unreadable: {exc}"})
            continue
        entries.append(entry)
        for companion in {"flow": ["flow.csv"], "spectrum": ["spectrum.csv"]}.get(entry["verb"], []):
            if not (out_dir / companion).is_file():
                missing.append({"artifact": companion, "reason": "missing companion file"})
    present = {e["verb"] for e in entries}
    for verb in require:
        if verb not in present:
            missing.append({"artifact": f"{verb}.json", "reason": "required output not found"})
    if not entries:
        missing.append({"artifact": "*.json", "reason": "no command outputs in directory"})
    summary = {
        "schema_version": SCHEMA_VERSION,
        "entry_count": len(entries),
        "entries": entries,
        "missing": missing,
        "pass": bool(entries) and not missing and all(e["pass"] for e in entries),
        "check_count": sum(len(e["checks"]) for e in entries),
        "failed_checks": [f"{e['verb']}:{c['name']}" for e in entries for c in e["checks"]
                          if not c["pass"]],
        "provenance": {"config_hashes": sorted({e["config_hash"] for e in entries
                                                if e["config_hash"]}),
                       "seeds": sorted({e["seed"] for e in entries if e["seed"] is not None}),
                       "versions": versions()},
    }
    if out_dir.is_dir() or not entries:
        atomic_write(out_dir / "report.json", dumps(summary))
    if missing:
        status = MissingArtifactsError.exit_code
    elif not summary["pass"]:
        status = CheckFailedError.exit_code
    else:
        status = 0
    return summary, status


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    out_dir = Path(args.out)
    try:
        if args.verb == "report":
            require = tuple(v for v in args.require.split(",") if v)
            _, status = emit_report(out_dir, require)
            return status
        if not args.config:
            raise ConfigError(f"{args.verb} needs --config")
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.samples is not None:
            if args.samples < 1:
                raise ConfigError("--samples must be positive")
            cfg.samples = args.samples
        return run_experiment(args.verb, cfg, out_dir, args.workers, not args.no_cache)
    except FinslerError as exc:
        print(f"finslerdet {args.verb}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
