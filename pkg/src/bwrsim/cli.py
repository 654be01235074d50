"""Command line: ``bwrsim run`` for one scenario, ``bwrsim matrix`` for modes x seeds."""
from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .bwr import BwrCodecError
from .kernel import SchedulingError
from .lte.enb import ModelError
from .metrics import FILTERS, paired_gain, summarize
from .scenario import MODES, ConfigError, Scenario, apply, load
from .system import RunResult, round_floats, run, summary_document, write_outputs

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MODEL = 3


class ModelViolation(RuntimeError):
    pass


def _scenario(args) -> Scenario:
    scn = load(args.config, tuple(args.set or ()))
    # dedicated flags sit on top of file values and --set overrides
    if getattr(args, "mode", None) is not None:
        apply(scn, "mode", args.mode)
    if getattr(args, "seed", None) is not None:
        apply(scn, "seed", args.seed)
    if args.duration_ms is not None:
        apply(scn, "duration_ms", float(args.duration_ms))
    return scn.validate()


def _checked(result: RunResult) -> RunResult:
    c = result.conservation
    if not c.ok:
        raise ModelViolation(f"conservation failed at packet {c.first_bad_id}: {c.reason}")
    return result


def cmd_run(args) -> int:
    scn = _scenario(args)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError("--out", f"cannot create {out}: {exc}") from None
    trace = open(out / "events.tsv", "w") if args.trace_events else None
    try:
        result = run(scn, trace=trace, trace_maps=args.trace_maps)
    finally:
        if trace is not None:
            trace.close()
    write_outputs(result, out)
    _checked(result)
    s = summarize(result.records)
    if s["count"]:
        print(f"{scn.mode} seed={scn.seed}: {s['count']} packets, "
              f"e2e avg {s['e2e']['avg']:.3f} ms, docsis_only avg {s['docsis_only']['avg']:.3f} ms")
    else:
        print(f"{scn.mode} seed={scn.seed}: 0 packets")
    return EXIT_OK


def parse_seeds(text: str) -> list[int]:
    """``"1,2,5"`` or ``"1-10"`` or a mix of both."""
    seeds: list[int] = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        lo, dash, hi = part.partition("-")
        try:
            seeds.extend(range(int(lo), int(hi) + 1) if dash else [int(part)])
        except ValueError:
            raise ConfigError("--seeds", f"cannot parse {part!r}") from None
    if not seeds:
        raise ConfigError("--seeds", "empty seeds list")
    return seeds


def _run_one(scn: Scenario) -> RunResult:
    return run(scn)


def run_matrix(base: Scenario, modes: Sequence[str], seeds: Sequence[int],
               jobs: int = 1) -> dict:
    if not seeds:
        raise ConfigError("--seeds", "empty seeds list")
    if not modes:
        raise ConfigError("--modes", "empty modes list")
    for m in modes:
        if m not in MODES:
            raise ConfigError("--modes", f"{m!r} not one of {', '.join(MODES)}")
    jobs_list = []
    for mode in modes:
        for seed in seeds:
            jobs_list.append(_copy_with(base, mode=mode, seed=seed))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, jobs_list))
    else:
        results = [_run_one(s) for s in jobs_list]
    by_key = {(r.scenario.mode, r.scenario.seed): _checked(r) for r in results}

    doc: dict = {"modes": list(modes), "seeds": list(seeds), "per_seed": {}, "pooled": {},
                 "paired_gain": {}}
    for mode in modes:
        pooled = []
        doc["per_seed"][mode] = {}
        for seed in seeds:
            r = by_key[(mode, seed)]
            pooled.extend(r.records)
            doc["per_seed"][mode][str(seed)] = summary_document(r)["summary"][mode]
        doc["pooled"][mode] = {f: summarize(pooled, f) for f in FILTERS}
    if "bwr_no_flush" in modes and "bwr_flush" in modes:
        per_seed = {str(seed): paired_gain(by_key[("bwr_no_flush", seed)].records,
                                           by_key[("bwr_flush", seed)].records)
                    for seed in seeds}
        doc["paired_gain"] = {
            "segment": "docsis_only", "filter": "harq_affected", "per_seed": per_seed,
            "pooled": _pooled_gain(by_key, seeds),
        }
    return round_floats(doc)


def _pooled_gain(by_key, seeds) -> dict:
    # packet ids repeat across seeds, so pair within a seed before pooling
    gains = []
    for seed in seeds:
        after = {r.id: r for r in by_key[("bwr_flush", seed)].records}
        for r in by_key[("bwr_no_flush", seed)].records:
            if r.harq_affected and r.id in after:
                gains.append((r.segment_us("docsis_only")
                              - after[r.id].segment_us("docsis_only")) / 1000.0)
    if not gains:
        return {"count": 0}
    return {"count": len(gains), "min": min(gains), "avg": sum(gains) / len(gains),
            "max": max(gains)}


def _copy_with(base: Scenario, **changes) -> Scenario:
    scn = copy.deepcopy(base)
    for k, v in changes.items():
        setattr(scn, k, v)
    return scn.validate()


def cmd_matrix(args) -> int:
    base = _scenario(args)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    seeds = parse_seeds(args.seeds)
    doc = run_matrix(base, modes, seeds, args.jobs)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError("--out", f"cannot create {out}: {exc}") from None
    (out / "matrix.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    for mode in modes:
        s = doc["pooled"][mode]["harq_affected"]
        extra = f", harq_affected docsis_only avg {s['docsis_only']['avg']:.3f} ms" if s["count"] else ""
        print(f"{mode}: {doc['pooled'][mode]['all']['count']} packets{extra}")
    if doc["paired_gain"]:
        g = doc["paired_gain"]["pooled"]
        if g["count"]:
            print(f"paired docsis_only gain (no_flush - flush): avg {g['avg']:.3f} ms "
                  f"over {g['count']} packets")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bwrsim", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH", help="scenario TOML file")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
        sp.add_argument("--duration-ms", type=float)
        sp.add_argument("--out", default="out", metavar="DIR")

    r = sub.add_parser("run", help="run one scenario")
    common(r)
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--seed", type=int)
    r.add_argument("--trace-events", action="store_true", help="write events.tsv")
    r.add_argument("--trace-maps", action="store_true", help="write maps.txt")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("matrix", help="run every (mode, seed) pair")
    common(m)
    m.add_argument("--modes", default=",".join(MODES))
    m.add_argument("--seeds", default="1-10", help="e.g. 1-10 or 1,4,7")
    m.add_argument("--jobs", type=int, default=1, help="worker processes")
    m.set_defaults(func=cmd_matrix)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"bwrsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModelViolation, ModelError, SchedulingError, BwrCodecError) as exc:
        print(f"bwrsim: model violation: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
