"""Build simulations from configs, run them, report results.  CLI entry point.

One run produces a directory of CSVs (latency, intervals, alloc_trace, windows,
policy_trace, transfers, estimators) plus a report.json summarizing SLO
verdicts and bandwidth.  Sweeps run seeds sequentially and aggregate.
"""

from __future__ import annotations

import argparse
import gc
import json
import os
import sys
from dataclasses import dataclass

from .backend import Backend, Tenant
from .baselines import (CongestionAllocator, FeedbackAllocator,
                        PriorityAllocator, StaticAllocator)
from .config import (ALLOCATORS, ConfigError, ExperimentConfig, SCENARIOS,
                     parse_config, scenario)
from .device import Device, ServiceEstimator
from .metrics import MetricsHub, write_all
from .qwin_allocator import QwinAllocator
from .sim_core import SEC, Engine, EventKind, make_np_stream, make_stream
from .workload import WorkloadSource

# RNG stream layout: one device stream, then one stream per tenant in config
# order.  Fixed ids (not hashes) keep runs byte-reproducible.
DEVICE_STREAM = 0
FIRST_TENANT_STREAM = 1


@dataclass
class Simulation:
    """A fully wired, not-yet-started run."""

    cfg: ExperimentConfig
    seed: int
    run_id: str
    engine: Engine
    device: Device
    hub: MetricsHub
    backend: Backend
    allocator: object


def _dominant_size(spec) -> int:
    best_s, best_w = spec.sizes[0]
    for s, w in spec.sizes[1:]:
        if w > best_w:
            best_s, best_w = s, w
    return best_s


def _make_allocator(cfg: ExperimentConfig):
    a = cfg.allocator
    if a.kind == "qwin":
        return QwinAllocator(a.qwin)
    if a.kind == "static":
        return StaticAllocator(a.static)
    if a.kind == "priority":
        return PriorityAllocator()
    if a.kind == "shenango":
        return CongestionAllocator(a.shenango)
    if a.kind == "cake":
        return FeedbackAllocator(a.cake)
    raise ValueError(f"unknown allocator kind {a.kind!r}")


def _make_estimator(cfg: ExperimentConfig, spec, slo_q: float) -> ServiceEstimator:
    # Until real completions arrive, the estimator answers with the device's
    # analytic mean/tail at the tenant's dominant request shape.
    size = _dominant_size(spec)
    is_read = spec.read_ratio >= 0.5
    e = cfg.estimators
    q = slo_q if e.scope == "tenant" else 0.999
    return ServiceEstimator(
        alpha=e.ewma_alpha, window=e.hist_window, quantile=q,
        nominal_mean_ns=cfg.device.nominal_mean_ns(is_read, size),
        nominal_tail_ns=round(cfg.device.nominal_quantile_ns(is_read, size, q)))


def build(cfg: ExperimentConfig, seed: int | None = None) -> Simulation:
    """Wire engine, device, tenants, and allocator for one run."""
    seed = cfg.seed if seed is None else seed
    run_id = cfg.run_id(seed)
    engine = Engine()
    device = Device(cfg.device, make_np_stream(seed, DEVICE_STREAM), engine)
    hub = MetricsHub(run_id, cfg.interval_ns, cfg.effective_warmup_ns)
    backend = Backend(engine, device, cfg.pool_total, hub,
                      window_end=cfg.window_end)
    shared_est = None
    for i, tc in enumerate(cfg.tenants):
        spec = tc.spec()
        lc = tc.tenant_class == "lc"
        source = WorkloadSource(spec, make_stream(seed, FIRST_TENANT_STREAM + i),
                                tc.label, lc)
        if lc:
            est = shared_est
            if est is None:
                est = _make_estimator(cfg, spec, tc.slo.quantile)
                if cfg.estimators.scope == "device":
                    shared_est = est
            tenant = Tenant(tc.label, True, slo_q=tc.slo.quantile,
                            slo_ns=tc.slo.latency_ns)
            backend.add_tenant(tenant, source, est)
        else:
            backend.add_tenant(Tenant(tc.label, False), source, None)
    allocator = _make_allocator(cfg)
    backend.allocator = allocator
    allocator.setup(backend)
    return Simulation(cfg=cfg, seed=seed, run_id=run_id, engine=engine,
                      device=device, hub=hub, backend=backend,
                      allocator=allocator)


def _start_metric_ticks(sim: Simulation):
    """Periodic tick: snapshot estimators, then close the interval."""
    engine, hub, cfg = sim.engine, sim.hub, sim.cfg
    interval = cfg.interval_ns
    end = cfg.duration_ns
    lc_tenants = sim.backend.lc_tenants

    def tick(_payload, now):
        for t in lc_tenants:
            est = t.estimator
            hub.estimator_snapshot(now, t.label, est.mean_ns, est.tail_ns)
        hub.flush_interval(now)
        nxt = now + interval
        if nxt <= end:
            engine.schedule(nxt, EventKind.METRIC_TICK, tick)

    engine.schedule(min(interval, end), EventKind.METRIC_TICK, tick)


def make_report(sim: Simulation) -> dict:
    """Summarize a finished run: SLO verdicts, bandwidth, event accounting."""
    cfg, hub, backend = sim.cfg, sim.hub, sim.backend
    warm = cfg.effective_warmup_ns
    span_s = (cfg.duration_ns - warm) / SEC
    tenants = {}
    all_met = True
    for t in backend.tenants:
        tm = hub.tenants[t.label]
        entry = {
            "class": "lc" if t.lc else "be",
            "requests": tm.t_n,
            "bandwidth_bytes_per_s": (tm.c_bytes / span_s) if span_s > 0 else 0.0,
        }
        if t.lc:
            tail = tm.cumulative_quantile(t.slo_q)
            met = tail is not None and tail <= t.slo_ns
            entry["slo_quantile"] = t.slo_q
            entry["slo_ns"] = t.slo_ns
            entry["tail_ns"] = tail
            entry["slo_met"] = met
            entry["windows"] = t.windows_established
            all_met = all_met and met
        tenants[t.label] = entry
    return {
        "run_id": sim.run_id,
        "name": cfg.name,
        "allocator": cfg.allocator_id(),
        "seed": sim.seed,
        "duration_s": cfg.duration_ns / SEC,
        "warmup_s": warm / SEC,
        "pool_total": cfg.pool_total,
        "completed": backend.completed,
        "events": sim.engine.stats.as_dict(),
        "slo_met_all": all_met,
        "tenants": tenants,
    }


@dataclass
class RunResult:
    run_id: str
    report: dict
    paths: dict          # csv name -> path ({} when nothing was written)
    sim: Simulation      # kept for in-memory inspection by tests/notebooks


def run_experiment(cfg: ExperimentConfig, seed: int | None = None,
                   out_dir: str | None = None, write: bool = True) -> RunResult:
    """Run one configuration to completion and (optionally) write artifacts."""
    sim = build(cfg, seed)
    _start_metric_ticks(sim)
    sim.backend.start()
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        sim.engine.run_until(cfg.duration_ns)
    finally:
        if was_enabled:
            gc.enable()
    sim.hub.finalize(cfg.duration_ns)
    sim.backend.check_invariants()
    report = make_report(sim)
    paths = {}
    if write:
        run_dir = os.path.join(out_dir if out_dir is not None else cfg.out_dir,
                               sim.run_id)
        paths = write_all(sim.hub, run_dir)
        rp = os.path.join(run_dir, "report.json")
        with open(rp, "w") as f:
            json.dump(report, f, indent=2, sort_keys=True)
            f.write("\n")
        paths["report.json"] = rp
    return RunResult(run_id=sim.run_id, report=report, paths=paths, sim=sim)


def sweep(cfg: ExperimentConfig, seeds, out_dir: str | None = None,
          write: bool = True) -> dict:
    """Run the same config across seeds; aggregate SLO verdicts and bandwidth."""
    results = [run_experiment(cfg, seed=s, out_dir=out_dir, write=write)
               for s in seeds]
    agg: dict = {"name": cfg.name, "allocator": cfg.allocator_id(),
                 "seeds": list(seeds), "runs": {}, "tenants": {}}
    for r in results:
        agg["runs"][r.run_id] = r.report["slo_met_all"]
    for tc in cfg.tenants:
        entries = [r.report["tenants"][tc.label] for r in results]
        t_agg = {
            "class": entries[0]["class"],
            "bandwidth_bytes_per_s": [e["bandwidth_bytes_per_s"] for e in entries],
        }
        if tc.tenant_class == "lc":
            t_agg["tail_ns"] = [e["tail_ns"] for e in entries]
            t_agg["slo_met_count"] = sum(bool(e["slo_met"]) for e in entries)
        agg["tenants"][tc.label] = t_agg
    agg["results"] = results
    return agg


def compare_allocators(base: dict, kinds, seeds, out_dir: str | None = None,
                       write: bool = False) -> dict:
    """Sweep the same scenario under several allocators; {kind: aggregate}."""
    out = {}
    for kind in kinds:
        d = dict(base)
        alloc = dict(d.get("allocator", {}) or {})
        alloc["kind"] = kind
        d["allocator"] = alloc
        cfg = parse_config(d)
        out[kind] = sweep(cfg, seeds, out_dir=out_dir, write=write)
    return out


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def _parse_seeds(text: str):
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise argparse.ArgumentTypeError("seed range must be low..high")
        return list(range(lo, hi + 1))
    return [int(s) for s in text.split(",")]


def _build_arg_parser():
    p = argparse.ArgumentParser(
        prog="qwinsim",
        description="Discrete-event simulator of SLO-aware core allocation "
                    "for a shared storage backend.")
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--scenario", choices=SCENARIOS,
                   help="start from a named built-in scenario")
    p.add_argument("--seed", type=int, help="single run seed")
    p.add_argument("--seeds", type=_parse_seeds,
                   help="seed sweep: N..M (inclusive) or comma list")
    p.add_argument("--allocator", choices=ALLOCATORS,
                   help="core allocation policy to run")
    p.add_argument("--pin", choices=("conservative", "aggressive", "slo_aware"),
                   help="pin every tenant's adaptive policy (qwin only)")
    p.add_argument("--duration", type=float, metavar="S",
                   help="simulated seconds")
    p.add_argument("--warmup", type=float, metavar="S",
                   help="seconds excluded from cumulative stats")
    p.add_argument("--out", help="output directory (default from config)")
    p.add_argument("--validate-only", action="store_true",
                   help="parse and validate, run nothing")
    return p


def _assemble_config(args) -> ExperimentConfig:
    """Precedence: scenario defaults < config file < command-line flags."""
    base: dict = {}
    if args.scenario:
        base = scenario(args.scenario)
    if args.config:
        import yaml

        with open(args.config) as f:
            loaded = yaml.safe_load(f) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(["config root must be a mapping"])
        base.update(loaded)
    if not base:
        raise ConfigError(["nothing to run: pass --config and/or --scenario"])
    if args.seed is not None:
        base["seed"] = args.seed
    if args.duration is not None:
        base["duration_s"] = args.duration
    if args.warmup is not None:
        base["warmup_s"] = args.warmup
    if args.out is not None:
        base["out_dir"] = args.out
    if args.allocator is not None or args.pin is not None:
        alloc = dict(base.get("allocator", {}) or {})
        if args.allocator is not None:
            alloc["kind"] = args.allocator
        if args.pin is not None:
            alloc["kind"] = alloc.get("kind", "qwin")
            q = dict(alloc.get("qwin", {}) or {})
            q["pin"] = args.pin
            alloc["qwin"] = q
        base["allocator"] = alloc
    return parse_config(base)


def _print_report(report: dict, stream):
    print(f"run {report['run_id']}: allocator={report['allocator']} "
          f"seed={report['seed']} completed={report['completed']}", file=stream)
    for label, t in report["tenants"].items():
        if t["class"] == "lc":
            tail = t["tail_ns"]
            tail_ms = "n/a" if tail is None else f"{tail / 1e6:.3f}ms"
            verdict = "MET" if t["slo_met"] else "MISSED"
            print(f"  {label} (lc): p{t['slo_quantile'] * 100:g} = {tail_ms} "
                  f"vs SLO {t['slo_ns'] / 1e6:g}ms -> {verdict}", file=stream)
        else:
            mbs = t["bandwidth_bytes_per_s"] / 1e6
            print(f"  {label} (be): {mbs:.1f} MB/s post-warmup", file=stream)


def main(argv=None) -> int:
    args = _build_arg_parser().parse_args(argv)
    try:
        cfg = _assemble_config(args)
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return 2
    except OSError as e:
        print(f"cannot read config: {e}", file=sys.stderr)
        return 2
    if args.validate_only:
        print(f"config OK: {cfg.run_id()} "
              f"({len(cfg.lc_tenants())} lc + {len(cfg.be_tenants())} be tenants, "
              f"{cfg.pool_total} cores)")
        return 0
    if args.seeds:
        agg = sweep(cfg, args.seeds, out_dir=args.out)
        for r in agg["results"]:
            _print_report(r.report, sys.stdout)
        for label, t in agg["tenants"].items():
            if t["class"] == "lc":
                print(f"{label}: SLO met in {t['slo_met_count']}/"
                      f"{len(agg['seeds'])} seeds")
        return 0
    result = run_experiment(cfg, out_dir=args.out)
    _print_report(result.report, sys.stdout)
    out_dir = os.path.dirname(result.paths["report.json"])
    print(f"artifacts: {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
