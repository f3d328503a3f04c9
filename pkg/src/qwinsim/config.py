"""Experiment configuration: schema, validation, YAML round-trip, scenarios.

A config is a plain hierarchical mapping (YAML on disk).  Times are given in
natural units (seconds, milliseconds, microseconds, as the key names say) and
normalized to integer nanoseconds internally.  parse(serialize(cfg)) == cfg.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .baselines import CongestionParams, FeedbackParams, StaticParams
from .device import DeviceParams
from .qwin_allocator import PolicyParams, POLICIES
from .workload import Burst, PRESETS, PRESET_CLASS, WorkloadSpec, CLOSED, OPEN

ALLOCATORS = ("qwin", "static", "priority", "shenango", "cake")

LC = "lc"
BE_CLASS = "be"


class ConfigError(ValueError):
    """Carries every validation problem found, not just the first."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid config:\n" + "\n".join(f"  - {e}" for e in self.errors))


def _ns_from_s(x) -> int:
    return round(float(x) * 1_000_000_000)


def _ns_from_ms(x) -> int:
    return round(float(x) * 1_000_000)


def _ns_from_us(x) -> int:
    return round(float(x) * 1_000)


def _s_from_ns(ns: int) -> float:
    return ns / 1_000_000_000


@dataclass(frozen=True)
class SloSpec:
    quantile: float = 0.999
    latency_ns: int = 4_000_000

    def to_dict(self):
        return {"quantile": self.quantile, "latency_ms": self.latency_ns / 1e6}


@dataclass(frozen=True)
class TenantConfig:
    label: str
    tenant_class: str                  # "lc" or "be"
    workload: str | WorkloadSpec      # preset name or inline spec
    slo: SloSpec | None = None

    def spec(self) -> WorkloadSpec:
        if isinstance(self.workload, str):
            return PRESETS[self.workload]
        return self.workload

    def to_dict(self):
        d = {"label": self.label, "class": self.tenant_class}
        if isinstance(self.workload, str):
            d["workload"] = self.workload
        else:
            w = self.workload
            wd = {"mode": w.mode,
                  "sizes": [[s, wgt] for s, wgt in w.sizes],
                  "read_ratio": w.read_ratio}
            if w.mode == CLOSED:
                wd["iodepth"] = w.iodepth
                wd["numjobs"] = w.numjobs
            else:
                wd["rate_per_s"] = w.rate_per_s
                if w.burst is not None:
                    wd["burst"] = {"on_s": _s_from_ns(w.burst.on_ns),
                                   "off_s": _s_from_ns(w.burst.off_ns),
                                   "rate_per_s": w.burst.rate_per_s}
            d["workload"] = wd
        if self.slo is not None:
            d["slo"] = self.slo.to_dict()
        return d


@dataclass(frozen=True)
class EstimatorConfig:
    ewma_alpha: float = 0.01
    hist_window: int = 10_000
    scope: str = "tenant"              # "tenant" or "device"

    def to_dict(self):
        return {"ewma_alpha": self.ewma_alpha, "hist_window": self.hist_window,
                "scope": self.scope}


@dataclass(frozen=True)
class AllocatorConfig:
    kind: str = "qwin"
    qwin: PolicyParams = field(default_factory=PolicyParams)
    static: StaticParams = field(default_factory=StaticParams)
    shenango: CongestionParams = field(default_factory=CongestionParams)
    cake: FeedbackParams = field(default_factory=FeedbackParams)

    def to_dict(self):
        d = {"kind": self.kind}
        q = self.qwin
        d["qwin"] = {"policy_window": q.policy_window,
                     "slack_low_us": q.slack_low_ns / 1e3,
                     "slack_high_us": q.slack_high_ns / 1e3,
                     "min_tail_samples": q.min_tail_samples}
        if q.pin is not None:
            d["qwin"]["pin"] = q.pin
        if self.static.counts:
            d["static"] = {"counts": dict(self.static.counts)}
        d["shenango"] = {"probe_interval_us": self.shenango.probe_interval_ns / 1e3}
        c = self.cake
        d["cake"] = {"interval_s": _s_from_ns(c.interval_ns), "step": c.step,
                     "headroom": c.headroom, "min_samples": c.min_samples}
        return d


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "run"
    seed: int = 1
    duration_ns: int = 60_000_000_000
    warmup_ns: int | None = None       # None -> 10% of duration
    interval_ns: int = 1_000_000_000
    out_dir: str = "results"
    window_end: str = "complete"
    pool_total: int = 8
    device: DeviceParams = field(default_factory=DeviceParams)
    estimators: EstimatorConfig = field(default_factory=EstimatorConfig)
    allocator: AllocatorConfig = field(default_factory=AllocatorConfig)
    tenants: tuple = ()

    @property
    def effective_warmup_ns(self) -> int:
        if self.warmup_ns is None:
            return self.duration_ns // 10
        return self.warmup_ns

    def lc_tenants(self):
        return [t for t in self.tenants if t.tenant_class == LC]

    def be_tenants(self):
        return [t for t in self.tenants if t.tenant_class == BE_CLASS]

    def allocator_id(self) -> str:
        if self.allocator.kind == "qwin" and self.allocator.qwin.pin:
            return f"qwin-{self.allocator.qwin.pin}"
        return self.allocator.kind

    def run_id(self, seed=None) -> str:
        return f"{self.name}-{self.allocator_id()}-s{self.seed if seed is None else seed}"

    # -- serialization --------------------------------------------------------

    def to_dict(self):
        d = {
            "name": self.name,
            "seed": self.seed,
            "duration_s": _s_from_ns(self.duration_ns),
            "interval_s": _s_from_ns(self.interval_ns),
            "out_dir": self.out_dir,
            "window_end": self.window_end,
            "pool": {"total": self.pool_total},
            "device": {
                "read_median_us": self.device.read_median_us,
                "write_median_us": self.device.write_median_us,
                "sigma": self.device.sigma,
                "p_spike": self.device.p_spike,
                "m_spike": self.device.m_spike,
                "capacity": self.device.capacity,
                "ref_block_bytes": self.device.ref_block_bytes,
                "size_exponent": self.device.size_exponent,
            },
            "estimators": self.estimators.to_dict(),
            "allocator": self.allocator.to_dict(),
            "tenants": [t.to_dict() for t in self.tenants],
        }
        if self.warmup_ns is not None:
            d["warmup_s"] = _s_from_ns(self.warmup_ns)
        return d

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _parse_workload(w, errors, where):
    if isinstance(w, str):
        if w not in PRESETS:
            errors.append(f"{where}: unknown workload preset {w!r} "
                          f"(known: {', '.join(sorted(PRESETS))})")
            return None
        return w
    if not isinstance(w, dict):
        errors.append(f"{where}: workload must be a preset name or a mapping")
        return None
    mode = w.get("mode", CLOSED)
    sizes = w.get("sizes", [[4096, 1.0]])
    try:
        sizes = tuple((int(s), float(wgt)) for s, wgt in sizes)
    except (TypeError, ValueError):
        errors.append(f"{where}: sizes must be [[bytes, weight], ...]")
        return None
    burst = None
    if w.get("burst") is not None:
        b = w["burst"]
        try:
            burst = Burst(on_ns=_ns_from_s(b["on_s"]), off_ns=_ns_from_s(b["off_s"]),
                          rate_per_s=float(b["rate_per_s"]))
        except (KeyError, TypeError, ValueError) as e:
            errors.append(f"{where}: invalid burst ({e})")
            return None
    try:
        spec = WorkloadSpec(
            mode=mode, sizes=sizes,
            read_ratio=float(w.get("read_ratio", 1.0)),
            iodepth=int(w.get("iodepth", 16)),
            numjobs=int(w.get("numjobs", 1)),
            rate_per_s=float(w.get("rate_per_s", 0.0)),
            burst=burst)
        spec.validate()
    except (TypeError, ValueError) as e:
        errors.append(f"{where}: {e}")
        return None
    return spec


def _parse_tenant(d, errors, idx):
    where = f"tenants[{idx}]"
    if not isinstance(d, dict):
        errors.append(f"{where}: must be a mapping")
        return None
    label = d.get("label")
    if not label or not isinstance(label, str):
        errors.append(f"{where}: needs a non-empty string label")
        return None
    where = f"tenants[{idx}] ({label})"
    if label == "be":
        errors.append(f"{where}: label 'be' is reserved for the shared pool")
    cls = d.get("class")
    if cls is None and isinstance(d.get("workload"), str):
        cls = PRESET_CLASS.get(d["workload"])
    if cls not in (LC, BE_CLASS):
        errors.append(f"{where}: class must be 'lc' or 'be'")
        return None
    workload = _parse_workload(d.get("workload"), errors, where)
    if workload is None:
        return None
    slo = None
    if cls == LC:
        s = d.get("slo")
        if not isinstance(s, dict) or "latency_ms" not in s:
            errors.append(f"{where}: LC tenants need slo: {{quantile, latency_ms}}")
            return None
        q = float(s.get("quantile", 0.999))
        lat = _ns_from_ms(s["latency_ms"])
        if not 0 < q < 1:
            errors.append(f"{where}: slo quantile must be in (0, 1)")
        if lat <= 0:
            errors.append(f"{where}: slo latency must be > 0")
        slo = SloSpec(quantile=q, latency_ns=lat)
    elif d.get("slo") is not None:
        errors.append(f"{where}: BE tenants take no SLO")
    return TenantConfig(label=label, tenant_class=cls, workload=workload, slo=slo)


def _parse_allocator(d, errors):
    if d is None:
        d = {}
    if not isinstance(d, dict):
        errors.append("allocator: must be a mapping")
        return AllocatorConfig()
    kind = d.get("kind", "qwin")
    if kind not in ALLOCATORS:
        errors.append(f"allocator: unknown kind {kind!r} (known: {', '.join(ALLOCATORS)})")
        kind = "qwin"
    q = d.get("qwin", {}) or {}
    pin = q.get("pin")
    if pin is not None and pin not in POLICIES:
        errors.append(f"allocator.qwin: pin must be one of {POLICIES}")
        pin = None
    try:
        qwin = PolicyParams(
            policy_window=int(q.get("policy_window", 2000)),
            slack_low_ns=_ns_from_us(q.get("slack_low_us", 300)),
            slack_high_ns=_ns_from_us(q.get("slack_high_us", 1000)),
            min_tail_samples=int(q.get("min_tail_samples", 1000)),
            pin=pin)
        qwin.validate()
    except (TypeError, ValueError) as e:
        errors.append(f"allocator.qwin: {e}")
        qwin = PolicyParams()
    st = d.get("static", {}) or {}
    static = StaticParams(counts=dict(st.get("counts", {})))
    sh = d.get("shenango", {}) or {}
    try:
        shen = CongestionParams(probe_interval_ns=_ns_from_us(sh.get("probe_interval_us", 100)))
        shen.validate()
    except (TypeError, ValueError) as e:
        errors.append(f"allocator.shenango: {e}")
        shen = CongestionParams()
    ck = d.get("cake", {}) or {}
    try:
        cake = FeedbackParams(
            interval_ns=_ns_from_s(ck.get("interval_s", 1.0)),
            step=int(ck.get("step", 1)),
            headroom=float(ck.get("headroom", 0.7)),
            min_samples=int(ck.get("min_samples", 100)))
        cake.validate()
    except (TypeError, ValueError) as e:
        errors.append(f"allocator.cake: {e}")
        cake = FeedbackParams()
    return AllocatorConfig(kind=kind, qwin=qwin, static=static, shenango=shen, cake=cake)


def parse_config(d: dict) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from a plain mapping."""
    errors: list[str] = []
    if not isinstance(d, dict):
        raise ConfigError(["config root must be a mapping"])

    name = d.get("name", "run")
    seed = d.get("seed", 1)
    if not isinstance(seed, int) or seed < 0:
        errors.append("seed must be a non-negative integer")
        seed = 1
    duration_ns = _ns_from_s(d.get("duration_s", 60.0))
    if duration_ns <= 0:
        errors.append("duration_s must be > 0")
    warmup_ns = None
    if d.get("warmup_s") is not None:
        warmup_ns = _ns_from_s(d["warmup_s"])
        if warmup_ns < 0:
            errors.append("warmup_s must be >= 0")
        elif warmup_ns >= duration_ns > 0:
            errors.append("warmup_s must be smaller than duration_s")
    interval_ns = _ns_from_s(d.get("interval_s", 1.0))
    if interval_ns <= 0:
        errors.append("interval_s must be > 0")
    window_end = d.get("window_end", "complete")
    if window_end not in ("complete", "dequeue"):
        errors.append("window_end must be 'complete' or 'dequeue'")

    pool = d.get("pool", {}) or {}
    pool_total = pool.get("total", 8)
    if not isinstance(pool_total, int) or pool_total < 1:
        errors.append("pool.total must be an integer >= 1")
        pool_total = 8

    dev = d.get("device", {}) or {}
    try:
        device = DeviceParams(
            read_median_us=float(dev.get("read_median_us", 100.0)),
            write_median_us=float(dev.get("write_median_us", 100.0)),
            sigma=float(dev.get("sigma", 0.3)),
            p_spike=float(dev.get("p_spike", 0.001)),
            m_spike=float(dev.get("m_spike", 20.0)),
            capacity=int(dev.get("capacity", 8)),
            ref_block_bytes=int(dev.get("ref_block_bytes", 4096)),
            size_exponent=float(dev.get("size_exponent", 0.5)))
        device.validate()
    except (TypeError, ValueError) as e:
        errors.append(f"device: {e}")
        device = DeviceParams()

    est = d.get("estimators", {}) or {}
    scope = est.get("scope", "tenant")
    if scope not in ("tenant", "device"):
        errors.append("estimators.scope must be 'tenant' or 'device'")
        scope = "tenant"
    try:
        estimators = EstimatorConfig(
            ewma_alpha=float(est.get("ewma_alpha", 0.01)),
            hist_window=int(est.get("hist_window", 10_000)),
            scope=scope)
        if not 0 < estimators.ewma_alpha <= 1:
            errors.append("estimators.ewma_alpha must be in (0, 1]")
        if estimators.hist_window < 1:
            errors.append("estimators.hist_window must be >= 1")
    except (TypeError, ValueError) as e:
        errors.append(f"estimators: {e}")
        estimators = EstimatorConfig()

    allocator = _parse_allocator(d.get("allocator"), errors)

    tenants = []
    raw_tenants = d.get("tenants", [])
    if not raw_tenants:
        errors.append("at least one tenant is required")
    labels = set()
    for i, td in enumerate(raw_tenants):
        t = _parse_tenant(td, errors, i)
        if t is None:
            continue
        if t.label in labels:
            errors.append(f"duplicate tenant label {t.label!r}")
        labels.add(t.label)
        tenants.append(t)

    lc_labels = [t.label for t in tenants if t.tenant_class == LC]
    if allocator.kind in ("qwin", "static", "shenango", "cake") and \
            len(lc_labels) > pool_total:
        errors.append(f"{len(lc_labels)} LC tenants need at least that many cores; "
                      f"pool has {pool_total}")
    if allocator.kind == "static" and not errors:
        try:
            allocator.static.validate(pool_total, lc_labels)
        except ValueError as e:
            errors.append(f"allocator.static: {e}")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        name=str(name), seed=seed, duration_ns=duration_ns, warmup_ns=warmup_ns,
        interval_ns=interval_ns, out_dir=str(d.get("out_dir", "results")),
        window_end=window_end, pool_total=pool_total, device=device,
        estimators=estimators, allocator=allocator, tenants=tuple(tenants))


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        d = yaml.safe_load(f)
    return parse_config(d)


def loads_config(text: str) -> ExperimentConfig:
    return parse_config(yaml.safe_load(text))


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


def _lc(label, preset, slo_ms, q=0.999):
    return {"label": label, "class": "lc", "workload": preset,
            "slo": {"quantile": q, "latency_ms": slo_ms}}


def _be(label, preset):
    return {"label": label, "class": "be", "workload": preset}


def scenario(name: str) -> dict:
    """Return a named scenario as a plain config mapping (overridable)."""
    base = {
        "name": name,
        "seed": 1,
        "duration_s": 60.0,
        "interval_s": 1.0,
        "pool": {"total": 8},
        "allocator": {"kind": "qwin"},
    }
    if name == "duo":
        base["tenants"] = [_lc("lc0", "C", 4.0), _be("be0", "H")]
    elif name == "burst-duo":
        # Open-loop LC with a 4x burst one second out of every five.
        base["tenants"] = [
            {"label": "lc0", "class": "lc",
             "workload": {"mode": OPEN, "rate_per_s": 12000.0,
                          "sizes": [[4096, 1.0]], "read_ratio": 0.9,
                          "burst": {"on_s": 1.0, "off_s": 4.0,
                                    "rate_per_s": 48000.0}},
             "slo": {"quantile": 0.999, "latency_ms": 4.0}},
            _be("be0", "H"),
        ]
    elif name == "group1":
        base["tenants"] = [_lc("lc0", "B", 2.5), _lc("lc1", "C", 4.0),
                           _lc("lc2", "D", 5.5),
                           _be("be0", "F"), _be("be1", "G"), _be("be2", "H")]
    elif name == "group2":
        base["tenants"] = [_lc("lc0", "K", 4.0), _lc("lc1", "K", 5.5),
                           _lc("lc2", "K", 7.0),
                           _be("be0", "F"), _be("be1", "G"), _be("be2", "H")]
    elif name == "group3":
        base["tenants"] = [_lc("lc0", "J", 4.0), _lc("lc1", "J", 5.5),
                           _lc("lc2", "J", 7.0),
                           _be("be0", "F"), _be("be1", "G"), _be("be2", "H")]
    elif name == "policy-duo":
        base["tenants"] = [_lc("lc0", "C", 3.0), _lc("lc1", "P", 5.0),
                           _be("be0", "H")]
    else:
        raise KeyError(f"unknown scenario {name!r} (known: {', '.join(SCENARIOS)})")
    return base


SCENARIOS = ("duo", "burst-duo", "group1", "group2", "group3", "policy-duo")
