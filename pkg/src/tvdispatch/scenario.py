"""
Scenario construction: supply traces, random-walk demand and JSON replay.

Randomness comes from SplitMix64 streams so traces can be regenerated
bit-for-bit in any language:

* stream seed for demand of node ``i``, coordinate ``j``:
  ``(seed + (i * R + j) * STREAM_STRIDE) mod 2**64``
  (node index ``i`` is zero-based; with shared noise every node uses stream 0)
* stream seed for synthetic supply coordinate ``j``:
  ``((seed ^ SUPPLY_SALT) + j * STREAM_STRIDE) mod 2**64``
* the n-th output of a stream seeded with ``s`` is
  ``mix64(s + n * GAMMA)`` for ``n = 1, 2, ...``
* uniforms are ``((x >> 11) + 0.5) / 2**53``, strictly inside (0, 1)
* normals are the inverse normal CDF of those uniforms.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields
from datetime import datetime, timedelta
from importlib import resources
from pathlib import Path
from statistics import NormalDist

import numpy as np

from .model import (CONSUMER_UTILITY, PRODUCER_COST, DispatchInstance,
                    InfeasibleInstanceError, QuadraticObjective, Scenario)

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
STREAM_STRIDE = 0xD1B54A32D192ED03
SUPPLY_SALT = 0x5EED5EED5EED5EED
BUNDLED_TRACE = "synthetic_supply.csv"
BUNDLED_SEED = 2024
BUNDLED_START = datetime(2024, 6, 1)

_STD_NORMAL = NormalDist()


def _mix64(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


class SplitMix64:
    """SplitMix64 generator with inverse-CDF normal variates."""

    def __init__(self, seed):
        self.state = int(seed) & MASK64

    def next_uint64(self, n):
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(GAMMA)
        self.state = (self.state + n * GAMMA) & MASK64
        return _mix64(z)

    def uniform(self, n):
        x = self.next_uint64(n)
        return ((x >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53

    def normal(self, n):
        return np.array([_STD_NORMAL.inv_cdf(u) for u in self.uniform(n)])


def stream_seed(seed, stream):
    return (int(seed) + int(stream) * STREAM_STRIDE) & MASK64


class SupplyFormatError(ValueError):
    pass


def load_supply_csv(path, require_positive=True):
    """
    Read a ``timestamp,supply_1[,supply_2,...]`` trace.

    Returns a ``(K, R)`` array. Rows whose supply is not strictly positive
    in some coordinate are rejected when `require_positive` is set, since
    zero lower bounds then leave no strict interior.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SupplyFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    r = len(header) - 1
    if header[0] != "timestamp" or r < 1 or header[1:] != [f"supply_{j}" for j in range(1, r + 1)]:
        raise SupplyFormatError(
            f"{path}: header must be 'timestamp,supply_1[,supply_2,...]', got {rows[0]}")
    data, bad = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != r + 1:
            raise SupplyFormatError(f"{path}:{lineno}: expected {r + 1} fields, got {len(row)}")
        try:
            datetime.fromisoformat(row[0].strip())
            values = [float(c) for c in row[1:]]
        except ValueError as exc:
            raise SupplyFormatError(f"{path}:{lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in values):
            raise SupplyFormatError(f"{path}:{lineno}: non-finite supply")
        if require_positive and min(values) <= 0:
            bad.append(lineno)
        data.append(values)
    if not data:
        raise SupplyFormatError(f"{path}: no data rows")
    if bad:
        raise SupplyFormatError(
            f"{path}: nonpositive supply on lines {bad}; "
            "zero lower bounds need supply > 0")
    return np.array(data)


def write_supply_csv(fh, supply, start=BUNDLED_START, step_minutes=5.0):
    supply = np.atleast_2d(np.asarray(supply, dtype=float).T).T
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["timestamp"] + [f"supply_{j}" for j in range(1, supply.shape[1] + 1)])
    for k, row in enumerate(supply):
        ts = (start + timedelta(minutes=k * step_minutes)).isoformat()
        w.writerow([ts] + [repr(float(x)) for x in row])


def synthetic_supply_trace(n_steps=288, n_resources=1, seed=BUNDLED_SEED,
                           noise=1.0, step_minutes=5.0):
    """
    Renewable-shaped supply: constant biofuel, diurnal wind, daytime solar.

    ``noise = 0`` gives a smooth deterministic trace. Output shape is
    ``(n_steps, n_resources)``; values stay strictly positive.
    """
    hours = (np.arange(n_steps) * step_minutes / 60.0) % 24.0
    out = np.empty((n_steps, n_resources))
    for j in range(n_resources):
        rng = SplitMix64(stream_seed(seed ^ SUPPLY_SALT, j))
        z = rng.normal(3 * n_steps).reshape(3, n_steps) if noise > 0 else np.zeros((3, n_steps))
        phase = 2.0 * math.pi * j / max(n_resources, 1)
        biofuel = 4.0 + 0.05 * noise * z[0]
        gust = np.zeros(n_steps)
        for t in range(1, n_steps):
            gust[t] = 0.95 * gust[t - 1] + 0.3 * noise * z[1, t]
        wind = np.maximum(9.0 + 3.0 * np.sin(2.0 * math.pi * hours / 24.0 + phase) + gust, 0.0)
        sun = np.clip(np.sin(math.pi * (hours - 6.0) / 12.0), 0.0, None) ** 1.5
        clouds = np.clip(1.0 - 0.2 * noise * np.abs(z[2]), 0.0, 1.0)
        solar = 10.0 * sun * clouds
        out[:, j] = np.maximum(biofuel + wind + solar, 0.5)
    return out


def bundled_supply_path():
    return resources.files("tvdispatch") / "data" / BUNDLED_TRACE


def load_bundled_supply():
    with resources.as_file(bundled_supply_path()) as p:
        return load_supply_csv(p)


def gen_demand_walk(n_nodes, n_steps, seed, d0=2.0, std=1.0, clamp=True,
                    n_resources=1, shared_noise=False):
    """
    Random-walk demand ``d[k+1] = max(d[k] + std * n[k], 0)`` with ``d[0] = d0``.

    Returns an array of shape ``(n_nodes, n_steps, n_resources)``. Walks are
    independent across nodes unless `shared_noise` is set.
    """
    if std < 0:
        raise ValueError("demand noise std must be nonnegative")
    out = np.empty((n_nodes, n_steps, n_resources))
    for i in range(n_nodes):
        for j in range(n_resources):
            stream = j if shared_noise else i * n_resources + j
            noise = SplitMix64(stream_seed(seed, stream)).normal(n_steps - 1) if std > 0 \
                else np.zeros(n_steps - 1)
            d = float(d0)
            out[i, 0, j] = d
            for k in range(1, n_steps):
                d = d + std * noise[k - 1]
                if clamp:
                    d = max(d, 0.0)
                out[i, k, j] = d
    return out


SUPPLY_SOURCES = ("bundled", "csv", "synthetic", "constant")
BOX_POLICIES = ("zero-to-supply", "fixed", "csv")
RHO_MODES = ("formula", "fixed")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Scenario recipe. Defaults reproduce the 10-user, single-resource setup.

    Demand walks are independent across users unless ``demand_shared_noise``
    is set. Relative ``supply_path`` / ``box_path`` are resolved against
    ``base_dir``.
    """

    n_nodes: int = 10
    n_producers: int | None = None
    n_resources: int = 1
    n_steps: int = 288
    supply_source: str = "bundled"
    supply_path: str | None = None
    supply_value: float | list | None = None
    supply_noise: float = 1.0
    demand_d0: float = 2.0
    demand_std: float = 1.0
    demand_clamp: bool = True
    demand_shared_noise: bool = False
    curvature: float = 1.0
    box_policy: str = "zero-to-supply"
    box_lower: float | list | None = None
    box_upper: float | list | None = None
    box_path: str | None = None
    rho_mode: str = "fixed"
    rho_value: float | None = 10.0
    static: bool = False
    seed: int = 42
    step_minutes: float = 5.0
    base_dir: str | None = None

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ConfigError("n_nodes: must be >= 1")
        if self.n_resources < 1:
            raise ConfigError("n_resources: must be >= 1")
        if self.n_steps < 2:
            raise ConfigError("n_steps: need K >= 2 time steps for drift statistics")
        if self.n_producers is not None and not 0 <= self.n_producers <= self.n_nodes:
            raise ConfigError("n_producers: must lie in [0, n_nodes]")
        if self.demand_std < 0:
            raise ConfigError("demand_std: must be >= 0")
        if self.curvature <= 0:
            raise ConfigError("curvature: must be > 0")
        if self.supply_source not in SUPPLY_SOURCES:
            raise ConfigError(f"supply_source: expected one of {SUPPLY_SOURCES}")
        if self.supply_source == "csv" and not self.supply_path:
            raise ConfigError("supply_path: required when supply_source is 'csv'")
        if self.supply_source == "constant" and self.supply_value is None:
            raise ConfigError("supply_value: required when supply_source is 'constant'")
        if self.box_policy not in BOX_POLICIES:
            raise ConfigError(f"box_policy: expected one of {BOX_POLICIES}")
        if self.box_policy == "fixed" and (self.box_lower is None or self.box_upper is None):
            raise ConfigError("box_lower/box_upper: required when box_policy is 'fixed'")
        if self.box_policy == "csv" and not self.box_path:
            raise ConfigError("box_path: required when box_policy is 'csv'")
        if self.rho_mode not in RHO_MODES:
            raise ConfigError(f"rho_mode: expected one of {RHO_MODES}")
        if self.rho_mode == "fixed" and (self.rho_value is None or self.rho_value <= 0):
            raise ConfigError("rho_value: must be > 0 when rho_mode is 'fixed'")

    @classmethod
    def from_dict(cls, data, base_dir=None):
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(f"{key}: unknown configuration key")
        kw = dict(data)
        if base_dir is not None and kw.get("base_dir") is None:
            kw["base_dir"] = str(base_dir)
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path):
        path = Path(path)
        with path.open() as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self):
        d = asdict(self)
        d.pop("base_dir")
        return d

    def replace(self, **changes):
        return ScenarioConfig(**{**asdict(self), **changes})

    def _resolve(self, p):
        p = Path(p)
        if not p.is_absolute() and self.base_dir is not None:
            p = Path(self.base_dir) / p
        return p


def _supply_series(cfg):
    k, r = cfg.n_steps, cfg.n_resources
    if cfg.supply_source == "constant":
        value = np.broadcast_to(np.asarray(cfg.supply_value, dtype=float), (r,))
        return np.tile(value, (k, 1))
    if cfg.supply_source == "synthetic":
        return synthetic_supply_trace(k, r, seed=cfg.seed, noise=cfg.supply_noise,
                                      step_minutes=cfg.step_minutes)
    if cfg.supply_source == "bundled":
        trace = load_bundled_supply()
    else:
        trace = load_supply_csv(cfg._resolve(cfg.supply_path))
    if trace.shape[1] != r:
        raise ConfigError(f"supply trace has {trace.shape[1]} resources, config says {r}")
    if cfg.static:
        # a static scenario repeats the first row
        return np.tile(trace[:1], (k, 1))
    if trace.shape[0] < k:
        raise ConfigError(f"n_steps: trace has only {trace.shape[0]} rows, {k} requested")
    return trace[:k]


def _per_node(value, n, r, name):
    try:
        return np.broadcast_to(np.asarray(value, dtype=float).reshape(
            (-1, 1) if np.ndim(value) == 1 else np.shape(value)), (n, r)).copy()
    except ValueError:
        raise ConfigError(f"{name}: cannot broadcast to ({n}, {r})") from None


def load_box_csv(path, n_nodes, n_resources, n_steps):
    """Read ``k,node,lower_1..R,upper_1..R`` rows into two (K, N, R) arrays."""
    lower = np.full((n_steps, n_nodes, n_resources), np.nan)
    upper = np.full_like(lower, np.nan)
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            k, i = int(row["k"]), int(row["node"]) - 1
            if k >= n_steps:
                continue
            if not 0 <= i < n_nodes:
                raise ConfigError(f"box_path: node {i + 1} out of range")
            lower[k, i] = [float(row[f"lower_{j}"]) for j in range(1, n_resources + 1)]
            upper[k, i] = [float(row[f"upper_{j}"]) for j in range(1, n_resources + 1)]
    if np.isnan(lower).any() or np.isnan(upper).any():
        raise ConfigError("box_path: missing (k, node) rows")
    return lower, upper


def build_scenario(config):
    """
    Assemble the time slices described by `config`.

    Every node gets ``curvature * (p - d_i[k])**2`` with a random-walk
    target. Raises `ConfigError` naming ``k`` if a slice violates the
    strict interior condition.
    """
    cfg = config
    n, r, kk = cfg.n_nodes, cfg.n_resources, cfg.n_steps
    supply = _supply_series(cfg)
    demand = gen_demand_walk(n, kk, cfg.seed, cfg.demand_d0, cfg.demand_std,
                             cfg.demand_clamp, r, cfg.demand_shared_noise)
    if cfg.box_policy == "csv":
        lower_all, upper_all = load_box_csv(cfg._resolve(cfg.box_path), n, r, kk)
    m = n if cfg.n_producers is None else cfg.n_producers
    kinds = [PRODUCER_COST if i < m else CONSUMER_UTILITY for i in range(n)]
    curv = np.full(r, float(cfg.curvature))

    instances = []
    for k in range(kk):
        src = 0 if cfg.static else k
        if cfg.box_policy == "zero-to-supply":
            lower = np.zeros((n, r))
            upper = np.tile(supply[src], (n, 1))
        elif cfg.box_policy == "fixed":
            lower = _per_node(cfg.box_lower, n, r, "box_lower")
            upper = _per_node(cfg.box_upper, n, r, "box_upper")
        else:
            lower, upper = lower_all[src], upper_all[src]
        objs = tuple(QuadraticObjective(curv, demand[i, src], kind=kinds[i]) for i in range(n))
        try:
            instances.append(DispatchInstance(k, objs, lower, upper, supply[src], m))
        except InfeasibleInstanceError as exc:
            raise ConfigError(f"time step k={k} violates strict feasibility: {exc}") from None
    meta = {"config": cfg.to_dict()}
    source = cfg.supply_source if cfg.supply_source != "csv" else str(cfg.supply_path)
    return Scenario(tuple(instances), source=source, seed=cfg.seed,
                    step_minutes=cfg.step_minutes, metadata=meta)


def scenario_to_dict(scenario):
    insts = []
    for inst in scenario:
        insts.append({
            "k": inst.k,
            "objectives": [{"kind": o.kind, "curvature": o.curvature.tolist(),
                            "target": o.target.tolist(), "offset": o.offset.tolist()}
                           for o in inst.objectives],
            "lower": inst.lower.tolist(),
            "upper": inst.upper.tolist(),
            "supply": inst.supply.tolist(),
        })
    return {"format": "tvdispatch-scenario/1", "source": scenario.source,
            "seed": scenario.seed, "step_minutes": scenario.step_minutes,
            "n_producers": scenario.n_producers, "metadata": scenario.metadata,
            "instances": insts}


def scenario_from_dict(data):
    m = data.get("n_producers")
    insts = []
    for rec in data["instances"]:
        objs = tuple(QuadraticObjective(o["curvature"], o["target"], o.get("offset"),
                                        o.get("kind", PRODUCER_COST))
                     for o in rec["objectives"])
        insts.append(DispatchInstance(rec["k"], objs, rec["lower"], rec["upper"],
                                      rec["supply"], m))
    return Scenario(tuple(insts), source=data.get("source", "replay"),
                    seed=data.get("seed"), step_minutes=data.get("step_minutes", 5.0),
                    metadata=data.get("metadata", {}))


def dumps_scenario(scenario):
    return json.dumps(scenario_to_dict(scenario), sort_keys=True, separators=(",", ":"))


def dump_scenario(scenario, path):
    Path(path).write_text(dumps_scenario(scenario) + "\n")


def load_scenario(path):
    with Path(path).open() as fh:
        return scenario_from_dict(json.load(fh))


def scenario_hash(scenario):
    """SHA-256 of the canonical JSON dump."""
    return hashlib.sha256(dumps_scenario(scenario).encode()).hexdigest()
