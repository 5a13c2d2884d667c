"""Experiment configs, the operation registry, JSON-lines reports and replay.

A config is a TOML file with one experiment::

    system = "rotation:0.41421356"
    operation = "classify_pair"
    seed = 7                      # required for randomized operations

    [params]
    x = 0.1
    y = 0.35
    horizon = 100000

Every report row embeds the fully resolved config, so a single row is
enough to re-run the experiment and compare payloads.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .analysis import chains, hitting, pairs
from .cells import cell_from_json
from .core import COMPARISON_WINDOW, DynamicsError, FiberedPoint, SymbolicWord, System
from .skew import (
    FiniteCocycle,
    OdometerSkew,
    SkewProduct,
    _load_toml,
    cocycle_from_dict,
    selector_from_dict,
)
from .systems import ChaconSubshift, doubling_gap_word, make_system

OUTPUT_ENV = "LYSDYN_OUTPUT_DIR"
DEFAULT_HORIZON = 10_000
FLOAT_TOLERANCE = 1e-9


class ConfigError(ValueError):
    """The config cannot be parsed, resolved or validated."""


@dataclass(frozen=True)
class Operation:
    name: str
    func: Callable
    params: dict[str, Any]
    randomized: bool
    needs_cocycle: bool = False
    trace: bool = False


@dataclass
class ExperimentConfig:
    system: str
    operation: str
    params: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None
    cocycle: Any = None
    selector: Any = None
    output: str | None = None
    id: str = "experiment"

    TOP_LEVEL = ("id", "system", "operation", "seed", "cocycle", "selector", "output", "params")

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None, default_id: str = "experiment") -> ExperimentConfig:
        unknown = set(raw) - set(cls.TOP_LEVEL)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        for key in ("system", "operation"):
            if key not in raw:
                raise ConfigError(f"missing required field {key!r}")
        cocycle, selector = raw.get("cocycle"), raw.get("selector")
        if isinstance(cocycle, str):
            cocycle = _read_table(cocycle, base_dir)
        if isinstance(selector, str):
            selector = _read_table(selector, base_dir)
        seed = raw.get("seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
            raise ConfigError("seed must be an integer")
        cfg = cls(
            system=str(raw["system"]),
            operation=str(raw["operation"]),
            params=dict(raw.get("params", {})),
            seed=seed,
            cocycle=cocycle,
            selector=selector,
            output=raw.get("output"),
            id=str(raw.get("id", default_id)),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        op = OPERATIONS.get(self.operation)
        if op is None:
            raise ConfigError(f"unknown operation {self.operation!r}; known: {sorted(OPERATIONS)}")
        unknown = set(self.params) - set(op.params)
        if unknown:
            raise ConfigError(f"unknown parameters for {self.operation}: {sorted(unknown)}")
        if op.needs_cocycle and self.cocycle is None:
            raise ConfigError(f"{self.operation} needs a cocycle")
        if self.seed is None and (op.randomized or _mentions_random(self.params)):
            raise ConfigError(f"{self.operation} with these parameters is randomized: a seed is required")

    def resolved_params(self) -> dict[str, Any]:
        out = dict(OPERATIONS[self.operation].params)
        out.update(self.params)
        return out

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "system": self.system,
            "operation": self.operation,
            "seed": self.seed,
            "cocycle": self.cocycle,
            "selector": self.selector,
            "params": self.resolved_params(),
        }


def _read_table(path: str, base_dir: Path | None) -> dict:
    p = Path(path)
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    try:
        return _load_toml(p)
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from None


def _mentions_random(value) -> bool:
    if isinstance(value, str):
        return value == "random"
    if isinstance(value, dict):
        return any(_mentions_random(v) for v in value.values())
    if isinstance(value, list):
        return any(_mentions_random(v) for v in value)
    return False


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a TOML config, apply ``--seed``/``--horizon`` style overrides and validate."""
    path = Path(path)
    try:
        raw = _load_toml(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    raw = apply_overrides(raw, overrides or {})
    return ExperimentConfig.from_dict(raw, path.parent, path.stem)


def apply_overrides(raw: dict, overrides: dict) -> dict:
    raw = dict(raw)
    if overrides.get("seed") is not None:
        raw["seed"] = overrides["seed"]
    if overrides.get("horizon") is not None:
        h = overrides["horizon"]
        op = OPERATIONS.get(raw.get("operation"))
        # operations sweeping several horizons take the override as a single one
        extra = {"horizons": [h]} if op is not None and "horizons" in op.params else {"horizon": h}
        raw["params"] = dict(raw.get("params", {}), **extra)
    return raw


# ---------------------------------------------------------------- systems


def build_system(cfg: ExperimentConfig) -> System:
    try:
        base = make_system(cfg.system)
        if cfg.cocycle is not None:
            return SkewProduct(base, cocycle_from_dict(cfg.cocycle))
        if cfg.selector is not None:
            selector, bases = selector_from_dict(cfg.selector)
            return OdometerSkew(base, selector, bases)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return base


def base_of(system: System) -> System:
    return system.base if isinstance(system, (SkewProduct, OdometerSkew)) else system


def resolve_point(system: System, value, rng: np.random.Generator | None, depth: int):
    """Turn a config value into a point of ``system``.

    Numbers are circle angles. Strings: ``random``, ``zeros``,
    ``doubling-gap``, ``word:<symbols>``, ``periodic:<symbols>``,
    ``chacon@<offset>``, ``digits:<d0,d1,...>``. On skew products a table
    ``{point = ..., label = ...}`` sets the fiber label (default 0).
    """
    if isinstance(system, SkewProduct):
        if isinstance(value, dict):
            extra = set(value) - {"point", "label"}
            if extra:
                raise ConfigError(f"unknown point fields {sorted(extra)}")
            base = resolve_point(system.base, value.get("point", "random"), rng, depth)
            label = value.get("label", 0)
        else:
            base, label = resolve_point(system.base, value, rng, depth), 0
        if label == "random":
            label = int(_need(rng).integers(0, system.fiber_size))
        p = FiberedPoint(base, int(label))
        system.validate(p)
        return p
    if value == "random":
        return system.sample(_need(rng), depth)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return system.parse_point(repr(float(value)))
    if not isinstance(value, str):
        raise ConfigError(f"cannot read a point from {value!r}")
    a = getattr(system, "alphabet_size", 2)
    if value == "zeros":
        return SymbolicWord(a, bytes(depth))
    if value == "doubling-gap":
        return SymbolicWord(a, doubling_gap_word(depth, a))
    kind, _, body = value.partition(":")
    if kind == "word":
        return SymbolicWord.from_digits(body, a)
    if kind == "periodic":
        reps = -(-depth // len(body))
        return SymbolicWord.from_digits((body * reps)[:depth], a)
    if kind == "digits":
        return system.parse_point(body)
    if value.startswith("chacon@"):
        if not isinstance(system, ChaconSubshift):
            raise ConfigError("chacon@offset points need the chacon system")
        return system.point(int(value[len("chacon@"):]), depth)
    try:
        return system.parse_point(value)
    except (NotImplementedError, ValueError) as exc:
        raise ConfigError(f"cannot read a point from {value!r}: {exc}") from None


def _need(rng):
    if rng is None:
        raise ConfigError("a random point needs a seed")
    return rng


# ------------------------------------------------------------- operations
# Each operation returns a list of payload dicts, one per report row, and
# optionally a distance trace for the .dat file.


def _depth(p) -> int:
    return int(p["horizon"]) + COMPARISON_WINDOW


def _op_classify(system, p, rng):
    x = resolve_point(system, p["x"], rng, _depth(p))
    y = resolve_point(system, p["y"], rng, _depth(p))
    d = system.pair_orbit_distances(x, y, p["horizon"])
    v = pairs.verdict_from_distances(d, p["epsilon"], p["delta_prox"], p["horizon"], p["tail_start"],
                                     p["delta"], p["distal_floor"])
    return [{"verdict": v.to_json()}], d


def _op_orbit(system, p, rng):
    x = resolve_point(system, p["x"], rng, _depth(p))
    y = resolve_point(system, p["y"], rng, _depth(p))
    d = system.pair_orbit_distances(x, y, p["horizon"])
    return [{"min": float(d.min()), "max": float(d.max()), "length": int(d.size)}], d


def _op_lys(system, p, rng):
    rows = []
    for k in range(p["points"]):
        x = resolve_point(system, p["x"], rng, _depth(p))
        res = pairs.lys_witness_search(system, x, p["radius"], p["epsilon"], p["delta_prox"], p["horizon"],
                                       p["attempts"], int(rng.integers(2**63)), p["tail_start"], p["strategy"])
        rows.append({"point": k, **res.to_json()})
    return rows, None


def _op_scrambled(system, p, rng):
    candidates = None
    if p["family"] == "interleaved":
        if not hasattr(system, "scrambled_family"):
            raise ConfigError("the interleaved family exists only on the full shift")
        candidates = system.scrambled_family(p["attempts"], _depth(p))
    elif p["family"] != "random":
        raise ConfigError(f"unknown family {p['family']!r}")
    res = pairs.scrambled_search(system, p["epsilon"], p["delta_prox"], p["set_size"], p["horizon"], p["attempts"],
                                 int(rng.integers(2**63)), candidates, p["tail_start"], p["label"])
    return [res.to_json()], None


def _op_density(system, p, rng):
    cell = None if p["cell"] is None else cell_from_json(p["cell"])
    res = pairs.distal_density(system, cell, p["samples"], p["epsilon"], p["delta_prox"], p["horizon"],
                               int(rng.integers(2**63)), p["tail_start"])
    return [res.to_json()], None


def _op_transitive(system, p, rng):
    x = resolve_point(system, p["x"], rng, _depth(p))
    y = None if p["y"] is None else resolve_point(system, p["y"], rng, _depth(p))
    res = pairs.transitive_pair_candidate(system, x, p["resolution"], p["horizon"],
                                          int(rng.integers(2**63)) if rng is not None else 0, p["radius"], y)
    return [res.to_json()], None


def _op_hitting(system, p, rng):
    U, V = cell_from_json(p["U"]), cell_from_json(p["V"])
    rec = hitting.hitting_times(system, U, V, p["horizon"])
    return [rec.to_json(with_witnesses=p["witnesses"])], None


def _op_chain(system, p, rng):
    x = resolve_point(system, p["x"], rng, _depth(p))
    y = resolve_point(system, p["y"], rng, _depth(p))
    rec = chains.characteristic_chain(system, x, y, p["eta"], p["horizon"])
    return [rec.to_json(full=p["full"])], None


def sample_close_pairs(system: SkewProduct, count: int, radius: float, resolution: int, horizon: int,
                       rng: np.random.Generator, max_tries: int = 50) -> list[tuple]:
    """Base pairs ``y`` within ``radius`` of ``x`` whose pair orbit visits every net cell."""
    base = system.base
    out = []
    for _ in range(count):
        for _ in range(max_tries):
            x = base.sample(rng, horizon + COMPARISON_WINDOW)
            y = base.sample_near(x, radius, rng, horizon + COMPARISON_WINDOW)
            if base.distance(x, y) >= radius:
                continue
            visited, total = pairs.net_coverage(base, x, y, resolution, min(horizon, 10_000))
            if visited == total:
                out.append((x, y))
                break
        else:
            raise DynamicsError(f"no high-score pair found in {max_tries} tries")
    return out


def _op_claim2(system, p, rng):
    horizons = sorted(p["horizons"])
    samples = sample_close_pairs(system, p["samples"], p["radius"], p["resolution"], horizons[-1], rng)
    rep = chains.claim2_test(system, samples, p["eta"], horizons)
    return [rep.to_json()], None


def _op_claim3(system, p, rng):
    samples = sample_close_pairs(system, p["samples"], p["eta"], p["resolution"], p["horizon"], rng)
    rows = []
    for k, (x, y) in enumerate(samples):
        try:
            res = chains.claim3_test(system, x, y, p["eta"], p["eta_prime"], p["horizon"])
            rows.append({"sample": k, **res.to_json()})
        except chains.JoinNotFound as exc:
            rows.append({"sample": k, "holds": None, "status": "censored", "reason": str(exc)})
    return rows, None


_PAIR = {"epsilon": pairs.DEFAULT_EPSILON, "delta_prox": pairs.DEFAULT_DELTA_PROX, "horizon": DEFAULT_HORIZON,
         "tail_start": None}

OPERATIONS: dict[str, Operation] = {
    op.name: op
    for op in [
        Operation("classify_pair", _op_classify, {**_PAIR, "x": None, "y": None, "delta": None, "distal_floor": None},
                  randomized=False, trace=True),
        Operation("orbit", _op_orbit, {"x": None, "y": None, "horizon": DEFAULT_HORIZON}, randomized=False, trace=True),
        Operation("lys_witness_search", _op_lys,
                  {**_PAIR, "x": "random", "radius": 2.0 ** -5, "attempts": 20, "points": 1, "strategy": "random"},
                  randomized=True),
        Operation("scrambled_search", _op_scrambled,
                  {**_PAIR, "set_size": 5, "attempts": 100, "label": None, "family": "random"}, randomized=True),
        Operation("distal_density", _op_density, {**_PAIR, "cell": None, "samples": 500}, randomized=True),
        Operation("transitive_pair_candidate", _op_transitive,
                  {"x": "random", "y": None, "resolution": 2, "horizon": DEFAULT_HORIZON, "radius": None},
                  randomized=True),
        Operation("hitting_times", _op_hitting, {"U": None, "V": None, "horizon": 1000, "witnesses": True},
                  randomized=False),
        Operation("characteristic_chain", _op_chain,
                  {"x": None, "y": None, "eta": 0.25, "horizon": DEFAULT_HORIZON, "full": False},
                  randomized=False, needs_cocycle=True),
        Operation("claim2_test", _op_claim2,
                  {"samples": 20, "eta": [0.25, 2.0 ** -4, 2.0 ** -6], "horizons": [DEFAULT_HORIZON], "radius": 0.25,
                   "resolution": 2}, randomized=True, needs_cocycle=True),
        Operation("claim3_test", _op_claim3,
                  {"samples": 20, "eta": 0.25, "eta_prime": 2.0 ** -5, "horizon": 100_000, "resolution": 2},
                  randomized=True, needs_cocycle=True),
    ]
}


# ---------------------------------------------------------------- reports


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def replay_token(config: dict, row: int, payload) -> str:
    digest = hashlib.sha256(canonical({"config": config, "row": row, "payload": payload}).encode())
    return digest.hexdigest()


def timestamp() -> str:
    """UTC timestamp, pinned by SOURCE_DATE_EPOCH when that variable is set."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(epoch) if epoch is not None else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def _jsonable(obj):
    """Replace non-finite floats (never expected) so rows stay strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def execute(cfg: ExperimentConfig) -> tuple[list[dict], np.ndarray | None]:
    """Run the operation and return report rows (payload plus embedded config) and any trace."""
    cfg.validate()
    system = build_system(cfg)
    params = cfg.resolved_params()
    op = OPERATIONS[cfg.operation]
    rng = None if cfg.seed is None else np.random.default_rng(cfg.seed)
    config_json = _jsonable(cfg.to_json())
    try:
        payloads, trace = op.func(system, params, rng)
        payloads = [{"status": "ok", **pl} if "status" not in pl else pl for pl in payloads]
    except DynamicsError as exc:
        payloads, trace = [{"status": "error", "error": type(exc).__name__, "message": str(exc)}], None
    rows = []
    stamp = timestamp()
    for i, pl in enumerate(payloads):
        pl = _jsonable(pl)
        rows.append({
            "experiment": cfg.id,
            "row": i,
            "timestamp": stamp,
            "config": config_json,
            "payload": pl,
            "replay_token": replay_token(config_json, i, pl),
        })
    return rows, trace


def output_stem(cfg: ExperimentConfig, override: str | None = None) -> Path:
    if override:
        return Path(override)
    if cfg.output:
        return Path(cfg.output)
    return Path(os.environ.get(OUTPUT_ENV, "reports")) / cfg.id


def summarize(cfg: ExperimentConfig, rows: list[dict]) -> str:
    lines = [f"experiment {cfg.id}: {cfg.operation} on {cfg.system}" + (" with cocycle" if cfg.cocycle else ""),
             f"seed {cfg.seed}", f"rows {len(rows)}"]
    for r in rows:
        pl = r["payload"]
        brief = {k: v for k, v in pl.items() if isinstance(v, (int, float, str, bool)) or v is None}
        if "verdict" in pl:
            brief["bucket"] = pl["verdict"]["bucket"]
        lines.append(f"  row {r['row']}: " + ", ".join(f"{k}={v}" for k, v in sorted(brief.items())))
    return "\n".join(lines) + "\n"


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(cfg: ExperimentConfig, rows: list[dict], trace, stem: Path) -> list[Path]:
    """Write ``<stem>.jsonl``, ``<stem>.summary.txt`` and, for traces, ``<stem>.dat``.

    Everything is rendered in memory first, so a failure leaves no partial files.
    """
    jsonl = "".join(canonical(r) + "\n" for r in rows)
    files = {stem.with_name(stem.name + ".jsonl"): jsonl,
             stem.with_name(stem.name + ".summary.txt"): summarize(cfg, rows)}
    if trace is not None:
        files[stem.with_name(stem.name + ".dat")] = format_trace(trace)
    for path, text in files.items():
        _atomic_write(path, text)
    return list(files)


def format_trace(trace) -> str:
    return "# n distance\n" + "".join(f"{n} {float(d)!r}\n" for n, d in enumerate(trace))


def run(path, overrides: dict | None = None, output: str | None = None) -> tuple[list[dict], list[Path]]:
    cfg = load_config(path, overrides)
    rows, trace = execute(cfg)
    return rows, write_report(cfg, rows, trace, output_stem(cfg, output))


# ----------------------------------------------------------------- replay


@dataclass
class ReplayResult:
    match: bool
    differences: list[str]

    def to_json(self):
        return {"match": self.match, "differences": self.differences}


def compare_payloads(expected, actual, tol: float = 0.0, path: str = "$") -> list[str]:
    """Differences between two JSON payloads; floats may differ by ``tol``."""
    if isinstance(expected, dict) and isinstance(actual, dict):
        out = []
        for k in sorted(set(expected) | set(actual)):
            if k not in expected or k not in actual:
                out.append(f"{path}.{k}: present on one side only")
            else:
                out += compare_payloads(expected[k], actual[k], tol, f"{path}.{k}")
        return out
    if isinstance(expected, list) and isinstance(actual, list):
        if len(expected) != len(actual):
            return [f"{path}: length {len(expected)} != {len(actual)}"]
        out = []
        for i, (a, b) in enumerate(zip(expected, actual)):
            out += compare_payloads(a, b, tol, f"{path}[{i}]")
        return out
    numeric = (int, float)
    if (isinstance(expected, numeric) and isinstance(actual, numeric)
            and not isinstance(expected, bool) and not isinstance(actual, bool)):
        if expected == actual or abs(expected - actual) <= tol:
            return []
        return [f"{path}: {expected!r} != {actual!r}"]
    return [] if expected == actual else [f"{path}: {expected!r} != {actual!r}"]


def replay_row(row: dict, seed: int | None = None) -> ReplayResult:
    """Re-execute the embedded config and compare the payload of the same row index.

    Symbolic systems must match bit-exactly; others within 1e-9.
    ``seed`` replaces the embedded seed (a changed seed should mismatch).
    """
    conf = dict(row["config"])
    if seed is not None:
        conf["seed"] = seed
    cfg = ExperimentConfig.from_dict({k: v for k, v in conf.items() if v is not None})
    system = build_system(cfg)
    tol = 0.0 if system.symbolic else FLOAT_TOLERANCE
    fresh, _ = execute(cfg)
    idx = row["row"]
    if idx >= len(fresh):
        return ReplayResult(False, [f"row {idx} missing from the replay ({len(fresh)} rows)"])
    diffs = compare_payloads(row["payload"], fresh[idx]["payload"], tol)
    if not diffs and tol == 0.0 and fresh[idx]["replay_token"] != row["replay_token"]:
        diffs.append("replay token differs")
    return ReplayResult(not diffs, diffs)


def read_report(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
