"""Config-driven experiment sweeps that write the figure tables.

A config is a JSON document::

    {
      "experiment": "steady-state",          # or "star-analysis", "rpl"
      "seed": 1,
      "replications": 10,
      "output_dir": "out",
      "topology": {"kind": "random_geometric", "n": 200, "side": 100,
                   "densities": [5, 10, 15]},
      "policies": [{"type": "fixed", "k": 1},
                   {"type": "adaptive", "alpha": "2/3", "k_min": 1, "k_max": 30}],
      "sim": {"i_min": 1, "i_max": 1, "duration": 200, "warmup": 50,
              "synchronized": false, "steady_state": true}
    }

``star-analysis`` takes an ``"alphas"`` list instead of topology and policies.
``rpl`` takes ``topology.root`` and defaults its timing to the RPL case study.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import os
import re
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from .analysis import p_alpha_table
from .engine import SEED_TOPOLOGY, SEED_TRICKLE, SimConfig, derive_seed, run_batch, worker_count
from .metrics import (
    broadcast_probability_per_degree,
    broadcasts_per_interval,
    fairness_index,
    mean_k_per_degree,
    per_node_probabilities,
)
from .rpl import RPL_DURATION, RPL_I_MAX, RPL_I_MIN, run_rpl
from .topology import TopologySpec
from .trickle import Adaptive, Fixed, RedundancyPolicy, TrickleParams

log = logging.getLogger(__name__)

KINDS = ("steady-state", "star-analysis", "rpl")
FIXED_FILE = "fig1_fixed_k.csv"
ADAPTIVE_FILE = "fig2_adaptive.csv"
MEAN_K_FILE = "fig3_mean_k.csv"
SUMMARY_FILE = "steady_summary.csv"
FIGP_FILE = "figp_analysis.csv"
RPL_FILE = "rpl_metrics.csv"
MANIFEST_FILE = "manifest.json"

DEGREE_HEADER = "topology,policy,degree,statistic,value,stderr,nodes,replications"


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def fmt(x: float | None) -> str:
    """Nine significant digits; empty for missing or NaN."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{x:.9g}"


_WS = re.compile(r"[ \t\n\r]*")


def _value_offsets(text: str) -> dict[tuple, int]:
    """Offset of every value in a valid JSON document, keyed by its path."""
    decoder = json.JSONDecoder()
    out: dict[tuple, int] = {}

    def skip(i: int) -> int:
        return _WS.match(text, i).end()

    def walk(i: int, path: tuple) -> int:
        i = skip(i)
        out[path] = i
        ch = text[i]
        if ch not in "{[":
            return decoder.raw_decode(text, i)[1]
        close = "}" if ch == "{" else "]"
        i = skip(i + 1)
        if text[i] == close:
            return i + 1
        index = 0
        while True:
            if ch == "{":
                key, i = json.decoder.scanstring(text, skip(i) + 1)
                i = skip(i) + 1  # past ':'
                i = walk(i, path + (key,))
            else:
                i = walk(i, path + (index,))
                index += 1
            i = skip(i)
            if text[i] == close:
                return i + 1
            i += 1  # past ','

    walk(0, ())
    return out


def _locate(text: str, path: tuple) -> int | None:
    """Line of ``path`` in JSON ``text``, or of its nearest present ancestor."""
    if not text:
        return None
    try:
        offsets = _value_offsets(text)
    except (ValueError, IndexError):
        return None
    for cut in range(len(path), -1, -1):
        if path[:cut] in offsets:
            return text.count("\n", 0, offsets[path[:cut]]) + 1
    return None


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    replications: int
    output_dir: Path
    topologies: tuple[TopologySpec, ...] = ()
    root: int = 0
    policies: tuple[RedundancyPolicy, ...] = ()
    i_min: float = 1.0
    i_max: float = 1.0
    sim: SimConfig | None = None
    alphas: tuple[float, ...] = ()
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def config_hash(self) -> str:
        """Hash of the effective config; the output location does not change results."""
        content = {k: v for k, v in self.raw.items() if k != "output_dir"}
        return hashlib.sha256(json.dumps(content, sort_keys=True).encode()).hexdigest()

    def params(self, policy: RedundancyPolicy) -> TrickleParams:
        return TrickleParams(self.i_min, self.i_max, policy)

    def derived_seeds(self) -> list[dict[str, int]]:
        return [
            {
                "replication": r,
                "topology": derive_seed(self.seed, r, SEED_TOPOLOGY),
                "trickle": derive_seed(self.seed, r, SEED_TRICKLE),
            }
            for r in range(self.replications)
        ]

    def estimated_events(self) -> int:
        """Rough event count: one decision per node-interval plus one per heard message."""
        if self.kind == "star-analysis":
            return 0
        total = 0.0
        for spec in self.topologies:
            nodes = spec.n + 1 if spec.kind == "star" else spec.n
            degree = spec.avg_degree or (spec.n - 1 if spec.kind == "single_cell" else 2 * spec.n / (spec.n + 1))
            if self.kind == "rpl" or not self.sim.steady_state:
                intervals = math.log2(max(self.sim.duration / self.i_min, 2.0)) + 1
            else:
                intervals = self.sim.duration / self.i_max
            total += nodes * intervals * (2 + degree)
        return int(total * len(self.policies) * self.replications)


def _parse_number(value: Any, path: tuple, text: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{'.'.join(map(str, path))}: expected a number", _locate(text, path))
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(Fraction(value))
        except (ValueError, ZeroDivisionError):
            pass
    raise ConfigError(f"{'.'.join(map(str, path))}: expected a number, got {value!r}", _locate(text, path))


def _parse_int(value: Any, path: tuple, text: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{'.'.join(map(str, path))}: expected an integer, got {value!r}", _locate(text, path))
    return value


def _parse_policy(doc: Any, i: int, text: str) -> RedundancyPolicy:
    path = ("policies", i)
    if not isinstance(doc, dict) or "type" not in doc:
        raise ConfigError(f"policies[{i}] must be an object with a 'type'", _locate(text, ("policies",)))
    kind = doc["type"]
    try:
        if kind == "fixed":
            return Fixed(_parse_int(doc.get("k"), path + ("k",), text))
        if kind == "adaptive":
            return Adaptive(
                alpha=_parse_number(doc.get("alpha"), path + ("alpha",), text),
                k_min=_parse_int(doc.get("k_min", 1), path + ("k_min",), text),
                k_max=_parse_int(doc.get("k_max", 10), path + ("k_max",), text),
            )
    except ConfigError:
        raise
    except ValueError as exc:
        key = "alpha" if "alpha" in str(exc) else ("k_max" if "k_max" in str(exc) else "k_min")
        raise ConfigError(f"policies[{i}]: {exc}", _locate(text, path + (key,))) from None
    raise ConfigError(f"policies[{i}]: unknown policy type {kind!r}", _locate(text, path + ("type",)))


def parse_config(doc: dict, text: str = "", overrides: dict | None = None) -> ExperimentConfig:
    """Validate a config document; every parameter is checked before any run starts."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object", 1)
    doc = copy.deepcopy(doc)
    for key, value in (overrides or {}).items():
        if value is not None:
            doc[key] = value
    kind = doc.get("experiment")
    if kind not in KINDS:
        raise ConfigError(f"experiment must be one of {KINDS}, got {kind!r}", _locate(text, ("experiment",)))
    seed = _parse_int(doc.get("seed", 0), ("seed",), text)
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer", _locate(text, ("seed",)))
    replications = _parse_int(doc.get("replications", 1), ("replications",), text)
    if replications < 1:
        raise ConfigError("replications must be >= 1", _locate(text, ("replications",)))
    output_dir = Path(doc.get("output_dir", "out"))

    if kind == "star-analysis":
        alphas = doc.get("alphas")
        if not isinstance(alphas, list) or not alphas:
            raise ConfigError("star-analysis needs a non-empty 'alphas' list", _locate(text, ("alphas",)))
        parsed = []
        for i, a in enumerate(alphas):
            value = _parse_number(a, ("alphas",), text)
            if not 0.0 < value <= 1.0:
                raise ConfigError(f"alphas[{i}] = {a!r} is outside (0, 1]", _locate(text, ("alphas",)))
            parsed.append(value)
        return ExperimentConfig(kind, seed, replications, output_dir, alphas=tuple(parsed), raw=doc)

    topo = doc.get("topology")
    if not isinstance(topo, dict):
        raise ConfigError("missing 'topology' object", _locate(text, ("topology",)))
    topo_kind = topo.get("kind", "random_geometric")
    n = _parse_int(topo.get("n"), ("topology", "n"), text)
    side = _parse_number(topo.get("side", 100), ("topology", "side"), text)
    try:
        if topo_kind == "random_geometric":
            densities = topo.get("densities")
            if not isinstance(densities, list) or not densities:
                raise ConfigError("random_geometric topology needs a 'densities' list", _locate(text, ("topology", "densities")))
            specs = []
            for d in densities:
                value = _parse_number(d, ("topology", "densities"), text)
                if not 0 < value <= n - 1:
                    raise ConfigError(f"density {d!r} must lie in (0, n-1]", _locate(text, ("topology", "densities")))
                specs.append(TopologySpec("random_geometric", n, value, side))
        else:
            specs = [TopologySpec(topo_kind, n)]
            if n < 1:
                raise ConfigError("topology.n must be >= 1", _locate(text, ("topology", "n")))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), _locate(text, ("topology", "kind"))) from None
    root = _parse_int(topo.get("root", 0), ("topology", "root"), text)
    if kind == "rpl" and not 0 <= root < n:
        raise ConfigError(f"root {root} is not a node", _locate(text, ("topology", "root")))

    policies = doc.get("policies")
    if not isinstance(policies, list) or not policies:
        raise ConfigError("need a non-empty 'policies' list", _locate(text, ("policies",)))
    parsed_policies = tuple(_parse_policy(p, i, text) for i, p in enumerate(policies))

    sim_doc = doc.get("sim", {})
    if not isinstance(sim_doc, dict):
        raise ConfigError("'sim' must be an object", _locate(text, ("sim",)))
    defaults = (RPL_I_MIN, RPL_I_MAX, RPL_DURATION) if kind == "rpl" else (1.0, 1.0, 200.0)
    i_min = _parse_number(sim_doc.get("i_min", defaults[0]), ("sim", "i_min"), text)
    i_max = _parse_number(sim_doc.get("i_max", defaults[1]), ("sim", "i_max"), text)
    duration = _parse_number(sim_doc.get("duration", defaults[2]), ("sim", "duration"), text)
    try:
        TrickleParams(i_min, i_max, parsed_policies[0])
    except ValueError as exc:
        raise ConfigError(str(exc), _locate(text, ("sim", "i_max" if "i_max" in str(exc) else "i_min"))) from None
    warmup = sim_doc.get("warmup")
    try:
        sim = SimConfig(
            duration=duration,
            seed=seed,
            synchronized=bool(sim_doc.get("synchronized", False)),
            steady_state=bool(sim_doc.get("steady_state", kind == "steady-state")),
            warmup=None if warmup is None else _parse_number(warmup, ("sim", "warmup"), text),
            record="decisions",
        )
    except ValueError as exc:
        raise ConfigError(str(exc), _locate(text, ("sim",))) from None
    return ExperimentConfig(
        kind,
        seed,
        replications,
        output_dir,
        topologies=tuple(specs),
        root=root,
        policies=parsed_policies,
        i_min=i_min,
        i_max=i_max,
        sim=sim,
        raw=doc,
    )


def load_config(path: str | os.PathLike, overrides: dict | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    return parse_config(doc, text, overrides)


def _atomic_write(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _topology_label(spec: TopologySpec) -> str:
    if spec.kind == "random_geometric":
        return f"rgg_n{spec.n}_deg{spec.avg_degree:g}"
    return f"{spec.kind}_n{spec.n}"


def _degree_rows(topology: str, policy: str, profile) -> list[str]:
    return [
        ",".join(
            (topology, policy, str(d), profile.statistic, fmt(s.mean), fmt(s.stderr), str(s.nodes), str(s.replications))
        )
        for d, s in sorted(profile.rows.items())
    ]


def _steady_state(cfg: ExperimentConfig) -> dict[str, str]:
    fixed_rows, adaptive_rows, mean_k_rows = [], [], []
    summary = ["topology,policy,replication,fairness,mean_broadcasts_per_window"]
    for spec in cfg.topologies:
        label = _topology_label(spec)
        for policy in cfg.policies:
            log.info("steady-state %s %s x%d", label, policy.label(), cfg.replications)
            logs = run_batch(spec, cfg.params(policy), cfg.sim, cfg.replications)
            profile = broadcast_probability_per_degree(logs)
            target = fixed_rows if isinstance(policy, Fixed) else adaptive_rows
            target.extend(_degree_rows(label, policy.label(), profile))
            if isinstance(policy, Adaptive):
                mean_k_rows.extend(_degree_rows(label, policy.label(), mean_k_per_degree(logs)))
            for r, result in enumerate(logs):
                try:
                    fairness = fairness_index(per_node_probabilities(result))
                except ValueError:
                    fairness = float("nan")
                try:
                    window_mean = broadcasts_per_interval(result).mean
                except ValueError:
                    window_mean = float("nan")
                summary.append(f"{label},{policy.label()},{r},{fmt(fairness)},{fmt(window_mean)}")
    return {
        FIXED_FILE: "\n".join([DEGREE_HEADER] + fixed_rows) + "\n",
        ADAPTIVE_FILE: "\n".join([DEGREE_HEADER] + adaptive_rows) + "\n",
        MEAN_K_FILE: "\n".join([DEGREE_HEADER] + mean_k_rows) + "\n",
        SUMMARY_FILE: "\n".join(summary) + "\n",
    }


def _star_analysis(cfg: ExperimentConfig) -> dict[str, str]:
    lines = ["alpha,p_alpha,p_star_alpha"]
    lines += [f"{fmt(a)},{fmt(p)},{fmt(ps)}" for a, p, ps in p_alpha_table(cfg.alphas)]
    return {FIGP_FILE: "\n".join(lines) + "\n"}


def _rpl(cfg: ExperimentConfig) -> dict[str, str]:
    lines = ["config,replication,formation_time,mean_dio,stretch,fairness"]
    seeds = cfg.derived_seeds()
    for spec in cfg.topologies:
        label = _topology_label(spec)
        for r, s in enumerate(seeds):
            topology = spec.build(s["topology"])
            sim = SimConfig(duration=cfg.sim.duration, seed=s["trickle"], record="decisions", warmup=0.0)
            for policy in cfg.policies:
                _, m = run_rpl(topology, cfg.root, cfg.params(policy), sim)
                lines.append(
                    f"{label}/{policy.label()},{r},{fmt(m.formation_time)},{fmt(m.mean_dio)},"
                    f"{fmt(m.stretch)},{fmt(m.fairness)}"
                )
    return {RPL_FILE: "\n".join(lines) + "\n"}


def run_experiment(cfg: ExperimentConfig) -> dict[str, str]:
    """Run ``cfg`` and write its tables plus a manifest; returns ``{file: sha256}``."""
    runner = {"steady-state": _steady_state, "star-analysis": _star_analysis, "rpl": _rpl}[cfg.kind]
    tables = runner(cfg)
    hashes = {}
    for name, content in sorted(tables.items()):
        _atomic_write(cfg.output_dir / name, content)
        hashes[name] = hashlib.sha256(content.encode()).hexdigest()
    manifest = {
        "experiment": cfg.kind,
        "config_sha256": cfg.config_hash,
        "seed": cfg.seed,
        "replications": cfg.derived_seeds(),
        "files": hashes,
    }
    _atomic_write(cfg.output_dir / MANIFEST_FILE, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return hashes


def validation_report(cfg: ExperimentConfig) -> str:
    lines = [
        f"experiment: {cfg.kind}",
        f"config sha256: {cfg.config_hash}",
        f"output dir: {cfg.output_dir}",
        f"replications: {cfg.replications} (workers: {worker_count()})",
    ]
    if cfg.kind == "star-analysis":
        lines.append("alphas: " + ", ".join(fmt(a) for a in cfg.alphas))
    else:
        lines.append("topologies: " + ", ".join(_topology_label(s) for s in cfg.topologies))
        lines.append("policies: " + ", ".join(p.label() for p in cfg.policies))
        for s in cfg.derived_seeds():
            lines.append(f"  replication {s['replication']}: topology seed {s['topology']}, trickle seed {s['trickle']}")
    lines.append(f"estimated events: {cfg.estimated_events()}")
    return "\n".join(lines)
