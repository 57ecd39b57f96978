"""Experiment config files (YAML; JSON also parses) and dry-run validation.

Defaults follow the reference setup: 7 robots, 2 top-level robots,
e_t=5, e_r=15, 10 rounds, lambda 0.5/0.5.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .data import GlobalDataset, PartitionPlan, Scheme, generate_synthetic, load_csv
from .model import Hyperparams, LearnerSpec
from .orchestrator import Algorithm, ExperimentConfig

DEFAULTS: dict[str, Any] = {
    "learner": {"kind": "logistic", "hidden_units": 16},
    "data": {
        "source": "synthetic",
        "classes": 7,
        "features": 10,
        "per_class": 200,
        "separation": 3.0,
        "seed": 0,
        "path": None,
        "label_column": "label",
        "feature_columns": None,
    },
    "federation": {"n": 7, "j": 2, "assignment": "balanced", "manual": None},
    "training": {
        "eta": 0.005,
        "batch_size": 16,
        "e_t": 5,
        "e_r": 15,
        "rounds": 10,
        "lambda_dds": 0.5,
        "lambda_dqs": 0.5,
        "test_fraction": 0.2,
    },
    "partition": {"scheme": "quantity_skew", "beta": 0.8, "alpha": 0.0},
    "arms": ["FedAvg", "MTF-Grasp-Avg"],
    "seeds": [0],
    "output_dir": "results",
}

_SECTIONS = ("learner", "data", "federation", "training")
_PARTITION_KEYS = {"scheme", "beta", "alpha"}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str) -> None:
        super().__init__(f"{key}: {message}")
        self.key = key


def _num(value: Any, key: str, kind=float) -> Any:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        raise ConfigError(key, f"expected a finite number, got {value!r}")
    return float(value)


def _as_list(value: Any) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


@dataclass
class RunManifest:
    """Everything a ``run`` needs, after type checking but before domain validation."""

    config_path: Path | None
    output_dir: Path
    seeds: list[int]
    arms: list[Algorithm]
    raw: dict[str, Any] = field(repr=False)
    plans: list[dict[str, Any]] = field(default_factory=list)

    @property
    def learner(self) -> dict:
        return self.raw["learner"]

    @property
    def training(self) -> dict:
        return self.raw["training"]

    @property
    def federation(self) -> dict:
        return self.raw["federation"]

    def load_data(self) -> GlobalDataset:
        d = self.raw["data"]
        if d["source"] == "csv":
            path = Path(d["path"])
            if not path.is_absolute() and self.config_path is not None:
                path = self.config_path.parent / path
            return load_csv(path, d["label_column"], d["feature_columns"])
        return generate_synthetic(d["classes"], d["features"], d["per_class"], d["separation"], d["seed"])

    def experiment(self, plan: dict[str, Any], algorithm: Algorithm, seed: int, input_dim: int, num_classes: int) -> ExperimentConfig:
        """Build a validated ExperimentConfig; raises ValueError on infeasible settings."""
        tr, fed = self.training, self.federation
        learner = LearnerSpec(self.learner["kind"], input_dim, num_classes, self.learner["hidden_units"])
        hp = Hyperparams(
            eta=tr["eta"],
            batch_size=tr["batch_size"],
            e_t=tr["e_t"],
            e_r=tr["e_r"],
            rounds=tr["rounds"],
            lambda_dds=tr["lambda_dds"],
            lambda_dqs=tr["lambda_dqs"],
            j=fed["j"],
            seed=seed,
        )
        pp = PartitionPlan(plan["scheme"], fed["n"], fed["j"], plan.get("alpha", 0.0), plan.get("beta", 0.0), seed)
        return ExperimentConfig(learner, hp, pp, algorithm, fed["assignment"], fed["manual"], tr["test_fraction"])


def _merge_section(name: str, given: Any, defaults: dict) -> dict:
    if given is None:
        return copy.deepcopy(defaults)
    if not isinstance(given, dict):
        raise ConfigError(name, "expected a mapping")
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if k not in defaults:
            raise ConfigError(f"{name}.{k}", "unknown key")
        out[k] = v
    return out


def _expand_partitions(given: Any) -> list[dict[str, Any]]:
    entries = given if isinstance(given, list) else [given]
    if not entries:
        raise ConfigError("partition", "empty partition list")
    plans = []
    for pos, entry in enumerate(entries):
        key = "partition" if not isinstance(given, list) else f"partition[{pos}]"
        if not isinstance(entry, dict):
            raise ConfigError(key, "expected a mapping")
        for k in entry:
            if k not in _PARTITION_KEYS:
                raise ConfigError(f"{key}.{k}", "unknown key")
        try:
            scheme = Scheme(entry.get("scheme", "quantity_skew"))
        except ValueError:
            raise ConfigError(f"{key}.scheme", f"unknown scheme {entry.get('scheme')!r}") from None
        if scheme is Scheme.IID:
            plans.append({"scheme": scheme.value})
        elif scheme is Scheme.QUANTITY_SKEW:
            for b in _as_list(entry.get("beta", DEFAULTS["partition"]["beta"])):
                plans.append({"scheme": scheme.value, "beta": _num(b, f"{key}.beta")})
        else:
            for a in _as_list(entry.get("alpha", DEFAULTS["partition"]["alpha"])):
                plans.append({"scheme": scheme.value, "alpha": _num(a, f"{key}.alpha")})
    return plans


def parse_config(raw: Any, config_path: Path | None = None) -> RunManifest:
    """Type-check a config mapping and fill defaults.

    Raises ConfigError naming the offending key. Feasibility (j < n, ranges)
    is left to ``validate``.
    """
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    top_keys = set(_SECTIONS) | {"partition", "arms", "seeds", "output_dir"}
    for k in raw:
        if k not in top_keys:
            raise ConfigError(str(k), "unknown key")

    cfg: dict[str, Any] = {s: _merge_section(s, raw.get(s), DEFAULTS[s]) for s in _SECTIONS}

    lr = cfg["learner"]
    if lr["kind"] not in ("logistic", "mlp"):
        raise ConfigError("learner.kind", f"expected 'logistic' or 'mlp', got {lr['kind']!r}")
    lr["hidden_units"] = _num(lr["hidden_units"], "learner.hidden_units", int)

    d = cfg["data"]
    if d["source"] not in ("synthetic", "csv"):
        raise ConfigError("data.source", f"expected 'synthetic' or 'csv', got {d['source']!r}")
    if d["source"] == "csv":
        if not isinstance(d["path"], str):
            raise ConfigError("data.path", "csv source needs a file path")
        if not isinstance(d["label_column"], str):
            raise ConfigError("data.label_column", "expected a column name")
        if d["feature_columns"] is not None and not (
            isinstance(d["feature_columns"], list) and all(isinstance(c, str) for c in d["feature_columns"])
        ):
            raise ConfigError("data.feature_columns", "expected a list of column names")
    for k in ("classes", "features", "per_class", "seed"):
        d[k] = _num(d[k], f"data.{k}", int)
    d["separation"] = _num(d["separation"], "data.separation")

    fed = cfg["federation"]
    fed["n"] = _num(fed["n"], "federation.n", int)
    fed["j"] = _num(fed["j"], "federation.j", int)
    if fed["assignment"] not in ("balanced", "manual"):
        raise ConfigError("federation.assignment", f"expected 'balanced' or 'manual', got {fed['assignment']!r}")
    if fed["manual"] is not None:
        if not isinstance(fed["manual"], dict):
            raise ConfigError("federation.manual", "expected a mapping of top robot -> member list")
        try:
            fed["manual"] = {int(t): [int(r) for r in _as_list(rs)] for t, rs in fed["manual"].items()}
        except (TypeError, ValueError):
            raise ConfigError("federation.manual", "robot ids must be integers") from None
    if fed["assignment"] == "manual" and fed["manual"] is None:
        raise ConfigError("federation.manual", "manual assignment selected but no mapping given")

    tr = cfg["training"]
    for k in ("batch_size", "e_t", "e_r", "rounds"):
        tr[k] = _num(tr[k], f"training.{k}", int)
    for k in ("eta", "lambda_dds", "lambda_dqs", "test_fraction"):
        tr[k] = _num(tr[k], f"training.{k}")

    plans = _expand_partitions(raw.get("partition", DEFAULTS["partition"]))

    arms = []
    for pos, a in enumerate(_as_list(raw.get("arms", DEFAULTS["arms"]))):
        try:
            arms.append(Algorithm(a))
        except ValueError:
            choices = ", ".join(x.value for x in Algorithm)
            raise ConfigError(f"arms[{pos}]", f"unknown algorithm {a!r} (choose from {choices})") from None
    if not arms:
        raise ConfigError("arms", "at least one arm required")

    seeds = [_num(s, f"seeds[{k}]", int) for k, s in enumerate(_as_list(raw.get("seeds", DEFAULTS["seeds"])))]
    if not seeds:
        raise ConfigError("seeds", "at least one seed required")

    out = raw.get("output_dir", DEFAULTS["output_dir"])
    if not isinstance(out, str):
        raise ConfigError("output_dir", "expected a path string")
    cfg["partition"] = plans
    return RunManifest(config_path, Path(out), seeds, arms, cfg, plans)


def load_config(path) -> RunManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    return parse_config(raw, path)


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def lines(self) -> list[str]:
        if not self.errors and not self.warnings:
            return ["OK"]
        return [f"ERROR: {e}" for e in self.errors] + [f"WARNING: {w}" for w in self.warnings] + (
            ["OK (with warnings)"] if self.ok else []
        )


def validate(manifest: RunManifest, data: GlobalDataset | None = None) -> ValidationReport:
    """Dry-run feasibility checks; nothing is trained.

    Pass ``data`` to skip loading it again; if loading fails the problem is
    reported instead of raised.
    """
    rep = ValidationReport()
    fed, tr = manifest.federation, manifest.training
    n, j = fed["n"], fed["j"]
    if n < 2:
        rep.errors.append(f"federation.n={n}: need at least 2 robots")
    if j < 1:
        rep.errors.append(f"federation.j={j}: need at least one top-level robot")
    if j >= n:
        rep.errors.append(f"federation.j={j} >= federation.n={n}: tier selection infeasible")

    try:
        Hyperparams(tr["eta"], tr["batch_size"], tr["e_t"], tr["e_r"], tr["rounds"], tr["lambda_dds"], tr["lambda_dqs"], max(j, 1))
    except ValueError as exc:
        rep.errors.append(f"training: {exc}")
    if not 0.0 < tr["test_fraction"] < 1.0:
        rep.errors.append(f"training.test_fraction={tr['test_fraction']}: must be in (0, 1)")

    for plan in manifest.plans:
        if plan["scheme"] == "quantity_skew":
            b = plan["beta"]
            if not 0.0 <= b <= 1.0:
                rep.errors.append(f"partition beta={b}: must be in [0, 1]")
            elif b == 1.0 and tr["e_r"] > 0:
                rep.warnings.append("partition beta=1: empty low-level robots (robots j..n-1 get no data)")
            elif b == 0.0:
                rep.warnings.append("partition beta=0: robots 0..j-1 get no data")
        elif plan["scheme"] == "class_skew" and not 0.0 <= plan["alpha"] <= 1.0:
            rep.errors.append(f"partition alpha={plan['alpha']}: must be in [0, 1]")

    if fed["assignment"] == "manual" and fed["manual"] is not None:
        members = sorted(r for rs in fed["manual"].values() for r in rs) + sorted(
            t for t, rs in fed["manual"].items() if t not in rs
        )
        if sorted(members) != list(range(n)):
            rep.errors.append(f"federation.manual does not partition robots 0..{n - 1}")
        if len(fed["manual"]) != j:
            rep.errors.append(f"federation.manual names {len(fed['manual'])} top robots, j={j}")

    if data is None:
        try:
            data = manifest.load_data()
        except (OSError, ValueError) as exc:
            rep.errors.append(f"data: {exc}")
            return rep
    if manifest.raw["data"]["source"] == "synthetic" and data.m != manifest.raw["data"]["classes"]:
        rep.errors.append("data: class count mismatch")
    if data.m < 1:
        rep.errors.append("data: no classes")
    train_size = len(data) - sum(int(round(tr["test_fraction"] * len(ix))) for ix in data.class_indices())
    if 0.0 < tr["test_fraction"] < 1.0:
        if train_size < n:
            rep.errors.append(f"data: {train_size} training samples cannot cover {n} robots")
        if train_size == len(data):
            rep.errors.append("data: test split would be empty")
    try:
        LearnerSpec(manifest.learner["kind"], data.d, data.m, manifest.learner["hidden_units"])
    except ValueError as exc:
        rep.errors.append(f"learner: {exc}")
    return rep
