"""Training loops: two-tier MTF-Grasp and single-tier FedAvg/FedNova baselines."""

from __future__ import annotations

import dataclasses
import statistics
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .aggregation import WeightedModel, aggregate_server, aggregate_tier, fedavg, fednova
from .data import ClientDataset, GlobalDataset, PartitionPlan, Scheme, stratified_split
from .model import Hyperparams, LearnerSpec, ModelParams, evaluate, init_model, local_update, num_batches
from .netledger import SCALAR_PAYLOAD, SERVER, SETUP_ROUND, CommLedger, PayloadKind
from .ranking import RankingScores, TierAssignment, rank_robots, select_tiers
from .rng import derive_seed

_TAG_INIT = 11

# local_update stages: a top-level robot trains twice per round
STAGE_MEMBER = 0
STAGE_SEED = 1


class Algorithm(str, Enum):
    FEDAVG = "FedAvg"
    FEDNOVA = "FedNova"
    MTF_AVG = "MTF-Grasp-Avg"
    MTF_NOVA = "MTF-Grasp-Nova"

    @property
    def tiered(self) -> bool:
        return self in (Algorithm.MTF_AVG, Algorithm.MTF_NOVA)

    @property
    def nova(self) -> bool:
        return self in (Algorithm.FEDNOVA, Algorithm.MTF_NOVA)


@dataclass(frozen=True)
class ExperimentConfig:
    learner: LearnerSpec
    hp: Hyperparams
    plan: PartitionPlan
    algorithm: Algorithm = Algorithm.MTF_AVG
    assignment: str = "balanced"
    manual_assignment: Mapping[int, Sequence[int]] | None = None
    test_fraction: float = 0.2

    def __post_init__(self) -> None:
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError(f"test_fraction must be in (0, 1), got {self.test_fraction}")
        if self.hp.j > self.plan.n:
            raise ValueError(f"j={self.hp.j} exceeds robot count n={self.plan.n}")
        if self.plan.scheme is Scheme.QUANTITY_SKEW and self.plan.j != self.hp.j:
            raise ValueError(f"partition j={self.plan.j} disagrees with training j={self.hp.j}")
        if self.assignment not in ("balanced", "manual"):
            raise ValueError(f"unknown assignment policy {self.assignment!r}")

    def with_seed(self, seed: int) -> ExperimentConfig:
        return dataclasses.replace(
            self,
            hp=dataclasses.replace(self.hp, seed=seed),
            plan=dataclasses.replace(self.plan, seed=seed),
        )

    def with_algorithm(self, algorithm: Algorithm | str) -> ExperimentConfig:
        return dataclasses.replace(self, algorithm=Algorithm(algorithm))


@dataclass
class RoundRecord:
    round: int
    global_accuracy: float
    per_robot_accuracy: dict[int, float]
    comm_params: int
    wall_time: float = 0.0

    def to_dict(self, with_time: bool = False) -> dict:
        out = {
            "round": self.round,
            "global_accuracy": self.global_accuracy,
            "per_robot_accuracy": {str(r): a for r, a in sorted(self.per_robot_accuracy.items())},
            "comm_params": self.comm_params,
        }
        if with_time:
            out["wall_time"] = self.wall_time
        return out


@dataclass
class RunResult:
    records: list[RoundRecord]
    model: ModelParams
    ledger: CommLedger
    parts: list[ClientDataset]
    scores: list[RankingScores] | None = None
    tiers: TierAssignment | None = None
    history: list[ModelParams] = field(default_factory=list)

    @property
    def final_accuracy(self) -> float:
        return self.records[-1].global_accuracy if self.records else float("nan")

    @property
    def best_accuracy(self) -> float:
        return max((r.global_accuracy for r in self.records), default=float("nan"))


def _train_member(
    w: ModelParams, spec: LearnerSpec, part: ClientDataset, epochs: int, hp: Hyperparams, round_index: int, stage: int
) -> tuple[ModelParams, int]:
    """Local training that tolerates empty robots: they return ``w`` with zero steps."""
    if part.total == 0 or epochs == 0:
        return w.copy(), 0
    return local_update(w, spec, part, epochs, hp, round_index, stage), epochs * num_batches(part.total, hp.batch_size)


def _robot_accuracies(models: Mapping[int, ModelParams], spec: LearnerSpec, test: GlobalDataset) -> dict[int, float]:
    return {r: evaluate(models[r], spec, test.X, test.y) for r in sorted(models)}


def _check_fleet(parts: Sequence[ClientDataset], spec: LearnerSpec) -> None:
    if not parts:
        raise ValueError("empty fleet")
    if sum(p.total for p in parts) == 0:
        raise ValueError("every robot is empty")
    for k, p in enumerate(parts):
        if p.robot_id != k:
            raise ValueError(f"robot at position {k} has id {p.robot_id}")
        if p.total and p.X.shape[1] != spec.input_dim:
            raise ValueError(f"robot {k} has feature dim {p.X.shape[1]}, learner expects {spec.input_dim}")


def initial_model(spec: LearnerSpec, hp: Hyperparams) -> ModelParams:
    return init_model(spec, derive_seed(hp.seed, _TAG_INIT))


def train_vanilla(
    parts: Sequence[ClientDataset],
    spec: LearnerSpec,
    hp: Hyperparams,
    test: GlobalDataset,
    nova: bool = False,
    keep_history: bool = False,
) -> RunResult:
    """Broadcast, train every robot for ``e_r`` epochs, aggregate; repeat ``hp.rounds`` times."""
    _check_fleet(parts, spec)
    ledger = CommLedger()
    w = initial_model(spec, hp)
    dim = spec.dim
    records: list[RoundRecord] = []
    history = [w.copy()] if keep_history else []

    for i in range(hp.rounds):
        t0 = time.perf_counter()
        ledger.open_round(i)
        local: dict[int, ModelParams] = {}
        updates = []
        for part in parts:
            r = part.robot_id
            ledger.send(SERVER, r, PayloadKind.MODEL, dim, i)
            local[r], steps = _train_member(w, spec, part, hp.e_r, hp, i, STAGE_MEMBER)
            ledger.send(r, SERVER, PayloadKind.MODEL, dim, i)
            updates.append(WeightedModel(local[r], part.total, steps))
        w = fednova(w, updates) if nova else fedavg(updates)
        records.append(
            RoundRecord(
                i,
                evaluate(w, spec, test.X, test.y),
                _robot_accuracies(local, spec, test),
                ledger.round_model_traffic(i),
                time.perf_counter() - t0,
            )
        )
        if keep_history:
            history.append(w.copy())

    for part in parts:
        ledger.send(SERVER, part.robot_id, PayloadKind.MODEL, dim, hp.rounds)
    return RunResult(records, w, ledger, list(parts), history=history)


def train_mtf(
    parts: Sequence[ClientDataset],
    spec: LearnerSpec,
    hp: Hyperparams,
    test: GlobalDataset,
    nova: bool = False,
    policy: str = "balanced",
    manual: Mapping[int, Sequence[int]] | None = None,
    keep_history: bool = False,
) -> RunResult:
    """Two-tier training.

    Robots report (DDS, sample count); the server ranks them and fixes the
    tiers once. Each round every top-level robot trains ``e_t`` epochs from
    the global model to get a seed model, every member of its low-level set
    (itself included) trains ``e_r`` epochs from that seed, the top robot
    averages its set, and the server averages the tier models by tier size.
    With ``nova`` the tier step uses FedNova relative to the seed model.
    """
    _check_fleet(parts, spec)
    ledger = CommLedger()
    dim = spec.dim

    for part in parts:
        ledger.send(part.robot_id, SERVER, PayloadKind.SCORES, SCALAR_PAYLOAD, SETUP_ROUND)
    scores = rank_robots([p.class_counts for p in parts], hp.lambda_dds, hp.lambda_dqs)
    tiers = select_tiers(scores, hp.j, policy, manual)

    w = initial_model(spec, hp)
    records: list[RoundRecord] = []
    history = [w.copy()] if keep_history else []
    by_id = {p.robot_id: p for p in parts}

    for i in range(hp.rounds):
        t0 = time.perf_counter()
        ledger.open_round(i)
        local: dict[int, ModelParams] = {}
        tier_out: dict[int, tuple[ModelParams, int]] = {}
        for t in tiers.top:
            ledger.send(SERVER, t, PayloadKind.MODEL, dim, i)
            seed_model, _ = _train_member(w, spec, by_id[t], hp.e_t, hp, i, STAGE_SEED)
            members = []
            for r in tiers.low_sets[t]:
                ledger.send(t, r, PayloadKind.MODEL, dim, i)
                local[r], steps = _train_member(seed_model, spec, by_id[r], hp.e_r, hp, i, STAGE_MEMBER)
                ledger.send(r, t, PayloadKind.MODEL, dim, i)
                members.append(WeightedModel(local[r], by_id[r].total, steps))
            tier_total = sum(m.weight for m in members)
            if tier_total == 0:
                tier_model = seed_model
            elif nova:
                tier_model = fednova(seed_model, members)
            else:
                tier_model = aggregate_tier(members)
            ledger.send(t, SERVER, PayloadKind.MODEL, dim, i)
            tier_out[t] = (tier_model, tier_total)
        # fixed id order keeps the server sum independent of ranking order
        w = aggregate_server([tier_out[t] for t in sorted(tier_out)])
        records.append(
            RoundRecord(
                i,
                evaluate(w, spec, test.X, test.y),
                _robot_accuracies(local, spec, test),
                ledger.round_model_traffic(i),
                time.perf_counter() - t0,
            )
        )
        if keep_history:
            history.append(w.copy())

    for part in parts:
        ledger.send(SERVER, part.robot_id, PayloadKind.MODEL, dim, hp.rounds)
    return RunResult(records, w, ledger, list(parts), scores, tiers, history)


def prepare(cfg: ExperimentConfig, data: GlobalDataset) -> tuple[list[ClientDataset], GlobalDataset]:
    """Hold out the stratified test split, then partition the rest across robots."""
    if data.d != cfg.learner.input_dim:
        raise ValueError(f"data has {data.d} features, learner expects {cfg.learner.input_dim}")
    if data.m > cfg.learner.num_classes:
        raise ValueError(f"data has {data.m} classes, learner has {cfg.learner.num_classes}")
    train, test = stratified_split(data, cfg.test_fraction, cfg.hp.seed)
    if len(test) == 0:
        raise ValueError("test split is empty")
    return cfg.plan.apply(train), test


def run_mtf_grasp(cfg: ExperimentConfig, data: GlobalDataset, keep_history: bool = False) -> RunResult:
    parts, test = prepare(cfg, data)
    return train_mtf(
        parts, cfg.learner, cfg.hp, test, cfg.algorithm.nova, cfg.assignment, cfg.manual_assignment, keep_history
    )


def run_vanilla(cfg: ExperimentConfig, data: GlobalDataset, keep_history: bool = False) -> RunResult:
    parts, test = prepare(cfg, data)
    result = train_vanilla(parts, cfg.learner, cfg.hp, test, cfg.algorithm.nova, keep_history)
    # ranking is not used for training here; kept so per-robot tables know which robots MTF would promote
    result.scores = rank_robots([p.class_counts for p in parts], cfg.hp.lambda_dds, cfg.hp.lambda_dqs)
    result.tiers = select_tiers(result.scores, cfg.hp.j, cfg.assignment, cfg.manual_assignment)
    return result


def run_experiment(cfg: ExperimentConfig, data: GlobalDataset, keep_history: bool = False) -> RunResult:
    if cfg.algorithm.tiered:
        return run_mtf_grasp(cfg, data, keep_history)
    return run_vanilla(cfg, data, keep_history)


@dataclass
class ArmSummary:
    algorithm: str
    seeds: list[int]
    final: list[float]
    best: list[float]
    per_robot: dict[int, list[float]]
    comm_total: list[int]

    @staticmethod
    def _mean_std(xs: list[float]) -> tuple[float, float]:
        if not xs:
            return float("nan"), float("nan")
        return statistics.fmean(xs), (statistics.stdev(xs) if len(xs) > 1 else 0.0)

    @property
    def final_mean_std(self) -> tuple[float, float]:
        return self._mean_std(self.final)

    @property
    def best_mean_std(self) -> tuple[float, float]:
        return self._mean_std(self.best)


@dataclass
class Comparison:
    setting: str
    arms: list[ArmSummary]

    def format(self) -> str:
        robots = sorted({r for a in self.arms for r in a.per_robot})
        head = ["algorithm", "final", "best"] + [f"R{r + 1}" for r in robots] + ["comm"]
        lines = ["\t".join(head)]
        for a in self.arms:
            fm, fs = a.final_mean_std
            bm, bs = a.best_mean_std
            cells = [a.algorithm, f"{fm:.4f}±{fs:.4f}", f"{bm:.4f}±{bs:.4f}"]
            cells += [f"{statistics.fmean(a.per_robot[r]):.4f}" for r in robots]
            cells.append(str(int(statistics.fmean(a.comm_total))))
            lines.append("\t".join(cells))
        return "\n".join(lines)


def compare_arms(cfgs: Sequence[ExperimentConfig], data: GlobalDataset, seeds: Sequence[int] | None = None) -> Comparison:
    """Run every arm on every seed and summarise final/best/per-robot accuracy.

    Arms must agree on everything but the algorithm; the partition each seed
    produces is checked to be identical across arms.
    """
    if not cfgs:
        raise ValueError("no arms to compare")
    ref = cfgs[0]
    for c in cfgs[1:]:
        if (c.learner, c.plan, c.hp, c.test_fraction) != (ref.learner, ref.plan, ref.hp, ref.test_fraction):
            raise ValueError(f"arm {c.algorithm.value} differs from {ref.algorithm.value} beyond the algorithm")
    seeds = list(seeds) if seeds is not None else [ref.hp.seed]

    arms = []
    first_parts: dict[int, list[np.ndarray]] = {}
    for c in cfgs:
        summary = ArmSummary(c.algorithm.value, seeds, [], [], {}, [])
        for s in seeds:
            res = run_experiment(c.with_seed(s), data)
            idx = [p.index for p in res.parts]
            if s in first_parts:
                if len(idx) != len(first_parts[s]) or any(
                    not np.array_equal(a, b) for a, b in zip(idx, first_parts[s])
                ):
                    raise RuntimeError(f"partition for seed {s} differs across arms")
            else:
                first_parts[s] = idx
            summary.final.append(res.final_accuracy)
            summary.best.append(res.best_accuracy)
            if res.records:
                for r, acc in res.records[-1].per_robot_accuracy.items():
                    summary.per_robot.setdefault(r, []).append(acc)
            summary.comm_total.append(sum(rec.comm_params for rec in res.records))
        arms.append(summary)
    return Comparison(ref.plan.label, arms)
