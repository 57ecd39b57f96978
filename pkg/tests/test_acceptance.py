"""Exit criteria. Each test prints one PASS/FAIL line in the terminal summary."""

from __future__ import annotations

import math
import statistics
import time
from contextlib import contextmanager

import numpy as np
import pytest
import yaml

from mtfgrasp.aggregation import WeightedModel, aggregate_server, aggregate_tier, fedavg, fednova
from mtfgrasp.cli import main
from mtfgrasp.config import DEFAULTS
from mtfgrasp.data import PartitionPlan, generate_synthetic
from mtfgrasp.model import Hyperparams, LearnerSpec, loss_and_grad
from mtfgrasp.netledger import LinkClass
from mtfgrasp.orchestrator import Algorithm, ExperimentConfig, run_experiment, run_mtf_grasp, run_vanilla
from mtfgrasp.ranking import compute_dds

from .conftest import ACCEPTANCE_LINES


@contextmanager
def criterion(number: int, name: str, budget_s: float | None = None):
    t0 = time.perf_counter()
    detail = {}
    try:
        yield detail
        elapsed = time.perf_counter() - t0
        if budget_s is not None:
            assert elapsed < budget_s, f"took {elapsed:.2f}s, budget {budget_s}s"
    except BaseException as exc:
        ACCEPTANCE_LINES.append(f"[{number}] FAIL  {name}: {exc}".splitlines()[0])
        raise
    extra = ", ".join(f"{k}={v}" for k, v in detail.items())
    ACCEPTANCE_LINES.append(f"[{number}] PASS  {name} ({time.perf_counter() - t0:.2f}s{', ' + extra if extra else ''})")


def trend_task():
    d = DEFAULTS["data"]
    return generate_synthetic(d["classes"], d["features"], d["per_class"], d["separation"], d["seed"])


def default_cfg(algorithm: str, beta: float, seed: int, m: int, d: int) -> ExperimentConfig:
    tr = DEFAULTS["training"]
    hp = Hyperparams(
        eta=tr["eta"], batch_size=tr["batch_size"], e_t=tr["e_t"], e_r=tr["e_r"], rounds=tr["rounds"],
        lambda_dds=tr["lambda_dds"], lambda_dqs=tr["lambda_dqs"], j=2, seed=seed,
    )
    return ExperimentConfig(
        LearnerSpec("logistic", d, m), hp, PartitionPlan("quantity_skew", 7, 2, beta=beta, seed=seed), Algorithm(algorithm)
    )


def test_1_communication_equality():
    with criterion(1, "communication load is 2*n*|theta| per round", budget_s=1.0) as info:
        g = generate_synthetic(7, 10, 20, 3.0, seed=0)
        spec = LearnerSpec("logistic", 10, 7)
        cfg = ExperimentConfig(
            spec, Hyperparams(e_t=1, e_r=1, rounds=10, j=2), PartitionPlan("quantity_skew", 7, 2, beta=0.8)
        )
        n, j, dim = 7, 2, spec.dim
        mtf = run_mtf_grasp(cfg, g)
        van = run_vanilla(cfg.with_algorithm("FedAvg"), g)
        assert len(mtf.records) == 10
        for i in range(10):
            assert mtf.ledger.round_model_traffic(i) == 2 * n * dim
            assert mtf.ledger.traffic(i, LinkClass.SERVER_TOP) == 2 * j * dim
            assert mtf.ledger.traffic(i, LinkClass.TOP_LOW) == 2 * (n - j) * dim
            assert mtf.records[i].comm_params == 2 * n * dim
            assert van.ledger.round_model_traffic(i) == 2 * n * dim
        info["per_round"] = 2 * n * dim


def test_2_two_step_aggregation_identity():
    with criterion(2, "tier-then-server aggregation equals flat FedAvg (200 instances)", budget_s=5.0) as info:
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(200):
            n = int(rng.integers(2, 12))
            models = [rng.normal(size=100) for _ in range(n)]
            counts = rng.integers(1, 1000, size=n).tolist()
            k = int(rng.integers(1, n + 1))
            label = rng.integers(0, k, size=n)
            tiers = []
            for t in sorted(set(label.tolist())):
                members = [r for r in range(n) if label[r] == t]
                tm = aggregate_tier([WeightedModel(models[r], counts[r]) for r in members])
                tiers.append((tm, sum(counts[r] for r in members)))
            two_step = aggregate_server(tiers)
            total = math.fsum(counts)
            flat = np.array([math.fsum(c * m[q] for c, m in zip(counts, models)) / total for q in range(100)])
            rel = np.max(np.abs(two_step - flat)) / np.max(np.abs(flat))
            worst = max(worst, rel)
            assert rel < 1e-10
        info["max_rel_err"] = f"{worst:.1e}"


def test_3_reduction_to_vanilla():
    with criterion(3, "j=n, singleton tiers, e_t=0 reproduces FedAvg for 10 rounds", budget_s=30.0) as info:
        g = trend_task()
        spec = LearnerSpec("logistic", g.d, g.m)
        worst = 0.0
        for scheme in ("iid", "class_skew"):
            for seed in (0, 1):
                hp = Hyperparams(eta=0.005, batch_size=16, e_t=0, e_r=15, rounds=10, j=7, seed=seed)
                cfg = ExperimentConfig(spec, hp, PartitionPlan(scheme, 7, 7, alpha=0.25, seed=seed), Algorithm.MTF_AVG)
                mtf = run_mtf_grasp(cfg, g, keep_history=True)
                van = run_vanilla(cfg.with_algorithm("FedAvg"), g, keep_history=True)
                assert all(v == [t] for t, v in mtf.tiers.low_sets.items())
                assert len(mtf.history) == len(van.history) == 11
                for a, b in zip(mtf.history[1:], van.history[1:]):
                    worst = max(worst, float(np.max(np.abs(a - b))))
        assert worst <= 1e-12
        info["max_abs_diff"] = worst


def test_4_ranking_correctness():
    with criterion(4, "DDS of (3,100,2) and (52,76,88)") as info:
        _, low = compute_dds([3, 100, 2], 3)
        _, high = compute_dds([52, 76, 88], 3)
        assert abs(low - 1.05) <= 1e-12
        assert abs(high - 216 / 88) <= 1e-12
        assert high > low
        info["dds"] = f"{low:.4f} < {high:.4f}"


def test_5_partition_conservation_and_monotone_skew():
    with criterion(5, "partitions conserve data; top-j holdings rise with beta", budget_s=1.0):
        g = trend_task()
        ref = sorted(range(len(g)))
        held = []
        for beta in (0.5, 0.6, 0.7, 0.8):
            parts = PartitionPlan("quantity_skew", 7, 2, beta=beta, seed=3).apply(g)
            assert sorted(i for p in parts for i in p.index.tolist()) == ref
            held.append(sum(p.total for p in parts[:2]))
        assert held == sorted(held)
        for alpha in (0.5, 0.25, 0.1, 0.0):
            parts = PartitionPlan("class_skew", 7, alpha=alpha, seed=3).apply(g)
            assert sorted(i for p in parts for i in p.index.tolist()) == ref


@pytest.mark.slow
def test_6_trend_reproduction():
    with criterion(6, "MTF-Grasp-Avg >= FedAvg at beta=0.8; gap(0.8) >= gap(0.5) - 0.05", budget_s=600.0) as info:
        g = trend_task()
        mean = {}
        for beta in (0.5, 0.8):
            for alg in ("FedAvg", "MTF-Grasp-Avg"):
                accs = [run_experiment(default_cfg(alg, beta, s, g.m, g.d), g).final_accuracy for s in range(5)]
                mean[(alg, beta)] = statistics.fmean(accs)
        gap = {b: mean[("MTF-Grasp-Avg", b)] - mean[("FedAvg", b)] for b in (0.5, 0.8)}
        info["FedAvg@0.8"] = f"{mean[('FedAvg', 0.8)]:.4f}"
        info["MTF@0.8"] = f"{mean[('MTF-Grasp-Avg', 0.8)]:.4f}"
        info["gap@0.5"] = f"{gap[0.5]:+.4f}"
        info["gap@0.8"] = f"{gap[0.8]:+.4f}"
        assert mean[("MTF-Grasp-Avg", 0.8)] >= mean[("FedAvg", 0.8)], info
        assert gap[0.8] >= gap[0.5] - 0.05, info


def test_7_gradient_fidelity():
    with criterion(7, "analytic gradients match central differences (h=1e-5)", budget_s=10.0) as info:
        rng = np.random.default_rng(7)
        h = 1e-5
        worst = 0.0
        for kind in ("logistic", "mlp"):
            spec = LearnerSpec(kind, 5, 4, hidden_units=6)
            for _ in range(100):
                w = rng.normal(scale=0.5, size=spec.dim)
                X = rng.normal(size=(int(rng.integers(1, 9)), 5))
                y = rng.integers(0, 4, size=X.shape[0])
                _, g = loss_and_grad(w, spec, X, y)
                num = np.empty_like(w)
                for k in range(w.size):
                    e = np.zeros_like(w)
                    e[k] = h
                    num[k] = (loss_and_grad(w + e, spec, X, y)[0] - loss_and_grad(w - e, spec, X, y)[0]) / (2 * h)
                rel = np.max(np.abs(g - num)) / max(np.max(np.abs(num)), 1e-8)
                worst = max(worst, float(rel))
        assert worst < 1e-4
        info["max_rel_err"] = f"{worst:.1e}"


def test_8_fednova_reduction():
    with criterion(8, "FedNova with equal steps equals FedAvg (100 instances)", budget_s=2.0) as info:
        rng = np.random.default_rng(8)
        worst = 0.0
        for _ in range(100):
            n, dim = int(rng.integers(1, 10)), int(rng.integers(1, 200))
            g = rng.normal(size=dim)
            steps = int(rng.integers(1, 100))
            models = [WeightedModel(g + rng.normal(size=dim), float(rng.integers(1, 500)), steps) for _ in range(n)]
            diff = float(np.max(np.abs(fednova(g, models) - fedavg(models))))
            worst = max(worst, diff)
        assert worst <= 1e-12
        info["max_abs_diff"] = f"{worst:.1e}"


def test_9_determinism(tmp_path):
    with criterion(9, "same manifest gives byte-identical rounds.jsonl and summary.csv"):
        cfg = {
            "data": {"per_class": 40},
            "training": {"rounds": 3},
            "partition": {"scheme": "quantity_skew", "beta": [0.5, 0.8]},
            "arms": [a.value for a in Algorithm],
            "seeds": [0, 1],
        }
        path = tmp_path / "manifest.yaml"
        path.write_text(yaml.safe_dump(cfg))
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["run", str(path), "--out", str(a)]) == 0
        assert main(["run", str(path), "--out", str(b)]) == 0
        for name in ("rounds.jsonl", "summary.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
