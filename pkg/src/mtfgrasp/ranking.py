"""Robot ranking by data quality and quantity, and top/low tier assignment."""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path


@dataclass(frozen=True)
class RankingScores:
    robot_id: int
    hcs: int
    dds: float
    hrs_ref: int
    dqs: float
    is_score: float


@dataclass
class TierAssignment:
    top: list[int]
    low_sets: dict[int, list[int]] = field(default_factory=dict)

    def leader_of(self, robot_id: int) -> int:
        for t, members in self.low_sets.items():
            if robot_id in members:
                return t
        raise KeyError(robot_id)

    def validate(self, n: int) -> None:
        seen = sorted(r for members in self.low_sets.values() for r in members)
        if seen != list(range(n)):
            raise ValueError(f"low-level sets do not partition robots 0..{n - 1}: {self.low_sets}")
        if sorted(self.low_sets) != sorted(self.top):
            raise ValueError("low-level sets must be keyed by exactly the top-level robots")
        for t in self.top:
            if t not in self.low_sets[t]:
                raise ValueError(f"top-level robot {t} missing from its own low-level set")


def compute_dds(counts: Sequence[int] | Mapping[int, int], m: int | None = None) -> tuple[int, float]:
    """Largest class count and the data distribution score ``sum(counts) / max(counts)``.

    A robot with no samples gets ``dds = 0``.
    """
    values = list(counts.values()) if isinstance(counts, Mapping) else list(counts)
    if m is not None:
        if m < 1:
            raise ValueError(f"m must be >= 1, got {m}")
        if len(values) > m:
            raise ValueError(f"{len(values)} class counts for m={m} classes")
    if any(v < 0 for v in values):
        raise ValueError("class counts must be nonnegative")
    hcs = max(values, default=0)
    if hcs == 0:
        return 0, 0.0
    return hcs, sum(values) / hcs


def compute_dqs(totals: Sequence[int]) -> list[float]:
    """Each robot's sample count over the fleet maximum."""
    if not totals:
        raise ValueError("no robots")
    hrs = max(totals)
    if hrs <= 0:
        raise ValueError("fleet has no data")
    return [t / hrs for t in totals]


def compute_is(scores: Sequence[tuple[float, float]], lambda_dds: float, lambda_dqs: float) -> list[float]:
    if lambda_dds < 0 or lambda_dqs < 0 or not lambda_dds + lambda_dqs > 0:
        raise ValueError("lambda weights must be nonnegative and not both zero")
    return [lambda_dds * dds + lambda_dqs * dqs for dds, dqs in scores]


def rank_robots(
    class_counts: Sequence[Sequence[int]], lambda_dds: float = 0.5, lambda_dqs: float = 0.5
) -> list[RankingScores]:
    """Full scoring pass over per-robot class counts (robot id = list position)."""
    hd = [compute_dds(c) for c in class_counts]
    totals = [sum(c) for c in class_counts]
    dqs = compute_dqs(totals)
    iss = compute_is([(d, q) for (_, d), q in zip(hd, dqs)], lambda_dds, lambda_dqs)
    hrs = max(totals)
    return [
        RankingScores(r, hd[r][0], hd[r][1], hrs, dqs[r], iss[r])
        for r in range(len(class_counts))
    ]


def _by_importance(scores: Sequence[RankingScores]) -> list[RankingScores]:
    return sorted(scores, key=lambda s: (-s.is_score, s.robot_id))


def select_tiers(
    scores: Sequence[RankingScores],
    j: int,
    policy: str = "balanced",
    manual: Mapping[int, Sequence[int]] | None = None,
) -> TierAssignment:
    """Pick the ``j`` highest-IS robots (ties to the lower id) and attach the rest.

    ``policy="balanced"`` deals the remaining robots round-robin over the
    top-level robots in descending IS order. ``policy="manual"`` takes the
    low-level sets from ``manual`` (top robot -> members); each top robot
    is added to its own set if omitted.
    """
    n = len(scores)
    if not 1 <= j <= n:
        raise ValueError(f"need 1 <= j <= n, got j={j}, n={n}")
    ordered = _by_importance(scores)
    top = [s.robot_id for s in ordered[:j]]

    if policy == "balanced":
        low_sets = {t: [t] for t in top}
        for k, s in enumerate(ordered[j:]):
            low_sets[top[k % j]].append(s.robot_id)
    elif policy == "manual":
        if manual is None:
            raise ValueError("manual policy needs an explicit assignment")
        manual = {int(t): [int(r) for r in rs] for t, rs in manual.items()}
        if sorted(manual) != sorted(top):
            raise ValueError(f"manual assignment keys {sorted(manual)} differ from selected top robots {sorted(top)}")
        low_sets = {t: ([t] + [r for r in manual[t] if r != t]) for t in top}
    else:
        raise ValueError(f"unknown assignment policy {policy!r}")

    tiers = TierAssignment(top, {t: sorted(rs) for t, rs in low_sets.items()})
    tiers.validate(n)
    return tiers


def ranking_report(scores: Sequence[RankingScores], tiers: TierAssignment) -> list[dict]:
    rows = []
    for s in scores:
        rows.append(
            {
                "robot_id": s.robot_id,
                "hcs": s.hcs,
                "dds": s.dds,
                "dqs": s.dqs,
                "is_score": s.is_score,
                "tier": "top" if s.robot_id in tiers.top else "low",
                "leader": tiers.leader_of(s.robot_id),
            }
        )
    return rows


def write_ranking_jsonl(path, scores: Sequence[RankingScores], tiers: TierAssignment) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for row in ranking_report(scores, tiers):
            fh.write(json.dumps(row, sort_keys=True) + "\n")
