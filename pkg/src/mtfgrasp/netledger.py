"""Synchronous, lossless message layer with parameter-transfer accounting."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Union

SERVER = "server"
NodeId = Union[int, str]

# one-off ranking traffic before round 0
SETUP_ROUND = -1
# a Scores/Report message carries a couple of numbers, not a model
SCALAR_PAYLOAD = 2


class PayloadKind(str, Enum):
    MODEL = "model"
    SCORES = "scores"
    REPORT = "report"


class LinkClass(str, Enum):
    SERVER_TOP = "server-top"
    TOP_LOW = "top-low"


@dataclass(frozen=True)
class Message:
    src: NodeId
    dst: NodeId
    kind: PayloadKind
    params: int
    round: int

    @property
    def link_class(self) -> LinkClass:
        # every server link counts as server-top; in single-tier runs all robots sit there
        if self.src == SERVER or self.dst == SERVER:
            return LinkClass.SERVER_TOP
        return LinkClass.TOP_LOW


class CommLedger:
    def __init__(self) -> None:
        self.messages: list[Message] = []
        self._totals: dict[tuple[int, LinkClass, PayloadKind], int] = defaultdict(int)
        self._rounds: set[int] = set()

    def record(self, msg: Message) -> bool:
        """Append ``msg``; self-delivery is free and dropped. Returns whether it was stored."""
        if msg.params < 0:
            raise ValueError(f"negative payload: {msg.params}")
        self._rounds.add(msg.round)
        if msg.src == msg.dst:
            return False
        self.messages.append(msg)
        self._totals[(msg.round, msg.link_class, msg.kind)] += msg.params
        return True

    def send(self, src: NodeId, dst: NodeId, kind: PayloadKind, params: int, round: int) -> bool:
        return self.record(Message(src, dst, PayloadKind(kind), int(params), round))

    def open_round(self, round: int) -> None:
        """Mark a round as executed even if nothing crossed a link."""
        self._rounds.add(round)

    @property
    def rounds(self) -> list[int]:
        return sorted(self._rounds)

    def traffic(
        self,
        round: int | None = None,
        link_class: LinkClass | None = None,
        kind: PayloadKind | None = PayloadKind.MODEL,
    ) -> int:
        if round is not None and round not in self._rounds:
            raise KeyError(f"round {round} not recorded")
        return sum(
            v
            for (r, lc, k), v in self._totals.items()
            if (round is None or r == round)
            and (link_class is None or lc is link_class)
            and (kind is None or k is kind)
        )

    def round_model_traffic(self, round: int) -> int:
        return self.traffic(round=round, kind=PayloadKind.MODEL)

    def rows(self) -> list[tuple[int, str, str, int]]:
        """(round, link_class, kind, params) aggregated, sorted."""
        return sorted((r, lc.value, k.value, v) for (r, lc, k), v in self._totals.items())

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "link_class", "kind", "params"])
            w.writerows(self.rows())


def expected_round_load(n: int, dim: int) -> int:
    """Per-round model traffic of either single-tier or two-tier training."""
    return 2 * n * dim
