"""Predicted-SNR budget allocation and structure-first block scheduling."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .predictor import PredictedTrace

STRUCTURE = "structure"
TEXTURE = "texture"
SLOT_ORDERS = ("snr_desc", "temporal")
ALLOC_EPS = 1e-9


class NoUsableSlots(RuntimeError):
    """Every slot is predicted to be in outage."""


@dataclass(frozen=True)
class BudgetAllocation:
    n: np.ndarray  # (K,) int
    n_tot: int

    def __post_init__(self):
        n = np.asarray(self.n, dtype=np.int64)
        if np.any(n < 0):
            raise ValueError("negative slot budget")
        if int(n.sum()) != self.n_tot:
            raise ValueError(f"budgets sum to {int(n.sum())}, expected {self.n_tot}")
        object.__setattr__(self, "n", n)

    @property
    def K(self) -> int:
        return self.n.shape[0]


@dataclass(frozen=True)
class BlockDescriptor:
    id: int
    kind: str
    length: int
    pos: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if self.kind not in (STRUCTURE, TEXTURE):
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.length <= 0:
            raise ValueError("block length must be positive")
        if self.kind == TEXTURE and self.pos is None:
            raise ValueError("texture block needs a grid position")


@dataclass
class BlockSchedule:
    """Sparse form of the binary block-to-slot assignment.

    ``assignment[id]`` is a 0-based slot index, or None for an unscheduled block.
    """

    assignment: dict[int, Optional[int]]
    per_slot_used: np.ndarray
    blocks: list[BlockDescriptor] = field(default_factory=list)

    def blocks_in_slot(self, k: int) -> list[BlockDescriptor]:
        return [b for b in self.blocks if self.assignment.get(b.id) == k]

    @property
    def unscheduled(self) -> list[int]:
        return [i for i, k in self.assignment.items() if k is None]

    def rows(self) -> list[dict]:
        return [
            {
                "block_id": b.id,
                "kind": b.kind,
                "r": b.length,
                "slot": "-" if self.assignment[b.id] is None else self.assignment[b.id] + 1,
            }
            for b in self.blocks
        ]


def make_blocks(r_s: int, r_t: int, grid: int = 4) -> list[BlockDescriptor]:
    """One structure block (id 0) followed by grid*grid texture blocks in row-major order."""
    blocks = [BlockDescriptor(0, STRUCTURE, r_s)]
    for row in range(grid):
        for col in range(grid):
            blocks.append(BlockDescriptor(1 + row * grid + col, TEXTURE, r_t, (row, col)))
    return blocks


def slot_weights(pred: PredictedTrace, gamma_min_db: Optional[float] = None) -> np.ndarray:
    """log2(1 + predicted linear SNR) on predicted-usable slots, zero elsewhere."""
    g = pred.gamma_min_db if gamma_min_db is None else gamma_min_db
    snr_db = np.asarray(pred.snr_db, dtype=float)
    use = snr_db >= g
    w = np.zeros_like(snr_db)
    w[use] = np.log2(1.0 + 10.0 ** (snr_db[use] / 10.0))
    return w


def allocate_budgets(weights: Sequence[float], n_tot: int, eps: float = ALLOC_EPS) -> BudgetAllocation:
    """Proportional shares, floored, remainder to the largest fractional parts.

    Fractional-part ties go to the lower slot index.
    """
    if n_tot < 0:
        raise ValueError("n_tot must be nonnegative")
    w = np.asarray(weights, dtype=float)
    use = np.flatnonzero(w > 0)
    if use.size == 0:
        raise NoUsableSlots("no slot has a positive weight")
    share = n_tot * w / (w.sum() + eps)
    n = np.floor(share).astype(np.int64)
    frac = share - n
    remainder = n_tot - int(n.sum())
    # stable sort on -frac keeps lower indices first among ties
    order = use[np.argsort(-frac[use], kind="stable")]
    for i in range(remainder):
        n[order[i % order.size]] += 1
    return BudgetAllocation(n, n_tot)


def uniform_budgets(K: int, n_tot: int) -> BudgetAllocation:
    """floor(n_tot / K) per slot, leftover samples to the earliest slots."""
    n = np.full(K, n_tot // K, dtype=np.int64)
    n[: n_tot - int(n.sum())] += 1
    return BudgetAllocation(n, n_tot)


def visit_order(pred: PredictedTrace, mode: str = "snr_desc") -> list[int]:
    use = np.flatnonzero(pred.usable)
    if mode == "snr_desc":
        return [int(k) for k in use[np.argsort(-pred.snr_db[use], kind="stable")]]
    if mode == "temporal":
        return [int(k) for k in use]
    raise ValueError(f"unknown slot order {mode!r}")


def priority_order(blocks: Sequence[BlockDescriptor]) -> list[BlockDescriptor]:
    structure = [b for b in blocks if b.kind == STRUCTURE]
    texture = sorted((b for b in blocks if b.kind == TEXTURE), key=lambda b: (b.pos, b.id))
    return sorted(structure, key=lambda b: b.id) + texture


def schedule_blocks(
    blocks: Sequence[BlockDescriptor],
    alloc: BudgetAllocation,
    pred: PredictedTrace,
    order: str = "snr_desc",
) -> BlockSchedule:
    """Greedy first-fit of blocks (structure first) into predicted-usable slots.

    A block is never split; blocks that fit nowhere stay unscheduled.
    """
    if alloc.K != pred.K:
        raise ValueError("allocation and prediction horizons differ")
    slots = visit_order(pred, order)
    remaining = alloc.n.copy()
    used = np.zeros(alloc.K, dtype=np.int64)
    assignment: dict[int, Optional[int]] = {}
    for b in priority_order(blocks):
        if b.id in assignment:
            raise ValueError(f"duplicate block id {b.id}")
        assignment[b.id] = None
        for k in slots:
            if remaining[k] >= b.length:
                remaining[k] -= b.length
                used[k] += b.length
                assignment[b.id] = k
                break
    return BlockSchedule(assignment, used, list(blocks))

