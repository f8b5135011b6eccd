"""Analog block transmission over the realized per-slot channel.

The multiplicative channel gain is assumed perfectly compensated at the
receiver, so each slot reduces to unit-power symbols plus AWGN of variance
1/gamma_k. Per-block power-normalisation scales travel as noiseless side
information. Slots whose realized SNR falls below the threshold erase every
block they carry.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .codec import GRID, ReceptionState, Profile
from .scheduler import STRUCTURE, BlockDescriptor, BlockSchedule


class Status(enum.Enum):
    DELIVERED = "delivered"
    ERASED = "erased"


class ReceptionError(RuntimeError):
    """Inconsistent block bookkeeping at the receiver."""


@dataclass
class SlotPayload:
    slot: int
    block_ids: list[int]
    symbols: list[np.ndarray]

    @property
    def length(self) -> int:
        return sum(s.shape[0] for s in self.symbols)

    @property
    def boundaries(self) -> list[int]:
        return list(np.cumsum([0] + [s.shape[0] for s in self.symbols]))


@dataclass
class BlockOutcome:
    block_id: int
    status: Status
    symbols: Optional[np.ndarray]
    snr_db: float
    slot: Optional[int]


def derive_seed(trial_seed: int, *path: int) -> np.random.SeedSequence:
    """Child seed for a named sub-stream; independent of call order."""
    return np.random.SeedSequence([int(trial_seed) & 0xFFFFFFFFFFFFFFFF, *[int(p) for p in path]])


def block_scale(s: np.ndarray) -> float:
    """RMS of a block; 1 for an all-zero block."""
    p = float(np.sqrt(np.mean(np.square(s)))) if s.size else 0.0
    return p if p > 0 else 1.0


def awgn(n: int, snr_lin: float, rng: np.random.Generator) -> np.ndarray:
    if not snr_lin > 0 or math.isnan(snr_lin):
        raise ValueError(f"linear SNR must be positive, got {snr_lin}")
    w = rng.standard_normal(n)
    return w * (0.0 if math.isinf(snr_lin) else 1.0 / math.sqrt(snr_lin))


def transmit_slot(payload: SlotPayload, snr_db: float, gamma_min_db: float, seed) -> list[BlockOutcome]:
    """Send one slot's blocks.

    Below ``gamma_min_db`` every block is erased. Otherwise each block is scaled
    to unit mean power, hit by AWGN of variance ``1/gamma``, and rescaled.
    """
    if math.isnan(snr_db):
        raise ValueError("SNR is NaN")
    if snr_db < gamma_min_db:
        return [BlockOutcome(b, Status.ERASED, None, snr_db, payload.slot) for b in payload.block_ids]
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    noise = awgn(payload.length, 10.0 ** (snr_db / 10.0), rng)
    out = []
    for b, s, lo, hi in zip(payload.block_ids, payload.symbols, payload.boundaries[:-1], payload.boundaries[1:]):
        scale = block_scale(s)
        # (s / scale + w) * scale, written to stay exact when w == 0
        received = s + scale * noise[lo:hi]
        out.append(BlockOutcome(b, Status.DELIVERED, received, snr_db, payload.slot))
    return out


def build_payloads(schedule: BlockSchedule, vectors: Mapping[int, np.ndarray]) -> list[SlotPayload]:
    """Per-slot payloads in the block order the scheduler placed them."""
    by_slot: dict[int, SlotPayload] = {}
    for b in schedule.blocks:
        k = schedule.assignment.get(b.id)
        if k is None:
            continue
        p = by_slot.setdefault(k, SlotPayload(k, [], []))
        p.block_ids.append(b.id)
        p.symbols.append(np.asarray(vectors[b.id], dtype=float))
    return [by_slot[k] for k in sorted(by_slot)]


def transmit_schedule(
    schedule: BlockSchedule,
    vectors: Mapping[int, np.ndarray],
    snr_db: Sequence[float],
    gamma_min_db: float,
    trial_seed: int,
) -> list[BlockOutcome]:
    """Transmit every scheduled block; unscheduled blocks come back ERASED."""
    outcomes = []
    for p in build_payloads(schedule, vectors):
        outcomes.extend(transmit_slot(p, float(snr_db[p.slot]), gamma_min_db, derive_seed(trial_seed, 1, p.slot)))
    for b in schedule.blocks:
        if schedule.assignment.get(b.id) is None:
            outcomes.append(BlockOutcome(b.id, Status.ERASED, None, math.nan, None))
    return outcomes


def assemble_reception(
    blocks: Sequence[BlockDescriptor],
    outcomes: Sequence[BlockOutcome],
    profile: Profile,
    image_shape=(256, 256, 3),
) -> ReceptionState:
    """Place delivered blocks; everything else stays MISSING."""
    rx = ReceptionState.empty(profile, image_shape)
    desc = {b.id: b for b in blocks}
    placed: set[int] = set()
    for o in outcomes:
        if o.block_id in placed:
            raise ReceptionError(f"block {o.block_id} placed twice")
        if o.block_id not in desc:
            raise ReceptionError(f"unknown block id {o.block_id}")
        placed.add(o.block_id)
        if o.status is not Status.DELIVERED:
            continue
        b = desc[o.block_id]
        if b.kind == STRUCTURE:
            rx.structure = o.symbols
        else:
            if not (0 <= b.pos[0] < GRID and 0 <= b.pos[1] < GRID):
                raise ReceptionError(f"grid position {b.pos} out of range")
            rx.textures[b.pos] = o.symbols
    return rx
