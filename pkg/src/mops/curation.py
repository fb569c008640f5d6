"""Quality-diversity curation: per-bin champions plus a global top-up.

Borrowing the per-cell-elite idea from Map-Elites archives: every non-empty
in-hull bin of the diversity grid contributes its highest-scoring premise,
then the selection is filled to size K by global total-score rank.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .diversity import GridSpec, Hull, bins_in_hull

__all__ = ["BinAssignment", "BinnedPremise", "CuratedEntry", "assign_bins", "curate"]


@dataclass(frozen=True)
class BinAssignment:
    bin_index: tuple[int, int]
    in_hull: bool


@dataclass(frozen=True)
class BinnedPremise:
    """Curation input: a scored premise located in a diversity-grid bin."""

    premise_id: str
    bin_index: tuple[int, int]
    total_score: int
    in_hull: bool = True


@dataclass(frozen=True)
class CuratedEntry:
    premise_id: str
    bin_index: tuple[int, int]
    stage: str  # "champion" | "fill"
    total_score: int

    def to_record(self) -> dict:
        return {
            "id": self.premise_id,
            "bin": list(self.bin_index),
            "selection_stage": self.stage,
            "total_score": self.total_score,
        }


def assign_bins(points: Sequence, grid: GridSpec, hull: Hull) -> list[BinAssignment]:
    """Bin each projected premise with the density metric's binning rule."""
    mask = bins_in_hull(grid, hull)
    out = []
    for x, y in points:
        i, j = grid.bin_of(float(x), float(y))
        out.append(BinAssignment((i, j), bool(mask[i, j])))
    return out


def curate(items: Sequence[BinnedPremise], k: int) -> list[CuratedEntry]:
    """Select ``k`` premises: one champion per non-empty in-hull bin, then fills.

    Champions are the per-bin argmax by total score (ties to the lower
    premise id) and are listed in bin row-major order; the remaining slots
    are filled by descending total score with the same tie rule. If there
    are more champion bins than ``k``, the k highest-scoring champions win.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k > len(items):
        raise ValueError(f"k={k} exceeds corpus size {len(items)}")

    by_bin: dict[tuple[int, int], BinnedPremise] = {}
    for item in items:
        if not item.in_hull:
            continue
        best = by_bin.get(item.bin_index)
        if (
            best is None
            or item.total_score > best.total_score
            or (item.total_score == best.total_score and item.premise_id < best.premise_id)
        ):
            by_bin[item.bin_index] = item

    champions = [by_bin[b] for b in sorted(by_bin)]
    if len(champions) > k:
        top = sorted(champions, key=lambda it: (-it.total_score, it.premise_id))[:k]
        keep = {it.premise_id for it in top}
        champions = [it for it in champions if it.premise_id in keep]

    chosen = {it.premise_id for it in champions}
    pool = [it for it in items if it.premise_id not in chosen]
    pool.sort(key=lambda it: (-it.total_score, it.premise_id))
    fills = pool[: k - len(champions)]

    return [CuratedEntry(it.premise_id, it.bin_index, "champion", it.total_score) for it in champions] + [
        CuratedEntry(it.premise_id, it.bin_index, "fill", it.total_score) for it in fills
    ]
