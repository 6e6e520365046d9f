"""Dataset indexing and deterministic train/validation splitting."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .rng import Rng


@dataclass
class DatasetIndex:
    """Ordered (sinogram path, image path) pairs plus the split recipe."""

    pairs: list[tuple[str, str]]
    split_seed: int = 0
    train_fraction: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")

    def save(self, path) -> None:
        entries = [{"sino": sino, "img": img} for sino, img in self.pairs]
        Path(path).write_text(json.dumps(entries, indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path, split_seed: int = 0, train_fraction: float = 0.9):
        entries = json.loads(Path(path).read_text(encoding="utf-8"))
        pairs = [(e["sino"], e["img"]) for e in entries]
        return cls(pairs=pairs, split_seed=split_seed, train_fraction=train_fraction)


def split_dataset(pairs, train_fraction: float, seed: int):
    """Deterministic disjoint train/validation partition of ``pairs``.

    The list is shuffled by the seed, then the first
    round(train_fraction * total) entries form the training subset.
    Rounding is half-up so a 0.9 fraction of 10 pairs gives 9.
    """
    if not pairs:
        raise ValueError("cannot split an empty dataset index")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    shuffled = list(pairs)
    Rng(seed).shuffle(shuffled)
    n_train = int(train_fraction * len(shuffled) + 0.5)
    return shuffled[:n_train], shuffled[n_train:]
