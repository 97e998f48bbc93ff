"""
Stratified train/test splitting and client partitioning.

Both operations are exact partitions of their input (every patch lands in
exactly one output) and are fully determined by the seed.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .models import DataError, Patch, PatchDataset, PatchLabel

# absorbs products like 0.29 * 100 = 28.999999999999996
_FLOOR_SLACK = 1e-9


class DegenerateSplit(DataError):
    pass


class TooFewPatches(DataError):
    pass


def _floor(value: float) -> int:
    return math.floor(value + _FLOOR_SLACK)


def _shuffled(patches: list[Patch], rng: np.random.Generator) -> list[Patch]:
    order = rng.permutation(len(patches))
    return [patches[i] for i in order]


def train_quotas(counts: dict[PatchLabel, int], train_fraction: float) -> dict[PatchLabel, int]:
    """
    Per-class train sizes.

    Each class gets floor(count * fraction); the slots still missing to reach
    floor(total * fraction) go to the classes with the largest fractional
    remainder, healthy first on ties.  314 balanced patches at 0.75 -> 235.
    """
    quotas = {label: _floor(n * train_fraction) for label, n in counts.items()}
    target = _floor(sum(counts.values()) * train_fraction)
    leftover = target - sum(quotas.values())
    ranked = sorted(
        counts,
        key=lambda lbl: -(counts[lbl] * train_fraction - quotas[lbl]),
    )
    for label in ranked:
        if leftover <= 0:
            break
        if quotas[label] < counts[label]:
            quotas[label] += 1
            leftover -= 1
    return quotas


def split(
    dataset: PatchDataset, train_fraction: float, rng_seed: int
) -> tuple[PatchDataset, PatchDataset]:
    """Stratified (train, test) split, shuffled within each class by seed."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if len(dataset) == 0:
        raise DegenerateSplit("cannot split an empty dataset")

    rng = np.random.default_rng(rng_seed)
    quotas = train_quotas(dataset.class_counts, train_fraction)
    train: list[Patch] = []
    test: list[Patch] = []
    for label in PatchLabel:
        members = _shuffled(dataset.by_label(label), rng)
        train.extend(members[: quotas[label]])
        test.extend(members[quotas[label] :])

    if not train or not test:
        raise DegenerateSplit(
            f"{len(dataset)} patches at fraction {train_fraction} leave "
            f"{len(train)} train / {len(test)} test"
        )
    return (
        PatchDataset(dataset_id=f"{dataset.dataset_id}-train", patches=train),
        PatchDataset(dataset_id=f"{dataset.dataset_id}-test", patches=test),
    )


def partition_clients(
    datasets: PatchDataset | Sequence[PatchDataset], k: int, rng_seed: int
) -> list[PatchDataset]:
    """
    Deal patches into *k* disjoint, stratified shares.

    Each class is shuffled and dealt round-robin; the dealer position carries
    over between classes so share sizes differ by at most one overall and at
    most one per class.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if isinstance(datasets, PatchDataset):
        datasets = [datasets]
    pool = [p for ds in datasets for p in ds.patches]
    base_id = datasets[0].dataset_id if datasets else "patches"

    merged = PatchDataset(dataset_id=base_id, patches=pool)
    counts = merged.class_counts
    short = {lbl.value: n for lbl, n in counts.items() if n < k}
    if short:
        raise TooFewPatches(f"{k} shares need at least {k} patches per class, have {short}")

    rng = np.random.default_rng(rng_seed)
    shares: list[list[Patch]] = [[] for _ in range(k)]
    dealer = 0
    for label in PatchLabel:
        for patch in _shuffled(merged.by_label(label), rng):
            shares[dealer].append(patch)
            dealer = (dealer + 1) % k
    return [
        PatchDataset(dataset_id=f"{base_id}-client{i + 1}", patches=share)
        for i, share in enumerate(shares)
    ]
