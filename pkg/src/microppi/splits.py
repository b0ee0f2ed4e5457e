"""Dataset partitioning and test-set stratification.

Random shuffles entries.  BFS/DFS traverse the protein graph from a
seeded random root, collecting proteins until the entries incident to the
collected set reach the validation+test fraction; those entries are held
out and the rest train.  The held-out entries touched by the earliest
traversal prefix (the second boundary) become the test set.  Because no
train entry touches a collected protein, every held-out entry has at
least one protein unseen in training, so traversal-based test sets
contain no both-seen pairs.

Test entries are stratified by endpoint visibility: BS (both endpoints
occur in some train entry), ES (exactly one), NS (neither).
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, PartitionError
from .ppi import PpiGraph

RANDOM = "random"
BFS = "bfs"
DFS = "dfs"
SCHEMES = (RANDOM, BFS, DFS)

BOTH_SEEN = "BS"
EITHER_SEEN = "ES"
NEITHER_SEEN = "NS"


@dataclass
class Partition:
    scheme: str
    seed: int
    train: list[int]
    val: list[int]
    test: list[int]

    def __post_init__(self):
        groups = [set(self.train), set(self.val), set(self.test)]
        total = sum(len(g) for g in groups)
        union = set().union(*groups)
        if total != len(union):
            raise PartitionError("partition groups overlap")

    @property
    def n_entries(self) -> int:
        return len(self.train) + len(self.val) + len(self.test)


def _check_ratios(ratios) -> tuple[float, float, float]:
    r = tuple(float(x) for x in ratios)
    if len(r) != 3 or any(x < 0 for x in r) or abs(sum(r) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    return r


def partition(g: PpiGraph, scheme: str, ratios=(0.6, 0.2, 0.2), seed: int = 0) -> Partition:
    """Split entry indices into train/val/test under the chosen scheme."""
    r_train, r_val, r_test = _check_ratios(ratios)
    if g.n_entries == 0:
        raise PartitionError("cannot partition an empty entry list")
    if scheme == RANDOM:
        rng = np.random.default_rng(seed)
        order = rng.permutation(g.n_entries)
        n_train = int(round(r_train * g.n_entries))
        n_val = int(round(r_val * g.n_entries))
        train = order[:n_train]
        val = order[n_train:n_train + n_val]
        test = order[n_train + n_val:]
        return Partition(scheme, seed, sorted(map(int, train)),
                         sorted(map(int, val)), sorted(map(int, test)))
    if scheme in (BFS, DFS):
        return _traversal_partition(g, scheme, r_val, r_test, seed)
    raise ConfigError(f"unknown partition scheme {scheme!r}")


def _traversal_partition(g: PpiGraph, scheme: str, r_val: float, r_test: float,
                         seed: int) -> Partition:
    n = g.n_entries
    target_holdout = int(round((r_val + r_test) * n))
    target_test = int(round(r_test * n))

    incident: dict[int, list[int]] = {i: [] for i in range(g.n_proteins)}
    neighbors: dict[int, set[int]] = {i: set() for i in range(g.n_proteins)}
    for entry, (a, b) in enumerate(g.edge_index):
        incident[int(a)].append(entry)
        incident[int(b)].append(entry)
        neighbors[int(a)].add(int(b))
        neighbors[int(b)].add(int(a))

    def sorted_neighbors(node: int) -> list[int]:
        return sorted(neighbors[node], key=lambda i: g.protein_ids[i])

    rng = np.random.default_rng(seed)
    root = int(rng.integers(0, g.n_proteins))

    visited: set[int] = set()
    holdout: set[int] = set()
    test: set[int] | None = set() if target_test == 0 else None
    frontier: deque[int] = deque([root])

    while frontier and len(holdout) < target_holdout:
        node = frontier.popleft() if scheme == BFS else frontier.pop()
        if node in visited:
            continue
        visited.add(node)
        holdout.update(incident[node])
        if test is None and len(holdout) >= target_test:
            test = set(holdout)  # second boundary: earliest prefix covering the test share
        nbrs = sorted_neighbors(node)
        if scheme == DFS:
            nbrs = reversed(nbrs)
        for nbr in nbrs:
            if nbr not in visited:
                frontier.append(nbr)

    if len(holdout) < target_holdout:
        raise PartitionError(
            f"{scheme} traversal exhausted its component at {len(holdout)}/{n} entries "
            f"({len(holdout) / n:.3f} achieved, {(r_val + r_test):.3f} requested)")
    assert test is not None
    val = holdout - test
    train = set(range(n)) - holdout
    return Partition(scheme, seed, sorted(train), sorted(val), sorted(test))


def train_protein_set(g: PpiGraph, train_entries) -> set[int]:
    """Proteins that occur in at least one training entry."""
    seen: set[int] = set()
    for entry in train_entries:
        a, b = g.edge_index[entry]
        seen.add(int(a))
        seen.add(int(b))
    return seen


def subset_label(pair, train_proteins: set[int]) -> str:
    hits = int(int(pair[0]) in train_proteins) + int(int(pair[1]) in train_proteins)
    return (NEITHER_SEEN, EITHER_SEEN, BOTH_SEEN)[hits]


def subset_labels(g: PpiGraph, part: Partition) -> dict[int, str]:
    """BS/ES/NS label for every test entry."""
    seen = train_protein_set(g, part.train)
    return {e: subset_label(g.edge_index[e], seen) for e in part.test}


def save_partition(path, part: Partition) -> None:
    payload = {"scheme": part.scheme, "seed": part.seed,
               "train": part.train, "val": part.val, "test": part.test}
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def load_partition(path) -> Partition:
    payload = json.loads(Path(path).read_text())
    return Partition(scheme=payload["scheme"], seed=payload["seed"],
                     train=payload["train"], val=payload["val"], test=payload["test"])
