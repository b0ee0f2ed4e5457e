"""Protein records and the residue-level heterogeneous graph.

A protein is a sequence of amino acids plus the 3-d coordinates of their
carbon-alpha atoms.  Residues are connected by three relation types:
nearby in sequence, within a radius in space, and spatial K-nearest
neighbors.  A residue's microenvironment is the union of its neighbors
under the three relations (plus itself).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ParseError

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"
AA_INDEX = {aa: i for i, aa in enumerate(AMINO_ACIDS)}
NUM_AMINO_ACIDS = len(AMINO_ACIDS)

SEQUENTIAL = "sequential"
RADIUS = "radius"
KNEAREST = "knearest"
RELATIONS = (SEQUENTIAL, RADIUS, KNEAREST)


def one_hot_features(sequence: str) -> np.ndarray:
    feats = np.zeros((len(sequence), NUM_AMINO_ACIDS))
    for i, aa in enumerate(sequence):
        feats[i, AA_INDEX[aa]] = 1.0
    return feats


@dataclass
class Protein:
    """Raw input record: id, sequence, Calpha coordinates (Angstrom)."""

    id: str
    sequence: str
    coords: np.ndarray
    features: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if len(self.sequence) < 2:
            raise DataError(f"protein {self.id}: needs at least 2 residues")
        if self.coords.shape != (len(self.sequence), 3):
            raise DataError(f"protein {self.id}: coords shape {self.coords.shape} "
                            f"does not match sequence length {len(self.sequence)}")
        if not np.all(np.isfinite(self.coords)):
            raise DataError(f"protein {self.id}: non-finite coordinates")
        bad = set(self.sequence) - set(AMINO_ACIDS)
        if bad:
            raise DataError(f"protein {self.id}: unknown amino acid code(s) {sorted(bad)}")
        self.features = one_hot_features(self.sequence)

    @property
    def n_residues(self) -> int:
        return len(self.sequence)


@dataclass
class HeteroProteinGraph:
    """Residue graph with typed edge lists, stored as ordered (src, dst) pairs."""

    protein_id: str
    n_nodes: int
    edges: dict[str, np.ndarray]  # relation -> (E, 2) int array

    def in_neighbors(self, relation: str, node: int) -> list[int]:
        e = self.edges[relation]
        return sorted(int(s) for s, d in e if d == node)

    def out_neighbors(self, relation: str, node: int) -> list[int]:
        e = self.edges[relation]
        return sorted(int(d) for s, d in e if s == node)


@dataclass
class Microenvironment:
    """Ego subgraph around a residue: the center plus its typed neighbors."""

    center: int
    members: list[int]


def build_hetero_graph(p: Protein, d_s: int = 2, d_r: float = 10.0, K: int = 5) -> HeteroProteinGraph:
    """Construct the three typed edge lists for one protein.

    Sequential: 0 < |m - n| <= d_s (symmetric).  Radius: Euclidean distance
    <= d_r, self excluded (symmetric).  KNearest: each residue points to its
    K nearest others (directed), distance ties broken by lower index.
    """
    if d_s < 1 or d_r <= 0 or K < 1:
        raise DataError(f"build_hetero_graph: invalid thresholds d_s={d_s} d_r={d_r} K={K}")
    m = p.n_residues
    dist = np.sqrt(((p.coords[:, None, :] - p.coords[None, :, :]) ** 2).sum(axis=2))
    seq_sep = np.abs(np.arange(m)[:, None] - np.arange(m)[None, :])
    off_diag = seq_sep > 0

    seq_edges = np.argwhere(off_diag & (seq_sep <= d_s))
    rad_edges = np.argwhere(off_diag & (dist <= d_r))

    k_eff = min(K, m - 1)
    knn_edges = np.empty((m * k_eff, 2), dtype=np.int64)
    for a in range(m):
        # stable argsort on distance keeps the lower index on ties
        order = np.argsort(np.where(np.arange(m) == a, np.inf, dist[a]), kind="stable")
        knn_edges[a * k_eff:(a + 1) * k_eff, 0] = a
        knn_edges[a * k_eff:(a + 1) * k_eff, 1] = order[:k_eff]

    return HeteroProteinGraph(
        protein_id=p.id,
        n_nodes=m,
        edges={
            SEQUENTIAL: seq_edges.astype(np.int64).reshape(-1, 2),
            RADIUS: rad_edges.astype(np.int64).reshape(-1, 2),
            KNEAREST: knn_edges,
        },
    )


def extract_microenvironment(g: HeteroProteinGraph, m: int) -> Microenvironment:
    """Members are the center plus the union of its three neighbor sets.

    Sequential and radius neighbors are symmetric; for the directed KNearest
    relation the center's own K-nearest set (its out-neighbors) is used.
    """
    if not 0 <= m < g.n_nodes:
        raise IndexError(f"residue index {m} out of range [0, {g.n_nodes})")
    members = {m}
    members.update(g.out_neighbors(SEQUENTIAL, m))
    members.update(g.out_neighbors(RADIUS, m))
    members.update(g.out_neighbors(KNEAREST, m))
    return Microenvironment(center=m, members=sorted(members))


def load_proteins(path) -> list[Protein]:
    """Read one protein per JSONL line: {"id", "seq", "coords"}."""
    proteins = []
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
        try:
            proteins.append(Protein(id=record["id"], sequence=record["seq"], coords=record["coords"]))
        except KeyError as exc:
            raise ParseError(f"{path}:{lineno}: missing field {exc}") from exc
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return proteins


def save_proteins(path, proteins: list[Protein]) -> None:
    with open(path, "w") as fh:
        for p in proteins:
            record = {"id": p.id, "seq": p.sequence, "coords": [list(map(float, c)) for c in p.coords]}
            fh.write(json.dumps(record) + "\n")
