"""Synthetic proteins and interaction data for desk-scale experiments.

Proteins are self-avoiding random walks with the typical 3.8 A
consecutive-Calpha spacing.  The planted dataset assigns each residue one
of ``n_classes`` latent microenvironment templates; a template fixes a
peaked amino-acid distribution (one anchor residue type per class) and
the local chain stiffness, and classes run in contiguous sequence blocks
so that a residue's neighborhood carries its class signal.

Interaction labels are a deterministic function of each protein's
residue-class histogram (its hidden trait vector): seven random symmetric
bilinear rules, thresholded at their medians.  Pairs are chosen by
decreasing rule margin, with a maximum-margin spanning structure first so
the interaction graph stays connected whenever the edge budget allows.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError, GenerationError
from .ppi import N_INTERACTION_TYPES, PpiGraph
from .protein_graph import AMINO_ACIDS, NUM_AMINO_ACIDS, Protein

CA_STEP = 3.8          # consecutive Calpha spacing, Angstrom
MIN_CLEARANCE = 2.0    # hard-sphere clearance between any two residues


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _self_avoiding_walk(rng: np.random.Generator, n: int,
                        persistence: np.ndarray | None = None,
                        max_step_retries: int = 80, max_restarts: int = 40) -> np.ndarray:
    for _ in range(max_restarts):
        pts = np.zeros((n, 3))
        direction = _unit(rng.standard_normal(3))
        ok = True
        for i in range(1, n):
            for _ in range(max_step_retries):
                fresh = _unit(rng.standard_normal(3))
                if persistence is not None:
                    kappa = persistence[i]
                    direction_try = _unit(kappa * direction + (1.0 - kappa) * fresh)
                else:
                    direction_try = fresh
                cand = pts[i - 1] + CA_STEP * direction_try
                if np.min(np.linalg.norm(pts[:i] - cand, axis=1)) >= MIN_CLEARANCE:
                    pts[i] = cand
                    direction = direction_try
                    break
            else:
                ok = False
                break
        if ok:
            return pts
    raise GenerationError(f"self-avoiding walk failed for length {n}")


def gen_protein(len_range: tuple[int, int], seed: int, protein_id: str = "synth",
                aa_probs: np.ndarray | None = None) -> Protein:
    """One random protein; amino acids follow ``aa_probs`` (uniform by default)."""
    lo, hi = len_range
    if lo < 3:
        raise DataError(f"minimum protein length is 3, got {lo}")
    rng = np.random.default_rng(seed)
    m = int(rng.integers(lo, hi + 1))
    seq = "".join(rng.choice(list(AMINO_ACIDS), size=m, p=aa_probs))
    coords = _self_avoiding_walk(rng, m)
    return Protein(id=protein_id, sequence=seq, coords=coords)


def class_aa_distribution(cls: int, n_classes: int, anchor_weight: float = 0.85) -> np.ndarray:
    """Template distribution for one class: mass on its anchor amino acid."""
    probs = np.full(NUM_AMINO_ACIDS, (1.0 - anchor_weight) / (NUM_AMINO_ACIDS - 1))
    probs[cls] = anchor_weight
    return probs


def gen_planted_microenv_dataset(n_classes: int, n_proteins: int, seed: int,
                                 len_range: tuple[int, int] = (40, 60),
                                 block_len: int = 8,
                                 anchor_weight: float = 0.85,
                                 ) -> tuple[list[Protein], list[np.ndarray]]:
    """Proteins whose residues carry latent class labels, returned alongside."""
    if n_classes > NUM_AMINO_ACIDS:
        raise DataError(f"at most {NUM_AMINO_ACIDS} classes, got {n_classes}")
    rng = np.random.default_rng(seed)
    templates = [class_aa_distribution(c, n_classes, anchor_weight) for c in range(n_classes)]
    # per-class chain stiffness: geometry also encodes the template; the lower
    # bound keeps chains extended enough that spatial contacts stay local
    kappas = np.linspace(0.4, 0.85, n_classes)

    lengths = rng.integers(len_range[0], len_range[1] + 1, size=n_proteins)
    blocks_per_protein = [-(-int(m) // block_len) for m in lengths]
    # one globally balanced, shuffled pool of block classes: dataset-level
    # balance is exact while per-protein histograms stay diverse
    total_blocks = sum(blocks_per_protein)
    pool = np.tile(np.arange(n_classes), -(-total_blocks // n_classes))[:total_blocks]
    rng.shuffle(pool)

    proteins: list[Protein] = []
    labels: list[np.ndarray] = []
    cursor = 0
    for p in range(n_proteins):
        m = int(lengths[p])
        block_classes = pool[cursor:cursor + blocks_per_protein[p]]
        cursor += blocks_per_protein[p]
        classes = np.repeat(block_classes, block_len)[:m]
        seq = "".join(AMINO_ACIDS[int(rng.choice(NUM_AMINO_ACIDS, p=templates[c]))]
                      for c in classes)
        coords = _self_avoiding_walk(rng, m, persistence=kappas[classes])
        proteins.append(Protein(id=f"prot{p:04d}", sequence=seq, coords=coords))
        labels.append(classes)
    return proteins, labels


def protein_traits(residue_classes: list[np.ndarray], n_classes: int) -> np.ndarray:
    """Normalized residue-class histogram per protein."""
    traits = np.zeros((len(residue_classes), n_classes))
    for i, classes in enumerate(residue_classes):
        counts = np.bincount(classes, minlength=n_classes)
        traits[i] = counts / counts.sum()
    return traits


def gen_ppi_graph(proteins: list[Protein], residue_classes: list[np.ndarray],
                  n_classes: int, n_edges: int, rule_seed: int,
                  ) -> tuple[PpiGraph, np.ndarray]:
    """Interaction graph with labels computed from hidden trait vectors.

    Returns the graph (node features set to the trait vectors, to be
    replaced by learned embeddings downstream) and the trait matrix.
    """
    n = len(proteins)
    if n_edges > n * (n - 1) // 2:
        raise DataError(f"{n_edges} edges requested but only {n * (n - 1) // 2} pairs exist")
    traits = protein_traits(residue_classes, n_classes)
    rng = np.random.default_rng(rule_seed)
    rules = np.empty((N_INTERACTION_TYPES, n_classes, n_classes))
    for c in range(N_INTERACTION_TYPES):
        raw = rng.normal(size=(n_classes, n_classes))
        rules[c] = (raw + raw.T) / 2.0

    pairs = np.array([(i, j) for i in range(n) for j in range(i + 1, n)],
                     dtype=np.int64).reshape(-1, 2)
    scores = np.einsum("pk,ckl,pl->pc", traits[pairs[:, 0]], rules, traits[pairs[:, 1]])
    thresholds = np.median(scores, axis=0)
    spread = scores.std(axis=0)
    spread[spread == 0.0] = 1.0
    standardized = (scores - thresholds) / spread
    margins = np.abs(standardized).min(axis=1)

    order = np.argsort(-margins, kind="stable")
    chosen: list[int] = []
    # maximum-margin spanning structure first, so the graph stays connected
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    skipped: list[int] = []
    for idx in order:
        if len(chosen) == n_edges:
            break
        a, b = pairs[idx]
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[ra] = rb
            chosen.append(int(idx))
        else:
            skipped.append(int(idx))
    for idx in skipped:
        if len(chosen) == n_edges:
            break
        chosen.append(idx)

    chosen_arr = np.sort(np.array(chosen, dtype=np.int64))
    edge_index = pairs[chosen_arr]
    bits = (standardized[chosen_arr] > 0.0).astype(np.float64)
    empty = bits.sum(axis=1) == 0
    if np.any(empty):
        best = standardized[chosen_arr].argmax(axis=1)
        bits[empty, best[empty]] = 1.0

    graph = PpiGraph(
        protein_ids=[p.id for p in proteins],
        node_features=traits,
        edge_index=edge_index.reshape(-1, 2),
        labels=bits.reshape(-1, N_INTERACTION_TYPES),
    )
    return graph, traits
