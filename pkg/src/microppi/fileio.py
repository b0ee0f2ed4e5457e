"""CSV file formats shared by the CLI and library users.

All tabular outputs carry a header row.  The interaction CSV has columns
id_a, id_b, y1..y7; the metrics report has run_id, scheme, subset,
metric, value.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import DataError, ParseError
from .ppi import N_INTERACTION_TYPES, PpiGraph
from .protein_graph import AMINO_ACIDS

PPI_HEADER = ["id_a", "id_b"] + [f"y{c + 1}" for c in range(N_INTERACTION_TYPES)]


def write_ppi_csv(path, graph: PpiGraph) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PPI_HEADER)
        for (a, b), labels in zip(graph.edge_index, graph.labels):
            writer.writerow([graph.protein_ids[int(a)], graph.protein_ids[int(b)]]
                            + [int(v) for v in labels])


def read_ppi_csv(path, id_order: list[str] | None = None):
    """Return (protein_ids, edge_index, labels).

    ``id_order`` fixes the protein indexing (e.g. to match an embedding
    matrix); by default ids are indexed in sorted order.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PPI_HEADER:
            raise ParseError(f"{path}:1: expected header {','.join(PPI_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(PPI_HEADER):
                raise ParseError(f"{path}:{lineno}: expected {len(PPI_HEADER)} fields")
            try:
                labels = [int(v) for v in row[2:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-integer label") from exc
            rows.append((row[0], row[1], labels))

    if id_order is None:
        ids = sorted({r[0] for r in rows} | {r[1] for r in rows})
    else:
        ids = list(id_order)
        known = set(ids)
        for a, b, _ in rows:
            if a not in known or b not in known:
                raise DataError(f"{path}: protein {a if a not in known else b} "
                                "is missing from the embedding index")
    index = {pid: i for i, pid in enumerate(ids)}
    edge_index = np.array([[index[a], index[b]] for a, b, _ in rows],
                          dtype=np.int64).reshape(-1, 2)
    labels = np.array([r[2] for r in rows], dtype=np.float64).reshape(-1, N_INTERACTION_TYPES)
    return ids, edge_index, labels


def write_metrics_csv(path, rows: list[dict]) -> None:
    """rows: dicts with run_id, scheme, subset, metric, value."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["run_id", "scheme", "subset", "metric", "value"])
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_history_csv(path, history: list[dict]) -> None:
    if not history:
        Path(path).write_text("")
        return
    fieldnames = list(history[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in history:
            writer.writerow(row)


def write_predictions_csv(path, graph: PpiGraph, entries: np.ndarray,
                          probs: np.ndarray, subsets: dict[int, str]) -> None:
    header = (["entry", "id_a", "id_b", "subset"]
              + [f"y{c + 1}" for c in range(N_INTERACTION_TYPES)]
              + [f"p{c + 1}" for c in range(N_INTERACTION_TYPES)])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row, entry in enumerate(entries):
            a, b = graph.edge_index[int(entry)]
            writer.writerow(
                [int(entry), graph.protein_ids[int(a)], graph.protein_ids[int(b)],
                 subsets[int(entry)]]
                + [int(v) for v in graph.labels[int(entry)]]
                + [f"{p:.17g}" for p in probs[row]])


def read_predictions_csv(path):
    """Return (entries, subsets, labels, probs)."""
    entries, subsets, labels, probs = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            entries.append(int(row[0]))
            subsets.append(row[3])
            labels.append([float(v) for v in row[4:4 + N_INTERACTION_TYPES]])
            probs.append([float(v) for v in row[4 + N_INTERACTION_TYPES:]])
    return (np.array(entries, dtype=np.int64), subsets,
            np.array(labels, dtype=np.float64).reshape(-1, N_INTERACTION_TYPES),
            np.array(probs, dtype=np.float64).reshape(-1, N_INTERACTION_TYPES))


def write_embeddings_csv(path, ids: list[str], matrix: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"e{i}" for i in range(matrix.shape[1])])
        for pid, row in zip(ids, matrix):
            writer.writerow([pid] + [f"{v:.17g}" for v in row])


def write_codebook_usage_csv(path, vectors: np.ndarray, usage: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["code", "usage"] + [f"v{i}" for i in range(vectors.shape[1])])
        for idx, (count, vec) in enumerate(zip(usage, vectors)):
            writer.writerow([idx, int(count)] + [f"{v:.17g}" for v in vec])


def write_code_aa_csv(path, aa_counts: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["code", "total"] + list(AMINO_ACIDS))
        for idx, row in enumerate(aa_counts):
            writer.writerow([idx, int(row.sum())] + [int(v) for v in row])
