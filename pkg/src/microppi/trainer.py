"""Two-stage training: codebook pretraining, frozen embedding, PPI training.

Stage one trains encoder, decoder, codebook and mask vector on the
reconstruction objective (plus masked codebook modeling).  Stage two
freezes all of that, embeds every protein once, and trains only the GIN
interaction encoder and pair classifier on the cached embeddings; the
best-validation model is kept.  The two stages share nothing but the
embedding matrix, which is what makes PPI epochs independent of protein
size.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codebook import (
    Codebook,
    masked_lookup,
    mcm_loss,
    pretrain_loss,
    quantize,
    sample_mask,
    usage_counts,
    usage_entropy,
    vq_loss,
)
from .errors import ConfigError, NumericError, PartitionError
from .hgnn import HgnnStack
from .metrics import aupr, micro_f1
from .optim import Adam
from .persist import load_state, save_state
from .ppi import GinStack, PairClassifier, PpiGraph, pair_logits, ppi_bce_loss, readout
from .protein_graph import Protein, build_hetero_graph
from .splits import Partition, subset_labels
from .tensor import (
    Tensor,
    sigmoid_values,
    collect_parameters,
    gather,
    mul,
    sub,
    tensor_sum,
    tile_rows,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

ABLATIONS = ("none", "no_mask", "mlm", "mhm", "no_vq")


@dataclass
class RunConfig:
    """Every knob of the pipeline; field names double as TOML keys."""

    d_s: int = 2
    d_r: float = 10.0
    K: int = 5
    L: int = 4
    F: int = 128
    codebook_size: int = 512
    mask_ratio: float = 0.15
    beta: float = 0.25
    gamma: float = 1.0
    eta: float = 1.0
    L_s: int = 2
    hidden_ppi: int = 64
    eps_init: float = 16.0
    lr: float = 1e-3
    weight_decay: float = 1e-4
    E_pre: int = 50
    E: int = 500
    C: int = 7
    scheme: str = "random"
    seed: int = 0
    ablation: str = "none"
    # synthetic-data knobs consumed by the gen entry point
    n_proteins: int = 100
    n_classes: int = 8
    len_min: int = 40
    len_max: int = 60
    n_edges: int = 400

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}; choose from {ABLATIONS}")
        if not 0.0 < self.mask_ratio < 1.0:
            raise ConfigError(f"mask_ratio must be in (0, 1), got {self.mask_ratio}")
        for name in ("d_s", "K", "L", "F", "codebook_size", "L_s", "hidden_ppi",
                     "E_pre", "E", "C", "n_proteins", "n_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_r <= 0 or self.lr <= 0 or self.gamma < 1.0:
            raise ConfigError("d_r and lr must be positive; gamma must be >= 1")


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """RunConfig from a TOML file, with per-field overrides on top."""
    values: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            values.update(tomllib.load(fh))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**values)


@dataclass
class PretrainedModel:
    encoder: HgnnStack
    decoder: HgnnStack
    codebook: Codebook
    cfg: RunConfig

    def parameters(self):
        return collect_parameters([self.encoder, self.decoder, self.codebook])

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {p.name: p.data.copy() for p in self.parameters()}
        for name, buf in {**self.encoder.buffers(), **self.decoder.buffers()}.items():
            state[name] = buf.copy()
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        buffers = {**self.encoder.buffers(), **self.decoder.buffers()}
        for p in self.parameters():
            p.data[...] = state[p.name]
        for name, buf in buffers.items():
            buf[...] = state[name]


def build_models(cfg: RunConfig, rng: np.random.Generator) -> PretrainedModel:
    f_in = 20
    encoder = HgnnStack.encoder(f_in, cfg.F, cfg.L, rng)
    decoder = HgnnStack.decoder(cfg.F, f_in, cfg.L, rng)
    codebook = Codebook(cfg.codebook_size, cfg.F, rng)
    return PretrainedModel(encoder, decoder, codebook, cfg)


def build_graphs(proteins: list[Protein], cfg: RunConfig):
    return [build_hetero_graph(p, cfg.d_s, cfg.d_r, cfg.K) for p in proteins]


@dataclass
class PretrainResult:
    model: PretrainedModel
    history: list[dict] = field(default_factory=list)


def _masked_rows_lookup(codes: np.ndarray, cb: Codebook, rows: np.ndarray):
    """Lookup that hides chosen residues (not whole codebook entries)."""
    selected = gather(cb.vectors, codes)
    ind = np.zeros((codes.shape[0], cb.dim))
    ind[rows] = 1.0
    tiled = tile_rows(cb.mask_vector, codes.shape[0])
    return mul(selected, Tensor(1.0 - ind)) + mul(tiled, Tensor(ind))


def _reconstruction_only(x: Tensor, x_hat: Tensor) -> Tensor:
    diff = sub(x, x_hat)
    return mul(tensor_sum(mul(diff, diff)), 1.0 / x.data.shape[0])


def pretrain(proteins: list[Protein], cfg: RunConfig,
             graphs=None) -> PretrainResult:
    """Run the reconstruction/masking objective for E_pre epochs."""
    if not proteins:
        raise ConfigError("pretrain: need at least one protein")
    rng = np.random.default_rng(cfg.seed)
    model = build_models(cfg, rng)
    if graphs is None:
        graphs = build_graphs(proteins, cfg)
    opt = Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    history: list[dict] = []
    last_good = model.state_dict()
    use_mcm = cfg.ablation == "none" and cfg.eta != 0.0

    for epoch in range(cfg.E_pre):
        order = rng.permutation(len(proteins))
        sums = {"total": 0.0, "recon": 0.0, "codebook": 0.0, "commit": 0.0, "mcm": 0.0}
        epoch_codes = []
        for idx in order:
            protein, graph = proteins[idx], graphs[idx]
            x = Tensor(protein.features)
            m = protein.n_residues

            if cfg.ablation == "no_vq":
                h = model.encoder(graph, x, training=True)
                x_hat = model.decoder(graph, h, training=True)
                total = _reconstruction_only(x, x_hat)
                sums["recon"] += total.item()
                l_mcm_val = 0.0
            else:
                if cfg.ablation == "mlm":
                    n_mask = max(1, int(round(cfg.mask_ratio * m)))
                    rows = rng.choice(m, size=n_mask, replace=False)
                    x_in = protein.features.copy()
                    x_in[rows] = 0.0
                    h = model.encoder(graph, Tensor(x_in), training=True)
                else:
                    h = model.encoder(graph, x, training=True)
                q = quantize(h, model.codebook)
                epoch_codes.append(q.codes)
                x_hat = model.decoder(graph, q.straight_through, training=True)
                parts = vq_loss(x, x_hat, h, q, cfg.beta)
                sums["recon"] += parts.reconstruction
                sums["codebook"] += parts.codebook
                sums["commit"] += parts.commitment

                l_mcm_val = 0.0
                if use_mcm:
                    plan = sample_mask(model.codebook, cfg.mask_ratio, rng)
                    lookup, masked_nodes = masked_lookup(q.codes, model.codebook, plan)
                    x_tilde = model.decoder(graph, lookup, training=True)
                    l_mcm = mcm_loss(x, x_tilde, masked_nodes, cfg.gamma)
                    total = pretrain_loss(parts.total, l_mcm, cfg.eta)
                    l_mcm_val = l_mcm.item()
                elif cfg.ablation == "mlm":
                    l_mcm = mcm_loss(x, x_hat, rows, cfg.gamma)
                    total = pretrain_loss(parts.total, l_mcm, cfg.eta)
                    l_mcm_val = l_mcm.item()
                elif cfg.ablation == "mhm":
                    n_mask = max(1, int(round(cfg.mask_ratio * m)))
                    rows = rng.choice(m, size=n_mask, replace=False)
                    lookup = _masked_rows_lookup(q.codes, model.codebook, rows)
                    x_tilde = model.decoder(graph, lookup, training=True)
                    l_mcm = mcm_loss(x, x_tilde, rows, cfg.gamma)
                    total = pretrain_loss(parts.total, l_mcm, cfg.eta)
                    l_mcm_val = l_mcm.item()
                else:
                    total = parts.total

            if not np.isfinite(total.data):
                model.load_state_dict(last_good)
                raise NumericError(f"pretrain: non-finite loss at epoch {epoch}; "
                                   "restored last good checkpoint")
            sums["total"] += total.item()
            sums["mcm"] += l_mcm_val
            opt.zero_grad()
            total.backward()
            opt.step()

        counts = usage_counts(epoch_codes, cfg.codebook_size) if epoch_codes else np.zeros(1, dtype=np.int64)
        row = {
            "epoch": epoch,
            "loss_total": sums["total"] / len(proteins),
            "loss_recon": sums["recon"] / len(proteins),
            "loss_codebook": sums["codebook"] / len(proteins),
            "loss_commit": sums["commit"] / len(proteins),
            "loss_mcm": sums["mcm"] / len(proteins),
            "code_entropy": usage_entropy(counts),
            "codes_used": int((counts > 0).sum()),
        }
        history.append(row)
        logger.info("pretrain epoch %d: total=%.5f recon=%.5f mcm=%.5f entropy=%.3f",
                    epoch, row["loss_total"], row["loss_recon"], row["loss_mcm"],
                    row["code_entropy"])
        last_good = model.state_dict()

    return PretrainResult(model=model, history=history)


# -- checkpointing -------------------------------------------------------------


def save_checkpoint(directory, model: PretrainedModel) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_state(directory / "params.json", model.state_dict())
    (directory / "config.json").write_text(
        json.dumps(dataclasses.asdict(model.cfg), indent=1, sort_keys=True) + "\n")


def load_checkpoint(directory) -> PretrainedModel:
    directory = Path(directory)
    cfg = RunConfig(**json.loads((directory / "config.json").read_text()))
    model = build_models(cfg, np.random.default_rng(cfg.seed))
    model.load_state_dict(load_state(directory / "params.json"))
    return model


# -- embedding -----------------------------------------------------------------

EMBED_MAGIC = b"MENVEC01"


def embed_protein(protein: Protein, model: PretrainedModel, graph=None) -> np.ndarray:
    """Frozen eval-mode readout for one protein."""
    cfg = model.cfg
    if graph is None:
        graph = build_hetero_graph(protein, cfg.d_s, cfg.d_r, cfg.K)
    h = model.encoder(graph, Tensor(protein.features), training=False)
    if cfg.ablation == "no_vq":
        return h.data.mean(axis=0)
    q = quantize(h, model.codebook)
    return readout(q.quantized.data, h.data)


def save_embeddings(path, ids: list[str], matrix: np.ndarray) -> None:
    """Binary cache: magic, uint64 N, uint64 D, row-major float64."""
    matrix = np.ascontiguousarray(matrix, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(EMBED_MAGIC)
        fh.write(np.array(matrix.shape, dtype="<u8").tobytes())
        fh.write(matrix.tobytes())
    Path(str(path) + ".ids.json").write_text(json.dumps(ids) + "\n")


def load_embeddings(path) -> tuple[list[str], np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:8] != EMBED_MAGIC:
        raise ConfigError(f"{path}: not an embedding cache (bad magic)")
    n, d = np.frombuffer(raw[8:24], dtype="<u8")
    matrix = np.frombuffer(raw[24:], dtype="<f8").reshape(int(n), int(d)).copy()
    ids = json.loads(Path(str(path) + ".ids.json").read_text())
    return ids, matrix


def embed_all(proteins: list[Protein], model: PretrainedModel,
              cache_path=None, graphs=None) -> np.ndarray:
    """Embed every protein once; reuse the cache file when present."""
    if cache_path is not None and Path(cache_path).exists():
        ids, matrix = load_embeddings(cache_path)
        if ids == [p.id for p in proteins]:
            return matrix
        logger.warning("embedding cache %s lists different proteins; recomputing", cache_path)
    if graphs is None:
        rows = [embed_protein(p, model) for p in proteins]
    else:
        rows = [embed_protein(p, model, g) for p, g in zip(proteins, graphs)]
    matrix = np.vstack(rows)
    if cache_path is not None:
        save_embeddings(cache_path, [p.id for p in proteins], matrix)
    return matrix


# -- PPI training ----------------------------------------------------------------


@dataclass
class PpiModel:
    gin: GinStack
    fc: PairClassifier

    def parameters(self):
        return collect_parameters([self.gin, self.fc])

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_state_dict(self, state) -> None:
        for p in self.parameters():
            p.data[...] = state[p.name]

    def predict_probs(self, features: np.ndarray, edge_index: np.ndarray,
                      entries: np.ndarray) -> np.ndarray:
        z = self.gin(Tensor(features), edge_index)
        logits = pair_logits(z, edge_index[entries], self.fc)
        return sigmoid_values(logits.data)


@dataclass
class TrainPpiResult:
    model: PpiModel
    history: list[dict]
    best_epoch: int
    best_val_f1: float
    test_metrics: dict[str, float]
    test_entries: np.ndarray
    test_probs: np.ndarray
    test_subsets: dict[int, str]


def build_ppi_model(cfg: RunConfig, d_in: int, rng: np.random.Generator) -> PpiModel:
    gin = GinStack(d_in, cfg.hidden_ppi, cfg.L_s, rng)
    # a large initial eps keeps the protein's own embedding from being
    # swamped by the unnormalized neighbor sum on dense graphs
    for layer in gin.layers:
        layer.eps.data = np.asarray(float(cfg.eps_init))
    fc = PairClassifier(cfg.hidden_ppi, cfg.C, rng)
    return PpiModel(gin, fc)


def _train_ppi_epoch(model: PpiModel, features: Tensor, graph: PpiGraph,
                     train_idx: np.ndarray, opt: Adam) -> float:
    z = model.gin(features, graph.edge_index)
    logits = pair_logits(z, graph.edge_index[train_idx], model.fc)
    loss = ppi_bce_loss(logits, graph.labels[train_idx])
    opt.zero_grad()
    loss.backward()
    opt.step()
    return loss.item()


def subset_metrics(probs: np.ndarray, labels: np.ndarray, entry_ids: np.ndarray,
                   subsets: dict[int, str]) -> dict[str, float]:
    """micro-F1 and AUPR overall and per BS/ES/NS stratum."""
    out = {"micro_f1_ALL": micro_f1(probs, labels)}
    try:
        out["aupr_ALL"] = aupr(probs, labels)
    except Exception:
        out["aupr_ALL"] = float("nan")
    for stratum in ("BS", "ES", "NS"):
        mask = np.array([subsets[int(e)] == stratum for e in entry_ids], dtype=bool)
        if not mask.any():
            continue
        out[f"micro_f1_{stratum}"] = micro_f1(probs[mask], labels[mask])
        try:
            out[f"aupr_{stratum}"] = aupr(probs[mask], labels[mask])
        except Exception:
            out[f"aupr_{stratum}"] = float("nan")
    return out


def train_ppi(graph: PpiGraph, part: Partition, cfg: RunConfig,
              epochs: int | None = None) -> TrainPpiResult:
    """Full-graph GIN training with best-validation-epoch selection."""
    if len(part.train) == 0:
        raise PartitionError("train_ppi: empty train split")
    if part.n_entries != graph.n_entries:
        raise PartitionError(f"partition covers {part.n_entries} entries, "
                             f"graph has {graph.n_entries}")
    epochs = cfg.E if epochs is None else epochs
    rng = np.random.default_rng(cfg.seed)
    model = build_ppi_model(cfg, graph.node_features.shape[1], rng)
    opt = Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    features = Tensor(graph.node_features)
    train_idx = np.array(part.train, dtype=np.int64)
    val_idx = np.array(part.val, dtype=np.int64)
    test_idx = np.array(part.test, dtype=np.int64)

    history: list[dict] = []
    best_val, best_epoch, best_state = -1.0, -1, model.state_dict()
    for epoch in range(epochs):
        loss = _train_ppi_epoch(model, features, graph, train_idx, opt)
        row = {"epoch": epoch, "train_loss": loss}
        if len(val_idx):
            val_probs = model.predict_probs(graph.node_features, graph.edge_index, val_idx)
            row["val_micro_f1"] = micro_f1(val_probs, graph.labels[val_idx])
            if row["val_micro_f1"] > best_val:
                best_val, best_epoch = row["val_micro_f1"], epoch
                best_state = model.state_dict()
        history.append(row)
    if len(val_idx) == 0:
        best_epoch, best_val = epochs - 1, float("nan")
        best_state = model.state_dict()
    model.load_state_dict(best_state)

    subsets = subset_labels(graph, part)
    if len(test_idx):
        test_probs = model.predict_probs(graph.node_features, graph.edge_index, test_idx)
        test_metrics = subset_metrics(test_probs, graph.labels[test_idx], test_idx, subsets)
    else:
        test_probs = np.zeros((0, cfg.C))
        test_metrics = {}
    return TrainPpiResult(model=model, history=history, best_epoch=best_epoch,
                          best_val_f1=best_val, test_metrics=test_metrics,
                          test_entries=test_idx, test_probs=test_probs,
                          test_subsets=subsets)


# -- wall-clock probes for the decoupling property --------------------------------


def time_ppi_epochs(graph: PpiGraph, part: Partition, cfg: RunConfig,
                    n_epochs: int = 20, repeats: int = 3) -> float:
    """Seconds per PPI epoch on cached embeddings (min over repeats)."""
    train_idx = np.array(part.train, dtype=np.int64)
    best = np.inf
    for _ in range(repeats):
        rng = np.random.default_rng(cfg.seed)
        model = build_ppi_model(cfg, graph.node_features.shape[1], rng)
        opt = Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
        features = Tensor(graph.node_features)
        _train_ppi_epoch(model, features, graph, train_idx, opt)  # warm up
        start = time.perf_counter()
        for _ in range(n_epochs):
            _train_ppi_epoch(model, features, graph, train_idx, opt)
        best = min(best, (time.perf_counter() - start) / n_epochs)
    return best


def time_end_to_end_epochs(proteins: list[Protein], model: PretrainedModel,
                           graph: PpiGraph, part: Partition, cfg: RunConfig,
                           n_epochs: int = 3, repeats: int = 3,
                           graphs=None) -> float:
    """Seconds per epoch when every epoch re-encodes all proteins first."""
    if graphs is None:
        graphs = build_graphs(proteins, cfg)
    train_idx = np.array(part.train, dtype=np.int64)
    best = np.inf
    for _ in range(repeats):
        rng = np.random.default_rng(cfg.seed)
        ppi_model = build_ppi_model(cfg, graph.node_features.shape[1], rng)
        opt = Adam(ppi_model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
        start = time.perf_counter()
        for _ in range(n_epochs):
            rows = [embed_protein(p, model, g) for p, g in zip(proteins, graphs)]
            features = Tensor(np.vstack(rows))
            z = ppi_model.gin(features, graph.edge_index)
            logits = pair_logits(z, graph.edge_index[train_idx], ppi_model.fc)
            loss = ppi_bce_loss(logits, graph.labels[train_idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
        best = min(best, (time.perf_counter() - start) / n_epochs)
    return best


# -- codebook usage report ---------------------------------------------------------


def codebook_assignments(proteins: list[Protein], model: PretrainedModel,
                         graphs=None) -> tuple[np.ndarray, np.ndarray]:
    """Usage counts per code and the per-code amino-acid count matrix."""
    cfg = model.cfg
    if graphs is None:
        graphs = build_graphs(proteins, cfg)
    usage = np.zeros(cfg.codebook_size, dtype=np.int64)
    aa_counts = np.zeros((cfg.codebook_size, 20), dtype=np.int64)
    for protein, graph in zip(proteins, graphs):
        h = model.encoder(graph, Tensor(protein.features), training=False)
        codes = quantize(h, model.codebook).codes
        usage += np.bincount(codes, minlength=cfg.codebook_size)
        aa_idx = protein.features.argmax(axis=1)
        np.add.at(aa_counts, (codes, aa_idx), 1)
    return usage, aa_counts
