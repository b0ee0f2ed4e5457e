"""Microenvironment codebook embeddings for protein interaction prediction.

A numpy-backed library with its own reverse-mode autodiff core.  The
pipeline: build residue-level heterogeneous graphs from protein
structures, pretrain an encoder plus a discrete microenvironment codebook
(vector quantization with masked codebook modeling), freeze everything,
embed proteins once, and train a small GIN classifier on the interaction
graph.
"""

from .codebook import Codebook, masked_lookup, mcm_loss, pretrain_loss, quantize, sample_mask, vq_loss
from .errors import (
    ConfigError,
    DataError,
    DegenerateInputError,
    GenerationError,
    MetricError,
    NumericError,
    ParseError,
    PartitionError,
    ShapeError,
)
from .hgnn import HgnnStack
from .metrics import aupr, micro_f1, perturb_to_rmsd, rmsd
from .ppi import GinStack, PairClassifier, PpiGraph, pair_logits, ppi_bce_loss, readout
from .protein_graph import (
    AMINO_ACIDS,
    HeteroProteinGraph,
    Microenvironment,
    Protein,
    build_hetero_graph,
    extract_microenvironment,
    load_proteins,
    save_proteins,
)
from .splits import Partition, partition, subset_label, subset_labels
from .synth import gen_planted_microenv_dataset, gen_ppi_graph, gen_protein
from .tensor import BatchNorm, Parameter, Tensor
from .trainer import (
    PretrainedModel,
    RunConfig,
    embed_all,
    embed_protein,
    load_checkpoint,
    load_config,
    pretrain,
    save_checkpoint,
    train_ppi,
)

__version__ = "0.1.0"
