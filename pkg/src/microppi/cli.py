"""Command-line entry point.

Subcommands: gen, pretrain, embed, partition, train-ppi, eval, perturb,
codebook-report.  Exit codes: 0 success, 2 config error, 3 data error,
4 numeric failure.  Every failure prints a single machine-parseable line
to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .errors import ConfigError, DataError, NumericError
from .metrics import aupr, micro_f1, perturb_to_rmsd
from .persist import save_state
from .ppi import PpiGraph
from .protein_graph import Protein, load_proteins, save_proteins
from .splits import load_partition, partition, save_partition
from .synth import gen_planted_microenv_dataset, gen_ppi_graph
from .trainer import (
    codebook_assignments,
    embed_all,
    load_checkpoint,
    load_config,
    load_embeddings,
    pretrain,
    save_checkpoint,
    train_ppi,
)


def _cfg_from(args, **extra):
    overrides = {"seed": getattr(args, "seed", None)}
    overrides.update(extra)
    return load_config(getattr(args, "config", None), overrides)


def cmd_gen(args) -> int:
    cfg = _cfg_from(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    proteins, labels = gen_planted_microenv_dataset(
        cfg.n_classes, cfg.n_proteins, seed=cfg.seed,
        len_range=(cfg.len_min, cfg.len_max))
    graph, _ = gen_ppi_graph(proteins, labels, cfg.n_classes, cfg.n_edges, rule_seed=cfg.seed)
    save_proteins(out / "proteins.jsonl", proteins)
    fileio.write_ppi_csv(out / "ppi.csv", graph)
    (out / "config.json").write_text(json.dumps(dataclasses.asdict(cfg), indent=1) + "\n")
    print(f"wrote {len(proteins)} proteins and {graph.n_entries} interaction entries to {out}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _cfg_from(args)
    proteins = load_proteins(args.proteins)
    result = pretrain(proteins, cfg)
    out = Path(args.out)
    save_checkpoint(out, result.model)
    fileio.write_history_csv(out / "pretrain_loss.csv", result.history)
    final = result.history[-1]
    print(f"pretrained {cfg.E_pre} epochs: loss={final['loss_total']:.6f} "
          f"codes_used={final['codes_used']} -> {out}")
    return 0


def cmd_embed(args) -> int:
    model = load_checkpoint(args.ckpt)
    proteins = load_proteins(args.proteins)
    matrix = embed_all(proteins, model, cache_path=args.out)
    if args.csv:
        fileio.write_embeddings_csv(args.csv, [p.id for p in proteins], matrix)
    print(f"embedded {matrix.shape[0]} proteins ({matrix.shape[1]} dims) -> {args.out}")
    return 0


def cmd_partition(args) -> int:
    ids, edge_index, labels = fileio.read_ppi_csv(args.edges)
    graph = PpiGraph(protein_ids=ids, node_features=np.zeros((len(ids), 1)),
                     edge_index=edge_index, labels=labels)
    part = partition(graph, args.scheme, seed=args.seed)
    save_partition(args.out, part)
    print(f"{args.scheme} partition: train={len(part.train)} val={len(part.val)} "
          f"test={len(part.test)} -> {args.out}")
    return 0


def cmd_train_ppi(args) -> int:
    cfg = _cfg_from(args)
    ids, matrix = load_embeddings(args.emb)
    _, edge_index, labels = fileio.read_ppi_csv(args.edges, id_order=ids)
    graph = PpiGraph(protein_ids=ids, node_features=matrix,
                     edge_index=edge_index, labels=labels)
    part = load_partition(args.split)
    result = train_ppi(graph, part, cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_state(out / "model.json", result.model.state_dict())
    fileio.write_history_csv(out / "history.csv", result.history)
    fileio.write_predictions_csv(out / "predictions.csv", graph,
                                 result.test_entries, result.test_probs,
                                 result.test_subsets)
    run_id = out.name or "run"
    rows = [{"run_id": run_id, "scheme": part.scheme, "subset": key.split("_")[-1],
             "metric": key.rsplit("_", 1)[0], "value": f"{value:.17g}"}
            for key, value in result.test_metrics.items()]
    fileio.write_metrics_csv(out / "metrics.csv", rows)
    (out / "config.json").write_text(json.dumps(dataclasses.asdict(cfg), indent=1) + "\n")
    (out / "run.json").write_text(json.dumps(
        {"scheme": part.scheme, "best_epoch": result.best_epoch,
         "best_val_micro_f1": result.best_val_f1}, indent=1) + "\n")
    test_f1 = result.test_metrics.get("micro_f1_ALL", float("nan"))
    print(f"trained {len(result.history)} epochs: best_val={result.best_val_f1:.4f} "
          f"test_micro_f1={test_f1:.4f} -> {out}")
    return 0


def cmd_eval(args) -> int:
    run = Path(args.run)
    entries, subsets, labels, probs = fileio.read_predictions_csv(run / "predictions.csv")
    run_meta = json.loads((run / "run.json").read_text())
    subset = args.subset.upper()
    if subset == "ALL":
        mask = np.ones(len(entries), dtype=bool)
    else:
        mask = np.array([s == subset for s in subsets], dtype=bool)
    n = int(mask.sum())
    if n == 0:
        print(f"subset={args.subset} entries=0")
        return 0
    scores = {"micro_f1": micro_f1(probs[mask], labels[mask]),
              "aupr": aupr(probs[mask], labels[mask])}
    print(f"subset={args.subset} entries={n} "
          + " ".join(f"{k}={v:.6f}" for k, v in scores.items()))
    rows = [{"run_id": run.name or "run", "scheme": run_meta["scheme"],
             "subset": subset, "metric": k, "value": f"{v:.17g}"}
            for k, v in scores.items()]
    fileio.write_metrics_csv(run / f"eval_{args.subset}.csv", rows)
    return 0


def cmd_perturb(args) -> int:
    proteins = load_proteins(args.proteins)
    noisy = [Protein(id=p.id, sequence=p.sequence,
                     coords=perturb_to_rmsd(p.coords, args.rmsd, seed=args.seed + i))
             for i, p in enumerate(proteins)]
    save_proteins(args.out, noisy)
    print(f"perturbed {len(noisy)} proteins to RMSD {args.rmsd} -> {args.out}")
    return 0


def cmd_codebook_report(args) -> int:
    model = load_checkpoint(args.ckpt)
    proteins = load_proteins(args.proteins)
    usage, aa_counts = codebook_assignments(proteins, model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_codebook_usage_csv(out / "code_usage.csv",
                                    model.codebook.vectors.data, usage)
    fileio.write_code_aa_csv(out / "code_aa_distribution.csv", aa_counts)
    print(f"codebook report: {int((usage > 0).sum())}/{len(usage)} codes used -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microppi",
        description="Microenvironment codebook embeddings for PPI type prediction")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=func)
        return p

    p = add("gen", cmd_gen, help="generate a synthetic dataset")
    p.add_argument("--config", default=None, help="TOML run config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = add("pretrain", cmd_pretrain, help="pretrain encoder and codebook")
    p.add_argument("--proteins", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = add("embed", cmd_embed, help="embed proteins with a frozen checkpoint")
    p.add_argument("--proteins", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="binary embedding cache")
    p.add_argument("--csv", default=None, help="also dump id+vector CSV")

    p = add("partition", cmd_partition, help="split interaction entries")
    p.add_argument("--edges", required=True)
    p.add_argument("--scheme", choices=["random", "bfs", "dfs"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("train-ppi", cmd_train_ppi, help="train the interaction classifier")
    p.add_argument("--emb", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = add("eval", cmd_eval, help="report metrics for a finished run")
    p.add_argument("--run", required=True)
    p.add_argument("--subset", choices=["all", "bs", "es", "ns"], default="all")

    p = add("perturb", cmd_perturb, help="perturb structures to a target RMSD")
    p.add_argument("--proteins", required=True)
    p.add_argument("--rmsd", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("codebook-report", cmd_codebook_report, help="code usage and AA stats")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--proteins", required=True)
    p.add_argument("--out", required=True)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(2, exc)
    except (DataError, FileNotFoundError, OSError) as exc:
        return _fail(3, exc)
    except NumericError as exc:
        return _fail(4, exc)


def _fail(code: int, exc: Exception) -> int:
    message = str(exc).replace("\n", " ")
    print(f"error code={code} kind={type(exc).__name__} msg={message!r}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
