"""Command-line surface: synthesis, augmentation, training, evaluation,
verification, gradient checking, benchmarking.

Every run resolves its configuration (defaults < --config file < explicit
flags), writes it to ``config.resolved.json`` under the output directory,
and can be reproduced bit-identically by re-running with that file. All
randomness flows from the single ``--seed``.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .augment import Realization, build_augmented, verify_correspondence, write_edge_tsv
from .bench import measure_epoch_time
from .data import (
    MISSING,
    SnapshotSequence,
    SplitSpec,
    build_split,
    load_edge_stream,
    synth_dsbm,
    synth_uniform,
)
from .evaluation import macro_auc
from .model import predict_proba
from .training import (
    TrainConfig,
    config_from_dict,
    config_to_dict,
    fit,
    gradient_check,
    load_checkpoint,
    save_checkpoint,
    write_history_csv,
)

OUT_ENV_VAR = "TAGNN_OUT"

TUNING_NOTE = (
    "typical tuning grids: --layers {2,4,8,16,32}, --lam {0.5,1.0,1.5}, "
    "--alpha {0.1,0.3,0.5}, --dropout {0.1,0.3,0.5}, --variant/--no-variant, "
    "--skip/--no-skip"
)


class CliError(Exception):
    """Configuration/validation problem; exits with status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


def _comma_ints(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _bool_flag(parser, name, help_text):
    parser.add_argument(f"--{name}", dest=name.replace("-", "_"),
                        action=argparse.BooleanOptionalAction, default=None, help=help_text)


def _add_model_flags(p):
    p.add_argument("--realization", choices=[r.value for r in Realization], default=None)
    p.add_argument("--layers", dest="n_layers", type=int, default=None)
    p.add_argument("--dim", dest="hidden_dim", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--lam", type=float, default=None)
    _bool_flag(p, "variant", "use the two-weight layer form")
    _bool_flag(p, "skip", "add a skip connection before the activation")
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--decoder-dropout", dest="decoder_dropout", type=float, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--wd", dest="weight_decay", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    _bool_flag(p, "time-augmentation", "disable for the static (diagonal-only) ablation")
    _bool_flag(p, "adaptive-transition", "disable for uniform (1/indeg) transition weights")
    _bool_flag(p, "tie-attention-projection", "share theta_r between attention and layer 0")


def _add_data_flags(p, with_split=True):
    p.add_argument("--edges", default=None, help="edge stream TSV: u v timestamp")
    p.add_argument("--labels", default=None, help="label TSV: v timestamp class")
    p.add_argument("--T", dest="n_steps", type=int, default=None, help="number of snapshots")
    if with_split:
        p.add_argument("--split", type=_comma_ints, default=None,
                       help="train,val,test snapshot counts, e.g. 4,3,4")
    _bool_flag(p, "synthetic", "generate a drifting block-model dataset instead of loading files")
    p.add_argument("--n", dest="synth_n", type=int, default=None, help="synthetic node count")
    p.add_argument("--blocks", dest="synth_blocks", type=int, default=None)
    p.add_argument("--p-in", dest="synth_p_in", type=float, default=None)
    p.add_argument("--p-out", dest="synth_p_out", type=float, default=None)
    p.add_argument("--drift", dest="synth_drift", type=float, default=None)


def _add_common(p):
    p.add_argument("--config", default=None, help="JSON config; explicit flags win")
    p.add_argument("--out", default=None, help=f"output directory (or ${OUT_ENV_VAR})")
    p.add_argument("--seed", type=int, default=None)


SYNTH_DEFAULTS = {
    "synth_n": 100,
    "synth_blocks": 4,
    "synth_p_in": 0.2,
    "synth_p_out": 0.02,
    "synth_drift": 0.1,
}


def build_parser() -> _Parser:
    parser = _Parser(prog="tagnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dynamic graph as TSV files")
    p.add_argument("--n", dest="synth_n", type=int, default=None)
    p.add_argument("--T", dest="n_steps", type=int, default=None)
    p.add_argument("--blocks", dest="synth_blocks", type=int, default=None)
    p.add_argument("--p-in", dest="synth_p_in", type=float, default=None)
    p.add_argument("--p-out", dest="synth_p_out", type=float, default=None)
    p.add_argument("--drift", dest="synth_drift", type=float, default=None)
    _add_common(p)

    p = sub.add_parser("augment", help="emit the time-augmented edge list as TSV")
    _add_data_flags(p, with_split=False)
    p.add_argument("--realization", choices=[r.value for r in Realization], default=None)
    _add_common(p)

    p = sub.add_parser("train", help="train a model end to end", epilog=TUNING_NOTE)
    _add_data_flags(p)
    _add_model_flags(p)
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", default=None, required=False)
    _add_data_flags(p)
    _bool_flag(p, "per-step", "average per-(class, snapshot) AUCs instead of pooling")
    _add_common(p)

    p = sub.add_parser("verify", help="walk-correspondence verification oracle")
    _add_data_flags(p, with_split=False)
    p.add_argument("--realization", choices=[r.value for r in Realization], default=None)
    p.add_argument("--max-len", dest="max_len", type=int, default=None)
    p.add_argument("--edge-prob", dest="edge_prob", type=float, default=None)
    _add_common(p)

    p = sub.add_parser("gradcheck", help="finite-difference check of the hand-rolled gradients")
    p.add_argument("--n", dest="synth_n", type=int, default=None)
    p.add_argument("--T", dest="n_steps", type=int, default=None)
    p.add_argument("--dim", dest="hidden_dim", type=int, default=None)
    p.add_argument("--layers", dest="n_layers", type=int, default=None)
    p.add_argument("--realization", choices=[r.value for r in Realization], default=None,
                   help="check a single realization instead of the full grid")
    _add_common(p)

    p = sub.add_parser("bench", help="epoch-time scaling against the number of snapshots")
    p.add_argument("--n", dest="synth_n", type=int, default=None)
    p.add_argument("--t-values", dest="t_values", type=_comma_ints, default=None)
    p.add_argument("--dim", dest="hidden_dim", type=int, default=None)
    p.add_argument("--layers", dest="n_layers", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--edge-prob", dest="edge_prob", type=float, default=None)
    p.add_argument("--realization", choices=[r.value for r in Realization], default=None)
    _bool_flag(p, "parallel", "allow multithreaded BLAS during timing")
    _add_common(p)
    return parser


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    cfg = dict(defaults)
    cfg["command"] = args.command
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(cfg) - {"command"}
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        file_cfg.pop("command", None)
        cfg.update(file_cfg)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if cfg.get("out") is None:
        cfg["out"] = os.environ.get(OUT_ENV_VAR) or f"out/{args.command}"
    return cfg


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.resolved.json", "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
    return out


def _train_config(cfg: dict) -> TrainConfig:
    kwargs = {k: cfg[k] for k in TrainConfig.__dataclass_fields__ if k in cfg}
    return config_from_dict(kwargs)


def _load_sequence(cfg: dict) -> SnapshotSequence:
    if cfg.get("synthetic"):
        if cfg.get("n_steps") is None:
            raise CliError("--T is required with --synthetic")
        return synth_dsbm(
            cfg["synth_n"], cfg["n_steps"], cfg["synth_blocks"],
            cfg["synth_p_in"], cfg["synth_p_out"], cfg["synth_drift"], cfg["seed"],
        )
    if not cfg.get("edges") or not cfg.get("labels") or cfg.get("n_steps") is None:
        raise CliError("provide --edges, --labels and --T (or --synthetic)")
    return load_edge_stream(cfg["edges"], cfg["labels"], cfg["n_steps"])


def _write_node_map(seq: SnapshotSequence, out: Path) -> None:
    if seq.node_ids is None:
        return
    with open(out / "node_map.tsv", "w", encoding="utf-8") as fh:
        fh.write("# original_id\tdense_id\n")
        for dense, original in enumerate(seq.node_ids):
            fh.write(f"{original}\t{dense}\n")


def write_edge_stream(seq: SnapshotSequence, edges_path, labels_path) -> None:
    """Dump a sequence in the loader's TSV formats (timestamp = snapshot index)."""
    with open(edges_path, "w", encoding="utf-8") as fh:
        fh.write("# u\tv\ttimestamp\n")
        for t, snap in enumerate(seq.snapshots):
            adj = snap.adjacency
            for u in range(adj.n_rows):
                for v in adj.row(u):
                    if u < v:
                        fh.write(f"{u}\t{v}\t{t}\n")
    with open(labels_path, "w", encoding="utf-8") as fh:
        fh.write("# v\ttimestamp\tclass\n")
        for t in range(seq.n_steps):
            for v in range(seq.n_nodes):
                label = seq.labels.y[t, v]
                if label != MISSING:
                    fh.write(f"{v}\t{t}\t{label}\n")


def _cmd_synth(args) -> int:
    defaults = {**SYNTH_DEFAULTS, "n_steps": 8, "seed": 0, "out": None}
    cfg = _resolve(args, defaults)
    out = _out_dir(cfg)
    seq = synth_dsbm(cfg["synth_n"], cfg["n_steps"], cfg["synth_blocks"],
                     cfg["synth_p_in"], cfg["synth_p_out"], cfg["synth_drift"], cfg["seed"])
    write_edge_stream(seq, out / "edges.tsv", out / "labels.tsv")
    total_edges = sum(s.n_edges for s in seq.snapshots)
    print(f"synth: N={seq.n_nodes} T={seq.n_steps} C={seq.n_classes} "
          f"edges={total_edges} -> {out}")
    return 0


def _data_defaults() -> dict:
    return {"edges": None, "labels": None, "n_steps": None, "synthetic": False,
            **SYNTH_DEFAULTS, "seed": 0, "out": None}


def _cmd_augment(args) -> int:
    cfg = _resolve(args, {**_data_defaults(), "realization": "self_evolution"})
    out = _out_dir(cfg)
    seq = _load_sequence(cfg)
    _write_node_map(seq, out)
    realization = Realization(cfg["realization"])
    graph = build_augmented(seq, realization)
    if realization is Realization.DISENTANGLED:
        write_edge_tsv(graph.structural_part, out / "augmented.structural.tsv")
        write_edge_tsv(graph.temporal_part, out / "augmented.temporal.tsv")
    else:
        write_edge_tsv(graph.part, out / "augmented.tsv")
    print(f"augment: realization={realization.value} node_times={seq.n_steps * seq.n_nodes} "
          f"edges={graph.n_edges} -> {out}")
    return 0


def _cmd_train(args) -> int:
    defaults = {**_data_defaults(), "split": None, **config_to_dict(TrainConfig())}
    cfg = _resolve(args, defaults)
    if cfg.get("split") is None:
        raise CliError("--split is required for training")
    out = _out_dir(cfg)
    seq = _load_sequence(cfg)
    _write_node_map(seq, out)
    split = SplitSpec(*cfg["split"])
    config = _train_config(cfg)
    result = fit(seq, split, config)
    save_checkpoint(out / "checkpoint.json", config, result.best_params)
    write_history_csv(out / "history.csv", result.history)
    print(f"train: best val macro-AUC {result.best_val_auc:.4f} at epoch {result.best_epoch} "
          f"({config.epochs} epochs) -> {out}")
    return 0


def _cmd_eval(args) -> int:
    defaults = {**_data_defaults(), "split": None, "checkpoint": None, "per_step": False}
    cfg = _resolve(args, defaults)
    if not cfg.get("checkpoint"):
        raise CliError("--checkpoint is required")
    if cfg.get("split") is None:
        raise CliError("--split is required")
    out = _out_dir(cfg)
    config, params = load_checkpoint(cfg["checkpoint"])
    seq = _load_sequence({**cfg, "seed": config.seed if cfg.get("synthetic") else cfg["seed"]})
    split = SplitSpec(*cfg["split"])
    rows_by_split = dict(zip(("train", "val", "test"), build_split(seq, split)))

    from .model import assemble_pipeline
    spec = config.model_spec(seq.n_classes, seq.features.dim)
    pipeline = assemble_pipeline(seq, spec)
    labels_flat = seq.labels.flat()
    reports = {}
    for name, rows in rows_by_split.items():
        probs = predict_proba(pipeline, seq.features, params, rows)
        reports[name] = macro_auc(
            probs, labels_flat[rows],
            eval_set=rows if cfg["per_step"] else None,
            per_step=cfg["per_step"],
            n_nodes=seq.n_nodes if cfg["per_step"] else None,
            config=config_to_dict(config),
        )
    payload = {name: rep.to_dict() for name, rep in reports.items()}
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    with open(out / "per_class.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["split", "class", "auc"])
        for name, rep in reports.items():
            for c, auc in enumerate(rep.per_class_auc):
                writer.writerow([name, c, "" if auc is None else repr(auc)])
    print(f"eval: test macro-AUC {reports['test'].macro_auc:.4f} "
          f"({reports['test'].n_examples} examples) -> {out}")
    return 0


def _cmd_verify(args) -> int:
    defaults = {**_data_defaults(), "realization": "full", "max_len": 4, "edge_prob": 0.4}
    cfg = _resolve(args, defaults)
    out = _out_dir(cfg)
    if cfg.get("synthetic"):
        seq = synth_uniform(cfg["synth_n"], cfg["n_steps"] or 3, cfg["edge_prob"], cfg["seed"])
    else:
        seq = _load_sequence(cfg)
    report = verify_correspondence(seq, Realization(cfg["realization"]), cfg["max_len"])
    payload = {
        "injective_map_ok": report.injective_map_ok,
        "reachability_ok": report.reachability_ok,
        "counterexample": repr(report.counterexample) if report.counterexample else None,
    }
    with open(out / "verify.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    print(f"verify: injective_map_ok={report.injective_map_ok} "
          f"reachability_ok={report.reachability_ok} -> {out}")
    return 0 if report.ok else 2


GRADCHECK_TOLERANCE = 1e-5


def _cmd_gradcheck(args) -> int:
    defaults = {"synth_n": 10, "n_steps": 3, "hidden_dim": 6, "n_layers": 2,
                "realization": None, "seed": 1, "out": None}
    cfg = _resolve(args, defaults)
    out = _out_dir(cfg)
    realizations = [Realization(cfg["realization"])] if cfg["realization"] else list(Realization)
    results = []
    for realization in realizations:
        for variant in (False, True):
            for skip in (False, True):
                config = TrainConfig(
                    realization=realization, n_layers=cfg["n_layers"],
                    hidden_dim=cfg["hidden_dim"], variant=variant, skip_connection=skip,
                    seed=cfg["seed"],
                )
                err = gradient_check(config, seed=cfg["seed"],
                                     n_nodes=cfg["synth_n"], n_steps=cfg["n_steps"])
                results.append({"realization": realization.value, "variant": variant,
                                "skip": skip, "max_rel_error": err})
                print(f"gradcheck: realization={realization.value} variant={variant} "
                      f"skip={skip} max_rel_error={err:.3e}")
    worst = max(r["max_rel_error"] for r in results)
    with open(out / "gradcheck.json", "w", encoding="utf-8") as fh:
        json.dump({"results": results, "max_rel_error": worst,
                   "tolerance": GRADCHECK_TOLERANCE}, fh, indent=2)
    print(f"gradcheck: max relative error {worst:.3e} over {len(results)} configs "
          f"(tolerance {GRADCHECK_TOLERANCE:g})")
    return 0 if worst < GRADCHECK_TOLERANCE else 2


def _cmd_bench(args) -> int:
    defaults = {"synth_n": 500, "t_values": [2, 4, 8, 16], "hidden_dim": 32, "n_layers": 4,
                "epochs": 10, "edge_prob": 0.016, "realization": "self_evolution",
                "parallel": False, "seed": 0, "out": None}
    cfg = _resolve(args, defaults)
    out = _out_dir(cfg)
    config = TrainConfig(
        realization=cfg["realization"], n_layers=cfg["n_layers"],
        hidden_dim=cfg["hidden_dim"], dropout=0.0, decoder_dropout=0.0, seed=cfg["seed"],
    )
    n, prob, seed = cfg["synth_n"], cfg["edge_prob"], cfg["seed"]

    def family(t: int) -> SnapshotSequence:
        return synth_uniform(n, t, prob, seed)

    report = measure_epoch_time(family, cfg["t_values"], config, cfg["epochs"],
                                single_thread=not cfg["parallel"])
    with open(out / "bench.json", "w", encoding="utf-8") as fh:
        json.dump({"points": report.to_rows(), "loglog_slope": report.loglog_slope,
                   "config": report.config}, fh, indent=2)
    with open(out / "bench.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(report.to_rows()[0].keys()))
        writer.writeheader()
        writer.writerows(report.to_rows())
    slope = "n/a" if report.loglog_slope is None else f"{report.loglog_slope:.3f}"
    print(f"bench: log-log slope {slope} over T={cfg['t_values']} -> {out}")
    return 0


HANDLERS = {
    "synth": _cmd_synth,
    "augment": _cmd_augment,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "verify": _cmd_verify,
    "gradcheck": _cmd_gradcheck,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return HANDLERS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
