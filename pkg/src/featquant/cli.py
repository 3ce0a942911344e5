"""Command line entry point: ``featquant <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .deploy import EncoderTable, PackedFrame, emit_encoder_source, export_table, footprint, pack, unpack
from .estimators import METHODS
from .harness import ExperimentConfig, emit_report, load_dataset, read_results_csv
from .harness.experiment import grid_search, make_model, run_ablation, run_experiment

log = logging.getLogger("featquant")


def _config(args) -> ExperimentConfig:
    d = json.loads(Path(args.config).read_text()) if args.config else {}
    if getattr(args, "method", None):
        d["methods"] = args.method
    if getattr(args, "bits", None):
        d["bit_widths"] = args.bits
    if args.seed is not None:
        d["seed"] = args.seed
    if args.jobs is not None:
        d["jobs"] = args.jobs
    return ExperimentConfig.from_dict(d)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_fit(args):
    cfg = _config(args)
    ds = load_dataset(args.dataset, args.target, cfg.seed)
    out = _out(args)
    best = {}
    for method in cfg.methods:
        for n in ([cfg.bit_widths[0]] if method == "FP" else cfg.bit_widths):
            hp, table = grid_search(ds, method, n, cfg)
            best[f"{method}@{n}"] = hp
            (out / f"cv_{method}_{n}.json").write_text(json.dumps(table, indent=1))
            print(f"{method} {n}-bit: {hp}")
    (out / "best_hyperparams.json").write_text(json.dumps(best, indent=1, sort_keys=True))


def cmd_train(args):
    cfg = _config(args)
    if len(cfg.methods) != 1 or len(cfg.bit_widths) != 1:
        raise SystemExit("train needs exactly one --method and one --bits")
    method, n = cfg.methods[0], cfg.bit_widths[0]
    ds = load_dataset(args.dataset, args.target, cfg.seed)
    if args.hyperparams:
        hp = json.loads(Path(args.hyperparams).read_text())
        hp = hp.get(f"{method}@{n}", hp)
    else:
        hp = {k: v[0] for k, v in cfg.grid.items()}
    model = make_model(method, n, hp, cfg, cfg.seed).fit(ds.X, ds.y)
    path = _out(args) / "checkpoint.json"
    model.save_checkpoint(path, feature_names=ds.feature_names)
    print(f"final training loss {model.loss_history_[-1]:.6f}" if model.loss_history_ else "no epochs run")
    print(path)


def cmd_eval(args):
    cfg = _config(args)
    ds = load_dataset(args.dataset, args.target, cfg.seed)
    rows = run_experiment(ds, cfg)
    paths = emit_report(rows, _out(args))
    print(paths["md"].read_text())


def cmd_ablate(args):
    cfg = _config(args)
    ds = load_dataset(args.dataset, args.target, cfg.seed)
    rows, ratios = run_ablation(ds, cfg)
    paths = emit_report(rows, _out(args), ablation=ratios)
    print(paths["ablation"].read_text())


def cmd_report(args):
    rows = read_results_csv(args.results)
    paths = emit_report(rows, _out(args))
    print(paths["md"].read_text())


def cmd_export_encoder(args):
    table = export_table(args.checkpoint)
    out = _out(args)
    table.save(out / f"{args.name}_table.json")
    src = emit_encoder_source(table, args.style, args.name)
    (out / f"{args.name}_encoder.c").write_text(src)
    print(json.dumps(footprint(table, args.style), indent=1))


def cmd_pack(args):
    table = EncoderTable.load(args.table)
    row = [float(v) for v in args.row.split(",")]
    data = pack(table.encode(row), table.bits).to_bytes()
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        print(data.hex())


def cmd_unpack(args):
    data = Path(args.frame).read_bytes()
    frame = PackedFrame.from_bytes(data)
    print(json.dumps({"k": frame.k, "bits": frame.bits, "codes": unpack(frame)}))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="featquant", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def experiment(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--dataset", required=True, help="CSV path, or 'fried' / 'fried:<n>'")
        sp.add_argument("--target", help="label column of a CSV dataset")
        sp.add_argument("--config", help="experiment configuration (JSON)")
        sp.add_argument("--method", action="append", choices=METHODS)
        sp.add_argument("--bits", action="append", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--jobs", type=int)
        sp.add_argument("--out", default="out")
        sp.set_defaults(func=func)
        return sp

    experiment("fit", cmd_fit, "cross-validated grid search")
    tr = experiment("train", cmd_train, "train one model and write checkpoint.json")
    tr.add_argument("--hyperparams", help="JSON of hyperparameters (e.g. best_hyperparams.json)")
    experiment("eval", cmd_eval, "grid search + multi-split evaluation, write results")
    experiment("ablate", cmd_ablate, "SQ / Bw-MQ / Bw-QQ / Bw-SQ ablation")

    rp = sub.add_parser("report", help="re-render results.md and curves.svg from results.csv")
    rp.add_argument("--results", required=True)
    rp.add_argument("--out", default="out")
    rp.set_defaults(func=cmd_report)

    ex = sub.add_parser("export-encoder", help="raw-unit encoder table and C source from a checkpoint")
    ex.add_argument("--checkpoint", required=True)
    ex.add_argument("--style", choices=("if_chain", "binary_search"), default="if_chain")
    ex.add_argument("--name", default="features")
    ex.add_argument("--out", default="out")
    ex.set_defaults(func=cmd_export_encoder)

    pk = sub.add_parser("pack", help="encode one raw row and emit a frame")
    pk.add_argument("--table", required=True)
    pk.add_argument("--row", required=True, help="comma-separated raw feature values")
    pk.add_argument("--out", help="write the frame here instead of printing hex")
    pk.set_defaults(func=cmd_pack)

    up = sub.add_parser("unpack", help="decode a frame file to codes")
    up.add_argument("--frame", required=True)
    up.set_defaults(func=cmd_unpack)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
