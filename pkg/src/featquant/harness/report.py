"""Result tables (CSV / markdown) and the MSE-vs-bit-width chart."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .experiment import ResultRow

CSV_FIELDS = ("dataset", "method", "bits", "mean_mse", "ci_low", "ci_high", "n_splits", "split_mses", "hyperparams")


class EmptyReportError(ValueError):
    pass


def results_to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([
            r.dataset, r.method, r.bit_width, repr(r.mean_mse), repr(r.ci_low), repr(r.ci_high),
            r.n_splits, ";".join(repr(m) for m in r.split_mses), json.dumps(r.hyperparams, sort_keys=True),
        ])
    return buf.getvalue()


def read_results_csv(path) -> list[ResultRow]:
    rows = []
    with Path(path).open(newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(ResultRow(
                dataset=rec["dataset"],
                method=rec["method"],
                bit_width=int(rec["bits"]),
                mean_mse=float(rec["mean_mse"]),
                ci_low=float(rec["ci_low"]),
                ci_high=float(rec["ci_high"]),
                split_mses=[float(v) for v in rec["split_mses"].split(";") if v],
                hyperparams=json.loads(rec["hyperparams"]),
            ))
    return rows


def results_to_markdown(rows: list[ResultRow]) -> str:
    lines = [
        "| dataset | method | bits | MSE | 95% CI | splits |",
        "|---|---|---:|---:|---|---:|",
    ]
    for r in rows:
        lines.append(f"| {r.dataset} | {r.method} | {r.bit_width} | {r.mean_mse:.4f} "
                     f"| [{r.ci_low:.4f}, {r.ci_high:.4f}] | {r.n_splits} |")
    return "\n".join(lines) + "\n"


def ablation_to_markdown(ratios: list[dict]) -> str:
    lines = ["| dataset | method | bits | MSE | vs Bw-SQ |", "|---|---|---:|---:|---:|"]
    for r in ratios:
        lines.append(f"| {r['dataset']} | {r['method']} | {r['bit_width']} | {r['mean_mse']:.4f} "
                     f"| {r['ratio_pct']:+.2f} % |")
    return "\n".join(lines) + "\n"


def plot_curves(rows: list[ResultRow], path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "featquant"
    fig, ax = plt.subplots(figsize=(6, 4))
    methods = sorted({r.method for r in rows if r.method != "FP"})
    for m in methods:
        pts = sorted((r.bit_width, r.mean_mse) for r in rows if r.method == m)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=m)
    fp = [r.mean_mse for r in rows if r.method == "FP"]
    if fp:
        ax.axhline(sum(fp) / len(fp), color="red", linestyle="--", label="FP")
    ax.set_xlabel("bit width")
    ax.set_ylabel("test MSE (standardized)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_report(rows: list[ResultRow], out_dir, ablation: list[dict] | None = None) -> dict[str, Path]:
    """Write results.csv, results.md and curves.svg (plus ablation files if given)."""
    if not rows:
        raise EmptyReportError("nothing to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out / "results.csv",
        "md": out / "results.md",
        "svg": out / "curves.svg",
    }
    paths["csv"].write_text(results_to_csv(rows))
    paths["md"].write_text(results_to_markdown(rows))
    plot_curves(rows, paths["svg"])
    if ablation:
        paths["ablation"] = out / "ablation.md"
        paths["ablation"].write_text(ablation_to_markdown(ablation))
    return paths
