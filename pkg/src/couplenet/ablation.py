"""Normalization x coupling ablation grid.

Trains and evaluates every (normalization, strategy) cell plus the two
single-branch baselines over a set of seeds, then renders the medians as
a markdown table (rows: eltwise / L2 / 1x1 conv; columns: SUM / PROD /
MAX) and a flat CSV.  Full-scale reference mAP values from the original
experiments are printed alongside for qualitative context only; they are
never compared numerically.  All output is deterministic per (config,
seeds): no timestamps, fixed float formatting, sorted assembly.
"""

import concurrent.futures
import statistics
from dataclasses import dataclass

from .config import RunConfig
from .evaluate import evaluate_model
from .train import DivergenceError, run_training

# Row order and labels mirror the original ablation table: "eltwise" is
# no normalization, "1x1 conv" is the learned per-channel scale.
NORM_ROWS = (("none", "eltwise"), ("l2", "L2"), ("learned_scale", "1x1 conv"))
STRATEGY_COLS = ("sum", "prod", "max")

# Full-scale (ResNet-101 / VOC07) reference values, shown for context.
PAPER_REFERENCE = {
    ("none", "sum"): 81.1,
    ("none", "max"): 80.7,
    ("l2", "sum"): 80.3,
    ("l2", "prod"): 63.5,
    ("l2", "max"): 78.2,
    ("learned_scale", "sum"): 81.7,
    ("learned_scale", "max"): 81.3,
    "local": 78.6,
    "global": 78.5,
}


@dataclass(frozen=True)
class CellSpec:
    name: str
    branches: str  # "both", "local", or "global"
    normalization: str
    strategy: str

    def coupling_overrides(self):
        return {"normalization": self.normalization, "strategy": self.strategy,
                "branches": self.branches}


def grid_cells(include_baselines=True, norms=None, strategies=None):
    """The 9 coupled cells (optionally restricted) plus the two baselines."""
    norms = tuple(norms) if norms else tuple(n for n, _ in NORM_ROWS)
    strategies = tuple(strategies) if strategies else STRATEGY_COLS
    cells = [CellSpec(f"{n}+{s}", "both", n, s)
             for n, _ in NORM_ROWS if n in norms
             for s in strategies]
    if include_baselines:
        cells.append(CellSpec("local-only", "local", "none", "sum"))
        cells.append(CellSpec("global-only", "global", "none", "sum"))
    return cells


def run_cell(config_dict, cell, seed):
    """Train and evaluate one grid cell; divergence is recorded, not raised.

    Returns {"cell", "seed", "status", "map", "per_class_ap"} with mAP in
    percent (status "diverged" carries no metrics).
    """
    cfg_dict = dict(config_dict)
    cfg_dict["coupling"] = {**cfg_dict.get("coupling", {}),
                            **cell.coupling_overrides()}
    cfg = RunConfig.from_dict(cfg_dict)
    model = cfg.make_model(seed=seed)
    manifest = cfg.make_manifest()
    try:
        run_training(manifest, model, cfg.train_config(), seed=seed)
    except DivergenceError:
        return {"cell": cell.name, "seed": seed, "status": "diverged",
                "map": None, "per_class_ap": None}
    ev = cfg.eval
    metrics = evaluate_model(model, manifest, "test", cfg.proposal_config(),
                             seed=seed, iou_thresh=ev["iou_thresh"],
                             score_thresh=ev["score_thresh"],
                             nms_thresh=ev["nms_thresh"])
    return {"cell": cell.name, "seed": seed, "status": "ok",
            "map": 100.0 * metrics["map"],
            "per_class_ap": {c: 100.0 * v
                             for c, v in metrics["per_class_ap"].items()}}


def _run_cell_task(args):
    config_dict, cell, seed = args
    return run_cell(config_dict, cell, seed)


def run_grid(config, seeds, cells=None, workers=1, progress=None):
    """Run every (cell, seed) combination; deterministic result order.

    `config` is a RunConfig or plain dict; `workers > 1` fans cells out to
    a process pool (each cell owns its model and RNG state, so order of
    completion cannot affect results, which are re-sorted on assembly).
    """
    config_dict = config.to_dict() if isinstance(config, RunConfig) else dict(config)
    cells = list(cells) if cells is not None else grid_cells()
    tasks = [(config_dict, cell, seed) for cell in cells for seed in seeds]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell_task, tasks))
    else:
        results = []
        for task in tasks:
            results.append(_run_cell_task(task))
            if progress is not None:
                progress(results[-1])
    order = {cell.name: i for i, cell in enumerate(cells)}
    results.sort(key=lambda r: (order[r["cell"]], r["seed"]))
    return results


def summarize(results):
    """Per-cell summary: median mAP over non-diverged seeds + divergence count.

    Returns {cell name: {"median": float | None, "diverged": int, "seeds": int}}.
    """
    by_cell = {}
    for r in results:
        by_cell.setdefault(r["cell"], []).append(r)
    summary = {}
    for name, rs in by_cell.items():
        ok = [r["map"] for r in rs if r["status"] == "ok"]
        summary[name] = {"median": statistics.median(ok) if ok else None,
                         "diverged": sum(r["status"] != "ok" for r in rs),
                         "seeds": len(rs)}
    return summary


def _fmt_cell(summary, name, paper_key):
    entry = summary.get(name)
    if entry is None:
        return "-"
    if entry["median"] is None:
        text = "diverged"
    else:
        text = f"{entry['median']:.2f}"
        if entry["diverged"]:
            text += f" ({entry['diverged']}/{entry['seeds']} diverged)"
    ref = PAPER_REFERENCE.get(paper_key)
    if ref is not None:
        text += f" [ref {ref:.1f}]"
    return text


def render_markdown(summary, seeds):
    """Grid report shaped like the original normalization x coupling table."""
    lines = [
        "# Coupling ablation grid",
        "",
        f"Median test mAP@0.5 (%) over seeds {list(seeds)}. Cells marked",
        "`diverged` hit non-finite loss during training. Bracketed `[ref]`",
        "values are the full-scale published results, shown for qualitative",
        "context only.",
        "",
        "| normalization | SUM | PROD | MAX |",
        "|---|---|---|---|",
    ]
    for norm, label in NORM_ROWS:
        cells = [_fmt_cell(summary, f"{norm}+{s}", (norm, s))
                 for s in STRATEGY_COLS]
        lines.append(f"| {label} | {cells[0]} | {cells[1]} | {cells[2]} |")
    lines += [
        "",
        "## Single-branch baselines",
        "",
        "| branch | mAP |",
        "|---|---|",
        f"| local only | {_fmt_cell(summary, 'local-only', 'local')} |",
        f"| global only | {_fmt_cell(summary, 'global-only', 'global')} |",
        "",
    ]
    return "\n".join(lines)


def render_csv(results):
    """Flat per-(cell, seed) CSV of the raw grid results."""
    lines = ["cell,seed,status,map"]
    for r in results:
        map_text = "" if r["map"] is None else f"{r['map']:.4f}"
        lines.append(f"{r['cell']},{r['seed']},{r['status']},{map_text}")
    return "\n".join(lines) + "\n"
