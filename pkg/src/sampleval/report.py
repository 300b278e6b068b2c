"""Figure-ready exports from a finished run directory.

Each figure maps to one question: fig2 tie rate (Q1), fig3 fidelity τ
(Q2), fig4 robustness τ (Q3), fig5 predictive τ (Q4). A figure yields
one long-format CSV (policy, sparsity, strategy, n, mean, ci_low,
ci_high — one row per scenario) plus one SVG panel per (policy,
sparsity): sample size on a log x axis with confidence bands, fixed-size
samplers drawn as horizontal rules. Tie-rate panels use a log y axis.

Emission is deterministic: CSV rows copy the stored value strings
verbatim and the SVG writer is salted with a fixed id seed and no
timestamp, so re-emitting from the same store reproduces identical
bytes.
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "sampleval"

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.ticker import ScalarFormatter

from .harness import MANIFEST_FILE, RESULTS_FILE, RunConfig, enumerate_grid

FIGURES = ("fig2", "fig3", "fig4", "fig5")
FIGURE_QUESTIONS = {"fig2": "Q1", "fig3": "Q2", "fig4": "Q3", "fig5": "Q4"}
FIGURE_TITLES = {
    "fig2": "Tie rate (resolution)",
    "fig3": "Fidelity: τ vs Full on the same log",
    "fig4": "Robustness: τ vs the same sampler on ground truth",
    "fig5": "Predictive power: τ vs Full on ground truth",
}


class ReportError(RuntimeError):
    pass


def _load_store(run_dir: str) -> tuple[RunConfig, list[dict]]:
    manifest_path = os.path.join(run_dir, MANIFEST_FILE)
    results_path = os.path.join(run_dir, RESULTS_FILE)
    if not os.path.exists(manifest_path) or not os.path.exists(results_path):
        raise ReportError(f"{run_dir} does not contain a finished run")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    config = RunConfig.from_dict(manifest["config"])
    with open(results_path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return config, rows


def _pick_metric(config: RunConfig, metric: tuple[str, int] | None) -> tuple[str, int]:
    if metric is not None:
        if tuple(metric) not in {tuple(m) for m in config.metrics}:
            raise ReportError(f"metric {metric} was not computed in this run")
        return tuple(metric)
    for kind, k in config.metrics:
        if (kind, k) == ("ndcg", 100):
            return ("ndcg", 100)
    return tuple(config.metrics[0])


def emit_report(
    run_dir: str,
    figure: str,
    out_dir: str | None = None,
    metric: tuple[str, int] | None = None,
) -> list[str]:
    """Write one figure's CSV and per-panel SVG charts; returns the paths."""
    if figure not in FIGURES:
        raise ReportError(f"unknown figure {figure!r}; expected one of {FIGURES}")
    question = FIGURE_QUESTIONS[figure]
    config, rows = _load_store(run_dir)
    if question not in config.questions:
        raise ReportError(f"{figure} needs {question}, which this run did not compute")
    kind, k = _pick_metric(config, metric)

    wanted = {}
    for row in rows:
        if row["question"] == question and row["metric"] == kind and int(row["k"]) == k:
            key = (row["policy"], row["sparsity"], row["strategy"], row["n"])
            wanted[key] = row
    grid = enumerate_grid(config)
    missing = []
    ordered = []
    for scen in grid:
        key = (scen.policy, repr(scen.sparsity), scen.strategy, "" if scen.n is None else str(scen.n))
        if key in wanted:
            ordered.append((scen, wanted[key]))
        else:
            missing.append(scen.key)
    if missing:
        shown = ", ".join(missing[:10])
        more = f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""
        raise ReportError(f"{figure}: store is missing {len(missing)} scenarios: {shown}{more}")

    out_dir = out_dir or os.path.join(run_dir, "report")
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    csv_path = os.path.join(out_dir, f"{figure}.csv")
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("policy,sparsity,strategy,n,mean,ci_low,ci_high\n")
        for scen, row in ordered:
            fh.write(
                f"{scen.policy},{scen.sparsity!r},{scen.strategy},"
                f"{'' if scen.n is None else scen.n},"
                f"{row['mean']},{row['ci_low']},{row['ci_high']}\n"
            )
    paths.append(csv_path)

    notes_path = os.path.join(out_dir, "report_notes.json")
    with open(notes_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(
            {
                "tau_range": "Kendall tau_b reported raw in [-1, 1], never clamped to [0, 1]",
                "tie_rate_log_axis": "zero tie rates are masked on the log-scale panels",
                "metric": {"kind": kind, "k": k},
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    paths.append(notes_path)

    by_panel: dict[tuple[str, str], list] = {}
    for scen, row in ordered:
        by_panel.setdefault((scen.policy, repr(scen.sparsity)), []).append((scen, row))
    for (policy, sparsity_token), panel_rows in by_panel.items():
        path = os.path.join(
            out_dir, f"{figure}_{policy}_s{sparsity_token.replace('.', 'p')}.svg"
        )
        _draw_panel(figure, question, kind, k, policy, sparsity_token, panel_rows, config, path)
        paths.append(path)
    return paths


def _draw_panel(figure, question, kind, k, policy, sparsity_token, panel_rows, config, path):
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    log_y = figure == "fig2"

    def clean(value: str) -> float:
        v = float(value)
        if log_y and not v > 0:
            return np.nan
        return v

    fixed = [(s, r) for s, r in panel_rows if s.n is None]
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    color_index = 0
    for strategy in config.parametric_strategies:
        points = sorted(
            ((s.n, r) for s, r in panel_rows if s.strategy == strategy and s.n is not None),
            key=lambda p: p[0],
        )
        if not points:
            continue
        ns = np.array([p[0] for p in points], dtype=np.float64)
        mean = np.array([clean(p[1]["mean"]) for p in points])
        low = np.array([clean(p[1]["ci_low"]) for p in points])
        high = np.array([clean(p[1]["ci_high"]) for p in points])
        color = colors[color_index % len(colors)]
        color_index += 1
        ax.plot(ns, mean, marker="o", markersize=3.5, linewidth=1.4, label=strategy, color=color)
        ax.fill_between(ns, low, high, alpha=0.18, linewidth=0, color=color)

    fixed_styles = {"full": "-", "exposed": "--", "random_at_e": ":"}
    for scen, row in fixed:
        value = clean(row["mean"])
        if np.isnan(value):
            continue
        ax.axhline(
            value,
            linestyle=fixed_styles.get(scen.strategy, "-."),
            linewidth=1.1,
            color="0.25",
            label=scen.strategy,
        )

    ax.set_xscale("log")
    sizes = [int(n) for n in config.sample_sizes]
    ax.set_xticks(sizes)
    ax.get_xaxis().set_major_formatter(ScalarFormatter())
    ax.minorticks_off()
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel("sample size n")
    ax.set_ylabel("tie rate" if question == "Q1" else "Kendall τ_b")
    ax.set_title(
        f"{FIGURE_TITLES[figure]}\n{policy} logger, sparsity {sparsity_token} — {kind}@{k}",
        fontsize=10,
    )
    ax.legend(fontsize=7, loc="best")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
