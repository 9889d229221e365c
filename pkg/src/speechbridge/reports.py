"""Plain-text tables, line-delimited records, and figure rendering.

Every report path writes both machine-readable JSONL and a figure file so
runs can be compared without rerunning them.
"""

import json

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt


def render_table(headers, rows) -> str:
    """Aligned plain-text table; numbers are right-aligned."""
    cells = [[str(h) for h in headers]]
    for row in rows:
        cells.append([f"{v:.4f}" if isinstance(v, float) else str(v) for v in row])
    widths = [max(len(r[c]) for r in cells) for c in range(len(headers))]
    numeric = [all(isinstance(r[c], (int, float)) for r in rows) if rows else False
               for c in range(len(headers))]

    def fmt(row):
        return "  ".join(
            s.rjust(widths[c]) if numeric[c] else s.ljust(widths[c])
            for c, s in enumerate(row)).rstrip()

    lines = [fmt(cells[0]), "  ".join("-" * w for w in widths)]
    lines += [fmt(r) for r in cells[1:]]
    return "\n".join(lines)


def write_jsonl(path, records):
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path):
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def loss_curve_figure(metrics, path, title="training loss"):
    """metrics: [{step, loss, ...}] or {label: [{step, loss, ...}]}."""
    fig, ax = plt.subplots(figsize=(7, 4))
    series = metrics if isinstance(metrics, dict) else {"loss": metrics}
    for label, ms in series.items():
        ax.plot([m["step"] for m in ms], [m["loss"] for m in ms], label=label)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title(title)
    if len(series) > 1 or next(iter(series)) != "loss":
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def latency_series_figure(stats, path):
    """stats: chunk_latency_probe output keyed by duration."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for dur, s in stats.items():
        ax.plot(range(len(s["ms"])), s["ms"], marker="o", markersize=3,
                label=f"{dur:g}s ({s['chunks']} chunks)")
    ax.set_xlabel("chunk index")
    ax.set_ylabel("ms per chunk")
    ax.set_title("streaming tokenizer per-chunk latency")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def latency_stage_figure(stage_ms, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    names = list(stage_ms)
    ax.bar(names, [stage_ms[n] for n in names])
    ax.set_ylabel("ms")
    ax.set_title("per-stage response latency")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def error_counts_figure(report, path, title="edit operations"):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar(["substitutions", "insertions", "deletions"],
           [report.substitutions, report.insertions, report.deletions])
    ax.set_title(f"{title} (wer {report.wer:.3f})")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def grid_comparison_figure(results, path, title="variant comparison"):
    """results: [{label, final_loss, ...}] bar chart, order preserved."""
    fig, ax = plt.subplots(figsize=(7, 4))
    labels = [r["label"] for r in results]
    ax.bar(labels, [r["final_loss"] for r in results])
    ax.set_ylabel("final loss")
    ax.set_title(title)
    ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
