"""Run reports: JSON serialization, result tables, CSV emission and figures."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path


@dataclass
class DistillReport:
    """Optimization trace plus final artifact, serializable for the harness."""

    kind: str
    config: dict
    seeds: dict
    traces: dict
    result: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")


@dataclass
class ResultsTable:
    """Rectangular experiment results: one dict per row, fixed column order."""

    columns: list
    rows: list  # list of dicts keyed by column name

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(row.get(c, "")) for c in self.columns])
        return buf.getvalue()

    def to_text(self) -> str:
        """Aligned human-readable table."""
        cells = [[str(c) for c in self.columns]]
        for row in self.rows:
            cells.append([_fmt(row.get(c, "")) for c in self.columns])
        widths = [max(len(r[i]) for r in cells) for i in range(len(self.columns))]
        lines = []
        for j, r in enumerate(cells):
            lines.append("  ".join(v.rjust(w) for v, w in zip(r, widths)))
            if j == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def save_results(out_dir, name: str, table: ResultsTable, payload: dict) -> dict:
    """Write <name>.csv, <name>.txt and <name>.json under out_dir.

    The JSON payload carries the full config echo and raw per-trial values so
    a rerun can be compared byte-for-byte.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out / f"{name}.csv",
        "txt": out / f"{name}.txt",
        "json": out / f"{name}.json",
    }
    paths["csv"].write_text(table.to_csv())
    paths["txt"].write_text(table.to_text())
    paths["json"].write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return {k: str(p) for k, p in paths.items()}


def render_figure(payload: dict, out_path) -> str:
    """Render a summary figure for a saved experiment run.

    Supervised runs get one panel of test-MSE vs synthetic size per dataset
    column; offline RL runs get mean return vs synthetic size. Lower-bound
    runs get the per-dimension equality deviations.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    kind = payload.get("kind", "")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    if kind in ("supervised", "offline-rl"):
        series = payload.get("series", {})
        sizes = payload.get("n_syn", [])
        for label, stats in sorted(series.items()):
            means = [s["mean"] for s in stats]
            stds = [s["std"] for s in stats]
            if len(means) == 1 and len(sizes) > 1:
                means, stds = means * len(sizes), stds * len(sizes)
            ax.errorbar(sizes, means, yerr=stds, marker="o", capsize=3, label=label)
        ax.set_xlabel("synthetic size")
        ax.set_ylabel("test MSE" if kind == "supervised" else "mean return")
        ax.set_title(payload.get("title", kind))
        ax.legend()
    elif kind == "lowerbound":
        qs = [row["q"] for row in payload.get("rows", [])]
        devs = [row["max_equal_dev"] for row in payload.get("rows", [])]
        ax.semilogy(qs, [max(d, 1e-18) for d in devs], marker="o")
        ax.set_xlabel("homogeneous dimension q")
        ax.set_ylabel("max loss-equality deviation")
        ax.set_title("adversarial construction check")
    else:
        ax.text(0.5, 0.5, f"no renderer for kind={kind!r}", ha="center")
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return str(out_path)
