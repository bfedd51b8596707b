"""Figure rendering for the delimited outputs.

Reads the CSV files that ``target-table``, ``simulate`` and ``sweep`` emit
and writes matplotlib figures next to them, so a results directory carries
both the machine-readable tables and their plots.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_SCHEME_STYLE = {"pow": {"color": "tab:blue", "marker": "o"},
                 "baseline": {"color": "tab:red", "marker": "s"}}

_AXIS_LABEL = {"check_window": "check window (s)",
               "length_limit": "trajectory length limit",
               "forged_count": "forged trajectories per attacker"}


def _read_csv(path: Path) -> tuple[list[str], list[dict]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader.fieldnames or []), list(reader)


def render(csv_path: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Dispatch on the CSV header and render the matching figures."""
    csv_path = Path(csv_path)
    out = Path(out_dir) if out_dir else csv_path.parent
    out.mkdir(parents=True, exist_ok=True)
    header, rows = _read_csv(csv_path)
    if not rows:
        raise ValueError(f"{csv_path} has no data rows")
    if header[:3] == ["axis", "axis_value", "scheme"]:
        return _render_sweep(csv_path.stem, rows, out)
    if header[:2] == ["traverse_time_s", "success_rate"]:
        return [_render_target_table(csv_path.stem, rows, out)]
    if header[:2] == ["scheme", "fpr"]:
        return [_render_scenario(csv_path.stem, rows, out)]
    raise ValueError(f"unrecognized CSV header in {csv_path}: {header}")


def _render_sweep(stem: str, rows: list[dict], out: Path) -> list[Path]:
    axis = rows[0]["axis"]
    xlabel = _AXIS_LABEL.get(axis, axis)
    schemes = sorted({r["scheme"] for r in rows})
    written = []

    fig, axes = plt.subplots(1, 3, figsize=(12, 3.4), sharex=True)
    for metric, ax in zip(("fpr", "fnr", "dr"), axes):
        for scheme in schemes:
            data = [r for r in rows if r["scheme"] == scheme]
            x = [float(r["axis_value"]) for r in data]
            y = [float(r[metric]) for r in data]
            err = [float(r[f"{metric}_std"]) for r in data]
            style = _SCHEME_STYLE.get(scheme, {})
            ax.errorbar(x, y, yerr=err, label=scheme, capsize=2,
                        markersize=3, **style)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(metric.upper())
        ax.grid(True, alpha=0.3)
    axes[0].legend()
    fig.tight_layout()
    path = out / f"{stem}_rates.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(5, 3.4))
    for scheme in schemes:
        data = [r for r in rows if r["scheme"] == scheme]
        x = [float(r["axis_value"]) for r in data]
        y = [float(r["detect_ms"]) for r in data]
        ax.plot(x, y, label=scheme, **_SCHEME_STYLE.get(scheme, {}))
    ax.set_xlabel(xlabel)
    ax.set_ylabel("detection time (modeled ms)")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = out / f"{stem}_detect_ms.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)
    return written


def _render_target_table(stem: str, rows: list[dict], out: Path) -> Path:
    rates = sorted({float(r["success_rate"]) for r in rows}, reverse=True)
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for rate in rates:
        data = [r for r in rows if float(r["success_rate"]) == rate]
        data.sort(key=lambda r: float(r["traverse_time_s"]))
        x = [float(r["traverse_time_s"]) for r in data]
        y = [int(r["target_hex"], 16) for r in data]
        ax.plot(x, y, marker="o", markersize=3, label=f"{rate:.0%}")
    ax.set_xlabel("traverse time (s)")
    ax.set_ylabel("target K")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend(title="success rate")
    fig.tight_layout()
    path = out / f"{stem}_targets.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _render_scenario(stem: str, rows: list[dict], out: Path) -> Path:
    metrics = ("fpr", "fnr", "dr")
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    width = 0.8 / len(rows)
    for k, row in enumerate(rows):
        x = [i + k * width for i in range(len(metrics))]
        y = [float(row[m]) for m in metrics]
        err = [float(row[f"{m}_std"]) for m in metrics]
        style = _SCHEME_STYLE.get(row["scheme"], {})
        ax.bar(x, y, width=width, yerr=err, capsize=3,
               label=row["scheme"], color=style.get("color"))
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(metrics))])
    ax.set_xticklabels([m.upper() for m in metrics])
    ax.set_ylim(0, 1.05)
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = out / f"{stem}_metrics.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
