"""Read harness CDF tables and draw one stepped curve per algorithm.

The input schema is the harness cdf.csv contract:
``mode, algorithm, quantity, value, cdf`` with quantity one of
``link-rate`` or ``system-utility``.  Rendering is read-only over the CSV
and deterministic for a fixed renderer version.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

REQUIRED_COLUMNS = ("mode", "algorithm", "quantity", "value", "cdf")

QUANTITY_LABELS = {
    "link-rate": "link rate (bits/s)",
    "system-utility": "harmonic-mean rate (bits/s)",
}


class SchemaError(ValueError):
    """The CSV is missing a required column or holds bad values."""


@dataclass(frozen=True)
class FigureSpec:
    """One figure: input table, quantity to plot, output image."""

    input_path: str
    quantity: str
    output_path: str
    title: str = ""
    log_x: bool = False
    labels: dict = field(default_factory=dict)  # algorithm -> legend label

    def __post_init__(self):
        if self.quantity not in QUANTITY_LABELS:
            raise SchemaError(f"unknown quantity {self.quantity!r}")


def load_cdf_rows(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in REQUIRED_COLUMNS:
            if column not in header:
                raise SchemaError(f"missing column {column!r}")
        rows = []
        for raw in reader:
            try:
                rows.append({
                    "mode": raw["mode"],
                    "algorithm": raw["algorithm"],
                    "quantity": raw["quantity"],
                    "value": float(raw["value"]),
                    "cdf": float(raw["cdf"]),
                })
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"bad numeric row: {raw}") from exc
    return rows


def extract_curves(rows: list[dict], quantity: str) -> dict:
    """Per-algorithm sorted (values, probabilities), input order preserved."""
    curves: dict = {}
    for row in rows:
        if row["quantity"] != quantity:
            continue
        curves.setdefault(row["algorithm"], []).append((row["value"], row["cdf"]))
    out = {}
    for algorithm, points in curves.items():
        points.sort()
        values = [p[0] for p in points]
        probs = [p[1] for p in points]
        out[algorithm] = (values, probs)
    return out


def render_cdf_figure(spec: FigureSpec) -> dict:
    """Draw the figure and return the plotted curves for inspection."""
    rows = load_cdf_rows(spec.input_path)
    curves = extract_curves(rows, spec.quantity)
    if not curves:
        raise SchemaError(f"no rows with quantity {spec.quantity!r}")
    for algorithm in spec.labels:
        if algorithm not in curves:
            raise SchemaError(f"algorithm {algorithm!r} not present in the CSV")

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for algorithm, (values, probs) in curves.items():
        label = spec.labels.get(algorithm, algorithm)
        ax.step(values, probs, where="post", label=label)
    ax.set_xlabel(QUANTITY_LABELS[spec.quantity])
    ax.set_ylabel("cumulative probability")
    ax.set_ylim(0.0, 1.02)
    if spec.log_x:
        ax.set_xscale("log")
    if spec.title:
        ax.set_title(spec.title)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(spec.output_path, dpi=120)
    plt.close(fig)
    return curves
