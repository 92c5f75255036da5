"""The four figure kinds: heatmap, profile, convergence, collapse.

Deterministic rendering: fixed figure geometry and dpi, linear color scale
for densities, symmetric log scale for Bohm-potential profiles, and no
timestamps or library version strings in the PNG bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

__all__ = ["SchemaError", "FigureSpec", "render", "KINDS"]

KINDS = ("heatmap", "profile", "convergence", "collapse")
FIGSIZE = (6.4, 4.2)
DPI = 110
PNG_METADATA = {"Software": None}       # strip the library version string


class SchemaError(ValueError):
    """Input artifact does not match the producing module's schema."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: dict
    output: str
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}")

    @classmethod
    def from_json(cls, path) -> "FigureSpec":
        doc = json.loads(Path(path).read_text())
        return cls(kind=doc["kind"], inputs=dict(doc["inputs"]),
                   output=doc["output"], title=doc.get("title", ""),
                   xlabel=doc.get("xlabel", ""), ylabel=doc.get("ylabel", ""))


def _load_csv(path, required) -> pd.DataFrame:
    if not Path(path).exists():
        raise SchemaError(f"input file missing: {path}")
    frame = pd.read_csv(path, comment="#")
    for col in required:
        if col not in frame.columns:
            raise SchemaError(f"{Path(path).name} is missing column {col!r}")
    return frame


def _orders_from_comments(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.startswith("# order "):
            _, _, name, value = line.split()
            try:
                out[name] = float(value)
            except ValueError:
                pass
    return out


def _new_axes(spec):
    fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
    if spec.title:
        ax.set_title(spec.title)
    return fig, ax


def _heatmap(spec, ax):
    frame = _load_csv(spec.inputs["field"],
                      ("t", "x", "re_psi", "im_psi", "abs2_psi"))
    table = frame.pivot_table(index="t", columns="x", values="abs2_psi")
    mesh = ax.pcolormesh(table.columns.values, table.index.values,
                         table.values, shading="nearest", cmap="inferno")
    ax.figure.colorbar(mesh, ax=ax, label=r"$|\psi|^2$")
    ax.set_xlabel(spec.xlabel or "x")
    ax.set_ylabel(spec.ylabel or "t")


def _profile(spec, ax):
    frame = _load_csv(spec.inputs["profile"], ("x", "q_kernel", "q_madelung"))
    ax.plot(frame["x"], frame["q_kernel"], label="propagator branch",
            color="tab:blue", lw=1.6)
    ax.plot(frame["x"], frame["q_madelung"], label="Madelung packet",
            color="tab:red", lw=1.6, ls="--")
    ax.set_yscale("symlog", linthresh=1e-8)
    ax.axhline(0.0, color="0.7", lw=0.6)
    ax.set_xlabel(spec.xlabel or "x")
    ax.set_ylabel(spec.ylabel or "Q(x)")
    ax.legend(loc="upper right", fontsize=9)


def _convergence(spec, ax):
    path = spec.inputs["table"]
    frame = _load_csv(path, ("value", "schrodinger_l2", "bohm_max",
                             "l2_vs_oracle"))
    orders = _orders_from_comments(path)
    plotted = 0
    for col in frame.columns[1:]:
        y = frame[col].to_numpy(dtype=float)
        ok = np.isfinite(y) & (y > 0)
        if ok.sum() < 2:
            continue
        label = col
        if col in orders and np.isfinite(orders[col]):
            label += f" (order {orders[col]:.2f})"
        ax.loglog(frame["value"][ok], y[ok], marker="o", label=label)
        plotted += 1
    if plotted == 0:
        raise SchemaError("convergence table holds no positive series")
    ax.set_xlabel(spec.xlabel or "refinement parameter")
    ax.set_ylabel(spec.ylabel or "error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)


def _collapse(spec, ax):
    frame = _load_csv(spec.inputs["clock"],
                      ("lambda", "t", "t_prime", "rho", "rho_formula"))
    order = np.argsort(frame["t_prime"].to_numpy())
    sc = ax.scatter(frame["t_prime"], frame["rho"], c=frame["lambda"], s=6,
                    cmap="viridis", rasterized=False)
    ax.plot(frame["t_prime"].to_numpy()[order],
            frame["rho_formula"].to_numpy()[order],
            color="k", lw=1.0, label=r"$\rho_o e^{-\int T}$")
    ax.figure.colorbar(sc, ax=ax, label=r"$\lambda$")
    ax.set_yscale("log")
    ax.set_xlabel(spec.xlabel or "t'")
    ax.set_ylabel(spec.ylabel or "rho")
    summary = spec.inputs.get("summary")
    if summary and Path(summary).exists():
        doc = json.loads(Path(summary).read_text())
        disc = doc.get("collapse", {}).get("max_discrepancy")
        if disc is not None:
            ax.legend(title=f"max discrepancy {disc:.2g}", fontsize=9)
        else:
            ax.legend(fontsize=9)
    else:
        ax.legend(fontsize=9)


_RENDERERS = {"heatmap": _heatmap, "profile": _profile,
              "convergence": _convergence, "collapse": _collapse}


def render(spec: FigureSpec) -> Path:
    """Render one figure to PNG; returns the output path.

    Raises SchemaError naming the offending file/column on schema mismatch.
    """
    fig, ax = _new_axes(spec)
    try:
        _RENDERERS[spec.kind](spec, ax)
        fig.tight_layout()
        out = Path(spec.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out, format="png", metadata=PNG_METADATA)
    finally:
        plt.close(fig)
    return Path(spec.output)
