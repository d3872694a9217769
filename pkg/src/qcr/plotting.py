"""Render a run report to PNG figures.

Uses the object-oriented matplotlib API on the Agg canvas, so nothing touches
pyplot's global state or needs a display.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

STYLE = {"figsize": (5.0, 3.2), "dpi": 120}


def _new(title: str) -> tuple[Figure, object]:
    fig = Figure(figsize=STYLE["figsize"], dpi=STYLE["dpi"], layout="constrained")
    FigureCanvasAgg(fig)
    ax = fig.add_subplot()
    ax.set_title(title, fontsize=10)
    ax.grid(alpha=0.3)
    return fig, ax


def _save(fig: Figure, path: Path) -> Path:
    fig.savefig(path)
    return path


def _energies(report: dict, outdir: Path, label: str) -> list[Path]:
    energies = report["outputs"].get("energies") or []
    if not energies:
        return []
    fig, ax = _new(f"{label} energy per iteration")
    ax.plot(np.arange(1, len(energies) + 1), energies, marker=".", lw=1)
    ax.set_xlabel("iteration")
    ax.set_ylabel("energy")
    return [_save(fig, outdir / "energy.png")]


def _betas(report: dict, outdir: Path) -> list[Path]:
    betas = report["outputs"].get("betas") or []
    fig, ax = _new("FALQON feedback parameters")
    ax.step(np.arange(1, len(betas) + 1), betas, where="post", lw=1)
    ax.set_xlabel("layer")
    ax.set_ylabel(r"$\beta_k$")
    return [_save(fig, outdir / "betas.png")]


def _counts(report: dict, outdir: Path) -> list[Path]:
    counts = report["outputs"].get("counts") or {}
    if not counts:
        return []
    fig, ax = _new(f"outcome counts ({report['outputs'].get('shots', 0)} shots)")
    keys = sorted(counts)
    ax.bar(range(len(keys)), [counts[k] for k in keys], color="0.4")
    ax.set_xticks(range(len(keys)), keys, rotation=90 if len(keys) > 8 else 0, fontsize=7)
    ax.set_ylabel("shots")
    return [_save(fig, outdir / "counts.png")]


def _fidelity(report: dict, outdir: Path) -> list[Path]:
    fid = report["outputs"].get("fidelity") or []
    if not fid:
        return []
    fig, ax = _new("GHZ fidelity per shot")
    ax.plot(range(len(fid)), 1.0 - np.asarray(fid), "o", ms=3)
    ax.set_xlabel("shot")
    ax.set_ylabel("1 - fidelity")
    return [_save(fig, outdir / "fidelity.png")]


def _syndromes(report: dict, outdir: Path) -> list[Path]:
    hist = report["outputs"].get("syndrome_history") or []
    if not hist:
        return []
    fig, ax = _new(f"syndromes (frame {report['outputs'].get('pauli_frame', '')})")
    ax.imshow(np.asarray(hist).T, cmap="Greys", vmin=0, vmax=1, aspect="auto",
              extent=(0.5, len(hist) + 0.5, 1.5, -0.5))
    ax.set_yticks([0, 1], ["s01", "s12"])
    ax.set_xlabel("round")
    ax.grid(False)
    return [_save(fig, outdir / "syndromes.png")]


def _timing(report: dict, outdir: Path) -> list[Path]:
    timing = report.get("timing") or {}
    create = timing.get("checkpoint_create_ms") or []
    if not create:
        return []
    fig, ax = _new("checkpoint create time")
    ax.plot(range(1, len(create) + 1), create, ".", ms=4, label="create")
    for t in timing.get("restore_ms") or []:
        ax.axhline(t, color="C1", lw=1, label="restore")
    ax.set_xlabel("checkpoint")
    ax.set_ylabel("ms")
    ax.legend(fontsize=7)
    return [_save(fig, outdir / "timing.png")]


def render_figures(report: dict, outdir: str | Path) -> list[Path]:
    """Write the figures that apply to ``report`` into ``outdir``; returns their paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    kind = report.get("workload")
    paths: list[Path] = []
    if kind in ("vqe", "falqon"):
        paths += _energies(report, outdir, kind.upper() if kind == "vqe" else "FALQON")
    if kind == "falqon":
        paths += _betas(report, outdir)
    paths += _counts(report, outdir)
    paths += _fidelity(report, outdir)
    paths += _syndromes(report, outdir)
    paths += _timing(report, outdir)
    return paths
