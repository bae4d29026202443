"""Output artifact naming, rendering and listing.

A refinement run writing ``out/scene.pfm`` leaves these sidecars next to it:
``scene_confidence.pfm``, ``scene_confidence.png``, ``scene_error.png`` and
``scene_report.json``.
"""

import re
from datetime import datetime
from pathlib import Path

import numpy as np

from image_io import write_pfm, write_png8

ERROR_CLIP_PX = 20.0

ARTIFACT_KINDS = {
    "_confidence.pfm": "confidence",
    "_confidence.png": "confidence preview",
    "_error.png": "error map",
    "_report.json": "report",
    ".pfm": "disparity",
}


def sanitize_filename(name: str | None) -> str:
    """Convert a sample name to a safe file stem.

    Args:
        name: Original sample name (may be None)

    Returns:
        Safe filename string (lowercase, no special chars)
    """
    if not name:
        return "untitled"
    safe = re.sub(r"[^\w\s.-]", "_", name)
    safe = re.sub(r"\s+", "_", safe)
    safe = re.sub(r"_+", "_", safe)
    return safe.lower().strip("_")[:50] or "untitled"


def sidecar_paths(output: str | Path) -> dict[str, Path]:
    """Paths of every artifact belonging to the disparity file ``output``."""
    output = Path(output)
    stem = output.with_suffix("")
    return {
        "disparity": output,
        "confidence": Path(f"{stem}_confidence.pfm"),
        "confidence_png": Path(f"{stem}_confidence.png"),
        "error_png": Path(f"{stem}_error.png"),
        "report": Path(f"{stem}_report.json"),
    }


def render_error_map(pred: np.ndarray, gt: np.ndarray, clip_px: float = ERROR_CLIP_PX) -> np.ndarray:
    """|pred - gt| clipped at ``clip_px`` and scaled to [0, 1]; non-finite pixels are 0."""
    err = np.abs(np.asarray(pred, dtype=np.float64) - np.asarray(gt, dtype=np.float64))
    err = np.where(np.isfinite(err), err, 0.0)
    return np.clip(err, 0.0, clip_px) / clip_px


def save_confidence(output: str | Path, confidence: np.ndarray) -> list[Path]:
    paths = sidecar_paths(output)
    write_pfm(paths["confidence"], confidence)
    write_png8(paths["confidence_png"], confidence)
    return [paths["confidence"], paths["confidence_png"]]


def save_error_map(output: str | Path, pred: np.ndarray, gt: np.ndarray) -> Path:
    path = sidecar_paths(output)["error_png"]
    write_png8(path, render_error_map(pred, gt))
    return path


def _kind(filename: str) -> str | None:
    for suffix, kind in ARTIFACT_KINDS.items():
        if filename.endswith(suffix):
            return kind
    return None


def list_artifacts(directory: str | Path) -> list[dict]:
    """List refinement artifacts in ``directory``, newest first.

    Returns:
        List of artifact metadata dictionaries
    """
    directory = Path(directory)
    if not directory.is_dir():
        return []

    artifacts = []
    for filepath in sorted(directory.iterdir(), key=lambda p: p.stat().st_mtime, reverse=True):
        kind = _kind(filepath.name) if filepath.is_file() else None
        if kind is None:
            continue
        stat = filepath.stat()
        artifacts.append(
            {
                "name": filepath.name,
                "kind": kind,
                "created": datetime.fromtimestamp(stat.st_mtime).isoformat(),
                "size": stat.st_size,
                "path": filepath,
            }
        )
    return artifacts


def display_artifacts(directory: str | Path):
    """Display artifacts in a formatted table."""
    from rich.console import Console
    from rich.table import Table

    console = Console()
    artifacts = list_artifacts(directory)

    if not artifacts:
        console.print(f"[dim]No artifacts found in {directory}.[/dim]")
        return

    table = Table(title=f"Artifacts in {directory}")
    table.add_column("Name", style="cyan")
    table.add_column("Kind")
    table.add_column("Created", style="dim")
    table.add_column("Size", style="dim", justify="right")

    for art in artifacts[:50]:
        size_kb = art["size"] / 1024
        table.add_row(
            art["name"][:48], art["kind"], art["created"][:16].replace("T", " "), f"{size_kb:.1f} KB"
        )

    console.print(table)
