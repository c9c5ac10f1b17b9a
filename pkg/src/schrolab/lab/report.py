"""Report bundle: records.csv, fits.json and manifest.json, written atomically."""

from __future__ import annotations

from pathlib import Path

from .. import __version__
from ..io import atomic_write_text, dump_json, table_to_csv


def emit_report(
    records: list[dict],
    columns: list[str],
    fits: dict,
    destination,
    config_hash: str,
    seed: int,
    command: str = "",
    extra_files: list[str] | None = None,
) -> dict[str, Path]:
    """Write the bundle; identical inputs give byte-identical files."""
    dest = Path(destination)
    dest.mkdir(parents=True, exist_ok=True)
    paths = {
        "records": dest / "records.csv",
        "fits": dest / "fits.json",
        "manifest": dest / "manifest.json",
    }
    atomic_write_text(paths["records"], table_to_csv(columns, records))
    atomic_write_text(paths["fits"], dump_json(fits))
    manifest = {
        "command": command,
        "config_sha256": config_hash,
        "seed": seed,
        "version": __version__,
        "columns": list(columns),
        "n_records": len(records),
        "files": sorted(["records.csv", "fits.json", *(extra_files or [])]),
    }
    atomic_write_text(paths["manifest"], dump_json(manifest))
    return paths
