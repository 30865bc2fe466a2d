"""Report emission: deterministic CSV bodies plus a metadata sidecar.

Every CSV starts with comment lines carrying the config hash, toolkit
version and the tolerances in force, so any result file is traceable to
its inputs. Timestamps live only in the sidecar, keeping reruns of the
same config byte-identical. Files are written once, atomically.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from pathlib import Path

from . import __version__

__all__ = ["config_hash", "write_report", "write_sidecar"]


def config_hash(config: dict) -> str:
    """sha256 of the canonical JSON form of the validated config."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(
    path,
    header: list[str],
    rows,
    cfg_hash: str,
    tolerances: dict | None = None,
) -> None:
    """CSV with `# key: value` provenance comments, then header and rows."""
    lines = [
        f"# config_hash: {cfg_hash}",
        f"# toolkit_version: {__version__}",
    ]
    for key, val in sorted((tolerances or {}).items()):
        lines.append(f"# tol_{key}: {val:.6g}")
    lines.append(", ".join(header))
    for row in rows:
        cells = []
        for v in row:
            if v is None:
                cells.append("")
            elif isinstance(v, str):
                cells.append(v)
            elif isinstance(v, (int,)) and not isinstance(v, bool):
                cells.append(str(v))
            else:
                cells.append(f"{float(v):.17g}")
        lines.append(", ".join(cells))
    _atomic_write(Path(path), "\n".join(lines) + "\n")


def write_sidecar(path, cfg_hash: str, config: dict, extra: dict | None = None) -> None:
    """Timestamped metadata next to the reports (excluded from byte-identity)."""
    meta = {
        "config_hash": cfg_hash,
        "toolkit_version": __version__,
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "config": config,
    }
    if extra:
        meta["results"] = extra
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n",
                 encoding="utf-8")
