"""
Report and plot-data serialization.

JSON reports are deterministic: sorted keys, floats at 17 significant
digits, no timestamps in the body. The generation time goes to a
`<name>.meta.json` sidecar.
"""

import json
import logging
import math
import re
from dataclasses import asdict, is_dataclass
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import BaseModel

logger = logging.getLogger(__name__)

_FLOAT_TAG = "__f17__"
_FLOAT_RE = re.compile(r'"' + _FLOAT_TAG + r'([^"]*)"')


def format_float(x: float) -> str:
    """Render a float with 17 significant digits."""
    text = f"{x:.17g}"
    if "." not in text and "e" not in text:
        text += ".0"
    return text


def to_plain(obj: Any) -> Any:
    """Convert workbench objects into JSON-ready python data."""
    if hasattr(obj, "to_dict") and callable(obj.to_dict):
        return to_plain(obj.to_dict())
    if isinstance(obj, BaseModel):
        return to_plain(obj.model_dump())
    if is_dataclass(obj) and not isinstance(obj, type):
        return to_plain(asdict(obj))
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = [to_plain(v) for v in obj]
        return sorted(items, key=str) if isinstance(obj, (set, frozenset)) else items
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, complex):
        return {"re": to_plain(obj.real), "im": to_plain(obj.imag)}
    return str(obj)


def _tag_floats(obj: Any) -> Any:
    if isinstance(obj, float):
        return _FLOAT_TAG + format_float(obj)
    if isinstance(obj, dict):
        return {k: _tag_floats(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_tag_floats(v) for v in obj]
    return obj


def dumps(obj: Any) -> str:
    """Deterministic JSON text for any workbench object."""
    text = json.dumps(_tag_floats(to_plain(obj)), indent=2, sort_keys=True)
    return _FLOAT_RE.sub(lambda m: m.group(1), text) + "\n"


def write_report(obj: Any, out_dir: Path, name: str) -> Path:
    """
    Write `<name>.json` and its `<name>.meta.json` sidecar.

    Args:
        obj: Report, model or plain data
        out_dir: Target directory (created if missing)
        name: File stem

    Returns:
        Path of the report file
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}.json"
    path.write_text(dumps(obj))
    meta = {"generated_at": datetime.now(timezone.utc).isoformat(), "report": path.name}
    (out_dir / f"{name}.meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    logger.info(f"Wrote {path}")
    return path


def write_csv(columns: dict[str, Any], out_dir: Path, name: str) -> Path:
    """Write plot data columns as CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}.csv"
    frame = pd.DataFrame({k: np.asarray(v) for k, v in columns.items()})
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Wrote {path} ({len(frame)} rows)")
    return path
