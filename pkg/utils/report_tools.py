import json
import logging
import os
from io import BytesIO
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd

# Configure logging
logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["t", "unitarity", "fs_distance", "idempotency", "reconstruction_error"]
REFINEMENT_COLUMNS = ["level", "epsilon", "max_residual", "fitted_order"]


def encode_matrix(matrix) -> List:
    """Complex matrix as nested lists of [re, im] pairs."""
    arr = np.asarray(matrix, dtype=complex)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return [[[float(z.real), float(z.imag)] for z in row] for row in arr]


def decode_matrix(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise ValueError(f"expected nested [re, im] pairs, got array of shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        if np.iscomplexobj(value):
            return encode_matrix(value)
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        # json has no inf/nan
        if not np.isfinite(value):
            return str(value)
        return value
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


def render_json_report(report: Dict) -> str:
    """Sorted-key JSON, byte-identical for identical reports."""
    return json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"


def write_json_report(report: Dict, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(render_json_report(report))
    logger.info(f"Wrote report {path}")
    return path


def generate_csv_report(rows: Sequence[Dict], columns: Sequence[str]) -> bytes:
    """CSV bytes with a header row and '.' decimals."""
    output = BytesIO()
    df = pd.DataFrame(list(rows), columns=list(columns))
    df.to_csv(output, index=False, float_format="%.12e", lineterminator="\n")
    return output.getvalue()


def write_csv_report(rows: Sequence[Dict], columns: Sequence[str], path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(generate_csv_report(rows, columns))
    logger.info(f"Wrote {len(rows)} rows to {path}")
    return path


def fit_slope(epsilons: Sequence[float], residuals: Sequence[float], floor: float = 1e-300) -> float:
    """Least-squares slope of log(residual) against log(epsilon)."""
    eps = np.asarray(epsilons, dtype=float)
    res = np.maximum(np.asarray(residuals, dtype=float), floor)
    if eps.size < 2:
        raise ValueError("a slope fit needs at least two levels")
    slope, _ = np.polyfit(np.log(eps), np.log(res), 1)
    return float(slope)


def refinement_rows(epsilons: Sequence[float], residuals: Sequence[float], order: float) -> List[Dict]:
    return [
        {"level": k, "epsilon": float(e), "max_residual": float(r), "fitted_order": float(order)}
        for k, (e, r) in enumerate(zip(epsilons, residuals))
    ]
