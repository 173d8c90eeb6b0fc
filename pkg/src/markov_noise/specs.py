"""Function-spec JSON parsing and CSV output helpers."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .chain_models import Chain
from .errors import InvalidParams, ValidationFailed
from .noise import Observable
from .spectral import SpectralDecomposition, band_subspace
from .stability import make_threshold_function

FUNCTION_TYPES = ("indicator", "dictator", "threshold", "values")


def observable_from_dict(chain: Chain, dec: SpectralDecomposition, data: dict) -> Observable:
    """Build an observable from one of the function-spec forms::

        {"type": "indicator", "states": [labels]}
        {"type": "dictator", "coordinate": i}
        {"type": "threshold", "band_k": k, "c": value, "coefficients": [...]}
        {"type": "values", "values": [...]}
    """
    if not isinstance(data, dict) or data.get("type") not in FUNCTION_TYPES:
        raise ValidationFailed("function spec needs a 'type' of " + ", ".join(FUNCTION_TYPES))
    kind = data["type"]
    if kind == "indicator":
        return Observable.indicator(chain, [str(s) for s in data.get("states", [])])
    if kind == "dictator":
        return Observable.dictator(chain, int(data["coordinate"]))
    if kind == "threshold":
        k = float(data.get("band_k", 1.0))
        dim = len(band_subspace(dec, k))
        coef = data.get("coefficients")
        if coef is None:
            coef = np.eye(dim)[0]  # psi_1
        return make_threshold_function(dec, k, coef, float(data["c"])).indicator
    values = np.asarray(data["values"], dtype=float)
    if values.shape != (chain.n_states,):
        raise InvalidParams("values must have one entry per state", length=int(values.size))
    return Observable.from_values(values)


def load_observable(path: str | Path, chain: Chain, dec: SpectralDecomposition) -> Observable:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationFailed(f"function spec is not valid JSON: {exc}") from exc
    return observable_from_dict(chain, dec, data)


def write_csv(target, header: list, rows: list) -> None:
    """Write rows to a path or an open text stream."""
    if isinstance(target, (str, Path)):
        with open(target, "w", newline="", encoding="utf-8") as fh:
            write_csv(fh, header, rows)
        return
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v
