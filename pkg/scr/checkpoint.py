"""
Plain-text checkpoint format shared by the text encoder and the click VAE.

    SCR-CKPT v1
    key=value<TAB>key=value ...          (run manifest reference and model metadata)
    name rows cols
    <rows lines of cols decimals>
    ...

Values are written with repr(), which round-trips float64 exactly.
"""

from pathlib import Path
from typing import Dict, Mapping, Tuple

import numpy as np

from .errors import DataError

MAGIC = "SCR-CKPT v1"


def save_checkpoint(path, header: Mapping[str, str], tensors: Mapping[str, np.ndarray]) -> None:
    lines = [MAGIC, "\t".join(f"{k}={v}" for k, v in header.items())]
    for name, tensor in tensors.items():
        mat = np.atleast_2d(np.asarray(tensor, dtype=np.float64))
        if " " in name:
            raise ValueError(f"tensor name {name!r} contains a space")
        lines.append(f"{name} {mat.shape[0]} {mat.shape[1]}")
        lines.extend(" ".join(repr(v) for v in row) for row in mat.tolist())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path) -> Tuple[Dict[str, str], Dict[str, np.ndarray]]:
    try:
        lines = Path(path).read_text(encoding="utf-8").split("\n")
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from None
    if not lines or lines[0] != MAGIC:
        raise DataError(f"{path}: not an {MAGIC} file")
    header = {}
    for field in lines[1].split("\t") if len(lines) > 1 and lines[1] else []:
        key, _, value = field.partition("=")
        header[key] = value

    tensors: Dict[str, np.ndarray] = {}
    pos = 2
    while pos < len(lines) and lines[pos]:
        try:
            name, rows, cols = lines[pos].split(" ")
            rows, cols = int(rows), int(cols)
            body = lines[pos + 1: pos + 1 + rows]
            values = [[float(v) for v in line.split(" ")] if cols else [] for line in body]
        except ValueError:
            raise DataError(f"{path}:{pos + 1}: malformed tensor block") from None
        mat = np.asarray(values, dtype=np.float64).reshape(rows, cols)
        tensors[name] = mat
        pos += 1 + rows
    return header, tensors
