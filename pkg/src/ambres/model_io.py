"""Serialization of decision models: matrix exchange format plus a metadata header."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .decoder import AmbiguityModel, Separability
from .errors import ValidationError
from .lattice import SpdForm


def save_model(model: AmbiguityModel, path: str | Path) -> None:
    """Header line "p p0 separability", then the matrix, then the n0 basis rows."""
    lines = [f"{model.p} {model.p0} {model.separability.value}", str(model.p)]
    lines += [" ".join(repr(float(x)) for x in row) for row in model.form.entries]
    if model.p0:
        lines += [" ".join(str(int(x)) for x in row) for row in model.n0_basis]
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path: str | Path) -> AmbiguityModel:
    text = Path(path).read_text().split("\n")
    if not text or not text[0].split():
        raise ValidationError(f"{path}: empty model file")
    head = text[0].split()
    if len(head) != 3:
        raise ValidationError(f"{path}: header must be 'p p0 separability'")
    p, p0 = int(head[0]), int(head[1])
    sep = Separability(head[2])
    tokens = " ".join(text[1:]).split()
    if not tokens or int(tokens[0]) != p:
        raise ValidationError(f"{path}: matrix size does not match header")
    need = 1 + p * p + p0 * p
    vals = tokens[1:need]
    if len(vals) != need - 1:
        raise ValidationError(f"{path}: expected {need - 1} numbers, found {len(vals)}")
    m = np.array([float(v) for v in vals[: p * p]]).reshape(p, p)
    basis = None
    if p0:
        basis = np.array([int(v) for v in vals[p * p:]], dtype=np.int64).reshape(p0, p)
    return AmbiguityModel(SpdForm(m), p0=p0, n0_basis=basis, separability=sep)
