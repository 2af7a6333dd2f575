"""Plain-text model files (``psid-model v1``).

A file is a header line, a ``dims`` line and one ``matrix NAME rows cols``
section per parameter, each followed by its rows. Smoothing models prepend
``combine = sum|mean`` and hold two such blocks, forward then backward.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatVersionError, ParseError
from .lssm import FilteringModel, StochasticModel, predictor_from_output
from .smoothing import SmoothingModel

HEADER = "psid-model v1"
STOCHASTIC_SECTIONS = ("A", "CY", "CZ", "Q", "R", "S", "RZ", "SXZ")
FILTERING_SECTIONS = ("A", "CY", "CZ", "K", "SIGY", "CZKF")


def _fmt(v):
    return format(float(v), ".17g")


def _block_lines(model):
    if isinstance(model, StochasticModel):
        mats = dict(zip(STOCHASTIC_SECTIONS, (model.A, model.Cy, model.Cz, model.Q, model.R, model.S, model.Rz, model.Sxz)))
    elif isinstance(model, FilteringModel):
        if model.CzKf is None:
            raise ValueError("filtering model has no CzKf to save")
        mats = dict(zip(FILTERING_SECTIONS, (model.A, model.Cy, model.Cz, model.K, model.Sigma_y, model.CzKf)))
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    lines = [HEADER, f"dims {model.A.shape[0]} {model.Cy.shape[0]} {model.Cz.shape[0]}"]
    for name, M in mats.items():
        M = np.atleast_2d(M)
        lines.append(f"matrix {name} {M.shape[0]} {M.shape[1]}")
        lines.extend(" ".join(_fmt(v) for v in row) for row in M)
    return lines


def dumps(model) -> str:
    if isinstance(model, SmoothingModel):
        lines = [f"combine = {model.combine}"] + _block_lines(model.forward) + _block_lines(model.backward)
    else:
        lines = _block_lines(model)
    return "\n".join(lines) + "\n"


def model_save(path, model):
    Path(path).write_text(dumps(model))


class _Reader:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.pos = 0

    def peek(self):
        while self.pos < len(self.lines) and not self.lines[self.pos].strip():
            self.pos += 1
        return self.lines[self.pos].strip() if self.pos < len(self.lines) else None

    def next(self, expecting):
        line = self.peek()
        if line is None:
            raise ParseError(f"unexpected end of file, expected {expecting}", line=self.pos + 1)
        self.pos += 1
        return line

    @property
    def lineno(self):
        return self.pos


def _read_block(r: _Reader):
    header = r.next("header")
    if header != HEADER:
        if header.startswith("psid-model"):
            raise FormatVersionError(f"unsupported format {header!r}")
        raise ParseError(f"expected {HEADER!r}", line=r.lineno)
    parts = r.next("dims line").split()
    if len(parts) != 4 or parts[0] != "dims":
        raise ParseError("expected 'dims n_x n_y n_z'", line=r.lineno)
    try:
        dims = tuple(int(p) for p in parts[1:])
    except ValueError:
        raise ParseError("dimensions must be integers", line=r.lineno) from None
    mats = {}
    while True:
        line = r.peek()
        if line is None or not line.startswith("matrix"):
            break
        r.next("matrix")
        head = line.split()
        if len(head) != 4:
            raise ParseError("expected 'matrix NAME rows cols'", line=r.lineno)
        name = head[1]
        try:
            rows, cols = int(head[2]), int(head[3])
        except ValueError:
            raise ParseError("matrix shape must be integers", line=r.lineno) from None
        M = np.empty((rows, cols))
        for k in range(rows):
            vals = r.next(f"row {k + 1} of section {name}").split()
            if len(vals) != cols:
                raise ParseError(f"section {name} row {k + 1} has {len(vals)} values, expected {cols}", line=r.lineno)
            try:
                M[k] = [float(v) for v in vals]
            except ValueError:
                raise ParseError(f"non-numeric value in section {name}", line=r.lineno) from None
        mats[name] = M
    return dims, mats


def _build(dims, mats, lineno):
    kind = STOCHASTIC_SECTIONS if "Q" in mats else FILTERING_SECTIONS
    for name in kind:
        if name not in mats:
            raise ParseError(f"missing section {name}", line=lineno)
    if kind is STOCHASTIC_SECTIONS:
        model = StochasticModel(
            A=mats["A"], Cy=mats["CY"], Cz=mats["CZ"], Q=mats["Q"], R=mats["R"], S=mats["S"],
            Rz=mats["RZ"], Sxz=mats["SXZ"],
        )
    else:
        pred = predictor_from_output(mats["A"], mats["CY"], mats["CZ"], mats["K"], mats["SIGY"])
        model = FilteringModel(predictor=pred, CzKf=mats["CZKF"])
    if (model.A.shape[0], model.Cy.shape[0], model.Cz.shape[0]) != dims:
        raise ParseError("matrix shapes disagree with the dims line", line=lineno)
    return model


def loads(text: str):
    r = _Reader(text)
    first = r.peek()
    if first is not None and first.startswith("combine"):
        r.next("combine line")
        key, _, value = first.partition("=")
        combine = value.strip()
        if key.strip() != "combine" or combine not in ("sum", "mean"):
            raise ParseError("expected 'combine = sum' or 'combine = mean'", line=r.lineno)
        fwd = _build(*_read_block(r), r.lineno)
        bwd = _build(*_read_block(r), r.lineno)
        return SmoothingModel(forward=fwd, backward=bwd, combine=combine)
    model = _build(*_read_block(r), r.lineno)
    if r.peek() is not None:
        raise ParseError(f"unexpected content {r.peek()!r}", line=r.lineno + 1)
    return model


def model_load(path):
    return loads(Path(path).read_text())
