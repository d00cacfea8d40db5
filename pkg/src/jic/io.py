"""Reading blocks from CSV/TSV and writing full-precision numeric output."""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .blocks import Block, BlockSet
from .exceptions import DimensionError, InputError

FLOAT_FMT = "%.17g"


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def sniff_delimiter(first_line: str) -> str:
    return "\t" if first_line.count("\t") > first_line.count(",") else ","


def read_block(path, delimiter=None, label=None):
    """Read one block file.

    The first row is taken as sample identifiers when any of its cells (past
    an optional corner cell) is non-numeric; likewise the first column holds
    variable identifiers when any of its cells is non-numeric.

    Returns
    -------
    block : Block
    sample_ids : list of str or None
    variable_ids : list of str or None
    """
    path = Path(path)
    with open(path, newline="") as fh:
        text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InputError(f"{path}: empty file")
    if delimiter is None:
        delimiter = sniff_delimiter(lines[0])
    rows = [[c.strip() for c in row] for row in csv.reader(lines, delimiter=delimiter)]

    sample_ids = None
    header = None
    # a purely numeric row after the corner cell is data, even with a text id
    if any(not _is_number(c) for c in rows[0][1:]):
        header, rows = rows[0], rows[1:]
    if not rows:
        raise InputError(f"{path}: no data rows")

    variable_ids = None
    if rows and any(not _is_number(r[0]) for r in rows):
        variable_ids = [r[0] for r in rows]
        rows = [r[1:] for r in rows]
    if header is not None and len(header) == len(rows[0]) + 1:
        header = header[1:]
    if header is not None:
        sample_ids = header

    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DimensionError(f"{path}: ragged rows with widths {sorted(widths)}")
    try:
        data = np.array([[float(c) for c in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric cell ({exc})") from None
    if sample_ids is not None and len(sample_ids) != data.shape[1]:
        raise DimensionError(
            f"{path}: {len(sample_ids)} sample ids for {data.shape[1]} data columns"
        )
    block = Block(data, label=label or path.stem)
    return block, sample_ids, variable_ids


def read_blockset(paths, delimiter=None) -> BlockSet:
    """Read several block files and pair their samples.

    Columns are matched by header sample ids when every file has them and by
    position otherwise. Differing id lists are an error; columns are never
    silently reordered.
    """
    blocks, ids = [], []
    for p in paths:
        b, sids, _ = read_block(p, delimiter=delimiter)
        blocks.append(b)
        ids.append(sids)
    n = {b.n_samples for b in blocks}
    if len(n) != 1:
        raise DimensionError(
            "sample counts differ across blocks: "
            + ", ".join(f"{b.label}={b.n_samples}" for b in blocks)
        )
    sample_ids = None
    present = [s for s in ids if s is not None]
    if present:
        if len(present) == len(ids):
            for p, s in zip(paths, ids):
                if s != ids[0]:
                    raise DimensionError(f"{p}: sample ids do not match {paths[0]}")
        sample_ids = present[0]
    return BlockSet(tuple(blocks), sample_ids)


def write_matrix(path, x, header=None):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in x:
            w.writerow([FLOAT_FMT % v for v in row])


def write_block(path, data, sample_ids=None, variable_ids=None):
    data = np.asarray(data, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if sample_ids is not None:
            w.writerow((["variable"] if variable_ids is not None else []) + list(sample_ids))
        for i, row in enumerate(data):
            cells = [FLOAT_FMT % v for v in row]
            if variable_ids is not None:
                cells = [variable_ids[i]] + cells
            w.writerow(cells)


def read_matrix(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if rows and not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]
    return np.array([[float(c) for c in r] for r in rows], dtype=np.float64)


def write_labels(path, labels, sample_ids=None):
    labels = np.asarray(labels, dtype=int)
    if sample_ids is None:
        sample_ids = [str(j + 1) for j in range(labels.size)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "label"])
        for s, l in zip(sample_ids, labels):
            w.writerow([s, int(l)])


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, os.PathLike):
        return os.fspath(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_json(path, obj):
    # repr of a Python float round-trips exactly
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
