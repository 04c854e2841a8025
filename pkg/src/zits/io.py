"""Text file formats: triplet tensors, matrix bundles, manifests.

All formats are line-oriented, versioned by a header string, and written
with 17 significant digits so doubles round-trip exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .tensor_ops import CountTensor

TENSOR_HEADER = "# zits-tensor v1"
RTENSOR_HEADER = "# zits-rtensor v1"
VERSION = "0.1.0"


class DataFormatError(ValueError):
    """Malformed or inconsistent input file."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# tensor triplet format
# ---------------------------------------------------------------------------

def write_tensor(path, data: CountTensor) -> None:
    lines = [TENSOR_HEADER, f"{data.n_loci} {data.n_cells}"]
    lines += [f"{i} {j} {k} {c}" for i, j, k, c in zip(data.i, data.j, data.k, data.c)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_flags(path, n_loci: int, n_cells: int, flags: np.ndarray) -> None:
    """Detection mask in the tensor format with c = 1 at flagged cells."""
    flags = np.asarray(flags, dtype=np.int64).reshape(-1, 3)
    ct = CountTensor(n_loci, n_cells, flags[:, 0], flags[:, 1], flags[:, 2],
                     np.ones(flags.shape[0], dtype=np.int64))
    write_tensor(path, ct)


def write_rtensor(path, dense: np.ndarray) -> None:
    """Real-valued variant; stores nonzero upper-triangle entries."""
    n, _, k = dense.shape
    iu, ju = np.triu_indices(n)
    vals = dense[iu, ju]
    pu, ku = np.nonzero(vals)
    lines = [RTENSOR_HEADER, f"{n} {k}"]
    lines += [f"{iu[p]} {ju[p]} {q} {_fmt(vals[p, q])}" for p, q in zip(pu, ku)]
    Path(path).write_text("\n".join(lines) + "\n")


def _read_triplets(path, expected_header: str, ingest_1based: bool):
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != expected_header:
        raise DataFormatError(f"{path}: missing header {expected_header!r}")
    try:
        n, k = map(int, lines[1].split())
    except (IndexError, ValueError) as exc:
        raise DataFormatError(f"{path}: bad dimension line") from exc
    rows = []
    for ln in lines[2:]:
        ln = ln.strip()
        if not ln:
            continue
        parts = ln.split()
        if len(parts) != 4:
            raise DataFormatError(f"{path}: bad entry line {ln!r}")
        rows.append(parts)
    off = 1 if ingest_1based else 0
    i = np.array([int(r[0]) - off for r in rows], dtype=np.int64)
    j = np.array([int(r[1]) - off for r in rows], dtype=np.int64)
    kk = np.array([int(r[2]) - off for r in rows], dtype=np.int64)
    return n, k, i, j, kk, rows


def read_tensor(path, ingest_1based: bool = False) -> CountTensor:
    n, k, i, j, kk, rows = _read_triplets(path, TENSOR_HEADER, ingest_1based)
    c = np.array([int(r[3]) for r in rows], dtype=np.int64)
    # external dumps may list (j, i); canonicalize to the upper triangle
    swap = i > j
    i2 = np.where(swap, j, i)
    j2 = np.where(swap, i, j)
    try:
        return CountTensor(n, k, i2, j2, kk, c)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def read_rtensor_dense(path, ingest_1based: bool = False) -> np.ndarray:
    n, k, i, j, kk, rows = _read_triplets(path, RTENSOR_HEADER, ingest_1based)
    vals = np.array([float(r[3]) for r in rows])
    out = np.zeros((n, n, k))
    out[i, j, kk] = vals
    out[j, i, kk] = vals
    return out


def read_flags(path) -> np.ndarray:
    ct = read_tensor(path)
    return np.column_stack([ct.i, ct.j, ct.k]).astype(np.int64)


# ---------------------------------------------------------------------------
# matrix bundle
# ---------------------------------------------------------------------------

def write_bundle(path, matrices: dict[str, np.ndarray]) -> None:
    """Sections of `name rows cols` followed by rows of decimals."""
    lines = []
    for name, m in matrices.items():
        m = np.atleast_2d(np.asarray(m, dtype=float))
        lines.append(f"{name} {m.shape[0]} {m.shape[1]}")
        lines += [" ".join(_fmt(v) for v in row) for row in m]
    Path(path).write_text("\n".join(lines) + "\n")


def read_bundle(path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    out: dict[str, np.ndarray] = {}
    pos = 0
    while pos < len(lines):
        if not lines[pos].strip():
            pos += 1
            continue
        try:
            name, rows, cols = lines[pos].split()
            rows, cols = int(rows), int(cols)
        except ValueError as exc:
            raise DataFormatError(f"{path}: bad section header {lines[pos]!r}") from exc
        block = lines[pos + 1:pos + 1 + rows]
        if len(block) != rows:
            raise DataFormatError(f"{path}: truncated section {name!r}")
        m = np.array([[float(v) for v in ln.split()] for ln in block])
        if m.shape != (rows, cols):
            raise DataFormatError(f"{path}: section {name!r} shape mismatch")
        out[name] = m
        pos += 1 + rows
    return out


# ---------------------------------------------------------------------------
# key = value text and manifests
# ---------------------------------------------------------------------------

def write_keyvalues(path, pairs: dict) -> None:
    lines = [f"{k} = {_fmt(v) if isinstance(v, float) else v}" for k, v in pairs.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_keyvalues(path) -> dict[str, str]:
    out = {}
    for ln in Path(path).read_text().splitlines():
        if "=" in ln:
            k, v = ln.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def write_manifest(path, subcommand: str, config: dict, seed,
                   inputs: list[str], outputs: list[str],
                   wall_time_s: float, argv: list[str]) -> None:
    doc = {
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "inputs": sorted(str(p) for p in inputs),
        "outputs": sorted(str(p) for p in outputs),
        "wall_time_s": wall_time_s,
        "version": VERSION,
        "argv": list(argv),
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: bad manifest JSON") from exc
