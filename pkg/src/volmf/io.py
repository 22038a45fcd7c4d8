"""File formats: CSV matrices, convergence-trace TSV, PGM abundance maps, run manifests.

Floating-point values are written with 17 significant digits so that a
write/read round trip reproduces every finite double exactly.
"""

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import AllMissing, InputError, RaggedRows, ShapeMismatch, UnparsableCell

__all__ = [
    "read_matrix_csv",
    "write_matrix_csv",
    "read_trace_tsv",
    "write_trace_tsv",
    "write_abundance_pgm",
    "write_tsv",
    "file_sha256",
    "RunManifest",
    "TRACE_HEADER",
]

TRACE_HEADER = ("iter", "elapsed_s", "fit", "reg", "objective")
_MISSING_TOKENS = {"nan", "-nan", "+nan"}


def fmt(x):
    """17-significant-digit text of a float (``nan``/``inf`` spelled out)."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.17g" % x


def read_matrix_csv(path, missing_as_nan=False):
    """Read a dense comma-separated matrix.

    Parameters
    ----------
    path : str or path-like
    missing_as_nan : bool
        Accept ``nan`` cells as missing entries.

    Returns
    -------
    X : ndarray
        Missing cells hold 0.
    mask : ndarray or None
        0/1 observation mask, or ``None`` when every cell is observed.

    Raises
    ------
    RaggedRows, UnparsableCell, AllMissing, InputError
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise InputError(f"{path}: no data rows")
    n = len(rows[0])
    X = np.empty((len(rows), n))
    missing = np.zeros(X.shape, dtype=bool)
    for i, row in enumerate(rows):
        if len(row) != n:
            raise RaggedRows(f"{path}: row {i} has {len(row)} cells, row 0 has {n}")
        for j, cell in enumerate(row):
            token = cell.strip()
            if missing_as_nan and token.lower() in _MISSING_TOKENS:
                missing[i, j] = True
                X[i, j] = 0.0
                continue
            try:
                v = float(token)
            except ValueError:
                raise UnparsableCell(i, j, token) from None
            if not math.isfinite(v):
                raise UnparsableCell(i, j, token)
            X[i, j] = v
    if missing.all():
        raise AllMissing(f"{path}: every cell is missing")
    mask = (~missing).astype(np.float64) if missing.any() else None
    return X, mask


def write_matrix_csv(path, A, mask=None):
    """Write ``A`` as CSV; entries with ``mask == 0`` are written as ``nan``."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    hidden = np.zeros(A.shape, dtype=bool) if mask is None else np.asarray(mask) <= 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for i in range(A.shape[0]):
            fh.write(",".join("nan" if hidden[i, j] else fmt(A[i, j]) for j in range(A.shape[1])))
            fh.write("\n")


def write_tsv(path, header, rows):
    """Write a tab-separated table; floats get 17 significant digits."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row))
            fh.write("\n")


def write_trace_tsv(trace, path):
    """Write a :class:`~volmf.core.ConvergenceTrace` as TSV, one row per record."""
    if len(trace) == 0:
        raise InputError("trace is empty")
    rows = zip(trace.iters, trace.elapsed, trace.fit, trace.reg, trace.objective)
    write_tsv(path, TRACE_HEADER, ([int(it), float(t), float(f), float(g), float(o)] for it, t, f, g, o in rows))


def read_trace_tsv(path):
    """Parse a trace file back into a dict of column arrays."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        data = [line.rstrip("\n").split("\t") for line in fh if line.strip()]
    if tuple(header) != TRACE_HEADER:
        raise InputError(f"{path}: unexpected header {header}")
    cols = list(zip(*data)) if data else [()] * len(header)
    out = {name: np.array([float(v) for v in col]) for name, col in zip(header, cols)}
    out["iter"] = out["iter"].astype(int)
    return out


def write_abundance_pgm(h_row, width, height, path):
    """Write one abundance row as an ASCII (P2) greyscale image.

    Pixels are ``round(255 * h / max(h))`` (halves round up) laid out row
    by row; an all-zero row gives a black image.
    """
    h = np.asarray(h_row, dtype=np.float64).ravel()
    width, height = int(width), int(height)
    if width < 1 or height < 1 or width * height != h.size:
        raise ShapeMismatch(f"{width}x{height} image cannot hold {h.size} values")
    if not np.all(np.isfinite(h)):
        raise InputError("abundance row has non-finite entries")
    top = float(h.max())
    if top > 0:
        pix = np.floor(255.0 * np.clip(h, 0.0, None) / top + 0.5).astype(int)
    else:
        pix = np.zeros(h.size, dtype=int)
    img = pix.reshape(height, width)
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(f"P2\n{width} {height}\n255\n")
        for line in img:
            fh.write(" ".join(str(v) for v in line) + "\n")


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Everything needed to rerun a CLI invocation.

    ``argv`` is the fully materialized command line (every option spelled
    out), ``outputs`` maps output file names to their SHA-256 digests and
    ``timing_outputs`` lists files that contain wall-clock columns.
    """

    subcommand: str
    argv: list
    options: dict
    inputs: dict
    outputs: dict = field(default_factory=dict)
    timing_outputs: list = field(default_factory=list)
    seed: int = 0
    version: str = ""
    wall_time_s: float = 0.0
    notes: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_jsonable)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        try:
            return cls(**data)
        except TypeError as exc:
            raise InputError(f"{path}: not a run manifest ({exc})") from None


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)
