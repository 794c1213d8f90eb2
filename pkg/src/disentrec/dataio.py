"""Interaction-log ingestion, binarization, k-core filtering and per-user splits."""

from __future__ import annotations

import csv
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"DRSNAP\x00\x01"
SNAPSHOT_VERSION = 1
_HEADER_TOKENS = ("user", "uid", "reviewer")


class ParseError(ValueError):
    """A malformed row in an interaction file."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyMatrixError(ValueError):
    pass


@dataclass(frozen=True)
class RawInteraction:
    user_id: str
    item_id: str
    rating: float = 1.0
    timestamp: int | None = None

    def __post_init__(self):
        if not self.user_id or not self.item_id:
            raise ValueError("user_id and item_id must be nonempty")
        if not np.isfinite(self.rating):
            raise ValueError(f"non-finite rating {self.rating!r}")


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    """Binary user x item matrix with id vocabularies.

    ``matrix`` is a CSR matrix with sorted indices and unit data. Treat it as
    read-only; all operations here return new objects.
    """

    matrix: sp.csr_matrix
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        n_users, n_items = self.matrix.shape
        if len(self.user_ids) != n_users or len(self.item_ids) != n_items:
            raise ValueError("vocabulary sizes do not match matrix shape")

    @property
    def n_users(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_items(self) -> int:
        return self.matrix.shape[1]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def pairs(self) -> np.ndarray:
        """All (user_index, item_index) entries as an (nnz, 2) array, row-major sorted."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return np.stack([coo.row[order], coo.col[order]], axis=1).astype(np.int64)

    def entry_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(i)) for u, i in self.pairs()}

    def user_items(self, u: int) -> np.ndarray:
        m = self.matrix
        return m.indices[m.indptr[u]:m.indptr[u + 1]]

    def user_counts(self) -> np.ndarray:
        return np.diff(self.matrix.indptr)

    def item_counts(self) -> np.ndarray:
        return np.bincount(self.matrix.indices, minlength=self.n_items)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray().astype(np.float64)

    def with_entries(self, rows: np.ndarray, cols: np.ndarray) -> "InteractionMatrix":
        """Same vocabularies, different entry set."""
        return InteractionMatrix(
            _build_csr(rows, cols, self.n_users, self.n_items),
            self.user_ids,
            self.item_ids,
            dict(self.provenance),
        )

    def __eq__(self, other):
        if not isinstance(other, InteractionMatrix):
            return NotImplemented
        return (
            self.user_ids == other.user_ids
            and self.item_ids == other.item_ids
            and self.matrix.shape == other.matrix.shape
            and (self.matrix != other.matrix).nnz == 0
        )

    __hash__ = None


@dataclass(frozen=True)
class SplitTriple:
    train: InteractionMatrix
    validation: InteractionMatrix
    test: InteractionMatrix
    seed: int


def _build_csr(rows, cols, n_users: int, n_items: int) -> sp.csr_matrix:
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    m = sp.csr_matrix(
        (np.ones(len(rows), dtype=np.float32), (rows, cols)), shape=(n_users, n_items)
    )
    m.sum_duplicates()
    m.data[:] = 1.0
    m.sort_indices()
    return m


def _looks_like_header(fields: Sequence[str]) -> bool:
    if len(fields) < 3 or _is_number(fields[2]):
        return False
    first = fields[0].strip().lower()
    return any(tok in first for tok in _HEADER_TOKENS)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def ingest(path, format: str = "tsv", header: bool | None = None) -> list[RawInteraction]:
    """Parse an interaction log with columns ``user, item[, rating[, timestamp]]``.

    ``format`` is ``"tsv"``, ``"csv"`` or ``"dat"`` (MovieLens ``::`` separated).
    With ``header=None`` the first row is treated as a header when its third
    column is non-numeric and its first column names a user field.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if format == "tsv":
        lines = [line.split("\t") for line in text.splitlines()]
    elif format == "csv":
        lines = list(csv.reader(text.splitlines()))
    elif format == "dat":
        lines = [line.split("::") for line in text.splitlines()]
    else:
        raise ValueError(f"unknown format {format!r}")

    rows: list[RawInteraction] = []
    for lineno, fields in enumerate(lines, start=1):
        if not fields or all(not f.strip() for f in fields):
            continue
        if lineno == 1 and (header or (header is None and _looks_like_header(fields))):
            continue
        if len(fields) < 2:
            raise ParseError(lineno, "expected at least 2 columns (user, item)")
        user, item = fields[0].strip(), fields[1].strip()
        if not user or not item:
            raise ParseError(lineno, "empty user or item id")
        rating = 1.0
        if len(fields) >= 3 and fields[2].strip():
            try:
                rating = float(fields[2])
            except ValueError:
                raise ParseError(lineno, f"non-numeric rating {fields[2]!r}") from None
            if not np.isfinite(rating) or rating < 0:
                raise ParseError(lineno, f"invalid rating {fields[2]!r}")
        ts = None
        if len(fields) >= 4 and fields[3].strip():
            try:
                ts = int(float(fields[3]))
            except ValueError:
                raise ParseError(lineno, f"non-numeric timestamp {fields[3]!r}") from None
        rows.append(RawInteraction(user, item, rating, ts))
    return rows


def binarize(rows: Iterable[RawInteraction], threshold: float = 1.0,
             inclusive: bool = True) -> list[RawInteraction]:
    """Keep rows with ``rating >= threshold`` (``>`` if not inclusive), rating set to 1."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    keep = (lambda r: r.rating >= threshold) if inclusive else (lambda r: r.rating > threshold)
    return [RawInteraction(r.user_id, r.item_id, 1.0, r.timestamp) for r in rows if keep(r)]


def build_matrix(rows: Iterable[RawInteraction], provenance: dict | None = None) -> InteractionMatrix:
    """Index ids in order of first appearance; duplicate (user, item) rows keep the first."""
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    seen: set[tuple[int, int]] = set()
    us, its = [], []
    for r in rows:
        u = user_index.setdefault(r.user_id, len(user_index))
        i = item_index.setdefault(r.item_id, len(item_index))
        if (u, i) in seen:
            continue
        seen.add((u, i))
        us.append(u)
        its.append(i)
    return InteractionMatrix(
        _build_csr(us, its, len(user_index), len(item_index)),
        tuple(user_index),
        tuple(item_index),
        dict(provenance or {}),
    )


def kcore_filter(matrix: InteractionMatrix, min_ipu: int, min_ipi: int) -> InteractionMatrix:
    """Iteratively drop sparse users/items until every survivor meets its minimum."""
    if min_ipu < 1 or min_ipi < 1:
        raise ValueError("k-core minimums must be >= 1")
    m = matrix.matrix.tocsr().copy()
    users = np.arange(matrix.n_users)
    items = np.arange(matrix.n_items)
    while True:
        ucount = np.diff(m.indptr)
        keep_u = ucount >= min_ipu
        if not keep_u.all():
            m = m[keep_u]
            users = users[keep_u]
        icount = np.bincount(m.indices, minlength=m.shape[1])
        keep_i = icount >= min_ipi
        if not keep_i.all():
            m = m[:, keep_i].tocsr()
            items = items[keep_i]
            continue
        if keep_u.all():
            break
    if m.nnz == 0 or m.shape[0] == 0 or m.shape[1] == 0:
        raise EmptyMatrixError("empty after filtering")
    m.sort_indices()
    prov = dict(matrix.provenance, kcore={"min_ipu": min_ipu, "min_ipi": min_ipi})
    return InteractionMatrix(
        m.astype(np.float32),
        tuple(matrix.user_ids[u] for u in users),
        tuple(matrix.item_ids[i] for i in items),
        prov,
    )


def split_sizes(n: int, ratio: Sequence[float]) -> tuple[int, int, int]:
    """Per-user part sizes: validation and test get floors, train the remainder."""
    total = float(sum(ratio))
    n_val = int(np.floor(n * ratio[1] / total + 1e-12))
    n_test = int(np.floor(n * ratio[2] / total + 1e-12))
    return n - n_val - n_test, n_val, n_test


def split_per_user(matrix: InteractionMatrix, ratio: Sequence[float] = (3, 1, 1),
                   seed: int = 0) -> SplitTriple:
    """Random per-user train/validation/test split, deterministic in ``seed``."""
    if len(ratio) != 3 or any(r <= 0 for r in ratio):
        raise ValueError("ratio must be three positive numbers")
    rng = np.random.default_rng(seed)
    parts: list[tuple[list, list]] = [([], []), ([], []), ([], [])]
    counts = matrix.user_counts()
    short = np.flatnonzero(counts < 3)
    if short.size:
        raise ValueError(
            f"user {matrix.user_ids[short[0]]!r} has {counts[short[0]]} interactions, "
            "fewer than the 3 split parts"
        )
    for u in range(matrix.n_users):
        items = rng.permutation(matrix.user_items(u))
        n_train, n_val, _ = split_sizes(len(items), ratio)
        chunks = (items[:n_train], items[n_train:n_train + n_val], items[n_train + n_val:])
        for (rows, cols), chunk in zip(parts, chunks):
            rows.extend([u] * len(chunk))
            cols.extend(chunk.tolist())
    train, val, test = (matrix.with_entries(np.array(r, dtype=np.int64), np.array(c, dtype=np.int64))
                        for r, c in parts)
    return SplitTriple(train, val, test, seed)


# --- snapshot persistence -------------------------------------------------------------

def save_snapshot(matrix: InteractionMatrix, path) -> Path:
    """Write the binary coordinate snapshot plus its ``.json`` vocabulary sidecar.

    Layout (little endian): 8-byte magic, uint32 version, uint64 n_users,
    uint64 n_items, uint64 nnz, int32[nnz] rows, int32[nnz] cols, coordinates
    sorted by (row, col).
    """
    path = Path(path)
    pairs = matrix.pairs()
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<IQQQ", SNAPSHOT_VERSION, matrix.n_users, matrix.n_items, len(pairs)))
        fh.write(pairs[:, 0].astype("<i4").tobytes())
        fh.write(pairs[:, 1].astype("<i4").tobytes())
    sidecar = {
        "format_version": SNAPSHOT_VERSION,
        "user_vocab": list(matrix.user_ids),
        "item_vocab": list(matrix.item_ids),
        "provenance": matrix.provenance,
    }
    sidecar_path(path).write_text(json.dumps(sidecar, indent=1, sort_keys=True))
    return path


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def load_snapshot(path) -> InteractionMatrix:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path} is not a snapshot file")
    version, n_users, n_items, nnz = struct.unpack_from("<IQQQ", raw, 8)
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    offset = 8 + struct.calcsize("<IQQQ")
    rows = np.frombuffer(raw, dtype="<i4", count=nnz, offset=offset)
    cols = np.frombuffer(raw, dtype="<i4", count=nnz, offset=offset + 4 * nnz)
    meta = json.loads(sidecar_path(path).read_text())
    return InteractionMatrix(
        _build_csr(rows, cols, n_users, n_items),
        tuple(meta["user_vocab"]),
        tuple(meta["item_vocab"]),
        meta.get("provenance", {}),
    )


def save_split(split: SplitTriple, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in ("train", "validation", "test"):
        save_snapshot(getattr(split, name), directory / f"{name}.snap")


def load_split(directory, seed: int = 0) -> SplitTriple:
    directory = Path(directory)
    return SplitTriple(*(load_snapshot(directory / f"{n}.snap") for n in ("train", "validation", "test")),
                       seed=seed)
