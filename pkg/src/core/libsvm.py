"""
LIBSVM Module
Parses and writes the LIBSVM sparse text format and manages the local
dataset cache.
"""

import hashlib
import os
import tempfile
import urllib.request
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np
from scipy import sparse

from src.utils.logger import logger
from .oracle import InvalidInputError

LIBSVM_BINARY_URL = "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/binary/"

# Datasets that may be fetched by name
KNOWN_DATASETS = {
    "a1a": {"samples": 1605, "features": 123},
    "a9a": {"samples": 32561, "features": 123},
    "w1a": {"samples": 2477, "features": 300},
}


def default_data_dir() -> str:
    return os.environ.get("BLOCKSPLIT_DATA_DIR", os.path.join(os.path.expanduser("~"), ".cache", "blocksplit"))


@dataclass
class LibsvmDataset:
    labels: np.ndarray
    rows: List[Tuple[np.ndarray, np.ndarray]]
    n_features: int

    @property
    def n_samples(self) -> int:
        return len(self.rows)

    def to_csr(self, n_columns: Optional[int] = None) -> sparse.csr_matrix:
        """Feature matrix with one row per sample; extra columns are dropped."""
        n_columns = self.n_features if n_columns is None else n_columns
        indptr = [0]
        indices, data = [], []
        for idx, val in self.rows:
            keep = idx < n_columns
            indices.append(idx[keep])
            data.append(val[keep])
            indptr.append(indptr[-1] + int(keep.sum()))
        indices = np.concatenate(indices) if indices else np.empty(0, dtype=np.int64)
        data = np.concatenate(data) if data else np.empty(0)
        return sparse.csr_matrix((data, indices, np.asarray(indptr)), shape=(self.n_samples, n_columns))

    def serialize(self) -> str:
        lines = []
        for label, (idx, val) in zip(self.labels, self.rows):
            pairs = " ".join(f"{i + 1}:{v:.17g}" for i, v in zip(idx, val))
            head = "+1" if label > 0 else "-1"
            lines.append(f"{head} {pairs}".rstrip())
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.serialize().encode("ascii")).hexdigest()


def _parse_label(token: str, line_no: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise InvalidInputError(f"line {line_no}: bad label {token!r}") from None
    if value == 1.0:
        return 1.0
    if value in (-1.0, 0.0):
        return -1.0
    raise InvalidInputError(f"line {line_no}: label {token!r} is not binary (expected +1/-1 or 1/0)")


def parse_libsvm(text: str, n_features: Optional[int] = None) -> LibsvmDataset:
    labels, rows = [], []
    max_index = 0
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        labels.append(_parse_label(tokens[0], line_no))
        idx = np.empty(len(tokens) - 1, dtype=np.int64)
        val = np.empty(len(tokens) - 1)
        prev = 0
        for j, token in enumerate(tokens[1:]):
            head, sep, tail = token.partition(":")
            try:
                index, value = int(head), float(tail)
            except ValueError:
                raise InvalidInputError(f"line {line_no}: malformed pair {token!r}") from None
            if not sep or index < 1:
                raise InvalidInputError(f"line {line_no}: malformed pair {token!r}")
            if index <= prev:
                raise InvalidInputError(f"line {line_no}: indices must be strictly increasing ({prev} then {index})")
            if not np.isfinite(value):
                raise InvalidInputError(f"line {line_no}: non-finite value in {token!r}")
            idx[j], val[j] = index - 1, value
            prev = index
        max_index = max(max_index, prev)
        rows.append((idx, val))

    n = max(max_index, n_features or 0)
    return LibsvmDataset(labels=np.asarray(labels), rows=rows, n_features=n)


@contextmanager
def atomic_path(path: str) -> Iterator[str]:
    """Yields a temporary sibling of ``path`` that replaces it only if the block succeeds."""
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".",
                               prefix=os.path.basename(path) + ".", suffix=".part")
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def fetch(name: str, data_dir: Optional[str] = None) -> str:
    """Download a LIBSVM binary dataset into the cache; returns the local path."""
    if name not in KNOWN_DATASETS:
        raise InvalidInputError(f"unknown dataset {name!r}; known: {sorted(KNOWN_DATASETS)}")
    data_dir = data_dir or default_data_dir()
    os.makedirs(data_dir, exist_ok=True)
    path = os.path.join(data_dir, name)
    if not os.path.exists(path):
        logger.info(f"Downloading {name} into {data_dir}")
        with atomic_path(path) as tmp:
            urllib.request.urlretrieve(LIBSVM_BINARY_URL + name, tmp)
    return path


def resolve_dataset(name_or_path: str, data_dir: Optional[str] = None, download: bool = True) -> str:
    if os.path.exists(name_or_path):
        return name_or_path
    cached = os.path.join(data_dir or default_data_dir(), name_or_path)
    if os.path.exists(cached):
        return cached
    if download:
        return fetch(name_or_path, data_dir)
    raise InvalidInputError(f"dataset {name_or_path!r} not found locally or in {data_dir or default_data_dir()}")


def load_dataset(name_or_path: str, data_dir: Optional[str] = None, download: bool = True) -> LibsvmDataset:
    path = resolve_dataset(name_or_path, data_dir, download)
    # a1a's file never uses indices 120-123, the declared width still counts them
    declared = KNOWN_DATASETS.get(os.path.basename(path), {}).get("features")
    with open(path, encoding="ascii") as fh:
        data = parse_libsvm(fh.read(), n_features=declared)
    logger.info(f"Loaded {path}: {data.n_samples} samples, {data.n_features} features")
    return data
