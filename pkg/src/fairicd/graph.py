"""Graph, feature and dataset containers plus loading and preprocessing.

Graphs are stored in CSR form.  Undirected graphs keep both directions of
every edge, so ``neighbors(i)`` is simply a row slice.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
import scipy.sparse as sp

MISSING_LABEL = -1


class DatasetError(ValueError):
    """Raised when node/edge files or dataset components are inconsistent."""


@dataclass(frozen=True, eq=False)
class Graph:
    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    edge_weights: np.ndarray

    def __post_init__(self):
        offsets = np.asarray(self.row_offsets, dtype=np.int64)
        cols = np.asarray(self.col_indices, dtype=np.int64)
        weights = np.asarray(self.edge_weights, dtype=np.float64)
        if offsets.shape != (self.num_nodes + 1,) or offsets[0] != 0:
            raise DatasetError("row_offsets must have length num_nodes + 1 and start at 0")
        if np.any(np.diff(offsets) < 0) or offsets[-1] != cols.size:
            raise DatasetError("row_offsets must be nondecreasing and end at nnz")
        if cols.size and (cols.min() < 0 or cols.max() >= self.num_nodes):
            raise DatasetError("column index out of range")
        if weights.shape != cols.shape or np.any(weights < 0):
            raise DatasetError("edge_weights must be nonnegative, one per edge")
        for name, arr in (("row_offsets", offsets), ("col_indices", cols), ("edge_weights", weights)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_edges(cls, num_nodes: int, src, dst, weights=None, symmetric: bool = True,
                   dedup: bool = True) -> "Graph":
        """Build a graph from an edge list.

        With ``symmetric`` every pair is stored in both directions.  With
        ``dedup`` repeated pairs collapse to a single unit-weight edge;
        otherwise their weights are summed.
        """
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        if src.shape != dst.shape:
            raise DatasetError("src and dst must have equal length")
        if src.size and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= num_nodes):
            raise DatasetError("endpoint out of range")
        w = np.ones(src.size) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
        if symmetric:
            src, dst, w = np.concatenate([src, dst]), np.concatenate([dst, src]), np.concatenate([w, w])
        mat = sp.coo_matrix((w, (src, dst)), shape=(num_nodes, num_nodes)).tocsr()
        mat.sum_duplicates()
        mat.sort_indices()
        data = np.ones_like(mat.data) if dedup else mat.data
        return cls(num_nodes, mat.indptr, mat.indices, data)

    @classmethod
    def from_scipy(cls, mat) -> "Graph":
        mat = sp.csr_matrix(mat)
        mat.sum_duplicates()
        mat.sort_indices()
        return cls(mat.shape[0], mat.indptr, mat.indices, mat.data)

    @property
    def num_edges(self) -> int:
        """Number of stored (directed) entries."""
        return int(self.col_indices.size)

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def weighted_degrees(self) -> np.ndarray:
        return np.asarray(self.to_scipy().sum(axis=1)).ravel()

    def neighbors(self, i: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    def row_of_edges(self) -> np.ndarray:
        """Source node of every stored entry, aligned with ``col_indices``."""
        return np.repeat(np.arange(self.num_nodes), self.degrees())

    def edge_list(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.row_of_edges(), self.col_indices.copy(), self.edge_weights.copy()

    def undirected_edges(self) -> np.ndarray:
        """Unique pairs ``(i, j)`` with ``i < j`` as an ``(m, 2)`` array."""
        rows = self.row_of_edges()
        keep = rows < self.col_indices
        return np.stack([rows[keep], self.col_indices[keep]], axis=1)

    def is_symmetric(self) -> bool:
        mat = self.to_scipy()
        return (mat != mat.T).nnz == 0

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.edge_weights, self.col_indices, self.row_offsets),
                             shape=(self.num_nodes, self.num_nodes))

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def permute(self, perm: Sequence[int]) -> "Graph":
        """Relabel node ``i`` as ``perm[i]``."""
        perm = np.asarray(perm)
        rows, cols, w = self.edge_list()
        mat = sp.coo_matrix((w, (perm[rows], perm[cols])), shape=(self.num_nodes,) * 2)
        return Graph.from_scipy(mat)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.num_nodes == other.num_nodes
                and np.array_equal(self.row_offsets, other.row_offsets)
                and np.array_equal(self.col_indices, other.col_indices)
                and np.array_equal(self.edge_weights, other.edge_weights))

    __hash__ = None


@dataclass(frozen=True)
class SplitMasks:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "val", "test"):
            arr = np.asarray(getattr(self, name), dtype=bool)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.train & self.val) or np.any(self.train & self.test) or np.any(self.val & self.test):
            raise DatasetError("split masks must be pairwise disjoint")

    @classmethod
    def empty(cls, n: int) -> "SplitMasks":
        z = np.zeros(n, dtype=bool)
        return cls(z, z.copy(), z.copy())

    def to_json(self, node_ids=None) -> str:
        ids = np.arange(self.train.size) if node_ids is None else np.asarray(node_ids)
        doc = {name: ids[getattr(self, name)].tolist() for name in ("train", "val", "test")}
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str, node_ids) -> "SplitMasks":
        ids = np.asarray(node_ids)
        lookup = {int(v): i for i, v in enumerate(ids)}
        doc = json.loads(text)
        masks = {}
        for name in ("train", "val", "test"):
            m = np.zeros(ids.size, dtype=bool)
            try:
                m[[lookup[int(v)] for v in doc.get(name, [])]] = True
            except KeyError as exc:
                raise DatasetError(f"split references unknown node id {exc.args[0]}") from None
            masks[name] = m
        return cls(**masks)


@dataclass(frozen=True)
class Dataset:
    graph: Graph
    features: np.ndarray
    sensitive: np.ndarray
    labels: np.ndarray
    splits: SplitMasks
    sensitive_col: int | None = None
    node_ids: np.ndarray | None = None
    feature_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        n = self.graph.num_nodes
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != n:
            raise DatasetError(f"feature matrix must have {n} rows")
        if not np.all(np.isfinite(x)):
            raise DatasetError("feature matrix contains non-finite entries")
        s = np.asarray(self.sensitive, dtype=np.int64)
        if s.shape != (n,) or not np.all((s == 0) | (s == 1)):
            raise DatasetError("sensitive attribute must be binary with one value per node")
        y = np.asarray(self.labels, dtype=np.int64)
        if y.shape != (n,) or not np.all((y == 0) | (y == 1) | (y == MISSING_LABEL)):
            raise DatasetError("labels must be 0, 1 or missing")
        if self.splits.train.size != n:
            raise DatasetError("split masks must cover every node")
        if np.any(self.splits.train & (y == MISSING_LABEL)):
            raise DatasetError("training nodes must be labeled")
        if self.sensitive_col is not None and not 0 <= self.sensitive_col < x.shape[1]:
            raise DatasetError("sensitive_col out of range")
        ids = np.arange(n) if self.node_ids is None else np.asarray(self.node_ids, dtype=np.int64)
        for name, arr in (("features", x), ("sensitive", s), ("labels", y), ("node_ids", ids)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def labeled(self) -> np.ndarray:
        return self.labels != MISSING_LABEL

    def replace(self, **changes) -> "Dataset":
        kwargs = {name: getattr(self, name) for name in self.__dataclass_fields__}
        kwargs.update(changes)
        return Dataset(**kwargs)


@dataclass(frozen=True)
class NodeSchema:
    """Column layout of a node CSV file."""

    id_col: str = "id"
    sensitive_col: str = "sensitive"
    label_col: str = "label"
    feature_cols: tuple[str, ...] | None = None
    sensitive_in_features: bool = False


def _read_edges(path) -> np.ndarray:
    pairs = []
    try:
        fh = open(path)
    except OSError as exc:
        raise DatasetError(f"cannot read edge file: {exc}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) < 2:
                raise DatasetError(f"{path}:{lineno}: expected 'src dst'")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-integer node id") from None
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def load_dataset(node_file, edge_file, schema: NodeSchema | None = None,
                 ratios=(0.5, 0.25, 0.25), seed: int = 0) -> Dataset:
    """Load a node CSV and an edge list into a :class:`Dataset`.

    Node ids may be arbitrary integers; they are remapped to ``0..N-1`` in
    file order and the original ids are kept in ``Dataset.node_ids``.
    Edges are symmetrized and deduplicated, self-loops are dropped.  Splits
    are drawn with :func:`make_splits` over the labeled nodes.
    """
    schema = schema or NodeSchema()
    try:
        table = pd.read_csv(node_file)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DatasetError(f"cannot read node file: {exc}") from None
    for col in (schema.id_col, schema.sensitive_col, schema.label_col):
        if col not in table.columns:
            raise DatasetError(f"node file lacks column '{col}'")
    ids = table[schema.id_col]
    if ids.isna().any():
        raise DatasetError("missing node ids")
    ids = ids.astype(np.int64).to_numpy()
    uniq, counts = np.unique(ids, return_counts=True)
    if np.any(counts > 1):
        raise DatasetError(f"duplicate node id {uniq[counts > 1][0]}")

    sens = table[schema.sensitive_col]
    if sens.isna().any() or not sens.isin([0, 1]).all():
        raise DatasetError("sensitive values must be 0 or 1")
    labels = table[schema.label_col]
    if not labels.dropna().isin([0, 1]).all():
        raise DatasetError("labels must be 0, 1 or empty")
    y = labels.fillna(MISSING_LABEL).astype(np.int64).to_numpy()

    reserved = {schema.id_col, schema.label_col}
    if not schema.sensitive_in_features:
        reserved.add(schema.sensitive_col)
    feature_cols = list(schema.feature_cols) if schema.feature_cols is not None else \
        [c for c in table.columns if c not in reserved]
    missing = [c for c in feature_cols if c not in table.columns]
    if missing:
        raise DatasetError(f"node file lacks feature columns {missing}")
    try:
        x = table[feature_cols].to_numpy(dtype=np.float64)
    except ValueError as exc:
        raise DatasetError(f"non-numeric feature value: {exc}") from None
    sens_idx = feature_cols.index(schema.sensitive_col) if schema.sensitive_col in feature_cols else None

    edges = _read_edges(edge_file)
    lookup = pd.Index(ids)
    src = lookup.get_indexer(edges[:, 0])
    dst = lookup.get_indexer(edges[:, 1])
    if np.any(src < 0) or np.any(dst < 0):
        bad = edges[(src < 0) | (dst < 0)][0]
        raise DatasetError(f"endpoint out of range: edge ({bad[0]}, {bad[1]})")
    keep = src != dst
    graph = Graph.from_edges(len(ids), src[keep], dst[keep])

    ds = Dataset(graph, x, sens.astype(np.int64).to_numpy(), y, SplitMasks.empty(len(ids)),
                 sensitive_col=sens_idx, node_ids=ids, feature_names=tuple(feature_cols))
    if ds.labeled.any():
        ds = ds.replace(splits=make_splits(ds, ratios, seed))
    return ds


def standardize_features(x, exclude: Iterable[int] = ()) -> np.ndarray:
    """Z-score every column not in ``exclude`` using the population stdev.

    Zero-variance columns become all zeros.
    """
    x = np.asarray(x, dtype=np.float64)
    out = x.copy()
    cols = np.setdiff1d(np.arange(x.shape[1]), np.fromiter(exclude, dtype=np.int64))
    if cols.size == 0:
        return out
    block = x[:, cols]
    mean = block.mean(axis=0)
    std = block.std(axis=0)
    centered = block - mean
    scale = np.where(std > 0, std, 1.0)
    out[:, cols] = np.where(std > 0, centered / scale, 0.0)
    return out


def gcn_normalize(graph: Graph) -> Graph:
    """Symmetric normalization with self-loops, D^-1/2 (A + I) D^-1/2."""
    n = graph.num_nodes
    a = graph.to_scipy() + sp.identity(n, format="csr")
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    scale = sp.diags(inv_sqrt)
    return Graph.from_scipy(scale @ a @ scale)


def make_splits(ds: Dataset, ratios=(0.5, 0.25, 0.25), seed: int = 0) -> SplitMasks:
    """Randomly partition labeled nodes into train/val/test by ``ratios``."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) < 0 or sum(ratios) > 1 + 1e-12:
        raise DatasetError("split ratios must be three nonnegative values summing to at most 1")
    labeled = np.flatnonzero(ds.labels != MISSING_LABEL)
    if labeled.size == 0:
        raise DatasetError("no labeled nodes to split")
    order = np.random.default_rng(seed).permutation(labeled)
    n_train = int(np.floor(ratios[0] * labeled.size + 1e-9))
    n_val = int(np.floor(ratios[1] * labeled.size + 1e-9))
    n_test = min(int(np.floor(ratios[2] * labeled.size + 1e-9)), labeled.size - n_train - n_val)
    masks = []
    for start, size in ((0, n_train), (n_train, n_val), (n_train + n_val, n_test)):
        m = np.zeros(ds.num_nodes, dtype=bool)
        m[order[start:start + size]] = True
        masks.append(m)
    return SplitMasks(*masks)


def save_id_map(path, node_ids) -> None:
    ids = np.asarray(node_ids)
    Path(path).write_text("index,id\n" + "".join(f"{i},{v}\n" for i, v in enumerate(ids)))
