"""Counterfactual neighbor search and graph rewiring, plus the two
information-removing augmentations used as ablation baselines."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import Graph

ABSENT = -1

KEPT, REWIRED, UNRESOLVED = 0, 1, 2
FLAG_NAMES = ("kept", "rewired", "unresolved")


@dataclass(frozen=True)
class CounterfactualMap:
    """``partner[v]`` is the counterfactual of node ``v`` or ``ABSENT``."""

    partner: np.ndarray
    k: int

    def __post_init__(self):
        arr = np.asarray(self.partner, dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "partner", arr)

    def __getitem__(self, v) -> int | None:
        u = int(self.partner[v])
        return None if u == ABSENT else u

    def __len__(self):
        return self.partner.size

    @property
    def found(self) -> np.ndarray:
        return self.partner != ABSENT

    def to_csv(self, node_ids=None) -> str:
        ids = np.arange(len(self)) if node_ids is None else np.asarray(node_ids)
        lines = ["node,counterfactual"]
        for v, u in enumerate(self.partner):
            lines.append(f"{ids[v]}," + ("" if u == ABSENT else str(ids[u])))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, k: int, node_ids=None) -> "CounterfactualMap":
        rows = [line.split(",") for line in text.strip().splitlines()[1:]]
        lookup = None if node_ids is None else {int(v): i for i, v in enumerate(node_ids)}
        conv = (lambda t: int(t)) if lookup is None else (lambda t: lookup[int(t)])
        partner = np.full(len(rows), ABSENT, dtype=np.int64)
        for node, cf in rows:
            if cf.strip():
                partner[conv(node)] = conv(cf)
        return cls(partner, k)


def _matching_columns(num_cols, exclude):
    return np.setdiff1d(np.arange(num_cols), np.fromiter(exclude, dtype=np.int64))


def nearest_neighbors(x, k: int, block_size: int = 512) -> np.ndarray:
    """Exact ``k`` nearest other nodes per row, by squared Euclidean distance.

    Ties are broken by the smaller node id.  Candidates are preselected with
    the Gram-matrix expansion in row blocks and re-ranked with directly
    computed distances; a row whose candidate cut cannot be certified against
    the expansion's rounding error is recomputed in full.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    k = min(k, n - 1)
    if k <= 0:
        return np.empty((n, 0), dtype=np.int64)
    sq = np.einsum("ij,ij->i", x, x)
    m = min(n - 1, 2 * k + 16)
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, block_size):
        rows = np.arange(start, min(start + block_size, n))
        approx = sq[rows, None] + sq[None, :] - 2.0 * (x[rows] @ x.T)
        approx[np.arange(rows.size), rows] = np.inf
        cand = np.argpartition(approx, m - 1, axis=1)[:, :m]
        for r, i in enumerate(rows):
            c = cand[r][cand[r] != i]
            d = np.sum((x[c] - x[i]) ** 2, axis=1)
            order = np.lexsort((c, d))[:k]
            if c.size < n - 1:
                outside = approx[r].copy()
                outside[c] = np.inf
                tol = 1e-9 * (sq[i] + sq.max()) + 1e-300
                if not outside.min() - tol > d[order[-1]]:
                    c = np.delete(np.arange(n), i)
                    d = np.sum((x[c] - x[i]) ** 2, axis=1)
                    order = np.lexsort((c, d))[:k]
            out[i] = c[order]
    return out


def find_counterfactuals(x, s, k: int, exclude=(), block_size: int = 512) -> CounterfactualMap:
    """For every node, the nearest opposite-``s`` node among its top-``k``
    nearest neighbors, or ``ABSENT`` if all of them share its attribute.

    ``x`` is expected to be standardized.  Columns in ``exclude`` (typically
    the sensitive column) do not enter the distance.  ``k = N - 1`` gives the
    unrestricted nearest opposite-attribute node.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    x = np.asarray(x, dtype=np.float64)
    s = np.asarray(s)
    cols = _matching_columns(x.shape[1], exclude)
    knn = nearest_neighbors(x[:, cols], k, block_size)
    partner = np.full(x.shape[0], ABSENT, dtype=np.int64)
    if knn.shape[1]:
        opposite = s[knn] != s[:, None]
        has = opposite.any(axis=1)
        first = opposite.argmax(axis=1)
        partner[has] = knn[has, first[has]]
    return CounterfactualMap(partner, k)


@dataclass(frozen=True)
class AugmentedGraph:
    """Directed, integer-weighted rewiring of a graph.

    One record per distinct ``(src, dst, flag)``; ``weight`` counts how many
    original edges produced it.  :attr:`graph` merges records into a single
    weighted adjacency.
    """

    num_nodes: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    flag: np.ndarray

    @property
    def graph(self) -> Graph:
        return Graph.from_edges(self.num_nodes, self.src, self.dst, self.weight,
                                symmetric=False, dedup=False)

    def out_weight(self) -> np.ndarray:
        return np.bincount(self.src, weights=self.weight, minlength=self.num_nodes)

    def to_edge_list(self, node_ids=None) -> str:
        ids = np.arange(self.num_nodes) if node_ids is None else np.asarray(node_ids)
        lines = [f"{ids[a]} {ids[b]} {w:g} {FLAG_NAMES[f]}"
                 for a, b, w, f in zip(self.src, self.dst, self.weight, self.flag)]
        return "\n".join(lines) + ("\n" if lines else "")


def augment_graph(graph: Graph, s, cf: CounterfactualMap) -> AugmentedGraph:
    """Rewire homogeneous edges toward counterfactual nodes.

    Heterogeneous edges ``(i, j)`` are kept.  A homogeneous edge ``(i, j)``
    becomes ``(i, cf(j))`` when ``j`` has a counterfactual; otherwise it is
    kept and flagged unresolved.  Every node keeps its total out-weight.
    """
    s = np.asarray(s)
    if len(cf) != graph.num_nodes:
        raise ValueError("counterfactual map and graph disagree on node count")
    rows, cols, w = graph.edge_list()
    partner = cf.partner[cols]
    homo = s[rows] == s[cols]
    rewire = homo & (partner != ABSENT)
    dst = np.where(rewire, partner, cols)
    flag = np.where(~homo, KEPT, np.where(rewire, REWIRED, UNRESOLVED))

    key = np.stack([rows, dst, flag], axis=1)
    uniq, inverse = np.unique(key, axis=0, return_inverse=True)
    weight = np.bincount(inverse.ravel(), weights=w, minlength=uniq.shape[0])
    return AugmentedGraph(graph.num_nodes, uniq[:, 0], uniq[:, 1], weight, uniq[:, 2])


def edge_drop(graph: Graph, p: float, seed: int) -> Graph:
    """Remove each undirected edge independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    upper = sp.triu(graph.to_scipy(), format="coo")
    keep = np.random.default_rng(seed).random(upper.nnz) >= p
    upper = sp.coo_matrix((upper.data[keep], (upper.row[keep], upper.col[keep])), shape=upper.shape)
    return Graph.from_scipy(upper + sp.triu(upper, k=1).T)


def feature_mask_columns(num_cols: int, p: float, seed: int) -> np.ndarray:
    """Boolean mask of columns to zero."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    return np.random.default_rng(seed).random(num_cols) < p


def feature_mask(x, p: float, seed: int) -> np.ndarray:
    """Zero each feature column independently with probability ``p``."""
    x = np.asarray(x, dtype=np.float64)
    out = x.copy()
    out[:, feature_mask_columns(x.shape[1], p, seed)] = 0.0
    return out
