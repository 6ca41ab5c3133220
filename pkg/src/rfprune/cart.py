"""CART regression trees.

Trees are stored as flat node arrays. Node ids follow creation order and a
split always creates its left child before its right child, so the left
child of a node is the smaller of its two child ids.

Two growth regimes are supported:

* nodesize regime (``maxnodes is None``): depth-first, a node is split while
  it holds at least ``nodesize`` points and some admissible threshold exists,
  zero-gain splits included.
* best-first regime (``maxnodes`` set): the leaf with the largest positive
  gain is split next until the tree has ``maxnodes`` leaves. Leaves with
  fewer than ``nodesize`` points are never split. Since each node draws its
  candidate coordinates when it is created, the tree grown with ``maxnodes=m``
  is the first ``m - 1`` expansions of any tree grown with a larger budget
  from the same stream; :meth:`RegressionTree.prune` relies on this.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .sampling import subsample_without_replacement

LEAF = -1
TIE_RTOL = 1e-12
TREE_HEADER = "node_id parent dim threshold value count order"


@dataclass(frozen=True)
class Split:
    dimension: int
    threshold: float
    gain: float


def sum_of_squares(y: np.ndarray) -> float:
    """Sum of squared deviations from the mean."""
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        return 0.0
    return float(np.sum((y - y.mean()) ** 2))


def best_split(x: np.ndarray, y: np.ndarray, candidate_dims: Sequence[int]) -> Optional[Split]:
    """Variance-minimizing split of a node over ``candidate_dims``.

    Thresholds are midpoints between consecutive distinct sorted values.
    Gains within ``TIE_RTOL`` (relative to the node's sum of squares) of the
    best one are ties, resolved towards the lower dimension index and then
    the lower threshold. Returns ``None`` when every candidate dimension is
    constant on the node.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    c = y.shape[0]
    if c < 2:
        raise ValueError("best_split needs at least 2 points")
    dims = np.unique(np.asarray(candidate_dims, dtype=np.intp))
    if dims.size == 0:
        raise ValueError("no candidate dimensions")

    sub = x[:, dims]
    order = np.argsort(sub, axis=0, kind="stable")
    xs = np.take_along_axis(sub, order, axis=0)
    admissible = xs[1:] > xs[:-1]
    if not admissible.any():
        return None

    if y.min() == y.max():
        gains = np.zeros(admissible.shape)
        sse = 0.0
    else:
        yc = y - y.mean()
        sse = float(np.dot(yc, yc))
        left_sum = np.cumsum(yc[order], axis=0)
        total = left_sum[-1]
        left_sum = left_sum[:-1]
        n_left = np.arange(1, c, dtype=np.float64)[:, None]
        n_right = c - n_left
        gains = left_sum ** 2 / n_left + (total - left_sum) ** 2 / n_right - total ** 2 / c
    gains = np.where(admissible, gains, -np.inf)

    # dimension-major scan order realizes the tie rule
    flat = gains.T.ravel()
    best = flat.max()
    pick = int(np.flatnonzero(flat >= best - TIE_RTOL * sse)[0])
    j, pos = divmod(pick, c - 1)
    threshold = 0.5 * (xs[pos, j] + xs[pos + 1, j])
    # midpoints of very close neighbours can round onto the right value
    if not threshold < xs[pos + 1, j]:
        threshold = xs[pos, j]
    return Split(int(dims[j]), float(threshold), max(float(flat[pick]), 0.0))


class RegressionTree:
    """Immutable binary regression tree over [0, 1]^d.

    ``value`` and ``count`` are kept for internal nodes too (mean and size
    of the data that reached them); ``order[i]`` is the expansion rank of an
    internal node (``-1`` for leaves).
    """

    def __init__(self, d, feature, threshold, left, right, parent, value, count, order,
                 kind="cart", growth="nodesize"):
        self.d = int(d)
        self.kind = kind
        self.growth = growth
        self.feature = np.asarray(feature, dtype=np.intp)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.intp)
        self.right = np.asarray(right, dtype=np.intp)
        self.parent = np.asarray(parent, dtype=np.intp)
        self.value = np.asarray(value, dtype=np.float64)
        self.count = np.asarray(count, dtype=np.int64)
        self.order = np.asarray(order, dtype=np.intp)
        for arr in (self.feature, self.threshold, self.left, self.right, self.parent,
                    self.value, self.count, self.order):
            arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature == LEAF)

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature == LEAF))

    def depth(self, node: int) -> int:
        k = 0
        while self.parent[node] >= 0:
            node = self.parent[node]
            k += 1
        return k

    def cell_bounds(self, node: int):
        """(lower, upper) corners of the cell of ``node``.

        Cells are half-open on the left side of each cut: the left child of a
        cut at ``t`` along ``j`` gets ``x_j <= t``.
        """
        lo = np.zeros(self.d)
        hi = np.ones(self.d)
        child = node
        node = self.parent[node]
        while node >= 0:
            j = self.feature[node]
            t = self.threshold[node]
            if child == self.left[node]:
                hi[j] = min(hi[j], t)
            else:
                lo[j] = max(lo[j], t)
            child = node
            node = self.parent[node]
        return lo, hi

    def apply(self, x) -> np.ndarray:
        """Leaf id of each row of ``x``."""
        x = _as_query(x, self.d)
        node = np.zeros(x.shape[0], dtype=np.intp)
        active = np.arange(x.shape[0])
        while active.size:
            cur = node[active]
            feat = self.feature[cur]
            inner = feat != LEAF
            active, cur, feat = active[inner], cur[inner], feat[inner]
            if not active.size:
                break
            go_left = x[active, feat] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
        return node

    def predict(self, x) -> np.ndarray:
        return self.value[self.apply(x)]

    def prune(self, max_leaves: int) -> "RegressionTree":
        """The tree made of the first ``max_leaves - 1`` best-first expansions."""
        if self.growth != "best_first":
            raise ValueError("only best-first trees can be pruned by leaf budget")
        if max_leaves < 1:
            raise ValueError("max_leaves must be positive")
        keep_split = (self.order >= 0) & (self.order < max_leaves - 1)
        keep = np.zeros(self.n_nodes, dtype=bool)
        keep[0] = True
        for i in range(self.n_nodes):
            if keep[i] and keep_split[i]:
                keep[self.left[i]] = keep[self.right[i]] = True
        ids = np.flatnonzero(keep)
        remap = np.full(self.n_nodes, -1, dtype=np.intp)
        remap[ids] = np.arange(ids.size)
        split = keep_split[ids]
        feature = np.where(split, self.feature[ids], LEAF)
        threshold = np.where(split, self.threshold[ids], np.nan)
        left = np.where(split, remap[self.left[ids]], -1)
        right = np.where(split, remap[self.right[ids]], -1)
        parent = np.where(self.parent[ids] >= 0, remap[np.maximum(self.parent[ids], 0)], -1)
        order = np.where(split, self.order[ids], -1)
        return RegressionTree(self.d, feature, threshold, left, right, parent,
                              self.value[ids], self.count[ids], order, self.kind, self.growth)

    def to_text(self) -> str:
        lines = [TREE_HEADER]
        for i in range(self.n_nodes):
            if self.feature[i] == LEAF:
                dim, thr = "-", "-"
            else:
                dim, thr = str(int(self.feature[i])), repr(float(self.threshold[i]))
            lines.append(f"{i} {int(self.parent[i])} {dim} {thr} "
                         f"{float(self.value[i])!r} {int(self.count[i])} {int(self.order[i])}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, d: int, kind="cart", growth="nodesize") -> "RegressionTree":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        if not lines or lines[0].strip() != TREE_HEADER:
            raise ValueError("missing tree header")
        rows = [ln.split() for ln in lines[1:]]
        m = len(rows)
        feature = np.full(m, LEAF, dtype=np.intp)
        threshold = np.full(m, np.nan)
        left = np.full(m, -1, dtype=np.intp)
        right = np.full(m, -1, dtype=np.intp)
        parent = np.empty(m, dtype=np.intp)
        value = np.empty(m)
        count = np.empty(m, dtype=np.int64)
        order = np.empty(m, dtype=np.intp)
        for i, row in enumerate(rows):
            if len(row) != 7 or int(row[0]) != i:
                raise ValueError(f"malformed tree line {i}")
            parent[i] = int(row[1])
            if row[2] != "-":
                feature[i] = int(row[2])
                threshold[i] = float(row[3])
            value[i] = float(row[4])
            count[i] = int(row[5])
            order[i] = int(row[6])
            p = parent[i]
            if p >= 0:
                if left[p] < 0:
                    left[p] = i
                else:
                    right[p] = i
        return cls(d, feature, threshold, left, right, parent, value, count, order, kind, growth)

    def __eq__(self, other):
        if not isinstance(other, RegressionTree):
            return NotImplemented
        return self.d == other.d and self.to_text() == other.to_text()

    __hash__ = None


def _as_query(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != d:
        raise ValueError(f"query points must have {d} coordinates")
    if np.any((x < 0.0) | (x > 1.0)) or not np.all(np.isfinite(x)):
        raise ValueError("query point outside [0, 1]^d")
    return x


class _Builder:
    def __init__(self, d):
        self.d = d
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.parent: List[int] = []
        self.value: List[float] = []
        self.count: List[int] = []
        self.order: List[int] = []

    def add(self, parent, y) -> int:
        self.feature.append(LEAF)
        self.threshold.append(math.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.parent.append(parent)
        self.value.append(float(np.mean(y)))
        self.count.append(int(y.shape[0]))
        self.order.append(-1)
        return len(self.feature) - 1

    def set_split(self, node, dim, threshold, left, right, rank):
        self.feature[node] = dim
        self.threshold[node] = threshold
        self.left[node] = left
        self.right[node] = right
        self.order[node] = rank

    def build(self, kind, growth) -> RegressionTree:
        return RegressionTree(self.d, self.feature, self.threshold, self.left, self.right,
                              self.parent, self.value, self.count, self.order, kind, growth)


def grow_cart_tree(data, indices, mtry: int, nodesize: int, maxnodes: Optional[int],
                   g: np.random.Generator) -> RegressionTree:
    """Grow one CART tree on the rows ``indices`` of ``data`` (repeats count as copies)."""
    features = data.features
    indices = np.asarray(indices, dtype=np.intp)
    if indices.size == 0:
        raise ValueError("cannot grow a tree on an empty sample")
    d = features.shape[1]
    if not 1 <= mtry <= d:
        raise ValueError(f"mtry must lie in [1, {d}], got {mtry}")
    if nodesize < 1:
        raise ValueError("nodesize must be at least 1")
    if maxnodes is not None and maxnodes < 2:
        raise ValueError("maxnodes must be at least 2")

    x = features[indices]
    y = data.responses[indices]
    tree = _Builder(d)
    rows_of = {0: np.arange(x.shape[0])}
    tree.add(-1, y)

    def find_split(node):
        rows = rows_of[node]
        if rows.size < max(nodesize, 2):
            return None
        dims = subsample_without_replacement(d, mtry, g)
        return best_split(x[rows], y[rows], dims)

    def expand(node, split, rank):
        rows = rows_of.pop(node)
        go_left = x[rows, split.dimension] <= split.threshold
        lrows, rrows = rows[go_left], rows[~go_left]
        lid = tree.add(node, y[lrows])
        rid = tree.add(node, y[rrows])
        rows_of[lid] = lrows
        rows_of[rid] = rrows
        tree.set_split(node, split.dimension, split.threshold, lid, rid, rank)
        return lid, rid

    rank = 0
    if maxnodes is None:
        stack = [0]
        while stack:
            node = stack.pop()
            split = find_split(node)
            if split is None:
                rows_of.pop(node)
                continue
            lid, rid = expand(node, split, rank)
            rank += 1
            stack.append(rid)
            stack.append(lid)
        return tree.build("cart", "nodesize")

    heap = []

    def consider(node):
        split = find_split(node)
        if split is not None and split.gain > 0.0:
            heapq.heappush(heap, (-split.gain, node, split))

    consider(0)
    n_leaves = 1
    while heap and n_leaves < maxnodes:
        _, node, split = heapq.heappop(heap)
        lid, rid = expand(node, split, rank)
        rank += 1
        n_leaves += 1
        consider(lid)
        consider(rid)
    return tree.build("cart", "best_first")
