"""Median trees: random-coordinate cuts at the empirical median.

Each internal node draws one coordinate uniformly from ``{0, ..., d-1}``,
cuts at the empirical median of that coordinate over its points and drops
the median point(s) from both children. Every leaf sits at depth ``k_n``.
Trees reuse :class:`rfprune.cart.RegressionTree`; coordinates equal to the
cut value are routed to the left child at query time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cart import RegressionTree, _Builder


class MedianTreeError(ValueError):
    """Invalid median-tree parameters or a degenerate cut."""


@dataclass(frozen=True)
class MedianTreeParams:
    a_n: int
    k_n: int

    def __post_init__(self):
        if self.k_n < 0:
            raise MedianTreeError("k_n must be nonnegative")
        if self.a_n < 4:
            raise MedianTreeError("a_n must be at least 4")
        if self.a_n < 4 * 2 ** self.k_n:
            raise MedianTreeError(
                f"a_n * 2^-k_n must be at least 4 (a_n={self.a_n}, k_n={self.k_n})")

    @property
    def nodesize(self) -> float:
        return self.a_n / 2 ** self.k_n


def max_depth(a_n: int) -> int:
    """Largest k_n allowed for a subsample of size ``a_n``."""
    if a_n < 4:
        raise MedianTreeError("a_n must be at least 4")
    return int(a_n // 4).bit_length() - 1


def empirical_median(values):
    """1-based rank and value of the empirical median.

    With the sorted values ``X_(1) <= ... <= X_(n)`` and ``F_n(X_(l)) = l/n``,
    the median is ``X_(l)`` for ``l = floor(n/2) + 1``.
    """
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ValueError("median of an empty list")
    rank = v.size // 2 + 1
    return rank, float(v[rank - 1])


def grow_median_tree(data, indices, params: MedianTreeParams,
                     g: np.random.Generator) -> RegressionTree:
    """Grow a depth-``k_n`` median tree on the distinct rows ``indices``."""
    indices = np.asarray(indices, dtype=np.intp)
    if indices.size != params.a_n:
        raise MedianTreeError(f"expected a_n={params.a_n} indices, got {indices.size}")
    if np.unique(indices).size != indices.size:
        raise MedianTreeError("median trees need distinct rows")
    x = data.features[indices]
    y = data.responses[indices]
    d = x.shape[1]
    tree = _Builder(d)
    root = tree.add(-1, y)
    stack = [(root, np.arange(indices.size), 0)]
    rank = 0
    while stack:
        node, rows, depth = stack.pop()
        if depth == params.k_n:
            continue
        dim = int(g.integers(d))
        vals = x[rows, dim]
        _, cut = empirical_median(vals)
        lrows = rows[vals < cut]
        rrows = rows[vals > cut]
        if lrows.size == 0 or rrows.size == 0:
            raise MedianTreeError(
                f"median cut at depth {depth} on coordinate {dim} empties a child (ties)")
        lid = tree.add(node, y[lrows])
        rid = tree.add(node, y[rrows])
        tree.set_split(node, dim, cut, lid, rid, rank)
        rank += 1
        stack.append((rid, rrows, depth + 1))
        stack.append((lid, lrows, depth + 1))
    return tree.build("median", "median")


def cell_path(tree: RegressionTree, x) -> list:
    """Node ids from the root to the leaf whose cell contains ``x``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    node = 0
    path = [0]
    while tree.feature[node] >= 0:
        j = tree.feature[node]
        node = tree.left[node] if x[j] <= tree.threshold[node] else tree.right[node]
        path.append(int(node))
    return path
