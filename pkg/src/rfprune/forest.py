"""Forests of CART or median trees.

Tree ``j`` of a forest is grown from ``derive_stream(master_seed, j)``: the
same stream draws its resampled indices and then all of its split
randomness. Training therefore gives bit-identical forests whatever the
number of workers.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import List, Optional

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .cart import RegressionTree, grow_cart_tree
from .median_tree import MedianTreeParams, grow_median_tree
from .sampling import bootstrap_sample, derive_stream, subsample_without_replacement

CART = "cart"
MEDIAN = "median"
RESAMPLING = ("bootstrap", "subsample", "none")
FOREST_MAGIC = "rfprune-forest"
FOREST_FORMAT = 1

DEFAULT_TREES = 500
DEFAULT_NODESIZE = 5


class ConfigError(ValueError):
    """Inadmissible forest configuration."""


def default_mtry(d: int) -> int:
    return max(1, math.ceil(d / 3))


@dataclass(frozen=True)
class ForestConfig:
    """All knobs of a forest.

    ``None`` for ``mtry``/``nodesize`` means the usual default
    (``ceil(d/3)`` and 5), filled in by :meth:`resolve` once ``d`` is known.
    Median forests take ``k_n`` and must leave the CART fields unset, and
    vice versa.
    """

    tree_kind: str = CART
    M: int = DEFAULT_TREES
    resample: str = "bootstrap"
    a_n: Optional[int] = None
    mtry: Optional[int] = None
    nodesize: Optional[int] = None
    maxnodes: Optional[int] = None
    k_n: Optional[int] = None
    master_seed: int = 0

    def __post_init__(self):
        if self.tree_kind not in (CART, MEDIAN):
            raise ConfigError(f"unknown tree kind {self.tree_kind!r}")
        if self.resample not in RESAMPLING:
            raise ConfigError(f"unknown resampling scheme {self.resample!r}")
        if self.M < 1:
            raise ConfigError("M must be at least 1")
        if self.tree_kind == CART:
            if self.k_n is not None:
                raise ConfigError("k_n only applies to median trees")
            if self.mtry is not None and self.mtry < 1:
                raise ConfigError("mtry must be at least 1")
            if self.nodesize is not None and self.nodesize < 1:
                raise ConfigError("nodesize must be at least 1")
            if self.maxnodes is not None and self.maxnodes < 2:
                raise ConfigError("maxnodes must be at least 2")
        else:
            for name in ("mtry", "nodesize", "maxnodes"):
                if getattr(self, name) is not None:
                    raise ConfigError(f"{name} does not apply to median trees")
            if self.k_n is None or self.k_n < 0:
                raise ConfigError("median trees need a depth k_n >= 0")
            if self.resample == "bootstrap":
                raise ConfigError("median trees use subsampling without replacement or none")
        if self.resample == "subsample":
            if self.a_n is None or self.a_n < 1:
                raise ConfigError("subsampling needs a_n >= 1")
        elif self.a_n is not None:
            # a_n is meaningless here; normalized away so configs compare equal
            object.__setattr__(self, "a_n", None)

    def sample_size(self, n: int) -> int:
        return self.a_n if self.resample == "subsample" else n

    def resolve(self, n: int, d: int) -> "ForestConfig":
        """Fill defaults for a training set of shape (n, d) and validate."""
        cfg = self
        if cfg.tree_kind == CART:
            cfg = replace(cfg,
                          mtry=default_mtry(d) if cfg.mtry is None else cfg.mtry,
                          nodesize=DEFAULT_NODESIZE if cfg.nodesize is None else cfg.nodesize)
            if cfg.mtry > d:
                raise ConfigError(f"mtry={cfg.mtry} exceeds d={d}")
        if cfg.resample == "subsample" and cfg.a_n > n:
            raise ConfigError(f"a_n={cfg.a_n} exceeds n={n}")
        if cfg.tree_kind == MEDIAN:
            try:
                MedianTreeParams(cfg.sample_size(n), cfg.k_n)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        return cfg

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "ForestConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if raw is None or raw == "None":
                kwargs[key] = None
            elif key in ("tree_kind", "resample"):
                kwargs[key] = str(raw)
            else:
                kwargs[key] = int(raw)
        return cls(**kwargs)


class Forest:
    def __init__(self, trees: List[RegressionTree], config: ForestConfig):
        if len(trees) != config.M:
            raise ConfigError(f"forest holds {len(trees)} trees, config says M={config.M}")
        self.trees = list(trees)
        self.config = config
        self.d = trees[0].d

    def predict(self, x) -> np.ndarray:
        """Mean of the tree predictions, accumulated in tree order."""
        total = self.trees[0].predict(x).copy()
        for tree in self.trees[1:]:
            total += tree.predict(x)
        return total / len(self.trees)

    def tree_predictions(self, x) -> np.ndarray:
        return np.stack([tree.predict(x) for tree in self.trees])

    def prune(self, maxnodes: int) -> "Forest":
        """Forest of best-first trees cut back to ``maxnodes`` leaves each."""
        if self.config.maxnodes is not None and maxnodes > self.config.maxnodes:
            raise ConfigError("cannot prune to more leaves than the trees were grown with")
        return Forest([t.prune(maxnodes) for t in self.trees],
                      replace(self.config, maxnodes=maxnodes))

    def to_text(self) -> str:
        lines = [f"{FOREST_MAGIC} {FOREST_FORMAT}", f"version {__version__}", f"d {self.d}"]
        for key, value in self.config.as_dict().items():
            lines.append(f"config {key} {value}")
        out = "\n".join(lines) + "\n"
        parts = [out]
        for j, tree in enumerate(self.trees):
            parts.append(f"tree {j} {tree.growth}\n")
            parts.append(tree.to_text())
        return "".join(parts)

    @classmethod
    def from_text(cls, text: str) -> "Forest":
        lines = text.splitlines()
        if not lines or lines[0].split() != [FOREST_MAGIC, str(FOREST_FORMAT)]:
            raise ValueError("not a forest file (bad magic or format version)")
        d = None
        cfg = {}
        trees = []
        i = 1
        while i < len(lines):
            head = lines[i].split()
            if not head:
                i += 1
                continue
            if head[0] == "d":
                d = int(head[1])
                i += 1
            elif head[0] == "version":
                i += 1
            elif head[0] == "config":
                cfg[head[1]] = head[2]
                i += 1
            elif head[0] == "tree":
                growth = head[2]
                j = i + 1
                while j < len(lines) and not lines[j].startswith("tree "):
                    j += 1
                config = ForestConfig.from_dict(cfg)
                trees.append(RegressionTree.from_text("\n".join(lines[i + 1:j]), d,
                                                      config.tree_kind, growth))
                i = j
            else:
                raise ValueError(f"unexpected forest line {i}: {lines[i]!r}")
        return cls(trees, ForestConfig.from_dict(cfg))

    def save(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "Forest":
        with open(path) as fh:
            return cls.from_text(fh.read())


def tree_sample(config: ForestConfig, n: int, g: np.random.Generator) -> np.ndarray:
    if config.resample == "bootstrap":
        return bootstrap_sample(n, g)
    if config.resample == "subsample":
        return subsample_without_replacement(n, config.a_n, g)
    return np.arange(n, dtype=np.intp)


def grow_tree(train, config: ForestConfig, j: int) -> RegressionTree:
    """Tree ``j`` of the forest; ``config`` must already be resolved."""
    g = derive_stream(config.master_seed, j)
    indices = tree_sample(config, train.n, g)
    if config.tree_kind == CART:
        return grow_cart_tree(train, indices, config.mtry, config.nodesize, config.maxnodes, g)
    params = MedianTreeParams(indices.size, config.k_n)
    return grow_median_tree(train, indices, params, g)


def _grow_block(train, config, ids):
    return [grow_tree(train, config, j) for j in ids]


def train_forest(train, config: ForestConfig, n_jobs: int = 1) -> Forest:
    """Grow the ``config.M`` trees of a forest on ``train``.

    ``n_jobs > 1`` spreads contiguous blocks of tree ids over worker
    processes; the result does not depend on ``n_jobs``.
    """
    cfg = config.resolve(train.n, train.d)
    ids = list(range(cfg.M))
    if n_jobs <= 1 or cfg.M == 1:
        trees = _grow_block(train, cfg, ids)
    else:
        blocks = [b.tolist() for b in np.array_split(ids, min(n_jobs, cfg.M))]
        results = Parallel(n_jobs=n_jobs)(delayed(_grow_block)(train, cfg, b) for b in blocks)
        trees = [t for block in results for t in block]
    return Forest(trees, cfg)


def empirical_l2_risk(forest: Forest, test) -> float:
    """Mean squared prediction error over the rows of ``test``."""
    if test.n < 1:
        raise ValueError("empty test set")
    if test.d != forest.d:
        raise ValueError(f"test set has d={test.d}, forest expects d={forest.d}")
    residual = forest.predict(test.features) - test.responses
    return float(np.mean(residual ** 2))
