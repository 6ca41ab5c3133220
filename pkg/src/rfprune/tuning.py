"""Sweeps of maxnodes / sampsize with repetition averaging, and the
near-optimal parameter rule used to read them.

Seed bookkeeping for repetition ``r`` of a sweep with seed ``s``:

* data:    ``derive_seed(s, r, 0)``
* split:   ``derive_seed(s, r, 1)``
* forests: ``derive_seed(s, r, 2)``, shared by every grid point and by the
  reference forest, so all forests of a repetition see the same train/test
  split and the same per-tree streams.

Grid values count observations of the training part of the split.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from .dataset import Dataset, ModelSpec, generate_model, split_train_test, tilde_transform
from .forest import ForestConfig, empirical_l2_risk, train_forest
from .median_tree import max_depth
from .sampling import derive_seed, derive_stream
from .theory import optimal_depth

TRAIN_FRACTION = 0.8
MAXNODES = "maxnodes"
SAMPSIZE = "sampsize"


def train_size(n: int) -> int:
    return int(round(TRAIN_FRACTION * n))


def default_grid(parameter: str, n: int) -> List[int]:
    """maxnodes: 5%, 10%, ..., 100% of the training size; sampsize: 10%, ..., 100%."""
    m = train_size(n)
    if parameter == MAXNODES:
        fractions = np.arange(1, 21) / 20
        lowest = 2
    elif parameter == SAMPSIZE:
        fractions = np.arange(1, 11) / 10
        lowest = 1
    else:
        raise ValueError(f"unknown swept parameter {parameter!r}")
    return sorted({max(lowest, int(round(f * m))) for f in fractions})


def default_base_config(parameter: str, trees: int = 500) -> ForestConfig:
    """Pruned forests use every training point per tree; subsampled forests are fully grown."""
    if parameter == MAXNODES:
        return ForestConfig(M=trees, resample="none")
    return ForestConfig(M=trees, resample="subsample", a_n=1)


def reference_config(base: ForestConfig) -> ForestConfig:
    """Default bootstrap forest with the base forest's tree count."""
    return ForestConfig(M=base.M)


@dataclass(frozen=True)
class SweepSpec:
    model: ModelSpec
    n: int
    base_config: ForestConfig
    swept_parameter: str
    grid: tuple
    repetitions: int
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(int(v) for v in self.grid))
        if self.swept_parameter not in (MAXNODES, SAMPSIZE):
            raise ValueError(f"unknown swept parameter {self.swept_parameter!r}")
        if not self.grid:
            raise ValueError("empty grid")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError("grid must be strictly increasing")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        m = train_size(self.n)
        if self.n < 2 or m >= self.n:
            raise ValueError(f"n={self.n} is too small to split")
        if self.swept_parameter == MAXNODES:
            if self.base_config.tree_kind != "cart":
                raise ValueError("maxnodes sweeps need CART forests")
            if self.grid[0] < 2 or self.grid[-1] > m:
                raise ValueError(f"maxnodes grid must lie in [2, {m}] (training size)")
        else:
            if self.grid[0] < 1 or self.grid[-1] > m:
                raise ValueError(f"sampsize grid must lie in [1, {m}] (training size)")

    def config_at(self, value: int) -> ForestConfig:
        if self.swept_parameter == MAXNODES:
            return replace(self.base_config, maxnodes=value)
        return replace(self.base_config, resample="subsample", a_n=value)


@dataclass
class SweepResult:
    grid: List[int]
    mean_risk: List[float]
    std_risk: List[float]
    reference_risk: float
    reference_std: float
    optimum: int
    risks: np.ndarray = field(repr=False)
    reference_risks: np.ndarray = field(repr=False)
    spec: Optional[SweepSpec] = field(default=None, repr=False)


def _std(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    return float(values.std(ddof=1)) if values.size > 1 else 0.0


def repetition_data(spec: SweepSpec, r: int):
    data = generate_model(spec.model, spec.n, derive_seed(spec.master_seed, r, 0))
    return split_train_test(data, TRAIN_FRACTION, derive_seed(spec.master_seed, r, 1))


def _run_repetition(spec: SweepSpec, r: int):
    train, test = repetition_data(spec, r)
    seed = derive_seed(spec.master_seed, r, 2)
    reference = train_forest(train, replace(reference_config(spec.base_config), master_seed=seed))
    ref_risk = empirical_l2_risk(reference, test)
    if spec.swept_parameter == MAXNODES:
        # smaller budgets are prefixes of the largest one
        full = train_forest(train, replace(spec.config_at(spec.grid[-1]), master_seed=seed))
        risks = [empirical_l2_risk(full.prune(v), test) for v in spec.grid]
    else:
        risks = [empirical_l2_risk(train_forest(train, replace(spec.config_at(v), master_seed=seed)),
                                   test)
                 for v in spec.grid]
    return risks, ref_risk


def run_sweep(spec: SweepSpec, n_jobs: int = 1, tolerance_fraction: float = 0.05) -> SweepResult:
    """Test risks of one forest per grid value and repetition, plus the reference forest."""
    reps = range(spec.repetitions)
    if n_jobs <= 1:
        out = [_run_repetition(spec, r) for r in reps]
    else:
        out = Parallel(n_jobs=n_jobs)(delayed(_run_repetition)(spec, r) for r in reps)
    risks = np.array([o[0] for o in out])
    ref = np.array([o[1] for o in out])
    mean = risks.mean(axis=0)
    result = SweepResult(
        grid=list(spec.grid),
        mean_risk=[float(v) for v in mean],
        std_risk=[_std(risks[:, i]) for i in range(len(spec.grid))],
        reference_risk=float(ref.mean()),
        reference_std=_std(ref),
        optimum=spec.grid[0],
        risks=risks,
        reference_risks=ref,
        spec=spec,
    )
    result.optimum = extract_optimum(result, tolerance_fraction)
    return result


def extract_optimum(result: SweepResult, tolerance_fraction: float = 0.05) -> int:
    """Smallest grid value whose mean risk is within ``tolerance_fraction`` of
    the risk spread from the minimum (strict inequality); the smallest grid
    value when all risks are equal."""
    if not result.grid:
        raise ValueError("empty sweep result")
    risks = np.asarray(result.mean_risk, dtype=np.float64)
    lo, hi = risks.min(), risks.max()
    if hi == lo:
        return result.grid[0]
    near = np.abs(risks - lo) < tolerance_fraction * (hi - lo)
    return result.grid[int(np.flatnonzero(near)[0])]


SWEEP_COLUMNS = ["parameter_value", "mean_risk", "std_risk", "reference_risk", "n",
                 "model_id", "repetitions", "M", "seed"]


def sweep_csv_text(result: SweepResult) -> str:
    spec = result.spec
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for value, mean, std in zip(result.grid, result.mean_risk, result.std_risk):
        writer.writerow([value, repr(mean), repr(std), repr(result.reference_risk), spec.n,
                         spec.model.model_id, spec.repetitions, spec.base_config.M,
                         spec.master_seed])
    return buf.getvalue()


def write_sweep_csv(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(sweep_csv_text(result))


@dataclass(frozen=True)
class ProportionalityRow:
    n: int
    train_size: int
    optimum: int
    ratio: float
    reference_risk: float
    optimum_risk: float


def proportionality_study(model: ModelSpec, n_list: Sequence[int], parameter: str,
                          base_config: ForestConfig, repetitions: int, master_seed: int,
                          grid_fractions: Optional[Sequence[float]] = None,
                          n_jobs: int = 1) -> List[ProportionalityRow]:
    """Optimal maxnodes / sampsize per sample size; ``ratio`` is ``optimum / n``.

    Each ``n`` gets its own seed ``derive_seed(master_seed, n)``.
    """
    rows = []
    for n in n_list:
        if grid_fractions is None:
            grid = default_grid(parameter, n)
        else:
            lowest = 2 if parameter == MAXNODES else 1
            grid = sorted({max(lowest, int(round(f * train_size(n)))) for f in grid_fractions})
        spec = SweepSpec(model, n, base_config, parameter, tuple(grid), repetitions,
                         derive_seed(master_seed, n))
        res = run_sweep(spec, n_jobs=n_jobs)
        best = res.mean_risk[res.grid.index(res.optimum)]
        rows.append(ProportionalityRow(n, train_size(n), res.optimum, res.optimum / n,
                                       res.reference_risk, best))
    return rows


PROPORTIONALITY_COLUMNS = ["n", "train_size", "optimum", "optimum_over_n", "optimum_risk",
                           "reference_risk", "model_id", "parameter"]


def proportionality_csv_text(rows, model_id, parameter) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PROPORTIONALITY_COLUMNS)
    for row in rows:
        writer.writerow([row.n, row.train_size, row.optimum, repr(row.ratio),
                         repr(row.optimum_risk), repr(row.reference_risk), model_id, parameter])
    return buf.getvalue()


def write_proportionality_csv(rows, model_id, parameter, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(proportionality_csv_text(rows, model_id, parameter))


# --- convergence rate of median forests in dimension one ---------------------

def rate_study_truth(x):
    return tilde_transform(x)[:, 0] ** 2


RATE_STUDY_LIPSCHITZ = 4.0


@dataclass
class RateStudyResult:
    n_list: List[int]
    depths: List[int]
    mean_risk: List[float]
    std_risk: List[float]
    slope: float
    intercept: float


def rate_study_depth(n: int, sigma: float, side_constant: Optional[float] = 1.0) -> int:
    """Integer optimal depth of the bound for the rate-study model, capped so
    that every leaf keeps at least 4 points.

    ``side_constant`` is the constant in front of ``beta^k`` in the side-moment
    bound. The default 1 is its sharp value in dimension one; ``None`` uses the
    worst-case ``exp(12/(4d-3))``, which in dimension one asks for more depth
    than any n in a desk-scale study can hold.
    """
    _, k = optimal_depth(1, n, sigma ** 2, RATE_STUDY_LIPSCHITZ, side_constant=side_constant)
    return min(k, max_depth(n))


def rate_study(n_list: Sequence[int], repetitions: int, sigma: float, master_seed: int,
               trees: int = 1, side_constant: Optional[float] = 1.0, n_test: int = 2000,
               n_jobs: int = 1) -> RateStudyResult:
    """Risk of median forests on ``Y = (2X - 1)^2 + N(0, sigma^2)`` in d = 1.

    Forests use every point per tree (no subsampling) and the depth of
    :func:`rate_study_depth`; in dimension one all such trees coincide, so
    ``trees=1`` already gives the infinite forest. The risk is the mean squared distance to the
    regression function at ``n_test`` fresh uniform points, so the noise
    floor does not enter. ``slope`` is the least-squares slope of
    log(mean risk) on log(n).
    """
    def one(n, r):
        g = derive_stream(derive_seed(master_seed, n, r), 0)
        x = g.random((n, 1))
        y = rate_study_truth(x) + sigma * g.standard_normal(n)
        k = rate_study_depth(n, sigma, side_constant)
        forest = train_forest(Dataset(x, y), ForestConfig(
            tree_kind="median", M=trees, resample="none", k_n=k,
            master_seed=derive_seed(master_seed, n, r, 1)))
        xt = g.random((n_test, 1))
        return float(np.mean((forest.predict(xt) - rate_study_truth(xt)) ** 2))

    jobs = [(n, r) for n in n_list for r in range(repetitions)]
    if n_jobs <= 1:
        flat = [one(n, r) for n, r in jobs]
    else:
        flat = Parallel(n_jobs=n_jobs)(delayed(one)(n, r) for n, r in jobs)
    risks = np.array(flat).reshape(len(n_list), repetitions)
    mean = risks.mean(axis=1)
    slope, intercept = np.polyfit(np.log(n_list), np.log(mean), 1)
    return RateStudyResult(list(n_list), [rate_study_depth(n, sigma, side_constant) for n in n_list],
                           [float(v) for v in mean],
                           [_std(row) for row in risks], float(slope), float(intercept))
