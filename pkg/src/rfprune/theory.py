"""Risk bound of median forests, its optimal depth and subsample size, and
checks of the cell side-length second moments behind it.

Notation used throughout::

    beta = 1 - 3/(4d)
    C    = exp(12/(4d - 3))
    bound(k) = 2 sigma2 2^k / n + d L^2 C beta^k

``approx_factor`` selects the dimension factor of the approximation term:
``"d"`` (default) as in ``bound`` above, ``"d^1.5"`` for the ``d^{3/2}``
variant.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .dataset import Dataset
from .median_tree import MedianTreeParams, cell_path, grow_median_tree
from .sampling import derive_stream

LN2 = math.log(2.0)


class SubsampleClampWarning(UserWarning):
    """The asymptotic subsample size exceeded n and was clamped."""


def beta(d: int) -> float:
    return 1.0 - 3.0 / (4.0 * d)


def side_moment_constant(d: int) -> float:
    return math.exp(12.0 / (4.0 * d - 3.0))


def _dim_factor(d: int, approx_factor: str) -> float:
    if approx_factor == "d":
        return float(d)
    if approx_factor == "d^1.5":
        return d ** 1.5
    raise ValueError(f"unknown approximation factor {approx_factor!r}")


def _check(d, n, sigma2, L, k=0.0):
    if d < 1 or n < 1 or sigma2 < 0 or L < 0 or k < 0:
        raise ValueError("need d >= 1, n >= 1, sigma2 >= 0, L >= 0, k >= 0")


@dataclass(frozen=True)
class BoundInputs:
    d: int
    n: float
    sigma2: float
    L: float
    k: float = 0.0

    def __post_init__(self):
        _check(self.d, self.n, self.sigma2, self.L, self.k)


def estimation_term(n, sigma2, k) -> float:
    return 2.0 * sigma2 * 2.0 ** k / n


def approximation_term(d, L, k, approx_factor="d", side_constant=None) -> float:
    c = side_moment_constant(d) if side_constant is None else side_constant
    return _dim_factor(d, approx_factor) * L ** 2 * c * beta(d) ** k


def risk_bound(inputs: BoundInputs, approx_factor: str = "d", side_constant=None) -> float:
    """Estimation plus approximation term of the median-forest risk bound.

    ``side_constant`` replaces ``C`` in the approximation term when given.
    """
    return (estimation_term(inputs.n, inputs.sigma2, inputs.k)
            + approximation_term(inputs.d, inputs.L, inputs.k, approx_factor, side_constant))


def c3_constant(d, sigma2, L, approx_factor="d", side_constant=None) -> float:
    if sigma2 <= 0 or L <= 0:
        raise ValueError("sigma2 and L must be positive")
    lnb = math.log(beta(d))
    log_c = 12.0 / (4.0 * d - 3.0) if side_constant is None else math.log(side_constant)
    # log of -A C ln(beta) / (2 sigma2 ln 2) where A is the dimension factor
    return (math.log(_dim_factor(d, approx_factor)) + 2 * math.log(L) + log_c
            + math.log(-lnb) - math.log(2.0 * sigma2 * LN2))


def optimal_depth(d, n, sigma2, L, approx_factor="d", side_constant=None) -> Tuple[float, int]:
    """Real minimizer of the bound in k and the better of its integer neighbours."""
    _check(d, n, sigma2, L)
    c3 = c3_constant(d, sigma2, L, approx_factor, side_constant)
    k_real = (math.log(n) + c3) / (LN2 - math.log(beta(d)))
    candidates = sorted({max(0, math.floor(k_real)), max(0, math.ceil(k_real))})

    def value(k):
        return risk_bound(BoundInputs(d, n, sigma2, L, k), approx_factor, side_constant)

    return k_real, int(min(candidates, key=lambda k: (value(k), k)))


def subsample_exponent(d) -> float:
    return LN2 / (LN2 - math.log(beta(d)))


def c4_constant(d, sigma2, L, approx_factor="d", closed_form=False) -> float:
    """Prefactor of the optimal subsample size ``C4 n^{ln2/(ln2 - ln beta)}``.

    By default ``C4 = 4 * 2^{C3/(ln2 - ln beta)}``, which is what fixing the
    depth at ``log2(a_n) - 2`` and equating it with the optimal depth gives.
    ``closed_form=True`` returns ``4 (3 L^2 C / (8 sigma2 ln 2))^{exponent}``
    instead, which replaces ``-d ln(beta)`` by its large-d value 3/4.
    """
    if sigma2 <= 0 or L <= 0:
        raise ValueError("sigma2 and L must be positive")
    expo = subsample_exponent(d)
    if closed_form:
        return 4.0 * (3.0 * L ** 2 * side_moment_constant(d) / (8.0 * sigma2 * LN2)) ** expo
    c3 = c3_constant(d, sigma2, L, approx_factor)
    return 4.0 * 2.0 ** (c3 / (LN2 - math.log(beta(d))))


def min_subsample_size(d, n, sigma2, L, approx_factor="d", closed_form=False,
                       clamp=True) -> Tuple[float, float]:
    """Optimal subsample size of fully grown median forests and its exponent.

    Values above ``n`` are clamped to ``n`` with a :class:`SubsampleClampWarning`
    unless ``clamp=False``.
    """
    _check(d, n, sigma2, L)
    expo = subsample_exponent(d)
    a_n = c4_constant(d, sigma2, L, approx_factor, closed_form) * float(n) ** expo
    if clamp and a_n > n:
        warnings.warn(f"optimal subsample size {a_n:.6g} exceeds n={n}; clamped to n",
                      SubsampleClampWarning, stacklevel=2)
        a_n = float(n)
    return a_n, expo


def rate_exponent(d) -> float:
    lnb = math.log(beta(d))
    return lnb / (LN2 - lnb)


def centred_rate_exponent(d) -> float:
    return -3.0 / (4.0 * d * LN2 + 3.0)


@dataclass(frozen=True)
class BoundReport:
    d: int
    n: float
    sigma2: float
    L: float
    beta: float
    C: float
    C3: float
    C4: float
    k_star_real: float
    k_star_int: int
    a_n_min: float
    rate_exponent: float
    centred_rate_exponent: float
    approx_factor: str = "d"

    def bound(self, k) -> float:
        return risk_bound(BoundInputs(self.d, self.n, self.sigma2, self.L, k), self.approx_factor)


def bound_report(d, n, sigma2, L, approx_factor="d") -> BoundReport:
    k_real, k_int = optimal_depth(d, n, sigma2, L, approx_factor)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SubsampleClampWarning)
        a_min, _ = min_subsample_size(d, n, sigma2, L, approx_factor, clamp=False)
    return BoundReport(
        d=d, n=n, sigma2=sigma2, L=L, beta=beta(d), C=side_moment_constant(d),
        C3=c3_constant(d, sigma2, L, approx_factor),
        C4=c4_constant(d, sigma2, L, approx_factor),
        k_star_real=k_real, k_star_int=k_int, a_n_min=a_min,
        rate_exponent=rate_exponent(d), centred_rate_exponent=centred_rate_exponent(d),
        approx_factor=approx_factor)


def check_count_sequence(counts: Sequence[int]) -> List[int]:
    """Validate a chain n_0 >= n_1 >= ... with n_j <= n_{j-1}/2 and n_k >= 1."""
    counts = [int(c) for c in counts]
    if not counts:
        raise ValueError("a count sequence holds at least n_0")
    if counts[-1] < 1:
        raise ValueError("the last count must be at least 1")
    for prev, cur in zip(counts, counts[1:]):
        if 2 * cur > prev:
            raise ValueError(f"count {cur} exceeds half of the previous count {prev}")
    return counts


def exact_side_second_moment(counts: Sequence[int], d: int) -> float:
    """E[V^2] of one cell side given the cell counts along the path.

    Each level multiplies by ``(d-1)/d + (1/d) E[B^2]`` where
    ``B ~ Beta(n_j + 1, n_{j-1} - n_j)`` and
    ``E[B^2] = (n_j+1)(n_j+2) / ((n_{j-1}+1)(n_{j-1}+2))``.
    """
    counts = check_count_sequence(counts)
    out = 1.0
    for prev, cur in zip(counts, counts[1:]):
        m2 = (cur + 1) * (cur + 2) / ((prev + 1) * (prev + 2))
        out *= (d - 1) / d + m2 / d
    return out


@dataclass
class SideMomentEstimate:
    estimate: float
    std_error: float
    exact_mean: float
    exact_std_error: float
    chains: List[Tuple[int, ...]]


def mc_side_second_moment(a_n, k, d, trials, master_seed, query=None,
                          side=0, path="query") -> SideMomentEstimate:
    """Monte-Carlo estimate of E[V^2] for side ``side`` of a median-tree cell.

    Each trial grows a median tree of depth ``k`` on ``a_n`` fresh uniform
    points (trial ``t`` uses stream ``(master_seed, t)``) and measures the
    cell reached by:

    * ``path="query"``: the cell containing ``query`` (default the centre of
      the cube);
    * ``path="random"``: a root-to-leaf path chosen by fair coin flips drawn
      after the tree is grown, independently of the cut positions.

    The realized count chain of each measured cell is kept, together with
    the mean (and its standard error) of :func:`exact_side_second_moment`
    over the chains.
    """
    params = MedianTreeParams(a_n, k)
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if path not in ("query", "random"):
        raise ValueError("path must be 'query' or 'random'")
    x = np.full(d, 0.5) if query is None else np.asarray(query, dtype=np.float64)
    zeros = np.zeros(a_n)
    sq = np.empty(trials)
    exact = np.empty(trials)
    chains = []
    for t in range(trials):
        g = derive_stream(master_seed, t)
        data = Dataset(g.random((a_n, d)), zeros)
        tree = grow_median_tree(data, np.arange(a_n), params, g)
        if path == "query":
            nodes = cell_path(tree, x)
        else:
            nodes = [0]
            for go_right in g.integers(0, 2, size=k):
                node = nodes[-1]
                nodes.append(int(tree.right[node] if go_right else tree.left[node]))
        lo, hi = tree.cell_bounds(nodes[-1])
        sq[t] = (hi[side] - lo[side]) ** 2
        chain = tuple(int(tree.count[v]) for v in nodes)
        chains.append(chain)
        exact[t] = exact_side_second_moment(chain, d)
    se = float(sq.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    ese = float(exact.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return SideMomentEstimate(float(sq.mean()), se, float(exact.mean()), ese, chains)
