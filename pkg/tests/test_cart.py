import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_split, random_instance, sse
from rfprune.cart import LEAF, RegressionTree, best_split, grow_cart_tree, sum_of_squares
from rfprune.dataset import Dataset, generate_model, model_spec
from rfprune.sampling import derive_stream


def dataset(x, y):
    return Dataset(np.asarray(x, dtype=float), np.asarray(y, dtype=float))


def test_best_split_simple_step():
    x = np.array([[0.1], [0.2], [0.8], [0.9]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    s = best_split(x, y, [0])
    assert s.dimension == 0
    assert s.threshold == pytest.approx(0.5)
    assert s.gain == pytest.approx(1.0)


def test_best_split_prefers_informative_dimension():
    x = np.array([[0.1, 0.9], [0.2, 0.1], [0.8, 0.8], [0.9, 0.2]])
    y = np.array([0.0, 0.0, 5.0, 5.0])
    assert best_split(x, y, [0, 1]).dimension == 0
    assert best_split(x, y, [1]).dimension == 1


def test_tie_goes_to_lowest_dimension_then_threshold():
    # identical columns: same gain in both dimensions
    x = np.array([[0.1, 0.1], [0.4, 0.4], [0.6, 0.6], [0.9, 0.9]])
    y = np.array([1.0, 0.0, 0.0, 1.0])
    s = best_split(x, y, [1, 0])
    assert s.dimension == 0
    # thresholds 0.25 and 0.75 give the same gain; the lower wins
    assert s.threshold == pytest.approx(0.25)


def test_constant_response_splits_at_first_threshold():
    x = np.array([[0.3], [0.1], [0.2]])
    s = best_split(x, np.ones(3), [0])
    assert s.gain == 0.0 and s.threshold == pytest.approx(0.15)


def test_constant_features_give_none():
    assert best_split(np.full((4, 2), 0.5), np.arange(4.0), [0, 1]) is None


def test_needs_two_points():
    with pytest.raises(ValueError):
        best_split(np.array([[0.5]]), np.array([1.0]), [0])


def test_gain_is_the_sse_decrease():
    g = np.random.default_rng(0)
    x, y = g.random((30, 3)), g.standard_normal(30)
    s = best_split(x, y, [0, 1, 2])
    mask = x[:, s.dimension] <= s.threshold
    assert s.gain == pytest.approx(sse(y) - sse(y[mask]) - sse(y[~mask]), rel=1e-9)


def test_matches_brute_force_oracle():
    g = np.random.default_rng(2024)
    for _ in range(300):
        x, y, dims = random_instance(g)
        got = best_split(x, y, dims)
        want = brute_force_split(x, y, dims)
        if want is None:
            assert got is None
            continue
        assert (got.dimension, got.threshold) == want[:2]
        assert got.gain == pytest.approx(want[2], rel=1e-9, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(-3, 3)), min_size=2, max_size=20))
def test_oracle_on_lattice(points):
    x = np.array([[a / 3.0] for a, _ in points])
    y = np.array([float(b) for _, b in points])
    got = best_split(x, y, [0])
    want = brute_force_split(x, y, [0])
    if want is None:
        assert got is None
    else:
        assert (got.dimension, got.threshold) == want[:2]
        assert got.gain == pytest.approx(want[2], abs=1e-9)


def small_problem(seed=0, n=120, model=3):
    return generate_model(model_spec(model), n, seed)


def test_nodesize_regime_leaf_sizes():
    data = small_problem()
    tree = grow_cart_tree(data, np.arange(data.n), mtry=34, nodesize=5, maxnodes=None,
                          g=derive_stream(1, 0))
    for leaf in tree.leaves:
        c = tree.count[leaf]
        parent = tree.parent[leaf]
        assert c >= 1
        if parent >= 0:
            assert tree.count[parent] >= 5
    # leaves partition the sample
    assert tree.count[tree.leaves].sum() == data.n


def test_nodesize_one_interpolates_distinct_points():
    data = small_problem(n=40)
    tree = grow_cart_tree(data, np.arange(data.n), mtry=data.d, nodesize=1, maxnodes=None,
                          g=derive_stream(2, 0))
    assert np.allclose(tree.predict(data.features), data.responses)


def test_leaf_means_and_training_risk():
    data = small_problem()
    tree = grow_cart_tree(data, np.arange(data.n), mtry=10, nodesize=20, maxnodes=None,
                          g=derive_stream(3, 0))
    leaf_of = tree.apply(data.features)
    for leaf in tree.leaves:
        rows = leaf_of == leaf
        assert tree.value[leaf] == pytest.approx(data.responses[rows].mean())
    # training SSE plus all split gains equals the root SSE
    internal = np.flatnonzero(tree.feature != LEAF)
    leaf_sse = sum(sse(data.responses[leaf_of == v]) for v in tree.leaves)
    # each split removes n_l (mean_l - mean)^2 + n_r (mean_r - mean)^2
    gains = 0.0
    for v in internal:
        l, r = tree.left[v], tree.right[v]
        gains += (tree.count[l] * (tree.value[l] - tree.value[v]) ** 2
                  + tree.count[r] * (tree.value[r] - tree.value[v]) ** 2)
    assert leaf_sse + gains == pytest.approx(sum_of_squares(data.responses), rel=1e-9)


def test_cells_partition_the_cube():
    data = small_problem()
    tree = grow_cart_tree(data, np.arange(data.n), mtry=5, nodesize=10, maxnodes=None,
                          g=derive_stream(4, 0))
    probe = derive_stream(4, 1).random((500, data.d))
    leaf_of = tree.apply(probe)
    for i in range(0, 500, 25):
        inside = []
        for leaf in tree.leaves:
            lo, hi = tree.cell_bounds(leaf)
            # cells are (lo, hi] except at the lower face of the cube
            if np.all((probe[i] > lo) | (lo == 0.0)) and np.all(probe[i] <= hi):
                inside.append(leaf)
        assert inside == [leaf_of[i]]


def test_best_first_respects_budget_and_prefix():
    data = small_problem()
    big = grow_cart_tree(data, np.arange(data.n), mtry=10, nodesize=5, maxnodes=30,
                         g=derive_stream(5, 0))
    assert big.n_leaves <= 30
    for m in (2, 5, 17, 30):
        small = grow_cart_tree(data, np.arange(data.n), mtry=10, nodesize=5, maxnodes=m,
                               g=derive_stream(5, 0))
        assert small.n_leaves <= m
        assert big.prune(m) == small


def test_best_first_splits_in_gain_order_at_the_root():
    data = small_problem()
    tree = grow_cart_tree(data, np.arange(data.n), mtry=data.d, nodesize=5, maxnodes=2,
                          g=derive_stream(6, 0))
    s = best_split(data.features, data.responses, range(data.d))
    assert (tree.feature[0], tree.threshold[0]) == (s.dimension, s.threshold)


def test_prune_needs_best_first():
    data = small_problem()
    tree = grow_cart_tree(data, np.arange(data.n), mtry=5, nodesize=5, maxnodes=None,
                          g=derive_stream(7, 0))
    with pytest.raises(ValueError):
        tree.prune(3)


def test_text_round_trip():
    data = small_problem()
    tree = grow_cart_tree(data, np.arange(data.n), mtry=5, nodesize=5, maxnodes=12,
                          g=derive_stream(8, 0))
    back = RegressionTree.from_text(tree.to_text(), data.d, "cart", tree.growth)
    assert back == tree
    probe = derive_stream(8, 1).random((50, data.d))
    assert np.array_equal(back.predict(probe), tree.predict(probe))


def test_queries_outside_the_cube_are_rejected():
    data = small_problem()
    tree = grow_cart_tree(data, np.arange(data.n), mtry=5, nodesize=50, maxnodes=None,
                          g=derive_stream(9, 0))
    with pytest.raises(ValueError):
        tree.predict(np.full((1, data.d), 1.5))
    with pytest.raises(ValueError):
        tree.predict(np.full((1, data.d + 1), 0.5))


def test_repeated_indices_count_with_multiplicity():
    data = dataset([[0.1], [0.9]], [0.0, 3.0])
    tree = grow_cart_tree(data, np.array([0, 0, 0, 1]), mtry=1, nodesize=10, maxnodes=None,
                          g=derive_stream(0, 0))
    assert tree.n_nodes == 1
    assert tree.value[0] == pytest.approx(0.75)
