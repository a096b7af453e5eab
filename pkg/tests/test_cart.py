"""Occurrence tree: impurities, split search, growth, pruning, routing.

The split-search and pruning tests check the implementation against
independent exhaustive enumerations (every candidate split; every pruned
subtree), which must agree exactly.
"""

import numpy as np
import pytest

from claimtree.cart import (
    Tree,
    TreeHyperparams,
    best_split,
    cost_complexity,
    entropy,
    gini,
    grow,
    misclassification,
    prune,
    to_dot,
    tree_to_dict,
    variable_importance,
)
from claimtree.data import Column, Dataset


def make_dataset(X, occurrence):
    """Wrap a feature matrix and 0/1 labels as a Dataset (response = label)."""
    X = np.asarray(X, dtype=float)
    cols = tuple(
        [Column(f"f{j}", "continuous") for j in range(X.shape[1])] + [Column("y", "response")]
    )
    return Dataset(cols, np.column_stack([X, np.asarray(occurrence, dtype=float)]))


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------


def brute_force_best_split(X, y, impurity="gini"):
    """Plain double loop over every feature and midpoint; same tie rules."""
    imp = {"gini": gini, "misclassification": misclassification, "entropy": entropy}[impurity]
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    n = y.shape[0]
    pos_total = int(y.sum())
    best_score = imp(pos_total / n)
    best = None
    for j in range(X.shape[1]):
        values = np.unique(X[:, j])
        for a, b in zip(values[:-1], values[1:]):
            s = (a + b) / 2.0
            left = X[:, j] < s
            n_left = int(left.sum())
            n_right = n - n_left
            pos_left = int(y[left].sum())
            pos_right = pos_total - pos_left
            score = (n_left * imp(pos_left / n_left) + n_right * imp(pos_right / n_right)) / n
            if score < best_score:
                best_score = score
                best = (j, s)
    return best


def enumerate_pruned_terminal_sets(tree):
    """Every subtree reachable by collapsing internal nodes, as terminal sets."""

    def rec(nid):
        node = tree.nodes[nid]
        if node.is_terminal:
            return [frozenset([nid])]
        options = [frozenset([nid])]
        for lt in rec(2 * nid):
            for rt in rec(2 * nid + 1):
                options.append(lt | rt)
        return options

    return rec(1)


def terminal_set_cost(tree, terminals, alpha):
    loss = sum(tree.nodes[t].misclassified for t in terminals) / tree.root.n_node
    return loss + alpha * len(terminals)


# ---------------------------------------------------------------------------
# impurity functions
# ---------------------------------------------------------------------------


class TestImpurities:
    def test_gini_values(self):
        assert gini(0.5) == 0.5
        assert gini(0.0) == 0.0
        assert gini(0.25) == 0.375

    def test_misclassification_values(self):
        assert misclassification(0.3) == pytest.approx(0.3)
        assert misclassification(0.0) == 0.0

    def test_entropy_values(self):
        assert entropy(0.5) == pytest.approx(np.log(2.0))
        assert entropy(0.0) == 0.0
        assert entropy(1.0) == 0.0

    @pytest.mark.parametrize("fn", [gini, misclassification, entropy])
    def test_domain_errors(self, fn):
        with pytest.raises(ValueError):
            fn(-0.01)
        with pytest.raises(ValueError):
            fn(1.01)

    @pytest.mark.parametrize("fn", [gini, misclassification, entropy])
    def test_zero_iff_pure_and_max_at_half(self, fn):
        assert fn(0.0) == 0.0 and fn(1.0) == 0.0
        grid = np.linspace(0.01, 0.99, 99)
        values = np.array([fn(p) for p in grid])
        assert values.min() > 0.0
        assert fn(0.5) >= values.max()

    @pytest.mark.parametrize("fn", [gini, misclassification, entropy])
    def test_symmetry(self, fn):
        for p in (0.1, 0.25, 0.4):
            assert fn(p) == pytest.approx(fn(1.0 - p), abs=1e-15)


# ---------------------------------------------------------------------------
# split search
# ---------------------------------------------------------------------------


class TestBestSplit:
    def test_perfect_separation(self):
        """x=(1,2,3,4) with labels (0,0,1,1) splits at 2.5 with zero impurity."""
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        y = np.array([0, 0, 1, 1])
        rule = best_split(X, y)
        assert rule.feature == 0
        assert rule.threshold == 2.5

    def test_pure_node_returns_none(self):
        X = np.array([[1.0], [2.0], [3.0]])
        assert best_split(X, np.zeros(3, dtype=int)) is None

    def test_picks_separating_feature(self):
        rng = np.random.default_rng(5)
        noise = rng.normal(size=20)
        sep = np.concatenate([np.zeros(10), np.ones(10)]) * 4 + rng.normal(size=20) * 0.1
        y = np.concatenate([np.zeros(10, dtype=int), np.ones(10, dtype=int)])
        X = np.column_stack([noise, sep])
        rule = best_split(X, y)
        oracle = brute_force_best_split(X, y)
        assert rule.feature == 1
        assert (rule.feature, rule.threshold) == oracle

    @pytest.mark.parametrize("impurity", ["gini", "misclassification"])
    def test_matches_brute_force_exactly(self, impurity):
        """Random nodes up to 200 rows and 5 features: exact agreement."""
        rng = np.random.default_rng(42)
        for trial in range(60):
            n = int(rng.integers(5, 201))
            p = int(rng.integers(1, 6))
            if rng.random() < 0.4:
                X = rng.integers(0, 4, size=(n, p)).astype(float)  # heavy ties
            else:
                X = rng.normal(size=(n, p))
            y = rng.integers(0, 2, size=n)
            rule = best_split(X, y, impurity=impurity)
            oracle = brute_force_best_split(X, y, impurity=impurity)
            if oracle is None:
                assert rule is None
            else:
                assert (rule.feature, rule.threshold) == oracle

    def test_entropy_agrees_with_brute_force(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            X = rng.normal(size=(50, 3))
            y = rng.integers(0, 2, size=50)
            rule = best_split(X, y, impurity="entropy")
            oracle = brute_force_best_split(X, y, impurity="entropy")
            assert (rule.feature, rule.threshold) == oracle

    def test_tie_breaks_to_lowest_feature_then_threshold(self):
        # identical separating columns: the lower feature index must win
        x = np.array([1.0, 2.0, 3.0, 4.0])
        X = np.column_stack([x, x])
        y = np.array([0, 0, 1, 1])
        rule = best_split(X, y)
        assert rule.feature == 0 and rule.threshold == 2.5


# ---------------------------------------------------------------------------
# growth
# ---------------------------------------------------------------------------


class TestGrow:
    def test_maxdepth_one_is_a_stump(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(50, 3))
        y = (X[:, 0] > 0).astype(int)
        ds = make_dataset(X, y)
        tree = grow(ds, TreeHyperparams(maxdepth=1, minsplit=2))
        assert tree.depth() <= 1
        assert len(tree.internal_ids()) <= 1

    def test_all_zero_responses_root_only(self):
        ds = make_dataset(np.arange(10.0)[:, None], np.zeros(10))
        tree = grow(ds)
        assert tree.terminal_ids() == [1]
        assert tree.root.beta_f == 0

    def test_training_misclassification_not_worse_than_root(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(300, 4))
        y = ((X[:, 0] + 0.5 * X[:, 1] + rng.normal(size=300) * 0.5) > 0).astype(int)
        ds = make_dataset(X, y)
        tree = grow(ds, TreeHyperparams(maxdepth=5, minsplit=8))
        root_mis = tree.root.misclassified / tree.root.n_node
        assert tree.training_misclassification() <= root_mis

    def test_simulated_portfolio_beats_root_misclassification(self):
        from claimtree.simulate import SimConfig, simulate

        ds = simulate(SimConfig(n=1500, seed=9)).dataset
        tree = grow(ds, TreeHyperparams(maxdepth=6, minsplit=8))
        root_mis = tree.root.misclassified / tree.root.n_node
        assert tree.training_misclassification() <= root_mis
        assert len(tree.terminal_ids()) > 1

    def test_respects_minsplit(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(100, 2))
        y = rng.integers(0, 2, 100)
        tree = grow(make_dataset(X, y), TreeHyperparams(maxdepth=10, minsplit=25))
        for nid in tree.internal_ids():
            assert tree.nodes[nid].n_node >= 25

    def test_empty_dataset_errors(self):
        ds = make_dataset(np.empty((0, 1)), np.empty(0))
        with pytest.raises(ValueError, match="empty"):
            grow(ds)

    def test_growth_deterministic(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(120, 3))
        y = rng.integers(0, 2, 120)
        ds = make_dataset(X, y)
        t1 = grow(ds, TreeHyperparams(maxdepth=4))
        t2 = grow(ds, TreeHyperparams(maxdepth=4))
        assert tree_to_dict(t1) == tree_to_dict(t2)

    def test_node_counts_add_up(self):
        rng = np.random.default_rng(12)
        X = rng.normal(size=(200, 3))
        y = rng.integers(0, 2, 200)
        tree = grow(make_dataset(X, y), TreeHyperparams(maxdepth=4))
        for nid in tree.internal_ids():
            nd = tree.nodes[nid]
            assert nd.n_node == tree.nodes[2 * nid].n_node + tree.nodes[2 * nid + 1].n_node
            assert nd.n_positive == (
                tree.nodes[2 * nid].n_positive + tree.nodes[2 * nid + 1].n_positive
            )


# ---------------------------------------------------------------------------
# pruning
# ---------------------------------------------------------------------------


def random_tree(rng, n=120, p=3, maxdepth=4):
    X = rng.normal(size=(n, p))
    logit = X[:, 0] + 0.8 * X[:, 1 % p] + rng.normal(size=n)
    y = (logit > 0).astype(int)
    return grow(make_dataset(X, y), TreeHyperparams(maxdepth=maxdepth, minsplit=4))


class TestPrune:
    def test_alpha_zero_identity(self):
        tree = random_tree(np.random.default_rng(0))
        pruned = prune(tree, 0.0)
        assert tree_to_dict(pruned) == tree_to_dict(tree)

    def test_huge_alpha_gives_root(self):
        tree = random_tree(np.random.default_rng(1))
        pruned = prune(tree, 1.0)  # >= total root loss, penalty dominates
        assert pruned.terminal_ids() == [1]

    def test_negative_alpha_rejected(self):
        tree = random_tree(np.random.default_rng(2))
        with pytest.raises(ValueError):
            prune(tree, -0.1)

    def test_matches_subtree_enumeration(self):
        """prune() attains the exact minimum cost over all pruned subtrees."""
        rng = np.random.default_rng(2024)
        for trial in range(12):
            tree = random_tree(rng, n=int(rng.integers(40, 160)))
            n_root = tree.root.n_node
            candidates = enumerate_pruned_terminal_sets(tree)
            for alpha in [0.0, 1e-4, 1e-3, 0.005, 0.01, 0.02, 0.05, 0.1, 0.3, 1.0]:
                pruned = prune(tree, alpha)
                got = cost_complexity(pruned, alpha)
                best = min(terminal_set_cost(tree, ts, alpha) for ts in candidates)
                assert got == best, f"trial {trial}, alpha {alpha}"

    def test_nesting_in_alpha(self):
        rng = np.random.default_rng(77)
        for _ in range(5):
            tree = random_tree(rng)
            alphas = [0.0, 0.002, 0.01, 0.05, 0.2]
            terminal_sets = [set(prune(tree, a).terminal_ids()) for a in alphas]
            for small, large in zip(terminal_sets[:-1], terminal_sets[1:]):
                # larger alpha -> coarser partition: each terminal of the
                # smaller tree is an ancestor-or-equal of some terminal kept before
                assert len(large) <= len(small)

            def covers(coarse, fine):
                ancestors = set()
                for t in fine:
                    node = t
                    while node >= 1:
                        ancestors.add(node)
                        node //= 2
                return coarse <= ancestors

            for small, large in zip(terminal_sets[:-1], terminal_sets[1:]):
                assert covers(large, small)


# ---------------------------------------------------------------------------
# routing and reporting
# ---------------------------------------------------------------------------


class TestClassify:
    def test_root_only(self):
        ds = make_dataset(np.arange(6.0)[:, None], [1, 1, 1, 1, 0, 0])
        tree = grow(ds, TreeHyperparams(maxdepth=1, minsplit=100))
        nid, beta = tree.classify(np.array([3.0]))
        assert nid == 1 and beta == 1

    def test_stump_routing(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        tree = grow(make_dataset(X, [0, 0, 1, 1]), TreeHyperparams(maxdepth=1, minsplit=2))
        nid, beta = tree.classify(np.array([1.0]))
        assert nid == 2 and beta == 0
        nid, beta = tree.classify(np.array([3.7]))
        assert nid == 3 and beta == 1

    def test_partition_of_random_rows(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(300, 3))
        y = (X[:, 0] > 0.2).astype(int)
        tree = grow(make_dataset(X, y), TreeHyperparams(maxdepth=4))
        fresh = rng.normal(size=(1000, 3))
        assigned = tree.classify_batch(fresh)
        assert assigned.shape == (1000,)
        terminals = set(tree.terminal_ids())
        assert set(np.unique(assigned)) <= terminals
        singles = np.array([tree.classify(row)[0] for row in fresh])
        np.testing.assert_array_equal(assigned, singles)

    def test_wrong_width_errors(self):
        tree = grow(make_dataset(np.arange(4.0)[:, None], [0, 0, 1, 1]))
        with pytest.raises(ValueError, match="feature"):
            tree.classify(np.array([1.0, 2.0]))


class TestVariableImportance:
    def test_stump_gives_100_to_split_feature(self):
        rng = np.random.default_rng(10)
        X = np.column_stack([rng.normal(size=40), np.repeat([0.0, 4.0], 20)])
        y = np.repeat([0, 1], 20)
        tree = grow(make_dataset(X, y), TreeHyperparams(maxdepth=1, minsplit=2))
        imp = variable_importance(tree)
        assert imp["f1"] == 100.0
        assert imp["f0"] == 0.0

    def test_unsplit_tree_all_zero(self):
        ds = make_dataset(np.arange(5.0)[:, None], np.zeros(5))
        imp = variable_importance(grow(ds))
        assert set(imp.values()) == {0.0}

    def test_max_is_100(self):
        tree = random_tree(np.random.default_rng(21))
        imp = variable_importance(tree)
        assert max(imp.values()) == pytest.approx(100.0)


class TestDotExport:
    def test_dot_structure(self):
        tree = random_tree(np.random.default_rng(3))
        dot = to_dot(tree)
        assert dot.startswith("digraph")
        assert dot.count("{") == dot.count("}")
        for nid in tree.nodes:
            assert f"  {nid} [label=" in dot
        n_edges = dot.count("->")
        assert n_edges == 2 * len(tree.internal_ids())
