import numpy as np
import pytest
from sklearn.base import clone

from gramprune.estimators import (
    AdaptiveChannelPruner,
    GramFeatures,
    GraphFusedLasso,
    TreeGuidedLasso,
)


def planted_problem(rng, n=60, j=8, k=10, active=4, noise=0.02):
    x = rng.normal(size=(n, j))
    beta = np.zeros((j, k))
    cols = rng.choice(k, size=active, replace=False)
    beta[:, cols] = rng.normal(size=(j, active))
    y = x @ beta + noise * rng.normal(size=(n, k))
    return x, y, set(int(c) for c in cols)


class TestGramFeatures:
    def test_transform_shape_and_centering(self):
        rng = np.random.default_rng(0)
        batch = rng.normal(size=(6, 4, 4, 3))
        cols = GramFeatures(kernel="linear").fit_transform(batch)
        assert cols.shape == (36, 3)
        for ch in range(3):
            k = cols[:, ch].reshape(6, 6)
            assert abs(k.sum()) < 1e-8 * max(1.0, np.abs(k).max())

    def test_kernel_params_passed_through(self):
        rng = np.random.default_rng(1)
        batch = rng.normal(size=(4, 2, 2, 2))
        a = GramFeatures(kernel="gaussian", sigma=1.0).fit_transform(batch)
        b = GramFeatures(kernel="gaussian", sigma=5.0).fit_transform(batch)
        assert not np.allclose(a, b)

    def test_sklearn_clone(self):
        est = GramFeatures(kernel="laplacian", sigma=2.0)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_bad_input_rejected(self):
        with pytest.raises(ValueError):
            GramFeatures().fit_transform(np.ones((3, 4)))


class TestStructuredLassoEstimators:
    @pytest.mark.parametrize("cls", [GraphFusedLasso, TreeGuidedLasso])
    def test_fit_sets_attributes(self, cls):
        rng = np.random.default_rng(2)
        x, y, _ = planted_problem(rng)
        est = cls(alpha=0.5, max_iter=500).fit(x, y)
        assert est.coef_.shape == (8, 10)
        assert est.support_.shape == (10,)
        assert est.n_iter_ >= 1
        assert est.predict(x).shape == y.shape

    @pytest.mark.parametrize("cls", [GraphFusedLasso, TreeGuidedLasso])
    def test_strong_alpha_prunes_planted_inactive_columns(self, cls):
        rng = np.random.default_rng(3)
        x, y, active = planted_problem(rng)
        lam = 0.15 * float(np.max(np.abs(x.T @ y)))
        est = cls(alpha=lam, max_iter=3000, smoothing=1e-4, tol=1e-9).fit(x, y)
        kept = set(np.flatnonzero(est.support_))
        assert active <= kept
        assert len(kept) < 10

    def test_graph_estimator_builds_graph(self):
        rng = np.random.default_rng(4)
        col = rng.normal(size=50)
        y = np.stack([col, col * 2, rng.normal(size=50)], axis=1)
        x = rng.normal(size=(50, 4))
        est = GraphFusedLasso(alpha=0.1, max_iter=50).fit(x, y)
        assert any((l, m) == (0, 1) for l, m, _ in est.graph_.edges)

    def test_tree_estimator_builds_tree(self):
        rng = np.random.default_rng(5)
        x, y, _ = planted_problem(rng)
        est = TreeGuidedLasso(alpha=0.1, max_iter=50).fit(x, y)
        assert est.tree_.n_leaves == 10
        assert len(est.node_weights_) == 19

    def test_get_set_params_round_trip(self):
        est = TreeGuidedLasso(alpha=2.0, linkage="complete")
        params = est.get_params()
        est2 = TreeGuidedLasso().set_params(**params)
        assert est2.alpha == 2.0
        assert est2.linkage == "complete"


class TestAdaptiveChannelPruner:
    @pytest.mark.parametrize("structure", ["graph", "tree"])
    def test_lands_in_band_and_recovers_planted(self, structure):
        rng = np.random.default_rng(6)
        x, y, active = planted_problem(rng, k=10, active=4)
        est = AdaptiveChannelPruner(
            structure=structure, keep_lower=0.4, keep_upper=0.5,
            tol=1e-8, max_iter=2000, smoothing=1e-3,
        ).fit(x, y)
        assert est.feasible_
        assert 4 <= est.support_.sum() <= 5
        assert active <= set(np.flatnonzero(est.support_))

    def test_unknown_structure(self):
        rng = np.random.default_rng(7)
        x, y, _ = planted_problem(rng)
        with pytest.raises(ValueError):
            AdaptiveChannelPruner(structure="ring").fit(x, y)

    def test_clone_before_fit(self):
        est = AdaptiveChannelPruner(structure="graph", keep_lower=0.2,
                                    keep_upper=0.3)
        assert clone(est).get_params()["keep_lower"] == 0.2
