"""Scikit-learn style estimators wrapping the pruning pipeline.

``GramFeatures`` turns a feature-map batch into centered Gram columns, the
two lasso estimators fit a linkage matrix between such column blocks, and
``AdaptiveChannelPruner`` drives the sparsity search to a target keep band.
All follow the fit/transform/predict conventions so they compose with
pipelines and grid search.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, MultiOutputMixin, RegressorMixin, TransformerMixin

from .budget import LayerBudget, adaptive_search
from .gram import FeatureBatch, KernelConfig, gram_columns
from .solver import (
    GraphPenalty,
    LassoProblem,
    SolverConfig,
    TreePenalty,
    nnz_columns,
    solve_spg,
)
from .structure import build_graph, build_tree, node_weights
from .validation import check_design_pair, check_feature_array


class GramFeatures(TransformerMixin, BaseEstimator):
    """Transform a (bs, h, w, channels) batch into (bs**2, channels) columns.

    Each output column is the flattened double-centered kernel matrix of one
    channel across the batch.
    """

    def __init__(self, kernel="laplacian", sigma=None, c=0.0, a=1.0):
        self.kernel = kernel
        self.sigma = sigma
        self.c = c
        self.a = a

    def _config(self) -> KernelConfig:
        return KernelConfig(kind=self.kernel, sigma=self.sigma, c=self.c, a=self.a)

    def fit(self, X, y=None):
        check_feature_array(X)
        self._config()
        self.n_channels_in_ = np.asarray(X).shape[3]
        return self

    def transform(self, X) -> np.ndarray:
        batch = FeatureBatch.from_array(check_feature_array(X))
        return gram_columns(batch, self._config())


class _StructuredLassoBase(MultiOutputMixin, RegressorMixin, BaseEstimator):
    def __init__(self, alpha=1.0, tol=1e-5, max_iter=2000, smoothing="auto",
                 zero_eps=None):
        self.alpha = alpha
        self.tol = tol
        self.max_iter = max_iter
        self.smoothing = smoothing
        self.zero_eps = zero_eps

    def _solver_config(self) -> SolverConfig:
        return SolverConfig(
            tol=self.tol,
            max_iter=self.max_iter,
            smoothing_temperature=self.smoothing,
            zero_eps=self.zero_eps,
        )

    def _build_penalty(self, Y):
        raise NotImplementedError

    def fit(self, X, Y):
        X, Y = check_design_pair(X, Y)
        cfg = self._solver_config()
        problem = LassoProblem(X, Y, self._build_penalty(Y))
        solution = solve_spg(problem, cfg)
        self.coef_ = solution.beta
        self.n_iter_ = solution.iterations
        self.converged_ = solution.converged
        self.objective_trace_ = solution.objective_trace
        n_kept, flags = nnz_columns(solution.beta, cfg.resolve_zero_eps(solution.beta))
        self.support_ = flags
        self.n_kept_ = n_kept
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.coef_

    def get_support(self) -> np.ndarray:
        return self.support_


class GraphFusedLasso(_StructuredLassoBase):
    """Multi-response lasso with correlation-weighted fusion between columns.

    The fusion graph links response columns whose |Pearson correlation|
    exceeds ``corr_threshold``; each edge pulls the two coefficient columns
    together (or apart, for negative correlation). ``mu=None`` ties the
    fusion weight to ``0.5 * alpha``.
    """

    def __init__(self, alpha=1.0, mu=None, corr_threshold=0.6, tol=1e-5,
                 max_iter=2000, smoothing="auto", zero_eps=None):
        super().__init__(alpha=alpha, tol=tol, max_iter=max_iter,
                         smoothing=smoothing, zero_eps=zero_eps)
        self.mu = mu
        self.corr_threshold = corr_threshold

    def _build_penalty(self, Y):
        self.graph_ = build_graph(Y, th=self.corr_threshold)
        mu = 0.5 * self.alpha if self.mu is None else self.mu
        return GraphPenalty(graph=self.graph_, lam=self.alpha, mu=mu)


class TreeGuidedLasso(_StructuredLassoBase):
    """Multi-response lasso with overlapping group weights from a cluster tree.

    Responses are agglomerated under correlation distance; every tree node
    contributes a weighted row-wise group-l2 term over its member columns,
    singleton leaves acting as a weighted l1.
    """

    def __init__(self, alpha=1.0, linkage="average", node_height="dissimilarity",
                 tol=1e-5, max_iter=2000, smoothing="auto", zero_eps=None):
        super().__init__(alpha=alpha, tol=tol, max_iter=max_iter,
                         smoothing=smoothing, zero_eps=zero_eps)
        self.linkage = linkage
        self.node_height = node_height

    def _build_penalty(self, Y):
        self.tree_ = build_tree(Y, linkage=self.linkage,
                                node_height=self.node_height)
        self.node_weights_ = node_weights(self.tree_)
        return TreePenalty(tree=self.tree_, weights=self.node_weights_,
                           lam=self.alpha)


class AdaptiveChannelPruner(BaseEstimator):
    """Select response columns at a target keep fraction via the lambda search.

    Fits either structured lasso repeatedly, bisecting the regularization
    weight in log space until the surviving-column fraction lands inside
    ``[keep_lower, keep_upper]``. ``support_`` then flags the channels to
    keep.
    """

    def __init__(self, structure="tree", keep_lower=0.4, keep_upper=0.5,
                 mu=None, corr_threshold=0.6, linkage="average",
                 node_height="dissimilarity", tol=1e-5, max_iter=2000,
                 smoothing="auto", zero_eps=None, max_search_iter=60):
        self.structure = structure
        self.keep_lower = keep_lower
        self.keep_upper = keep_upper
        self.mu = mu
        self.corr_threshold = corr_threshold
        self.linkage = linkage
        self.node_height = node_height
        self.tol = tol
        self.max_iter = max_iter
        self.smoothing = smoothing
        self.zero_eps = zero_eps
        self.max_search_iter = max_search_iter

    def fit(self, X, Y, layer_spec=None, metric="channels"):
        X, Y = check_design_pair(X, Y)
        if self.structure == "graph":
            graph = build_graph(Y, th=self.corr_threshold)

            def penalty_builder(lam):
                mu = 0.5 * lam if self.mu is None else self.mu
                return GraphPenalty(graph=graph, lam=lam, mu=mu)

            self.graph_ = graph
        elif self.structure == "tree":
            tree = build_tree(Y, linkage=self.linkage, node_height=self.node_height)
            weights = node_weights(tree)

            def penalty_builder(lam):
                return TreePenalty(tree=tree, weights=weights, lam=lam)

            self.tree_ = tree
            self.node_weights_ = weights
        else:
            raise ValueError(f"unknown structure {self.structure!r}")

        budget = LayerBudget(
            e_lower=self.keep_lower, e_upper=self.keep_upper, metric=metric,
            max_search_iter=self.max_search_iter,
        )
        cfg = SolverConfig(tol=self.tol, max_iter=self.max_iter,
                           smoothing_temperature=self.smoothing,
                           zero_eps=self.zero_eps)
        result = adaptive_search(X, Y, penalty_builder, budget, cfg,
                                 layer_spec=layer_spec)
        self.result_ = result
        self.support_ = result.survivors
        self.coef_ = result.beta
        self.lambda_ = result.lambda_star
        self.fraction_ = result.retained_fraction
        self.feasible_ = result.feasible
        self.n_probes_ = result.probes
        self.n_features_in_ = X.shape[1]
        return self

    def get_support(self) -> np.ndarray:
        return self.support_
