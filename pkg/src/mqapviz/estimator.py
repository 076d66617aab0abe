"""scikit-learn estimator wrapping the full pipeline."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted

from .io import Layout
from .merge import KINDS
from .pipeline import PipelineConfig, stage_knng, stage_layout, stage_mqap


class MQAPViz(TransformerMixin, BaseEstimator):
    """Grid-layout embedding into 2-D via many small bi-objective QAPs.

    A k-NN graph is built on ``X``, an initial layout is fitted (or supplied),
    seed vertices are sampled by degree, each seed's neighborhood is rearranged
    on a local grid by a memetic multi-objective solver, and one representative
    per Pareto front is merged into the final layout.

    Parameters
    ----------
    n_neighbors : int, default=30
        Neighbors per point in the k-NN graph.
    n_trees : int, default=8
        Random-projection trees used to seed the graph.
    n_iter : int, default=5
        Neighbor-of-neighbor refinement rounds.
    sample_fraction : float, default=0.3
        Fraction of vertices used as instance seeds.
    k_star : int, default=5
        Neighbor rank defining the core distance used by the density flow.
    population_size, generations : int, default=32, 200
        Solver population and generation count per instance.
    local_search_budget : int or None, default=None
        Move evaluations per offspring per generation; None means 4 per object.
    representative : {'median', 'top', 'bottom'}, default='median'
        Which merged layout ``embedding_`` refers to.
    init : None, array of shape (n_samples, 2) or str, default=None
        Initial layout. None fits one from the graph; a string is read as a
        layout file.
    n_jobs : int or None, default=None
        Worker processes for instance solving; None reads ``MQAPVIZ_WORKERS``
        and falls back to 1.
    random_state : int, RandomState instance or None, default=0

    Attributes
    ----------
    embedding_ : ndarray of shape (n_samples, 2)
    layouts_ : dict of str -> ndarray of shape (n_samples, 2)
        Merged layouts for every representative kind.
    initial_layout_ : ndarray of shape (n_samples, 2)
    graph_ : KnnGraph
    solutions_ : dict of int -> InstanceSolution
    conflicts_ : dict of str -> int
        Position conflicts resolved while merging each layout.
    """

    def __init__(self, n_neighbors=30, n_trees=8, n_iter=5, leaf_capacity=None,
                 layout_samples=None, rho0=1.0, neg_samples=5, gamma=7.0,
                 sample_fraction=0.3, k_star=5, population_size=32, generations=200,
                 crossover_rate=0.9, mutation_rate=2.0, local_search_budget=None,
                 archive_capacity=64, representative="median", init=None, n_jobs=None,
                 random_state=0):
        self.n_neighbors = n_neighbors
        self.n_trees = n_trees
        self.n_iter = n_iter
        self.leaf_capacity = leaf_capacity
        self.layout_samples = layout_samples
        self.rho0 = rho0
        self.neg_samples = neg_samples
        self.gamma = gamma
        self.sample_fraction = sample_fraction
        self.k_star = k_star
        self.population_size = population_size
        self.generations = generations
        self.crossover_rate = crossover_rate
        self.mutation_rate = mutation_rate
        self.local_search_budget = local_search_budget
        self.archive_capacity = archive_capacity
        self.representative = representative
        self.init = init
        self.n_jobs = n_jobs
        self.random_state = random_state

    def _config(self, seed) -> PipelineConfig:
        return PipelineConfig(
            k=self.n_neighbors, n_trees=self.n_trees, n_iter=self.n_iter,
            leaf_capacity=self.leaf_capacity, layout_T=self.layout_samples, rho0=self.rho0,
            neg_samples=self.neg_samples, gamma=self.gamma, p_s=self.sample_fraction,
            k_star=self.k_star, pop=self.population_size, gens=self.generations,
            crossover_rate=self.crossover_rate, mutation_rate=self.mutation_rate,
            ls_budget=self.local_search_budget, archive_capacity=self.archive_capacity,
            workers=self.n_jobs, seed=seed,
        ).validate()

    def fit(self, X, y=None):
        if self.representative not in KINDS:
            raise ValueError(f"representative must be one of {KINDS}, got {self.representative!r}")
        X = check_array(X, dtype=np.float32, ensure_min_samples=2)
        if isinstance(self.random_state, (int, np.integer)):
            seed = int(self.random_state)
        else:
            seed = int(check_random_state(self.random_state).randint(2**31 - 1))
        cfg = self._config(seed)

        self.graph_ = stage_knng(X, cfg)
        if self.init is None:
            layout0 = stage_layout(self.graph_, cfg)
        elif isinstance(self.init, str):
            layout0 = stage_layout(self.graph_, cfg, self.init)
        else:
            init = check_array(self.init, dtype=np.float64)
            if init.shape != (X.shape[0], 2):
                raise ValueError(f"init must have shape ({X.shape[0]}, 2), got {init.shape}")
            layout0 = Layout.from_array(init)
        self.initial_layout_ = layout0.to_array(X.shape[0])

        result = stage_mqap(self.graph_, layout0, cfg)
        self.solutions_ = result.solutions
        self.conflicts_ = result.conflicts
        self.layouts_ = {k: v.to_array(X.shape[0]) for k, v in result.layouts.items()}
        self.embedding_ = self.layouts_[self.representative]
        self.n_features_in_ = X.shape[1]
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X, y).embedding_

    def transform(self, X):
        """Return the embedding of the training data (out-of-sample points are not supported)."""
        check_is_fitted(self, "embedding_")
        X = check_array(X, dtype=np.float32)
        if X.shape[0] != self.embedding_.shape[0]:
            raise ValueError("MQAPViz can only transform the data it was fitted on")
        return self.embedding_
