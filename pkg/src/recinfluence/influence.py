"""Leave-one-out influence measurement over recommendation lists.

A user's influence is the summed Jaccard distance between every other
user's top-l list with and without that user's ratings in the training
data. The module ships two routes to the same number: a naive oracle that
retrains everything from scratch per removal, and a parallel engine that
reuses whatever survives a removal unchanged (pairwise similarities for the
neighborhood model) while retraining deterministically where nothing does
(the factorization model). The two routes agree bit for bit.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import RatingsDataset, drop_user
from .recommender import (ModelConfig, TrainingError, continue_nmf,
                          top_items, train_knn)
from .similarity import user_similarity_matrix

DEFAULT_THETA_GRID = tuple(round(0.1 * t, 1) for t in range(1, 10))


def jaccard_distance(a, b) -> float:
    """1 - |a & b| / |a | b| over item sets; two empty sets give 0."""
    a, b = set(a), set(b)
    if not a and not b:
        return 0.0
    return 1.0 - len(a & b) / len(a | b)


@dataclass(frozen=True, eq=False)
class InfluenceReport:
    """Per-user influence scores plus the run's provenance."""

    config: ModelConfig
    l: int
    influence: np.ndarray          # (n,), NaN where the removal job failed
    ranking: np.ndarray            # all users, influence desc, index asc
    failures: tuple[int, ...]

    @property
    def n_users(self) -> int:
        return len(self.influence)

    def to_meta(self) -> dict:
        return {"model": self.config.to_dict(), "l": self.l,
                "failures": list(self.failures)}


@dataclass(frozen=True)
class GroupInfluenceCurve:
    """Fraction of users whose list is moved at least theta by a top set."""

    top_set_size: int
    thresholds: tuple[float, ...]
    influenced_fraction: tuple[float, ...]


def _rank_users(influence: np.ndarray) -> np.ndarray:
    key = np.where(np.isnan(influence), -np.inf, influence)
    return np.lexsort((np.arange(len(influence)), -key))


class LeaveOneOutEngine:
    """Shared state for a batch of single-user removals.

    The full-data model, its recommendation lists, and (for the
    neighborhood model) the pairwise similarity matrix are computed once and
    shared read-only across jobs; each job owns its private reduced model.
    Removal keeps the item axis, so reduced-model lists come back in the
    original item index space.
    """

    def __init__(self, ds: RatingsDataset, config: ModelConfig, l: int,
                 warm_start: bool = False, warm_iters: int = 20):
        self.ds = ds
        self.config = config
        self.l = l
        self.warm_start = warm_start
        self.warm_iters = warm_iters
        if config.algorithm == "knn":
            self.sim = user_similarity_matrix(ds, kind=config.similarity)
            self.full_model = train_knn(ds, config.k, config.similarity,
                                        sim_matrix=self.sim)
        else:
            self.sim = None
            self.full_model = config.train(ds)
        self.full_lists = [frozenset(int(i) for i in
                                     top_items(self.full_model, u, l))
                           for u in range(ds.n_users)]

    def _reduced_model(self, u: int, reduced: RatingsDataset):
        if self.config.algorithm == "knn":
            keep = np.delete(np.arange(self.ds.n_users), u)
            sim_sub = self.sim[np.ix_(keep, keep)]
            return train_knn(reduced, self.config.k, self.config.similarity,
                             sim_matrix=sim_sub)
        if self.warm_start:
            p0 = np.delete(self.full_model.p, u, axis=0)
            return continue_nmf(reduced, p0, self.full_model.q,
                                self.config.seed, self.warm_iters,
                                masked=self.config.masked)
        return self.config.train(reduced)

    def distances_without(self, u: int) -> np.ndarray:
        """Jaccard distance of each other user's list after removing u.

        Entry v is the distance for original user v; entry u is 0.
        """
        reduced = drop_user(self.ds, u)
        model = self._reduced_model(u, reduced)
        dists = np.zeros(self.ds.n_users)
        for v_red in range(reduced.n_users):
            v = v_red if v_red < u else v_red + 1
            after = frozenset(int(i) for i in top_items(model, v_red, self.l))
            dists[v] = jaccard_distance(self.full_lists[v], after)
        return dists

    def influence_of(self, u: int) -> float:
        return float(np.sum(self.distances_without(u)))


def influence_oracle(ds: RatingsDataset, config: ModelConfig, u: int,
                     l: int) -> float:
    """Naive reference: retrain everything from scratch and sum distances.

    Trains the full model, removes user ``u``, retrains on the reduced data
    with the same seed and hyperparameters, and sums the per-user Jaccard
    distances between the before and after top-l lists.
    """
    if not 0 <= u < ds.n_users:
        raise ValueError(f"user index {u} out of range")
    full_model = config.train(ds)
    reduced = drop_user(ds, u)
    reduced_model = config.train(reduced)
    # Same n-length layout and reduction as the engine, so the two routes
    # agree bit for bit.
    dists = np.zeros(ds.n_users)
    for v_red in range(reduced.n_users):
        v = v_red if v_red < u else v_red + 1
        before = frozenset(int(i) for i in top_items(full_model, v, l))
        after = frozenset(int(i) for i in top_items(reduced_model, v_red, l))
        dists[v] = jaccard_distance(before, after)
    return float(np.sum(dists))


def influence_all(ds: RatingsDataset, config: ModelConfig, l: int,
                  workers: int = 1, warm_start: bool = False,
                  warm_iters: int = 20) -> InfluenceReport:
    """Influence of every user, with up to ``workers`` removals in flight.

    A failed removal (diverging retrain) marks that user's influence NaN
    instead of aborting the batch. Output is independent of the worker
    count and of scheduling order.
    """
    engine = LeaveOneOutEngine(ds, config, l, warm_start=warm_start,
                               warm_iters=warm_iters)
    n = ds.n_users
    influence = np.full(n, np.nan)
    failures = []
    if workers <= 1:
        for u in range(n):
            try:
                influence[u] = engine.influence_of(u)
            except TrainingError:
                failures.append(u)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {u: pool.submit(engine.influence_of, u)
                       for u in range(n)}
        for u in range(n):
            try:
                influence[u] = futures[u].result()
            except TrainingError:
                failures.append(u)
    influence.flags.writeable = False
    return InfluenceReport(config, l, influence, _rank_users(influence),
                           tuple(failures))


def group_influence(ds: RatingsDataset, config: ModelConfig,
                    report: InfluenceReport, top_k: int,
                    thresholds=DEFAULT_THETA_GRID, l: int | None = None,
                    warm_start: bool = False,
                    warm_iters: int = 20) -> GroupInfluenceCurve:
    """Fraction of users influenced by the top-``top_k`` set, per threshold.

    A user v counts (once) when at least one top user's removal moves v's
    list by Jaccard distance >= theta; the fraction is over all users.
    """
    if not 1 <= top_k <= ds.n_users:
        raise ValueError(f"top_k {top_k} out of range [1, {ds.n_users}]")
    l = report.l if l is None else l
    engine = LeaveOneOutEngine(ds, config, l, warm_start=warm_start,
                               warm_iters=warm_iters)
    top = report.ranking[:top_k]
    best = np.zeros(ds.n_users)
    for u in top:
        dists = engine.distances_without(int(u))
        np.maximum(best, dists, out=best)
    fractions = tuple(float(np.count_nonzero(best >= theta) / ds.n_users)
                      for theta in thresholds)
    return GroupInfluenceCurve(top_k, tuple(float(t) for t in thresholds),
                               fractions)


def prediction_shift_oracle(ds: RatingsDataset, config: ModelConfig,
                            u: int) -> float:
    """Mean absolute change in predicted scores caused by removing ``u``.

    Averages |score(with u) - score(without u)| over every other user and
    every item outside that user's profile. This is the score-level
    baseline that list-level influence deliberately ignores: shifts on
    items that never crack a top-l list move this number but not
    list influence.
    """
    if not 0 <= u < ds.n_users:
        raise ValueError(f"user index {u} out of range")
    full_model = config.train(ds)
    reduced = drop_user(ds, u)
    reduced_model = config.train(reduced)
    _, mask = ds.dense
    total = 0.0
    count = 0
    for v_red in range(reduced.n_users):
        v = v_red if v_red < u else v_red + 1
        unrated = ~mask[v]
        before = full_model.scores_for(v)[unrated]
        after = reduced_model.scores_for(v_red)[unrated]
        total += float(np.sum(np.abs(before - after)))
        count += int(np.count_nonzero(unrated))
    return total / count if count else 0.0
