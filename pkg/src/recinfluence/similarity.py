"""Pairwise similarity and distance kernels over sparse rating profiles.

Pearson runs over co-rated items only, with a significance shrink of
min(co_rated, SHRINK_COUNT) / SHRINK_COUNT; cosine runs over the raw sparse
vectors. Pairs with no co-rated items, and degenerate (zero-variance)
correlations, score 0.

All kernels reduce row-by-row with elementwise products and np.sum so a
pair's value depends only on that pair's profiles. Leave-one-out retrains
reuse cached pairwise values, and this keeps the reuse bitwise identical to
a from-scratch recomputation.
"""

from __future__ import annotations

import numpy as np

from .data import RatingsDataset

SHRINK_COUNT = 50
_DEGENERATE = 1e-12

SIMILARITIES = ("pearson", "cosine")


def _pearson_rows(ratings: np.ndarray, mask: np.ndarray, shrink: int | None):
    n = ratings.shape[0]
    sims = np.zeros((n, n))
    sq = ratings * ratings
    for u in range(n):
        co = mask[u] & mask
        nc = co.sum(axis=1)
        ru = ratings[u]
        su = np.sum(ru * co, axis=1)
        sv = np.sum(ratings * co, axis=1)
        suu = np.sum((ru * ru) * co, axis=1)
        svv = np.sum(sq * co, axis=1)
        suv = np.sum((ru * ratings) * co, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cov = suv - su * sv / nc
            var_u = np.maximum(suu - su * su / nc, 0.0)
            var_v = np.maximum(svv - sv * sv / nc, 0.0)
            denom = np.sqrt(var_u * var_v)
        row = np.zeros(n)
        ok = (nc > 0) & (denom > _DEGENERATE)
        row[ok] = cov[ok] / denom[ok]
        np.clip(row, -1.0, 1.0, out=row)
        if shrink:
            row *= np.minimum(nc, shrink) / shrink
        sims[u] = row
    return sims


def _cosine_rows(ratings: np.ndarray):
    n = ratings.shape[0]
    sims = np.zeros((n, n))
    norms = np.sqrt(np.sum(ratings * ratings, axis=1))
    for u in range(n):
        num = np.sum(ratings[u] * ratings, axis=1)
        denom = norms[u] * norms
        row = np.zeros(n)
        ok = denom > 0
        row[ok] = num[ok] / denom[ok]
        np.clip(row, -1.0, 1.0, out=row)
        sims[u] = row
    return sims


def user_similarity_matrix(ds: RatingsDataset, kind: str = "pearson",
                           shrink: int | None = SHRINK_COUNT,
                           zero_diagonal: bool = True) -> np.ndarray:
    """n x n user similarity matrix; self-similarity zeroed by default."""
    if kind not in SIMILARITIES:
        raise ValueError(f"unknown similarity {kind!r}")
    ratings, mask = ds.dense
    if kind == "pearson":
        sims = _pearson_rows(ratings, mask, shrink)
    else:
        sims = _cosine_rows(ratings)
    if zero_diagonal:
        np.fill_diagonal(sims, 0.0)
    return sims


def user_distance_matrix(ds: RatingsDataset, kind: str = "cosine") -> np.ndarray:
    """n x n user distance matrix: 1 - unshrunk similarity, zero diagonal."""
    sims = user_similarity_matrix(ds, kind=kind, shrink=None,
                                  zero_diagonal=False)
    dist = 1.0 - sims
    np.fill_diagonal(dist, 0.0)
    return dist


def item_distance_submatrix(ds: RatingsDataset, items: np.ndarray,
                            kind: str = "cosine") -> np.ndarray:
    """Pairwise distances between the rating columns of ``items``."""
    ratings, mask = ds.dense
    cols = ratings[:, items]
    if kind == "cosine":
        norms = np.sqrt(np.sum(cols * cols, axis=0))
        num = cols.T @ cols
        denom = np.outer(norms, norms)
        sims = np.zeros_like(num)
        ok = denom > 0
        sims[ok] = num[ok] / denom[ok]
        np.clip(sims, -1.0, 1.0, out=sims)
    elif kind == "pearson":
        sub = ds.dense[1][:, items]
        t = len(items)
        sims = np.zeros((t, t))
        for a in range(t):
            co = sub[:, a:a + 1] & sub
            nc = co.sum(axis=0)
            ra = cols[:, a:a + 1]
            sa = np.sum(ra * co, axis=0)
            sb = np.sum(cols * co, axis=0)
            saa = np.sum((ra * ra) * co, axis=0)
            sbb = np.sum((cols * cols) * co, axis=0)
            sab = np.sum((ra * cols) * co, axis=0)
            with np.errstate(invalid="ignore", divide="ignore"):
                cov = sab - sa * sb / nc
                var_a = np.maximum(saa - sa * sa / nc, 0.0)
                var_b = np.maximum(sbb - sb * sb / nc, 0.0)
                denom = np.sqrt(var_a * var_b)
            row = np.zeros(t)
            ok = (nc > 0) & (denom > _DEGENERATE)
            row[ok] = cov[ok] / denom[ok]
            np.clip(row, -1.0, 1.0, out=row)
            sims[a] = row
    else:
        raise ValueError(f"unknown item distance {kind!r}")
    dist = 1.0 - sims
    np.fill_diagonal(dist, 0.0)
    return dist
