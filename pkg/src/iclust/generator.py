"""Sampling synthetic datasets from the hierarchical mixture model.

The draw order follows the model hierarchy: mixture weights from a symmetric
Dirichlet, allocations from the weights, one precision matrix per component
from a Wishart (or Gamma in one dimension), component centres conditionally
on their own precision, then the observations. Components that end up with
zero observations are dropped and the labels compacted, so the returned
allocation is always compact with K no larger than requested.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Allocation, DataSet, MvHyperParams, UvHyperParams, validate_hyperparams
from .optimizer import relabel_compact


@dataclass(frozen=True)
class GeneratedSample:
    """A dataset plus the latent quantities it was generated from.

    weights, centres and precisions cover the realised components only, in
    the order the components first appear in the allocation; the weights are
    renormalised after empty components are dropped so they stay a simplex.
    """

    data: DataSet
    allocation: Allocation
    weights: np.ndarray
    centres: np.ndarray
    precisions: np.ndarray


def _wishart_root(nu: float, scale_root: np.ndarray, rng) -> np.ndarray:
    """Lower-triangular factor W with W W^t distributed Wishart(nu, scale).

    Bartlett construction: chi-square (gamma) draws on the diagonal and
    standard normals below it, premultiplied by a square root of the scale
    matrix. Valid for any nu > b - 1, integer or not.
    """
    b = scale_root.shape[0]
    a = np.zeros((b, b))
    for i in range(b):
        a[i, i] = np.sqrt(rng.gamma(shape=0.5 * (nu - i), scale=2.0))
        for j in range(i):
            a[i, j] = rng.standard_normal()
    return scale_root @ a


def _compact_sample(data_values, z_raw, lam, centres, precisions, requested_k):
    realised = np.unique(z_raw)
    if realised.size == requested_k:
        alloc = Allocation(z_raw)
        order = np.arange(requested_k)
    else:
        alloc = relabel_compact(z_raw)
        # component parameters follow the first-appearance relabelling
        uniq, first = np.unique(z_raw, return_index=True)
        order = uniq[np.argsort(first, kind="stable")] - 1
    weights = lam[order]
    weights = weights / weights.sum()
    return GeneratedSample(
        data=DataSet(data_values),
        allocation=alloc,
        weights=weights,
        centres=centres[order],
        precisions=precisions[order],
    )


def sample_dataset(n: int, K: int, params: MvHyperParams, rng) -> GeneratedSample:
    """Draw n observations from a K-component multivariate mixture."""
    if n < 1 or K < 1:
        raise ValueError("n and K must be at least 1")
    if not isinstance(params, MvHyperParams):
        raise TypeError("sample_dataset expects multivariate hyperparameters")
    validate_hyperparams(params, params.b)
    b = params.b
    lam = rng.dirichlet(np.full(K, params.alpha))
    z_raw = rng.choice(K, size=n, p=lam) + 1

    # xi is the inverse scale of the precision prior, so the Bartlett factor
    # uses a square root of xi^{-1}
    chol_xi = np.linalg.cholesky(params.scale_matrix())
    scale_root = np.linalg.inv(chol_xi).T

    centres = np.empty((K, b))
    precisions = np.empty((K, b, b))
    values = np.empty((n, b))
    sqrt_tau = np.sqrt(params.tau)
    for g in range(K):
        w = _wishart_root(params.nu, scale_root, rng)
        precisions[g] = w @ w.T
        centres[g] = params.mu + np.linalg.solve(w.T, rng.standard_normal(b)) / sqrt_tau
        members = np.flatnonzero(z_raw == g + 1)
        if members.size:
            noise = rng.standard_normal((members.size, b))
            values[members] = centres[g] + np.linalg.solve(w.T, noise.T).T
    return _compact_sample(values, z_raw, lam, centres, precisions, K)


def sample_dataset_1d(n: int, K: int, params: UvHyperParams, rng) -> GeneratedSample:
    """Univariate variant with Gamma(gamma, delta) precisions."""
    if n < 1 or K < 1:
        raise ValueError("n and K must be at least 1")
    if not isinstance(params, UvHyperParams):
        raise TypeError("sample_dataset_1d expects univariate hyperparameters")
    lam = rng.dirichlet(np.full(K, params.alpha))
    z_raw = rng.choice(K, size=n, p=lam) + 1

    centres = np.empty((K, 1))
    precisions = np.empty((K, 1, 1))
    values = np.empty((n, 1))
    for g in range(K):
        r = rng.gamma(shape=params.gamma, scale=1.0 / params.delta)
        precisions[g, 0, 0] = r
        centres[g, 0] = rng.normal(params.mu, 1.0 / np.sqrt(params.tau * r))
        members = np.flatnonzero(z_raw == g + 1)
        if members.size:
            values[members, 0] = rng.normal(centres[g, 0], 1.0 / np.sqrt(r), size=members.size)
    return _compact_sample(values, z_raw, lam, centres, precisions, K)
