"""Gaussian-emission HMM baseline trained by EM, with Viterbi decoding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import multivariate_normal

from .chain import AuxiliaryHMM, forward_backward, map_sequence
from .errors import ConfigError

COV_FLOOR = 1e-6
LOG_GUARD = 1e-300


@dataclass(frozen=True)
class GaussianHmmModel:
    """Fully parameterized Gaussian HMM with a fixed number of states."""

    n_states: int
    init_probs: np.ndarray   # (S,)
    trans: np.ndarray        # (S, S) row-stochastic
    means: np.ndarray        # (S, d)
    covs: np.ndarray         # (S, d, d)


def _floor_cov(cov: np.ndarray) -> np.ndarray:
    sym = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(sym)
    return (vecs * np.maximum(vals, COV_FLOOR)) @ vecs.T


def _kmeans_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = x[rng.choice(x.shape[0], size=k, replace=False)].copy()
    for _ in range(25):
        dists = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = dists.argmin(axis=1)
        new_centers = centers.copy()
        for i in range(k):
            members = x[labels == i]
            if members.shape[0]:
                new_centers[i] = members.mean(axis=0)
        if np.allclose(new_centers, centers):
            break
        centers = new_centers
    return centers


def _log_emissions(model: GaussianHmmModel, x: np.ndarray) -> np.ndarray:
    log_emit = np.empty((x.shape[0], model.n_states))
    for i in range(model.n_states):
        log_emit[:, i] = multivariate_normal.logpdf(x, model.means[i], model.covs[i])
    return log_emit


def _aux(model: GaussianHmmModel, x: np.ndarray) -> AuxiliaryHMM:
    return AuxiliaryHMM(
        log_pi0=np.log(np.maximum(model.init_probs, LOG_GUARD)),
        log_trans=np.log(np.maximum(model.trans, LOG_GUARD)),
        log_emit=_log_emissions(model, x),
    )


def em_fit(
    x: np.ndarray,
    n_states: int,
    seed: int = 0,
    max_iters: int = 200,
    tol: float = 1e-6,
) -> tuple[GaussianHmmModel, np.ndarray]:
    """Baum-Welch maximum likelihood fit on a single sequence.

    Means start from a seeded k-means pass; covariances are eigenvalue-floored
    and a state that loses all responsibility has its covariance reset to the
    data covariance.  Returns the model and the per-iteration log-likelihood
    trace (one entry per E-step).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ConfigError("baseline input must be a single (T, d) sequence")
    t_steps = x.shape[0]
    if t_steps <= n_states:
        raise ConfigError(f"need more steps than states, got T={t_steps}, states={n_states}")

    rng = np.random.default_rng(seed)
    data_cov = _floor_cov(np.atleast_2d(np.cov(x, rowvar=False, ddof=0)))
    means = _kmeans_init(x, n_states, rng)
    covs = np.tile(data_cov, (n_states, 1, 1))
    model = GaussianHmmModel(
        n_states=n_states,
        init_probs=np.full(n_states, 1.0 / n_states),
        trans=np.full((n_states, n_states), 1.0 / n_states),
        means=means,
        covs=covs,
    )

    trace = []
    for _ in range(max_iters):
        marg = forward_backward(_aux(model, x))
        trace.append(marg.log_z)

        gamma = marg.unary
        counts = gamma.sum(axis=0)
        trans_counts = marg.pairwise.sum(axis=0) if marg.pairwise.size else np.zeros((n_states,) * 2)
        trans = model.trans.copy()
        row_tot = trans_counts.sum(axis=1)
        nz = row_tot > 0
        trans[nz] = trans_counts[nz] / row_tot[nz, None]

        means = model.means.copy()
        covs = model.covs.copy()
        for i in range(n_states):
            if counts[i] < 1e-10:
                covs[i] = data_cov
                continue
            means[i] = gamma[:, i] @ x / counts[i]
            centered = x - means[i]
            covs[i] = _floor_cov((gamma[:, i] * centered.T) @ centered / counts[i])
        init_probs = gamma[0] / gamma[0].sum()
        model = GaussianHmmModel(
            n_states=n_states, init_probs=init_probs, trans=trans, means=means, covs=covs
        )
        if len(trace) > 1:
            rel = abs(trace[-1] - trace[-2]) / max(abs(trace[-2]), 1e-10)
            if rel < tol:
                break
    return model, np.asarray(trace)


def viterbi_decode(model: GaussianHmmModel, x: np.ndarray) -> np.ndarray:
    """Most probable state path; ties resolve toward the lowest state index."""
    return map_sequence(_aux(model, np.asarray(x, dtype=float)))
