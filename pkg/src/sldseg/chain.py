"""Auxiliary HMM construction, log-space forward-backward, and MAP decoding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sticks
from .errors import NumericalError
from .expectations import ModeExpectations, mode_expectations
from .model import ObservationSet, VariationalPosterior
from .smoother import SmoothedMoments, sufficient_stats


@dataclass(frozen=True)
class AuxiliaryHMM:
    """Log-domain surrogate chain: initial, transition, and emission potentials."""

    log_pi0: np.ndarray    # (K,)
    log_trans: np.ndarray  # (K, K)
    log_emit: np.ndarray   # (T, K)


@dataclass(frozen=True)
class ModeMarginals:
    """Unary and pairwise posteriors over the mode chain."""

    unary: np.ndarray      # (T, K)
    pairwise: np.ndarray   # (T-1, K, K)
    log_z: float
    entropy: float


def expected_loglik_table(
    exps: ModeExpectations, smoothed: list[SmoothedMoments], obs: ObservationSet
) -> np.ndarray:
    """(T, K) table of expected log-likelihood terms per step and mode.

    Row 0 carries the initial-state and emission quadratics plus both
    log-determinant expectations; later rows carry the unit-noise dynamics
    quadratic, the emission quadratic, and the observation log-determinant.
    All trajectory expectations enter through smoothed first/second/cross
    moments summed over sequences.
    """
    stats = sufficient_stats(smoothed)
    z = obs.sequences
    n_seq = obs.n_sequences
    n_steps = obs.n_steps

    szz = np.einsum("ntd,ntd->td", z, z)
    szx = np.einsum("ntd,nta->tda", z, np.stack([sm.mean for sm in smoothed]))
    sxx_diag0 = np.diag(stats.sxx[0])
    tr_sxx = np.trace(stats.sxx, axis1=1, axis2=2)

    # emission quadratic: E[rho] (z - h x)^2 summed over channels and sequences
    emit = (
        np.einsum("td,kd->tk", szz, exps.e_rho)
        - 2.0 * np.einsum("tda,kda->tk", szx, exps.rinv_h)
        + np.einsum("tab,kab->tk", stats.sxx, exps.htrinvh)
    )
    ld_rho = exps.e_log_rho.sum(axis=1)  # (K,) E[log det R^{-1}]
    ld_sig = exps.e_log_sig.sum(axis=1)

    log_e = np.empty((n_steps, exps.e_rho.shape[0]))
    first = (
        np.einsum("kd,d->k", exps.e_sig, sxx_diag0)
        - 2.0 * np.einsum("kd,d,kd->k", exps.e_sig, stats.sx[0], exps.mu)
        + n_seq * np.einsum("kd,kd->k", exps.e_sig, exps.mu_sq)
    )
    log_e[0] = -0.5 * (first + emit[0] - n_seq * ld_sig - n_seq * ld_rho)
    if n_steps > 1:
        dyn = (
            tr_sxx[1:, None]
            - 2.0 * np.einsum("tab,kab->tk", stats.scross, exps.f)
            + np.einsum("tab,kab->tk", stats.sxx[:-1], exps.ftf)
        )
        log_e[1:] = -0.5 * (dyn + emit[1:] - n_seq * ld_rho)
    return log_e


def compute_lambda_s(
    posterior: VariationalPosterior,
    smoothed: list[SmoothedMoments],
    obs: ObservationSet,
) -> AuxiliaryHMM:
    """Surrogate chain potentials from the current posterior and smoothed moments."""
    return lambda_s_from_expectations(posterior, mode_expectations(posterior), smoothed, obs)


def expected_log_transition_potentials(posterior: VariationalPosterior) -> np.ndarray:
    """(K, K) transition potentials under optimal per-event table assignment.

    Each transition event uses exactly one stick of its row; maximizing over
    the per-event assignment distribution turns the log of that choice into
    log sum_p phi[i, p, j] * exp(E[log w_{i,p}]).  This keeps the potentials
    a valid bound term, and the forward-backward pass is then exact
    coordinate ascent.  Two tempting shortcuts fail here: mixing expected
    weights before the log sits a Jensen gap above the bound and makes early
    sweeps oscillate, while summing expected log weights over all tables
    over-counts them and actively penalizes self-transitions.
    """
    trans_elog = sticks.expected_log_trans_sticks(posterior.trans_u, posterior.trans_v)
    mix = np.einsum("ipk,ip->ik", posterior.phi, np.exp(trans_elog))
    return np.log(np.maximum(mix, 1e-300))


def lambda_s_from_expectations(
    posterior: VariationalPosterior,
    exps: ModeExpectations,
    smoothed: list[SmoothedMoments],
    obs: ObservationSet,
) -> AuxiliaryHMM:
    log_pi0 = sticks.expected_log_init(posterior.init_u, posterior.init_v)
    log_trans = expected_log_transition_potentials(posterior)
    log_emit = expected_loglik_table(exps, smoothed, obs)
    if not np.all(np.isfinite(log_emit)):
        raise NumericalError("non-finite expected log-likelihood table")
    return AuxiliaryHMM(log_pi0=log_pi0, log_trans=log_trans, log_emit=log_emit)


def _logsumexp_rows(mat: np.ndarray) -> np.ndarray:
    """log sum exp over axis 0 with max subtraction; mat is (K, ...)."""
    peak = mat.max(axis=0)
    return peak + np.log(np.exp(mat - peak).sum(axis=0))


def forward_backward(aux: AuxiliaryHMM) -> ModeMarginals:
    """Exact chain marginals via log-space alpha/beta recursions.

    The entropy follows from the Gibbs identity: log normalizer minus the
    expected potentials under the computed marginals.
    """
    log_emit = aux.log_emit
    log_trans = aux.log_trans
    n_steps, k = log_emit.shape

    log_alpha = np.empty((n_steps, k))
    log_alpha[0] = aux.log_pi0 + log_emit[0]
    for t in range(1, n_steps):
        log_alpha[t] = log_emit[t] + _logsumexp_rows(log_alpha[t - 1][:, None] + log_trans)

    log_beta = np.zeros((n_steps, k))
    for t in range(n_steps - 2, -1, -1):
        log_beta[t] = _logsumexp_rows(
            (log_trans + log_emit[t + 1] + log_beta[t + 1]).T
        )

    log_z = float(_logsumexp_rows(log_alpha[-1][:, None])[0])
    unary = np.exp(log_alpha + log_beta - log_z)
    unary /= unary.sum(axis=1, keepdims=True)

    if n_steps > 1:
        log_xi = (
            log_alpha[:-1, :, None]
            + log_trans[None, :, :]
            + (log_emit[1:] + log_beta[1:])[:, None, :]
            - log_z
        )
        pairwise = np.exp(log_xi)
        pairwise /= pairwise.sum(axis=(1, 2), keepdims=True)
    else:
        pairwise = np.zeros((0, k, k))

    entropy = (
        log_z
        - float(unary[0] @ aux.log_pi0)
        - float(np.einsum("tij,ij->", pairwise, log_trans))
        - float(np.einsum("tk,tk->", unary, log_emit))
    )
    return ModeMarginals(
        unary=unary, pairwise=pairwise, log_z=log_z, entropy=max(float(entropy), 0.0)
    )


def map_sequence(aux: AuxiliaryHMM) -> np.ndarray:
    """Most probable mode path; argmax ties resolve to the lowest index."""
    log_emit = aux.log_emit
    n_steps, k = log_emit.shape
    delta = aux.log_pi0 + log_emit[0]
    back = np.zeros((n_steps, k), dtype=int)
    for t in range(1, n_steps):
        scores = delta[:, None] + aux.log_trans
        back[t] = scores.argmax(axis=0)
        delta = scores[back[t], np.arange(k)] + log_emit[t]
    path = np.empty(n_steps, dtype=int)
    path[-1] = int(delta.argmax())
    for t in range(n_steps - 2, -1, -1):
        path[t] = back[t + 1][path[t + 1]]
    return path
