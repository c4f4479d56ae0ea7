"""Stick-breaking expectations and posterior updates for the mode-transition prior.

Everything here operates on plain arrays so the functions can be called both
by the inference engine and by standalone tests.  Truncation follows the
convention that the last stick fraction is fixed at one, so the final weight
absorbs the tail mass and expected weight vectors sum to one exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import digamma

from .errors import ConfigError, NumericalError

# Floor for arguments of log/digamma so a degenerate posterior cannot
# propagate -inf through the updates.
CLAMP = 1e-12


def _check_positive(arr: np.ndarray, name: str) -> None:
    if arr.size and np.min(arr) <= 0.0:
        raise ConfigError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class StickExpectations:
    """Moments of truncated stick-breaking weights under independent Beta factors."""

    e_beta: np.ndarray            # (K,) expected weights, sums to 1
    e_beta_sq: np.ndarray         # (K,) expected squared weights
    e_log_beta: np.ndarray        # (K,) expected log weights
    e_log_bar: np.ndarray         # (K-1,) expected log stick fractions
    e_log_one_minus_bar: np.ndarray  # (K-1,) expected log complements


def stick_expectations(stick_u: np.ndarray, stick_v: np.ndarray) -> StickExpectations:
    """Moments of the K weights built from K-1 Beta(u, v) stick fractions.

    The weights are w_k = s_k * prod_{i<k} (1 - s_i) with s_K = 1, and the
    fractions are independent, so first/second moments multiply and log
    moments add (digamma differences for E[log s]).
    """
    u = np.asarray(stick_u, dtype=float)
    v = np.asarray(stick_v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise ConfigError("stick parameters must be matching 1-d arrays")
    _check_positive(u, "stick_u")
    _check_positive(v, "stick_v")

    s = u + v
    e_bar = u / s
    e_bar_sq = u * (u + 1.0) / (s * (s + 1.0))
    e_one_minus = v / s
    e_one_minus_sq = v * (v + 1.0) / (s * (s + 1.0))
    e_log_bar = digamma(np.maximum(u, CLAMP)) - digamma(s)
    e_log_one_minus = digamma(np.maximum(v, CLAMP)) - digamma(s)

    # prefix products/sums over the complements; the terminal stick is 1.
    prefix = np.concatenate(([1.0], np.cumprod(e_one_minus)))
    prefix_sq = np.concatenate(([1.0], np.cumprod(e_one_minus_sq)))
    prefix_log = np.concatenate(([0.0], np.cumsum(e_log_one_minus)))

    e_beta = np.append(e_bar, 1.0) * prefix
    e_beta_sq = np.append(e_bar_sq, 1.0) * prefix_sq
    e_log_beta = np.append(e_log_bar, 0.0) + prefix_log
    return StickExpectations(e_beta, e_beta_sq, e_log_beta, e_log_bar, e_log_one_minus)


def expected_stick_weights(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Expected weight vector only (cheaper helper for transition rows)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    e_one_minus = v / (u + v)
    prefix = np.concatenate(([1.0], np.cumprod(e_one_minus)))
    return np.append(u / (u + v), 1.0) * prefix


def expected_log_stick_weights(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """E[log w_k] for the K weights of one stick-breaking row."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    s = u + v
    e_log_bar = digamma(np.maximum(u, CLAMP)) - digamma(s)
    e_log_one_minus = digamma(np.maximum(v, CLAMP)) - digamma(s)
    prefix = np.concatenate(([0.0], np.cumsum(e_log_one_minus)))
    return np.append(e_log_bar, 0.0) + prefix


def expected_log_init(init_u: np.ndarray, init_v: np.ndarray) -> np.ndarray:
    """E[log p(first mode = i)] under the initial-state stick posterior."""
    return expected_log_stick_weights(init_u, init_v)


def expected_log_trans_sticks(trans_u: np.ndarray, trans_v: np.ndarray) -> np.ndarray:
    """(K, K) matrix of E[log w_{i,i'}] for every transition row i."""
    trans_u = np.asarray(trans_u, dtype=float)
    k = trans_u.shape[0]
    out = np.empty((k, k))
    for i in range(k):
        out[i] = expected_log_stick_weights(trans_u[i], trans_v[i])
    return out


def approx_e_log1p_ratio(alpha: float, kappa: float, sticks: StickExpectations) -> np.ndarray:
    """Moment approximation of E[log(1 + alpha*w_k/kappa)] per weight k.

    Two branches: a second-order Taylor expansion of log(1+y) when
    kappa >= alpha*E[w_k] (the Taylor branch is used at equality), otherwise
    log y + 1/y with E[1/w] approximated by E[w^2]/E[w]^3.
    """
    if kappa <= 0.0:
        raise ConfigError("approx_e_log1p_ratio requires kappa > 0")
    e_b = sticks.e_beta
    e_b2 = sticks.e_beta_sq
    taylor = (alpha / kappa) * e_b - (alpha**2 / (2.0 * kappa**2)) * e_b2
    safe = np.maximum(e_b, CLAMP)
    recip = (
        np.log(alpha) - np.log(kappa) + sticks.e_log_beta
        + (kappa / alpha) * (e_b2 / safe**3)
    )
    return np.where(kappa >= alpha * e_b, taylor, recip)


def indicator_log_weights(
    alpha: float, kappa: float, sticks: StickExpectations
) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized log weights for the table indicators, before the count term.

    Returns (off, diag): `off[k]` applies when the indicator points at a mode
    other than the row's own, `diag[k]` when it points back at the row (the
    sticky case).  With kappa = 0 the two coincide.
    """
    off = np.log(max(alpha, CLAMP)) + sticks.e_log_beta
    if kappa <= 0.0:
        return off, off.copy()
    diag = np.log(kappa) + approx_e_log1p_ratio(alpha, kappa, sticks)
    return off, diag


def prior_indicator(alpha: float, kappa: float, e_beta: np.ndarray) -> np.ndarray:
    """Prior value of the indicator distributions: (alpha*E[w] + kappa*delta)/(alpha+kappa)."""
    k = e_beta.shape[0]
    phi = np.tile(alpha * e_beta / (alpha + kappa), (k, k, 1))
    idx = np.arange(k)
    phi[idx, :, idx] += kappa / (alpha + kappa)
    phi /= phi.sum(axis=2, keepdims=True)
    return phi


def update_phi(
    sticks: StickExpectations,
    pair_marginals: np.ndarray,
    trans_elog: np.ndarray,
    alpha: float,
    kappa: float,
) -> np.ndarray:
    """Posterior update of the (K, K, K) indicator distributions.

    The log weight for slice (i, i') at component k combines the stick prior
    term (sticky branch when k == i), plus E[log w_{i,i'}] scaled by the total
    expected count of i -> k transitions.
    """
    pair = np.asarray(pair_marginals, dtype=float)
    k = trans_elog.shape[0]
    counts = pair.sum(axis=0) if pair.ndim == 3 else pair  # (K, K)
    off, diag = indicator_log_weights(alpha, kappa, sticks)

    logw = np.tile(off, (k, k, 1))
    idx = np.arange(k)
    logw[idx, :, idx] = diag[idx, None]
    logw += trans_elog[:, :, None] * counts[:, None, :]

    logw -= logw.max(axis=2, keepdims=True)
    phi = np.exp(logw)
    phi /= phi.sum(axis=2, keepdims=True)
    return phi


def update_sticks(phi: np.ndarray, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Posterior Beta parameters of the shared stick fractions from indicator mass.

    Indicator mass landing on component i is counted over all rows j != i
    (self-transition slices are excluded); the second parameter accumulates
    the same counts for components above i.
    """
    k = phi.shape[0]
    col_mass = phi.sum(axis=1)  # (K, K): mass row j puts on component k
    off = col_mass.sum(axis=0) - np.diag(col_mass)  # excludes j == k
    u = 1.0 + off[: k - 1]
    tail = np.concatenate((np.cumsum(off[::-1])[::-1][1:], [0.0]))
    v = gamma + tail[: k - 1]
    return u, v


def update_transitions(
    phi: np.ndarray,
    pair_marginals: np.ndarray,
    init_marginal: np.ndarray,
    alpha0: float,
    alpha: float,
    kappa: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Posterior Beta parameters for initial-state and per-row transition sticks."""
    pair = np.asarray(pair_marginals, dtype=float)
    counts = pair.sum(axis=0) if pair.ndim == 3 else pair
    k = phi.shape[0]

    m = np.einsum("ik,ipk->ip", counts, phi)  # expected use of stick i' in row i
    tail_m = np.concatenate(
        (np.cumsum(m[:, ::-1], axis=1)[:, ::-1][:, 1:], np.zeros((k, 1))), axis=1
    )
    trans_u = 1.0 + m[:, : k - 1]
    trans_v = (alpha + kappa) + tail_m[:, : k - 1]

    g0 = np.asarray(init_marginal, dtype=float)
    tail0 = np.concatenate((np.cumsum(g0[::-1])[::-1][1:], [0.0]))
    init_u = 1.0 + g0[: k - 1]
    init_v = alpha0 + tail0[: k - 1]
    return init_u, init_v, trans_u, trans_v


def expected_transition_matrix(
    trans_u: np.ndarray, trans_v: np.ndarray, phi: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Expected mode-transition matrix mapped through the indicators.

    Row i mixes the expected stick weights of row i with the indicator
    distributions: p[i, j] = sum_k E[w_{i,k}] phi[i, k, j].  Rows are
    renormalized so downstream chain recursions see proper distributions.
    """
    k = phi.shape[0]
    e_w = np.empty((k, k))
    for i in range(k):
        e_w[i] = expected_stick_weights(trans_u[i], trans_v[i])
    pihat = np.einsum("ik,ikj->ij", e_w, phi)
    pihat /= pihat.sum(axis=1, keepdims=True)
    return pihat, np.log(np.maximum(pihat, CLAMP))


class ConcentrationUpdate(NamedTuple):
    alpha: float
    kappa: float
    a_alpha: float
    b_alpha: float
    u_kappa: float
    v_kappa: float


def update_concentrations(
    phi: np.ndarray,
    trans_u: np.ndarray,
    trans_v: np.ndarray,
    a_alpha_prior: float,
    b_alpha_prior: float,
    u_kappa_prior: float,
    v_kappa_prior: float,
) -> ConcentrationUpdate:
    """Point estimates of the concentration pair from their conjugate posteriors.

    A Gamma posterior governs the total concentration and a Beta posterior
    the self-transition fraction; the pair is recovered from the two means.
    """
    k = phi.shape[0]
    a_alpha = a_alpha_prior + k**2
    e_log_one_minus = digamma(np.maximum(trans_v, CLAMP)) - digamma(trans_u + trans_v)
    b_alpha = b_alpha_prior - float(e_log_one_minus.sum())
    if b_alpha <= 0.0:
        raise NumericalError("concentration rate update is nonpositive")

    diag_mass = float(np.einsum("iji->", phi))
    u_kappa = u_kappa_prior + diag_mass
    v_kappa = v_kappa_prior + float(phi.sum()) - diag_mass

    total = a_alpha / b_alpha
    frac = u_kappa / (u_kappa + v_kappa)
    return ConcentrationUpdate(
        alpha=total * (1.0 - frac),
        kappa=total * frac,
        a_alpha=a_alpha,
        b_alpha=b_alpha,
        u_kappa=u_kappa,
        v_kappa=v_kappa,
    )
