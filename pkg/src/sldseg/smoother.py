"""Auxiliary time-varying LDS construction and the RTS smoothing pass.

The auxiliary system turns the expected log-likelihood of the latent
trajectories (under the current mode and parameter posteriors) into an
ordinary linear-Gaussian model, so a standard forward filter plus backward
smoother yields the exact factor update for the trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .expectations import ModeExpectations, mode_expectations
from .model import VariationalPosterior

JITTER = 1e-10
LOG_2PI_E = np.log(2.0 * np.pi * np.e)


@dataclass(frozen=True)
class AuxiliaryLDS:
    """Time-varying surrogate LDS whose posterior equals the trajectory factor.

    `u_hat[0]` duplicates `sigma_hat` (the first step has no incoming
    transition); `f_hat[s]` propagates step s to s+1.
    """

    h_hat: np.ndarray     # (T, q, p)
    r_hat: np.ndarray     # (T, q, q)
    f_hat: np.ndarray     # (T-1, p, p)
    u_hat: np.ndarray     # (T, p, p)
    mu_hat: np.ndarray    # (p,)
    sigma_hat: np.ndarray  # (p, p)


@dataclass(frozen=True)
class SmoothedMoments:
    """Posterior moments of one latent trajectory plus its differential entropy."""

    mean: np.ndarray      # (T, p)
    cov: np.ndarray       # (T, p, p)
    cross: np.ndarray     # (T-1, p, p), E[x_{t+1} x_t^T]
    second: np.ndarray    # (T, p, p), E[x_t x_t^T]
    entropy: float


def _spd_inverse(mat: np.ndarray, context: str) -> np.ndarray:
    """Symmetrize, jitter, and invert via Cholesky; raise on failure."""
    sym = 0.5 * (mat + mat.T) + JITTER * np.eye(mat.shape[0])
    try:
        chol = np.linalg.cholesky(sym)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"non-SPD matrix while {context}") from exc
    inv_chol = np.linalg.inv(chol)
    return inv_chol.T @ inv_chol


def compute_lambda_x(
    posterior: VariationalPosterior, mode_marginals: np.ndarray
) -> AuxiliaryLDS:
    """Build the auxiliary LDS from the posterior and the mode responsibilities."""
    return lambda_x_from_expectations(
        mode_expectations(posterior), np.asarray(mode_marginals, dtype=float)
    )


def lambda_x_from_expectations(
    exps: ModeExpectations, unary: np.ndarray
) -> AuxiliaryLDS:
    """Backward recursion assembling the surrogate observation and state blocks.

    Per step: the surrogate observation precision is the responsibility-mixed
    expected precision; the surrogate observation matrix matches the mixed
    cross term; the state-noise precision collects the identity process noise
    (the expected initial-state precision at the first step), the emission
    curvature left over after the surrogate observation explains its share,
    and, away from the last step, the same leftover for the outgoing
    transition.
    """
    unary = np.asarray(unary, dtype=float)
    n_steps, _ = unary.shape
    dx = exps.f.shape[1]
    eye = np.eye(dx)

    rinv_diag = unary @ exps.e_rho                      # (T, q)
    mix_rinvh = np.einsum("tk,kda->tda", unary, exps.rinv_h)
    h_hat = mix_rinvh / rinv_diag[:, :, None]
    mix_htrh = np.einsum("tk,kab->tab", unary, exps.htrinvh)
    obs_gap = mix_htrh - np.einsum("tda,td,tdb->tab", h_hat, rinv_diag, h_hat)
    mix_f = np.einsum("tk,kab->tab", unary, exps.f)
    mix_ftf = np.einsum("tk,kab->tab", unary, exps.ftf)
    init_prec = np.diag(unary[0] @ exps.e_sig)

    u_hat = np.empty((n_steps, dx, dx))
    f_hat = np.empty((max(n_steps - 1, 0), dx, dx))
    for t in range(n_steps - 1, -1, -1):
        base = eye if t > 0 else init_prec
        u_inv = base + obs_gap[t]
        if t != n_steps - 1:
            u_inv = u_inv + mix_ftf[t + 1] - mix_f[t + 1].T @ u_hat[t + 1] @ mix_f[t + 1]
        u_hat[t] = _spd_inverse(u_inv, f"assembling state-noise block at t={t}")
        if t > 0:
            f_hat[t - 1] = u_hat[t] @ mix_f[t]

    sigma_hat = u_hat[0]
    mu_hat = sigma_hat @ (unary[0] @ exps.sig_inv_mu)
    r_hat = np.zeros((n_steps, rinv_diag.shape[1], rinv_diag.shape[1]))
    idx = np.arange(rinv_diag.shape[1])
    r_hat[:, idx, idx] = 1.0 / rinv_diag
    return AuxiliaryLDS(
        h_hat=h_hat, r_hat=r_hat, f_hat=f_hat, u_hat=u_hat,
        mu_hat=mu_hat, sigma_hat=sigma_hat,
    )


def rts_smooth(aux: AuxiliaryLDS, z: np.ndarray) -> SmoothedMoments:
    """Forward filter plus backward smoother on the auxiliary system.

    Returns smoothed means and covariances, lag-one cross second moments,
    full second moments, and the entropy of the joint trajectory posterior
    computed from its backward-conditional factorization (one Gaussian
    conditional per step, so the cost stays linear in T).
    """
    z = np.asarray(z, dtype=float)
    n_steps, dx = aux.u_hat.shape[0], aux.mu_hat.shape[0]
    eye = np.eye(dx)

    m_pred = np.empty((n_steps, dx))
    p_pred = np.empty((n_steps, dx, dx))
    m_filt = np.empty((n_steps, dx))
    p_filt = np.empty((n_steps, dx, dx))

    m_pred[0] = aux.mu_hat
    p_pred[0] = aux.sigma_hat
    for t in range(n_steps):
        h = aux.h_hat[t]
        innov_cov = h @ p_pred[t] @ h.T + aux.r_hat[t]
        innov_cov = 0.5 * (innov_cov + innov_cov.T)
        try:
            chol = np.linalg.cholesky(innov_cov)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"innovation covariance not SPD at t={t}") from exc
        # gain = P H^T S^{-1} via two triangular solves
        tmp = np.linalg.solve(chol, h @ p_pred[t])
        gain = np.linalg.solve(chol.T, tmp).T
        m_filt[t] = m_pred[t] + gain @ (z[t] - h @ m_pred[t])
        imkh = eye - gain @ h
        p_filt[t] = imkh @ p_pred[t] @ imkh.T + gain @ aux.r_hat[t] @ gain.T
        p_filt[t] = 0.5 * (p_filt[t] + p_filt[t].T)
        if t + 1 < n_steps:
            f = aux.f_hat[t]
            m_pred[t + 1] = f @ m_filt[t]
            p_pred[t + 1] = f @ p_filt[t] @ f.T + aux.u_hat[t + 1]
            p_pred[t + 1] = 0.5 * (p_pred[t + 1] + p_pred[t + 1].T)

    mean = np.empty((n_steps, dx))
    cov = np.empty((n_steps, dx, dx))
    cross = np.empty((max(n_steps - 1, 0), dx, dx))
    cond_cov = np.empty((max(n_steps - 1, 0), dx, dx))
    mean[-1] = m_filt[-1]
    cov[-1] = p_filt[-1]
    if n_steps > 1:
        pred_inv = np.linalg.inv(p_pred[1:])
        for t in range(n_steps - 2, -1, -1):
            gain = p_filt[t] @ aux.f_hat[t].T @ pred_inv[t]
            mean[t] = m_filt[t] + gain @ (mean[t + 1] - m_pred[t + 1])
            cov[t] = p_filt[t] + gain @ (cov[t + 1] - p_pred[t + 1]) @ gain.T
            cov[t] = 0.5 * (cov[t] + cov[t].T)
            cross[t] = cov[t + 1] @ gain.T + np.outer(mean[t + 1], mean[t])
            cond_cov[t] = p_filt[t] - gain @ p_pred[t + 1] @ gain.T

    entropy = 0.5 * (dx * LOG_2PI_E + _logdet_spd(cov[-1], "final smoothed covariance"))
    for t in range(n_steps - 1):
        entropy += 0.5 * (
            dx * LOG_2PI_E + _logdet_spd(cond_cov[t], f"backward conditional at t={t}")
        )
    second = cov + np.einsum("ta,tb->tab", mean, mean)
    return SmoothedMoments(mean=mean, cov=cov, cross=cross, second=second, entropy=float(entropy))


def _logdet_spd(mat: np.ndarray, context: str) -> float:
    sym = 0.5 * (mat + mat.T)
    sign, logdet = np.linalg.slogdet(sym)
    if sign <= 0:
        sign, logdet = np.linalg.slogdet(sym + JITTER * np.eye(mat.shape[0]))
        if sign <= 0:
            raise NumericalError(f"non-SPD {context}")
    return float(logdet)


@dataclass(frozen=True)
class AggregatedMoments:
    """Sequence-summed trajectory moments consumed by the parameter updates."""

    sx: np.ndarray       # (T, p) sum_n E[x_t]
    sxx: np.ndarray      # (T, p, p) sum_n E[x_t x_t^T]
    scross: np.ndarray   # (T-1, p, p) sum_n E[x_{t+1} x_t^T]
    n_sequences: int


def sufficient_stats(smoothed: list[SmoothedMoments]) -> AggregatedMoments:
    """Sum per-sequence smoothed moments across sequences."""
    if not smoothed:
        raise ValueError("need at least one smoothed sequence")
    lengths = {sm.mean.shape[0] for sm in smoothed}
    if len(lengths) != 1:
        raise ValueError(f"sequences disagree on length: {sorted(lengths)}")
    sx = np.sum([sm.mean for sm in smoothed], axis=0)
    sxx = np.sum([sm.second for sm in smoothed], axis=0)
    scross = np.sum([sm.cross for sm in smoothed], axis=0)
    return AggregatedMoments(sx=sx, sxx=sxx, scross=scross, n_sequences=len(smoothed))
