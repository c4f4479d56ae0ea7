"""Per-mode moments of the parameter posteriors, shared by the smoother and chain."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma

from .model import VariationalPosterior


@dataclass(frozen=True)
class ModeExpectations:
    """Expectations of the per-mode dynamics/emission parameters under the posterior."""

    e_rho: np.ndarray         # (K, q) E[obs precision]
    e_log_rho: np.ndarray     # (K, q) E[log obs precision]
    e_sig: np.ndarray         # (K, p) E[initial-state precision]
    e_log_sig: np.ndarray     # (K, p) E[log initial-state precision]
    f: np.ndarray             # (K, p, p) E[dynamics matrix]
    ftf: np.ndarray           # (K, p, p) E[F^T F] including row covariance
    rinv_h: np.ndarray        # (K, q, p) E[R^{-1} H]
    htrinvh: np.ndarray       # (K, p, p) E[H^T R^{-1} H]
    sig_inv_mu: np.ndarray    # (K, p) E[Sigma^{-1} mu]
    mu: np.ndarray            # (K, p) E[initial-state mean]
    mu_sq: np.ndarray         # (K, p) E[mu^2] per dimension
    h_mean: np.ndarray        # (K, q, p)
    h_cov: np.ndarray         # (K, p, p)


def mode_expectations(post: VariationalPosterior) -> ModeExpectations:
    dx = post.dim_x
    dz = post.dim_z
    e_rho = post.rho_a / post.rho_b
    e_log_rho = digamma(post.rho_a) - np.log(post.rho_b)
    e_sig = post.sigma_a / post.sigma_b
    e_log_sig = digamma(post.sigma_a) - np.log(post.sigma_b)

    ftf = np.einsum("kda,kdb->kab", post.f_mean, post.f_mean) + dx * post.f_cov
    rinv_h = e_rho[:, :, None] * post.h_mean
    htrinvh = (
        np.einsum("kda,kdb,kd->kab", post.h_mean, post.h_mean, e_rho)
        + dz * post.h_cov
    )
    return ModeExpectations(
        e_rho=e_rho,
        e_log_rho=e_log_rho,
        e_sig=e_sig,
        e_log_sig=e_log_sig,
        f=post.f_mean,
        ftf=ftf,
        rinv_h=rinv_h,
        htrinvh=htrinvh,
        sig_inv_mu=e_sig * post.mu_mean,
        mu=post.mu_mean,
        mu_sq=post.mu_mean**2 + 1.0 / post.mu_prec,
        h_mean=post.h_mean,
        h_cov=post.h_cov,
    )
