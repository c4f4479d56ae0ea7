"""Coordinate-ascent engine: alternating trajectory/chain inference, parameter
updates, objective assembly, convergence, and multi-restart selection."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import digamma, gammaln

from . import sticks
from .chain import (
    AuxiliaryHMM,
    ModeMarginals,
    expected_log_transition_potentials,
    expected_loglik_table,
    forward_backward,
    lambda_s_from_expectations,
    map_sequence,
)
from .errors import ConfigError, ElboDecreaseWarning, NumericalError
from .expectations import ModeExpectations, mode_expectations
from .model import (
    FitResult,
    Hyperparameters,
    ObservationSet,
    VariationalPosterior,
    init_posterior,
    validate_config,
)
from .smoother import (
    SmoothedMoments,
    lambda_x_from_expectations,
    rts_smooth,
    sufficient_stats,
)

LOG_2PI = np.log(2.0 * np.pi)
EMPTY_MODE_RESP = 1e-8


@dataclass(frozen=True)
class FitOptions:
    """Knobs of the outer fitting loop."""

    max_iters: int = 500
    elbo_rel_tol: float = 1e-6
    restarts: int = 20
    seed: int = 0
    elbo_decrease_tolerance: float = 1e-4   # relative; larger drops warn
    track_trace: bool = True
    freeze_phi: bool = False                # hold indicator distributions fixed
    init_hold_sweeps: int = 4               # sweeps with the chain factor pinned
                                            # to the seeded segmentation

    def __post_init__(self):
        if self.max_iters < 1 or self.restarts < 1:
            raise ConfigError("max_iters and restarts must be at least 1")
        if self.elbo_rel_tol <= 0 or self.elbo_decrease_tolerance < 0:
            raise ConfigError("tolerances must be positive")
        if self.init_hold_sweeps < 1:
            raise ConfigError("init_hold_sweeps must be at least 1")


@dataclass
class VbemState:
    """Mutable per-restart state threaded through the sweeps."""

    hp: Hyperparameters
    opts: FitOptions
    obs: ObservationSet
    posterior: VariationalPosterior
    init_resp: np.ndarray                      # first-sweep responsibilities
    marginals: Optional[ModeMarginals] = None
    smoothed: Optional[list[SmoothedMoments]] = None
    aux_s: Optional[AuxiliaryHMM] = None
    exps: Optional[ModeExpectations] = None
    elbo: float = -np.inf
    elbo_trace: list = field(default_factory=list)
    iteration: int = 0
    soft_breaches: int = 0
    hard_breaches: int = 0
    seed: int = 0


def _init_responsibilities(rng: np.random.Generator, n_steps: int, k: int) -> np.ndarray:
    """Soft random segmentation for the first sweep.

    Symmetric Dirichlet jitter alone cannot nucleate modes: under strong
    self-transition mass the chain factor smooths i.i.d. per-step noise into
    a single global mode before the parameters differentiate.  Boosting a
    randomly chosen mode over random contiguous blocks hands each mode a few
    genuine data segments to learn from, while the jitter keeps every row
    strictly positive.
    """
    resp = rng.dirichlet(5.0 * np.ones(k), size=n_steps)
    seg_len = max(5, n_steps // (2 * k))
    t = 0
    while t < n_steps:
        length = int(rng.integers(seg_len, 2 * seg_len + 1))
        resp[t:t + length, int(rng.integers(k))] += 1.0
        t += length
    return resp / resp.sum(axis=1, keepdims=True)


def init_state(
    obs: ObservationSet, hp: Hyperparameters, opts: FitOptions, seed: int
) -> VbemState:
    """Fresh state: prior posterior plus seeded segment-structured responsibilities."""
    posterior = init_posterior(hp, seed)
    rng = np.random.default_rng(seed)
    init_resp = _init_responsibilities(rng, obs.n_steps, hp.trunc_k)
    return VbemState(
        hp=hp, opts=opts, obs=obs, posterior=posterior,
        init_resp=init_resp, seed=seed,
    )


def _product_marginals(resp: np.ndarray) -> ModeMarginals:
    """Wrap per-step responsibilities as an independent chain distribution."""
    resp = resp / resp.sum(axis=1, keepdims=True)
    pairwise = resp[:-1, :, None] * resp[1:, None, :]
    safe = np.where(resp > 0, resp, 1.0)
    entropy = -float(np.sum(resp * np.log(safe)))
    return ModeMarginals(unary=resp, pairwise=pairwise, log_z=0.0, entropy=entropy)


def _table_responsibilities(
    phi: np.ndarray, trans_elog: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Optimal soft assignment of each transition event to one stick of its row.

    r[i, p, j] is the probability that an i -> j event used stick p; the
    marginal mix[i, j] = sum_p phi[i, p, j] exp(E[log w_{i,p}]) is the
    transition potential the chain factor sees.
    """
    joint = phi * np.exp(trans_elog)[:, :, None]
    mix = joint.sum(axis=1)
    r = joint / np.maximum(mix[:, None, :], 1e-300)
    return r, mix


def _engine_update_indicators(
    posterior: VariationalPosterior,
    counts: np.ndarray,
    alpha: float,
    kappa: float,
) -> np.ndarray:
    """Indicator refresh used inside the sweep: prior weights plus soft counts.

    Conjugate step of the augmented family: with events softly assigned to
    sticks by responsibility, the indicator of stick p collects the expected
    number of events it served per target.  The count term enters with a
    positive sign; the published count term (expected log stick weight times
    raw transition counts) is negative and grows with usage, which drives
    the indicators away from heavily used targets and destroys persistence.
    """
    sexp = sticks.stick_expectations(posterior.stick_u, posterior.stick_v)
    off, diag = sticks.indicator_log_weights(alpha, kappa, sexp)
    k = counts.shape[0]
    log_prior = np.tile(off, (k, k, 1))
    idx = np.arange(k)
    log_prior[idx, :, idx] = diag[idx, None]

    trans_elog = sticks.expected_log_trans_sticks(posterior.trans_u, posterior.trans_v)
    resp, _ = _table_responsibilities(posterior.phi, trans_elog)
    logw = log_prior + counts[:, None, :] * resp
    logw -= logw.max(axis=2, keepdims=True)
    phi = np.exp(logw)
    phi /= phi.sum(axis=2, keepdims=True)
    return phi


def _engine_update_transition_sticks(
    phi: np.ndarray,
    trans_elog: np.ndarray,
    counts: np.ndarray,
    init_marginal: np.ndarray,
    alpha0: float,
    alpha: float,
    kappa: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Stick posteriors with each transition event attributed to one stick.

    Expected per-stick usage m[i, p] = sum_j counts[i, j] r[i, p, j] keeps
    the total attributed mass equal to the event count, so the conjugate
    Beta updates see each transition exactly once.
    """
    k = phi.shape[0]
    resp, _ = _table_responsibilities(phi, trans_elog)
    m = np.einsum("ij,ipj->ip", counts, resp)
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


def update_mode_parameters(
    posterior: VariationalPosterior,
    hp: Hyperparameters,
    marginals: ModeMarginals,
    smoothed: list[SmoothedMoments],
    obs: ObservationSet,
) -> VariationalPosterior:
    """Conjugate refresh of the per-mode initial-state, dynamics, and emission blocks.

    Modes whose total responsibility falls below a small floor are reset to
    their prior blocks so stale statistics cannot skew later sweeps; they stay
    available for reuse.
    """
    stats = sufficient_stats(smoothed)
    z = obs.sequences
    n_seq = obs.n_sequences
    gamma_t = marginals.unary                   # (T, K)
    gamma0 = gamma_t[0]
    total_resp = gamma_t.sum(axis=0)
    k, dx = hp.trunc_k, hp.dim_x

    mu_prec = np.tile((hp.b_mu + n_seq * gamma0)[:, None], (1, dx))
    mu_mean = (gamma0[:, None] * stats.sx[0][None, :]) / mu_prec
    sigma_a = np.tile((hp.a_sigma + 0.5 * n_seq * gamma0)[:, None], (1, dx))
    resid0 = (
        np.diag(stats.sxx[0])[None, :]
        - 2.0 * stats.sx[0][None, :] * mu_mean
        + n_seq * (mu_mean**2 + 1.0 / mu_prec)
    )
    sigma_b = hp.b_sigma[:, None] + 0.5 * gamma0[:, None] * resid0

    # dynamics rows share one covariance per mode
    f_prec = np.zeros((k, dx, dx))
    f_prec += np.einsum("ti,tab->iab", gamma_t[1:], stats.sxx[:-1])
    idx = np.arange(dx)
    f_prec[:, idx, idx] += hp.zeta
    f_cov = np.linalg.inv(f_prec)
    f_cov = 0.5 * (f_cov + np.swapaxes(f_cov, 1, 2))
    cross_sum = np.einsum("ti,tba->iab", gamma_t[1:], stats.scross)
    f_mean = np.einsum("iab,ibc->iac", np.swapaxes(cross_sum, 1, 2), f_cov)

    h_prec_data = np.einsum("ti,tab->iab", gamma_t, stats.sxx)
    h_prec = h_prec_data.copy()
    h_prec[:, idx, idx] += hp.eta
    h_cov = np.linalg.inv(h_prec)
    h_cov = 0.5 * (h_cov + np.swapaxes(h_cov, 1, 2))
    szx = np.einsum("ntd,nta->tda", z, np.stack([sm.mean for sm in smoothed]))
    xz_sum = np.einsum("ti,tda->ida", gamma_t, szx)
    h_mean = np.einsum("iab,idb->ida", h_cov, xz_sum)

    szz = np.einsum("ntd,ntd->td", z, z)
    rho_a = hp.a_obs[:, None] + 0.5 * n_seq * total_resp[:, None]
    rho_a = np.tile(rho_a, (1, hp.dim_z))
    quad = np.einsum("iab,ida,idb->id", h_prec_data, h_mean, h_mean)
    trace_term = np.einsum("iab,iab->i", h_cov, h_prec_data)
    rho_b = hp.b_obs[:, None] + 0.5 * (
        np.einsum("ti,td->id", gamma_t, szz)
        - 2.0 * np.einsum("ida,ida->id", xz_sum, h_mean)
        + quad
        + trace_term[:, None]
    )

    empty = total_resp < EMPTY_MODE_RESP
    if np.any(empty):
        prior = init_posterior(hp)
        for name, new in (
            ("mu_mean", mu_mean), ("mu_prec", mu_prec),
            ("sigma_a", sigma_a), ("sigma_b", sigma_b),
            ("f_mean", f_mean), ("f_cov", f_cov),
            ("rho_a", rho_a), ("rho_b", rho_b),
            ("h_mean", h_mean), ("h_cov", h_cov),
        ):
            new[empty] = getattr(prior, name)[empty]

    if np.min(np.linalg.eigvalsh(f_cov)) <= 0 or np.min(np.linalg.eigvalsh(h_cov)) <= 0:
        raise NumericalError("non-SPD posterior covariance in parameter update")
    return replace(
        posterior,
        mu_mean=mu_mean, mu_prec=mu_prec, sigma_a=sigma_a, sigma_b=sigma_b,
        f_mean=f_mean, f_cov=f_cov, rho_a=rho_a, rho_b=rho_b,
        h_mean=h_mean, h_cov=h_cov,
    )


def _kl_gamma(a, b, a0, b0):
    return (
        (a - a0) * digamma(a) - gammaln(a) + gammaln(a0)
        + a0 * (np.log(b) - np.log(b0)) + a * (b0 - b) / b
    )


def _kl_beta(u, v, u0, v0):
    return (
        gammaln(u + v) - gammaln(u) - gammaln(v)
        - gammaln(u0 + v0) + gammaln(u0) + gammaln(v0)
        + (u - u0) * (digamma(u) - digamma(u + v))
        + (v - v0) * (digamma(v) - digamma(u + v))
    )


def elbo_terms(
    posterior: VariationalPosterior,
    marginals: ModeMarginals,
    smoothed: list[SmoothedMoments],
    obs: ObservationSet,
    hp: Hyperparameters,
    exps: Optional[ModeExpectations] = None,
) -> dict:
    """All additive pieces of the bound, keyed by name (for diagnostics and tests)."""
    if exps is None:
        exps = mode_expectations(posterior)
    k, dx, dz = hp.trunc_k, hp.dim_x, hp.dim_z
    n_seq, n_steps = obs.n_sequences, obs.n_steps
    alpha = posterior.alpha_point
    kappa = posterior.kappa_point

    log_e = expected_loglik_table(exps, smoothed, obs)
    e_log_pi0 = sticks.expected_log_init(posterior.init_u, posterior.init_v)
    a_pot = expected_log_transition_potentials(posterior)
    counts = marginals.pairwise.sum(axis=0) if marginals.pairwise.size else np.zeros((k, k))

    const = -0.5 * LOG_2PI * n_seq * n_steps * (dx + dz)
    e_loglik = (
        float(marginals.unary[0] @ e_log_pi0)
        + float(np.einsum("ik,ik->", counts, a_pot))
        + float(np.einsum("tk,tk->", marginals.unary, log_e))
        + const
    )

    entropy_x = float(sum(sm.entropy for sm in smoothed))
    entropy_s = marginals.entropy

    kl_init = float(np.sum(_kl_beta(posterior.init_u, posterior.init_v, 1.0, hp.alpha0)))
    kl_trans = float(np.sum(_kl_beta(posterior.trans_u, posterior.trans_v, 1.0, alpha + kappa)))
    kl_beta_sticks = float(np.sum(_kl_beta(posterior.stick_u, posterior.stick_v, 1.0, hp.gamma)))

    sexp = sticks.stick_expectations(posterior.stick_u, posterior.stick_v)
    off, diag = sticks.indicator_log_weights(alpha, kappa, sexp)
    log_prior = np.tile(off, (k, k, 1))
    idx = np.arange(k)
    log_prior[idx, :, idx] = diag[idx, None]
    log_prior -= np.log(alpha + kappa)
    phi_safe = np.maximum(posterior.phi, 1e-300)
    kl_indicator = float(np.sum(posterior.phi * (np.log(phi_safe) - log_prior)))

    kl_mu = float(np.sum(0.5 * (
        hp.b_mu[:, None] * (1.0 / posterior.mu_prec + posterior.mu_mean**2)
        - 1.0 + np.log(posterior.mu_prec) - np.log(hp.b_mu)[:, None]
    )))
    kl_sigma = float(np.sum(_kl_gamma(
        posterior.sigma_a, posterior.sigma_b,
        hp.a_sigma[:, None], hp.b_sigma[:, None],
    )))
    kl_rho = float(np.sum(_kl_gamma(
        posterior.rho_a, posterior.rho_b,
        hp.a_obs[:, None], hp.b_obs[:, None],
    )))

    sign_f, logdet_f = np.linalg.slogdet(posterior.f_cov)
    sign_h, logdet_h = np.linalg.slogdet(posterior.h_cov)
    if np.any(sign_f <= 0) or np.any(sign_h <= 0):
        raise NumericalError("non-SPD row covariance in divergence computation")
    log_zeta = np.log(hp.zeta).sum(axis=1)
    log_eta = np.log(hp.eta).sum(axis=1)
    tr_f = np.einsum("kd,kdd->k", hp.zeta, posterior.f_cov)
    quad_f = np.einsum("kda,ka->k", posterior.f_mean**2, hp.zeta)
    kl_f = float(np.sum(0.5 * (
        dx * tr_f + quad_f - dx * dx - dx * log_zeta - dx * logdet_f
    )))
    tr_h = np.einsum("kd,kdd->k", hp.eta, posterior.h_cov)
    quad_h = np.einsum("kda,ka,kd->k", posterior.h_mean**2, hp.eta, exps.e_rho)
    kl_h = float(np.sum(0.5 * (
        dz * tr_h + quad_h - dz * dx - dz * log_eta - dz * logdet_h
    )))
    kl_theta = kl_mu + kl_sigma + kl_rho + kl_f + kl_h

    return {
        "e_loglik": e_loglik,
        "entropy_x": entropy_x,
        "entropy_s": entropy_s,
        "kl_init": kl_init,
        "kl_trans": kl_trans,
        "kl_beta": kl_beta_sticks,
        "kl_indicator": kl_indicator,
        "kl_theta": kl_theta,
    }


def compute_elbo(
    posterior: VariationalPosterior,
    marginals: ModeMarginals,
    smoothed: list[SmoothedMoments],
    obs: ObservationSet,
    hp: Hyperparameters,
    exps: Optional[ModeExpectations] = None,
) -> float:
    """Scalar bound; raises naming the first non-finite term."""
    terms = elbo_terms(posterior, marginals, smoothed, obs, hp, exps)
    for name, value in terms.items():
        if not np.isfinite(value):
            raise NumericalError(f"non-finite objective term: {name}")
    return (
        terms["e_loglik"] + terms["entropy_x"] + terms["entropy_s"]
        - terms["kl_init"] - terms["kl_trans"] - terms["kl_beta"]
        - terms["kl_indicator"] - terms["kl_theta"]
    )


def vbem_iterate(state: VbemState) -> VbemState:
    """One full sweep in fixed order: trajectory factor, chain factor,
    parameter updates, objective, then optional concentration refresh."""
    hp, opts, obs = state.hp, state.opts, state.obs
    post = state.posterior
    try:
        exps = state.exps if state.exps is not None else mode_expectations(post)
        unary_for_x = state.marginals.unary if state.marginals is not None else state.init_resp

        aux_x = lambda_x_from_expectations(exps, unary_for_x)
        smoothed = [rts_smooth(aux_x, obs.sequences[n]) for n in range(obs.n_sequences)]
        if state.iteration < opts.init_hold_sweeps:
            # burn-in: the chain factor stays pinned to the seeded
            # segmentation while the parameter updates (still exact
            # coordinate steps) let the modes specialize; released too
            # early, the chain assigns everything to the single best mode
            # because switching costs several nats and fresh modes differ
            # by far less than that
            aux_s = None
            marginals = _product_marginals(state.init_resp)
        else:
            aux_s = lambda_s_from_expectations(post, exps, smoothed, obs)
            marginals = forward_backward(aux_s)

        counts = (
            marginals.pairwise.sum(axis=0)
            if marginals.pairwise.size
            else np.zeros((hp.trunc_k, hp.trunc_k))
        )
        if opts.freeze_phi:
            phi = post.phi
        else:
            phi = _engine_update_indicators(
                post, counts, post.alpha_point, post.kappa_point
            )
        stick_u, stick_v = sticks.update_sticks(phi, hp.gamma)
        trans_elog = sticks.expected_log_trans_sticks(post.trans_u, post.trans_v)
        init_u, init_v, trans_u, trans_v = _engine_update_transition_sticks(
            phi, trans_elog, counts, marginals.unary[0],
            hp.alpha0, post.alpha_point, post.kappa_point,
        )
        post = replace(
            post, phi=phi, stick_u=stick_u, stick_v=stick_v,
            init_u=init_u, init_v=init_v, trans_u=trans_u, trans_v=trans_v,
        )
        post = update_mode_parameters(post, hp, marginals, smoothed, obs)

        exps_new = mode_expectations(post)
        elbo = compute_elbo(post, marginals, smoothed, obs, hp, exps_new)

        if hp.update_concentrations:
            conc = sticks.update_concentrations(
                post.phi, post.trans_u, post.trans_v,
                hp.a_alpha_prior, hp.b_alpha_prior,
                hp.u_kappa_prior, hp.v_kappa_prior,
            )
            post = replace(post, alpha_point=conc.alpha, kappa_point=conc.kappa)
    except NumericalError as exc:
        raise NumericalError(f"iteration {state.iteration + 1}: {exc}") from exc

    soft, hard = state.soft_breaches, state.hard_breaches
    if np.isfinite(state.elbo):
        drop = state.elbo - elbo
        if drop > opts.elbo_decrease_tolerance * max(abs(state.elbo), 1e-10):
            warnings.warn(
                f"objective dropped by {drop:.3e} at iteration {state.iteration + 1}",
                ElboDecreaseWarning,
            )
            hard += 1
        elif drop > 1e-8:
            soft += 1

    trace = state.elbo_trace + [elbo] if opts.track_trace else [elbo]
    return VbemState(
        hp=hp, opts=opts, obs=obs, posterior=post, init_resp=state.init_resp,
        marginals=marginals, smoothed=smoothed, aux_s=aux_s, exps=exps_new,
        elbo=elbo, elbo_trace=trace, iteration=state.iteration + 1,
        soft_breaches=soft, hard_breaches=hard, seed=state.seed,
    )


def _run_restart(
    obs: ObservationSet, hp: Hyperparameters, opts: FitOptions, seed: int
) -> tuple[VbemState, bool]:
    state = init_state(obs, hp, opts, seed)
    converged = False
    for _ in range(opts.max_iters):
        prev = state.elbo
        state = vbem_iterate(state)
        if np.isfinite(prev):
            rel = abs(state.elbo - prev) / max(abs(prev), 1e-10)
            if rel < opts.elbo_rel_tol:
                converged = True
                break
    return state, converged


def fit(obs: ObservationSet, hp: Hyperparameters, opts: FitOptions = FitOptions()) -> FitResult:
    """Run seeded independent restarts and keep the highest final objective."""
    validate_config(hp, obs)
    best: Optional[tuple[VbemState, bool]] = None
    failures: list[str] = []
    for r in range(opts.restarts):
        seed = opts.seed + r
        try:
            state, converged = _run_restart(obs, hp, opts, seed)
        except NumericalError as exc:
            failures.append(f"restart {r} (seed {seed}): {exc}")
            continue
        if best is None or state.elbo > best[0].elbo:
            best = (state, converged)
    if best is None:
        raise NumericalError(
            "all restarts failed numerically: " + "; ".join(failures)
        )
    state, converged = best
    aux_s = state.aux_s
    if aux_s is None:
        # single-sweep fit: build the chain potentials once for decoding
        aux_s = lambda_s_from_expectations(state.posterior, state.exps, state.smoothed, obs)
    return FitResult(
        posterior=state.posterior,
        mode_marginals=state.marginals.unary,
        map_modes=map_sequence(aux_s),
        smoothed=state.smoothed,
        elbo_trace=np.asarray(state.elbo_trace),
        converged=converged,
        iterations=state.iteration,
        seed=state.seed,
    )
