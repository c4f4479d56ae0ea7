"""Core domain types: hyperparameters, observation sets, and the variational posterior."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import sticks
from .errors import ConfigError


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


def _mode_vector(value, k: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(k, float(arr))
    if arr.shape != (k,):
        raise ConfigError(f"{name}: expected a scalar or {k} per-mode values, got shape {arr.shape}")
    return _readonly(arr)


def _mode_dim_matrix(value, k: int, d: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full((k, d), float(arr))
    elif arr.shape == (d,):
        arr = np.tile(arr, (k, 1))
    if arr.shape != (k, d):
        raise ConfigError(f"{name}: expected scalar, ({d},) or ({k}, {d}) values, got shape {arr.shape}")
    return _readonly(arr)


@dataclass(frozen=True)
class Hyperparameters:
    """Fixed model constants for one fit.

    Scalar entries for the per-mode fields broadcast to every mode.  The
    concentration-prior fields default to the values implied by `alpha` and
    `kappa` and only matter when `update_concentrations` is enabled.
    """

    dim_z: int
    dim_x: Optional[int] = None          # latent dimension, defaults to dim_z
    trunc_k: int = 20                    # truncation level of the mode set
    gamma: float = 1.0                   # top-level stick concentration
    alpha0: float = 1.0                  # initial-state stick concentration
    alpha: float = 1.0                   # transition stick concentration
    kappa: float = 64.0                  # self-transition bonus
    zeta: object = 10.0                  # (K, dim_x) ARD precisions, dynamics rows
    eta: object = 10.0                   # (K, dim_x) ARD precisions, emission rows
    a_sigma: object = 1.0                # (K,) initial-state precision shape
    b_sigma: object = 100.0              # (K,) initial-state precision rate
    b_mu: object = 100.0                 # (K,) prior precision of initial-state means
    a_obs: object = 1.0                  # (K,) observation precision shape
    b_obs: object = 100.0                # (K,) observation precision rate
    a_alpha_prior: Optional[float] = None
    b_alpha_prior: float = 1.0
    u_kappa_prior: Optional[float] = None
    v_kappa_prior: Optional[float] = None
    update_concentrations: bool = False

    def __post_init__(self):
        k = int(self.trunc_k)
        object.__setattr__(self, "trunc_k", k)
        object.__setattr__(self, "dim_z", int(self.dim_z))
        dx = self.dim_z if self.dim_x is None else int(self.dim_x)
        object.__setattr__(self, "dim_x", dx)
        object.__setattr__(self, "zeta", _mode_dim_matrix(self.zeta, k, dx, "zeta"))
        object.__setattr__(self, "eta", _mode_dim_matrix(self.eta, k, dx, "eta"))
        for name in ("a_sigma", "b_sigma", "b_mu", "a_obs", "b_obs"):
            object.__setattr__(self, name, _mode_vector(getattr(self, name), k, name))
        if self.a_alpha_prior is None:
            object.__setattr__(self, "a_alpha_prior", float(self.alpha + self.kappa))
        if self.u_kappa_prior is None:
            # the Beta prior must stay proper even in the non-sticky limit
            object.__setattr__(self, "u_kappa_prior", float(self.kappa) if self.kappa > 0 else 1.0)
        if self.v_kappa_prior is None:
            object.__setattr__(self, "v_kappa_prior", float(self.alpha))


@dataclass(frozen=True)
class ObservationSet:
    """N synchronized sequences sharing one mode chain.

    `sequences` has shape (n_sequences, n_steps, dim_z); `channel_scales`
    records the factors each channel has been divided by so far.
    """

    sequences: np.ndarray
    channel_scales: np.ndarray = None
    sample_rate_hz: Optional[float] = None

    def __post_init__(self):
        seq = np.asarray(self.sequences, dtype=float)
        if seq.ndim == 2:
            seq = seq[None, :, :]
        if seq.ndim != 3:
            raise ConfigError(f"sequences must be (N, T, dim_z), got shape {seq.shape}")
        if not np.all(np.isfinite(seq)):
            raise ConfigError("sequences contain non-finite entries")
        object.__setattr__(self, "sequences", _readonly(seq))
        scales = self.channel_scales
        if scales is None:
            scales = np.ones(seq.shape[2])
        scales = np.asarray(scales, dtype=float)
        if scales.shape != (seq.shape[2],):
            raise ConfigError("channel_scales must have one entry per channel")
        if np.any(scales <= 0.0) or not np.all(np.isfinite(scales)):
            raise ConfigError("channel_scales must be positive and finite")
        object.__setattr__(self, "channel_scales", _readonly(scales))

    @property
    def n_sequences(self) -> int:
        return self.sequences.shape[0]

    @property
    def n_steps(self) -> int:
        return self.sequences.shape[1]

    @property
    def dim_z(self) -> int:
        return self.sequences.shape[2]

    @classmethod
    def from_matrices(cls, matrices: Sequence[np.ndarray], sample_rate_hz=None) -> "ObservationSet":
        mats = [np.asarray(m, dtype=float) for m in matrices]
        shapes = {m.shape for m in mats}
        if len(shapes) != 1:
            raise ConfigError(f"all sequences must share one shape, got {sorted(shapes)}")
        return cls(sequences=np.stack(mats), sample_rate_hz=sample_rate_hz)


@dataclass(frozen=True)
class VariationalPosterior:
    """Every time-invariant variational parameter of the model.

    Shapes, with K modes, latent dimension p and channel dimension q:
    stick/init parameters (K-1,), transition parameters (K, K-1), indicator
    distributions (K, K, K), initial-state mean/precision (K, p), precision
    Gammas (K, p) / (K, q), dynamics rows (K, p, p) with one shared row
    covariance per mode, emission rows (K, q, p) with shared (K, p, p)
    covariance.
    """

    stick_u: np.ndarray
    stick_v: np.ndarray
    init_u: np.ndarray
    init_v: np.ndarray
    trans_u: np.ndarray
    trans_v: np.ndarray
    phi: np.ndarray
    mu_mean: np.ndarray
    mu_prec: np.ndarray
    sigma_a: np.ndarray
    sigma_b: np.ndarray
    f_mean: np.ndarray
    f_cov: np.ndarray
    rho_a: np.ndarray
    rho_b: np.ndarray
    h_mean: np.ndarray
    h_cov: np.ndarray
    alpha_point: float
    kappa_point: float

    @property
    def trunc_k(self) -> int:
        return self.phi.shape[0]

    @property
    def dim_x(self) -> int:
        return self.mu_mean.shape[1]

    @property
    def dim_z(self) -> int:
        return self.rho_a.shape[1]

    def validate(self) -> None:
        """Raise if any posterior invariant is violated."""
        row_sums = self.phi.sum(axis=2)
        if np.max(np.abs(row_sums - 1.0)) > 1e-12:
            raise ConfigError("indicator rows must sum to 1 within 1e-12")
        if np.any(self.phi < -1e-15):
            raise ConfigError("indicator rows must be nonnegative")
        for name in ("stick_u", "stick_v", "init_u", "init_v", "trans_u", "trans_v",
                     "mu_prec", "sigma_a", "sigma_b", "rho_a", "rho_b"):
            arr = getattr(self, name)
            if arr.size and np.min(arr) <= 0.0:
                raise ConfigError(f"{name} must be strictly positive")
        for name in ("f_cov", "h_cov"):
            cov = getattr(self, name)
            if np.max(np.abs(cov - np.swapaxes(cov, 1, 2))) > 1e-10:
                raise ConfigError(f"{name} blocks must be symmetric")
            if np.min(np.linalg.eigvalsh(cov)) <= 0.0:
                raise ConfigError(f"{name} blocks must be positive definite")
        if self.alpha_point <= 0.0 or self.kappa_point < 0.0:
            raise ConfigError("concentration point estimates out of range")


@dataclass(frozen=True)
class FitResult:
    """Outcome of one multi-restart fit."""

    posterior: VariationalPosterior
    mode_marginals: np.ndarray   # (T, K)
    map_modes: np.ndarray        # (T,) int
    smoothed: list               # per-sequence smoothed moments
    elbo_trace: np.ndarray
    converged: bool
    iterations: int
    seed: int


def validate_config(hp: Hyperparameters, obs: Optional[ObservationSet] = None) -> None:
    """Check every hyperparameter invariant, naming the offending field."""
    scalar_positive = {
        "gamma": hp.gamma,
        "alpha0": hp.alpha0,
        "alpha": hp.alpha,
        "a_alpha_prior": hp.a_alpha_prior,
        "b_alpha_prior": hp.b_alpha_prior,
        "u_kappa_prior": hp.u_kappa_prior,
        "v_kappa_prior": hp.v_kappa_prior,
    }
    for name, value in scalar_positive.items():
        if not np.isfinite(value) or value <= 0.0:
            raise ConfigError(f"{name} must be strictly positive, got {value}")
    if not np.isfinite(hp.kappa) or hp.kappa < 0.0:
        raise ConfigError(f"kappa must be nonnegative, got {hp.kappa}")
    for name in ("zeta", "eta", "a_sigma", "b_sigma", "b_mu", "a_obs", "b_obs"):
        arr = getattr(hp, name)
        if np.any(~np.isfinite(arr)) or np.min(arr) <= 0.0:
            raise ConfigError(f"{name} must be strictly positive")
    if hp.trunc_k < 2:
        raise ConfigError(f"trunc_k must be at least 2, got {hp.trunc_k}")
    if hp.dim_x < 1:
        raise ConfigError(f"dim_x must be at least 1, got {hp.dim_x}")
    if hp.dim_z < 1:
        raise ConfigError(f"dim_z must be at least 1, got {hp.dim_z}")
    if obs is not None and obs.dim_z != hp.dim_z:
        raise ConfigError(
            f"dimension mismatch: data has {obs.dim_z} channels but dim_z = {hp.dim_z}"
        )


def init_posterior(hp: Hyperparameters, rng_seed: int = 0) -> VariationalPosterior:
    """Prior-valued posterior for the start of a fit.

    Deterministic given the seed; the seed itself only drives the first-sweep
    mode responsibilities drawn by the engine, never these parameters.
    """
    k, dx, dz = hp.trunc_k, hp.dim_x, hp.dim_z
    stick_u = np.ones(k - 1)
    stick_v = np.full(k - 1, hp.gamma)
    prior_sticks = sticks.stick_expectations(stick_u, stick_v)
    phi = sticks.prior_indicator(hp.alpha, hp.kappa, prior_sticks.e_beta)

    eye = np.eye(dx)
    return VariationalPosterior(
        stick_u=stick_u,
        stick_v=stick_v,
        init_u=np.ones(k - 1),
        init_v=np.full(k - 1, hp.alpha0),
        trans_u=np.ones((k, k - 1)),
        trans_v=np.full((k, k - 1), hp.alpha + hp.kappa),
        phi=phi,
        mu_mean=np.zeros((k, dx)),
        mu_prec=np.tile(hp.b_mu[:, None], (1, dx)),
        sigma_a=np.tile(hp.a_sigma[:, None], (1, dx)),
        sigma_b=np.tile(hp.b_sigma[:, None], (1, dx)),
        f_mean=np.zeros((k, dx, dx)),
        f_cov=eye[None, :, :] / hp.zeta[:, :, None],
        rho_a=np.tile(hp.a_obs[:, None], (1, dz)),
        rho_b=np.tile(hp.b_obs[:, None], (1, dz)),
        # identity embedding rather than the zero prior mean: an all-zero
        # emission map is a fixed point of the coordinate updates (the first
        # smoothing pass would carry no data and every later update would
        # return zero again), so fits could never leave it
        h_mean=np.tile(np.eye(dz, dx), (k, 1, 1)),
        h_cov=eye[None, :, :] / hp.eta[:, :, None],
        alpha_point=float(hp.alpha),
        kappa_point=float(hp.kappa),
    )


def rescale_observations(obs: ObservationSet, scales: Optional[np.ndarray] = None) -> ObservationSet:
    """Divide each channel by its scale; default scales give unit sample variance.

    With `scales=None` the factor is the pooled sample standard deviation
    (ddof=1) of each channel across all sequences and steps.  Explicit scales
    reproduce any fixed convention.  The applied factors accumulate into
    `channel_scales` so the inverse transform is exact.
    """
    if obs.n_steps < 2:
        raise ConfigError("rescaling requires at least 2 steps per sequence")
    if scales is None:
        pooled = obs.sequences.reshape(-1, obs.dim_z)
        scales = np.std(pooled, axis=0, ddof=1)
        for d, s in enumerate(scales):
            if s <= 0.0:
                raise ConfigError(f"channel {d} has zero variance; cannot rescale")
    else:
        scales = np.asarray(scales, dtype=float)
        if scales.shape != (obs.dim_z,):
            raise ConfigError(f"expected {obs.dim_z} scales, got shape {scales.shape}")
        if np.any(scales <= 0.0):
            raise ConfigError("explicit scales must be strictly positive")
    return ObservationSet(
        sequences=obs.sequences / scales,
        channel_scales=obs.channel_scales * scales,
        sample_rate_hz=obs.sample_rate_hz,
    )


def inverse_rescale(obs: ObservationSet) -> ObservationSet:
    """Undo all recorded channel scaling exactly."""
    return ObservationSet(
        sequences=obs.sequences * obs.channel_scales,
        channel_scales=np.ones(obs.dim_z),
        sample_rate_hz=obs.sample_rate_hz,
    )
