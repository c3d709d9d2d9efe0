"""Blocked Gibbs sampler for the logit stick-breaking mixture of VAR(1) models.

One sweep, in order:

0. impute missing responses (:mod:`lsbvar.missing`);
1. ``b`` and 2. ``gamma``: Gaussian multivariate-regression conditionals;
3. ``Sigma``: inverse-Wishart;
4. allocations: categorical, computed in log space;
5. atoms: Gaussian per component, empty components drawn from
   ``N(phi_00, V_0)``;
6. stick parameters: Polya-Gamma augmented logistic regressions on the risk
   sets ``{i : G_i >= h}`` (or Beta stick fractions for the truncated DP);
7. ``(phi_00, V_0)``: normal-inverse-Wishart.

Each ``*_conditional`` function returns the parameters of a full
conditional; the matching ``update_*`` function draws from it.
"""

import logging
import os
import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import logsumexp

from . import missing
from .linalg import (cholesky, draw_gaussian_precision, draw_invwishart,
                     gaussian_from_precision, kron_linear, kron_precision,
                     spd_inverse)
from .model import ChainState
from .polyagamma import sample_polya_gamma
from .priors import compute_weights, log_compute_weights, stick_weights

log = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)

PURPOSES = {"mcmc": 0, "init": 1, "predict": 2, "simulate": 3, "postprocess": 4}


def make_rng(seed, chain=0, purpose="mcmc"):
    """Generator for one ``(chain, purpose)`` stream of a root seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(chain), PURPOSES[purpose]))
    return np.random.Generator(np.random.PCG64(ss))


class SamplerError(RuntimeError):
    """A Gibbs update failed; carries the iteration and a state dump path."""

    def __init__(self, message, iteration=None, dump_path=None):
        super().__init__(f"iteration {iteration}: {message}"
                         + (f" (state dumped to {dump_path})" if dump_path else ""))
        self.iteration = iteration
        self.dump_path = dump_path


@dataclass(frozen=True)
class SamplerConfig:
    """MCMC run length and prior family.

    ``prior`` is ``"lsb"`` (logit stick-breaking) or ``"dp"`` (truncated
    Dirichlet process with total mass ``dp_mass``).  Stored samples are the
    iterations ``burn_in + thin, burn_in + 2 thin, ...``, i.e.
    ``(n_iter - burn_in) // thin`` of them.
    """

    n_iter: int = 2000
    burn_in: int = 1000
    thin: int = 1
    seed: int = 0
    prior: str = "lsb"
    dp_mass: float = 1.0
    checkpoint_every: int = 1000
    record_loglik: bool = True

    def __post_init__(self):
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("burn_in must satisfy 0 <= burn_in < n_iter")
        if self.prior not in ("lsb", "dp"):
            raise ValueError("prior must be 'lsb' or 'dp'")
        if self.prior == "dp" and not self.dp_mass > 0:
            raise ValueError("dp_mass must be positive")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be at least 1")

    @property
    def n_samples(self):
        return (self.n_iter - self.burn_in) // self.thin

    def stores(self, it):
        """Whether 1-based iteration ``it`` is kept."""
        return it > self.burn_in and (it - self.burn_in) % self.thin == 0

    def to_dict(self):
        return asdict(self)


# --- residual bookkeeping ---------------------------------------------------

def lagged(y, ds):
    """``y_{t-1}`` for every row, with ``y_0 = 0``."""
    lag = np.zeros_like(y)
    if y.shape[0]:
        lag[1:] = y[:-1]
        lag[ds.first_row] = 0.0
    return lag


def _x_effect(state, ds):
    if ds.tv_cov_dim == 0:
        return np.zeros((ds.n_rows, state.k))
    return ds.x @ state.b.reshape(state.k, -1).T


def _z_effect(state, ds):
    """``Gamma z_i`` per subject, shape (N, k)."""
    return ds.z @ state.gamma.reshape(state.k, -1).T


def _ar_effect(state, ds, ylag):
    phis = state.atoms[state.alloc][ds.row_subject]
    return np.einsum("rjl,rl->rj", phis, ylag)


def component_weights(state, ds, config):
    """``(N, H)`` mixture weights of every subject under the current state."""
    if config.prior == "dp":
        w = stick_weights(state.sticks)
        return np.broadcast_to(w, (ds.n_subjects, w.shape[0]))
    return compute_weights(state.alphas, ds.z)


def log_component_weights(state, ds, config):
    if config.prior == "dp":
        with np.errstate(divide="ignore"):
            lw = np.log(stick_weights(state.sticks))
        return np.broadcast_to(lw, (ds.n_subjects, lw.shape[0]))
    return log_compute_weights(state.alphas, ds.z)


# --- step 1: b ----------------------------------------------------------------

def b_conditional(state, ds, hp):
    """``(mean, precision)`` of ``b | rest``."""
    k, p = hp.k, hp.p
    prior_prec = spd_inverse(hp.Sigma_B, "Sigma_B") if p else np.zeros((0, 0))
    if p == 0:
        return np.zeros(0), prior_prec
    if ds.n_subjects == 0:
        return np.zeros(k * p), prior_prec
    y = state.y
    w = y - _ar_effect(state, ds, lagged(y, ds)) - _z_effect(state, ds)[ds.row_subject]
    sigma_inv = spd_inverse(state.sigma, "Sigma")
    prec = kron_precision(sigma_inv, ds.x.T @ ds.x) + prior_prec
    mean, _ = gaussian_from_precision(prec, kron_linear(ds.x.T @ w, sigma_inv))
    return mean, prec


def update_b(state, ds, hp, rng):
    mean, prec = b_conditional(state, ds, hp)
    if mean.size == 0:
        return mean
    return draw_gaussian_precision(prec, prec @ mean, rng, "b precision")


# --- step 2: gamma ------------------------------------------------------------

def gamma_conditional(state, ds, hp):
    """``(mean, precision)`` of ``gamma | rest``; ``z_i`` is repeated ``T_i`` times."""
    k, q = hp.k, hp.q
    prior_prec = spd_inverse(hp.Sigma_Gamma, "Sigma_Gamma")
    if ds.n_subjects == 0:
        return np.zeros(k * q), prior_prec
    y = state.y
    w = y - _ar_effect(state, ds, lagged(y, ds)) - _x_effect(state, ds)
    w_sum = np.add.reduceat(w, ds.offsets, axis=0)
    ztz = (ds.z * ds.lengths[:, None]).T @ ds.z
    sigma_inv = spd_inverse(state.sigma, "Sigma")
    prec = kron_precision(sigma_inv, ztz) + prior_prec
    mean, _ = gaussian_from_precision(prec, kron_linear(ds.z.T @ w_sum, sigma_inv))
    return mean, prec


def update_gamma(state, ds, hp, rng):
    mean, prec = gamma_conditional(state, ds, hp)
    return draw_gaussian_precision(prec, prec @ mean, rng, "gamma precision")


# --- step 3: Sigma ------------------------------------------------------------

def residuals(state, ds):
    """``y_it - Phi_i y_{it-1} - B x_it - Gamma z_i`` for every row."""
    y = state.y
    return (y - _ar_effect(state, ds, lagged(y, ds)) - _x_effect(state, ds)
            - _z_effect(state, ds)[ds.row_subject])


def sigma_conditional(state, ds, hp):
    """``(df, scale)`` of the inverse-Wishart conditional of Sigma."""
    scale = hp.sigma_iw_scale()
    if ds.n_subjects:
        r = residuals(state, ds)
        scale = scale + r.T @ r
    return hp.nu + ds.n_rows, 0.5 * (scale + scale.T)


def update_sigma(state, ds, hp, rng):
    df, scale = sigma_conditional(state, ds, hp)
    cholesky(scale, "Sigma posterior scale")
    return draw_invwishart(df, scale, rng)


# --- step 4: allocations --------------------------------------------------------

def subject_stats(state, ds):
    """Per-subject cross products of lagged responses ``u_t = y_{t-1}`` and
    covariate-adjusted responses ``r_t = y_t - B x_t - Gamma z``.

    Returns ``(uu, ur, rr)``, each (N, k, k): ``sum_t u_t u_t^T``,
    ``sum_t u_t r_t^T`` and ``sum_t r_t r_t^T``.
    """
    y = state.y
    u = lagged(y, ds)
    r = y - _x_effect(state, ds) - _z_effect(state, ds)[ds.row_subject]
    def per_subject(a, b):
        return np.add.reduceat(a[:, :, None] * b[:, None, :], ds.offsets, axis=0)
    return per_subject(u, u), per_subject(u, r), per_subject(r, r)


def component_loglik(state, ds, stats=None):
    """``(H, N)`` log-likelihood of every trajectory under every atom, up to a
    constant shared by all atoms.

    Uses ``sum_t |r_t - Phi u_t|^2_Sigma^-1 = tr(S^-1 rr) - 2 tr(S^-1 Phi ur)
    + tr(Phi^T S^-1 Phi uu)`` so the cost does not grow with ``H * sum T_i``.
    """
    uu, ur, rr = subject_stats(state, ds) if stats is None else stats
    H = state.H
    sigma_inv = spd_inverse(state.sigma, "Sigma")
    a = sigma_inv @ state.atoms                           # (H, k, k)
    c = np.swapaxes(state.atoms, 1, 2) @ a                # Phi^T S^-1 Phi
    n = uu.shape[0]
    cross = a.reshape(H, -1) @ np.swapaxes(ur, 1, 2).reshape(n, -1).T
    quad = c.reshape(H, -1) @ uu.reshape(n, -1).T
    base = rr.reshape(n, -1) @ sigma_inv.reshape(-1)
    return -0.5 * (base[None, :] - 2.0 * cross + quad)


def allocation_logprobs(state, ds, hp, config, stats=None):
    """Normalised ``(N, H)`` log posterior probabilities of the allocations."""
    logp = log_component_weights(state, ds, config) + component_loglik(state, ds, stats).T
    bad = np.nonzero(~np.isfinite(logp).any(axis=1) | np.isnan(logp).any(axis=1))[0]
    if bad.size:
        raise FloatingPointError(f"no component has finite log probability for subjects {bad[:10]}")
    return logp - logsumexp(logp, axis=1, keepdims=True)


def update_allocations(state, ds, hp, rng, config=None, stats=None):
    config = config or SamplerConfig()
    if ds.n_subjects == 0:
        return np.zeros(0, dtype=int)
    if state.H == 1:
        return np.zeros(ds.n_subjects, dtype=int)
    cum = np.cumsum(np.exp(allocation_logprobs(state, ds, hp, config, stats)), axis=1)
    u = rng.random(ds.n_subjects)[:, None] * cum[:, -1:]
    return np.minimum((u >= cum).sum(axis=1), state.H - 1)


# --- step 5: atoms ------------------------------------------------------------

def atom_conditionals(state, ds, hp, stats=None):
    """``(means, precisions)`` of every ``vec(Phi_0h) | rest``; shapes
    ``(H, k^2)`` and ``(H, k^2, k^2)``."""
    k, H = state.k, state.H
    v0_inv = spd_inverse(state.v_0, "V_0")
    prec = np.broadcast_to(v0_inv, (H, k * k, k * k)).copy()
    lin = np.broadcast_to(v0_inv @ state.phi_00, (H, k * k)).copy()
    if ds.n_subjects:
        xx, xr, _ = subject_stats(state, ds) if stats is None else stats
        xx_h = np.zeros((H, k, k))
        xr_h = np.zeros((H, k, k))
        np.add.at(xx_h, state.alloc, xx)
        np.add.at(xr_h, state.alloc, xr)
        sigma_inv = spd_inverse(state.sigma, "Sigma")
        occupied = np.unique(state.alloc)
        for h in occupied:
            prec[h] += kron_precision(sigma_inv, xx_h[h])
            lin[h] += kron_linear(xr_h[h], sigma_inv)
    chol = np.linalg.cholesky(prec)
    means = np.linalg.solve(prec, lin[..., None])[..., 0]
    return means, prec, chol


def update_atoms(state, ds, hp, rng, stats=None):
    means, prec, chol = atom_conditionals(state, ds, hp, stats)
    eps = rng.standard_normal(means.shape)
    noise = np.linalg.solve(np.swapaxes(chol, -1, -2), eps[..., None])[..., 0]
    return (means + noise).reshape(state.H, state.k, state.k)


# --- step 6: stick parameters -------------------------------------------------

def _alpha_parts(h, state, ds, hp, omega):
    """Precision and linear term of the ``alpha_h`` conditional."""
    prec = spd_inverse(hp.Sigma_alpha, "Sigma_alpha")
    lin = prec @ hp.mu_alpha
    risk = state.alloc >= h
    if risk.any():
        zr = ds.z[risk]
        kappa = (state.alloc[risk] == h) - 0.5
        prec = prec + (zr * np.asarray(omega)[:, None]).T @ zr
        lin = lin + zr.T @ kappa
    return prec, lin


def alpha_conditional(h, state, ds, hp, omega):
    """``(mean, precision)`` of ``alpha_h`` given Polya-Gamma latents ``omega``
    for the risk set ``{i : G_i >= h}`` (0-based ``h``)."""
    prec, lin = _alpha_parts(h, state, ds, hp, omega)
    mean, _ = gaussian_from_precision(prec, lin)
    return mean, prec


def update_alphas(state, ds, hp, rng):
    """Draw the Polya-Gamma latents and then every ``alpha_h``.

    Returns ``(alphas, pg)`` with ``pg`` of shape (N, H-1), NaN outside the
    risk sets; a stick with an empty risk set is drawn from its prior.
    """
    H, q = state.H, hp.q
    alphas = np.empty((H - 1, q))
    pg = np.full((ds.n_subjects, H - 1), np.nan)
    if H == 1:
        return alphas, pg
    risk = state.alloc[:, None] >= np.arange(H - 1)[None, :]
    if ds.n_subjects:
        eta = ds.z @ state.alphas.T
        pg[risk] = sample_polya_gamma(eta[risk], rng)
    for h in range(H - 1):
        omega = pg[risk[:, h], h] if ds.n_subjects else np.zeros(0)
        prec, lin = _alpha_parts(h, state, ds, hp, omega)
        alphas[h] = draw_gaussian_precision(prec, lin, rng, "alpha precision")
    return alphas, pg


def dp_stick_params(alloc, H, mass):
    """Beta parameters of the truncated-DP stick fractions ``V_1..V_{H-1}``."""
    counts = np.bincount(np.asarray(alloc, dtype=int), minlength=H)[:H]
    tail = np.cumsum(counts[::-1])[::-1]
    later = np.append(tail[1:], 0)
    return 1.0 + counts[:-1], mass + later[:-1]


def update_dp_sticks(state, config, rng):
    """Stick fractions ``V_h ~ Beta(1 + n_h, M + sum_{l>h} n_l)``; ``V_H = 1``."""
    a, b = dp_stick_params(state.alloc, state.H, config.dp_mass)
    return rng.beta(a, b) if a.size else np.zeros(0)


# --- step 7: (phi_00, V_0) ------------------------------------------------------

def hyper_conditional(state, hp):
    """Normal-inverse-Wishart conditional of ``(phi_00, V_0)`` given the atoms.

    Returns ``(mean, shrink, df, scale)``: ``V_0 ~ IW(df, scale)`` and
    ``phi_00 | V_0 ~ N(mean, V_0 / shrink)``.
    """
    H, lam = state.H, hp.lam
    phis = state.atoms.reshape(H, -1)
    bar = phis.mean(axis=0)
    dev = phis - bar
    spread = dev.T @ dev
    gap = bar - hp.phi_000
    scale = hp.V_00 + spread + (H * lam / (H + lam)) * np.outer(gap, gap)
    mean = (H * bar + lam * hp.phi_000) / (H + lam)
    return mean, H + lam, hp.tau_0 + H, 0.5 * (scale + scale.T)


def update_hyper(state, hp, rng):
    mean, shrink, df, scale = hyper_conditional(state, hp)
    v_0 = draw_invwishart(df, scale, rng)
    chol = cholesky(v_0 / shrink, "V_0")
    phi_00 = mean + chol @ rng.standard_normal(mean.shape[0])
    return phi_00, v_0


# --- sweep and chain ----------------------------------------------------------

def simulate_responses(state, ds, rng):
    """Responses drawn from the model at ``state`` on the design of ``ds``.

    Returns an array shaped like ``ds.y`` (every entry filled).
    """
    k = state.k
    m = _x_effect(state, ds) + _z_effect(state, ds)[ds.row_subject]
    eps = rng.standard_normal((ds.n_rows, k)) @ cholesky(state.sigma, "Sigma").T
    y = np.empty((ds.n_rows, k))
    phis = state.atoms[state.alloc]
    for i in range(ds.n_subjects):
        prev = np.zeros(k)
        for r in range(ds.offsets[i], ds.offsets[i] + ds.lengths[i]):
            prev = phis[i] @ prev + m[r] + eps[r]
            y[r] = prev
    return y


def draw_from_prior(ds, hp, rng, config=None):
    """A state drawn from the joint prior (responses copied from ``ds``)."""
    config = config or SamplerConfig()
    k, H, q = hp.k, hp.H, hp.q
    d = k * k
    v_0 = draw_invwishart(hp.tau_0, hp.V_00, rng)
    phi_00 = hp.phi_000 + cholesky(v_0 / hp.lam) @ rng.standard_normal(d)
    atoms = (phi_00 + rng.standard_normal((H, d)) @ cholesky(v_0).T).reshape(H, k, k)
    alphas = (hp.mu_alpha + rng.standard_normal((H - 1, q)) @ cholesky(hp.Sigma_alpha).T
              if H > 1 else np.zeros((0, q)))
    sticks = rng.beta(1.0, config.dp_mass, size=H - 1)
    kp = hp.Sigma_B.shape[0]
    b = cholesky(hp.Sigma_B) @ rng.standard_normal(kp) if kp else np.zeros(0)
    gamma = cholesky(hp.Sigma_Gamma) @ rng.standard_normal(k * q)
    sigma = draw_invwishart(hp.nu, hp.sigma_iw_scale(), rng)
    state = ChainState(b=b, gamma=gamma, sigma=sigma, atoms=atoms,
                       alloc=np.zeros(ds.n_subjects, dtype=int), alphas=alphas,
                       phi_00=phi_00, v_0=v_0, y=np.where(ds.observed, ds.y, 0.0),
                       pg=np.full((ds.n_subjects, H - 1), np.nan), sticks=sticks)
    if ds.n_subjects:
        w = component_weights(state, ds, config)
        cum = np.cumsum(w, axis=1)
        u = rng.random(ds.n_subjects)[:, None] * cum[:, -1:]
        state.alloc = np.minimum((u >= cum).sum(axis=1), H - 1)
    return state


def initial_state(ds, hp, rng, config=None):
    """Starting point of a chain.

    Allocations are uniform over all ``H`` components, every atom starts at
    the pooled least-squares VAR(1) estimate, ``Sigma`` at its residual
    covariance (falling back to the identity), ``alpha = mu_alpha``,
    ``(phi_00, V_0) = (phi_000, V_00 / (tau_0 + k^2 + 1))`` (the prior mode)
    and missing responses at zero.
    """
    config = config or SamplerConfig()
    k, H, q, d = hp.k, hp.H, hp.q, hp.k * hp.k
    y = np.where(ds.observed, ds.y, 0.0)
    phi = np.eye(k)
    sigma = np.eye(k)
    if ds.n_subjects:
        ylag = lagged(y, ds)
        keep = ~ds.first_row & ds.observed.all(axis=1) & np.roll(ds.observed.all(axis=1), 1)
        if keep.sum() > k:
            coef, *_ = np.linalg.lstsq(ylag[keep], y[keep], rcond=None)
            phi = coef.T
            r = y[keep] - ylag[keep] @ coef
            s = r.T @ r / keep.sum()
            if np.all(np.linalg.eigvalsh(s) > 1e-8):
                sigma = 0.5 * (s + s.T)
    v_0 = hp.V_00 / (hp.tau_0 + d + 1.0)
    return ChainState(b=np.zeros(hp.Sigma_B.shape[0]), gamma=np.zeros(k * q),
                      sigma=sigma, atoms=np.repeat(phi[None], H, axis=0),
                      alloc=rng.integers(0, H, size=ds.n_subjects),
                      alphas=np.tile(hp.mu_alpha, (H - 1, 1)),
                      phi_00=hp.phi_000.copy(), v_0=v_0, y=y,
                      pg=np.full((ds.n_subjects, H - 1), np.nan),
                      sticks=np.full(H - 1, 1.0 / (1.0 + config.dp_mass)))


def gibbs_sweep(state, ds, hp, config, rng, impute=True):
    """One full sweep; updates ``state`` in place and returns it."""
    if impute and ds.has_missing:
        missing.impute_all(state, ds, rng)
    state.b = update_b(state, ds, hp, rng)
    state.gamma = update_gamma(state, ds, hp, rng)
    state.sigma = update_sigma(state, ds, hp, rng)
    stats = subject_stats(state, ds) if ds.n_subjects else None
    state.alloc = update_allocations(state, ds, hp, rng, config, stats)
    state.atoms = update_atoms(state, ds, hp, rng, stats)
    if config.prior == "lsb":
        state.alphas, state.pg = update_alphas(state, ds, hp, rng)
    else:
        state.sticks = update_dp_sticks(state, config, rng)
    state.phi_00, state.v_0 = update_hyper(state, hp, rng)
    return state


# --- pointwise log-likelihood ---------------------------------------------------

def _mixture_entry_logdens(comp, logw):
    """Per-entry conditionals of a mixture from per-component entry terms.

    ``comp`` is (H, n_entries) of per-component chain-rule terms for one or
    more subjects laid out as (H, N, E); ``logw`` is (N, H).
    """
    cum = np.cumsum(comp, axis=-1)
    joint = logsumexp(logw.T[..., None] + cum, axis=0)
    prev = np.concatenate([np.zeros(joint.shape[:-1] + (1,)), joint[..., :-1]], axis=-1)
    return joint - prev


def pointwise_loglik(state, ds, config):
    """Conditional log density of every observed response entry.

    Entries are ordered as ``ds.observed`` flattened (rows, then coordinates).
    Each value is ``log p(y_e | earlier observed entries of the same subject,
    parameters)`` with the component indicator integrated out under the
    subject's mixture weights, so the values of one subject sum to the log
    marginal density of its observed responses.
    """
    k, H = state.k, state.H
    logw = np.asarray(log_component_weights(state, ds, config))
    out = np.empty(ds.n_rows * k)
    if ds.n_subjects == 0:
        return out
    chol = cholesky(state.sigma, "Sigma")
    linv = np.linalg.inv(chol)
    log_diag = np.log(np.diag(chol))
    y = state.y
    r = y - _x_effect(state, ds) - _z_effect(state, ds)[ds.row_subject]
    ylag = lagged(y, ds)
    incomplete = set(missing.incomplete_subjects(ds).tolist())
    complete = np.array([i for i in range(ds.n_subjects) if i not in incomplete], dtype=int)

    # complete subjects grouped by length so each group is a dense (H, n, E) block
    for T in np.unique(ds.lengths[complete]) if complete.size else []:
        members = complete[ds.lengths[complete] == T]
        rows = (ds.offsets[members][:, None] + np.arange(T)[None, :]).reshape(-1)
        pred = np.einsum("rl,hjl->hrj", ylag[rows], state.atoms)
        u = (r[rows][None] - pred) @ linv.T
        terms = -0.5 * u * u - log_diag - 0.5 * _LOG_2PI
        comp = terms.reshape(H, members.size, T * k)
        vals = _mixture_entry_logdens(comp, logw[members])
        idx = (rows[:, None] * k + np.arange(k)[None, :]).reshape(members.size, T * k)
        out[idx.reshape(-1)] = vals.reshape(-1)

    for i in sorted(incomplete):
        s = ds.subject_slice(i)
        obs = ds.observed[s].reshape(-1)
        comp = np.stack([
            missing.observed_entry_logdens(
                missing.build_trajectory_law(state.atoms[h], state.b, state.gamma,
                                             state.sigma, ds.x[s], ds.z[i]),
                obs, y[s])
            for h in range(H)])
        vals = _mixture_entry_logdens(comp[:, None, :], logw[i:i + 1])[0]
        entries = np.arange(s.start * k, s.stop * k)[obs]
        out[entries] = vals
    return out[ds.observed.reshape(-1)]


# --- chain driver ---------------------------------------------------------------

def _dump_state(state, directory, it):
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"failed_state_iter{it}.npz")
    np.savez(path, **{k: v for k, v in state.__dict__.items() if v is not None})
    return path


def run_chain(ds, hp, config, chain=0, checkpoint_dir=None, resume=False,
              state=None, progress=None):
    """Run one chain and return its :class:`~lsbvar.store.SampleStore`.

    Parameters
    ----------
    ds : LongitudinalDataset
    hp : ModelHyperparams
    config : SamplerConfig
    chain : int
        Chain index; selects the random stream of ``config.seed``.
    checkpoint_dir : str, optional
        If given, state, RNG and the samples so far are written there every
        ``config.checkpoint_every`` iterations; with ``resume=True`` an
        existing checkpoint is picked up and the run continues bit-identically.
    state : ChainState, optional
        Explicit starting state (otherwise :func:`initial_state`).
    progress : callable, optional
        Called as ``progress(iteration, state)`` after every sweep.
    """
    from .store import SampleStore, load_checkpoint, save_checkpoint

    hp.check_dataset(ds)
    rng = make_rng(config.seed, chain, "mcmc")
    start = 0
    store = None
    if resume and checkpoint_dir is not None:
        ckpt = load_checkpoint(checkpoint_dir)
        if ckpt is not None:
            state, store, start, rng_state = ckpt
            rng.bit_generator.state = rng_state
            log.info("resuming chain %d at iteration %d", chain, start)
    if state is None:
        state = initial_state(ds, hp, make_rng(config.seed, chain, "init"), config)
    if store is None:
        store = SampleStore.allocate(ds, hp, config, chain)
    t0 = time.perf_counter()
    for it in range(start + 1, config.n_iter + 1):
        try:
            gibbs_sweep(state, ds, hp, config, rng)
            state.check()
        except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            dump = _dump_state(state, checkpoint_dir or os.getcwd(), it)
            raise SamplerError(str(exc), it, dump) from exc
        if config.stores(it):
            loglik = pointwise_loglik(state, ds, config) if config.record_loglik else None
            store.append(state, ds, loglik)
        if progress is not None:
            progress(it, state)
        if checkpoint_dir is not None and it % config.checkpoint_every == 0 and it < config.n_iter:
            save_checkpoint(checkpoint_dir, state, store, it, rng.bit_generator.state)
    store.meta["wall_seconds"] = time.perf_counter() - t0
    return store

