"""Logit stick-breaking weights, prior cluster-count simulation and
MLE-based hyperparameter elicitation."""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .model import ModelHyperparams


def stick_weights(fractions):
    """Stick-breaking weights from stick fractions.

    Parameters
    ----------
    fractions : ndarray, shape (..., H - 1)
        Fractions ``v_1..v_{H-1}``; the last fraction is fixed to one.

    Returns
    -------
    ndarray, shape (..., H)
        ``w_h = v_h * prod_{l<h} (1 - v_l)`` with the leftover stick in the
        last slot.
    """
    v = np.asarray(fractions, dtype=float)
    return _weights_from(v, 1.0 - v)


def _weights_from(v, one_minus_v):
    lead = v.shape[:-1]
    n_sticks = v.shape[-1]
    w = np.empty(lead + (n_sticks + 1,))
    remaining = np.ones(lead)
    for h in range(n_sticks):
        w[..., h] = v[..., h] * remaining
        remaining = remaining * one_minus_v[..., h]
    w[..., n_sticks] = remaining
    return w


def compute_weights(alphas, z):
    """Logit stick-breaking weights ``w(z)``.

    Parameters
    ----------
    alphas : ndarray, shape (H - 1, q)
    z : ndarray, shape (q,) or (N, q)

    Returns
    -------
    ndarray, shape (H,) or (N, H)
    """
    alphas = np.asarray(alphas, dtype=float)
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    zz = np.atleast_2d(z)
    if alphas.ndim != 2:
        raise ValueError("alphas must have shape (H - 1, q)")
    if alphas.shape[0] and zz.shape[1] != alphas.shape[1]:
        raise ValueError(f"z has dimension {zz.shape[1]}, alphas have {alphas.shape[1]}")
    eta = zz @ alphas.T if alphas.shape[0] else np.zeros((zz.shape[0], 0))
    # expit(-eta) keeps 1 - v accurate when v is close to one
    w = _weights_from(expit(eta), expit(-eta))
    return w[0] if single else w


def log_compute_weights(alphas, z):
    """``log w(z)`` evaluated in log space (no underflow to -inf for moderate eta)."""
    alphas = np.asarray(alphas, dtype=float)
    zz = np.atleast_2d(np.asarray(z, dtype=float))
    eta = zz @ alphas.T if alphas.shape[0] else np.zeros((zz.shape[0], 0))
    log_v = -np.logaddexp(0.0, -eta)
    log_1mv = -np.logaddexp(0.0, eta)
    cum = np.concatenate([np.zeros((zz.shape[0], 1)), np.cumsum(log_1mv, axis=1)], axis=1)
    out = cum.copy()
    out[:, :-1] += log_v
    return out[0] if np.ndim(z) == 1 else out


def prior_cluster_monte_carlo(Z, H, sigma_alpha_sq, draws, seed=None, mu_alpha=None):
    """Prior number of occupied components and largest-cluster share.

    For each draw, ``alpha_h ~ N(mu_alpha, sigma_alpha_sq * I)``; every row of
    ``Z`` is allocated with probabilities ``w(z_i)``.

    Returns
    -------
    n_clusters : ndarray of int, shape (draws,)
    max_fraction : ndarray, shape (draws,)
    """
    if H < 1:
        raise ValueError("H must be at least 1")
    if draws < 1:
        raise ValueError("draws must be at least 1")
    if not sigma_alpha_sq > 0:
        raise ValueError("sigma_alpha_sq must be positive")
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n, q = Z.shape
    mu = np.zeros(q) if mu_alpha is None else np.asarray(mu_alpha, dtype=float)
    rng = np.random.default_rng(seed)
    n_clusters = np.ones(draws, dtype=int)
    max_fraction = np.ones(draws)
    if H == 1 or n == 0:
        return n_clusters, max_fraction
    sd = np.sqrt(sigma_alpha_sq)
    chunk = max(1, 2_000_000 // (n * H))
    for start in range(0, draws, chunk):
        m = min(chunk, draws - start)
        alphas = mu + sd * rng.standard_normal((m, H - 1, q))
        eta = Z @ np.swapaxes(alphas, 1, 2)                # (m, n, H-1)
        cum = np.cumsum(_weights_from(expit(eta), expit(-eta)), axis=2)
        u = rng.random((m, n, 1)) * cum[:, :, -1:]
        labels = np.minimum((u >= cum).sum(axis=2), H - 1)
        flat = (labels + H * np.arange(m)[:, None]).reshape(-1)
        counts = np.bincount(flat, minlength=m * H).reshape(m, H)
        n_clusters[start:start + m] = np.count_nonzero(counts, axis=1)
        max_fraction[start:start + m] = counts.max(axis=1) / n
    return n_clusters, max_fraction


# --- elicitation -------------------------------------------------------------

@dataclass(frozen=True)
class ElicitationResult:
    """Plug-in VAR(1) fit and the matched hyperparameters.

    ``Sigma_0`` is in the Wishart parameterisation used by
    :class:`~lsbvar.model.ModelHyperparams`.
    """

    phi_hat: np.ndarray
    sigma_hat: np.ndarray
    V_00: np.ndarray
    tau_0: float
    Sigma_0: np.ndarray
    nu: float
    n_subjects_used: int

    @property
    def phi_000(self):
        return self.phi_hat.reshape(-1)

    def apply(self, hp: ModelHyperparams) -> ModelHyperparams:
        """Copy of ``hp`` with the elicited atom and Sigma hyperparameters."""
        return hp.replace(phi_000=self.phi_000, lam=1.0, V_00=self.V_00,
                          tau_0=self.tau_0, Sigma_0=self.Sigma_0, nu=self.nu)


def fit_var1_mle(ds):
    """Least-squares / ML estimate of ``y_t = Phi y_{t-1} + e_t`` on complete cases.

    Only lag pairs inside each trajectory are used (no ``y_0`` term).
    """
    complete = [i for i in range(ds.n_subjects)
                if ds.observed[ds.subject_slice(i)].all()]
    if not complete:
        raise ValueError("no subject without missing responses")
    prev, curr = [], []
    for i in complete:
        y = ds.y[ds.subject_slice(i)]
        prev.append(y[:-1])
        curr.append(y[1:])
    X = np.vstack(prev)
    Y = np.vstack(curr)
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    phi = coef.T
    resid = Y - X @ coef
    sigma = resid.T @ resid / resid.shape[0]
    return phi, 0.5 * (sigma + sigma.T), len(complete)


def match_invwishart(mean, diag_var):
    """Inverse-Wishart ``(df, scale)`` with the given mean and average
    diagonal variance.

    Uses ``E[X] = S / (df - d - 1)`` and
    ``Var[X_ii] = 2 S_ii^2 / ((df - d - 1)^2 (df - d - 3))``; with
    ``S = mean * (df - d - 1)`` the variance condition reads
    ``mean(2 m_ii^2) / (df - d - 3) = diag_var``, solved for ``df``.
    """
    mean = np.atleast_2d(np.asarray(mean, dtype=float))
    d = mean.shape[0]
    if not diag_var > 0:
        raise ValueError(f"target diagonal variance must be positive, got {diag_var}")
    m2 = float(np.mean(np.diag(mean) ** 2))
    if not m2 > 0:
        raise ValueError("target mean has a zero diagonal")
    df = d + 3.0 + 2.0 * m2 / diag_var
    return df, mean * (df - d - 1.0)


def elicit_hyperparams(ds, v0_mean=None, v0_diag_var=1.5, sigma_diag_var=10.0):
    """Match the atom and Sigma hyperparameters to a plug-in VAR(1) fit.

    Targets ``E[V_0] = v0_mean`` (identity by default),
    ``Var[(V_0)_ii] = v0_diag_var``, ``E[Sigma] = sigma_hat`` and average
    ``Var[Sigma_ii] = sigma_diag_var``.
    """
    phi_hat, sigma_hat, n_used = fit_var1_mle(ds)
    k = phi_hat.shape[0]
    v0_mean = np.eye(k * k) if v0_mean is None else np.asarray(v0_mean, dtype=float)
    tau_0, V_00 = match_invwishart(v0_mean, v0_diag_var)
    nu, sigma_scale = match_invwishart(sigma_hat, sigma_diag_var)
    # Sigma ~ IW(nu, S)  <=>  Sigma^-1 ~ W(inv(S), nu)
    Sigma_0 = np.linalg.inv(sigma_scale)
    return ElicitationResult(phi_hat, sigma_hat, V_00, tau_0,
                             0.5 * (Sigma_0 + Sigma_0.T), nu, n_used)
