"""Joint Gaussian law of one subject's trajectory and exact conditional
simulation of its missing responses.

With ``m_t = B x_t + Gamma z`` and ``y_0 = 0``, the model
``y_t = Phi y_{t-1} + m_t + e_t`` gives ``L y = m + e`` where ``L`` is block
lower-bidiagonal (identity blocks on the diagonal, ``-Phi`` below).  Hence
the stacked trajectory has mean ``L^-1 m`` (the recursion
``mu_t = Phi mu_{t-1} + m_t``) and precision ``L^T (I (x) Sigma^-1) L``,
which is block tridiagonal:

* diagonal ``Sigma^-1 + Phi^T Sigma^-1 Phi`` for ``t < T`` and ``Sigma^-1`` at ``T``;
* ``-Phi^T Sigma^-1`` above and ``-Sigma^-1 Phi`` below the diagonal.

Conditioning is done in precision form: given observed entries ``o``, the
missing block ``m`` has precision ``Q_mm`` and mean
``mu_m - Q_mm^-1 Q_mo (y_o - mu_o)``.  ``Q_mm`` keeps the band structure, so
the factorisation is a banded Cholesky.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .linalg import spd_inverse

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class TrajectoryLaw:
    """Gaussian law of a stacked ``(T * k)`` trajectory (time-major)."""

    mean: np.ndarray
    precision: np.ndarray
    k: int

    @property
    def T(self):
        return self.mean.shape[0] // self.k

    def covariance(self):
        return spd_inverse(self.precision, "trajectory precision")


def regression_mean(b, gamma, x, z, k):
    """Rows ``B x_t + Gamma z`` for ``t = 1..T``; shape (T, k)."""
    x = np.asarray(x, dtype=float).reshape(len(x), -1)
    B = np.asarray(b, dtype=float).reshape(k, x.shape[1])
    G = np.asarray(gamma, dtype=float).reshape(k, -1)
    return x @ B.T + G @ np.asarray(z, dtype=float)


def trajectory_mean(phi, m):
    mu = np.empty_like(m)
    prev = np.zeros(m.shape[1])
    for t in range(m.shape[0]):
        prev = phi @ prev + m[t]
        mu[t] = prev
    return mu


def trajectory_precision(phi, sigma_inv, T):
    k = phi.shape[0]
    Q = np.zeros((T * k, T * k))
    inner = sigma_inv + phi.T @ sigma_inv @ phi
    upper = -phi.T @ sigma_inv
    for t in range(T):
        s = slice(t * k, (t + 1) * k)
        Q[s, s] = inner if t < T - 1 else sigma_inv
        if t < T - 1:
            n = slice((t + 1) * k, (t + 2) * k)
            Q[s, n] = upper
            Q[n, s] = upper.T
    return Q


def build_trajectory_law(phi, b, gamma, sigma, x, z):
    """Law of ``(y_1, ..., y_T)`` given ``Phi, B, Gamma, Sigma`` and covariates."""
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    k = phi.shape[0]
    sigma_inv = spd_inverse(sigma, "Sigma")
    m = regression_mean(b, gamma, x, z, k)
    return TrajectoryLaw(trajectory_mean(phi, m).reshape(-1),
                         trajectory_precision(phi, sigma_inv, m.shape[0]), k)


def _to_upper_banded(a, u):
    n = a.shape[0]
    ab = np.zeros((u + 1, n))
    for d in range(u + 1):
        ab[u - d, d:] = np.diagonal(a, d)
    return ab


def _conditional_parts(law, observed, y):
    """Missing indices, conditional mean and banded upper factor of ``Q_mm``."""
    observed = np.asarray(observed, dtype=bool).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    miss = np.nonzero(~observed)[0]
    obs = np.nonzero(observed)[0]
    Q = law.precision
    Q_mm = Q[np.ix_(miss, miss)]
    u = int(min(2 * law.k - 1, max(miss.size - 1, 0)))
    ab = _to_upper_banded(Q_mm, u)
    upper = sla.cholesky_banded(ab, lower=False)
    mean = law.mean[miss].copy()
    if obs.size:
        rhs = Q[np.ix_(miss, obs)] @ (y[obs] - law.mean[obs])
        mean -= sla.cho_solve_banded((upper, False), rhs)
    return miss, mean, upper, u


def conditional_moments(law, observed, y):
    """Mean and covariance of the missing entries given the observed ones.

    ``observed`` and ``y`` are flattened in time-major order; the returned
    arrays follow the order of the missing entries.
    """
    miss, mean, upper, _ = _conditional_parts(law, observed, y)
    cov = sla.cho_solve_banded((upper, False), np.eye(miss.size))
    return mean, 0.5 * (cov + cov.T)


def sample_conditional(law, observed, y, rng):
    """Fill the missing entries of ``y`` with one exact conditional draw."""
    out = np.array(y, dtype=float).reshape(-1)
    miss, mean, upper, u = _conditional_parts(law, observed, y)
    if miss.size == 0:
        return out
    eps = rng.standard_normal(miss.size)
    out[miss] = mean + sla.solve_banded((0, u), upper, eps)
    return out


def impute_missing(state, ds, i, rng):
    """Draw subject ``i``'s missing responses given the current parameters.

    Returns the subject's ``(T_i, k)`` response block with observed entries
    untouched.  A subject with no observed entry gets an unconditional draw.
    """
    s = ds.subject_slice(i)
    obs = ds.observed[s]
    y = np.where(obs, ds.y[s], 0.0)
    if obs.all():
        return y
    law = build_trajectory_law(state.atoms[state.alloc[i]], state.b, state.gamma,
                               state.sigma, ds.x[s], ds.z[i])
    return sample_conditional(law, obs, y, rng).reshape(y.shape)


def impute_all(state, ds, rng):
    """Refresh every imputed entry of ``state.y`` in place."""
    if not ds.has_missing:
        return state.y
    incomplete = incomplete_subjects(ds)
    for i in incomplete:
        s = ds.subject_slice(i)
        state.y[s] = impute_missing(state, ds, i, rng)
    return state.y


def incomplete_subjects(ds):
    if ds.n_subjects == 0:
        return np.zeros(0, dtype=int)
    full_rows = np.add.reduceat(ds.observed.all(axis=1).astype(int), ds.offsets)
    return np.nonzero(full_rows < ds.lengths)[0]


def observed_entry_logdens(law, observed, y):
    """Chain-rule decomposition of the observed-data log density.

    Returns ``log p(y_e | observed entries before e)`` for every observed
    entry ``e`` in time-major order; the values sum to the log density of the
    observed sub-vector.
    """
    observed = np.asarray(observed, dtype=bool).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    obs = np.nonzero(observed)[0]
    if obs.size == 0:
        return np.zeros(0)
    cov = law.covariance()[np.ix_(obs, obs)]
    chol = np.linalg.cholesky(cov)
    u = sla.solve_triangular(chol, y[obs] - law.mean[obs], lower=True)
    return -0.5 * u * u - np.log(np.diag(chol)) - 0.5 * _LOG_2PI
