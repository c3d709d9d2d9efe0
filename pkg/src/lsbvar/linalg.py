"""Small dense linear-algebra helpers shared by the samplers."""

import numpy as np
from scipy import linalg as sla
from scipy import stats


def cholesky(a, what="matrix"):
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises ``np.linalg.LinAlgError`` naming ``what`` on failure.
    """
    a = np.asarray(a, dtype=float)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"{what} is not positive definite") from exc


def is_spd(a):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-12):
        return False
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return False
    return True


def spd_inverse(a, what="matrix"):
    chol = cholesky(a, what)
    inv = sla.cho_solve((chol, True), np.eye(a.shape[0]))
    return 0.5 * (inv + inv.T)


def gaussian_from_precision(precision, linear, what="posterior precision"):
    """Mean of N(P^-1 l, P^-1) together with the Cholesky factor of P."""
    chol = cholesky(precision, what)
    mean = sla.cho_solve((chol, True), linear)
    return mean, chol


def draw_gaussian_precision(precision, linear, rng, what="posterior precision"):
    """Draw from the Gaussian with precision ``P`` and mean ``P^-1 linear``."""
    mean, chol = gaussian_from_precision(precision, linear, what)
    eps = rng.standard_normal(mean.shape[0])
    return mean + sla.solve_triangular(chol.T, eps, lower=False)


def draw_invwishart(df, scale, rng):
    """One inverse-Wishart draw with mean ``scale / (df - d - 1)``."""
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    draw = stats.invwishart.rvs(df=df, scale=scale, random_state=rng)
    draw = np.atleast_2d(draw)
    return 0.5 * (draw + draw.T)


def row_vec(mat):
    """Stack the rows of a matrix into one vector."""
    return np.asarray(mat).reshape(-1)


def kron_precision(sigma_inv, xtx):
    """``sigma_inv (x) xtx``, the likelihood precision of a row-stacked
    coefficient matrix in ``W = X C^T + E`` with row covariance Sigma."""
    return np.kron(sigma_inv, xtx)


def kron_linear(xtw, sigma_inv):
    """Linear term ``vec(X^T W Sigma^-1)`` matched to :func:`kron_precision`."""
    return (xtw @ sigma_inv).T.reshape(-1)
