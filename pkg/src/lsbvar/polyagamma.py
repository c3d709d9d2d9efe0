"""Exact PG(1, c) draws.

Uses the alternating-series rejection sampler for ``J*(1, z)`` with
``z = |c| / 2`` and ``PG(1, c) = J*(1, z) / 4``: a proposal that mixes a
truncated exponential tail (``x > 0.64``) with an inverse-Gaussian body
truncated to ``(0, 0.64)``, accepted by bracketing the target density between
partial sums of its series representation.  All steps are vectorised over the
batch; every rejected entry is simply re-proposed.
"""

import numpy as np
from scipy.special import log_ndtr

_T = 0.64
_PI = np.pi
_HALF_PI_LOG = np.log(0.5 * np.pi)


def _series_coef(n, x):
    """n-th coefficient of the J*(1) density series at ``x`` (vectorised)."""
    kn = (n + 0.5) * _PI
    out = np.empty_like(x)
    tail = x > _T
    out[tail] = kn * np.exp(-0.5 * kn * kn * x[tail])
    body = ~tail
    xb = x[body]
    out[body] = np.exp(-1.5 * (_HALF_PI_LOG + np.log(xb)) + np.log(kn)
                       - 2.0 * (n + 0.5) ** 2 / xb)
    return out


def _tail_probability(z):
    """Probability that the proposal uses the exponential tail piece."""
    fz = 0.125 * _PI ** 2 + 0.5 * z * z
    rt = np.sqrt(1.0 / _T)
    x0 = np.log(fz) + fz * _T
    xb = x0 - z + log_ndtr(rt * (_T * z - 1.0))
    xa = x0 + z + log_ndtr(-rt * (_T * z + 1.0))
    q_over_p = 4.0 / _PI * (np.exp(xb) + np.exp(xa))
    return 1.0 / (1.0 + q_over_p)


def _truncated_invgauss(z, rng):
    """IG(mean 1/z, shape 1) restricted to (0, 0.64); ``z >= 0``."""
    n = z.shape[0]
    out = np.empty(n)
    mu = np.full(n, np.inf)
    pos = z > 0
    mu[pos] = 1.0 / z[pos]

    # small z: Levy proposal truncated at T, thinned by exp(-z^2 x / 2)
    todo = np.nonzero(mu > _T)[0]
    while todo.size:
        e1 = rng.standard_exponential(todo.size)
        e2 = rng.standard_exponential(todo.size)
        bad = e1 * e1 > 2.0 * e2 / _T
        while bad.any():
            nb = int(bad.sum())
            e1[bad] = rng.standard_exponential(nb)
            e2[bad] = rng.standard_exponential(nb)
            bad = e1 * e1 > 2.0 * e2 / _T
        x = _T / (1.0 + _T * e1) ** 2
        ok = rng.random(todo.size) <= np.exp(-0.5 * z[todo] ** 2 * x)
        out[todo[ok]] = x[ok]
        todo = todo[~ok]

    # large z: plain inverse-Gaussian draws, rejected until below T
    todo = np.nonzero(mu <= _T)[0]
    while todo.size:
        m = mu[todo]
        y = rng.standard_normal(todo.size) ** 2
        x = m + 0.5 * m * m * y - 0.5 * m * np.sqrt(4.0 * m * y + (m * y) ** 2)
        flip = rng.random(todo.size) > m / (m + x)
        x[flip] = m[flip] ** 2 / x[flip]
        ok = x < _T
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
    return out


def _draw_jstar(z, rng):
    n = z.shape[0]
    out = np.empty(n)
    fz = 0.125 * _PI ** 2 + 0.5 * z * z
    p_tail = _tail_probability(z)
    todo = np.arange(n)
    while todo.size:
        zt = z[todo]
        x = np.empty(todo.size)
        tail = rng.random(todo.size) < p_tail[todo]
        x[tail] = _T + rng.standard_exponential(int(tail.sum())) / fz[todo[tail]]
        if (~tail).any():
            x[~tail] = _truncated_invgauss(zt[~tail], rng)
        s = _series_coef(0, x)
        y = rng.random(todo.size) * s
        accepted = np.zeros(todo.size, dtype=bool)
        live = np.ones(todo.size, dtype=bool)
        n_term = 0
        while live.any():
            n_term += 1
            idx = np.nonzero(live)[0]
            a = _series_coef(n_term, x[idx])
            if n_term % 2:
                s[idx] -= a
                hit = y[idx] <= s[idx]
                accepted[idx[hit]] = True
                live[idx[hit]] = False
            else:
                s[idx] += a
                miss = y[idx] > s[idx]
                live[idx[miss]] = False
        out[todo[accepted]] = x[accepted]
        todo = todo[~accepted]
    return out


def sample_polya_gamma(c, rng):
    """Draw ``omega ~ PG(1, c)`` elementwise.

    Parameters
    ----------
    c : float or array_like
        Tilting parameters; must be finite.
    rng : numpy.random.Generator

    Returns
    -------
    float or ndarray with the shape of ``c``
    """
    c_arr = np.asarray(c, dtype=float)
    if not np.all(np.isfinite(c_arr)):
        raise ValueError("Polya-Gamma tilting parameter must be finite")
    z = 0.5 * np.abs(c_arr).reshape(-1)
    draws = 0.25 * _draw_jstar(z, rng) if z.size else np.zeros(0)
    if c_arr.ndim == 0:
        return float(draws[0])
    return draws.reshape(c_arr.shape)


def polya_gamma_mean(c):
    """``E[PG(1, c)] = tanh(c/2) / (2c)``, equal to 1/4 at ``c = 0``."""
    c = np.abs(np.asarray(c, dtype=float))
    small = c < 1e-6
    safe = np.where(small, 1.0, c)
    return np.where(small, 0.25 - c * c / 48.0, np.tanh(safe / 2.0) / (2.0 * safe))


def polya_gamma_var(c):
    """``Var[PG(1, c)]``; ``1/24`` at ``c = 0``."""
    c = np.abs(np.asarray(c, dtype=float))
    small = c < 1e-3
    safe = np.where(small, 1.0, c)
    # (sinh c - c) / (4 c^3 cosh^2(c/2))
    big = (np.sinh(safe) - safe) / (4.0 * safe ** 3 * np.cosh(safe / 2.0) ** 2)
    return np.where(small, 1.0 / 24.0 - c * c / 60.0, big)
