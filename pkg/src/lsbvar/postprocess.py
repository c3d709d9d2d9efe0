"""Label-invariant summaries of a fitted chain and predictive evaluation."""

from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.special import comb, logsumexp

from .data import Partition


def _labels(p):
    return p.labels if isinstance(p, Partition) else np.asarray(p)


# --- partitions ------------------------------------------------------------

def coclustering_matrix(samples):
    """Posterior co-allocation frequencies, ``(N, N)``.

    Parameters
    ----------
    samples : array_like of int, shape (S, N)
    """
    samples = np.atleast_2d(np.asarray(samples))
    S, N = samples.shape
    if S == 0:
        raise ValueError("need at least one sample")
    psm = np.zeros((N, N))
    for labels in samples:
        psm += labels[:, None] == labels[None, :]
    return psm / S


def binder_loss(labels, psm):
    """Expected Binder loss (equal costs) of a partition given the
    co-clustering matrix: ``sum_{i<j} |1[c_i = c_j] - p_ij|``."""
    labels = _labels(labels)
    same = labels[:, None] == labels[None, :]
    diff = np.abs(same - psm)
    return float(np.triu(diff, 1).sum())


def binder_point_estimate(samples, return_loss=False):
    """Partition among the sampled ones that minimises the expected Binder loss.

    Ties are broken in favour of the earliest sample.
    """
    samples = np.atleast_2d(np.asarray(samples))
    psm = coclustering_matrix(samples)
    N = samples.shape[1]
    base = np.triu(psm, 1).sum()
    gain = 1.0 - 2.0 * psm
    np.fill_diagonal(gain, 0.0)
    seen = {}
    best, best_loss = None, np.inf
    for s, labels in enumerate(samples):
        canon = Partition(labels).canonical()
        key = canon.tobytes()
        if key in seen:
            continue
        onehot = np.zeros((N, canon.max() + 1 if N else 1))
        onehot[np.arange(N), canon] = 1.0
        # sum_{i<j} A_ij (1 - 2 p_ij) with A = onehot onehot^T
        loss = base + 0.5 * float(np.sum(onehot * (gain @ onehot)))
        seen[key] = loss
        if loss < best_loss - 1e-12:
            best, best_loss = canon, loss
    est = Partition(best)
    return (est, best_loss) if return_loss else est


def adjusted_rand_index(a, b):
    """Hubert-Arabie adjusted Rand index of two partitions."""
    a, b = _labels(a), _labels(b)
    if a.shape != b.shape:
        raise ValueError(f"partitions have lengths {a.size} and {b.size}")
    n = a.size
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1 if n else 0, ib.max() + 1 if n else 0))
    np.add.at(table, (ia, ib), 1)
    sum_cells = comb(table, 2).sum()
    sum_a = comb(table.sum(axis=1), 2).sum()
    sum_b = comb(table.sum(axis=0), 2).sum()
    total = comb(n, 2)
    expected = sum_a * sum_b / total if total else 0.0
    top = 0.5 * (sum_a + sum_b)
    if top == expected:
        # both partitions trivial (all singletons or one block) in the same way
        return 1.0
    return float((sum_cells - expected) / (top - expected))


def cluster_count_posterior(samples):
    """Histogram of the number of occupied components per sample.

    Returns a dict ``{n_clusters: frequency}`` sorted by count.
    """
    samples = np.atleast_2d(np.asarray(samples))
    if samples.shape[0] == 0:
        raise ValueError("need at least one sample")
    counts = Counter(int(np.unique(row).size) for row in samples)
    return dict(sorted(counts.items()))


# --- WAIC -------------------------------------------------------------------

@dataclass(frozen=True)
class WaicReport:
    lppd: float
    p_waic: float
    waic: float
    n_points: int
    n_samples: int

    @property
    def deviance(self):
        """``-2 * waic``, the deviance-scale version (lower is better)."""
        return -2.0 * self.waic

    def to_dict(self):
        return {"lppd": self.lppd, "p_waic": self.p_waic, "waic": self.waic,
                "waic_deviance": self.deviance, "n_points": self.n_points,
                "n_samples": self.n_samples}


def waic(loglik):
    """WAIC from pointwise log-likelihood records.

    Parameters
    ----------
    loglik : array_like, shape (S, n_points)

    Returns
    -------
    WaicReport
        ``waic = lppd - p_waic`` (higher is better); with one sample the
        penalty is zero.
    """
    ll = np.atleast_2d(np.asarray(loglik, dtype=float))
    if not np.all(np.isfinite(ll)):
        raise ValueError("log-likelihood records contain non-finite values")
    S, n = ll.shape
    if S == 0:
        raise ValueError("need at least one sample")
    lppd = float(np.sum(logsumexp(ll, axis=0) - np.log(S)))
    p = float(np.sum(np.var(ll, axis=0, ddof=1))) if S > 1 else 0.0
    return WaicReport(lppd, p, lppd - p, n, S)


# --- prediction -------------------------------------------------------------

def _draw_component(w, rng):
    return int(min(np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right"),
                   w.shape[0] - 1))


def _roll_forward(phi, B, Gamma, sigma_chol, z, start, x_future, steps, rng, noise=True):
    k = phi.shape[0]
    out = np.empty((steps, k))
    prev = start
    drift = Gamma @ z
    for t in range(steps):
        mean = phi @ prev + drift
        if B.size:
            mean = mean + B @ x_future[t]
        prev = mean + (sigma_chol @ rng.standard_normal(k) if noise else 0.0)
        out[t] = prev
    return out


def _x_rows(store, x, steps):
    k = store.k
    p = store.b.shape[1] // k if len(store) else 0
    if p == 0:
        return np.zeros((steps, 0))
    if x is None:
        raise ValueError("time-varying covariates are required for the predicted times")
    x = np.asarray(x, dtype=float).reshape(-1, p)
    if x.shape[0] < steps:
        raise ValueError(f"need covariates for {steps} times, got {x.shape[0]}")
    return x


def predict_oos(store, z_new, y_1, horizon, rng, x=None, noise=True):
    """Posterior predictive trajectories of a new subject given ``z`` and ``y_1``.

    For every stored sample a component is drawn from that sample's weights
    at ``z_new`` (the stick weights for the DP comparator) and the model is
    rolled forward from ``y_1`` with the sample's ``B, Gamma, Sigma``.

    Parameters
    ----------
    x : array_like, shape (horizon, p), optional
        Time-varying covariates for ``t = 1..horizon`` (row 0 is unused);
        required when the model has any.

    Returns
    -------
    ndarray, shape (S, horizon, k)
        Row 0 of every path is ``y_1``.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if len(store) == 0:
        raise ValueError("empty sample store")
    y_1 = np.asarray(y_1, dtype=float)
    z_new = np.asarray(z_new, dtype=float)
    S, k = len(store), store.k
    out = np.empty((S, horizon, k))
    out[:, 0] = y_1
    if horizon == 1:
        return out
    xr = _x_rows(store, x, horizon)
    for s in range(S):
        h = _draw_component(store.weights(s, z_new), rng)
        out[s, 1:] = _roll_forward(store.atoms[s, h], store.b[s].reshape(k, -1),
                                   store.gamma[s].reshape(k, -1),
                                   np.linalg.cholesky(store.sigma[s]), z_new, y_1,
                                   xr[1:], horizon - 1, rng, noise)
    return out


def predict_ins(store, ds, subject, t_cut, l_steps, rng, x_future=None, noise=True):
    """``l_steps``-ahead predictions for a training subject.

    Each stored sample's allocation of ``subject`` selects the atom and the
    model is rolled forward from ``y_{t_cut}`` (imputed values are not kept
    in the store, so ``y_{t_cut}`` must be observed).

    Returns
    -------
    ndarray, shape (S, l_steps, k)
    """
    s_rows = ds.subject_slice(subject)
    T = ds.lengths[subject]
    if not 1 <= t_cut <= T:
        raise ValueError(f"t_cut={t_cut} outside the observed horizon 1..{T}")
    if not ds.observed[s_rows][t_cut - 1].all():
        raise ValueError(f"y_{t_cut} of subject {subject} is not fully observed")
    S, k = len(store), store.k
    out = np.empty((S, l_steps, k))
    if l_steps == 0:
        return out
    start = ds.y[s_rows][t_cut - 1]
    z = ds.z[subject]
    xr = _x_rows(store, x_future, l_steps)
    for s in range(S):
        h = int(store.alloc[s, subject])
        out[s] = _roll_forward(store.atoms[s, h], store.b[s].reshape(k, -1),
                               store.gamma[s].reshape(k, -1),
                               np.linalg.cholesky(store.sigma[s]), z, start, xr,
                               l_steps, rng, noise)
    return out


def predictive_phi(store, z_new, rng):
    """Draws of the autoregression matrix of a new subject with covariates ``z_new``.

    Returns an ``(S, k, k)`` array, one draw per stored sample.
    """
    z_new = np.asarray(z_new, dtype=float)
    out = np.empty((len(store), store.k, store.k))
    for s in range(len(store)):
        out[s] = store.atoms[s, _draw_component(store.weights(s, z_new), rng)]
    return out


def predictive_quantiles(draws, probs=(0.05, 0.5, 0.95)):
    """Quantiles over the sample axis of ``(S, T, k)`` predictive draws;
    returns ``(len(probs), T, k)``."""
    return np.quantile(draws, probs, axis=0)


def squared_errors(point, truth):
    """Per-subject mean squared error of point predictions.

    ``point`` and ``truth`` are sequences of equally shaped arrays.
    """
    return np.array([float(np.mean((np.asarray(p) - np.asarray(t)) ** 2))
                     for p, t in zip(point, truth)])


@dataclass(frozen=True)
class MseSummary:
    """Mean over subjects of the per-subject MSE with its across-subject sd."""

    mean: float
    sd: float
    n: int

    def __str__(self):
        return f"{self.mean:.3f} +- {self.sd:.3f}"


def summarize_mse(per_subject):
    per_subject = np.asarray(per_subject, dtype=float)
    sd = float(per_subject.std(ddof=1)) if per_subject.size > 1 else 0.0
    return MseSummary(float(per_subject.mean()), sd, per_subject.size)


def point_prediction(draws, point="median"):
    """Collapse ``(S, ...)`` predictive draws to a point forecast."""
    if point == "median":
        return np.median(draws, axis=0)
    if point == "mean":
        return draws.mean(axis=0)
    raise ValueError("point must be 'median' or 'mean'")


def oos_mse(store, test_ds, rng, x=None, point="median"):
    """OOS score: predict ``y_2..y_T`` of each test subject from ``z`` and
    ``y_1`` and average squared errors of the point forecast.

    The default point forecast is the predictive median: the predictive
    mean is dominated by rare explosive paths from components that are
    empty in the posterior.
    """
    per = []
    for i in range(test_ds.n_subjects):
        s = test_ds.subject_slice(i)
        y = test_ds.y[s]
        xi = test_ds.x[s] if x is None else x
        draws = predict_oos(store, test_ds.z[i], y[0], y.shape[0], rng, x=xi)
        per.append(float(np.mean((point_prediction(draws[:, 1:], point) - y[1:]) ** 2)))
    return summarize_mse(per)


def ins_mse(store, train_ds, subjects, tails, t_cut, rng, x_future=None, point="median"):
    """INS score: predict the held-out tails of truncated training subjects."""
    per = []
    for i, tail in zip(subjects, tails):
        xf = None
        if x_future is not None:
            xf = x_future(i) if callable(x_future) else x_future
        draws = predict_ins(store, train_ds, int(i), t_cut, tail.shape[0], rng, x_future=xf)
        per.append(float(np.mean((point_prediction(draws, point) - tail) ** 2)))
    return summarize_mse(per)
