"""Hyperparameters and the Gibbs chain state.

Vectorisation convention: ``b``, ``gamma`` and each atom ``phi`` stack the
rows of ``B`` (k x p), ``Gamma`` (k x q) and ``Phi`` (k x k).

``Sigma_0`` is stored in the Wishart parameterisation of the prior,
``Sigma^-1 ~ W(Sigma_0, nu)`` with ``E[Sigma^-1] = nu * Sigma_0``.  The
equivalent statement ``Sigma ~ IW(nu, inv(Sigma_0))`` (inverse-Wishart with
mean ``inv(Sigma_0) / (nu - k - 1)``) is what the sampler uses;
:meth:`ModelHyperparams.sigma_iw_scale` performs the conversion.

``V_0 ~ IW(tau_0, V_00)`` with mean ``V_00 / (tau_0 - k^2 - 1)`` and
``phi_00 | V_0 ~ N(phi_000, V_0 / lam)``.
"""

import json
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .linalg import cholesky, spd_inverse


_MATRIX_FIELDS = ("Sigma_alpha", "Sigma_B", "Sigma_Gamma", "Sigma_0", "V_00")
_VECTOR_FIELDS = ("mu_alpha", "phi_000")
_SCALAR_FIELDS = ("nu", "lam", "tau_0")


@dataclass(frozen=True, eq=False)
class ModelHyperparams:
    H: int
    mu_alpha: np.ndarray
    Sigma_alpha: np.ndarray
    Sigma_B: np.ndarray
    Sigma_Gamma: np.ndarray
    Sigma_0: np.ndarray
    nu: float
    phi_000: np.ndarray
    lam: float
    V_00: np.ndarray
    tau_0: float

    def __post_init__(self):
        if int(self.H) != self.H or self.H < 1:
            raise ValueError("H must be a positive integer")
        object.__setattr__(self, "H", int(self.H))
        for name in _VECTOR_FIELDS:
            a = np.array(getattr(self, name), dtype=float).reshape(-1)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        for name in _MATRIX_FIELDS:
            a = np.array(getattr(self, name), dtype=float)
            a = np.atleast_2d(a) if a.size else a.reshape(0, 0)
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ValueError(f"{name} must be square")
            if a.size and not np.allclose(a, a.T, rtol=1e-10, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if a.size:
                cholesky(a, name)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        k = self.Sigma_0.shape[0]
        d = k * k
        q = self.mu_alpha.shape[0]
        if self.Sigma_alpha.shape != (q, q):
            raise ValueError("Sigma_alpha must be q x q with q = len(mu_alpha)")
        if self.phi_000.shape != (d,) or self.V_00.shape != (d, d):
            raise ValueError("phi_000 / V_00 must have dimension k^2")
        if self.Sigma_B.shape[0] % k or self.Sigma_Gamma.shape[0] % k:
            raise ValueError("Sigma_B / Sigma_Gamma must have dimension k*p / k*q")
        if self.Sigma_Gamma.shape[0] != k * q:
            raise ValueError("Sigma_Gamma must be (k*q) x (k*q)")
        if not self.nu > k - 1:
            raise ValueError("nu must exceed k - 1")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not self.tau_0 > d - 1:
            raise ValueError("tau_0 must exceed k^2 - 1")

    @property
    def k(self):
        return self.Sigma_0.shape[0]

    @property
    def p(self):
        return self.Sigma_B.shape[0] // self.k

    @property
    def q(self):
        return self.mu_alpha.shape[0]

    def sigma_iw_scale(self):
        """Inverse-Wishart scale of the prior on Sigma, ``inv(Sigma_0)``."""
        return spd_inverse(self.Sigma_0, "Sigma_0")

    def check_dataset(self, ds):
        if ds.resp_dim and ds.resp_dim != self.k:
            raise ValueError(f"dataset has k={ds.resp_dim}, hyperparameters k={self.k}")
        if ds.n_subjects and ds.tv_cov_dim != self.p:
            raise ValueError(f"dataset has p={ds.tv_cov_dim}, hyperparameters p={self.p}")
        if ds.n_subjects and ds.base_cov_dim != self.q:
            raise ValueError(f"dataset has q={ds.base_cov_dim}, hyperparameters q={self.q}")

    @classmethod
    def default(cls, k, p, q, H=25, nu=5.0, lam=0.1, tau_0=None, sigma_alpha_sq=1.0):
        """Vague-ish defaults used in the simulation study.

        ``phi_000 = 0``, ``V_00 = I``, ``tau_0 = k^2 + 2`` (so ``E[V_0] = I``),
        ``Sigma_0 = I / nu`` (so ``E[Sigma^-1] = I``), ``mu_alpha = 0`` and
        identity covariances elsewhere.
        """
        d = k * k
        return cls(H=H, mu_alpha=np.zeros(q), Sigma_alpha=sigma_alpha_sq * np.eye(q),
                   Sigma_B=np.eye(k * p), Sigma_Gamma=np.eye(k * q),
                   Sigma_0=np.eye(k) / nu, nu=nu, phi_000=np.zeros(d), lam=lam,
                   V_00=np.eye(d), tau_0=d + 2.0 if tau_0 is None else tau_0)

    def replace(self, **changes):
        return replace(self, **changes)

    # flat key/value config ------------------------------------------------

    def to_config(self):
        """Flat mapping with matrices as row-major number lists."""
        out = {"H": self.H}
        for f in fields(self):
            if f.name == "H":
                continue
            val = getattr(self, f.name)
            out[f.name] = float(val) if f.name in _SCALAR_FIELDS else np.asarray(val).reshape(-1).tolist()
        return out

    @classmethod
    def from_config(cls, cfg, k=None, p=None, q=None):
        """Parse a flat mapping.

        Matrix entries are row-major lists (a bare number ``s`` means ``s * I``,
        which needs the dimensions ``k, p, q`` to be known).  Missing keys fall
        back to :meth:`default`.
        """
        cfg = dict(cfg)
        unknown = set(cfg) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown hyperparameter keys: {sorted(unknown)}")
        if k is None and isinstance(cfg.get("Sigma_0"), list):
            k = int(round(np.sqrt(len(cfg["Sigma_0"]))))
        if q is None and isinstance(cfg.get("mu_alpha"), list):
            q = len(cfg["mu_alpha"])
        if p is None and k and isinstance(cfg.get("Sigma_B"), list):
            p = int(round(np.sqrt(len(cfg["Sigma_B"])))) // k
        if None in (k, p, q):
            raise ValueError("cannot infer k, p, q from config; pass them explicitly")
        base = cls.default(k, p, q, H=int(cfg.get("H", 25)))
        dims = {"Sigma_alpha": q, "Sigma_B": k * p, "Sigma_Gamma": k * q,
                "Sigma_0": k, "V_00": k * k, "mu_alpha": q, "phi_000": k * k}
        kwargs = {}
        for f in fields(cls):
            if f.name not in cfg:
                kwargs[f.name] = getattr(base, f.name)
                continue
            val = cfg[f.name]
            if f.name == "H":
                kwargs["H"] = int(val)
            elif f.name in _SCALAR_FIELDS:
                kwargs[f.name] = float(val)
            elif f.name in _VECTOR_FIELDS:
                n = dims[f.name]
                kwargs[f.name] = (np.full(n, float(val)) if np.isscalar(val)
                                  else np.asarray(val, dtype=float).reshape(n))
            else:
                n = dims[f.name]
                kwargs[f.name] = (float(val) * np.eye(n) if np.isscalar(val)
                                  else np.asarray(val, dtype=float).reshape(n, n))
        return cls(**kwargs)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_config(), fh, indent=1)

    @classmethod
    def load(cls, path, k=None, p=None, q=None):
        with open(path) as fh:
            return cls.from_config(json.load(fh), k, p, q)


@dataclass(eq=False)
class ChainState:
    """Every latent quantity updated by one Gibbs sweep.

    ``alloc`` holds 0-based component indices. ``y`` is the response matrix
    with the current imputations filled in; observed entries never change.
    ``pg`` has shape (N, H-1) with NaN outside the risk sets of the last
    stick update. ``sticks`` holds the covariate-free stick fractions of the
    DP comparator (unused by the logit stick-breaking prior).
    """

    b: np.ndarray
    gamma: np.ndarray
    sigma: np.ndarray
    atoms: np.ndarray
    alloc: np.ndarray
    alphas: np.ndarray
    phi_00: np.ndarray
    v_0: np.ndarray
    y: np.ndarray
    pg: np.ndarray = field(default=None)
    sticks: np.ndarray = field(default=None)

    @property
    def H(self):
        return self.atoms.shape[0]

    @property
    def k(self):
        return self.sigma.shape[0]

    def B(self):
        return self.b.reshape(self.k, -1)

    def Gamma(self):
        return self.gamma.reshape(self.k, -1)

    def copy(self):
        return ChainState(**{f.name: (None if getattr(self, f.name) is None
                                      else np.array(getattr(self, f.name), copy=True))
                             for f in fields(self)})

    def check(self):
        cholesky(self.sigma, "Sigma")
        cholesky(self.v_0, "V_0")
        if self.alloc.size and (self.alloc.min() < 0 or self.alloc.max() >= self.H):
            raise ValueError("allocations out of range")
