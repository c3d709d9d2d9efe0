"""Persistent storage of thinned chain states.

On disk a store is a directory holding one raw little-endian binary file per
parameter (``<name>.bin``, C order, written with :meth:`numpy.ndarray.tofile`)
and ``manifest.json`` recording the layout version, dtypes, shapes, the
sampler configuration, hyperparameters and the dataset fingerprint.  Every
array has the number of stored samples as its leading axis.

=============  ==================  ===========================================
name           per-sample shape    content
=============  ==================  ===========================================
``b``          (k p,)              row-stacked ``B``
``gamma``      (k q,)              row-stacked ``Gamma``
``sigma``      (k, k)              error covariance
``atoms``      (H, k, k)           component matrices ``Phi_0h``
``alloc``      (N,)                0-based component of each subject
``alphas``     (H-1, q)            logit stick coefficients (LSB prior)
``sticks``     (H-1,)              stick fractions (DP prior)
``phi_00``     (k^2,)              atom mean
``v_0``        (k^2, k^2)          atom covariance
``loglik``     (n_obs,)            per observed entry log densities
=============  ==================  ===========================================
"""

import json
import os
import shutil

import numpy as np

from .model import ChainState

LAYOUT_VERSION = "lsbvar-store/1"


def _shapes(ds, hp):
    k, H, q = hp.k, hp.H, hp.q
    d = k * k
    return {
        "b": ((hp.Sigma_B.shape[0],), "<f8"),
        "gamma": ((k * q,), "<f8"),
        "sigma": ((k, k), "<f8"),
        "atoms": ((H, k, k), "<f8"),
        "alloc": ((ds.n_subjects,), "<i4"),
        "alphas": ((H - 1, q), "<f8"),
        "sticks": ((H - 1,), "<f8"),
        "phi_00": ((d,), "<f8"),
        "v_0": ((d, d), "<f8"),
        "loglik": ((int(ds.observed.sum()),), "<f8"),
    }


class SampleStore:
    """Thinned post-burn-in samples of one chain (or several merged chains).

    Arrays are exposed as attributes (``store.atoms`` etc.), each with the
    sample index as leading axis.  ``meta`` carries the manifest fields.
    """

    FIELDS = ("b", "gamma", "sigma", "atoms", "alloc", "alphas", "sticks",
              "phi_00", "v_0", "loglik")

    def __init__(self, arrays, meta):
        self._arrays = arrays
        self.meta = meta
        self._n = int(meta.get("n_stored", len(arrays["alloc"])))

    @classmethod
    def allocate(cls, ds, hp, config, chain=0):
        capacity = config.n_samples
        arrays = {name: np.zeros((capacity,) + shape, dtype=dtype)
                  for name, (shape, dtype) in _shapes(ds, hp).items()}
        meta = {"version": LAYOUT_VERSION, "capacity": capacity, "n_stored": 0,
                "chain": chain, "config": config.to_dict(),
                "hyperparams": hp.to_config(), "dataset": ds.fingerprint(),
                "n_subjects": ds.n_subjects, "has_loglik": bool(config.record_loglik)}
        return cls(arrays, meta)

    def __len__(self):
        return self._n

    def __getattr__(self, name):
        if name.startswith("_") or name not in self.FIELDS:
            raise AttributeError(name)
        return self._arrays[name][: self._n]

    @property
    def prior(self):
        return self.meta["config"]["prior"]

    @property
    def H(self):
        return self._arrays["atoms"].shape[1]

    @property
    def k(self):
        return self._arrays["sigma"].shape[1]

    def append(self, state, ds, loglik=None):
        if self._n >= self.meta["capacity"]:
            raise IndexError("sample store is full")
        s = self._n
        a = self._arrays
        a["b"][s] = state.b
        a["gamma"][s] = state.gamma
        a["sigma"][s] = state.sigma
        a["atoms"][s] = state.atoms
        a["alloc"][s] = state.alloc
        a["alphas"][s] = state.alphas
        if state.sticks is not None:
            a["sticks"][s] = state.sticks
        a["phi_00"][s] = state.phi_00
        a["v_0"][s] = state.v_0
        if loglik is not None:
            a["loglik"][s] = loglik
        self._n += 1
        self.meta["n_stored"] = self._n

    def state(self, s, y=None):
        """Sample ``s`` as a :class:`ChainState` (responses ``y`` optional)."""
        return ChainState(b=self.b[s].copy(), gamma=self.gamma[s].copy(),
                          sigma=self.sigma[s].copy(), atoms=self.atoms[s].copy(),
                          alloc=self.alloc[s].astype(int), alphas=self.alphas[s].copy(),
                          phi_00=self.phi_00[s].copy(), v_0=self.v_0[s].copy(), y=y,
                          sticks=self.sticks[s].copy())

    def weights(self, s, z):
        """Mixture weights of sample ``s`` at baseline covariates ``z``."""
        from .priors import compute_weights, stick_weights
        if self.prior == "dp":
            w = stick_weights(self.sticks[s])
            return w if np.ndim(z) == 1 else np.broadcast_to(w, (len(z), w.shape[0]))
        return compute_weights(self.alphas[s], z)

    # --- persistence ------------------------------------------------------

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        layout = {}
        for name in self.FIELDS:
            arr = np.ascontiguousarray(self._arrays[name][: self._n])
            arr.tofile(os.path.join(directory, f"{name}.bin"))
            layout[name] = {"dtype": arr.dtype.str, "shape": list(arr.shape)}
        meta = dict(self.meta, n_stored=self._n, capacity=self._n, arrays=layout)
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, directory, capacity=None):
        """Read a store; ``capacity`` reserves room for further appends."""
        with open(os.path.join(directory, "manifest.json")) as fh:
            meta = json.load(fh)
        if meta.get("version") != LAYOUT_VERSION:
            raise ValueError(f"unsupported store layout {meta.get('version')!r}")
        layout = meta.pop("arrays")
        n = meta["n_stored"]
        cap = max(n, capacity or 0)
        arrays = {}
        for name, info in layout.items():
            shape = tuple(info["shape"])
            data = np.fromfile(os.path.join(directory, f"{name}.bin"),
                               dtype=info["dtype"]).reshape(shape)
            full = np.zeros((cap,) + shape[1:], dtype=data.dtype)
            full[:n] = data
            arrays[name] = full
        meta["capacity"] = cap
        return cls(arrays, meta)

    @classmethod
    def concatenate(cls, stores):
        """Pool several chains (same model and data) into one store."""
        stores = list(stores)
        if not stores:
            raise ValueError("nothing to concatenate")
        arrays = {name: np.concatenate([getattr(s, name) for s in stores])
                  for name in cls.FIELDS}
        meta = dict(stores[0].meta)
        meta.update(n_stored=len(arrays["alloc"]), capacity=len(arrays["alloc"]),
                    chain=[s.meta["chain"] for s in stores])
        return cls(arrays, meta)

    def identical_to(self, other):
        """Bit-level equality of every stored array."""
        return len(self) == len(other) and all(
            np.array_equal(getattr(self, n), getattr(other, n)) for n in self.FIELDS)


# --- checkpoints -------------------------------------------------------------

_STATE_FIELDS = ("b", "gamma", "sigma", "atoms", "alloc", "alphas", "phi_00",
                 "v_0", "y", "pg", "sticks")


def save_checkpoint(directory, state, store, iteration, rng_state):
    """Write a resumable checkpoint, replacing any previous one atomically."""
    os.makedirs(directory, exist_ok=True)
    final = os.path.join(directory, "checkpoint")
    tmp = final + ".tmp"
    if os.path.exists(tmp):
        shutil.rmtree(tmp)
    os.makedirs(tmp)
    np.savez(os.path.join(tmp, "state.npz"),
             **{f: getattr(state, f) for f in _STATE_FIELDS if getattr(state, f) is not None})
    store.save(os.path.join(tmp, "samples"))
    with open(os.path.join(tmp, "progress.json"), "w") as fh:
        json.dump({"iteration": iteration, "rng": rng_state,
                   "capacity": store.meta["capacity"]}, fh)
    if os.path.exists(final):
        shutil.rmtree(final)
    os.replace(tmp, final)


def load_checkpoint(directory):
    """``(state, store, iteration, rng_state)`` or None if there is no checkpoint."""
    path = os.path.join(directory, "checkpoint")
    if not os.path.isdir(path):
        return None
    with open(os.path.join(path, "progress.json")) as fh:
        progress = json.load(fh)
    with np.load(os.path.join(path, "state.npz")) as npz:
        parts = {f: npz[f].copy() for f in npz.files}
    state = ChainState(**parts)
    store = SampleStore.load(os.path.join(path, "samples"), capacity=progress["capacity"])
    return state, store, progress["iteration"], progress["rng"]
