"""Synthetic scenarios with known clusterings and the prediction splits.

Every scenario uses ``k = 3`` responses, ``Sigma`` (or the Student-t scale)
as documented in :class:`ScenarioSpec`, ``B = 0`` and ``Gamma = 0`` in the
generating process and ``y_0 = 0``.  Baseline covariates are two-dimensional
draws from the component's covariate law and the single time-varying
covariate is ``sqrt(t)`` (it has no effect on the truth but exercises the
``B`` update).
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .data import LongitudinalDataset, Partition

PHI_BAR = (
    np.diag([1.1, 1.1, 1.0]),
    np.array([[1.1, -0.1, 0.0], [-0.1, 1.1, -0.1], [0.0, 0.0, 0.9]]),
    np.array([[0.9, -0.1, 0.0], [-0.1, 1.1, -0.1], [-0.1, 0.0, 1.5]]),
)

# component covariate means: two well separated clouds for scenarios I/III
SEPARATED_MEANS = np.array([[-3.0, -3.0], [3.0, 3.0], [0.0, 0.0]])
# stand-in for scenario II: three overlapping unit clouds on a line
OVERLAPPING_MEANS = np.array([[-1.5, -1.5], [1.5, 1.5], [0.0, 0.0]])


@dataclass(frozen=True)
class ScenarioSpec:
    """Generative settings of one synthetic scenario.

    Parameters
    ----------
    scenario : {1, 2, 3}
    n_subjects, horizon : int
    weights : sequence of 3 floats, optional
        Component probabilities; defaults to ``(.5, .5, 0)`` for scenarios 1
        and 3 and ``(.25, .25, .5)`` for scenario 2.
    covariate_means : (3, q) array, optional
        Mean of the unit-covariance Gaussian covariate law of each component.
        Scenario 2 needs it to be passed unless ``allow_default_covariates``.
    noise_sd : float
        Gaussian errors have covariance ``noise_sd**2 I`` (scenarios 1, 2).
    t_df, t_scale : float
        Student-t errors of scenario 3.
    zero_second_phi : bool
        Replace the second component matrix by the zero matrix.
    """

    scenario: int = 1
    n_subjects: int = 300
    horizon: int = 10
    weights: tuple = None
    covariate_means: np.ndarray = field(default=None, compare=False)
    noise_sd: float = 0.5
    t_df: float = 5.0
    t_scale: float = 1.0
    zero_second_phi: bool = False
    allow_default_covariates: bool = False

    def __post_init__(self):
        if self.scenario not in (1, 2, 3):
            raise ValueError("scenario must be 1, 2 or 3")
        if self.weights is None:
            w = (0.25, 0.25, 0.5) if self.scenario == 2 else (0.5, 0.5, 0.0)
            object.__setattr__(self, "weights", w)
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (3,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be three non-negative numbers summing to one")
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2")
        if self.n_subjects < 0:
            raise ValueError("n_subjects must be non-negative")

    @property
    def phi_bar(self):
        phis = [p.copy() for p in PHI_BAR]
        if self.zero_second_phi:
            phis[1] = np.zeros((3, 3))
        return phis

    def means(self):
        if self.covariate_means is not None:
            return np.asarray(self.covariate_means, dtype=float)
        if self.scenario == 2:
            if not self.allow_default_covariates:
                raise ValueError("scenario 2 needs covariate_means (a 3 x q table of "
                                 "component covariate means); pass allow_default_covariates"
                                 "=True to use the built-in overlapping stand-in")
            return OVERLAPPING_MEANS
        return SEPARATED_MEANS


@dataclass(frozen=True, eq=False)
class SimulatedDataset:
    """A generated dataset with its truth.

    ``components`` holds the generating component (0-based) of each subject.
    """

    data: LongitudinalDataset
    true_partition: Partition
    components: np.ndarray
    spec: ScenarioSpec
    test: "SimulatedDataset" = None


def time_covariate(T):
    return np.sqrt(np.arange(1, T + 1, dtype=float))[:, None]


def _errors(spec, rng, size):
    if spec.scenario == 3:
        return spec.t_scale * rng.standard_t(spec.t_df, size=size)
    return spec.noise_sd * rng.standard_normal(size)


def generate_scenario(spec, rng, with_test=False):
    """Simulate ``spec.n_subjects`` trajectories (and optionally a test set).

    Returns
    -------
    SimulatedDataset
    """
    n, T, k = spec.n_subjects, spec.horizon, 3
    means = spec.means()
    phis = spec.phi_bar
    comp = rng.choice(3, size=n, p=np.asarray(spec.weights)) if n else np.zeros(0, int)
    z = means[comp] + rng.standard_normal((n, means.shape[1]))
    eps = _errors(spec, rng, (n, T, k))
    y = np.zeros((n, T, k))
    for i in range(n):
        prev = np.zeros(k)
        for t in range(T):
            prev = phis[comp[i]] @ prev + eps[i, t]
            y[i, t] = prev
    x = time_covariate(T)
    if n:
        ds = LongitudinalDataset.from_arrays(list(y), [x] * n, z)
    else:
        ds = LongitudinalDataset.empty(k, 1, means.shape[1])
    test = None
    if with_test:
        test = generate_scenario(spec, rng, with_test=False)
    return SimulatedDataset(ds, Partition(comp), comp, spec, test)


def make_oos_split(spec, rng, n_test=300):
    """Training set plus an independent test set drawn from the same process."""
    train = generate_scenario(spec, rng)
    test = generate_scenario(replace(spec, n_subjects=n_test), rng)
    return SimulatedDataset(train.data, train.true_partition, train.components, spec, test)


@dataclass(frozen=True, eq=False)
class InsSplit:
    """Training data with some trajectories cut short.

    ``subjects`` are the truncated subject indices, ``tails[j]`` the
    held-out responses ``y_{t_cut+1..T}`` of ``subjects[j]``.
    """

    data: LongitudinalDataset
    subjects: np.ndarray
    tails: list
    t_cut: int


def make_ins_split(ds, rng, n_truncate=100, t_cut=5):
    """Truncate ``n_truncate`` random trajectories after ``t_cut`` visits."""
    eligible = np.nonzero(ds.lengths > t_cut)[0]
    if n_truncate > eligible.size:
        raise ValueError(f"only {eligible.size} subjects have more than {t_cut} visits, "
                         f"{n_truncate} requested")
    chosen = np.sort(rng.choice(eligible, size=n_truncate, replace=False)) if n_truncate else \
        np.zeros(0, dtype=int)
    cut = set(chosen.tolist())
    ys, xs, obs, tails = [], [], [], []
    for i in range(ds.n_subjects):
        s = ds.subject_slice(i)
        keep = t_cut if i in cut else ds.lengths[i]
        ys.append(ds.y[s][:keep])
        xs.append(ds.x[s][:keep])
        obs.append(ds.observed[s][:keep])
        if i in cut:
            tails.append(ds.y[s][keep:].copy())
    if ds.n_subjects == 0:
        return InsSplit(ds, chosen, tails, t_cut)
    data = LongitudinalDataset.from_arrays(ys, xs, ds.z, observed=obs,
                                           subject_ids=ds.subject_ids)
    return InsSplit(data, chosen, tails, t_cut)


def cohort_covariates(n=766, rng=None):
    """A synthetic baseline design resembling a birth-cohort covariate table.

    Columns: intercept, standardised maternal age, standardised
    pre-pregnancy BMI, standardised gestational age, and binary indicators
    for sex, two ethnicity groups (one-hot of three) and a maternal
    education level.  Only the shape of the design matters for the prior
    cluster-count curve.
    """
    rng = np.random.default_rng(rng)
    age = rng.normal(0, 1, n)
    bmi = 0.3 * age + rng.normal(0, 0.95, n)
    ga = rng.normal(0, 1, n)
    sex = rng.integers(0, 2, n)
    eth = rng.choice(3, size=n, p=[0.55, 0.27, 0.18])
    edu = (rng.random(n) < 0.4 + 0.1 * np.tanh(age)).astype(int)
    Z = np.column_stack([np.ones(n), age, bmi, ga, sex, eth == 1, eth == 2, edu])
    return Z.astype(float)
