import numpy as np
import pytest
from scipy import stats
from scipy.special import logsumexp

from lsbvar import gibbs, missing
from lsbvar.data import LongitudinalDataset
from lsbvar.model import ModelHyperparams
from lsbvar.priors import compute_weights
from lsbvar.store import SampleStore

from conftest import random_dataset


def state_for(ds, hp, rng, config=None):
    st = gibbs.draw_from_prior(ds, hp, rng, config)
    st.y = np.where(ds.observed, ds.y, 0.0)
    st.atoms *= 0.5
    return st


def blocks(k, v):
    """``I_k (x) v^T``: maps a row-stacked coefficient matrix to ``C v``."""
    return np.kron(np.eye(k), np.asarray(v)[None, :])


# --- step 1: b ------------------------------------------------------------------

def test_b_scalar_conjugate_formula():
    ds = LongitudinalDataset.from_arrays([np.array([[2.0], [np.nan]])],
                                         [np.array([[1.5], [0.0]])], np.array([[0.7]]))
    hp = ModelHyperparams.default(1, 1, 1, H=1).replace(Sigma_B=np.array([[4.0]]))
    st = state_for(ds, hp, np.random.default_rng(0))
    st.y = np.array([[2.0], [0.0]])
    st.sigma = np.array([[0.5]])
    st.atoms[:] = 0.3
    st.gamma = np.array([0.2])
    # rows: t=1 (x=1.5, y_0=0) and t=2 (x=0, contributes nothing to b)
    w1 = 2.0 - 0.2 * 0.7
    prec = 1.5 ** 2 / 0.5 + 1 / 4.0
    mean, P = gibbs.b_conditional(st, ds, hp)
    assert P[0, 0] == pytest.approx(prec, abs=1e-12)
    assert mean[0] == pytest.approx(1.5 * w1 / 0.5 / prec, abs=1e-12)


def test_b_matches_dense_oracle(rng):
    ds = random_dataset(rng, n=5, T=4, k=2, p=2, q=2)
    hp = ModelHyperparams.default(2, 2, 2, H=3).replace(Sigma_B=np.diag([1.0, 2.0, 0.5, 3.0]))
    st = state_for(ds, hp, rng)
    sinv = np.linalg.inv(st.sigma)
    P = np.linalg.inv(hp.Sigma_B)
    lin = np.zeros(4)
    ylag = gibbs.lagged(st.y, ds)
    for r in range(ds.n_rows):
        i = ds.row_subject[r]
        w = st.y[r] - st.atoms[st.alloc[i]] @ ylag[r] - st.Gamma() @ ds.z[i]
        X = blocks(2, ds.x[r])
        P += X.T @ sinv @ X
        lin += X.T @ sinv @ w
    mean, prec = gibbs.b_conditional(st, ds, hp)
    np.testing.assert_allclose(prec, P, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(mean, np.linalg.solve(P, lin), rtol=1e-8, atol=1e-10)


def test_b_vague_prior_gives_least_squares(rng):
    ds = random_dataset(rng, n=8, T=5, k=2, p=2, q=1)
    hp = ModelHyperparams.default(2, 2, 1, H=1).replace(Sigma_B=1e12 * np.eye(4))
    st = state_for(ds, hp, rng)
    st.atoms[:] = 0.0
    st.gamma[:] = 0.0
    coef, *_ = np.linalg.lstsq(ds.x, st.y, rcond=None)
    mean, _ = gibbs.b_conditional(st, ds, hp)
    np.testing.assert_allclose(mean.reshape(2, 2), coef.T, atol=1e-8)


def test_b_without_data_is_prior(rng):
    ds = LongitudinalDataset.empty(2, 1, 1)
    hp = ModelHyperparams.default(2, 1, 1, H=2).replace(Sigma_B=np.diag([2.0, 3.0]))
    st = gibbs.draw_from_prior(ds, hp, rng)
    mean, prec = gibbs.b_conditional(st, ds, hp)
    np.testing.assert_array_equal(mean, 0.0)
    np.testing.assert_allclose(prec, np.diag([0.5, 1 / 3]))
    draws = np.array([gibbs.update_b(st, ds, hp, rng) for _ in range(20_000)])
    np.testing.assert_allclose(draws.var(axis=0), [2.0, 3.0], rtol=0.05)


def test_b_draws_follow_conditional(rng):
    ds = random_dataset(rng, n=4, T=3, k=2, p=1, q=1)
    hp = ModelHyperparams.default(2, 1, 1, H=2)
    st = state_for(ds, hp, rng)
    mean, prec = gibbs.b_conditional(st, ds, hp)
    draws = np.array([gibbs.update_b(st, ds, hp, rng) for _ in range(40_000)])
    cov = np.linalg.inv(prec)
    se = np.sqrt(np.diag(cov) / draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 4 * se)
    np.testing.assert_allclose(np.cov(draws.T), cov, rtol=0.05, atol=0.02 * cov.max())


# --- step 2: gamma --------------------------------------------------------------

def test_gamma_matches_dense_oracle(rng):
    ds = random_dataset(rng, n=5, T=4, k=2, p=1, q=3, lengths=[2, 3, 4, 5, 3])
    hp = ModelHyperparams.default(2, 1, 3, H=2)
    st = state_for(ds, hp, rng)
    sinv = np.linalg.inv(st.sigma)
    P = np.linalg.inv(hp.Sigma_Gamma)
    lin = np.zeros(6)
    ylag = gibbs.lagged(st.y, ds)
    for r in range(ds.n_rows):
        i = ds.row_subject[r]
        w = st.y[r] - st.atoms[st.alloc[i]] @ ylag[r] - st.B() @ ds.x[r]
        Z = blocks(2, ds.z[i])
        P += Z.T @ sinv @ Z
        lin += Z.T @ sinv @ w
    mean, prec = gibbs.gamma_conditional(st, ds, hp)
    np.testing.assert_allclose(prec, P, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(mean, np.linalg.solve(P, lin), rtol=1e-8, atol=1e-10)


def test_gamma_noiseless_recovery():
    rng = np.random.default_rng(4)
    G = np.array([[1.0, -2.0], [0.5, 3.0]])
    z = rng.standard_normal((6, 2))
    ys = [np.tile(G @ zi, (4, 1)) for zi in z]
    ds = LongitudinalDataset.from_arrays(ys, [np.zeros((4, 0))] * 6, z)
    hp = ModelHyperparams.default(2, 0, 2, H=1).replace(Sigma_Gamma=1e12 * np.eye(4))
    st = state_for(ds, hp, rng)
    st.atoms[:] = 0.0
    mean, _ = gibbs.gamma_conditional(st, ds, hp)
    np.testing.assert_allclose(mean.reshape(2, 2), G, atol=1e-6)


def test_gamma_symmetric_subjects_cancel(rng):
    z = np.array([[1.0, 2.0], [-1.0, -2.0]])
    y = rng.standard_normal((3, 2))
    ds = LongitudinalDataset.from_arrays([y, y], [np.zeros((3, 0))] * 2, z)
    hp = ModelHyperparams.default(2, 0, 2, H=1)
    st = state_for(ds, hp, rng)
    mean, _ = gibbs.gamma_conditional(st, ds, hp)
    np.testing.assert_allclose(mean, 0.0, atol=1e-12)


def test_gamma_without_data_is_prior(rng):
    ds = LongitudinalDataset.empty(2, 0, 2)
    hp = ModelHyperparams.default(2, 0, 2, H=1)
    st = gibbs.draw_from_prior(ds, hp, rng)
    mean, prec = gibbs.gamma_conditional(st, ds, hp)
    np.testing.assert_array_equal(mean, 0.0)
    np.testing.assert_allclose(prec, np.eye(4))


# --- step 3: Sigma --------------------------------------------------------------

def test_sigma_degrees_of_freedom():
    rng = np.random.default_rng(0)
    ds = random_dataset(rng, n=300, T=10, k=3, p=1, q=2)
    hp = ModelHyperparams.default(3, 1, 2, H=2, nu=5)
    st = state_for(ds, hp, rng)
    df, _ = gibbs.sigma_conditional(st, ds, hp)
    assert df == 3005


def test_sigma_scale_matches_double_loop(rng):
    ds = random_dataset(rng, n=4, T=5, k=2, p=1, q=2, lengths=[2, 5, 3, 4])
    hp = ModelHyperparams.default(2, 1, 2, H=3)
    st = state_for(ds, hp, rng)
    S = np.linalg.inv(hp.Sigma_0)
    for i in range(ds.n_subjects):
        prev = np.zeros(2)
        for r in range(ds.offsets[i], ds.offsets[i] + ds.lengths[i]):
            e = st.y[r] - st.atoms[st.alloc[i]] @ prev - st.B() @ ds.x[r] - st.Gamma() @ ds.z[i]
            S += np.outer(e, e)
            prev = st.y[r]
    df, scale = gibbs.sigma_conditional(st, ds, hp)
    assert df == hp.nu + ds.n_rows
    np.testing.assert_allclose(scale, S, rtol=1e-10, atol=1e-10)


def test_sigma_without_data_is_prior(rng):
    ds = LongitudinalDataset.empty(2, 1, 1)
    hp = ModelHyperparams.default(2, 1, 1, H=1, nu=7)
    st = gibbs.draw_from_prior(ds, hp, rng)
    df, scale = gibbs.sigma_conditional(st, ds, hp)
    assert df == 7
    np.testing.assert_allclose(scale, 7 * np.eye(2))


def test_sigma_scalar_conjugate_draws(rng):
    ds = LongitudinalDataset.from_arrays([np.array([[1.0], [2.0]])], [np.zeros((2, 0))],
                                         np.ones((1, 1)))
    hp = ModelHyperparams.default(1, 0, 1, H=1, nu=6)
    st = state_for(ds, hp, rng)
    st.atoms[:] = 0.5
    st.gamma[:] = 0.0
    df, scale = gibbs.sigma_conditional(st, ds, hp)
    assert df == 8
    assert scale[0, 0] == pytest.approx(6 + 1.0 + (2.0 - 0.5) ** 2)
    draws = np.array([gibbs.update_sigma(st, ds, hp, rng)[0, 0] for _ in range(20_000)])
    ref = stats.invgamma(df / 2, scale=scale[0, 0] / 2)
    assert stats.kstest(draws, ref.cdf).pvalue > 1e-3


# --- step 4: allocations --------------------------------------------------------

def test_single_component_allocation(rng):
    ds = random_dataset(rng)
    hp = ModelHyperparams.default(2, 1, 2, H=1)
    st = state_for(ds, hp, rng)
    assert gibbs.update_allocations(st, ds, hp, rng).tolist() == [0] * ds.n_subjects


def test_degenerate_weights_force_first_component(rng):
    ds = random_dataset(rng, q=1)
    ds = ds.with_z(np.ones((ds.n_subjects, 1)))
    hp = ModelHyperparams.default(2, 1, 1, H=2)
    st = state_for(ds, hp, rng)
    st.alphas = np.array([[800.0]])   # nu_1(z) = 1, so w_2(z) = 0
    st.atoms[1] = st.atoms[0] + 5.0   # even a much better fitting second atom
    for _ in range(20):
        assert gibbs.update_allocations(st, ds, hp, rng).tolist() == [0] * ds.n_subjects


def test_allocation_frequencies_match_enumeration(rng):
    n = 100_000
    y = np.array([[0.4], [1.1]])
    x = np.array([[1.0], [2.0]])
    ds = LongitudinalDataset.from_arrays([y] * n, [x] * n, np.tile([[0.3, -1.0]], (n, 1)))
    hp = ModelHyperparams.default(1, 1, 2, H=2)
    st = state_for(ds, hp, rng)
    st.atoms = np.array([[[0.5]], [[1.8]]])
    st.b = np.array([0.2])
    st.gamma = np.array([0.1, 0.05])
    st.sigma = np.array([[0.6]])
    st.alphas = np.array([[0.4, 0.3]])
    w = compute_weights(st.alphas, ds.z[0])
    logp = np.log(w).copy()
    for h in range(2):
        prev = 0.0
        for t in range(2):
            mean = st.atoms[h, 0, 0] * prev + 0.2 * x[t, 0] + 0.1 * 0.3 + 0.05 * -1.0
            logp[h] += stats.norm(mean, np.sqrt(0.6)).logpdf(y[t, 0])
            prev = y[t, 0]
    p1 = np.exp(logp[1] - logsumexp(logp))
    alloc = gibbs.update_allocations(st, ds, hp, rng, gibbs.SamplerConfig())
    freq = alloc.mean()
    assert abs(freq - p1) < 3 * np.sqrt(p1 * (1 - p1) / n)


def test_allocation_logprobs_normalised(rng):
    ds = random_dataset(rng, n=7)
    hp = ModelHyperparams.default(2, 1, 2, H=4)
    st = state_for(ds, hp, rng)
    lp = gibbs.allocation_logprobs(st, ds, hp, gibbs.SamplerConfig())
    np.testing.assert_allclose(np.exp(lp).sum(axis=1), 1.0, atol=1e-12)


def test_component_loglik_matches_loop(rng):
    ds = random_dataset(rng, n=5, lengths=[2, 3, 5, 2, 4])
    hp = ModelHyperparams.default(2, 1, 2, H=3)
    st = state_for(ds, hp, rng)
    got = gibbs.component_loglik(st, ds)
    sinv = np.linalg.inv(st.sigma)
    for h in range(3):
        for i in range(ds.n_subjects):
            prev, acc = np.zeros(2), 0.0
            for r in range(ds.offsets[i], ds.offsets[i] + ds.lengths[i]):
                e = st.y[r] - st.atoms[h] @ prev - st.B() @ ds.x[r] - st.Gamma() @ ds.z[i]
                acc += e @ sinv @ e
                prev = st.y[r]
            assert got[h, i] == pytest.approx(-0.5 * acc, abs=1e-10)


# --- step 5: atoms --------------------------------------------------------------

def test_atom_scalar_conjugate_formula(rng):
    ds = LongitudinalDataset.from_arrays([np.array([[1.2], [0.9]])], [np.zeros((2, 0))],
                                         np.ones((1, 1)))
    hp = ModelHyperparams.default(1, 0, 1, H=2)
    st = state_for(ds, hp, rng)
    st.alloc = np.array([1])
    st.gamma[:] = 0.0
    st.sigma = np.array([[0.4]])
    st.v_0 = np.array([[2.0]])
    st.phi_00 = np.array([0.3])
    means, prec, _ = gibbs.atom_conditionals(st, ds, hp)
    # only the t=2 row carries information (y_0 = 0)
    P = 1.2 ** 2 / 0.4 + 1 / 2.0
    assert prec[1, 0, 0] == pytest.approx(P, abs=1e-12)
    assert means[1, 0] == pytest.approx((1.2 * 0.9 / 0.4 + 0.3 / 2.0) / P, abs=1e-12)
    # the empty component keeps the current N(phi_00, V_0)
    assert means[0, 0] == pytest.approx(0.3) and prec[0, 0, 0] == pytest.approx(0.5)


def test_atoms_match_dense_oracle(rng):
    ds = random_dataset(rng, n=6, T=4, k=2, p=1, q=2)
    hp = ModelHyperparams.default(2, 1, 2, H=3)
    st = state_for(ds, hp, rng)
    st.alloc = np.array([0, 0, 2, 2, 2, 0])
    sinv = np.linalg.inv(st.sigma)
    v0inv = np.linalg.inv(st.v_0)
    means, prec, _ = gibbs.atom_conditionals(st, ds, hp)
    ylag = gibbs.lagged(st.y, ds)
    for h in range(3):
        P = v0inv.copy()
        lin = v0inv @ st.phi_00
        for r in range(ds.n_rows):
            i = ds.row_subject[r]
            if st.alloc[i] != h:
                continue
            resid = st.y[r] - st.B() @ ds.x[r] - st.Gamma() @ ds.z[i]
            X = blocks(2, ylag[r])
            P += X.T @ sinv @ X
            lin += X.T @ sinv @ resid
        np.testing.assert_allclose(prec[h], P, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(means[h], np.linalg.solve(P, lin), rtol=1e-8, atol=1e-10)
    # component 1 is empty
    np.testing.assert_allclose(means[1], st.phi_00, atol=1e-12)


def test_atom_noiseless_recovery():
    phi = np.array([[0.9, 0.2], [-0.3, 0.8]])
    rng = np.random.default_rng(5)
    ys = []
    for _ in range(5):
        y = [rng.standard_normal(2)]
        for _ in range(5):
            y.append(phi @ y[-1])
        ys.append(np.array(y))
    ds = LongitudinalDataset.from_arrays(ys, [np.zeros((6, 0))] * 5, np.zeros((5, 1)))
    hp = ModelHyperparams.default(2, 0, 1, H=1)
    st = state_for(ds, hp, rng)
    st.v_0 = 1e10 * np.eye(4)
    # the first row of each subject is an innovation from y_0 = 0
    st.y = np.array(ds.y)
    means, _, _ = gibbs.atom_conditionals(st, ds, hp)
    np.testing.assert_allclose(means[0].reshape(2, 2), phi, atol=1e-6)


def test_atom_draws_follow_conditional(rng):
    ds = random_dataset(rng, n=3, T=4, k=1, p=1, q=1)
    hp = ModelHyperparams.default(1, 1, 1, H=2)
    st = state_for(ds, hp, rng)
    means, prec, _ = gibbs.atom_conditionals(st, ds, hp)
    draws = np.array([gibbs.update_atoms(st, ds, hp, rng)[:, 0, 0] for _ in range(40_000)])
    var = 1 / prec[:, 0, 0]
    se = np.sqrt(var / draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - means[:, 0]) < 4 * se)
    np.testing.assert_allclose(draws.var(axis=0), var, rtol=0.04)


# --- step 6: sticks -------------------------------------------------------------

def test_alpha_conditional_hand_formula(rng):
    z = np.array([[1.7]])
    ds = LongitudinalDataset.from_arrays([np.zeros((2, 1))], [np.zeros((2, 0))], z)
    hp = ModelHyperparams.default(1, 0, 1, H=3).replace(mu_alpha=np.array([0.4]),
                                                         Sigma_alpha=np.array([[2.0]]))
    st = state_for(ds, hp, rng)
    st.alloc = np.array([0])
    omega = np.array([0.31])
    mean, prec = gibbs.alpha_conditional(0, st, ds, hp, omega)
    P = 1 / 2.0 + 0.31 * 1.7 ** 2
    assert prec[0, 0] == pytest.approx(P, abs=1e-12)
    assert mean[0] == pytest.approx((0.5 * 1.7 + 0.4 / 2.0) / P, abs=1e-12)
    # the subject is not in the risk set of the second stick: prior
    mean, prec = gibbs.alpha_conditional(1, st, ds, hp, np.zeros(0))
    assert mean[0] == pytest.approx(0.4) and prec[0, 0] == pytest.approx(0.5)


def test_alpha_update_pg_latents_on_risk_sets(rng):
    ds = random_dataset(rng, n=6)
    hp = ModelHyperparams.default(2, 1, 2, H=4)
    st = state_for(ds, hp, rng)
    st.alloc = np.array([0, 1, 3, 3, 1, 2])
    alphas, pg = gibbs.update_alphas(st, ds, hp, rng)
    risk = st.alloc[:, None] >= np.arange(3)[None, :]
    assert np.all(np.isfinite(pg[risk])) and np.all(pg[risk] > 0)
    assert np.all(np.isnan(pg[~risk]))
    assert alphas.shape == (3, 2)


def test_alpha_empty_risk_set_draws_prior(rng):
    ds = random_dataset(rng, n=3)
    hp = ModelHyperparams.default(2, 1, 2, H=3).replace(mu_alpha=np.array([5.0, -5.0]))
    st = state_for(ds, hp, rng)
    st.alloc = np.zeros(3, dtype=int)
    draws = np.array([gibbs.update_alphas(st, ds, hp, rng)[0][1] for _ in range(4000)])
    np.testing.assert_allclose(draws.mean(axis=0), [5.0, -5.0], atol=0.1)
    np.testing.assert_allclose(draws.var(axis=0), [1.0, 1.0], rtol=0.1)


def test_dp_stick_parameters():
    a, b = gibbs.dp_stick_params(np.array([0, 0, 0, 1, 1]), 3, 1.0)
    assert a.tolist() == [4.0, 3.0] and b.tolist() == [3.0, 1.0]


def test_dp_single_component():
    a, b = gibbs.dp_stick_params(np.zeros(4, dtype=int), 1, 1.0)
    assert a.size == 0 and b.size == 0


def test_dp_empty_counts_uniform_sticks(rng):
    from lsbvar.priors import stick_weights
    ds = LongitudinalDataset.empty(1, 0, 1)
    hp = ModelHyperparams.default(1, 0, 1, H=4)
    config = gibbs.SamplerConfig(prior="dp", dp_mass=1.0)
    st = gibbs.draw_from_prior(ds, hp, rng, config)
    w1 = [stick_weights(gibbs.update_dp_sticks(st, config, rng))[0] for _ in range(20_000)]
    assert abs(np.mean(w1) - 0.5) < 3 * np.sqrt(1 / 12 / 20_000)


# --- step 7: (phi_00, V_0) -------------------------------------------------------

def test_hyper_single_atom_formula(rng):
    hp = ModelHyperparams.default(1, 0, 1, H=1, lam=0.5, tau_0=3.0).replace(
        phi_000=np.array([0.2]), V_00=np.array([[1.5]]))
    ds = LongitudinalDataset.empty(1, 0, 1)
    st = gibbs.draw_from_prior(ds, hp, rng)
    st.atoms = np.array([[[1.1]]])
    mean, shrink, df, scale = gibbs.hyper_conditional(st, hp)
    assert mean[0] == pytest.approx((1.1 + 0.5 * 0.2) / 1.5, abs=1e-12)
    assert shrink == pytest.approx(1.5)
    assert df == pytest.approx(4.0)
    assert scale[0, 0] == pytest.approx(1.5 + 0.5 / 1.5 * (1.1 - 0.2) ** 2, abs=1e-12)


def test_hyper_matches_formula_for_many_atoms(rng):
    hp = ModelHyperparams.default(2, 0, 1, H=5, lam=0.1)
    ds = LongitudinalDataset.empty(2, 0, 1)
    st = gibbs.draw_from_prior(ds, hp, rng)
    phis = st.atoms.reshape(5, -1)
    bar = phis.mean(axis=0)
    S = sum(np.outer(p - bar, p - bar) for p in phis) / 5
    mean, shrink, df, scale = gibbs.hyper_conditional(st, hp)
    np.testing.assert_allclose(mean, (5 * bar + 0.1 * hp.phi_000) / 5.1, atol=1e-12)
    expected = hp.V_00 + 5 * S + 5 * 0.1 / 5.1 * np.outer(bar - hp.phi_000, bar - hp.phi_000)
    np.testing.assert_allclose(scale, expected, atol=1e-10)
    assert df == hp.tau_0 + 5 and shrink == pytest.approx(5.1)


def test_hyper_fixed_point(rng):
    hp = ModelHyperparams.default(2, 0, 1, H=4).replace(phi_000=np.arange(4.0))
    st = gibbs.draw_from_prior(LongitudinalDataset.empty(2, 0, 1), hp, rng)
    st.atoms = np.tile(np.arange(4.0).reshape(2, 2), (4, 1, 1))
    mean, *_ = gibbs.hyper_conditional(st, hp)
    np.testing.assert_allclose(mean, np.arange(4.0), atol=1e-12)


def test_hyper_scale_always_spd(rng):
    hp = ModelHyperparams.default(2, 0, 1, H=6)
    st = gibbs.draw_from_prior(LongitudinalDataset.empty(2, 0, 1), hp, rng)
    for _ in range(1000):
        st.atoms = 3 * rng.standard_normal((6, 2, 2))
        _, _, _, scale = gibbs.hyper_conditional(st, hp)
        np.linalg.cholesky(scale)


# --- pointwise log-likelihood ------------------------------------------------------

@pytest.mark.parametrize("prior", ["lsb", "dp"])
def test_loglik_records_sum_to_full_trajectory_density(rng, prior):
    ds = random_dataset(rng, n=6, T=4, k=2, p=1, q=2, missing=0.25, lengths=[3, 4, 2, 4, 5, 3])
    hp = ModelHyperparams.default(2, 1, 2, H=3)
    config = gibbs.SamplerConfig(prior=prior)
    for _ in range(5):
        st = state_for(ds, hp, rng, config)
        missing.impute_all(st, ds, rng)
        ll = gibbs.pointwise_loglik(st, ds, config)
        assert ll.shape == (ds.observed.sum(),)
        w = gibbs.component_weights(st, ds, config)
        total = 0.0
        for i in range(ds.n_subjects):
            s = ds.subject_slice(i)
            obs = ds.observed[s].reshape(-1)
            y = st.y[s].reshape(-1)
            comps = []
            for h in range(3):
                law = missing.build_trajectory_law(st.atoms[h], st.b, st.gamma, st.sigma,
                                                   ds.x[s], ds.z[i])
                cov = law.covariance()[np.ix_(obs, obs)]
                comps.append(np.log(w[i, h])
                             + stats.multivariate_normal(law.mean[obs], cov).logpdf(y[obs]))
            total += logsumexp(comps)
        assert ll.sum() == pytest.approx(total, abs=1e-8)


# --- chain driver -------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        gibbs.SamplerConfig(n_iter=10, burn_in=10)
    with pytest.raises(ValueError):
        gibbs.SamplerConfig(thin=0)
    with pytest.raises(ValueError):
        gibbs.SamplerConfig(prior="pitman-yor")
    assert gibbs.SamplerConfig(n_iter=100_000, burn_in=50_000, thin=10).n_samples == 5000
    assert gibbs.SamplerConfig(n_iter=11, burn_in=10, thin=1).n_samples == 1
    assert gibbs.SamplerConfig(n_iter=25, burn_in=10, thin=4).n_samples == 3


def _tiny_problem(seed=0, missing_rate=0.15):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, n=10, T=5, k=2, p=1, q=2, missing=missing_rate)
    return ds, ModelHyperparams.default(2, 1, 2, H=4)


@pytest.mark.parametrize("prior", ["lsb", "dp"])
def test_run_chain_stores_expected_samples(prior):
    ds, hp = _tiny_problem()
    config = gibbs.SamplerConfig(n_iter=25, burn_in=10, thin=4, seed=3, prior=prior)
    store = gibbs.run_chain(ds, hp, config)
    assert len(store) == 3
    assert store.loglik.shape == (3, ds.observed.sum())
    assert np.all(np.isfinite(store.loglik))
    assert store.alloc.max() < 4


def test_run_chain_deterministic():
    ds, hp = _tiny_problem()
    config = gibbs.SamplerConfig(n_iter=30, burn_in=10, thin=2, seed=11)
    a = gibbs.run_chain(ds, hp, config)
    b = gibbs.run_chain(ds, hp, config)
    assert a.identical_to(b)
    c = gibbs.run_chain(ds, hp, gibbs.SamplerConfig(n_iter=30, burn_in=10, thin=2, seed=12))
    assert not a.identical_to(c)
    d = gibbs.run_chain(ds, hp, config, chain=1)
    assert not a.identical_to(d)


def test_checkpoint_resume_is_bit_identical(tmp_path, monkeypatch):
    ds, hp = _tiny_problem()
    config = gibbs.SamplerConfig(n_iter=40, burn_in=10, thin=3, seed=5, checkpoint_every=7)
    full = gibbs.run_chain(ds, hp, config)

    calls = {"n": 0}
    original = gibbs.gibbs_sweep

    def interrupted(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 23:
            raise KeyboardInterrupt
        return original(*args, **kwargs)

    monkeypatch.setattr(gibbs, "gibbs_sweep", interrupted)
    with pytest.raises(KeyboardInterrupt):
        gibbs.run_chain(ds, hp, config, checkpoint_dir=str(tmp_path))
    monkeypatch.setattr(gibbs, "gibbs_sweep", original)
    assert (tmp_path / "checkpoint").is_dir()
    resumed = gibbs.run_chain(ds, hp, config, checkpoint_dir=str(tmp_path), resume=True)
    assert resumed.identical_to(full)


def test_store_save_load_round_trip(tmp_path):
    ds, hp = _tiny_problem()
    store = gibbs.run_chain(ds, hp, gibbs.SamplerConfig(n_iter=20, burn_in=5, thin=3, seed=1))
    store.save(tmp_path / "s")
    again = SampleStore.load(tmp_path / "s")
    assert again.identical_to(store)
    assert again.meta["dataset"] == ds.fingerprint()
    pooled = SampleStore.concatenate([store, again])
    assert len(pooled) == 2 * len(store)


def test_sampler_error_reports_iteration_and_dump(tmp_path, monkeypatch):
    ds, hp = _tiny_problem()
    original = gibbs.update_sigma
    calls = {"n": 0}

    def failing(*args):
        calls["n"] += 1
        if calls["n"] == 4:
            raise np.linalg.LinAlgError("Sigma posterior scale is not positive definite")
        return original(*args)

    monkeypatch.setattr(gibbs, "update_sigma", failing)
    with pytest.raises(gibbs.SamplerError) as info:
        gibbs.run_chain(ds, hp, gibbs.SamplerConfig(n_iter=10, burn_in=2), checkpoint_dir=str(tmp_path))
    assert info.value.iteration == 4
    assert info.value.dump_path and (tmp_path / "failed_state_iter4.npz").exists()


def test_imputed_values_never_overwrite_observed():
    ds, hp = _tiny_problem(missing_rate=0.3)
    config = gibbs.SamplerConfig(n_iter=5, burn_in=1)
    state = gibbs.initial_state(ds, hp, np.random.default_rng(0), config)
    rng = np.random.default_rng(1)
    for _ in range(5):
        gibbs.gibbs_sweep(state, ds, hp, config, rng)
        np.testing.assert_array_equal(state.y[ds.observed], ds.y[ds.observed])


# --- H = 1 against an independently coded parametric VAR sampler ---------------------

def reference_var_sampler(ds, hp, n_iter, rng):
    """Single-component VAR(1) Gibbs sampler written from scratch: all
    regression coefficients (Phi, B, Gamma) are drawn jointly from one
    Gaussian conditional, then Sigma, then (phi_00, V_0)."""
    k, p, q = hp.k, hp.p, hp.q
    d = k * k
    rows = []
    for i in range(ds.n_subjects):
        prev = np.zeros(k)
        for r in range(ds.offsets[i], ds.offsets[i] + ds.lengths[i]):
            v = np.concatenate([prev, ds.x[r], ds.z[i]])
            rows.append((np.kron(np.eye(k), v[None, :]), ds.y[r]))
            prev = ds.y[r]
    # coefficient vector theta = rows of [Phi | B | Gamma]; map to blocks
    m = k + p + q
    idx_phi = np.concatenate([np.arange(j * m, j * m + k) for j in range(k)])
    idx_b = np.concatenate([np.arange(j * m + k, j * m + k + p) for j in range(k)])
    idx_g = np.concatenate([np.arange(j * m + k + p, (j + 1) * m) for j in range(k)])
    sigma = np.eye(k)
    phi_00, v_0 = np.zeros(d), np.eye(d)
    out = []
    for _ in range(n_iter):
        prior_prec = np.zeros((k * m, k * m))
        prior_lin = np.zeros(k * m)
        v0inv = np.linalg.inv(v_0)
        prior_prec[np.ix_(idx_phi, idx_phi)] = v0inv
        prior_lin[idx_phi] = v0inv @ phi_00
        if p:
            prior_prec[np.ix_(idx_b, idx_b)] = np.linalg.inv(hp.Sigma_B)
        prior_prec[np.ix_(idx_g, idx_g)] = np.linalg.inv(hp.Sigma_Gamma)
        sinv = np.linalg.inv(sigma)
        P = prior_prec + sum(X.T @ sinv @ X for X, _ in rows)
        lin = prior_lin + sum(X.T @ sinv @ y for X, y in rows)
        cov = np.linalg.inv(P)
        theta = rng.multivariate_normal(cov @ lin, 0.5 * (cov + cov.T))
        S = np.linalg.inv(hp.Sigma_0) + sum(np.outer(y - X @ theta, y - X @ theta) for X, y in rows)
        sigma = np.atleast_2d(stats.invwishart.rvs(df=hp.nu + len(rows), scale=S, random_state=rng))
        phi = theta[idx_phi]
        gap = phi - hp.phi_000
        v_0 = np.atleast_2d(stats.invwishart.rvs(
            df=hp.tau_0 + 1, scale=hp.V_00 + hp.lam / (1 + hp.lam) * np.outer(gap, gap),
            random_state=rng))
        phi_00 = rng.multivariate_normal((phi + hp.lam * hp.phi_000) / (1 + hp.lam), v_0 / (1 + hp.lam))
        out.append(np.concatenate([phi, theta[idx_b], theta[idx_g], sigma.reshape(-1)]))
    return np.array(out)


def energy_test(a, b, n_perm, rng):
    """Two-sample energy statistic with a permutation p-value."""
    pooled = np.vstack([a, b])
    pooled = (pooled - pooled.mean(axis=0)) / pooled.std(axis=0)
    D = np.sqrt(((pooled[:, None, :] - pooled[None, :, :]) ** 2).sum(axis=2))
    n = a.shape[0]

    def stat(ix):
        xa, xb = ix[:n], ix[n:]
        return (2 * D[np.ix_(xa, xb)].mean() - D[np.ix_(xa, xa)].mean()
                - D[np.ix_(xb, xb)].mean())

    base = np.arange(pooled.shape[0])
    observed = stat(base)
    perms = [stat(rng.permutation(base)) for _ in range(n_perm)]
    return (1 + sum(s >= observed for s in perms)) / (n_perm + 1)


@pytest.mark.slow
def test_single_component_matches_parametric_var_sampler():
    rng = np.random.default_rng(17)
    ds = random_dataset(rng, n=8, T=5, k=1, p=1, q=1)
    y = np.cumsum(0.5 * rng.standard_normal(ds.y.shape), axis=0)
    ds = ds.with_responses(y)
    hp = ModelHyperparams.default(1, 1, 1, H=1, nu=6, lam=1.0)
    n_keep, thin = 2000, 5
    config = gibbs.SamplerConfig(n_iter=500 + n_keep * thin, burn_in=500, thin=thin, seed=2,
                                 record_loglik=False)
    store = gibbs.run_chain(ds, hp, config)
    ours = np.column_stack([store.atoms.reshape(len(store), -1), store.b, store.gamma,
                            store.sigma.reshape(len(store), -1)])
    ref = reference_var_sampler(ds, hp, 500 + n_keep * thin, np.random.default_rng(3))[500::thin]
    assert ours.shape == ref.shape
    # posterior means agree to a few Monte Carlo standard errors
    se = np.sqrt(ours.var(axis=0) / n_keep + ref.var(axis=0) / n_keep)
    assert np.all(np.abs(ours.mean(axis=0) - ref.mean(axis=0)) < 4 * se)
    assert energy_test(ours[::2], ref[::2], 200, np.random.default_rng(4)) > 0.01
