import itertools

import numpy as np
import pytest
from _helpers import fd_gradient, fd_jacobian, rel_err
from hypothesis import given, settings
from hypothesis import strategies as st

from decomp.problems import (
    AurocDataset,
    AurocProblem,
    AurocSample,
    auroc_score,
    bayes_auroc,
    logistic_loss,
    make_auroc,
    make_gaussian_auroc_data,
)
from decomp.problems.auroc import _batch_indices


def brute_force_auroc(scores, labels):
    pos = [s for s, b in zip(scores, labels) if b == 1]
    neg = [s for s, b in zip(scores, labels) if b == -1]
    total = 0.0
    for sp, sn in itertools.product(pos, neg):
        total += 1.0 if sp > sn else 0.5 if sp == sn else 0.0
    return total / (len(pos) * len(neg))


def surrogate(theta, t1, t2, tt, a, b, p):
    """Per-sample square-loss AUROC surrogate, written out term by term."""
    s = float(np.dot(theta, a))
    ipos, ineg = float(b == 1), float(b == -1)
    return (
        (1 - p) * (s - t1) ** 2 * ipos
        + p * (s - t2) ** 2 * ineg
        + 2 * (1 + tt) * (p * s * ineg - (1 - p) * s * ipos)
        - p * (1 - p) * tt**2
    )


@pytest.fixture(scope="module")
def small_problem():
    data = make_gaussian_auroc_data(120, 4, positive_ratio=0.25, separation=2.0, seed=3)
    return make_auroc(data, rho=0.3, minibatch=8, K=3, seed=1)


# -- data ----------------------------------------------------------------------------


def test_sample_label_must_be_pm1():
    AurocSample(np.zeros(2), 1)
    with pytest.raises(ValueError):
        AurocSample(np.zeros(2), 0)


def test_dataset_validation():
    with pytest.raises(ValueError):
        AurocDataset(np.zeros((3, 2)), np.array([1, 0, -1]))
    with pytest.raises(ValueError):
        AurocDataset(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ValueError):
        AurocDataset(np.zeros((3, 2)), np.array([1, -1]))


def test_positive_ratio_ten_percent():
    labels = np.array([1] * 10 + [-1] * 90)
    data = AurocDataset(np.random.default_rng(0).standard_normal((100, 3)), labels)
    assert data.positive_ratio == 0.1
    inst = make_auroc(data, K=4)
    assert inst.p == 0.1


def test_from_samples_round_trip():
    data = make_gaussian_auroc_data(30, 2, seed=0)
    again = AurocDataset.from_samples(data.samples())
    assert np.array_equal(again.features, data.features)
    assert np.array_equal(again.labels, data.labels)


def test_load_csv(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1,0.5,2.0\n-1,0.1,-1.0\n-1,3.0,0.0\n")
    data = AurocDataset.load_csv(path)
    assert data.dim == 2 and len(data) == 3
    assert np.array_equal(data.labels, [1, -1, -1])
    assert np.array_equal(data.features[0], [0.5, 2.0])


def test_split_is_stratified():
    data = make_gaussian_auroc_data(2000, 5, positive_ratio=0.1, seed=0)
    train, test = data.split(0.9, seed=1)
    assert len(train) == 1800 and len(test) == 200
    assert train.positive_ratio == pytest.approx(0.1)
    assert test.positive_ratio == pytest.approx(0.1)
    again = data.split(0.9, seed=1)
    assert np.array_equal(again[1].features, test.features)


def test_gaussian_data_shape_and_ratio():
    data = make_gaussian_auroc_data(2000, 20, positive_ratio=0.1, separation=3.0, seed=4)
    assert data.features.shape == (2000, 20)
    assert data.positive_ratio == 0.1


def test_gaussian_data_rejects_single_class():
    with pytest.raises(ValueError):
        make_gaussian_auroc_data(5, 2, positive_ratio=0.01)


def test_bayes_auroc_value():
    # separation 3 in R^20 as used by the AUROC experiment: above 0.97
    assert bayes_auroc(3.0) == pytest.approx(0.98305, abs=1e-5)
    assert bayes_auroc(0.0) == 0.5


def test_bayes_auroc_matches_monte_carlo():
    data = make_gaussian_auroc_data(40_000, 6, positive_ratio=0.3, separation=1.5, seed=8)
    pos = data.labels == 1
    direction = data.features[pos].mean(0) - data.features[~pos].mean(0)
    assert auroc_score(direction, data) == pytest.approx(bayes_auroc(1.5), abs=0.01)


# -- AUROC score -------------------------------------------------------------------------


def one_dim(scores, labels):
    return AurocDataset(np.asarray(scores, float)[:, None], np.asarray(labels))


def test_auroc_perfect_separation():
    data = one_dim([3.0, 2.0, 1.0, 0.0], [1, 1, -1, -1])
    assert auroc_score(np.array([1.0]), data) == 1.0


def test_auroc_all_ties():
    data = make_gaussian_auroc_data(50, 3, seed=0)
    assert auroc_score(np.zeros(3), data) == 0.5


def test_auroc_hand_example():
    data = one_dim([0.9, 0.4, 0.5, 0.1], [1, 1, -1, -1])
    assert auroc_score(np.array([1.0]), data) == 0.75


def test_auroc_rejects_single_class():
    with pytest.raises(ValueError):
        auroc_score(np.ones(1), one_dim([1.0, 2.0], [1, 1]))


@settings(max_examples=150, deadline=None)
@given(
    st.lists(st.integers(-4, 4), min_size=2, max_size=25),
    st.lists(st.sampled_from([1, -1]), min_size=2, max_size=25),
)
def test_auroc_matches_pair_enumeration(scores, labels):
    n = min(len(scores), len(labels))
    scores, labels = scores[:n], labels[:n]
    if len(set(labels)) < 2:
        return
    data = one_dim(scores, labels)
    got = auroc_score(np.array([1.0]), data)
    assert got == pytest.approx(brute_force_auroc(scores, labels), abs=1e-12)
    assert 0.0 <= got <= 1.0
    # rank statistic: invariant under a strictly increasing transform of the scores
    warped = one_dim(np.exp(np.asarray(scores, float)) + 7.0, labels)
    assert auroc_score(np.array([1.0]), warped) == pytest.approx(got, abs=1e-12)


def test_logistic_loss_is_stable():
    X = np.array([[1e4], [-1e4]])
    y = np.array([1, 1])
    val = logistic_loss(np.array([1.0]), X, y)
    assert np.isfinite(val)
    assert val == pytest.approx(0.5 * 1e4, rel=1e-12)


# -- instance ------------------------------------------------------------------------


def test_make_auroc_round_robin():
    data = make_gaussian_auroc_data(103, 3, seed=2)
    inst = make_auroc(data, K=4, seed=5)
    assert [len(s) for s in inst.shards] == [26, 26, 26, 25]
    merged = np.concatenate([s.features for s in inst.shards])
    assert np.array_equal(np.sort(merged, axis=0), np.sort(data.features, axis=0))
    assert inst.d0 == inst.d1 == 5 and inst.d2 == 1


def test_make_auroc_rejects_single_class():
    data = AurocDataset(np.zeros((4, 2)), np.array([-1, -1, -1, -1]))
    with pytest.raises(ValueError, match="both classes"):
        make_auroc(data)


def test_make_auroc_accepts_sample_list():
    data = make_gaussian_auroc_data(40, 2, positive_ratio=0.25, seed=0)
    inst = make_auroc(data.samples(), K=2)
    assert inst.K == 2


def test_rho_zero_inner_is_identity():
    data = make_gaussian_auroc_data(60, 3, positive_ratio=0.2, seed=0)
    inst = make_auroc(data, rho=0.0, K=2)
    x = np.random.default_rng(0).standard_normal(5)
    for t in range(3):
        assert np.array_equal(inst.inner_value(1, x, (0, 1, t)), x)
        assert np.array_equal(inst.inner_jacobian(1, x, (0, 1, t)), np.eye(5))


def test_surrogate_zero_at_origin():
    shard = AurocDataset(np.array([[1.0, -2.0]]), np.array([1]))
    inst = AurocProblem([shard], p=0.1, rho=0.1, minibatch=1)
    h = np.array([0.0, 0.0, 0.0, 0.7])  # theta = 0, theta_hat_1 = 0; theta_hat_2 is irrelevant for a positive
    assert inst.f(0, h, np.array([0.0])) == 0.0


def test_surrogate_matches_per_sample_formula(small_problem):
    inst = small_problem
    rng = np.random.default_rng(4)
    for _ in range(5):
        h, y = rng.standard_normal(inst.d0), rng.standard_normal(1)
        shard = inst.shards[1]
        expected = np.mean(
            [surrogate(h[:4], h[4], h[5], y[0], a, b, inst.p) for a, b in zip(shard.features, shard.labels)]
        )
        assert inst.f(1, h, y) == pytest.approx(expected, rel=1e-12)


def test_dual_gradient_single_positive():
    a = np.array([0.5, -1.0, 2.0])
    shard = AurocDataset(a[None, :], np.array([1]))
    p = 0.1
    inst = AurocProblem([shard], p=p, rho=0.2, minibatch=1)
    rng = np.random.default_rng(0)
    for _ in range(5):
        h, tt = rng.standard_normal(5), rng.standard_normal()
        _, gy = inst.outer_grads(0, h, np.array([tt]), (0, 0, 0))
        f_theta = h[:3] @ a
        assert gy[0] == pytest.approx(-2 * p * (1 - p) * tt - 2 * (1 - p) * f_theta, rel=1e-12)
        fd = fd_gradient(lambda z: inst.f(0, h, z), np.array([tt]))
        assert gy[0] == pytest.approx(fd[0], rel=1e-6)


def test_minibatch_shared_between_levels(small_problem):
    inst = small_problem
    key = (3, 2, 17)
    idx = _batch_indices(key, len(inst.shards[2]), inst.minibatch)
    X, y = inst.shards[2].features[idx], inst.shards[2].labels[idx]
    x = np.random.default_rng(1).standard_normal(inst.d1)
    assert np.allclose(inst.inner_value(2, x, key), inst._inner(x, X, y), atol=0, rtol=0)
    gh, gy = inst.outer_grads(2, x, np.array([0.3]), key)
    gh2, gy2 = inst._outer_grads(x, np.array([0.3]), X, y)
    assert np.array_equal(gh, gh2) and np.array_equal(gy, gy2)


def test_minibatch_differs_across_iterations(small_problem):
    a = _batch_indices((0, 0, 1), 40, 8)
    b = _batch_indices((0, 0, 2), 40, 8)
    assert not np.array_equal(a, b)


def test_deterministic_objective_is_shard_average(small_problem):
    inst = small_problem
    x, y = np.random.default_rng(2).standard_normal(inst.d1), np.array([0.4])
    expected = np.mean([inst.f(k, inst.g(k, x), y) for k in range(inst.K)])
    assert inst.deterministic_objective(x, y) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("seed", range(4))
def test_best_response_matches_scalar_maximiser(small_problem, seed):
    from scipy.optimize import minimize_scalar

    inst = small_problem
    x = np.random.default_rng(seed).standard_normal(inst.d1)
    closed = inst.best_response(x).y
    res = minimize_scalar(lambda t: -inst.deterministic_objective(x, np.array([t])), bracket=(-1.0, 1.0), tol=1e-12)
    assert closed[0] == pytest.approx(res.x, abs=1e-6)
    assert np.abs(inst.grad_y(x, closed)).max() <= 1e-12


def test_strong_concavity_constant(small_problem):
    inst = small_problem
    assert inst.constants.mu == pytest.approx(2 * inst.p * (1 - inst.p))
    x = np.random.default_rng(0).standard_normal(inst.d1)
    F = lambda t: inst.deterministic_objective(x, np.array([t]))  # noqa: E731
    # exact quadratic: second difference equals -mu
    assert (F(1.0) - 2 * F(0.0) + F(-1.0)) == pytest.approx(-inst.constants.mu, rel=1e-10)


def test_constants_consistent(small_problem):
    c = small_problem.constants
    assert c.mu <= c.L_f
    assert c.C_g >= 1.0


# -- gradient checks --------------------------------------------------------------------


def test_inner_jacobian_matches_finite_differences(small_problem):
    inst = small_problem
    rng = np.random.default_rng(5)
    for _ in range(20):
        x = rng.standard_normal(inst.d1)
        k = int(rng.integers(inst.K))
        fd = fd_jacobian(lambda z: inst.inner_value(k, z), x)
        assert rel_err(inst.inner_jacobian(k, x), fd) <= 1e-5


def test_chained_gradient_matches_finite_differences(small_problem):
    inst = small_problem
    rng = np.random.default_rng(6)
    for _ in range(20):
        x, y = rng.standard_normal(inst.d1), rng.standard_normal(1)
        k = int(rng.integers(inst.K))
        fd = fd_gradient(lambda z: inst.f(k, inst.g(k, z), y), x)
        assert rel_err(inst.chained_gradient(k, x, y), fd) <= 1e-5


def test_grad_phi_matches_finite_differences(small_problem):
    inst = small_problem
    rng = np.random.default_rng(7)
    for _ in range(20):
        x = rng.standard_normal(inst.d1)
        fd = fd_gradient(lambda z: inst.phi_and_grad(z).phi, x)
        assert rel_err(inst.phi_and_grad(x).grad, fd) <= 1e-5


def test_minibatch_oracles_are_unbiased():
    data = make_gaussian_auroc_data(40, 3, positive_ratio=0.25, separation=2.0, seed=0)
    inst = make_auroc(data, rho=0.5, minibatch=4, K=1, seed=0)
    x = np.array([0.3, -0.2, 0.5, 0.1, -0.4])
    y = np.array([0.2])
    n = 30_000
    vals = np.empty((n, 5))
    gh = np.empty((n, 5))
    gy = np.empty(n)
    for i in range(n):
        key = (9, 0, i)
        vals[i] = inst.inner_value(0, x, key)
        g_h, g_y = inst.outer_grads(0, x, y, key)
        gh[i], gy[i] = g_h, g_y[0]

    def within(samples, exact):
        se = samples.std(axis=0, ddof=1) / np.sqrt(n)
        # coordinates that never vary (the two scalars of the inner map) must match exactly
        return np.all(np.abs(samples.mean(axis=0) - exact) <= 4 * se + 1e-12)

    exact_gh, exact_gy = inst.f_grads(0, x, y)
    assert within(vals, inst.g(0, x))
    assert within(gh, exact_gh)
    assert within(gy, exact_gy[0])
