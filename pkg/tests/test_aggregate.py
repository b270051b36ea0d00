import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dqnfed import aggregate as A
from dqnfed.errors import AllClientsDegenerate, DimensionMismatch, EmptyInput, ZeroNormBasisVector
from dqnfed.local import ClientReport
from dqnfed.oracle import frank_wolfe_min_norm
from dqnfed.verify import random_instance


def report(k, g, n=1, direction=None):
    g = np.asarray(g, dtype=float)
    return ClientReport(k, g, 1.0, n, 0.0, 0.0, direction=direction)


def test_orthogonalize_single_client():
    b = A.orthogonalize([[3.0, 4.0]], [2.0])
    np.testing.assert_allclose(b.vectors[0], [1.5, 2.0])
    assert b.denominators == [2.0]


def test_orthogonalize_orthogonal_inputs():
    b = A.orthogonalize([[1.0, 0.0], [0.0, 2.0]], [1.0, 4.0])
    np.testing.assert_allclose(b.vectors[0], [1, 0])
    np.testing.assert_allclose(b.vectors[1], [0, 0.5])
    assert b.denominators == [1.0, 4.0]


def test_orthogonalize_projected_example():
    b = A.orthogonalize([[1.0, 0.0], [1.0, 1.0]], [1.0, 3.0])
    np.testing.assert_allclose(b.vectors[1], [0, 0.5])
    assert b.denominators[1] == pytest.approx(2.0)


def test_processing_order_follows_client_ids():
    b = A.orthogonalize([[1.0, 1.0], [1.0, 0.0]], [3.0, 1.0], client_ids=[7, 2])
    assert b.client_ids == [2, 7]
    np.testing.assert_allclose(b.vectors[0], [1, 0])
    np.testing.assert_allclose(b.vectors[1], [0, 0.5])


def test_dependent_client_is_dropped():
    b = A.orthogonalize([[1.0, 0.0], [2.0, 0.0], [0.0, 1.0]], [1.0, 1.0, 1.0])
    assert b.client_ids == [0, 2] and b.dropped == [1]


def test_absorbed_denominator_is_dropped():
    # the projection coefficient of g2 onto gt1 is exactly its rate
    b = A.orthogonalize([[1.0, 0.0], [1.0, 1.0]], [1.0, 1.0])
    assert b.dropped == [1]


def test_negative_denominator_kept_with_warning(caplog):
    with caplog.at_level(logging.WARNING, logger="dqnfed.aggregate"):
        b = A.orthogonalize([[1.0, 0.0], [1.0, 1.0]], [1.0, 0.5])
    assert b.negative == [1] and b.denominators[1] == pytest.approx(-0.5)
    assert "negative" in caplog.text
    plan = A.plan_step(b)
    np.testing.assert_allclose(plan.per_client_rate, np.array([1.0, 0.5]) / plan.eta)


def test_all_degenerate():
    with pytest.raises(AllClientsDegenerate):
        A.orthogonalize([[0.0, 0.0], [0.0, 0.0]], [1.0, 1.0])
    with pytest.raises(EmptyInput):
        A.orthogonalize([], [])
    with pytest.raises(DimensionMismatch):
        A.orthogonalize([[1.0, 0.0]], [1.0, 2.0])
    with pytest.raises(DimensionMismatch):
        A.orthogonalize([[1.0, 0.0], [1.0, 0.0, 1.0]], [1.0, 2.0])


def test_optimal_weights_examples():
    def basis(*sq):
        vecs = [np.sqrt(s) * np.eye(len(sq))[i] for i, s in enumerate(sq)]
        return A.OrthoBasis(vecs, [1.0] * len(sq), list(range(len(sq))), vecs, [1.0] * len(sq))

    np.testing.assert_allclose(A.optimal_weights(basis(1.0, 1.0)), [0.5, 0.5])
    np.testing.assert_allclose(A.optimal_weights(basis(1.0, 3.0)), [0.75, 0.25])
    np.testing.assert_allclose(A.optimal_weights(basis(2.0)), [1.0])
    with pytest.raises(ZeroNormBasisVector):
        A.optimal_weights(basis(1.0, 0.0))


def test_plan_two_clients():
    plan = A.dqnfed_plan([[1.0, 0.0], [1.0, 1.0]], [1.0, 3.0])
    np.testing.assert_allclose(plan.lambdas, [0.2, 0.8])
    np.testing.assert_allclose(plan.direction, [0.2, 0.4])
    assert plan.eta == pytest.approx(5.0)
    np.testing.assert_allclose(plan.per_client_rate, [0.2, 0.6])


def test_plan_single_client():
    plan = A.dqnfed_plan([[3.0, 4.0]], [2.0])
    np.testing.assert_allclose(plan.direction, [1.5, 2.0])
    assert plan.eta == pytest.approx(0.16)
    assert plan.per_client_rate[0] == pytest.approx(12.5)


def test_plan_orthonormal_family():
    vecs = list(np.eye(4))
    basis = A.OrthoBasis(vecs, [1.0] * 4, [0, 1, 2, 3], vecs, [1.0] * 4)
    plan = A.plan_step(basis)
    np.testing.assert_allclose(plan.direction, np.full(4, 0.25))
    assert plan.eta == pytest.approx(4.0)
    with pytest.raises(DimensionMismatch):
        A.plan_step(basis, [1.0])


def test_apply_global_step():
    plan = A.dqnfed_plan([[1.0, 0.0], [1.0, 1.0]], [1.0, 3.0])
    np.testing.assert_allclose(A.apply_global_step([0.0, 0.0], plan), [-1.0, -2.0])
    np.testing.assert_allclose(A.apply_global_step([0.0, 0.0], plan, clip=2.5), [-0.5, -1.0])
    assert plan.clipped(2.5).eta_applied == 2.5 and plan.clipped(None).eta_applied == 5.0
    zero = A.AggregationPlan(np.ones(1), np.zeros(2), 1.0, 1.0, np.zeros(1), [0])
    np.testing.assert_array_equal(A.apply_global_step([3.0, 4.0], zero), [3.0, 4.0])
    with pytest.raises(DimensionMismatch):
        A.apply_global_step([0.0], plan)


def test_guard_dropped():
    # in two dimensions the third gradient is dependent, and it opposes the
    # common direction of the first two
    grads = [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]
    plan = A.dqnfed_plan(grads, [1.0, 1.0, 1.0])
    assert plan.dropped == [2] and plan.dropped_rate[0] < 0
    assert A.guard_dropped(plan).eta_applied == 0.0
    ok = A.dqnfed_plan([[1.0, 0.0], [2.0, 0.0]], [1.0, 1.0])
    assert A.guard_dropped(ok).eta_applied == ok.eta


def test_smoothness_clip():
    assert A.smoothness_clip([2.0, 4.0, None], [0.5, 0.2, 1.0]) == pytest.approx(0.1)
    assert A.smoothness_clip([None, None], [1.0, 1.0]) is None


def test_fedavg_examples():
    th = np.zeros(2)
    np.testing.assert_allclose(A.fedavg_aggregate([report(0, [1.0, 2.0])], th, 0.5), [-0.5, -1.0])
    reps = [report(0, [1.0, 0.0], n=1), report(1, [0.0, 1.0], n=3)]
    np.testing.assert_allclose(A.fedavg_aggregate(reps, th, 1.0), [-0.25, -0.75])
    reps = [report(0, [1.0, -2.0], n=2), report(1, [-1.0, 2.0], n=2)]
    np.testing.assert_array_equal(A.fedavg_aggregate(reps, [5.0, 6.0], 1.0), [5.0, 6.0])
    with pytest.raises(EmptyInput):
        A.fedavg_aggregate([], th, 1.0)


def test_newton_average_examples():
    g = np.array([1.0, 2.0])
    np.testing.assert_allclose(A.newton_avg_aggregate([report(0, g, direction=g)], np.zeros(2), 1.0),
                               -g)
    reps = [report(0, [1.0, 0.0], 2, direction=[1.0, 0.0]), report(1, [0.0, 1.0], 2, direction=[0.0, 1.0])]
    np.testing.assert_allclose(A.newton_avg_aggregate(reps, np.zeros(2), 0.3),
                               A.fedavg_aggregate(reps, np.zeros(2), 0.3))
    with pytest.raises(ValueError):
        A.newton_avg_aggregate([report(0, g)], np.zeros(2), 1.0)


def test_newton_average_on_quadratics():
    # f_k = 0.5 (theta - c_k)' A_k (theta - c_k); exact direction A_k^{-1} g_k = theta - c_k
    rng = np.random.default_rng(3)
    theta = rng.normal(size=3)
    centres = rng.normal(size=(4, 3))
    reps = []
    for k, c in enumerate(centres):
        M = rng.normal(size=(3, 3))
        Ak = M @ M.T + np.eye(3)
        g = Ak @ (theta - c)
        reps.append(report(k, g, direction=np.linalg.solve(Ak, g)))
    np.testing.assert_allclose(A.newton_avg_aggregate(reps, theta, 1.0), centres.mean(axis=0))


@given(st.integers(0, 2**32 - 1))
def test_plan_invariants(seed):
    grads, rates = random_instance(np.random.default_rng(seed))
    basis = A.orthogonalize(grads, rates)
    V = np.asarray(basis.vectors)
    n = np.linalg.norm(V, axis=1)
    gram = V @ V.T
    off = np.abs(gram - np.diag(np.diag(gram)))
    assert np.all(off <= 1e-8 * np.outer(n, n))
    for k, g in enumerate(basis.grads):
        coef = V[:k + 1] @ g / n[:k + 1] ** 2
        assert np.linalg.norm(g - coef @ V[:k + 1]) <= 1e-8 * np.linalg.norm(g)
    plan = A.plan_step(basis)
    assert np.all(plan.lambdas > 0) and abs(plan.lambdas.sum() - 1) <= 1e-12
    assert plan.eta * (plan.direction @ plan.direction) == pytest.approx(1.0, rel=1e-10)
    np.testing.assert_allclose(plan.per_client_rate, np.asarray(basis.rates) / plan.eta, rtol=1e-8)
    assert np.all(plan.per_client_rate > 0)


@given(st.integers(0, 2**32 - 1))
def test_closed_form_is_minimal_over_simplex(seed):
    rng = np.random.default_rng(seed)
    grads, rates = random_instance(rng, k_max=6, d_max=12)
    basis = A.orthogonalize(grads, rates)
    V = np.asarray(basis.vectors)
    best = A.optimal_weights(basis) @ V
    ref = frank_wolfe_min_norm(V)
    assert best @ best <= ref.point @ ref.point + 1e-6
    for mu in rng.dirichlet(np.ones(len(V)), size=50):
        p = mu @ V
        assert best @ best <= p @ p + 1e-6


@given(st.integers(0, 2**32 - 1), st.sampled_from([1e-3, 0.5, 7.0, 1e3]))
def test_rate_scaling(seed, c):
    grads, rates = random_instance(np.random.default_rng(seed))
    a = A.dqnfed_plan(grads, rates)
    b = A.dqnfed_plan(grads, c * rates)
    np.testing.assert_allclose(b.lambdas, a.lambdas, rtol=1e-9, atol=1e-14)
    np.testing.assert_allclose(b.direction * c, a.direction, rtol=1e-9, atol=1e-12 * np.abs(a.direction).max())
    assert b.eta == pytest.approx(c * c * a.eta, rel=1e-9)
