import numpy as np
import pytest
import scipy.linalg

from mfpod import Basis, Metric, norm, pod, pod_projection_error

from conftest import random_spd_metric


def test_single_snapshot():
    rng = np.random.default_rng(0)
    m = random_spd_metric(rng, 7)
    u = rng.standard_normal(7)
    res = pod(u[:, None], m)
    assert res.eigvals[0] == pytest.approx(norm(u, m) ** 2, rel=1e-12)
    v = res.basis.vectors[:, 0]
    np.testing.assert_allclose(np.abs(v), np.abs(u / norm(u, m)), atol=1e-12)


def test_two_orthogonal_equal_norm_snapshots_match_dense_gramian():
    m = Metric.euclidean(4)
    u = np.array([2.0, 0.0, 0.0, 0.0])
    v = np.array([0.0, 2.0, 0.0, 0.0])
    s = np.column_stack([u, v])
    res = pod(s, m)
    gram = (s.T @ s) / 2.0
    oracle = np.sort(scipy.linalg.eigh(gram, eigvals_only=True))[::-1]
    np.testing.assert_allclose(res.eigvals, oracle, rtol=1e-12)
    np.testing.assert_allclose(res.eigvals, [2.0, 2.0])


def test_tail_identity_every_r():
    # the mean residual energy at rank r equals the eigenvalue tail sum
    rng = np.random.default_rng(1)
    m = random_spd_metric(rng, 50)
    s = rng.standard_normal((50, 20))
    res = pod(s, m)
    total = np.sum(res.eigvals)
    for r in range(res.basis.dim + 1):
        err = pod_projection_error(Basis(res.basis.vectors[:, :r], m), s)
        assert err == pytest.approx(res.eigvals[r:].sum(), rel=1e-9, abs=1e-9 * total)


def test_more_snapshots_than_dimensions():
    rng = np.random.default_rng(2)
    m = Metric.euclidean(6)
    s = rng.standard_normal((6, 15))
    res = pod(s, m)
    assert res.basis.dim <= 6
    assert len(res.eigvals) == 15
    np.testing.assert_allclose(res.eigvals[6:], 0.0, atol=1e-12 * res.eigvals[0])
    err = pod_projection_error(res.basis, s)
    assert err <= 1e-9 * res.eigvals[0]


def test_eigvals_descending_nonnegative_modes_unit_norm():
    rng = np.random.default_rng(3)
    m = random_spd_metric(rng, 30)
    res = pod(rng.standard_normal((30, 9)), m)
    assert (np.diff(res.eigvals) <= 1e-12 * res.eigvals[0]).all()
    assert (res.eigvals >= 0).all()
    for j in range(res.basis.dim):
        assert norm(res.basis.vectors[:, j], m) == pytest.approx(1.0, abs=1e-9)


def test_rank_deficient_snapshots_truncated():
    rng = np.random.default_rng(4)
    u = rng.standard_normal(12)
    s = np.column_stack([u, u, 2 * u])
    res = pod(s, Metric.euclidean(12))
    assert res.basis.dim == 1


def test_projection_error_trivial_cases():
    rng = np.random.default_rng(5)
    m = random_spd_metric(rng, 10)
    s = rng.standard_normal((10, 4))
    res = pod(s, m)
    assert pod_projection_error(res.basis, s) <= 1e-10 * res.eigvals[0]
    empty = Basis(np.zeros((10, 0)), m)
    assert pod_projection_error(empty, s) == pytest.approx(m.norms_sq(s).mean(), rel=1e-12)
    with pytest.raises(ValueError):
        pod_projection_error(res.basis, np.zeros((10, 0)))


def test_eig_floor_controls_retained_modes():
    rng = np.random.default_rng(6)
    u = rng.standard_normal(20)
    # perturbation sized so lambda_2/lambda_1 ~ 3e-8 lands between the floors
    s = np.column_stack([u, u + 3e-4 * rng.standard_normal(20)])
    loose = pod(s, Metric.euclidean(20), eig_floor=1e-10)
    tight = pod(s, Metric.euclidean(20), eig_floor=1e-6)
    assert loose.basis.dim == 2
    assert tight.basis.dim == 1


def test_result_tail_energy_helper():
    rng = np.random.default_rng(7)
    res = pod(rng.standard_normal((15, 5)), Metric.euclidean(15))
    assert res.tail_energy(0) == pytest.approx(res.eigvals.sum(), rel=1e-12)
    assert res.tail_energy(5) == pytest.approx(0.0, abs=1e-15)
