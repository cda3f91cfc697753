import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import CHAIN, TWO_CYCLE, random_graph
from dglearn.errors import InfeasibleConstraints, NotPositiveDefinite, ParseError
from dglearn.graph import DirectedGraph, is_acyclic, simple_cycles
from dglearn.sem import (
    Dataset,
    Parameterization,
    apply_givens,
    covariance_of,
    is_stable,
    kl_gaussian,
    precision_of,
    random_dg,
    sample_data,
    sample_parameters,
    spectral_radius,
)


def edge_params(b, p=2):
    B = np.zeros((p, p))
    B[0, 1] = b
    return Parameterization(B, np.ones(p))


def test_precision_examples():
    assert np.allclose(precision_of(Parameterization(np.zeros((3, 3)), np.ones(3))).theta, np.eye(3))
    b = 0.7
    assert np.allclose(precision_of(edge_params(b)).theta, [[1 + b * b, -b], [-b, 1]])


def test_precision_is_gram_of_factor(rng):
    for _ in range(20):
        g = random_graph(rng, 5)
        th = sample_parameters(g, rng)
        P = precision_of(th)
        assert np.allclose(P.theta, P.factor @ P.factor.T, atol=1e-10)
        assert np.allclose(P.theta, P.theta.T, rtol=1e-12)
        assert np.all(np.linalg.eigvalsh(P.theta) > 0)
        assert np.allclose(np.linalg.inv(P.theta), covariance_of(th), atol=1e-9)


@given(st.integers(2, 20), st.integers(0, 2**31))
def test_precision_spd_for_stable_params(p, seed):
    rng = np.random.default_rng(seed)
    th = sample_parameters(random_dg(p, 4, 5, rng), rng)
    assert np.all(np.linalg.eigvalsh(precision_of(th).theta) > 0)


def test_parameterization_validation():
    with pytest.raises(ValueError):
        Parameterization(np.eye(2), np.ones(2))
    with pytest.raises(ValueError):
        Parameterization(np.zeros((2, 2)), np.array([1.0, 0.0]))
    th = edge_params(0.3)
    assert th.graph() == DirectedGraph(2, frozenset({(0, 1)}))
    assert th.conforms_to(TWO_CYCLE) and not th.conforms_to(DirectedGraph(2))
    assert Parameterization.from_json(th.to_json()).B[0, 1] == 0.3
    with pytest.raises(ParseError):
        Parameterization.from_json({"B": [[0]]})


def test_givens_examples():
    Q = np.arange(9.0).reshape(3, 3) + 1
    assert np.allclose(apply_givens(Q, 0, 2, 0.0), Q)
    R = apply_givens(Q, 0, 2, math.pi / 2)
    assert np.allclose(R[:, 0], Q[:, 2]) and np.allclose(R[:, 2], -Q[:, 0])
    theta = math.atan2(-Q[1, 0], Q[1, 2])
    assert abs(apply_givens(Q, 0, 2, theta)[1, 0]) < 1e-12


@given(st.integers(2, 6), st.integers(0, 2**31), st.floats(-math.pi, math.pi))
def test_givens_preserves_gram(p, seed, theta):
    Q = np.random.default_rng(seed).standard_normal((p, p))
    R = apply_givens(Q, 0, p - 1, theta)
    assert np.allclose(R @ R.T, Q @ Q.T, atol=1e-10)


def test_stability_examples():
    assert is_stable(np.zeros((3, 3)))
    B = np.array([[0, 1.5], [1.5, 0]])
    assert not is_stable(B)
    assert is_stable(B / 3)
    assert abs(spectral_radius(B) - 1.5) < 1e-12


def test_sample_parameters_examples(rng):
    th = sample_parameters(DirectedGraph(3), rng)
    assert np.all(th.B == 0) and np.all((th.omega >= 1) & (th.omega <= 3))
    for _ in range(50):
        th = sample_parameters(CHAIN, rng)
        w = th.B[th.B != 0]
        assert np.all((np.abs(w) >= 0.2) & (np.abs(w) <= 0.8))
        th = sample_parameters(TWO_CYCLE, rng)
        assert abs(th.B[0, 1] * th.B[1, 0]) < 1
        assert th.conforms_to(TWO_CYCLE)


def test_sample_data_examples():
    rng = np.random.default_rng(0)
    d = sample_data(Parameterization(np.zeros((3, 3)), np.ones(3)), 200_000, rng)
    assert np.max(np.abs(d.S - np.eye(3))) < 0.02
    b = 0.6
    d = sample_data(edge_params(b), 1_000_000, np.random.default_rng(1))
    target = np.array([[1, b], [b, 1 + b * b]])
    assert np.max(np.abs(d.S - target) / np.abs(target)) < 0.01
    a = sample_data(edge_params(b), 10, np.random.default_rng(5)).X
    c = sample_data(edge_params(b), 10, np.random.default_rng(5)).X
    assert np.array_equal(a, c)


@pytest.mark.parametrize("n", [1000, 10_000])
def test_empirical_covariance_converges(n):
    rng = np.random.default_rng(n)
    for _ in range(5):
        th = sample_parameters(random_dg(5, 4, 5, rng), rng)
        d = sample_data(th, n, rng)
        assert np.max(np.abs(d.S - covariance_of(th))) < 5 * n ** -0.5 * np.max(np.diag(covariance_of(th)))


def test_dataset_csv_roundtrip(tmp_path):
    d = sample_data(edge_params(0.4, 3), 17, np.random.default_rng(2))
    d.to_csv(tmp_path / "d.csv")
    e = Dataset.from_csv(tmp_path / "d.csv")
    assert np.array_equal(d.X, e.X)
    d.to_csv(tmp_path / "h.csv", header=False)
    assert np.array_equal(Dataset.from_csv(tmp_path / "h.csv").X, d.X)
    (tmp_path / "bad.csv").write_text("1,2\n3\n")
    with pytest.raises(ParseError):
        Dataset.from_csv(tmp_path / "bad.csv")


def test_random_dg_examples(rng):
    assert len(random_dg(5, 0, 5, rng)) == 0
    for _ in range(100):
        g = random_dg(5, 4, 3, rng)
        assert all(g.degree(v) <= 4 for v in range(5))
        assert all(len(c) <= 3 for c in simple_cycles(g))
    for _ in range(30):
        assert is_acyclic(random_dg(6, 4, 1, rng))
    with pytest.raises(InfeasibleConstraints):
        random_dg(0, 2, 2, rng)


def test_kl_examples():
    S = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert kl_gaussian(S, S) == 0
    assert abs(kl_gaussian(np.eye(1), 2 * np.eye(1)) - 0.5 * (0.5 - 1 + math.log(2))) < 1e-12
    T = np.array([[1.0, -0.5], [-0.5, 3.0]])
    assert abs(kl_gaussian(S, T) - kl_gaussian(T, S)) > 1e-3
    with pytest.raises(NotPositiveDefinite):
        kl_gaussian(S, -S)


def test_kl_second_order_contact(rng):
    S = np.cov(rng.standard_normal((4, 50)))
    E = rng.standard_normal((4, 4))
    E = E + E.T
    k1 = kl_gaussian(S, S + 1e-3 * E)
    k2 = kl_gaussian(S, S + 2e-3 * E)
    assert 3.5 < k2 / k1 < 4.5
