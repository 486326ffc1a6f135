import numpy as np
import pytest
from hypothesis import given, strategies as st

from rotormill.operators import (
    QOperator, TruncationError, angular_momentum, commutator, cos_phi, embed_qubit_op,
    expect, identity, make_space, partial_trace, rotor_shift, sin_phi, tensor,
)


def rotor_block(op, space):
    """Rotor factor of an operator of the form 1 (x) 1 (x) M."""
    n = space.n_rotor
    return op.toarray()[:n, :n]


def test_space_dimensions():
    s = make_space(-5, 10)
    assert (s.n_rotor, s.dim) == (16, 64)
    assert make_space(0, 1).dim == 8
    s = make_space(-10, 30)
    assert (s.n_rotor, s.dim) == (41, 164)


@pytest.mark.parametrize("lo,hi", [(3, 3), (4, 1)])
def test_bad_truncation(lo, hi):
    with pytest.raises(TruncationError):
        make_space(lo, hi)


def test_index_map_is_a_bijection():
    s = make_space(-2, 3)
    seen = {s.index(a, b, l) for a in (0, 1) for b in (0, 1) for l in s.ladder}
    assert seen == set(range(s.dim))
    assert s.index(0, 0, -2) == 0
    assert s.index(1, 1, 3) == s.dim - 1
    assert s.labels(s.index(1, 0, 2)) == (1, 0, 2)


def test_angular_momentum_small():
    s = make_space(-1, 1)
    lz = angular_momentum(s)
    assert np.allclose(rotor_block(lz, s), np.diag([-1, 0, 1]))
    assert lz.hermitian


def test_angular_momentum_diagonal_and_traceless():
    s = make_space(-5, 10)
    lz = angular_momentum(s).toarray()
    assert np.allclose(lz, np.diag(np.diag(lz)))
    assert np.allclose(np.diag(lz), np.tile(np.arange(-5, 11), 4))
    assert abs(np.trace(angular_momentum(make_space(-6, 6)).toarray())) == 0


def test_shift_two_levels():
    s = make_space(0, 1)
    assert np.allclose(rotor_block(rotor_shift(s), s), [[0, 0], [1, 0]])


def test_shift_commutator_interior():
    s = make_space(-3, 4)
    e = rotor_shift(s).toarray()
    lz = angular_momentum(s).toarray()
    c = e @ lz - lz @ e
    top = np.array([s.labels(i)[2] == s.l_max for i in range(s.dim)])
    keep = ~top
    assert np.allclose((c + e)[np.ix_(keep, keep)], 0)
    # L_z E |l> = (l + 1) E |l> below the top level
    for l in range(s.l_min, s.l_max):
        v = np.zeros(s.dim)
        v[s.index(0, 1, l)] = 1
        assert np.allclose(lz @ (e @ v), (l + 1) * (e @ v))


def test_shift_truncated_isometry():
    s = make_space(-2, 2)
    e = rotor_block(rotor_shift(s), s)
    expected = np.eye(s.n_rotor)
    expected[-1, -1] = 0
    assert np.allclose(e.conj().T @ e, expected)


def test_cos_sin_from_shift():
    s = make_space(-2, 2)
    e = rotor_shift(s).toarray()
    assert np.allclose(cos_phi(s).toarray(), (e + e.conj().T) / 2)
    assert np.allclose(sin_phi(s).toarray(), (e - e.conj().T) / 2j)


def test_pauli_algebra():
    s = make_space(0, 2)
    one = identity(s).toarray()
    z1 = embed_qubit_op(1, "z", s).toarray()
    p1 = embed_qubit_op(1, "plus", s).toarray()
    m1 = embed_qubit_op(1, "minus", s).toarray()
    m2 = embed_qubit_op(2, "minus", s).toarray()
    assert np.allclose(z1 @ z1, one)
    assert np.allclose(p1 @ m2 - m2 @ p1, 0)
    assert np.allclose(p1 @ m1 + m1 @ p1, one)
    # sigma_+ raises: excited state has sigma_z = +1
    assert np.allclose(p1 @ m1, (one + z1) / 2)


@pytest.mark.parametrize("which,kind", [(3, "z"), (0, "plus"), (1, "x")])
def test_embed_rejects_bad_arguments(which, kind):
    with pytest.raises(ValueError):
        embed_qubit_op(which, kind, make_space(0, 1))


def test_qoperator_hermitian_flag():
    with pytest.raises(ValueError):
        QOperator(np.array([[0, 1], [0, 0]], dtype=complex), hermitian=True)
    with pytest.raises(ValueError):
        QOperator(np.eye(3), space=make_space(0, 1))


def test_qoperator_arithmetic(rng):
    s = make_space(0, 1)
    a = QOperator(rng.normal(size=(8, 8)) + 0j, s)
    b = QOperator(rng.normal(size=(8, 8)) + 0j, s)
    assert np.allclose((a + b).toarray(), a.toarray() + b.toarray())
    assert np.allclose((a @ b).toarray(), a.toarray() @ b.toarray())
    assert np.allclose((2 * a - b / 2).toarray(), 2 * a.toarray() - b.toarray() / 2)
    assert np.allclose(a.dag().toarray(), a.toarray().conj().T)
    assert np.allclose(commutator(a, b).toarray(),
                       a.toarray() @ b.toarray() - b.toarray() @ a.toarray())


def test_expect_sparse_and_dense_agree(rng):
    from conftest import random_density
    s = make_space(-1, 2)
    rho = random_density(s.dim, rng)
    lz = angular_momentum(s)
    assert np.isclose(expect(lz, rho), np.trace(rho @ lz.toarray()))
    assert np.isclose(expect(lz.toarray(), rho), np.trace(rho @ lz.toarray()))


def test_partial_trace_of_product(rng):
    from conftest import random_density
    s = make_space(-1, 1)
    r1, r2, rr = random_density(2, rng), random_density(2, rng), random_density(3, rng)
    rho = QOperator(tensor(r1, r2, rr), s)
    assert np.allclose(partial_trace(rho, ["q1"]).toarray(), r1)
    assert np.allclose(partial_trace(rho, [2]).toarray(), r2)
    assert np.allclose(partial_trace(rho, ["rotor"]).toarray(), rr)
    assert np.allclose(partial_trace(rho, ["q1", "q2"]).toarray(), np.kron(r1, r2))
    assert partial_trace(rho, ["q2", "rotor"]).dims == (2, 3)


def test_partial_trace_rejects_empty():
    s = make_space(0, 1)
    with pytest.raises(ValueError):
        partial_trace(identity(s), [])


def test_rotor_gibbs_populations():
    s = make_space(-6, 6)
    beta, inertia = 0.3, 1.0
    l = s.ladder.astype(float)
    w = np.exp(-beta * l ** 2 / (2 * inertia))
    rot = np.diag(w / w.sum())
    rho = QOperator(tensor(np.diag([0.3, 0.7]), np.diag([0.5, 0.5]), rot), s)
    pops = np.real(np.diag(partial_trace(rho, ["rotor"]).toarray()))
    assert np.allclose(pops, w / w.sum(), atol=1e-14)


@given(st.integers(-4, 0), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_partial_trace_preserves_trace(lo, hi, seed):
    from conftest import random_density
    s = make_space(lo, hi)
    rho = QOperator(random_density(s.dim, np.random.default_rng(seed), rank=3), s)
    for keep in (["q1"], ["q2"], ["rotor"], ["q1", "rotor"], ["q1", "q2", "rotor"]):
        assert abs(np.trace(partial_trace(rho, keep).toarray()) - 1) < 1e-12
    assert np.allclose(partial_trace(rho, ["q1", "q2", "rotor"]).toarray(), rho.toarray())


def test_shift_sparsity_pattern():
    s = make_space(-3, 3)
    e = rotor_shift(s).tocsr()
    rows, cols = e.nonzero()
    assert np.all(rows - cols == 1)
    assert e.nnz == 4 * (s.n_rotor - 1)
