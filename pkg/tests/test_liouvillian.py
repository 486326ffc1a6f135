import numpy as np
import pytest
from hypothesis import given, strategies as st

from rotormill.liouvillian import (
    BATH1, BATH2, HAMILTONIAN, ROTOR, assemble_local_liouvillian, dissipator_matrix,
    dissipator_super, hamiltonian_super, lindblad_sum, local_qubit_dissipators, qubit_rates,
    rotor_load_dissipator, rotor_load_jumps, unvec, vec,
)
from rotormill.model import Params, build_hamiltonians
from rotormill.operators import (
    QOperator, angular_momentum, cos_phi, embed_qubit_op, identity, make_space, sin_phi,
)

from conftest import random_density, random_hermitian


def lindblad_reference(o, rho):
    """O rho O^+ - {O^+ O, rho} / 2 by plain matrix products."""
    od = o.conj().T
    return o @ rho @ od - 0.5 * (od @ o @ rho + rho @ od @ o)


def test_vec_roundtrip(rng):
    a = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    v = vec(a)
    assert v[1] == a[1, 0] and v[5] == a[0, 1]
    assert np.array_equal(unvec(v), a)


def test_hamiltonian_superoperator(rng):
    h = random_hermitian(6, rng)
    rho = random_density(6, rng)
    out = unvec(hamiltonian_super(h) @ vec(rho))
    assert np.allclose(out, -1j * (h @ rho - rho @ h))


@given(st.integers(0, 2**32 - 1))
def test_dissipator_matches_products(seed):
    rng = np.random.default_rng(seed)
    o = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    rho = random_density(5, rng)
    out = unvec(dissipator_matrix(o) @ vec(rho))
    assert np.allclose(out, lindblad_reference(o, rho), atol=1e-12)
    assert abs(np.trace(out)) < 1e-10


@given(st.integers(0, 2**32 - 1))
def test_lindblad_sum_matches_individual_terms(seed):
    rng = np.random.default_rng(seed)
    ops = [rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)) for _ in range(3)]
    rates = rng.uniform(0, 2, size=3)
    total = lindblad_sum(list(zip(rates, ops)), 4)
    ref = sum(r * dissipator_matrix(o) for r, o in zip(rates, ops))
    assert abs(total - ref).max() < 1e-12


def test_identity_jump_gives_zero():
    s = make_space(0, 1)
    d = dissipator_super(identity(s))
    assert d.matrix.nnz == 0 or abs(d.matrix).max() < 1e-15


def test_lowering_dissipator_two_level():
    sm = np.array([[0, 0], [1, 0]], dtype=complex)   # |g><e|, excited = index 0
    excited = np.diag([1, 0]).astype(complex)
    out = unvec(dissipator_matrix(sm) @ vec(excited))
    assert np.allclose(out, np.diag([-1, 1]))


def test_dissipator_rejects_wrong_dimension():
    s = make_space(0, 1)
    with pytest.raises(ValueError):
        dissipator_super(QOperator(np.eye(8)), space=make_space(0, 2))
    with pytest.raises(ValueError):
        lindblad_sum([(1.0, np.eye(3))], s.dim)


def test_qubit_rates_values():
    p = Params(beta1=0.1, B1=4, g=1, chi=0)
    (up1, down1), _ = qubit_rates(p)
    assert up1 == pytest.approx(0.81596622091609411, rel=1e-12)
    assert down1 == pytest.approx(1.81596622091609411, rel=1e-12)
    assert up1 / down1 == pytest.approx(np.exp(-2 * 0.1 * 4))


def test_local_dissipators_act_on_their_qubit(rng):
    p = Params(l_min=-1, l_max=1)
    s = p.space()
    l1, l2 = local_qubit_dissipators(p, s)
    n1, n2 = p.n1, p.n2
    sp1, sm1 = (embed_qubit_op(1, k, s).toarray() for k in ("plus", "minus"))
    sp2, sm2 = (embed_qubit_op(2, k, s).toarray() for k in ("plus", "minus"))
    rho = random_density(s.dim, rng)
    ref1 = n1 * lindblad_reference(sp1, rho) + (n1 + 1) * lindblad_reference(sm1, rho)
    ref2 = n2 * lindblad_reference(sp2, rho) + (n2 + 1) * lindblad_reference(sm2, rho)
    assert np.allclose(l1.apply(rho), ref1)
    assert np.allclose(l2.apply(rho), ref2)
    assert l1.kind == BATH1 and l2.kind == BATH2


def test_decoupled_qubit_one():
    p = Params(chi=0.999999, l_min=-1, l_max=1)
    l1, _ = local_qubit_dissipators(p)
    scale = abs(local_qubit_dissipators(p.replace(chi=0))[0].matrix).max()
    assert abs(l1.matrix).max() < 1e-10 * scale


def test_rotor_load_zero_without_friction():
    p = Params(gamma=0, l_min=-2, l_max=2)
    assert rotor_load_dissipator(p).matrix.nnz == 0


def test_rotor_load_literal_jumps(rng):
    p = Params(l_min=-3, l_max=3, gamma=0.01, beta_r=0.5, inertia=2.0)
    s = p.space()
    c, sn, lz = (op(s).toarray() for op in (cos_phi, sin_phi, angular_momentum))
    a = p.beta_r / (4 * p.inertia)
    j1, j2 = c - 1j * a * sn @ lz, sn + 1j * a * c @ lz
    got1, got2 = (j.toarray() for j in rotor_load_jumps(p, s))
    assert np.allclose(got1, j1) and np.allclose(got2, j2)
    rho = random_density(s.dim, rng)
    pref = 2 * p.inertia * p.gamma / p.beta_r
    ref = pref * (lindblad_reference(j1, rho) + lindblad_reference(j2, rho))
    assert np.allclose(rotor_load_dissipator(p, s).apply(rho), ref)


@given(st.integers(0, 2**32 - 1), st.floats(0, 0.9), st.floats(0, 0.5))
def test_generator_trace_and_hermiticity(seed, chi, lam):
    rng = np.random.default_rng(seed)
    p = Params(l_min=-2, l_max=2, chi=chi, lam=lam, gamma=1e-2)
    gen = assemble_local_liouvillian(p)
    d = gen.dim
    tr_row = vec(np.eye(d)).conj()
    for part in list(gen.parts.values()) + [gen]:
        assert np.abs(tr_row @ part.matrix).max() < 1e-10
        h = random_hermitian(d, rng)
        out = part.apply(h)
        assert np.abs(out - out.conj().T).max() < 1e-10 * max(1, np.abs(out).max())


def test_generator_parts_and_sum(small_params):
    gen = assemble_local_liouvillian(small_params)
    assert set(gen.parts) == {HAMILTONIAN, BATH1, BATH2, ROTOR}
    total = sum(part.matrix for part in gen.parts.values())
    assert abs(total - gen.matrix).max() == 0
    hs = build_hamiltonians(small_params)[2]
    assert abs(gen[HAMILTONIAN].matrix - hamiltonian_super(hs)).max() == 0
    d = gen.dim
    out = gen.apply(np.eye(d) / d)
    assert abs(np.trace(out)) < 1e-12


def test_qubit_dissipators_leave_rotor_observables(rng, small_params):
    gen = assemble_local_liouvillian(small_params)
    s = gen.space
    lz = angular_momentum(s).toarray()
    rho = random_density(s.dim, rng)
    for kind in (BATH1, BATH2):
        out = gen.apply_part(kind, rho)
        for f in (lz, lz @ lz):
            assert abs(np.trace(out @ f)) < 1e-12
