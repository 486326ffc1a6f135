import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from rotormill.dynamics import steady_state
from rotormill.gme import (
    EigensolverError, assemble_global_liouvillian, bath_rates, cutoff_frequency,
    eigenoperators, global_eigenoperators, spectrum,
)
from rotormill.liouvillian import BATH1, BATH2, assemble_local_liouvillian
from rotormill.model import Params, build_hamiltonians, gibbs_state
from rotormill.operators import embed_qubit_op
from rotormill.thermo import heat_flows_global, heat_flows_local

from conftest import random_hermitian


def test_spectrum_reconstructs_hamiltonian(small_params):
    hs = build_hamiltonians(small_params)[2]
    spec = spectrum(hs)
    V = spec.vectors.toarray()
    assert np.allclose(V @ np.diag(spec.energies) @ V.conj().T, hs.toarray(), atol=1e-12)
    assert np.all(np.diff(spec.energies) >= 0)
    ref = np.linalg.eigvalsh(hs.toarray())
    assert np.allclose(spec.energies, ref, atol=1e-10)


def test_spectrum_clusters_degenerate_levels():
    spec = spectrum(sp.diags([1.0, 1.0, 2.0, 3.0, 3.0]))
    assert sorted(len(c) for c in spec.clusters) == [1, 2, 2]


def test_spectrum_rejects_non_hermitian():
    with pytest.raises(EigensolverError):
        spectrum(sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]])))


def test_eigenoperators_complete(fig2):
    spec, sets = global_eigenoperators(fig2)
    space = fig2.space()
    for s, which in zip(sets, (1, 2)):
        total = s.total()
        target = embed_qubit_op(which, "minus", space).tocsr()
        assert abs(total - target).max() <= 1e-10


def test_eigenoperators_ladder_relation(small_params):
    spec, sets = global_eigenoperators(small_params)
    hs = build_hamiltonians(small_params)[2].tocsr()
    for s in sets:
        for w, op in s.pairs:
            a = op.tocsr()
            comm = hs @ a - a @ hs
            assert abs(comm + w * a).max() <= 1e-8 * max(1, abs(w))


def test_isolated_qubit_has_single_frequency():
    p = Params(lam=0.0, l_min=0, l_max=1)
    _, sets = global_eigenoperators(p)
    assert len(sets[0].pairs) == 1
    assert sets[0].pairs[0][0] == pytest.approx(2 * p.B1, abs=1e-12)
    assert sets[1].pairs[0][0] == pytest.approx(2 * p.B2, abs=1e-12)


def test_frequency_count_grows_with_ladder():
    counts = [len(global_eigenoperators(Params(l_min=-k, l_max=k))[1][0].pairs)
              for k in (1, 3, 6)]
    assert counts[0] < counts[1] < counts[2]


def test_adjoint_set_has_negated_frequencies(small_params):
    spec, sets = global_eigenoperators(small_params)
    space = small_params.space()
    plus = eigenoperators(embed_qubit_op(1, "plus", space), spec, sets[0].tol)
    fwd = {round(w, 8): op.tocsr() for w, op in sets[0].pairs}
    assert len(plus.pairs) == len(fwd)
    for w, op in plus.pairs:
        partner = fwd[round(-w, 8)]
        assert abs(op.tocsr() - partner.conj().T).max() <= 1e-10


def test_bath_rates_kms():
    p = Params()
    for w in (0.5, 2 * p.B1, 2 * p.B2):
        up, down = bath_rates(w, 1, p, 20.0)
        assert up / down == pytest.approx(np.exp(-p.beta1 * w), rel=1e-12)


def test_bath_rates_reflection():
    p = Params(beta1=0.1)
    up, down = bath_rates(1.0, 1, p, 20.0)
    up_m, down_m = bath_rates(-1.0, 1, p, 20.0)
    assert up_m == pytest.approx(down, rel=1e-12)
    assert down_m == pytest.approx(up, rel=1e-12)


def test_bath_rates_zero_frequency_limit():
    p = Params(g=0.7, beta2=0.03)
    cut = 25.0
    limit = p.g2 ** 2 / p.beta2
    up0, down0 = bath_rates(0.0, 2, p, cut)
    assert up0 == pytest.approx(limit, rel=1e-12)
    assert down0 == pytest.approx(limit, rel=1e-12)
    # brute force: J(w) n(w) approaches the same value from both sides
    for w in (1e-2, 1e-4, 1e-6):
        lorentz = p.g2 ** 2 * w * cut ** 2 / (w ** 2 + cut ** 2)
        brute = lorentz / np.expm1(p.beta2 * w)
        assert brute == pytest.approx(limit, rel=2 * p.beta2 * w + 1e-6)
        assert bath_rates(w, 2, p, cut)[0] == pytest.approx(brute, rel=1e-10)


@given(st.floats(-100, 100), st.sampled_from([1, 2]))
def test_bath_rates_nonnegative(w, i):
    up, down = bath_rates(w, i, Params(), 30.0)
    assert up >= 0 and down >= 0


def test_bath_rates_bad_index():
    with pytest.raises(ValueError):
        bath_rates(1.0, 3, Params(), 1.0)


def test_cutoff_defaults_to_largest_transition(small_params):
    _, sets = global_eigenoperators(small_params)
    wmax = max(abs(w) for s in sets for w, _ in s.pairs)
    assert cutoff_frequency(small_params, sets) == wmax
    assert cutoff_frequency(small_params.replace(omega_cutoff=3.5), sets) == 3.5


def test_generator_annihilates_trace(small_params, rng):
    gen = assemble_global_liouvillian(small_params)
    for _ in range(3):
        h = random_hermitian(gen.dim, rng)
        assert abs(np.trace(gen.apply(h))) <= 1e-10 * np.abs(h).max() * gen.dim


def test_equal_temperatures_gibbs_is_stationary():
    p = Params(beta1=0.1, beta2=0.1, gamma=0.0, l_min=-3, l_max=4)
    gen = assemble_global_liouvillian(p)
    rho = gibbs_state(gen.hamiltonians[2], p.beta1).toarray()
    for kind in (BATH1, BATH2):
        assert np.abs(gen.apply_part(kind, rho)).max() <= 1e-8
    q1, q2, _ = heat_flows_global(rho, gen)
    assert abs(q1) <= 1e-8 and abs(q2) <= 1e-8


def test_dropping_zero_frequency_terms():
    p = Params(lam=0.0, l_min=0, l_max=1)
    keep = assemble_global_liouvillian(p)
    drop = assemble_global_liouvillian(p.replace(keep_zero_frequency=False))
    # no zero-frequency transitions here, so the switch changes nothing
    assert abs(keep.matrix - drop.matrix).max() == 0


def test_uncoupled_limit_rescales_local_rates():
    # lam = 0: each global qubit dissipator is the local one times J(2B) / g^2
    p = Params(lam=0.0, chi=0.3, l_min=-2, l_max=2)
    glob = assemble_global_liouvillian(p)
    loc = assemble_local_liouvillian(p)
    cut = glob.cutoff
    for kind, B, g in ((BATH1, p.B1, p.g1), (BATH2, p.B2, p.g2)):
        w = 2 * B
        factor = w * cut ** 2 / (w ** 2 + cut ** 2)
        diff = glob[kind].matrix - factor * loc[kind].matrix
        assert abs(diff).max() <= 1e-12 * g ** 2 * factor


def test_steady_state_balance():
    p = Params(g=0.5, beta2=0.02, chi=0.5, l_min=-10, l_max=30)
    gen = assemble_global_liouvillian(p)
    q1, q2, qr = heat_flows_global(steady_state(gen), gen)
    hi_norm = 2 * p.lam
    assert abs(q1 + q2 + qr) <= max(1e-8, 10 * p.gamma * hi_norm)


def test_generator_parts_and_cache(small_params):
    a = assemble_global_liouvillian(small_params)
    b = assemble_global_liouvillian(small_params.replace(beta2=0.07, chi=0.3))
    assert a.spectrum is b.spectrum
    assert a.model == "global"
    assert a.cutoff > 0
