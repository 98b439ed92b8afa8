import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvpurify import fock
from cvpurify.fock import DensityMatrix, FockError, FockRegister, StateVector
from cvpurify.state_gen import two_mode_squeezed


def random_state(register, rng):
    amps = rng.normal(size=register.dim) + 1j * rng.normal(size=register.dim)
    return StateVector(register, amps).normalize()


def random_rho(register, rng, rank=3):
    vecs = [random_state(register, rng).amplitudes for _ in range(rank)]
    w = rng.random(rank)
    w /= w.sum()
    return DensityMatrix(register, sum(wi * np.outer(v, v.conj()) for wi, v in zip(w, vecs)))


# --- register and kets -------------------------------------------------------

def test_register_dimension_and_order():
    reg = FockRegister(3, 2)
    assert reg.dim == 27
    assert reg.index((0, 0, 1)) == 1
    assert reg.index((1, 0, 0)) == 9  # mode 0 varies slowest
    assert [reg.occupations(i) for i in range(3)] == [(0, 0, 0), (0, 0, 1), (0, 0, 2)]


def test_register_large_dimension_is_exact():
    assert FockRegister(40, 9).dim == 10 ** 40


def test_register_rejects_bad_cutoff():
    with pytest.raises(FockError):
        FockRegister(2, 0)


def test_number_ket_vacuum():
    ket = fock.number_ket(FockRegister(1, 3), (0,))
    assert ket.norm == pytest.approx(1.0, abs=1e-12)
    assert ket.amplitude((0,)) == 1


def test_number_ket_basis():
    ket = fock.number_ket(FockRegister(2, 2), (1, 2))
    assert ket.amplitude((1, 2)) == 1
    assert np.count_nonzero(ket.amplitudes) == 1


def test_number_ket_cutoff_violation():
    with pytest.raises(FockError):
        fock.number_ket(FockRegister(2, 2), (3, 0))


def test_normalize_zero_vector_errors():
    null = StateVector(FockRegister(1, 2), np.zeros(3))
    assert null.is_null
    with pytest.raises(FockError):
        null.normalize()


def test_amplitudes_are_read_only():
    ket = fock.vacuum(FockRegister(1, 2))
    with pytest.raises(ValueError):
        ket.amplitudes[0] = 2


# --- annihilation ------------------------------------------------------------

def test_annihilate_one_photon():
    reg = FockRegister(1, 3)
    out = fock.annihilate(fock.number_ket(reg, (1,)), 0)
    assert out.amplitude((0,)) == pytest.approx(1.0)


def test_annihilate_vacuum_is_zero():
    out = fock.annihilate(fock.vacuum(FockRegister(1, 3)), 0)
    assert out.is_null


def test_annihilate_superposition():
    reg = FockRegister(1, 3)
    psi = StateVector(reg, np.array([1, 0, 1, 0]) / math.sqrt(2))
    out = fock.annihilate(psi, 0)
    # sqrt(2)/sqrt(2) on |1>
    assert out.amplitude((1,)) == pytest.approx(1.0)
    assert out.norm ** 2 == pytest.approx(psi.mean_number(0), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), modes=st.integers(1, 3), cutoff=st.integers(1, 4))
def test_annihilate_norm_law(seed, modes, cutoff):
    rng = np.random.default_rng(seed)
    reg = FockRegister(modes, cutoff)
    psi = random_state(reg, rng)
    k = int(rng.integers(modes))
    assert fock.annihilate(psi, k).norm ** 2 == pytest.approx(psi.mean_number(k), abs=1e-12)


def test_annihilate_matches_matrix_oracle():
    rng = np.random.default_rng(3)
    reg = FockRegister(2, 3)
    psi = random_state(reg, rng)
    a = np.diag(np.sqrt(np.arange(1, 4)), 1)
    expected = np.kron(np.eye(4), a) @ psi.amplitudes
    np.testing.assert_allclose(fock.annihilate(psi, 1).amplitudes, expected, atol=1e-14)


# --- tensor products ---------------------------------------------------------

def test_tensor_vacua():
    vac = fock.vacuum(FockRegister(1, 2))
    both = fock.tensor(vac, vac)
    assert both.register == FockRegister(2, 2)
    assert both.amplitude((0, 0)) == 1


def test_tensor_number_kets():
    reg = FockRegister(1, 2)
    out = fock.tensor(fock.number_ket(reg, (1,)), fock.number_ket(reg, (2,)))
    assert out.amplitude((1, 2)) == 1


def test_tensor_matches_kron():
    rng = np.random.default_rng(0)
    a = random_state(FockRegister(1, 3), rng)
    b = random_state(FockRegister(2, 3), rng)
    np.testing.assert_allclose(fock.tensor(a, b).amplitudes, np.kron(a.amplitudes, b.amplitudes))


def test_tensor_of_two_pairs_after_reordering():
    r, cutoff = 0.7, 4
    lam = math.tanh(r)
    pair = two_mode_squeezed(r, cutoff, max_tail=1.0)
    both = fock.permute_modes(fock.tensor(pair, pair), [0, 2, 1, 3])
    # brute force, renormalized after truncation like the pair itself
    norm = sum(lam ** (2 * n) for n in range(cutoff + 1))
    for n in range(cutoff + 1):
        for k in range(cutoff + 1):
            assert both.amplitude((n, k, n, k)) == pytest.approx(lam ** (n + k) / norm, abs=1e-14)
    assert abs(both.amplitude((1, 0, 0, 1))) == 0


def test_tensor_cutoff_mismatch():
    with pytest.raises(FockError):
        fock.tensor(fock.vacuum(FockRegister(1, 2)), fock.vacuum(FockRegister(1, 3)))


# --- partial trace and entropy -----------------------------------------------

def test_partial_trace_of_product():
    rng = np.random.default_rng(5)
    ra, rb = random_rho(FockRegister(1, 2), rng), random_rho(FockRegister(1, 2), rng)
    joint = DensityMatrix(FockRegister(2, 2), np.kron(ra.matrix, rb.matrix))
    np.testing.assert_allclose(fock.partial_trace(joint, [0]).matrix, ra.matrix, atol=1e-12)
    np.testing.assert_allclose(fock.partial_trace(joint, [1]).matrix, rb.matrix, atol=1e-12)


def test_partial_trace_of_pair_is_geometric():
    r, cutoff = 1.0, 30
    pair = two_mode_squeezed(r, cutoff)
    red = fock.partial_trace(DensityMatrix.from_ket(pair), [0])
    lam2 = math.tanh(r) ** 2
    weights = (1 - lam2) * lam2 ** np.arange(cutoff + 1)
    weights /= weights.sum()
    np.testing.assert_allclose(red.matrix, np.diag(weights), atol=1e-14)


def test_partial_trace_of_j2_state_is_maximally_mixed():
    from cvpurify.purify import maximally_entangled_state

    state = maximally_entangled_state(2, 2, 3)
    red = fock.partial_trace(DensityMatrix.from_ket(state), [0, 1])
    # brute force: reshape the full projector and sum over B indices
    t = np.outer(state.amplitudes, state.amplitudes.conj()).reshape((16, 16, 16, 16))
    oracle = np.einsum("abcb->ac", t)
    np.testing.assert_allclose(red.matrix, oracle, atol=1e-14)
    evals = np.sort(np.linalg.eigvalsh(red.matrix))[::-1]
    np.testing.assert_allclose(evals[:3], [1 / 3] * 3, atol=1e-14)
    assert np.all(np.abs(evals[3:]) < 1e-14)
    for occ in [(0, 2), (1, 1), (2, 0)]:
        i = FockRegister(2, 3).index(occ)
        assert red.matrix[i, i] == pytest.approx(1 / 3)


def test_partial_trace_empty_keep():
    rho = DensityMatrix.from_ket(fock.vacuum(FockRegister(2, 1)))
    with pytest.raises(FockError):
        fock.partial_trace(rho, [])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_partial_trace_round_trip(seed):
    rng = np.random.default_rng(seed)
    a = random_state(FockRegister(1, 3), rng)
    b = random_state(FockRegister(2, 3), rng)
    rho = DensityMatrix.from_ket(fock.tensor(a, b))
    kept = fock.partial_trace(rho, [0])
    np.testing.assert_allclose(kept.matrix, np.outer(a.amplitudes, a.amplitudes.conj()), atol=1e-12)
    assert kept.trace == pytest.approx(1.0, abs=1e-12)


def test_entropy_pure_is_zero():
    rng = np.random.default_rng(1)
    rho = DensityMatrix.from_ket(random_state(FockRegister(2, 2), rng))
    assert fock.von_neumann_entropy(rho) == pytest.approx(0.0, abs=1e-9)


def test_entropy_maximally_mixed():
    rho = DensityMatrix(FockRegister(2, 1), np.eye(4) / 4)
    assert fock.von_neumann_entropy(rho) == pytest.approx(2.0, abs=1e-12)


def test_entropy_of_pair_matches_closed_form():
    r = 1.0
    c2, s2 = math.cosh(r) ** 2, math.sinh(r) ** 2
    closed = c2 * math.log2(c2) - s2 * math.log2(s2)
    assert closed == pytest.approx(2.3369, abs=1e-4)
    # tail < 1e-10 needs cutoff 42
    pair = two_mode_squeezed(r, 42)
    red = fock.partial_trace(DensityMatrix.from_ket(pair), [0])
    assert fock.von_neumann_entropy(red) == pytest.approx(closed, abs=1e-6)
    assert fock.entanglement_entropy(pair, [0]) == pytest.approx(closed, abs=1e-6)


def test_entropy_of_pair_at_cutoff_30():
    # truncation alone shifts the entropy by 1.2e-6 here
    pair = two_mode_squeezed(1.0, 30)
    red = fock.partial_trace(DensityMatrix.from_ket(pair), [0])
    assert fock.von_neumann_entropy(red) == pytest.approx(2.336909300545897, abs=2e-6)
    assert fock.von_neumann_entropy(red) == pytest.approx(fock.entanglement_entropy(pair, [0]), abs=1e-10)


def test_entropy_rejects_non_hermitian():
    m = np.array([[0.5, 0.3], [0.0, 0.5]])
    with pytest.raises(FockError):
        fock.von_neumann_entropy(DensityMatrix(FockRegister(1, 1), m))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_entropy_additivity(seed):
    rng = np.random.default_rng(seed)
    ra, rb = random_rho(FockRegister(1, 3), rng), random_rho(FockRegister(1, 3), rng, rank=2)
    joint = DensityMatrix(FockRegister(2, 3), np.kron(ra.matrix, rb.matrix))
    total = fock.von_neumann_entropy(ra) + fock.von_neumann_entropy(rb)
    assert fock.von_neumann_entropy(joint) == pytest.approx(total, abs=1e-9)


def test_density_validation():
    rng = np.random.default_rng(2)
    rho = random_rho(FockRegister(2, 2), rng)
    assert rho.validate() is rho
    bad = DensityMatrix(FockRegister(1, 1), np.diag([1.2, -0.2]))
    with pytest.raises(FockError):
        bad.validate()


# --- total-number projectors -------------------------------------------------

def test_projector_two_pair_example():
    from cvpurify.purify import ProtocolSpec, maximally_entangled_state, protocol_state

    spec = ProtocolSpec.from_lambda(2, 0.5)
    state = protocol_state(spec, 40)
    prob, post = fock.total_number_projector_apply(state, [0, 1], 1)
    assert prob == pytest.approx(0.28125, abs=1e-12)
    assert post.fidelity(maximally_entangled_state(2, 1, 40)) >= 1 - 1e-10


def test_projector_unreachable_total():
    reg = FockRegister(2, 2)
    prob, post = fock.total_number_projector_apply(fock.number_ket(reg, (1, 1)), [0, 1], 5)
    assert prob == 0.0
    assert post.is_null


def test_projector_vacuum():
    vac = fock.vacuum(FockRegister(2, 2))
    prob, post = fock.total_number_projector_apply(vac, [0, 1], 0)
    assert prob == 1.0
    np.testing.assert_allclose(post.amplitudes, vac.amplitudes)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), modes=st.integers(1, 3), cutoff=st.integers(1, 4))
def test_projector_completeness(seed, modes, cutoff):
    rng = np.random.default_rng(seed)
    reg = FockRegister(modes, cutoff)
    psi = random_state(reg, rng)
    subset = sorted(set(rng.integers(0, modes, size=modes).tolist()))
    total = sum(fock.total_number_projector_apply(psi, subset, j)[0]
                for j in range(len(subset) * cutoff + 1))
    assert total == pytest.approx(1.0, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_projected_states_are_normalized(seed):
    rng = np.random.default_rng(seed)
    psi = random_state(FockRegister(3, 2), rng)
    for j in range(7):
        prob, post = fock.total_number_projector_apply(psi, [0, 2], j)
        if prob > 0:
            assert post.norm == pytest.approx(1.0, abs=1e-12)


def test_sample_total_number_matches_distribution():
    rng = np.random.default_rng(11)
    psi = random_state(FockRegister(2, 2), rng)
    probs = fock.total_number_distribution(psi, [0, 1])
    draws = [fock.sample_total_number(psi, [0, 1], rng) for _ in range(20000)]
    freq = np.bincount(draws, minlength=probs.size) / len(draws)
    sigma = np.sqrt(probs * (1 - probs) / len(draws))
    assert np.all(np.abs(freq - probs) <= 4 * sigma + 1e-12)


def test_project_density_matches_ket_projection():
    rng = np.random.default_rng(4)
    psi = random_state(FockRegister(4, 2), rng)
    rho = DensityMatrix.from_ket(psi)
    sub = fock.total_number_project(fock.total_number_project(psi, [0, 1], 2), [2, 3], 1)
    proj = fock.project_density(rho, [[0, 1], [2, 3]], [2, 1])
    np.testing.assert_allclose(proj.matrix, np.outer(sub.amplitudes, sub.amplitudes.conj()), atol=1e-14)
