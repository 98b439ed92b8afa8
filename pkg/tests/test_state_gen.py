import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvpurify import fock
from cvpurify.fock import DensityMatrix, FockError, FockRegister
from cvpurify.state_gen import (
    ConvergenceError,
    CorrelationSet,
    LossModel,
    NopaOutput,
    NopaSpec,
    correlations_of,
    default_cutoff,
    fill_transient,
    lindblad_evolve,
    lossy_steady_correlations,
    nopa_output,
    squeeze_from_N,
    tmss_tail_weight,
    two_mode_squeezed,
)


def binomial_loss_channel(rho: DensityMatrix, products) -> np.ndarray:
    """Exact photon-loss channel with transmissivity exp(-x) per mode (Kraus sum)."""
    reg = rho.register
    levels = reg.levels
    t = rho.tensor()
    n = reg.mode_count
    for k, x in enumerate(products):
        if x == 0:
            continue
        eta = math.exp(-x)
        kraus = []
        for ell in range(levels):
            op = np.zeros((levels, levels))
            for m in range(ell, levels):
                op[m - ell, m] = math.sqrt(math.comb(m, ell) * eta ** (m - ell) * (1 - eta) ** ell)
            kraus.append(op)
        out = np.zeros_like(t)
        for op in kraus:
            tmp = np.moveaxis(np.tensordot(op, t, axes=([1], [k])), 0, k)
            tmp = np.moveaxis(np.tensordot(op.conj(), tmp, axes=([1], [n + k])), 0, n + k)
            out += tmp
        t = out
    return t.reshape(reg.dim, reg.dim)


# --- NOPA --------------------------------------------------------------------

def test_nopa_unpumped():
    out = nopa_output(NopaSpec(0.0, 1.0))
    assert out.N == 0 and out.M == 0


@settings(max_examples=50, deadline=None)
@given(ratio=st.floats(0.0, 0.49), kc=st.floats(0.1, 100.0))
def test_nopa_lossless_M_identity(ratio, kc):
    out = nopa_output(NopaSpec(ratio * kc, kc))
    assert out.M ** 2 - out.N * (out.N + 1) == pytest.approx(0.0, abs=1e-10 * max(1.0, out.M ** 2))


def test_nopa_quarter_pump():
    # eps / kc = 1/4: N = (1/16) / (1/4 - 1/16)^2 = 16/9, evaluated by hand
    out = nopa_output(NopaSpec(0.25, 1.0))
    assert out.N == pytest.approx(16 / 9, rel=1e-14)
    assert out.M == pytest.approx(math.sqrt(16 / 9 * 25 / 9), rel=1e-14)


def test_nopa_internal_loss_replaces_kappa():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lossy = nopa_output(NopaSpec(0.2, 1.0, 0.05))
    ref = nopa_output(NopaSpec(0.2, 1.05))
    assert lossy.N == pytest.approx(ref.N, rel=1e-14)


def test_nopa_threshold():
    with pytest.raises(ValueError):
        NopaSpec(0.5, 1.0)
    with pytest.raises(ValueError):
        NopaSpec(0.4996, 1.0)


def test_nopa_internal_loss_warning():
    with pytest.warns(UserWarning):
        NopaSpec(0.1, 1.0, 0.2)


# --- squeezing ---------------------------------------------------------------

def test_squeeze_from_zero():
    assert squeeze_from_N(0.0) == (0.0, 0.0)


def test_squeeze_from_sinh2():
    r, lam = squeeze_from_N(math.sinh(1.0) ** 2)
    assert r == pytest.approx(1.0, abs=1e-12)
    assert lam == pytest.approx(0.76159415595, abs=1e-10)


@pytest.mark.parametrize("N", [0.1, 1.0, 10.0])
def test_squeeze_identity(N):
    r, lam = squeeze_from_N(N)
    assert lam ** 2 / (1 - lam ** 2) == pytest.approx(N, abs=1e-12 * max(1.0, N))
    assert math.sinh(r) ** 2 == pytest.approx(N, abs=1e-12 * max(1.0, N))
    assert math.tanh(r) == pytest.approx(lam, abs=1e-12)


def test_squeeze_negative():
    with pytest.raises(ValueError):
        squeeze_from_N(-1.0)


def test_tmss_vacuum():
    state = two_mode_squeezed(0.0, 3)
    assert state.amplitude((0, 0)) == 1
    assert state.tail_weight == 0


def test_tmss_moments():
    state = two_mode_squeezed(1.0, default_cutoff(1.0, 1e-12))
    assert state.mean_number(0) == pytest.approx(math.sinh(1.0) ** 2, abs=1e-9)
    assert state.mean_number(1) == pytest.approx(math.sinh(1.0) ** 2, abs=1e-9)


def test_tmss_entropy():
    state = two_mode_squeezed(1.0, default_cutoff(1.0, 1e-10))
    c2, s2 = math.cosh(1.0) ** 2, math.sinh(1.0) ** 2
    assert fock.entanglement_entropy(state, [0]) == pytest.approx(
        c2 * math.log2(c2) - s2 * math.log2(s2), abs=1e-6)


def test_tmss_truncation_guard():
    with pytest.raises(FockError):
        two_mode_squeezed(1.0, 5)
    state = two_mode_squeezed(1.0, 5, max_tail=1.0)
    assert state.tail_weight == pytest.approx(math.tanh(1.0) ** 12)
    assert state.norm == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("r", [0.3, 1.0, 2.0])
def test_default_cutoff_is_minimal(r):
    c = default_cutoff(r, 1e-8)
    assert tmss_tail_weight(r, c) < 1e-8
    assert tmss_tail_weight(r, c - 1) >= 1e-8


# --- correlations ------------------------------------------------------------

def test_fill_transient_start():
    out = fill_transient(NopaOutput(1.0, math.sqrt(2)), 1.0, 0.0)
    assert out.as_tuple() == (0.0, 0.0, 0.0, 1.0, 1.0)


def test_fill_transient_late():
    out = fill_transient(NopaOutput(1.0, math.sqrt(2)), 2.0, 10.0)
    assert abs(out.occ_A - 1.0) < 1e-8
    assert out.occ_A == pytest.approx(1 - math.exp(-20), rel=1e-15)


def test_fill_transient_limit_is_steady_state():
    N = 1.7
    target = NopaOutput(N, math.sqrt(N * (N + 1)))
    late = fill_transient(target, 1.0, 60.0)
    steady = lossy_steady_correlations(N, LossModel())
    np.testing.assert_allclose(late.as_tuple(), steady.as_tuple(), rtol=1e-14)


def test_lossless_correlations():
    out = lossy_steady_correlations(2.0, LossModel())
    assert out.cross == pytest.approx(math.sqrt(6))
    assert out.occ_A == 2.0


def test_lossy_correlations_example():
    out = lossy_steady_correlations(1.0, LossModel.from_products(0.1, 0.1))
    assert out.cross == pytest.approx(math.sqrt(2) * math.exp(-0.1), abs=1e-14)
    assert out.cross == pytest.approx(1.2796, abs=1e-4)
    assert out.occ_A == pytest.approx(math.exp(-0.1))


def test_loss_model_rates():
    loss = LossModel(eta_A=2.0, eta_B=1.0, tau=0.1, eta0_over_kappac=0.02)
    assert loss.eta_prime_A == pytest.approx(2.2)
    assert loss.eta_prime_A_tau == pytest.approx(0.22)
    zero_time = LossModel(eta0_over_kappac=0.02)
    assert zero_time.eta_prime_A_tau == pytest.approx(0.02)
    assert math.isinf(zero_time.eta_prime_A)


@settings(max_examples=50, deadline=None)
@given(N=st.floats(0, 10), xa=st.floats(0, 2), dx=st.floats(0, 2))
def test_occupation_monotone_in_loss(N, xa, dx):
    lo = lossy_steady_correlations(N, LossModel.from_products(xa, 0.0))
    hi = lossy_steady_correlations(N, LossModel.from_products(xa + dx, 0.0))
    assert hi.occ_A <= lo.occ_A
    assert hi.anti_A - hi.occ_A == pytest.approx(1.0, abs=1e-10)


def test_correlation_set_commutator():
    with pytest.raises(ValueError):
        CorrelationSet(0.0, 1.0, 1.0, 1.5, 2.0)


def test_correlations_of_vacuum():
    rho = DensityMatrix.from_ket(fock.vacuum(FockRegister(2, 2)))
    assert correlations_of(rho).as_tuple() == (0.0, 0.0, 0.0, 1.0, 1.0)


def test_correlations_of_number_state():
    rho = DensityMatrix.from_ket(fock.number_ket(FockRegister(2, 2), (1, 1)))
    out = correlations_of(rho)
    assert (out.cross, out.occ_A, out.occ_B) == (0.0, 1.0, 1.0)


def test_correlations_of_pair():
    r = 0.5
    state = two_mode_squeezed(r, default_cutoff(r, 1e-14))
    out = correlations_of(DensityMatrix.from_ket(state))
    # direct summation of sqrt(1 - l^2)^2 l^(2n+1) (n + 1)
    lam = math.tanh(r)
    direct = sum((1 - lam ** 2) * lam ** (2 * n + 1) * (n + 1) for n in range(400))
    assert out.cross == pytest.approx(math.sinh(r) * math.cosh(r), abs=1e-8)
    assert out.cross == pytest.approx(direct, abs=1e-8)


# --- Lindblad ----------------------------------------------------------------

def test_lindblad_zero_rates():
    rho = DensityMatrix.from_ket(two_mode_squeezed(0.5, 8))
    assert lindblad_evolve(rho, LossModel()) is rho


def test_lindblad_single_photon_decay():
    reg = FockRegister(1, 3)
    rho = DensityMatrix.from_ket(fock.number_ket(reg, (1,)))
    eta, tau = 0.7, 0.4
    out = lindblad_evolve(rho, LossModel(eta_A=eta, tau=tau), a_modes=[0], b_modes=[])
    assert out.matrix[1, 1].real == pytest.approx(math.exp(-eta * tau), abs=1e-9)
    assert out.matrix[0, 0].real == pytest.approx(1 - math.exp(-eta * tau), abs=1e-9)


def test_lindblad_partial_time():
    reg = FockRegister(1, 3)
    rho = DensityMatrix.from_ket(fock.number_ket(reg, (2,)))
    loss = LossModel(eta_A=1.0, tau=2.0)
    half = lindblad_evolve(rho, loss, tau=1.0, a_modes=[0], b_modes=[])
    assert half.matrix[2, 2].real == pytest.approx(math.exp(-2.0), abs=1e-9)


def test_lindblad_bad_steps():
    rho = DensityMatrix.from_ket(two_mode_squeezed(0.5, 4))
    with pytest.raises(ValueError):
        lindblad_evolve(rho, LossModel.from_products(0.1, 0.1), steps=0)


def test_lindblad_too_few_steps_is_reported():
    rho = DensityMatrix.from_ket(two_mode_squeezed(1.0, 12))
    with pytest.raises(ConvergenceError):
        lindblad_evolve(rho, LossModel.from_products(0.2, 0.2), steps=1, tol=1e-14)


@pytest.mark.parametrize("products", [(0.05, 0.05), (0.2, 0.0), (0.3, 0.1)])
def test_lindblad_matches_kraus_channel(products):
    rho = DensityMatrix.from_ket(two_mode_squeezed(1.0, 12))
    out = lindblad_evolve(rho, LossModel.from_products(*products))
    oracle = binomial_loss_channel(rho, products)
    assert np.abs(out.matrix - oracle).sum() < 1e-8


def test_lindblad_two_pairs_matches_kraus_channel():
    from cvpurify.purify import ProtocolSpec, protocol_state

    rho = DensityMatrix.from_ket(protocol_state(ProtocolSpec(2, 0.5), 5))
    out = lindblad_evolve(rho, LossModel.from_products(0.1, 0.05))
    oracle = binomial_loss_channel(rho, (0.1, 0.1, 0.05, 0.05))
    assert np.abs(out.matrix - oracle).max() < 1e-9


def test_lindblad_preserves_trace_and_positivity():
    rho = DensityMatrix.from_ket(two_mode_squeezed(1.0, 14))
    out = lindblad_evolve(rho, LossModel.from_products(0.2, 0.2))
    assert out.trace == pytest.approx(1.0, abs=1e-9)
    assert out.eigenvalues().min() >= -1e-8


def test_lindblad_central_cross_check_cutoff_12():
    # at cutoff 12 the truncated state itself is ~1e-3 away from the Gaussian
    # moments, so the check is made against the exact channel on that state
    rho = DensityMatrix.from_ket(two_mode_squeezed(1.0, 12))
    loss = LossModel.from_products(0.05, 0.05)
    out = correlations_of(lindblad_evolve(rho, loss))
    exact = correlations_of(DensityMatrix(rho.register, binomial_loss_channel(rho, (0.05, 0.05))))
    np.testing.assert_allclose(out.as_tuple(), exact.as_tuple(), atol=1e-8)
    # and moments scale exactly as the Gaussian law prescribes for any input
    base = correlations_of(rho)
    assert out.occ_A == pytest.approx(base.occ_A * math.exp(-0.05), abs=1e-9)
    assert out.cross == pytest.approx(base.cross * math.exp(-0.05), abs=1e-9)
