"""Entanglement concentration and purification by total photon-number measurement.

Protocol registers hold ``2 m`` modes ordered (A_1, ..., A_m, B_1, ..., B_m).
Closed forms and the exact Fock-space simulation live side by side so each
can be checked against the other.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import stats
from scipy.special import gammaln

from . import fock
from .fock import (
    CapacityError,
    DensityMatrix,
    FockError,
    FockRegister,
    StateVector,
)
from .state_gen import LossModel, two_mode_squeezed

TAIL_TOL = 1e-10
WORKING_THRESHOLD = 0.1
FIRST_ORDER_GUARDRAIL = 0.3


@dataclass(frozen=True)
class ProtocolSpec:
    m: int
    r: float
    loss: LossModel | None = None

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"number of pairs m must be a positive integer, got {self.m!r}")
        if not self.r >= 0 or math.isinf(self.r):
            raise ValueError(f"squeezing r must be finite and non-negative, got {self.r!r}")

    @classmethod
    def from_lambda(cls, m: int, lam: float, loss: LossModel | None = None) -> "ProtocolSpec":
        if not 0 <= lam < 1:
            raise ValueError("lambda must lie in [0, 1)")
        return cls(m, math.atanh(lam), loss)

    @property
    def lam(self) -> float:
        return math.tanh(self.r)

    @property
    def nbar(self) -> float:
        """Mean photon number per mode, sinh(r)^2."""
        return math.sinh(self.r) ** 2

    @property
    def loss_products(self) -> tuple[float, float]:
        if self.loss is None:
            return 0.0, 0.0
        return self.loss.eta_prime_A_tau, self.loss.eta_prime_B_tau


@dataclass(frozen=True, eq=False)
class OutcomeRecord:
    j_A: int
    j_B: int
    success: bool
    probability: float
    entanglement_bits: float
    post_state: StateVector | DensityMatrix | None = None
    fidelity: float | None = None


@dataclass(frozen=True, eq=False)
class TrajectoryBranch:
    kind: str  # "no_jump" or "jump"
    probability: float
    state: StateVector
    side: str | None = None
    pair_index: int | None = None


def a_modes(m: int) -> tuple[int, ...]:
    return tuple(range(m))


def b_modes(m: int) -> tuple[int, ...]:
    return tuple(range(m, 2 * m))


# --- closed forms ----------------------------------------------------------

def degeneracy_f(j: int, m: int) -> int:
    """Number of ways to spread j photons over m modes, C(j + m - 1, m - 1)."""
    if j < 0 or m < 1:
        raise ValueError("require j >= 0 and m >= 1")
    return math.comb(j + m - 1, m - 1)


def outcome_probability(spec: ProtocolSpec, j: int) -> float:
    """Probability of total photon number j on each side.

    With loss this is the probability of finding j on both sides with no
    photon lost anywhere, i.e. of obtaining the maximally entangled |j>.
    """
    if j < 0:
        raise ValueError("j must be non-negative")
    lam2 = spec.lam ** 2
    if lam2 == 0.0:
        return 1.0 if j == 0 else 0.0
    xa, xb = spec.loss_products
    log_p = (spec.m * math.log1p(-lam2) + j * math.log(lam2)
             + math.log(degeneracy_f(j, spec.m)) - j * (xa + xb))
    return math.exp(log_p)


def outcome_entanglement(j: int, m: int) -> float:
    """Entanglement (bits) of the maximally entangled outcome |j>."""
    return math.log2(degeneracy_f(j, m))


def initial_entanglement(r: float) -> float:
    """Entropy of entanglement (bits) of one two-mode squeezed pair."""
    if r < 0:
        raise ValueError("r must be non-negative")
    if r == 0:
        return 0.0
    c2, s2 = math.cosh(r) ** 2, math.sinh(r) ** 2
    return c2 * math.log2(c2) - s2 * math.log2(s2)


def increase_ratio(j: int, spec: ProtocolSpec) -> float:
    if spec.r == 0:
        raise ValueError("increase ratio is undefined for r = 0")
    return outcome_entanglement(j, spec.m) / initial_entanglement(spec.r)


@dataclass(frozen=True)
class IncreaseThreshold:
    """Two-pair thresholds on j above which the outcome beats one input pair.

    ``printed`` is cosh(r)**cosh(r) / sinh(r)**sinh(r) - 1 taken verbatim;
    ``exact`` is 2**E - 1, the inversion of log2(j + 1) > E.
    """

    printed: float
    exact: float


def increase_threshold(r: float) -> IncreaseThreshold:
    if r <= 0:
        raise ValueError("threshold requires r > 0")
    c, s = math.cosh(r), math.sinh(r)
    return IncreaseThreshold(printed=c ** c / s ** s - 1.0,
                             exact=2.0 ** initial_entanglement(r) - 1.0)


def first_improving_j(spec: ProtocolSpec) -> int:
    """Smallest j whose increase ratio exceeds one."""
    j = 0
    while increase_ratio(j, spec) <= 1.0:
        j += 1
    return j


def tail_cutoff(spec: ProtocolSpec, tol: float = TAIL_TOL) -> int:
    """Smallest j_max with P(j > j_max) < tol for the lossless distribution."""
    lam2 = spec.lam ** 2
    if lam2 == 0.0:
        return 0
    dist = stats.nbinom(spec.m, 1.0 - lam2)
    j_max = int(dist.isf(tol))
    while dist.sf(j_max) >= tol:
        j_max += 1
    return j_max


def outcome_distribution(spec: ProtocolSpec, j_max: int | None = None) -> np.ndarray:
    if j_max is None:
        j_max = tail_cutoff(spec)
    return np.array([outcome_probability(spec, j) for j in range(j_max + 1)])


def transfer_efficiency(spec: ProtocolSpec, j_max: int | None = None) -> float:
    """Mean outcome entanglement divided by the input entanglement m * E."""
    e_in = initial_entanglement(spec.r)
    if e_in == 0:
        raise ValueError("transfer efficiency requires r > 0")
    if spec.m == 1:
        return 0.0
    if j_max is None:
        j_max = tail_cutoff(spec)
    total = math.fsum(outcome_probability(spec, j) * outcome_entanglement(j, spec.m)
                      for j in range(1, j_max + 1))
    return total / (spec.m * e_in)


def distribution_moments(spec: ProtocolSpec) -> tuple[float, float]:
    """Closed-form mean and variance of the lossless outcome distribution."""
    lam2 = spec.lam ** 2
    return spec.m * lam2 / (1 - lam2), spec.m * lam2 / (1 - lam2) ** 2


def numeric_moments(spec: ProtocolSpec, j_max: int | None = None) -> tuple[float, float]:
    p = outcome_distribution(spec, j_max)
    j = np.arange(p.size)
    mean = math.fsum(j * p)
    return mean, math.fsum((j - mean) ** 2 * p)


# --- Fock-space states -----------------------------------------------------

def protocol_state(spec: ProtocolSpec, cutoff: int, *, max_tail: float = 1e-3) -> StateVector:
    """Product of m truncated two-mode squeezed pairs, ordered (A..., B...)."""
    pair = two_mode_squeezed(spec.r, cutoff, max_tail=max_tail)
    reg = FockRegister(2 * spec.m, cutoff)
    if reg.dim > fock.MAX_KET_DIM:
        raise CapacityError(
            f"{spec.m} pairs at cutoff {cutoff} need dimension {reg.dim} > "
            f"{fock.MAX_KET_DIM}; use the closed-form path (outcome_probability)")
    state = pair
    for _ in range(spec.m - 1):
        state = fock.tensor(state, pair)
    # tensor order is (A1, B1, A2, B2, ...)
    order = [2 * i for i in range(spec.m)] + [2 * i + 1 for i in range(spec.m)]
    return fock.permute_modes(state, order)


def maximally_entangled_state(m: int, j: int, cutoff: int) -> StateVector:
    """The equal superposition of |i_1..i_m>_A |i_1..i_m>_B over sum(i) = j."""
    reg = FockRegister(2 * m, cutoff)
    amps = np.zeros(reg.dim, dtype=np.complex128)
    count = 0
    for occ in itertools.product(range(min(j, cutoff) + 1), repeat=m):
        if sum(occ) == j:
            amps[reg.index(occ + occ)] = 1.0
            count += 1
    if count == 0:
        raise FockError(f"no basis state with total {j} fits cutoff {cutoff}")
    return StateVector(reg, amps / math.sqrt(count))


def _spec_modes(register: FockRegister) -> int:
    if register.mode_count % 2:
        raise FockError("protocol registers have an even number of modes")
    return register.mode_count // 2


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def concentrate_exact(spec: ProtocolSpec, cutoff: int, rng_seed=None) -> OutcomeRecord:
    """Simulate the one-sided total-number measurement on the Fock register.

    The outcome is drawn from the exact projector weights of the truncated
    state; the entanglement is evaluated from the post-measurement state.
    """
    state = protocol_state(spec, cutoff)
    m = spec.m
    j = fock.sample_total_number(state, a_modes(m), _rng(rng_seed))
    prob, post = fock.total_number_projector_apply(state, a_modes(m), j)
    bits = fock.entanglement_entropy(post, a_modes(m))
    return OutcomeRecord(j, j, True, prob, bits, post)


def sample_outcomes(spec: ProtocolSpec, cutoff: int, n: int, rng_seed=None) -> np.ndarray:
    """Draw ``n`` outcomes j from the exact projector weights of the truncated state."""
    state = protocol_state(spec, cutoff)
    probs = fock.total_number_distribution(state, a_modes(spec.m))
    return _rng(rng_seed).choice(probs.size, size=n, p=probs / probs.sum())


def phase_collapse(state: StateVector, mode: int, phi: float) -> StateVector:
    """Project ``mode`` onto the phase state sum_n exp(-i n phi)|n> and drop it.

    With this sign, collapsing A_2 of a two-pair outcome |j> leaves
    amplitudes exp(i (j - n) phi) / sqrt(j + 1) on |n>_A1 |n, j - n>_B1B2.
    """
    reg = state.register
    mode = reg.check_mode(mode)
    if reg.mode_count < 2:
        raise FockError("phase collapse needs at least one remaining mode")
    bra = np.exp(1j * phi * np.arange(reg.levels))
    collapsed = np.tensordot(state.tensor(), bra, axes=([mode], [0]))
    rest = FockRegister(reg.mode_count - 1, reg.cutoff)
    out = StateVector(rest, collapsed, state.tail_weight)
    if out.norm ** 2 < 1e-24:
        raise FockError("phase collapse has zero probability for this state")
    return out.normalize()


def single_pair_transfer(outcome: StateVector, j: int, phi: float) -> StateVector:
    """Move a two-pair outcome |j> onto the single pair (A_1, B_1).

    Collapses A_2 by a phase measurement, then relabels B's |n, j - n>
    as |n>|0> (a local unitary on side B) and discards the emptied B_2.
    """
    reg = outcome.register
    if reg.mode_count != 4:
        raise FockError("single-pair transfer acts on two-pair registers")
    rest = phase_collapse(outcome, 1, phi).tensor()  # modes (A1, B1, B2)
    out = np.zeros((reg.levels, reg.levels), dtype=np.complex128)
    for n in range(min(j, reg.cutoff) + 1):
        if j - n <= reg.cutoff:
            out[:, n] += rest[:, n, j - n]
    leftover = np.linalg.norm(rest) ** 2 - np.linalg.norm(out) ** 2
    if leftover > 1e-12:
        raise FockError("input is not a total-number-j outcome on side B")
    return StateVector(FockRegister(2, reg.cutoff), out).normalize()


# --- mixed states ----------------------------------------------------------

def trajectory_branches(spec: ProtocolSpec, cutoff: int) -> list[TrajectoryBranch]:
    """First-order quantum-trajectory decomposition of the lossy pairs.

    The no-jump branch carries probability (1 - l^2)^m / (1 - l^2 e^{-x_A - x_B})^m
    and each single jump in mode a_i carries nbar * x_a.  The probabilities
    are the first-order expressions and do not sum exactly to one; see
    :func:`branch_deficit`.
    """
    xa, xb = spec.loss_products
    if max(xa, xb) > FIRST_ORDER_GUARDRAIL:
        raise ValueError(
            f"eta' tau = {max(xa, xb):g} exceeds the first-order guardrail "
            f"{FIRST_ORDER_GUARDRAIL}; use state_gen.lindblad_evolve instead")
    m = spec.m
    psi = protocol_state(spec, cutoff)
    lam2 = spec.lam ** 2
    p0 = ((1 - lam2) / (1 - lam2 * math.exp(-(xa + xb)))) ** m
    decay = np.exp(-0.5 * (xa * psi.register.number_grid(a_modes(m))
                           + xb * psi.register.number_grid(b_modes(m))))
    no_jump = StateVector(psi.register, psi.amplitudes * decay, psi.tail_weight).normalize()
    branches = [TrajectoryBranch("no_jump", p0, no_jump)]
    for side, x, modes in (("A", xa, a_modes(m)), ("B", xb, b_modes(m))):
        if x == 0:
            continue
        for i, mode in enumerate(modes):
            jumped = fock.annihilate(psi, mode).normalize()
            branches.append(TrajectoryBranch("jump", spec.nbar * x, jumped, side, i))
    return branches


def branch_deficit(branches: Sequence[TrajectoryBranch]) -> float:
    """1 - sum of branch probabilities; second order in eta' tau, and may be negative."""
    return 1.0 - math.fsum(b.probability for b in branches)


Source = Union[Sequence[TrajectoryBranch], DensityMatrix, StateVector]


def purify_mixed(source: Source, j_A: int, j_B: int) -> OutcomeRecord:
    """Two-sided total-number measurement with outcomes (j_A, j_B).

    Accepts trajectory branches, a density matrix, or a pure state on a
    protocol register.  The outcome is kept iff j_A == j_B.  For branch
    input the probability is sum_b p_b ||P_A P_B psi_b||^2 and the post
    state is the projected mixture (pure when a single branch survives).
    A mixed post state above the density-matrix cap is left as None; the
    fidelity is still computed from the branches.
    """
    if isinstance(source, DensityMatrix):
        return _purify_density(source, j_A, j_B)
    if isinstance(source, StateVector):
        source = [TrajectoryBranch("no_jump", 1.0, source)]
    branches = list(source)
    reg = branches[0].state.register
    m = _spec_modes(reg)
    survivors = []
    for b in branches:
        proj = fock.total_number_project(
            fock.total_number_project(b.state, a_modes(m), j_A), b_modes(m), j_B)
        w = proj.norm ** 2
        if w > 0:
            survivors.append((b.probability * w, proj))
    prob = math.fsum(w for w, _ in survivors)
    success = j_A == j_B and prob > 0
    if not survivors:
        return OutcomeRecord(j_A, j_B, False, 0.0, 0.0, None)
    target = _target_state(m, j_A, reg.cutoff) if success else None
    if len(survivors) == 1:
        post = survivors[0][1].normalize()
        fid = target.fidelity(post) if target is not None else None
    else:
        kets = [(w / prob, s.normalize()) for w, s in survivors]
        fid = None
        if target is not None:
            fid = math.fsum(w * abs(np.vdot(target.amplitudes, s.amplitudes)) ** 2 for w, s in kets)
        post = None
        # the mixture is only materialized when it fits the density-matrix cap
        if reg.dim <= fock.MAX_DENSITY_DIM:
            post = DensityMatrix(reg, sum(w * np.outer(s.amplitudes, s.amplitudes.conj())
                                          for w, s in kets))
    bits = outcome_entanglement(j_A, m) if success else 0.0
    return OutcomeRecord(j_A, j_B, success, prob, bits, post, fid)


def _target_state(m: int, j: int, cutoff: int) -> StateVector | None:
    try:
        return maximally_entangled_state(m, j, cutoff)
    except FockError:
        return None


def _purify_density(rho: DensityMatrix, j_A: int, j_B: int) -> OutcomeRecord:
    m = _spec_modes(rho.register)
    proj = fock.project_density(rho, [a_modes(m), b_modes(m)], [j_A, j_B])
    prob = proj.trace
    if prob <= 0:
        return OutcomeRecord(j_A, j_B, False, 0.0, 0.0, None)
    post = DensityMatrix(rho.register, proj.matrix / prob)
    success = j_A == j_B
    fid = None
    if success:
        target = _target_state(m, j_A, rho.register.cutoff)
        fid = post.fidelity(target) if target is not None else None
    bits = outcome_entanglement(j_A, m) if success else 0.0
    return OutcomeRecord(j_A, j_B, success, prob, bits, post, fid)


def joint_number_distribution(source: DensityMatrix | StateVector) -> np.ndarray:
    """P(j_A, j_B) for the two-sided total-number measurement."""
    reg = source.register
    m = _spec_modes(reg)
    if isinstance(source, DensityMatrix):
        weights = np.diag(source.matrix).real
    else:
        weights = np.abs(source.amplitudes) ** 2
    size = m * reg.cutoff + 1
    ja = reg.number_grid(a_modes(m))
    jb = reg.number_grid(b_modes(m))
    return np.bincount(ja * size + jb, weights=weights, minlength=size * size).reshape(size, size)


def posterior_confirmation(source: DensityMatrix | StateVector, rng_seed=None) -> OutcomeRecord:
    """Measure side A first, then side B, and compare afterwards.

    No storage noise acts between the two measurements, so the joint
    statistics equal those of :func:`purify_mixed`.
    """
    rng = _rng(rng_seed)
    joint = joint_number_distribution(source)
    joint = joint / joint.sum()
    marginal_a = joint.sum(axis=1)
    j_A = int(rng.choice(marginal_a.size, p=marginal_a))
    conditional = joint[j_A] / marginal_a[j_A]
    j_B = int(rng.choice(conditional.size, p=conditional))
    return purify_mixed(source, j_A, j_B)


@functools.lru_cache(maxsize=64)
def loss_kraus_table(levels: int, x: float) -> np.ndarray:
    """K[l, n] = sqrt(C(n, l) (1 - t)^l t^(n - l)) with t = exp(-x); zero for l > n."""
    n = np.arange(levels)
    ell = n[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_k = (gammaln(n + 1) - gammaln(ell + 1) - gammaln(np.maximum(n - ell, 0) + 1)
                 + ell * math.log(-math.expm1(-x)) - (n - ell) * x)
    table = np.where(ell <= n, np.exp(0.5 * log_k), 0.0)
    table.setflags(write=False)
    return table


def apply_loss_jumps(state: StateVector, loss: LossModel,
                     rng: np.random.Generator) -> tuple[tuple[int, ...], StateVector]:
    """Sample the photons lost from each mode and the conditional state.

    This is an exact unraveling of the photon-loss channel: mode k loses
    l photons with Kraus operator sqrt(C(n, l)) (1 - t)^(l/2) t^((n - l)/2)
    |n - l><n|, t = exp(-eta' tau).  Modes are sampled one after another,
    which is exact because the Kraus maps of different modes commute.
    """
    reg = state.register
    m = _spec_modes(reg)
    xa, xb = loss.eta_prime_A_tau, loss.eta_prime_B_tau
    levels = reg.levels
    psi = state.tensor()
    lost = []
    for k in range(reg.mode_count):
        x = xa if k < m else xb
        if x == 0:
            lost.append(0)
            continue
        kraus = loss_kraus_table(levels, x)
        moved = np.moveaxis(psi, k, 0)
        population = (np.abs(moved) ** 2).reshape(levels, -1).sum(axis=1)
        weights = kraus ** 2 @ population
        ell = int(rng.choice(levels, p=weights / weights.sum()))
        lost.append(ell)
        shape = (-1,) + (1,) * (moved.ndim - 1)
        piece = np.zeros_like(moved)
        piece[: levels - ell] = moved[ell:] * kraus[ell, ell:].reshape(shape)
        psi = np.moveaxis(piece / math.sqrt(weights[ell]), 0, k)
    return tuple(lost), StateVector(reg, psi, state.tail_weight)


def sample_lossy_counts(spec: ProtocolSpec, rng: np.random.Generator):
    """Closed-form sampler of per-pair photon numbers after loss.

    Returns ``(n_A, n_B, lost_A, lost_B)`` arrays of length m, with the
    pair photon number geometric with ratio lambda^2 and the losses
    binomial with probabilities 1 - exp(-eta' tau).
    """
    lam2 = spec.lam ** 2
    xa, xb = spec.loss_products
    n = rng.negative_binomial(1, 1.0 - lam2, size=spec.m) if lam2 > 0 else np.zeros(spec.m, int)
    lost_a = rng.binomial(n, -math.expm1(-xa))
    lost_b = rng.binomial(n, -math.expm1(-xb))
    return n - lost_a, n - lost_b, lost_a, lost_b


def sample_lossy_totals(spec: ProtocolSpec, n: int, rng: np.random.Generator):
    """Vectorized totals for ``n`` independent runs: ``(j_A, j_B, clean)``.

    ``clean`` marks runs in which no photon was lost; only those end in |j>.
    """
    lam2 = spec.lam ** 2
    xa, xb = spec.loss_products
    if lam2 == 0:
        photons = np.zeros((n, spec.m), dtype=np.int64)
    else:
        photons = rng.negative_binomial(1, 1.0 - lam2, size=(n, spec.m))
    lost_a = rng.binomial(photons, -math.expm1(-xa))
    lost_b = rng.binomial(photons, -math.expm1(-xb))
    j_a = (photons - lost_a).sum(axis=1)
    j_b = (photons - lost_b).sum(axis=1)
    clean = (lost_a.sum(axis=1) + lost_b.sum(axis=1)) == 0
    return j_a, j_b, clean


# --- working conditions ----------------------------------------------------

def small_noise_ok(m: int, nbar: float, eta_Atau: float, eta_Btau: float,
                   eta0_over_kappac: float = 0.0) -> tuple[bool, float]:
    """Double-jump weight m^2 nbar^2 (eta_A tau + eta0/kc)(eta_B tau + eta0/kc).

    Passes when the value is below 0.1; the raw value is returned so callers
    can apply a stricter policy.
    """
    lhs = m * m * nbar * nbar * (eta_Atau + eta0_over_kappac) * (eta_Btau + eta0_over_kappac)
    return lhs < WORKING_THRESHOLD, lhs


def asymmetric_ok(m: int, nbar: float, eta0_over_kappac: float) -> tuple[bool, float]:
    """Working condition m * nbar * eta0/kc when only side B sees transmission loss.

    The transmission loss eta_B tau itself is unrestricted (it may exceed one).
    """
    lhs = m * nbar * eta0_over_kappac
    return lhs < WORKING_THRESHOLD, lhs
