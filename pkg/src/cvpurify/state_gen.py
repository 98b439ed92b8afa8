"""Entangled resource states: NOPA output, two-mode squeezing, photon loss.

Loss is parameterized by the dimensionless products eta'_A * tau and
eta'_B * tau, which remain well defined when the transmission time is zero
and only the NOPA cavity loss contributes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .fock import (
    DensityMatrix,
    FockError,
    FockRegister,
    StateVector,
    lower_axis,
)

THRESHOLD_MARGIN = 0.999
DEFAULT_TAIL_TOL = 1e-8
MAX_TAIL_WEIGHT = 1e-3
LINDBLAD_TOL = 1e-8


class ConvergenceError(RuntimeError):
    """Step-halving did not confirm the requested integration accuracy."""


@dataclass(frozen=True)
class NopaSpec:
    pump_rate_eps: float
    output_coupling_kappa_c: float
    internal_loss_eta0: float = 0.0

    def __post_init__(self):
        eps, kc, eta0 = self.pump_rate_eps, self.output_coupling_kappa_c, self.internal_loss_eta0
        if kc <= 0:
            raise ValueError("output coupling kappa_c must be positive")
        if eps < 0 or eta0 < 0:
            raise ValueError("pump rate and internal loss must be non-negative")
        if eps >= THRESHOLD_MARGIN * kc / 2:
            raise ValueError(
                f"NOPA at or above threshold: |eps| = {eps} must be below "
                f"{THRESHOLD_MARGIN} * kappa_c / 2 = {THRESHOLD_MARGIN * kc / 2}")
        if eta0 >= 0.1 * kc:
            warnings.warn(
                f"internal loss eta0 = {eta0} is not small compared with kappa_c = {kc}",
                stacklevel=2)


@dataclass(frozen=True)
class NopaOutput:
    N: float
    M: float


@dataclass(frozen=True)
class LossModel:
    """Transmission loss rates, transmission time and NOPA cavity loss.

    The total rates are eta'_a = eta_a + eta0 / (kappa_c * tau); every
    downstream formula consumes the products ``eta_prime_A_tau`` and
    ``eta_prime_B_tau``.
    """

    eta_A: float = 0.0
    eta_B: float = 0.0
    tau: float = 0.0
    eta0_over_kappac: float = 0.0

    def __post_init__(self):
        for name in ("eta_A", "eta_B", "tau", "eta0_over_kappac"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def from_products(cls, eta_A_tau: float, eta_B_tau: float,
                      eta0_over_kappac: float = 0.0) -> "LossModel":
        """Loss model on a unit time scale (tau = 1) from transmission products eta_a tau."""
        return cls(eta_A=eta_A_tau, eta_B=eta_B_tau, tau=1.0, eta0_over_kappac=eta0_over_kappac)

    @property
    def eta_prime_A_tau(self) -> float:
        return self.eta_A * self.tau + self.eta0_over_kappac

    @property
    def eta_prime_B_tau(self) -> float:
        return self.eta_B * self.tau + self.eta0_over_kappac

    @property
    def eta_prime_A(self) -> float:
        return self._rate(self.eta_A)

    @property
    def eta_prime_B(self) -> float:
        return self._rate(self.eta_B)

    def _rate(self, eta: float) -> float:
        if self.tau > 0:
            return eta + self.eta0_over_kappac / self.tau
        return math.inf if self.eta0_over_kappac > 0 else eta

    @property
    def is_lossless(self) -> bool:
        return self.eta_prime_A_tau == 0 and self.eta_prime_B_tau == 0


@dataclass(frozen=True)
class CorrelationSet:
    cross: float
    occ_A: float
    occ_B: float
    anti_A: float
    anti_B: float

    def __post_init__(self):
        if abs(self.anti_A - self.occ_A - 1) > 1e-10 or abs(self.anti_B - self.occ_B - 1) > 1e-10:
            raise ValueError("anti-normal moments must exceed normal ones by exactly 1")

    @classmethod
    def from_moments(cls, cross: float, occ_A: float, occ_B: float) -> "CorrelationSet":
        return cls(cross, occ_A, occ_B, occ_A + 1.0, occ_B + 1.0)

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.cross, self.occ_A, self.occ_B, self.anti_A, self.anti_B)


def nopa_output(spec: NopaSpec) -> NopaOutput:
    """Photon-number and cross-correlation parameters of the NOPA output.

    With internal loss the total cavity damping kappa_c + eta0 replaces
    kappa_c in both closed forms.
    """
    eps = spec.pump_rate_eps
    k = spec.output_coupling_kappa_c + spec.internal_loss_eta0
    denom = (k * k / 4 - eps * eps) ** 2
    N = eps * eps * k * k / denom
    M = eps * k * (k * k / 4 + eps * eps) / denom
    return NopaOutput(N, M)


def squeeze_from_N(N: float) -> tuple[float, float]:
    """Return (r, lambda) with sinh(r)^2 = N and lambda = tanh(r)."""
    if N < 0:
        raise ValueError("N must be non-negative")
    r = math.asinh(math.sqrt(N))
    return r, math.sqrt(N / (N + 1.0))


def tmss_tail_weight(r: float, cutoff: int) -> float:
    """Probability beyond ``cutoff`` in the two-mode squeezed vacuum."""
    return math.tanh(r) ** (2 * (cutoff + 1))


def default_cutoff(r: float, tol: float = DEFAULT_TAIL_TOL) -> int:
    """Smallest cutoff whose discarded two-mode squeezed tail is below ``tol``."""
    lam2 = math.tanh(r) ** 2
    if lam2 == 0.0:
        return 1
    c = max(1, math.ceil(math.log(tol) / math.log(lam2)) - 1)
    while lam2 ** (c + 1) >= tol:
        c += 1
    while c > 1 and lam2 ** c < tol:
        c -= 1
    return c


def two_mode_squeezed(r: float, cutoff: int | None = None, *,
                      max_tail: float = MAX_TAIL_WEIGHT) -> StateVector:
    """Truncated two-mode squeezed vacuum on modes (A, B).

    Amplitudes are proportional to tanh(r)**n on |n, n>; the state is
    renormalized after truncation and the discarded weight is stored in
    ``tail_weight``.  Pass ``max_tail=1.0`` to accept any truncation.
    """
    if r < 0:
        raise ValueError("squeezing parameter r must be non-negative")
    if cutoff is None:
        cutoff = default_cutoff(r)
    tail = tmss_tail_weight(r, cutoff)
    if tail > max_tail:
        raise FockError(
            f"cutoff {cutoff} discards weight {tail:.3g} > {max_tail:g}; raise the cutoff")
    reg = FockRegister(2, cutoff)
    lam = math.tanh(r)
    n = np.arange(cutoff + 1)
    coeffs = lam ** n
    amps = np.zeros((cutoff + 1, cutoff + 1), dtype=np.complex128)
    amps[n, n] = coeffs / np.linalg.norm(coeffs)
    return StateVector(reg, amps, tail)


def fill_transient(target: NopaOutput, kappa: float, t: float) -> CorrelationSet:
    """Cavity correlations a time t after the NOPA output is switched on."""
    if kappa <= 0 or t < 0:
        raise ValueError("require kappa > 0 and t >= 0")
    fill = -math.expm1(-kappa * t)
    return CorrelationSet.from_moments(target.M * fill, target.N * fill, target.N * fill)


def lossy_steady_correlations(N: float, loss: LossModel) -> CorrelationSet:
    xa, xb = loss.eta_prime_A_tau, loss.eta_prime_B_tau
    cross = math.sqrt(N * (N + 1.0)) * math.exp(-(xa + xb) / 2)
    return CorrelationSet.from_moments(cross, N * math.exp(-xa), N * math.exp(-xb))


def _reachable_entries(rho0: np.ndarray, register: FockRegister) -> np.ndarray:
    """Flat indices of density-matrix entries the loss dynamics can populate.

    Photon loss conserves the row-minus-column occupation of every mode, so
    only entries sharing a difference vector with a nonzero initial entry
    ever become nonzero.
    """
    c, n = register.cutoff, register.mode_count
    occ = np.array(np.unravel_index(np.arange(register.dim), register.shape))
    code = np.zeros((register.dim, register.dim), dtype=np.int64)
    for k in range(n):
        code = code * (2 * c + 1) + (occ[k][:, None] - occ[k][None, :] + c)
    present = np.unique(code[rho0 != 0])
    return np.flatnonzero(np.isin(code, present))


def _loss_superoperator(register: FockRegister, rates: Sequence[float],
                        entries: np.ndarray) -> sparse.csr_matrix:
    """Vectorized photon-loss generator restricted to ``entries``."""
    dim, levels, n = register.dim, register.levels, register.mode_count
    rows, cols = np.divmod(entries, dim)
    occ_r = np.array(np.unravel_index(rows, register.shape))
    occ_c = np.array(np.unravel_index(cols, register.shape))
    position = np.full(dim * dim, -1, dtype=np.int64)
    position[entries] = np.arange(entries.size)

    diag = np.zeros(entries.size)
    data, ri, ci = [], [], []
    for k, g in enumerate(rates):
        if g <= 0:
            continue
        diag -= 0.5 * g * (occ_r[k] + occ_c[k])
        ok = (occ_r[k] < levels - 1) & (occ_c[k] < levels - 1)
        stride = levels ** (n - 1 - k)
        src = (rows[ok] + stride) * dim + (cols[ok] + stride)
        data.append(g * np.sqrt((occ_r[k][ok] + 1.0) * (occ_c[k][ok] + 1.0)))
        ri.append(np.flatnonzero(ok))
        ci.append(position[src])
    size = entries.size
    data.append(diag)
    ri.append(np.arange(size))
    ci.append(np.arange(size))
    return sparse.csr_matrix(
        (np.concatenate(data), (np.concatenate(ri), np.concatenate(ci))), shape=(size, size))


def _rk4(generator: sparse.csr_matrix, v: np.ndarray, steps: int) -> np.ndarray:
    h = 1.0 / steps
    for _ in range(steps):
        k1 = generator @ v
        k2 = generator @ (v + 0.5 * h * k1)
        k3 = generator @ (v + 0.5 * h * k2)
        k4 = generator @ (v + h * k3)
        v = v + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return v


def trace_norm(mat: np.ndarray) -> float:
    """Trace norm of a Hermitian matrix."""
    herm = 0.5 * (mat + mat.conj().T)
    return float(np.sum(np.abs(np.linalg.eigvalsh(herm))))


def _diagonal_blocks(entries: np.ndarray, dim: int) -> list[np.ndarray]:
    """Basis-index groups on which matrices supported on ``entries`` are block diagonal."""
    rows, cols = np.divmod(entries, dim)
    graph = sparse.coo_matrix((np.ones(entries.size), (rows, cols)), shape=(dim, dim))
    _, labels = csgraph.connected_components(graph, directed=False)
    order = np.argsort(labels, kind="stable")
    splits = np.flatnonzero(np.diff(labels[order])) + 1
    return np.split(order, splits)


def _block_trace_norm(mat: np.ndarray, blocks: list[np.ndarray]) -> float:
    return sum(trace_norm(mat[np.ix_(b, b)]) for b in blocks if b.size)


def lindblad_evolve(
    rho0: DensityMatrix,
    loss: LossModel,
    tau: float | None = None,
    steps: int | None = None,
    *,
    a_modes: Sequence[int] | None = None,
    b_modes: Sequence[int] | None = None,
    tol: float = LINDBLAD_TOL,
    max_steps: int = 4096,
) -> DensityMatrix:
    """Integrate the photon-loss master equation with classical RK4.

    The generator is built as a sparse superoperator on the vectorized
    density matrix, restricted to the entries the dynamics can reach.

    A modes decay at eta'_A and B modes at eta'_B; by default the first
    half of the register is side A and the second half side B.  ``tau``
    defaults to the loss model's transmission time (the full loss).

    Every run is checked by step halving: the solution with ``steps`` and
    with ``2 * steps`` must agree within ``tol`` in trace norm, and the
    finer one is returned.  With ``steps=None`` the step count is doubled
    from 8 until the check passes.
    """
    if steps is not None and (int(steps) != steps or steps <= 0):
        raise ValueError("steps must be a positive integer")
    reg = rho0.register
    n_modes = reg.mode_count
    if a_modes is None and b_modes is None:
        if n_modes % 2:
            raise FockError("odd mode count: pass a_modes/b_modes explicitly")
        a_modes = range(n_modes // 2)
        b_modes = range(n_modes // 2, n_modes)
    a_modes = reg.check_modes(a_modes) if a_modes else ()
    b_modes = reg.check_modes(b_modes) if b_modes else ()
    if set(a_modes) & set(b_modes):
        raise FockError("A and B mode sets overlap")

    xa, xb = loss.eta_prime_A_tau, loss.eta_prime_B_tau
    if tau is not None:
        if tau < 0:
            raise ValueError("tau must be non-negative")
        if loss.tau > 0:
            xa, xb = xa * tau / loss.tau, xb * tau / loss.tau
        elif tau != 0:
            raise ValueError("loss model has tau = 0; omit tau to apply the full loss")
    rates = [0.0] * n_modes
    for k in a_modes:
        rates[k] = xa
    for k in b_modes:
        rates[k] = xb
    if not any(rates):
        return rho0

    dim = reg.dim
    entries = _reachable_entries(rho0.matrix, reg)
    gen = _loss_superoperator(reg, rates, entries)
    blocks = _diagonal_blocks(entries, dim)
    start = rho0.matrix.reshape(-1)[entries]

    def solve(s):
        full = np.zeros(dim * dim, dtype=np.complex128)
        full[entries] = _rk4(gen, start, s)
        return full.reshape(dim, dim)

    # keep h * (largest decay rate) near one before refining
    stiff = sum(rates) * reg.cutoff
    s = max(8, 1 << math.ceil(math.log2(max(stiff, 1.0)))) if steps is None else int(steps)
    coarse = solve(s)
    while True:
        fine = solve(2 * s)
        err = _block_trace_norm(coarse - fine, blocks)
        if err < tol:
            return DensityMatrix(reg, 0.5 * (fine + fine.conj().T))
        if steps is not None or 2 * s >= max_steps:
            raise ConvergenceError(
                f"step halving at {s} -> {2 * s} steps changed the state by {err:.3g} "
                f"(trace norm), above {tol:g}")
        s, coarse = 2 * s, fine


def correlations_of(rho: DensityMatrix, mode_a: int = 0, mode_b: int = 1) -> CorrelationSet:
    """<a_A a_B>, <n_A>, <n_B> and the anti-normal moments of a state.

    Anti-normal moments use the bosonic commutator, <a a^dag> = <n> + 1,
    since the truncated a a^dag is wrong on the cutoff level.
    """
    reg = rho.register
    a = reg.check_mode(mode_a)
    b = reg.check_mode(mode_b)
    if a == b:
        raise FockError("correlations need two distinct modes")
    t = rho.tensor()
    lowered = lower_axis(lower_axis(t, a), b).reshape(reg.dim, reg.dim)
    cross = complex(np.trace(lowered))
    return CorrelationSet.from_moments(cross.real, rho.mean_number(a), rho.mean_number(b))
