"""Cascaded ring-cavity QND readout of a total photon number.

The ring cavities are adiabatically eliminated: the measured quadrature is
an affine function of n1 + n2 plus vacuum noise and a few systematic bias
terms.  Quadratures use X = (b + b^dag)/sqrt(2), so the vacuum variance is
1/2 and the integrated statistic has standard deviation 1/sqrt(2T).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import norm

from . import fock
from .fock import StateVector

ADIABATIC_FACTOR = 20.0
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class QndParams:
    """Experimental parameters; rates in rad/s, times in s.

    ``gamma1, gamma2, chi1, chi2`` default to ``gamma`` and ``chi`` (balanced
    cavities).  ``n1, n2`` are the mean photon numbers in the two cavities.
    """

    gamma: float
    chi: float
    g_mag: float
    T: float
    kappa: float = 0.0
    delta_t: float = 0.0
    beta1: float = 0.0
    beta2: float = 0.0
    mu: float = 1.0
    nu: float = 1.0
    chi_i: float = 0.0
    gamma1: float | None = None
    gamma2: float | None = None
    chi1: float | None = None
    chi2: float | None = None
    n1: float = 0.0
    n2: float = 0.0

    def __post_init__(self):
        for name in ("gamma", "chi", "g_mag", "T"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("kappa", "delta_t", "beta1", "beta2", "chi_i", "n1", "n2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 <= self.mu <= 1:
            raise ValueError("coupling efficiency mu must lie in [0, 1]")
        if not 0 < self.nu <= 1:
            raise ValueError("detector efficiency nu must lie in (0, 1]")
        for name in ("gamma1", "gamma2", "chi1", "chi2"):
            value = getattr(self, name)
            if value is None:
                object.__setattr__(self, name, self.gamma if name.startswith("gamma") else self.chi)
            elif not value > 0:
                raise ValueError(f"{name} must be positive")
        if not self.adiabatic_ok:
            warnings.warn(
                f"gamma = {self.gamma:.3g} is not >> chi <n> "
                f"(need gamma > {ADIABATIC_FACTOR:g} chi max<n>); "
                "the eliminated-cavity model may be inaccurate", stacklevel=2)

    @classmethod
    def worked_example(cls, **overrides) -> "QndParams":
        """gamma/2pi = 100 MHz, chi/2pi = 0.2 MHz, |g| = 50, kappa/2pi = 4 MHz,
        chi_i = 0.1 chi, <n1> = <n2> = 1.4, T = 8 ns, ideal elsewhere."""
        base = dict(gamma=TWO_PI * 100e6, chi=TWO_PI * 0.2e6, g_mag=50.0, T=8e-9,
                    kappa=TWO_PI * 4e6, chi_i=0.1 * TWO_PI * 0.2e6, n1=1.4, n2=1.4)
        base.update(overrides)
        return cls(**base)

    @property
    def n_max(self) -> float:
        return max(self.n1, self.n2)

    @property
    def adiabatic_ok(self) -> bool:
        return self.gamma > ADIABATIC_FACTOR * self.chi * self.n_max


@dataclass(frozen=True)
class HomodyneRecord:
    x_T: float
    inferred_j: int
    true_j: int

    @property
    def misidentified(self) -> bool:
        return self.inferred_j != self.true_j


@dataclass(frozen=True)
class BudgetRow:
    id: str
    lhs: float
    rhs: float
    passed: bool
    margin: float


@dataclass(frozen=True)
class BudgetReport:
    rows: tuple[BudgetRow, ...] = field(default_factory=tuple)

    @property
    def overall(self) -> bool:
        return all(row.passed for row in self.rows)

    def row(self, requirement_id: str) -> BudgetRow:
        for r in self.rows:
            if r.id == requirement_id:
                return r
        raise KeyError(requirement_id)

    def render(self) -> str:
        lines = ["id,lhs,rhs,pass,margin"]
        for r in self.rows:
            lines.append(f"{r.id},{r.lhs:.17g},{r.rhs:.17g},"
                         f"{'true' if r.passed else 'false'},{r.margin:.17g}")
        lines.append(f"overall,,,{'true' if self.overall else 'false'},")
        return "\n".join(lines) + "\n"


def signal_gain(params: QndParams) -> float:
    """Per-photon displacement of the measured quadrature, sqrt(nu) 4 sqrt(2) |g| chi / sqrt(gamma)."""
    return math.sqrt(params.nu) * 4.0 * math.sqrt(2.0) * params.g_mag * params.chi / math.sqrt(params.gamma)


def noise_sigma(params: QndParams) -> float:
    return 1.0 / math.sqrt(2.0 * params.T)


def distinguishability(params: QndParams) -> float:
    """delta n = sqrt(gamma) / (8 sqrt(nu) |g| chi sqrt(T)), i.e. noise sigma over gain."""
    return math.sqrt(params.gamma) / (8.0 * math.sqrt(params.nu) * params.g_mag
                                      * params.chi * math.sqrt(params.T))


def misidentification_probability(params: QndParams, j: int = 1) -> float:
    """Probability that nearest-level rounding returns the wrong j, without bias terms."""
    half_gap = 0.5 / distinguishability(params)
    tail = norm.sf(half_gap)
    return tail if j == 0 else 2.0 * tail


def time_window(params: QndParams) -> tuple[float, float]:
    """(T_min, T_max); T_max is inf when kappa or <n> vanishes."""
    t_min = params.gamma / (64.0 * params.nu * params.g_mag ** 2 * params.chi ** 2)
    denom = params.kappa * params.n_max
    return t_min, (math.inf if denom == 0 else 1.0 / denom)


def window_nonempty(params: QndParams) -> bool:
    t_min, t_max = time_window(params)
    return t_min < t_max


def phase_drift(params: QndParams) -> float:
    """delta = sqrt(delta_t T), the phase spread at the end of the window."""
    return math.sqrt(params.delta_t * params.T)


def bias(params: QndParams) -> float:
    """Systematic offset of the measured quadrature from the three bias terms."""
    g = params.g_mag
    phase = -math.sqrt(2.0) * g * phase_drift(params) * math.sqrt(params.gamma)
    imbalance = (4.0 * math.sqrt(2.0) * g * math.sqrt(params.gamma1)
                 * (params.chi2 / params.gamma2 - params.chi1 / params.gamma1) * params.n2)
    leak = (4.0 * math.sqrt(2.0) * g * params.chi / math.sqrt(params.gamma)
            * (params.beta2 ** 2 - params.beta1 ** 2) / params.gamma ** 2 * params.n2)
    return math.sqrt(params.nu) * (phase + imbalance + leak)


def infer_level(x_T: float, gain: float) -> int:
    return max(0, int(np.rint(x_T / gain)))


def homodyne_sample(params: QndParams, j_true: int, rng: np.random.Generator) -> HomodyneRecord:
    gain = signal_gain(params)
    x = gain * j_true + bias(params) + noise_sigma(params) * rng.standard_normal()
    return HomodyneRecord(float(x), infer_level(x, gain), int(j_true))


def homodyne_samples(params: QndParams, j_true: np.ndarray | int, n: int | None,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized version of :func:`homodyne_sample`; returns (x_T, inferred_j)."""
    j = np.asarray(j_true) if n is None else np.full(n, j_true)
    gain = signal_gain(params)
    x = gain * j + bias(params) + noise_sigma(params) * rng.standard_normal(j.shape)
    return x, np.maximum(0, np.rint(x / gain)).astype(np.int64)


def measure_total_number(state: StateVector, modes: Iterable[int], params: QndParams | None,
                         rng: np.random.Generator,
                         noise_rng: np.random.Generator | None = None
                         ) -> tuple[HomodyneRecord, StateVector]:
    """Projective total-number measurement with a noisy classical record.

    The true j is drawn exactly as :func:`fock.sample_total_number` draws it
    from ``rng``; the homodyne noise comes from ``noise_rng`` (default:
    ``rng``).  With ``params=None`` the readout is ideal.  The post state is
    always the projection onto the true j.
    """
    modes = tuple(modes)
    j = fock.sample_total_number(state, modes, rng)
    _, post = fock.total_number_projector_apply(state, modes, j)
    if params is None:
        return HomodyneRecord(float(j), j, j), post
    return homodyne_sample(params, j, noise_rng if noise_rng is not None else rng), post


def _row(rid: str, lhs: float, rhs: float) -> BudgetRow:
    margin = math.inf if lhs == 0 else rhs / lhs
    return BudgetRow(rid, float(lhs), float(rhs), bool(lhs < rhs), float(margin))


def budget_report(params: QndParams) -> BudgetReport:
    """Evaluate every imperfection requirement as a strict ``lhs < rhs`` row.

    ``T_window`` folds both ends of the measuring-time window into
    max(T_min / T, T / T_max) < 1, with T_min taken at unit detector
    efficiency; the detector row carries the nu correction.
    """
    p = params
    g2, chi, gamma = p.g_mag ** 2, p.chi, p.gamma
    t_min = gamma / (64.0 * g2 * chi ** 2)
    _, t_max = time_window(p)
    inv = lambda v: math.inf if v == 0 else 1.0 / v  # noqa: E731
    rows = (
        _row("T_window", max(t_min / p.T, p.T / t_max), 1.0),
        _row("phase_delta", phase_drift(p), 4.0 * chi / gamma),
        _row("phase_rate", p.delta_t, 1024.0 * g2 * chi ** 4 / gamma ** 3),
        _row("imbalance", abs(p.chi2 * p.gamma1 / (p.chi1 * p.gamma2) - 1.0), inv(p.n2)),
        _row("leak_strong", max(p.beta1 * p.n1 ** 2, p.beta2 * p.n2 ** 2), gamma),
        _row("leak_weak", abs(p.beta2 ** 2 - p.beta1 ** 2), gamma ** 2 * inv(p.n2)),
        _row("coupling", 1.0 - p.mu, inv(p.n1) ** 2),
        _row("detector", t_min / p.T, p.nu),
        _row("two_photon", p.chi_i, chi * inv(p.n_max)),
    )
    return BudgetReport(rows)


def leak_information_ok(params: QndParams, cavity: int | None = None) -> tuple[bool, float, float]:
    """Is the photon-number information in the leaked light below vacuum noise?

    Checks 4 sqrt(2) |g| chi <n_a> sqrt(beta_a) / gamma < 1/sqrt(2T) for
    cavity 1 or 2, or for the worse of the two when ``cavity`` is None.  At
    T equal to the lower window edge this is exactly beta_a < gamma / <n_a>^2.
    """
    p = params
    pairs = {1: (p.n1, p.beta1), 2: (p.n2, p.beta2)}
    chosen = [pairs[cavity]] if cavity is not None else list(pairs.values())
    coeff = 4.0 * math.sqrt(2.0) * p.g_mag * p.chi / p.gamma
    lhs = max(coeff * n * math.sqrt(beta) for n, beta in chosen)
    rhs = noise_sigma(p)
    return lhs < rhs, lhs, rhs


def self_phase_modulate(state: StateVector, chi_s_prime: float, t: float,
                        modes: Sequence[int]) -> StateVector:
    """Apply exp(i chi'_s t sum_k n_k^2) over ``modes`` (a diagonal unitary)."""
    reg = state.register
    modes = reg.check_modes(modes)
    grid = np.zeros(reg.dim, dtype=np.int64)
    for k in modes:
        grid += reg.number_grid([k]) ** 2
    phase = np.exp(1j * chi_s_prime * t * grid)
    return StateVector(reg, state.amplitudes * phase, state.tail_weight)


def eit_kerr(g13: float, g24: float, omega_c: float, delta_42: float,
             gamma_42: float, n_atom: float) -> tuple[float, float, bool]:
    """Cross-Kerr coefficient of a four-level EIT medium.

    Returns (chi, chi_i, adiabatic_ok) with chi = 3 |g13|^2 |g24|^2 n_atom
    / (Omega_c^2 Delta_42), chi_i = chi gamma_42 / Delta_42 and the flag
    |g13|^2 n_atom / Omega_c^2 < 1.
    """
    if not delta_42 > 0 or not omega_c > 0:
        raise ValueError("delta_42 and omega_c must be positive")
    if n_atom < 0 or gamma_42 < 0:
        raise ValueError("n_atom and gamma_42 must be non-negative")
    density = abs(g13) ** 2 * n_atom / omega_c ** 2
    chi = 3.0 * density * abs(g24) ** 2 / delta_42
    return chi, chi * gamma_42 / delta_42, density < 1.0
