"""Thermal Gaussian (beam-splitter) channel on a truncated Fock space.

The channel mixes the system mode with a thermal environment mode of mean
occupation N on a beam splitter of transmittance 1 - ε and traces the
environment out:

    a  →  sqrt(1-ε) a + sqrt(ε) b,     <b† b> = N.

This module provides the exact Kraus representation of that map (one Kraus
operator per environment Fock transition k → q), a fast application routine
that never materializes the operators, the first-order (small-ε) expansion,
and scalar helpers for channel-loss bookkeeping in absorptive waveguides.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import ceil, log

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

from .hilbert import DensityMatrix, FockSpace, thermal_occupations

__all__ = [
    "ChannelParams",
    "ThermalGaussianMap",
    "KrausSet",
    "channel_loss",
    "combine_errors",
    "error_budget",
    "absorption_noise_occupation",
    "kraus_coefficient",
    "build_kraus_set",
    "apply_to_matrix",
    "apply_thermal_map",
    "first_order_map",
    "qubit_block_channel",
]


def channel_loss(length: float, absorption_length: float) -> float:
    """Propagation loss ε_ch = 1 - e^(-L/L_ab) of a waveguide of length L."""
    if length < 0 or absorption_length <= 0:
        raise ValueError("need length >= 0 and absorption_length > 0")
    return float(-np.expm1(-length / absorption_length))


def combine_errors(eps_p: float, eps_ch: float) -> float:
    """Serial composition of two loss errors: ε = ε_ch + ε_p - ε_ch ε_p."""
    for e in (eps_p, eps_ch):
        if not 0.0 <= e <= 1.0:
            raise ValueError(f"error probability {e} outside [0, 1]")
    return eps_ch + eps_p - eps_ch * eps_p

def error_budget(eps: float, gamma_min: float, gamma_c: float, t_enc: float) -> float:
    """Total error ε_total = ε + γ_min/γ_c + γ_min t_enc.

    Adds to the transfer error ε the finite-cooperativity leakage of the slowest
    node coupling γ_min against the intrinsic linewidth γ_c, and the decoherence
    accumulated over the encoding/decoding time t_enc.
    """
    if gamma_min < 0 or t_enc < 0:
        raise ValueError("rates and times must be non-negative")
    leak = 0.0
    if gamma_min > 0:
        if gamma_c <= 0:
            raise ValueError("gamma_c must be positive when gamma_min > 0")
        leak = gamma_min / gamma_c
    return eps + leak + gamma_min * t_enc


@dataclass(frozen=True)
class ChannelParams:
    """Physical parameters of an absorptive transmission line.

    ``n_mat``, when given, samples the material occupation N_mat(z) uniformly
    on [0, length] (including both endpoints) and feeds the weighted average
    that an absorbed-and-reemitted photon picks up on its way to the output.
    """

    length: float
    absorption_length: float
    n_ch: float = 0.0
    n_in: float | None = None
    n_mat: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.length < 0 or self.absorption_length <= 0:
            raise ValueError("need length >= 0 and absorption_length > 0")
        if self.n_ch < 0:
            raise ValueError("channel occupation must be non-negative")
        if self.n_mat is not None:
            arr = np.asarray(self.n_mat, dtype=float)
            if arr.ndim != 1 or arr.size < 2:
                raise ValueError("n_mat must sample N_mat(z) at >= 2 points on [0, length]")
            object.__setattr__(self, "n_mat", arr)

    @property
    def eps_ch(self) -> float:
        return channel_loss(self.length, self.absorption_length)


def absorption_noise_occupation(params: ChannelParams) -> float:
    """Effective occupation seen at the output due to distributed absorption.

    Weighted average (1/(ε_ch L_ab)) ∫_0^L e^(-(L-z)/L_ab) N_mat(z) dz: noise
    injected at position z is attenuated over the remaining length L - z, so
    material near the output end dominates. A uniform profile returns its own
    value exactly (the weight is normalized).
    """
    if params.n_mat is None:
        raise ValueError("ChannelParams.n_mat profile is required")
    if params.length == 0:
        raise ValueError("zero-length channel has no absorption noise")
    z = np.linspace(0.0, params.length, params.n_mat.size)
    weight = np.exp(-(params.length - z) / params.absorption_length)
    integral = simpson(y=weight * params.n_mat, x=z)
    return float(integral / (params.eps_ch * params.absorption_length))


@dataclass(frozen=True)
class ThermalGaussianMap:
    """Loss ε into (and gain from) a thermal environment of occupation n_ch."""

    eps: float
    n_ch: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError(f"mixing parameter eps={self.eps} outside [0, 1]")
        if self.n_ch < 0:
            raise ValueError("environment occupation must be non-negative")

    @classmethod
    def from_errors(cls, eps_p: float, eps_ch: float, n_ch: float) -> "ThermalGaussianMap":
        return cls(combine_errors(eps_p, eps_ch), n_ch)


@lru_cache(maxsize=2048)
def _sector_rotation(m_total: int, eps: float) -> np.ndarray:
    """Beam-splitter amplitudes V[r, n] = <r, m-r| B |n, m-n> on one total-photon sector.

    B mixes the modes with transmittance 1 - ε. The columns of V are the
    eigenvectors of the rotated number operator B n̂_a B†, whose matrix on the
    sector basis |r, m-r> is symmetric tridiagonal with diagonal
    (1-ε)r + ε(m-r), off-diagonal -sqrt(ε(1-ε)(r+1)(m-r)), and exactly the
    integer spectrum 0..m. LAPACK solves this to machine precision for every
    entry, unlike forward recurrences in n or k, whose roundoff grows
    exponentially through the oscillatory region. The free eigenvector signs
    are fixed by the closed-form endpoints sign(V[0, n]) = (-1)^n, V[m, n] > 0,
    anchoring on whichever endpoint has the larger analytic magnitude.
    """
    if m_total == 0:
        return np.ones((1, 1))
    if eps == 0.0:
        return np.eye(m_total + 1)
    if eps == 1.0:
        v = np.zeros((m_total + 1, m_total + 1))
        n = np.arange(m_total + 1)
        v[m_total - n, n] = (-1.0) ** (n % 2)
        return v
    r = np.arange(m_total + 1)
    diag = (1.0 - eps) * r + eps * (m_total - r)
    off = -np.sqrt(eps * (1.0 - eps) * (r[:-1] + 1.0) * (m_total - r[:-1]))
    _, v = eigh_tridiagonal(diag, off)
    n = np.arange(m_total + 1)
    logc = 0.5 * (gammaln(m_total + 1) - gammaln(n + 1) - gammaln(m_total - n + 1))
    log_bottom = 0.5 * (n * np.log(eps) + (m_total - n) * np.log1p(-eps)) + logc
    log_top = 0.5 * (n * np.log1p(-eps) + (m_total - n) * np.log(eps)) + logc
    flips = np.ones(m_total + 1)
    for col in range(m_total + 1):
        if log_bottom[col] >= log_top[col]:
            anchor, target = v[0, col], (-1.0) ** (col % 2)
        else:
            anchor, target = v[-1, col], 1.0
        s = np.sign(anchor)
        if s != 0.0:
            flips[col] = target * s
    v = v * flips
    v.setflags(write=False)
    return v


def _coeff_table(k: int, eps: float, n_max: int, r_max: int) -> np.ndarray:
    """Table F[n, r] = 𝒦(r, n, k) assembled from the per-sector eigenbases."""
    f = np.zeros((n_max + 1, r_max + 1))
    for n in range(n_max + 1):
        v = _sector_rotation(n + k, eps)
        hi = min(r_max, n + k)
        f[n, : hi + 1] = v[: hi + 1, n]
    return f


def kraus_coefficient(r: int, n: int, k: int, eps: float) -> float:
    """Amplitude 𝒦(r, n, k) for n system photons + k environment photons → r system photons.

    Equals the alternating sum
    sqrt(r!(n+k-r)!/(n!k!)) Σ_i (-1)^(n-i) C(n,i) C(k,r-i) ε^((n+r)/2-i) (1-ε)^((k-r)/2+i),
    evaluated through the sector eigenproblem instead (the sum cancels
    catastrophically in floating point at large k). Exactly zero for
    r > n + k or any negative index.
    """
    if min(r, n, k) < 0:
        return 0.0
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    if r > n + k:
        return 0.0
    return float(_sector_rotation(n + k, eps)[r, n])


def _k_max(n_ch: float, tail_tol: float) -> int:
    """Smallest K with environment-weight tail Σ_{k>K} p_k < tail_tol."""
    if n_ch == 0.0:
        return 0
    return max(0, ceil(log(tail_tol) / log(n_ch / (n_ch + 1.0))) - 1)


@dataclass(frozen=True)
class KrausSet:
    """Exact Kraus operators K_(k,q) = sqrt(p_k) Σ_r 𝒦(r, r+q-k, k) |r><r+q-k|.

    One operator per environment transition (k photons in, q photons out),
    with thermal weights p_k truncated at ``k_max``. The operators are
    rectangular: inputs live on ``space``, outputs on ``space`` enlarged by
    k_max levels, so that gain never spills past the output truncation and
    Σ K†K equals the identity on the input space up to the reported defect
    (the discarded environment-weight tail).
    """

    space: FockSpace
    eps: float
    n_ch: float
    k_max: int
    operators: list = field(repr=False)
    labels: list = field(repr=False)

    @property
    def output_dim(self) -> int:
        return self.space.dim + self.k_max

    def completeness(self) -> np.ndarray:
        """Σ K† K over all retained operators (acts on the input space)."""
        dim = self.space.dim
        total = np.zeros((dim, dim))
        for op in self.operators:
            total += op.T @ op
        return total

    def defect(self, levels: int | None = None) -> float:
        """Spectral-norm deviation of Σ K† K from identity on the first ``levels`` levels."""
        levels = self.space.dim if levels is None else levels
        block = self.completeness()[:levels, :levels] - np.eye(levels)
        return float(np.linalg.norm(block, 2))


def build_kraus_set(chmap: ThermalGaussianMap, space: FockSpace, tail_tol: float = 1e-8) -> KrausSet:
    """Materialize the exact Kraus operators of the thermal channel on ``space``."""
    dim = space.dim
    kmax = _k_max(chmap.n_ch, tail_tol)
    out_dim = dim + kmax
    pk = _thermal_weights_raw(chmap.n_ch, kmax)
    ops, labels = [], []
    for k in range(kmax + 1):
        table = _coeff_table(k, chmap.eps, dim - 1, out_dim - 1)
        root = np.sqrt(pk[k])
        for q in range(0, k + dim):
            m = np.zeros((out_dim, dim))
            r_lo = max(0, k - q)
            r_hi = min(out_dim - 1, dim - 1 + k - q)  # keep n = r + q - k < dim
            if r_hi < r_lo:
                continue
            r = np.arange(r_lo, r_hi + 1)
            m[r, r + q - k] = root * table[r + q - k, r]
            if np.any(m):
                ops.append(m)
                labels.append((k, q))
    return KrausSet(space=space, eps=chmap.eps, n_ch=chmap.n_ch, k_max=kmax, operators=ops, labels=labels)


def _thermal_weights_raw(n_ch: float, k_max: int) -> np.ndarray:
    """Unnormalized thermal weights p_k = N^k/(N+1)^(k+1) for k = 0..k_max."""
    if n_ch == 0.0:
        return np.array([1.0])
    k = np.arange(k_max + 1)
    return np.exp(k * np.log(n_ch / (n_ch + 1.0))) / (n_ch + 1.0)


def apply_to_matrix(m: np.ndarray, chmap: ThermalGaussianMap, tail_tol: float = 1e-10) -> np.ndarray:
    """Apply the exact thermal channel to an arbitrary (not necessarily
    Hermitian) matrix in the Fock basis, truncating outputs to the input
    dimension.

    Uses the selection rule n - r = n' - r' (environment photon-number
    bookkeeping forces equal net exchange on both sides of the dyad), so the
    sum collapses to one rank-one update per (k, net-exchange) pair and the
    Kraus operators are never materialized.
    """
    m = np.asarray(m, dtype=complex)
    dim = m.shape[0]
    if m.shape != (dim, dim):
        raise ValueError("input matrix must be square")
    kmax = _k_max(chmap.n_ch, tail_tol)
    pk = _thermal_weights_raw(chmap.n_ch, kmax)
    out = np.zeros_like(m)
    for k in range(kmax + 1):
        table = _coeff_table(k, chmap.eps, dim - 1, dim - 1)
        for d in range(-k, dim):
            # output level r pairs with input level n = r + d
            r_lo = max(0, -d)
            r_hi = min(dim - 1, dim - 1 - d)
            if r_hi < r_lo:
                continue
            r = np.arange(r_lo, r_hi + 1)
            v = table[r + d, r]
            out[r_lo : r_hi + 1, r_lo : r_hi + 1] += (
                pk[k] * np.outer(v, v) * m[r_lo + d : r_hi + 1 + d, r_lo + d : r_hi + 1 + d]
            )
    return out


def apply_thermal_map(
    rho: DensityMatrix, chmap: ThermalGaussianMap, tail_tol: float = 1e-10
) -> DensityMatrix:
    """Exact thermal-channel output state.

    Raises ValueError when the input leaks past the truncation (output trace
    deficit above 1e-6): enlarge the space or lower the occupation instead of
    silently renormalizing.
    """
    out = apply_to_matrix(rho.matrix, chmap, tail_tol=tail_tol)
    deficit = abs(1.0 - out.trace().real)
    if deficit > 1e-6:
        raise ValueError(
            f"state not supported well inside the truncation: channel output "
            f"loses trace {deficit:.3e}"
        )
    return DensityMatrix(out, trace_tol=max(1e-9, 2.0 * deficit))


def first_order_map(rho: DensityMatrix, eps: float, n_ch: float) -> DensityMatrix:
    """First-order (small ε) expansion of the thermal channel.

    Kraus triple E₊ = sqrt(ε N) a†, E₋ = sqrt(ε (N+1)) a,
    E₀ = 1 - ε[(N + 1/2) n̂ + N/2]. The output trace falls short of 1 at
    O(ε²); the returned state carries a correspondingly loosened trace
    tolerance so the deficit stays observable.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    if n_ch < 0:
        raise ValueError("occupation must be non-negative")
    dim = rho.dim
    n = np.arange(dim)
    m = rho.matrix
    # E0 ρ E0† for diagonal E0.
    e0 = 1.0 - eps * ((n_ch + 0.5) * n + 0.5 * n_ch)
    out = (e0[:, None] * m) * e0[None, :]
    # E- ρ E-†: a ρ a† shifts both indices down.
    amp = np.sqrt(n[1:])
    out[:-1, :-1] += eps * (n_ch + 1.0) * (amp[:, None] * m[1:, 1:]) * amp[None, :]
    # E+ ρ E+†: a† ρ a shifts both indices up.
    if n_ch > 0:
        out[1:, 1:] += eps * n_ch * (amp[:, None] * m[:-1, :-1]) * amp[None, :]
    deficit = abs(1.0 - out.trace().real)
    return DensityMatrix(out, trace_tol=max(1e-9, 2.0 * deficit))


def qubit_block_channel(eps: float, n_ch: float) -> np.ndarray:
    """Exact thermal-channel action compressed to the Fock-qubit block {|0>, |1>}.

    Returns blocks[i, j] = P Λ(|i><j|) P with P the projector onto the first
    two levels, as closed geometric sums over the environment occupation
    (gain out of the block makes the |1><1| block subnormalized). Handy for
    instantaneous-fidelity traces; agrees with the full Kraus pipeline.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    if n_ch < 0:
        raise ValueError("occupation must be non-negative")
    n = n_ch
    u = 1.0 + n * eps
    blocks = np.zeros((2, 2, 2, 2), dtype=complex)
    blocks[0, 0, 0, 0] = 1.0 / u
    blocks[0, 0, 1, 1] = eps * n / u**2
    blocks[1, 1, 0, 0] = eps * (n + 1.0) / u**2
    blocks[1, 1, 1, 1] = (
        (1.0 - eps) / u
        - 2.0 * eps * n * (1.0 - eps) / u**2
        + eps**2 * n * (2.0 * n + 1.0 - n * eps) / u**3
    )
    coh = np.sqrt(1.0 - eps) / u**2
    blocks[0, 1, 0, 1] = coh
    blocks[1, 0, 1, 0] = coh
    return blocks
