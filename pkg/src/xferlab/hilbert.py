"""Finite-dimensional Fock-space primitives.

Truncated bosonic Hilbert spaces, operators and density matrices, thermal
states with a controlled geometric tail, tensor products and partial traces,
unitary evolution, and qubit fidelity measures (including the Haar average
over pure input states used throughout the transfer protocols).

Units: ħ = 1 everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

__all__ = [
    "TruncationError",
    "FockSpace",
    "Operator",
    "DensityMatrix",
    "QubitState",
    "ladder_operator",
    "number_operator",
    "thermal_tail",
    "thermal_occupations",
    "thermal_state",
    "tensor",
    "partial_trace",
    "evolve_unitary",
    "pure_state_fidelity",
    "haar_average_fidelity",
    "average_qubit_fidelity",
]

# Default numerical tolerances for state validation.
HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-9
EIGENVALUE_TOL = 1e-9
NORM_TOL = 1e-12


class TruncationError(ValueError):
    """Raised when a Fock-space truncation cannot hold the requested state."""


@dataclass(frozen=True)
class FockSpace:
    """A bosonic mode truncated to Fock levels |0>, ..., |dim-1>."""

    dim: int

    def __post_init__(self) -> None:
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 2:
            raise ValueError(f"FockSpace dimension must be an integer >= 2, got {self.dim!r}")


@dataclass(frozen=True)
class Operator:
    """A linear operator on a truncated Fock space."""

    matrix: np.ndarray
    space: FockSpace

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(
                f"operator shape {m.shape} does not match space dimension {self.space.dim}"
            )
        object.__setattr__(self, "matrix", m)

    def dag(self) -> "Operator":
        return Operator(self.matrix.conj().T, self.space)

    def __matmul__(self, other: "Operator") -> "Operator":
        if self.space.dim != other.space.dim:
            raise ValueError("dimension mismatch in operator product")
        return Operator(self.matrix @ other.matrix, self.space)

    def is_hermitian(self, tol: float = HERMITICITY_TOL) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T)) <= tol)


@dataclass(frozen=True)
class DensityMatrix:
    """A validated density matrix: Hermitian, unit trace, positive semidefinite.

    ``trace_tol`` may be loosened by callers whose output carries an inherent
    trace deficit (e.g. perturbative channel expansions truncated at first
    order); the default enforces unit trace to 1e-9.
    """

    matrix: np.ndarray
    trace_tol: float = field(default=TRACE_TOL, compare=False)

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {m.shape}")
        herm = np.max(np.abs(m - m.conj().T))
        if herm > HERMITICITY_TOL:
            raise ValueError(f"density matrix not Hermitian (deviation {herm:.3e})")
        tr = m.trace().real
        if abs(tr - 1.0) > self.trace_tol:
            raise ValueError(f"density matrix trace {tr!r} deviates from 1 beyond {self.trace_tol:.1e}")
        evals = np.linalg.eigvalsh(m)
        if evals.min() < -EIGENVALUE_TOL:
            raise ValueError(f"density matrix has negative eigenvalue {evals.min():.3e}")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def occupation(self) -> float:
        """Mean occupation <n> in the Fock basis."""
        return float(np.real(np.diag(self.matrix) @ np.arange(self.dim)))


@dataclass(frozen=True)
class QubitState:
    """A normalized pure qubit α|0> + β|1>."""

    alpha: complex
    beta: complex

    def __post_init__(self) -> None:
        norm = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"qubit amplitudes have squared norm {norm!r}, expected 1")

    def vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=complex)


def ladder_operator(space: FockSpace) -> Operator:
    """Truncated annihilation operator a with a|n> = sqrt(n)|n-1>.

    On a dim-level truncation [a, a†] = 1 - dim |dim-1><dim-1|: the canonical
    commutator holds everywhere except the top level.
    """
    n = np.arange(1, space.dim)
    return Operator(np.diag(np.sqrt(n), k=1), space)


def number_operator(space: FockSpace) -> Operator:
    """Fock number operator a†a (exactly diagonal in the truncated basis)."""
    return Operator(np.diag(np.arange(space.dim, dtype=float)), space)


def thermal_tail(n_occ: float, dim: int) -> float:
    """Probability weight of a thermal state above the truncation, Σ_{k>=dim} p_k = (N/(N+1))^dim."""
    if n_occ < 0:
        raise ValueError("thermal occupation must be non-negative")
    if n_occ == 0.0:
        return 0.0
    return float((n_occ / (n_occ + 1.0)) ** dim)


def thermal_occupations(n_occ: float, dim: int) -> np.ndarray:
    """Renormalized geometric weights p_k ∝ N^k/(N+1)^(k+1), k < dim."""
    if n_occ == 0.0:
        p = np.zeros(dim)
        p[0] = 1.0
        return p
    k = np.arange(dim)
    p = np.exp(k * np.log(n_occ / (n_occ + 1.0))) / (n_occ + 1.0)
    return p / p.sum()


def thermal_state(n_occ: float, space: FockSpace, tail_tol: float = 1e-8) -> DensityMatrix:
    """Thermal (geometric) state with mean occupation ``n_occ`` on ``space``.

    Raises TruncationError when the discarded geometric tail
    (N/(N+1))^dim is not below ``tail_tol``; the retained weights are
    renormalized so the state has unit trace exactly.
    """
    tail = thermal_tail(n_occ, space.dim)
    if tail >= tail_tol:
        raise TruncationError(
            f"thermal tail {tail:.3e} at dim {space.dim} exceeds tolerance {tail_tol:.1e} "
            f"for occupation {n_occ}"
        )
    return DensityMatrix(np.diag(thermal_occupations(n_occ, space.dim)).astype(complex))


def tensor(a, b):
    """Kronecker product of two operators or two density matrices.

    The composite is indexed with the first factor's level varying slowest
    (row-major Kronecker convention).
    """
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        return DensityMatrix(np.kron(a.matrix, b.matrix))
    if isinstance(a, Operator) and isinstance(b, Operator):
        return Operator(np.kron(a.matrix, b.matrix), FockSpace(a.space.dim * b.space.dim))
    raise TypeError("tensor expects two Operators or two DensityMatrices")


def partial_trace(rho: DensityMatrix, dims: Sequence[int], subsystem: int) -> DensityMatrix:
    """Trace out one tensor factor of a multipartite density matrix.

    ``dims`` lists the factor dimensions in Kronecker order and must multiply
    to the full dimension; ``subsystem`` indexes the factor to remove.
    """
    dims = list(dims)
    total = int(np.prod(dims))
    if total != rho.dim:
        raise ValueError(f"factor dimensions {dims} do not multiply to {rho.dim}")
    if not 0 <= subsystem < len(dims):
        raise ValueError(f"subsystem index {subsystem} out of range for {len(dims)} factors")
    m = rho.matrix.reshape(dims + dims)
    # Trace over the doubled axis of the selected factor, then flatten back.
    m = np.trace(m, axis1=subsystem, axis2=subsystem + len(dims))
    keep = [d for i, d in enumerate(dims) if i != subsystem]
    d_keep = int(np.prod(keep)) if keep else 1
    return DensityMatrix(m.reshape(d_keep, d_keep))


def evolve_unitary(h: Operator, t: float, rho: DensityMatrix) -> DensityMatrix:
    """Evolve ρ → e^{-iHt} ρ e^{+iHt} (ħ = 1)."""
    if not h.is_hermitian():
        raise ValueError("Hamiltonian is not Hermitian within tolerance")
    if h.space.dim != rho.dim:
        raise ValueError("dimension mismatch between Hamiltonian and state")
    u = expm(-1j * t * h.matrix)
    return DensityMatrix(u @ rho.matrix @ u.conj().T)


def pure_state_fidelity(rho: DensityMatrix, psi: np.ndarray) -> float:
    """Fidelity <ψ|ρ|ψ> against a normalized pure target."""
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"target state norm {norm!r} deviates from 1")
    if psi.shape != (rho.dim,):
        raise ValueError("dimension mismatch between state and density matrix")
    return float(np.real(psi.conj() @ rho.matrix @ psi))


def _apply_to_basis(channel: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Outputs Λ(|i><j|) for i,j in {0,1}, stacked as out[i,j].

    The channel's output may be any square matrix of fixed dimension ≥ 2
    whose first two levels carry the target qubit; all four probes must
    agree on that dimension.
    """
    blocks = []
    for i in range(2):
        for j in range(2):
            e = np.zeros((2, 2), dtype=complex)
            e[i, j] = 1.0
            block = np.asarray(channel(e), dtype=complex)
            if block.ndim != 2 or block.shape[0] != block.shape[1] or block.shape[0] < 2:
                raise ValueError("channel output must be a square matrix of dimension >= 2")
            blocks.append(block)
    if len({b.shape for b in blocks}) != 1:
        raise ValueError("channel output dimension varies across basis probes")
    out = np.empty((2, 2), dtype=object)
    for k, block in enumerate(blocks):
        out[k // 2, k % 2] = block
    return out


def haar_average_fidelity(channel: Callable[[np.ndarray], np.ndarray]) -> float:
    """Haar average of <ψ|Λ(|ψ><ψ|)|ψ> over pure qubit states ψ.

    Valid for any linear (not necessarily trace-preserving) map: with
    entanglement fidelity F_e = (1/4) Σ_ij [Λ(|i><j|)]_ij the average is
    (2 F_e + tr₂ Λ(I/2)) / 3, where tr₂ keeps only the first two output
    levels. Output weight missing from the qubit block — whether dropped by
    a trace-decreasing map or parked in higher levels of an embedding —
    overlaps no target state and earns no credit.
    """
    blocks = _apply_to_basis(channel)
    f_e = 0.25 * sum(blocks[i, j][i, j] for i in range(2) for j in range(2))
    tr_mid = 0.5 * sum(blocks[i, i][0, 0] + blocks[i, i][1, 1] for i in range(2))
    return float(np.real(2.0 * f_e + tr_mid) / 3.0)


def average_qubit_fidelity(
    channel: Callable[[np.ndarray], np.ndarray], tp_tol: float = 1e-6
) -> float:
    """Average fidelity of a trace-preserving channel over Haar-random qubit inputs.

    The channel is probed on the four matrix units; trace preservation is
    verified to ``tp_tol`` on the full output trace (raises ValueError
    otherwise). Identity gives 1, the completely depolarizing channel 1/2,
    measure-and-prepare 2/3. The output may embed the qubit in a larger
    space; population outside the first two levels then earns no overlap
    credit even though the trace is preserved.
    """
    blocks = _apply_to_basis(channel)
    for i in range(2):
        for j in range(2):
            dev = abs(np.trace(blocks[i, j]) - (1.0 if i == j else 0.0))
            if dev > tp_tol:
                raise ValueError(
                    f"channel is not trace-preserving: tr Λ(|{i}><{j}|) deviates by {dev:.3e}"
                )
    f_e = 0.25 * sum(np.real(blocks[i, j][i, j]) for i in range(2) for j in range(2))
    tr_mid = 0.5 * sum(np.real(blocks[i, i][0, 0] + blocks[i, i][1, 1]) for i in range(2))
    return float((2.0 * f_e + tr_mid) / 3.0)
