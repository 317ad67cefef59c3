"""Bosonic qubit codes against photon loss and gain on thermal channels.

Code words are superpositions of Fock states spaced by a stride m, so the
photon number modulo m acts as an error syndrome: each net loss or gain event
moves the state to a different residue class without revealing (or damaging)
the logical amplitudes. Recovery measures the residue and applies a partial
isometry built from the dominant first-order error images of the code words;
syndrome weight that no correctable error explains is declared a failure and
replaced by the maximally mixed logical state, never silently renormalized.

Three encodings are provided:

``none``      trivial Fock qubit |0>, |1> (stride 1, no protection)
``loss``      (|0> + |4>)/sqrt2 and |2> (stride 2, corrects one loss)
``lossgain``  (|0> + sqrt3 |6>)/2 and (sqrt3 |3> + |9>)/2
              (stride 3, corrects one loss or one gain)

Both protected codes have equal mean occupation in the two words (2 and 9/2),
which is what makes the dephasing-free syndrome extraction possible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hilbert import FockSpace, average_qubit_fidelity, ladder_operator
from .thermch import ThermalGaussianMap, apply_to_matrix

__all__ = [
    "BosonicCode",
    "Recovery",
    "SyndromeOutcome",
    "make_code",
    "knill_laflamme_check",
    "knill_laflamme_violation",
    "first_order_errors",
    "syndrome_projectors",
    "measure_syndrome",
    "build_recovery",
    "corrected_block_channel",
    "uncorrected_block_channel",
    "logical_fidelity",
    "error_strength",
    "loss_for_strength",
]

_MIN_DIMS = {"none": 3, "loss": 6, "lossgain": 11}


@dataclass(frozen=True)
class BosonicCode:
    """An orthonormal pair of code words on a Fock ladder with stride ``spacing``."""

    name: str
    spacing: int
    word0: np.ndarray
    word1: np.ndarray

    def __post_init__(self) -> None:
        w0 = np.asarray(self.word0, dtype=complex)
        w1 = np.asarray(self.word1, dtype=complex)
        if w0.shape != w1.shape or w0.ndim != 1:
            raise ValueError("code words must be vectors of equal length")
        gram = np.array([[w0 @ w0.conj(), w1 @ w0.conj()], [w0 @ w1.conj(), w1 @ w1.conj()]])
        if np.max(np.abs(gram - np.eye(2))) > 1e-12:
            raise ValueError("code words must be orthonormal")
        w0.setflags(write=False)
        w1.setflags(write=False)
        object.__setattr__(self, "word0", w0)
        object.__setattr__(self, "word1", w1)

    @property
    def dim(self) -> int:
        return self.word0.size

    @property
    def mean_occupation(self) -> float:
        """Photon number averaged over the two words (the protected codes
        balance their words, so it is also each word's mean)."""
        n = np.arange(self.dim)
        return float(0.5 * (n @ np.abs(self.word0) ** 2 + n @ np.abs(self.word1) ** 2))

    def encode(self, alpha: complex, beta: complex) -> np.ndarray:
        return alpha * self.word0 + beta * self.word1

    def decode_block(self, rho: np.ndarray) -> np.ndarray:
        """Compress a Fock-space (dyad) matrix onto the logical qubit block.

        Weight outside the code space is discarded, not renormalized: the
        result is subnormalized exactly by the leaked fraction.
        """
        w = np.vstack([self.word0, self.word1])
        return w.conj() @ np.asarray(rho, dtype=complex) @ w.T

    def decode(self, rho: np.ndarray) -> tuple[np.ndarray, float]:
        """Logical qubit state plus the leakage weight it had to absorb.

        Weight outside the code space decodes as the maximally mixed logical
        state, so a unit-trace input yields a unit-trace qubit state and the
        map stays linear; the leaked fraction is reported, never fatal.
        """
        q = self.decode_block(rho)
        leak = np.trace(np.asarray(rho)) - np.trace(q)
        return q + 0.5 * leak * np.eye(2), float(np.real(leak))


def make_code(kind: str, dim: int = 30) -> BosonicCode:
    """Construct a named code on a Fock space of the given dimension."""
    if kind not in _MIN_DIMS:
        raise ValueError(f"unknown code kind {kind!r}; choose from {sorted(_MIN_DIMS)}")
    if dim < _MIN_DIMS[kind]:
        raise ValueError(
            f"dim {dim} too small for {kind!r}: need at least {_MIN_DIMS[kind]} "
            "levels to hold the words and their first-order error images"
        )
    w0 = np.zeros(dim)
    w1 = np.zeros(dim)
    if kind == "none":
        w0[0] = 1.0
        w1[1] = 1.0
        spacing = 1
    elif kind == "loss":
        w0[0] = w0[4] = 1.0 / np.sqrt(2.0)
        w1[2] = 1.0
        spacing = 2
    else:  # lossgain
        w0[0] = 0.5
        w0[6] = np.sqrt(3.0) / 2.0
        w1[3] = np.sqrt(3.0) / 2.0
        w1[9] = 0.5
        spacing = 3
    return BosonicCode(kind, spacing, w0, w1)


def knill_laflamme_check(code: BosonicCode, errors: list[np.ndarray]) -> tuple[np.ndarray, float]:
    """Correctability structure of an error set on this code.

    For every pair (E_l, E_k) the 2x2 matrix G_ij = <Wi|E_l†E_k|Wj> must be
    proportional to the identity for the set to be exactly correctable.
    Returns (alpha, worst): alpha[l, k] is the mean diagonal of G (the
    would-be proportionality constant) and worst is the largest violation
    max(|G01|, |G10|, |G00 - G11|) over all pairs. worst = 0 (to rounding)
    means the code corrects the set exactly.
    """
    w = np.vstack([code.word0, code.word1])
    n = len(errors)
    alpha = np.zeros((n, n), dtype=complex)
    worst = 0.0
    for l, e1 in enumerate(errors):
        for k, e2 in enumerate(errors):
            g = w.conj() @ (np.asarray(e1).conj().T @ np.asarray(e2)) @ w.T
            alpha[l, k] = 0.5 * (g[0, 0] + g[1, 1])
            worst = max(worst, abs(g[0, 1]), abs(g[1, 0]), abs(g[0, 0] - g[1, 1]))
    return alpha, float(worst)


def knill_laflamme_violation(code: BosonicCode, errors: list[np.ndarray]) -> float:
    """Largest deviation from exact correctability (see knill_laflamme_check)."""
    return knill_laflamme_check(code, errors)[1]


def first_order_errors(eps: float, n_ch: float, dim: int) -> list[tuple[str, int, np.ndarray]]:
    """Dominance-ordered first-order error operators of the thermal channel.

    Returns (label, net photon shift, operator): the no-jump drift
    E0 = 1 - ε[(N+1/2) n̂ + N/2], the loss jump sqrt(ε(N+1)) a, and — only on
    a hot channel — the gain jump sqrt(εN) a†. Loss always dominates gain
    (rate ratio (N+1)/N), so the order is fixed.
    """
    a = ladder_operator(FockSpace(dim)).matrix
    n_op = np.diag(np.arange(dim, dtype=float))
    e0 = np.eye(dim) - eps * ((n_ch + 0.5) * n_op + 0.5 * n_ch * np.eye(dim))
    out = [
        ("drift", 0, e0),
        ("loss", -1, np.sqrt(eps * (n_ch + 1.0)) * a),
    ]
    if n_ch > 0:
        out.append(("gain", +1, np.sqrt(eps * n_ch) * a.conj().T))
    return out


def syndrome_projectors(code: BosonicCode) -> list[np.ndarray]:
    """Projectors onto photon number ≡ r (mod spacing), r = 0..spacing-1."""
    n = np.arange(code.dim)
    return [np.diag((n % code.spacing == r).astype(float)) for r in range(code.spacing)]


@dataclass(frozen=True)
class SyndromeOutcome:
    """One outcome of the modular photon-number measurement.

    ``post_state`` is the normalized post-measurement state, or None when the
    outcome has (numerically) zero probability.
    """

    residue: int
    probability: float
    post_state: np.ndarray | None


def measure_syndrome(rho: np.ndarray, code: BosonicCode) -> list[SyndromeOutcome]:
    """Projective measurement of photon number mod spacing on a density matrix.

    Returns one outcome per residue class; probabilities sum to the trace of
    the input. Because every projector is diagonal in the Fock basis, the
    measurement reveals nothing about the logical amplitudes as long as the
    code words keep their residues distinct.
    """
    rho = np.asarray(rho, dtype=complex)
    n = np.arange(code.dim)
    outcomes = []
    for r in range(code.spacing):
        mask = n % code.spacing == r
        p = float(np.real(np.diagonal(rho)[mask].sum()))
        if p > 1e-14:
            post = np.zeros_like(rho)
            ix = np.ix_(mask, mask)
            post[ix] = rho[ix] / p
        else:
            post = None
        outcomes.append(SyndromeOutcome(r, p, post))
    return outcomes


@dataclass(frozen=True)
class Recovery:
    """Syndrome-conditioned recovery back to the code space.

    One Kraus operator per (residue, error) pair: each maps that error's
    orthonormalized images of the code words back onto the words. Keeping the
    errors in separate operators is what makes the map completely positive —
    it also means the recovery learns which error occurred, so coherence
    between different error sectors is (physically) lost. ``collectors[r]``
    holds one 2xdim contraction per error group; the decoded logical block is
    q = Σ_{r,g} C_{r,g}* ρ C_{r,g}^T. Residue weight outside all error images
    is a declared failure, later completed to the maximally mixed logical
    state.

    The syndrome reveals only the residue, so when two errors produce the
    same residue shift (gain and loss on a stride-2 code) only the dominant
    one can be assigned a recovery; states hit by the other error are then
    (mis)handled by it — restored to the wrong word or declared failures.
    """

    code: BosonicCode
    collectors: tuple[tuple[np.ndarray, ...], ...]
    basis: tuple[np.ndarray, ...]
    residue_masks: tuple[np.ndarray, ...]

    def kraus_operators(self, r: int) -> list[np.ndarray]:
        """Explicit dim x dim recovery operators for residue r (for inspection)."""
        w = np.vstack([self.code.word0, self.code.word1])
        return [w.T @ c.conj() for c in self.collectors[r]]

    def apply(self, rho: np.ndarray) -> tuple[np.ndarray, complex]:
        """Decoded logical block and unrecoverable (failure) weight."""
        rho = np.asarray(rho, dtype=complex)
        q = np.zeros((2, 2), dtype=complex)
        fail = 0.0 + 0.0j
        diag = np.diagonal(rho)
        for r in range(len(self.collectors)):
            for c in self.collectors[r]:
                q += c.conj() @ rho @ c.T
            fail += diag[self.residue_masks[r]].sum()
            b = self.basis[r]
            if b.size:
                fail -= np.einsum("ki,ij,kj->", b.conj(), rho, b)
        return q, fail


def build_recovery(code: BosonicCode, eps: float, n_ch: float) -> Recovery:
    """Channel-adapted first-order recovery for the given loss and occupation.

    Walks the first-order errors in dominance order and lets each one claim
    its residue class: the claimed error's images E|Wσ> are orthonormalized
    and keyed to their source words, defining that residue's recovery
    operator. A less likely error landing on an already-claimed residue is
    indistinguishable from the claimant by the modular photon-number
    measurement, so it gets no operator of its own. Residues that no
    first-order error reaches stay empty: any weight found there at run time
    is a declared failure.
    """
    m = code.spacing
    dim = code.dim
    words = [code.word0, code.word1]
    stacks: list[list[np.ndarray]] = [[] for _ in range(m)]
    groups: list[list[np.ndarray]] = [[] for _ in range(m)]
    claimed: set[int] = set()
    for _label, shift, op in first_order_errors(eps, n_ch, dim):
        r = shift % m
        if r in claimed:
            continue
        claimed.add(r)
        c = np.zeros((2, dim), dtype=complex)
        keep = False
        for sigma in (0, 1):
            v = op @ words[sigma]
            norm = np.linalg.norm(v)
            if norm < 1e-14:
                continue
            v = v / norm
            for b in stacks[r]:
                v = v - (b.conj() @ v) * b
            residual = np.linalg.norm(v)
            if residual < 1e-8:
                continue
            b = v / residual
            stacks[r].append(b)
            c[sigma] = b
            keep = True
        if keep:
            groups[r].append(c)

    basis = []
    masks = []
    n = np.arange(dim)
    for r in range(m):
        basis.append(np.array(stacks[r]) if stacks[r] else np.zeros((0, dim), dtype=complex))
        masks.append(n % m == r)
    return Recovery(code, tuple(tuple(g) for g in groups), tuple(basis), tuple(masks))


# ---------------------------------------------------------------------------
# logical channels


def _lift(code: BosonicCode, block: np.ndarray) -> np.ndarray:
    """Embed a 2x2 logical block as a Fock-space dyad matrix."""
    w = np.vstack([code.word0, code.word1])
    return w.T @ np.asarray(block, dtype=complex) @ w.conj()


def uncorrected_block_channel(code: BosonicCode, eps: float, n_ch: float):
    """Encode, send through the exact thermal channel, decode — no recovery.

    Output weight that leaked out of the code space decodes as the maximally
    mixed logical state — the same declared-failure convention the corrected
    pipeline uses, so the two channels are compared on equal terms and both
    stay trace-preserving up to the channel's truncation tail.
    """
    chmap = ThermalGaussianMap(eps, n_ch)

    def channel(block: np.ndarray) -> np.ndarray:
        logical, _leak = code.decode(apply_to_matrix(_lift(code, block), chmap))
        return logical

    return channel


def corrected_block_channel(code: BosonicCode, eps: float, n_ch: float):
    """Encode, send, measure the syndrome, recover, decode.

    Unrecoverable weight — residues no first-order error explains, or weight
    inside a residue that the claiming error's images do not span — is
    completed to the maximally mixed logical state, keeping the channel
    trace-preserving up to the channel's own truncation tail.
    """
    chmap = ThermalGaussianMap(eps, n_ch)
    recovery = build_recovery(code, eps, n_ch)

    def channel(block: np.ndarray) -> np.ndarray:
        rho = apply_to_matrix(_lift(code, block), chmap)
        q, fail = recovery.apply(rho)
        return q + 0.5 * fail * np.eye(2)

    return channel


def logical_fidelity(code: BosonicCode, eps: float, n_ch: float, corrected: bool = True) -> float:
    """Haar-average logical fidelity of the (un)corrected encoded channel.

    Both pipelines are trace-preserving (failures decode as the maximally
    mixed state), so the guarded qubit-channel average applies; its tolerance
    absorbs the Fock-space truncation tail.
    """
    if corrected:
        return average_qubit_fidelity(corrected_block_channel(code, eps, n_ch))
    return average_qubit_fidelity(uncorrected_block_channel(code, eps, n_ch))


def error_strength(eps: float, n_ch: float) -> float:
    """Effective single-mode error strength E = ε (N_ch + 1/2).

    Loss and gain rates are ε(N+1) and εN; their mean sets the scale on which
    codes of different stride are comparable.
    """
    return eps * (n_ch + 0.5)


def loss_for_strength(strength: float, n_ch: float) -> float:
    """Channel loss ε giving the requested effective error strength."""
    return strength / (n_ch + 0.5)
