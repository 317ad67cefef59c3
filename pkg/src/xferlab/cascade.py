"""Cascaded two-node network: amplitude transfer, pulse shaping, moments.

A sender mode (tunable coupling γ1(t), detuning δ) emits into a unidirectional
waveguide with power loss ε_ch and thermal occupation N_ch; a receiver mode
(tunable coupling γ2(t)) absorbs. With σ_i = sqrt(γ_i) (complex couplings are
written γ = |γ| e^{-2iφ}, σ = sqrt(|γ|) e^{-iφ}), the single-excitation
amplitudes obey

    dA1/dt = -(|γ1|/2 + iδ) A1                      sender survival
    dT/dt  = -(|γ2|/2) T - sqrt(1-ε_ch) σ2* σ1 A1   sender → receiver transfer
    dA2/dt = -(|γ2|/2) A2                           receiver survival

and the receiver mode decomposes as a2(t) = A2 a2(0) + T a1(0) + noise, where
the total noise-kernel weight I_D2 closes the commutator sum rule
|A2|² + |T|² + I_D2 = 1. Perfect transfer requires the emitted wave packet to
interfere destructively with the field reflected off the receiver — the
dark-state condition σ1 A1 + σ2 T = 0, achieved by time-symmetric pulse pairs
or synthesized directly from γ1.

All integrators are fixed-step RK4 on the shared pulse grid; pulse samples at
half-steps come from 4-point interpolation so the O(dt⁴) accuracy survives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "StabilityError",
    "PulseProfile",
    "Scatterer",
    "NetworkTopology",
    "TransferSolution",
    "DarkStateTrajectory",
    "MomentTrajectory",
    "ScattererSolution",
    "OptimizedRecovery",
    "constant_pulse",
    "stannigel_pulse",
    "integrate_amplitudes",
    "synthesize_recovery_pulse",
    "moment_trajectories",
    "detector_signal",
    "simulate_scatterer_network",
    "optimize_recovery_with_scatterer",
]


class StabilityError(RuntimeError):
    """Raised when the fixed-step integrator would run outside its stable regime."""


# ---------------------------------------------------------------------------
# pulse profiles


@dataclass(frozen=True)
class PulseProfile:
    """A tunable coupling γ(t) sampled on a uniform grid.

    Stored as magnitude and (unwrapped) coupling phase, γ = |γ| e^{-2iφ}: the
    phase belongs to the coupling operator sqrt(γ) = sqrt(|γ|) e^{-iφ}, and
    keeping it separate avoids the square-root branch cut when γ winds around
    the origin.
    """

    t0: float
    dt: float
    magnitude: np.ndarray
    phase: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        mag = np.asarray(self.magnitude, dtype=float)
        ph = np.zeros_like(mag) if self.phase is None else np.asarray(self.phase, dtype=float)
        if mag.ndim != 1 or mag.size < 2:
            raise ValueError("pulse needs at least two samples")
        if ph.shape != mag.shape:
            raise ValueError("magnitude and phase arrays must share a shape")
        if not (np.isfinite(mag).all() and np.isfinite(ph).all()):
            raise ValueError("pulse samples must be finite")
        if mag.min() < 0:
            raise ValueError("pulse magnitude must be non-negative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        mag.setflags(write=False)
        ph.setflags(write=False)
        object.__setattr__(self, "magnitude", mag)
        object.__setattr__(self, "phase", ph)

    @classmethod
    def from_samples(cls, t0: float, dt: float, samples: np.ndarray) -> "PulseProfile":
        """Build from complex samples γ(t_k) = |γ| e^{-2iφ}, unwrapping the phase."""
        samples = np.asarray(samples, dtype=complex)
        mag = np.abs(samples)
        ph = -0.5 * np.unwrap(np.angle(samples))
        return cls(t0, dt, mag, ph)

    @property
    def n(self) -> int:
        return self.magnitude.size

    @property
    def tf(self) -> float:
        return self.t0 + (self.n - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def samples(self) -> np.ndarray:
        """Complex γ(t_k)."""
        return self.magnitude * np.exp(-2j * self.phase)

    @property
    def sqrt_samples(self) -> np.ndarray:
        """Coupling amplitude σ(t_k) = sqrt(|γ|) e^{-iφ} (branch-cut free)."""
        return np.sqrt(self.magnitude) * np.exp(-1j * self.phase)

    def mirrored(self) -> "PulseProfile":
        """Time reverse about the midpoint of the pulse window."""
        return PulseProfile(self.t0, self.dt, self.magnitude[::-1], self.phase[::-1])

    def grid_matches(self, other: "PulseProfile") -> bool:
        return (
            self.n == other.n
            and abs(self.t0 - other.t0) < 1e-12 * max(1.0, abs(self.t0))
            and abs(self.dt - other.dt) < 1e-12 * self.dt
        )


def constant_pulse(value: float, t0: float, tf: float, dt: float) -> PulseProfile:
    """Flat real pulse γ(t) = value on [t0, tf]."""
    n = int(round((tf - t0) / dt)) + 1
    return PulseProfile(t0, dt, np.full(n, float(value)))


def stannigel_pulse(gamma: float, t_p: float, dt: float | None = None, t0: float = 0.0) -> PulseProfile:
    """Sender pulse producing a time-symmetric emitted wave packet.

    Rising half γ1(t) = γ e^{γ(t - t_p/2)} / (2 - e^{γ(t - t_p/2)}) for
    t < t_p/2, flat γ afterwards; the released amplitude then satisfies
    |A1 sqrt(γ1)|² = (γ/2) sech-free symmetric envelope, so the mirrored
    profile on the receiver absorbs it back. Continuous at t_p/2 (both halves
    give γ), and γ1(t_p/2 - ln 2/γ) = γ/3.

    ``dt`` defaults to 1e-3/γ; values above 1e-2/γ are rejected as too coarse
    for the pulse's leading-edge curvature. γ t_p < 5 leaves too much
    amplitude unreleased and is rejected.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if gamma * t_p < 5.0:
        raise ValueError(f"pulse window γ·t_p = {gamma * t_p:.2f} too short (need >= 5)")
    if dt is None:
        dt = 1e-3 / gamma
    if dt > 1e-2 / gamma:
        raise ValueError(f"grid too coarse: dt = {dt:.3e} exceeds 1e-2/γ")
    n = int(round(t_p / dt)) + 1
    t = t0 + dt * np.arange(n)
    u = np.exp(gamma * np.clip(t - t0 - t_p / 2.0, None, 0.0))
    rising = gamma * u / (2.0 - u)
    mag = np.where(t - t0 < t_p / 2.0, rising, gamma)
    return PulseProfile(t0, dt, mag)


# ---------------------------------------------------------------------------
# topology


@dataclass(frozen=True)
class Scatterer:
    """A partially reflecting defect in the waveguide between the nodes.

    Reflects r_s of the signal back to the sender with round-trip delay τ_s and
    transmits t_s = sqrt(1 - |r_s|²) onward; the lossless splitter is completed
    unitarily, so the unused port carries vacuum only.
    """

    reflectivity: complex
    delay: float

    def __post_init__(self) -> None:
        if abs(self.reflectivity) > 1.0:
            raise ValueError("|r_s| must not exceed 1")
        if self.delay < 0:
            raise ValueError("delay must be non-negative")

    @property
    def transmission(self) -> float:
        return float(np.sqrt(1.0 - abs(self.reflectivity) ** 2))


@dataclass(frozen=True)
class NetworkTopology:
    """Static properties of the link between the two nodes."""

    eps_ch: float = 0.0
    n_ch: float = 0.0
    delta: float = 0.0
    scatterer: Scatterer | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.eps_ch < 1.0:
            raise ValueError("channel loss must lie in [0, 1)")
        if self.n_ch < 0:
            raise ValueError("channel occupation must be non-negative")


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class TransferSolution:
    """Amplitude-level solution of the cascaded pair on the pulse grid.

    ``i_d2`` is the integrated noise-kernel weight of the receiver mode,
    computed from its own closed set of kernel-moment ODEs (not from the sum
    rule), so |a2_coef|² + |transfer|² + i_d2 - 1 measures real integration
    error. ``darkness`` is the interference residual σ1 A1 + σ2 T that
    vanishes on the dark-state manifold.
    """

    t: np.ndarray
    a1: np.ndarray
    transfer: np.ndarray
    a2_coef: np.ndarray
    i_d2: np.ndarray
    darkness: np.ndarray

    def norm_residual(self) -> np.ndarray:
        return np.abs(self.a2_coef) ** 2 + np.abs(self.transfer) ** 2 + self.i_d2 - 1.0


@dataclass(frozen=True)
class DarkStateTrajectory:
    """Sender amplitude and transfer amplitude on the dark-state manifold."""

    t: np.ndarray
    a1: np.ndarray
    transfer: np.ndarray

    def norm_drift(self) -> np.ndarray:
        """Grid derivative of |A1|² + |T|² (zero on the manifold)."""
        total = np.abs(self.a1) ** 2 + np.abs(self.transfer) ** 2
        return np.gradient(total, self.t)


@dataclass(frozen=True)
class MomentTrajectory:
    """Second-moment trajectories of the node (and optional filter) modes."""

    t: np.ndarray
    n1: np.ndarray
    n2: np.ndarray | None = None
    cross: np.ndarray | None = None
    n_filter: np.ndarray | None = None
    n_filter_approx: np.ndarray | None = None


@dataclass(frozen=True)
class ScattererSolution:
    """Signal-sector field history of the loop sender ↔ scatterer → receiver."""

    t: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    phi_out1: np.ndarray
    phi_in2: np.ndarray
    f_out2: np.ndarray
    delay_steps: int
    delay_rounding: float

    def energy_account(self) -> np.ndarray:
        """|α1|² + in-flight loop energy + |α2|² + leaked energy, ideally ≡ 1."""
        dt = self.t[1] - self.t[0]
        loop = _cumulative_simpson(np.abs(self.phi_out1) ** 2, dt)
        leak = _cumulative_simpson(np.abs(self.f_out2) ** 2, dt)
        in_flight = loop.copy()
        if self.delay_steps > 0:
            in_flight[self.delay_steps :] = loop[self.delay_steps :] - loop[: -self.delay_steps]
        else:
            in_flight[:] = 0.0
        return np.abs(self.alpha1) ** 2 + in_flight + np.abs(self.alpha2) ** 2 + leak


@dataclass(frozen=True)
class OptimizedRecovery:
    """Synthesized receiver pulse against a scattering defect, plus diagnostics."""

    pulse: PulseProfile
    solution: ScattererSolution
    captured: float
    reflected_energy: float
    clamped_fraction: float
    capture_complete: bool


# ---------------------------------------------------------------------------
# numerics helpers


def _midpoints(arr: np.ndarray) -> np.ndarray:
    """4-point interpolation of uniformly sampled data at interval midpoints."""
    out = np.empty(arr.size - 1, dtype=arr.dtype)
    if arr.size >= 4:
        out[1:-1] = (-arr[:-3] + 9.0 * arr[1:-2] + 9.0 * arr[2:-1] - arr[3:]) / 16.0
        out[0] = (3.0 * arr[0] + 6.0 * arr[1] - arr[2]) / 8.0
        out[-1] = (3.0 * arr[-1] + 6.0 * arr[-2] - arr[-3]) / 8.0
    else:
        out[:] = 0.5 * (arr[:-1] + arr[1:])
    return out


def _mag_midpoints(mag: np.ndarray) -> np.ndarray:
    """Midpoints of a non-negative magnitude; cubic overshoot clipped at zero."""
    return np.maximum(_midpoints(mag), 0.0)


def _cumulative_simpson(y: np.ndarray, dt: float) -> np.ndarray:
    """Cumulative integral of uniform samples, locally quadratic (Simpson-grade)."""
    y = np.asarray(y, dtype=float)
    out = np.zeros(y.size)
    if y.size < 3:
        if y.size == 2:
            out[1] = 0.5 * dt * (y[0] + y[1])
        return out
    # first interval from the quadratic through the first three points
    out[1] = dt * (5.0 * y[0] + 8.0 * y[1] - y[2]) / 12.0
    inc = dt * (-y[:-2] + 8.0 * y[1:-1] + 5.0 * y[2:]) / 12.0
    out[2:] = out[1] + np.cumsum(inc)
    return out


def _check_pair(gamma1: PulseProfile, gamma2: PulseProfile) -> None:
    if not gamma1.grid_matches(gamma2):
        raise ValueError("pulse profiles must share the same time grid")
    peak = max(gamma1.magnitude.max(), gamma2.magnitude.max())
    if peak * gamma1.dt > 0.1:
        raise StabilityError(
            f"step-size instability: max|γ|·dt = {peak * gamma1.dt:.3f} exceeds 0.1"
        )


# ---------------------------------------------------------------------------
# amplitude dynamics


def integrate_amplitudes(
    gamma1: PulseProfile, gamma2: PulseProfile, topo: NetworkTopology
) -> TransferSolution:
    """Propagate the single-excitation amplitudes and noise-kernel moments.

    Alongside (A1, T, A2) the integrator carries the closed kernel-moment
    system (R, Z, Y, X, V, H) obtained by differentiating the receiver's
    input-noise kernels under the integral sign; the total noise weight is
    then I_D2 = H + V + 2 sqrt(1-ε) Re X, covering both the waveguide's
    thermal port and the loss port.
    """
    if topo.scatterer is not None:
        raise ValueError("integrate_amplitudes handles scatterer-free links only")
    _check_pair(gamma1, gamma2)
    dt = gamma1.dt
    n = gamma1.n
    root = np.sqrt(1.0 - topo.eps_ch)
    delta = topo.delta

    g1 = gamma1.magnitude
    g2 = gamma2.magnitude
    s1 = gamma1.sqrt_samples
    s2 = gamma2.sqrt_samples
    g1m = _mag_midpoints(g1)
    g2m = _mag_midpoints(g2)
    s1m = np.sqrt(g1m) * np.exp(-1j * _midpoints(gamma1.phase))
    s2m = np.sqrt(g2m) * np.exp(-1j * _midpoints(gamma2.phase))

    # per-sample coefficient tuples: (γ1, γ2, σ2* σ1, σ2 σ1*)
    def coef(gg1, gg2, ss1, ss2):
        p = np.conj(ss2) * ss1
        return np.stack([gg1 + 0j, gg2 + 0j, p, np.conj(p)])

    c_node = coef(g1, g2, s1, s2)
    c_mid = coef(g1m, g2m, s1m, s2m)

    def rhs(c, y):
        gg1, gg2, p, pc = c
        a1, tr, a2, rr, zz, yy, xx, vv, hh = y
        q = root * p
        qc = root * pc
        return np.array(
            [
                -(0.5 * gg1 + 1j * delta) * a1,
                -0.5 * gg2 * tr - q * a1,
                -0.5 * gg2 * a2,
                gg1 * (1.0 - rr),
                p - (0.5 * (gg1 + gg2) - 1j * delta) * zz,
                -(0.5 * (gg1 + gg2) + 1j * delta) * yy - qc * rr,
                -gg2 * xx - qc * zz,
                -gg2 * vv - (q * yy + np.conj(q * yy)),
                gg2 * (1.0 - hh),
            ]
        )

    y = np.zeros(9, dtype=complex)
    y[0] = 1.0  # A1(0)
    y[2] = 1.0  # A2(0)
    out = np.empty((n, 9), dtype=complex)
    out[0] = y
    for k in range(n - 1):
        c0 = c_node[:, k]
        cm = c_mid[:, k]
        c1 = c_node[:, k + 1]
        k1 = rhs(c0, y)
        k2 = rhs(cm, y + 0.5 * dt * k1)
        k3 = rhs(cm, y + 0.5 * dt * k2)
        k4 = rhs(c1, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = y

    a1, tr, a2 = out[:, 0], out[:, 1], out[:, 2]
    h = out[:, 8].real
    v = out[:, 7].real
    x = out[:, 6]
    i_d2 = h + v + 2.0 * root * x.real
    darkness = s1 * a1 + s2 * tr
    return TransferSolution(
        t=gamma1.times, a1=a1, transfer=tr, a2_coef=a2, i_d2=i_d2, darkness=darkness
    )


def synthesize_recovery_pulse(
    gamma1: PulseProfile,
    gamma_max: float,
    threshold: float = 1e-3,
    return_trajectory: bool = False,
):
    """Receiver pulse absorbing the sender's emission without reflection.

    Integrates the dark-state manifold pair A1' = -(γ1/2) A1, u' = γ1 |A1|²
    (u = |T|²) and reads off γ2 = γ1 |A1|²/u, which keeps the interference
    residual σ1 A1 + σ2 T identically zero. The 0/0 leading edge is
    regularized by seeding u so that γ2 starts exactly at the cap γ_max;
    |A1|² + |T|² is then conserved at every grid point to integrator accuracy
    (an unseeded start would instead leak the first e^{-γ t_p/2} of norm).
    γ2 is clamped to γ_max throughout.

    Raises ValueError when the sender pulse never releases enough amplitude
    for |T| to clear ``threshold``.
    """
    if gamma_max <= 0:
        raise ValueError("gamma_max must be positive")
    if np.abs(gamma1.phase).max() > 0:
        raise ValueError("synthesis expects a real (zero-phase) sender pulse")
    g1 = gamma1.magnitude
    if g1.max() == 0.0:
        raise ValueError("sender pulse is identically zero")
    if gamma_max * gamma1.dt > 0.1:
        raise StabilityError(
            f"step-size instability: γ_max·dt = {gamma_max * gamma1.dt:.3f} exceeds 0.1"
        )
    dt = gamma1.dt
    n = gamma1.n
    g1m = _mag_midpoints(g1)
    k0 = int(np.argmax(g1 > 0.0))

    a = 1.0
    u = g1[k0] / gamma_max  # seed: γ2(t_seed) = γ_max exactly
    a_out = np.ones(n)
    u_out = np.zeros(n)
    u_out[k0] = u
    for k in range(n - 1):
        if k < k0:
            continue
        c0, cm, c1 = g1[k], g1m[k], g1[k + 1]
        ka1 = -0.5 * c0 * a
        ku1 = c0 * a * a
        a2_ = a + 0.5 * dt * ka1
        ka2 = -0.5 * cm * a2_
        ku2 = cm * a2_ * a2_
        a3_ = a + 0.5 * dt * ka2
        ka3 = -0.5 * cm * a3_
        ku3 = cm * a3_ * a3_
        a4_ = a + dt * ka3
        ka4 = -0.5 * c1 * a4_
        ku4 = c1 * a4_ * a4_
        a = a + (dt / 6.0) * (ka1 + 2.0 * ka2 + 2.0 * ka3 + ka4)
        u = u + (dt / 6.0) * (ku1 + 2.0 * ku2 + 2.0 * ku3 + ku4)
        a_out[k + 1] = a
        u_out[k + 1] = u

    if np.sqrt(u_out[-1]) < threshold:
        raise ValueError(
            f"sender pulse too weak: final |T| = {np.sqrt(u_out[-1]):.2e} below {threshold}"
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        g2 = np.where(u_out > 0.0, g1 * a_out**2 / np.where(u_out > 0, u_out, 1.0), 0.0)
    g2 = np.minimum(g2, gamma_max)
    pulse = PulseProfile(gamma1.t0, dt, g2)
    if not return_trajectory:
        return pulse
    traj = DarkStateTrajectory(t=gamma1.times, a1=a_out.astype(complex), transfer=-np.sqrt(u_out) + 0j)
    return pulse, traj


# ---------------------------------------------------------------------------
# thermal second moments


def moment_trajectories(
    gamma1: PulseProfile,
    gamma2: PulseProfile,
    topo: NetworkTopology,
    n1_0: float,
    n2_0: float = 0.0,
) -> MomentTrajectory:
    """Occupation moments (n1, n2, <a1† a2>) of the cascaded pair.

    Both nodes relax toward the channel occupation N_ch at their instantaneous
    rates; the cross moment carries the coherent transfer. A thermal initial
    state n1(0) = n2(0) = N_ch is stationary.
    """
    if topo.scatterer is not None:
        raise ValueError("moment_trajectories handles scatterer-free links only")
    _check_pair(gamma1, gamma2)
    dt = gamma1.dt
    n = gamma1.n
    root = np.sqrt(1.0 - topo.eps_ch)
    n_ch = topo.n_ch
    delta = topo.delta

    g1, g2 = gamma1.magnitude, gamma2.magnitude
    s1, s2 = gamma1.sqrt_samples, gamma2.sqrt_samples
    g1m, g2m = _mag_midpoints(g1), _mag_midpoints(g2)
    s1m = np.sqrt(g1m) * np.exp(-1j * _midpoints(gamma1.phase))
    s2m = np.sqrt(g2m) * np.exp(-1j * _midpoints(gamma2.phase))
    c_node = np.stack([g1 + 0j, g2 + 0j, np.conj(s2) * s1])
    c_mid = np.stack([g1m + 0j, g2m + 0j, np.conj(s2m) * s1m])

    def rhs(c, y):
        gg1, gg2, q = c
        n1, n2, cc = y
        qcbar = q * np.conj(cc)
        return np.array(
            [
                -gg1 * (n1 - n_ch),
                -gg2 * (n2 - n_ch) - root * (qcbar + np.conj(qcbar)),
                (1j * delta - 0.5 * (gg1 + gg2)) * cc - root * q * (n1 - n_ch),
            ]
        )

    y = np.array([n1_0, n2_0, 0.0], dtype=complex)
    out = np.empty((n, 3), dtype=complex)
    out[0] = y
    for k in range(n - 1):
        c0, cm, c1 = c_node[:, k], c_mid[:, k], c_node[:, k + 1]
        k1 = rhs(c0, y)
        k2 = rhs(cm, y + 0.5 * dt * k1)
        k3 = rhs(cm, y + 0.5 * dt * k2)
        k4 = rhs(c1, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = y
    return MomentTrajectory(
        t=gamma1.times, n1=out[:, 0].real, n2=out[:, 1].real, cross=out[:, 2]
    )


def detector_signal(
    gamma1: PulseProfile,
    omega: float,
    n_ch: float,
    n1_0: float,
    delta: float = 0.0,
) -> MomentTrajectory:
    """Occupation of a bandwidth-Ω filter cavity monitoring the sender output.

    The filter integrates the outgoing field with rate Ω; its exact moments
    (n1, m = <b† a1>, N_filter) are integrated alongside the broadband
    adiabatic estimate N_out ≈ (4γ1/Ω)|A1|² n1(0) + N_ch (1 - (4γ1/Ω)|A1|²),
    valid for Ω ≫ γ1. The filter starts equilibrated with the channel,
    N_filter(0) = N_ch.
    """
    if omega <= 0:
        raise ValueError("filter bandwidth must be positive")
    dt = gamma1.dt
    n = gamma1.n
    g1 = gamma1.magnitude
    if max(g1.max(), omega) * dt > 0.1:
        raise StabilityError("step-size instability: (max γ1, Ω)·dt exceeds 0.1")
    g1m = _mag_midpoints(g1)
    c_node = np.stack([g1, np.sqrt(g1 * omega)])
    c_mid = np.stack([g1m, np.sqrt(g1m * omega)])

    def rhs(c, y):
        gg1, mix = c
        n1, m, b = y
        return np.array(
            [
                -gg1 * (n1 - n_ch),
                -(0.5 * (gg1 + omega) + 1j * delta) * m - mix * (n1 - n_ch),
                -omega * (b - n_ch) - mix * (m + np.conj(m)),
            ]
        )

    y = np.array([n1_0, 0.0, n_ch], dtype=complex)
    out = np.empty((n, 3), dtype=complex)
    out[0] = y
    for k in range(n - 1):
        c0, cm, c1 = c_node[:, k], c_mid[:, k], c_node[:, k + 1]
        k1 = rhs(c0, y)
        k2 = rhs(cm, y + 0.5 * dt * k1)
        k3 = rhs(cm, y + 0.5 * dt * k2)
        k4 = rhs(c1, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = y

    survival = np.exp(-_cumulative_simpson(g1, dt))  # |A1(t)|²
    weight = 4.0 * g1 * survival / omega
    approx = weight * n1_0 + n_ch * (1.0 - weight)
    return MomentTrajectory(
        t=gamma1.times,
        n1=out[:, 0].real,
        cross=out[:, 1],
        n_filter=out[:, 2].real,
        n_filter_approx=approx,
    )


# ---------------------------------------------------------------------------
# scattering defect in the link


def _interp_delayed(buf: np.ndarray, idx: float) -> complex:
    """4-point interpolation of a (known) history buffer at fractional index."""
    if idx <= 0.0:
        return 0.0
    base = int(idx)
    frac = idx - base
    if frac < 1e-12:
        return buf[base]
    if base < 1 or base + 2 >= buf.size:
        lo = buf[base]
        hi = buf[base + 1] if base + 1 < buf.size else buf[base]
        return lo + frac * (hi - lo)
    b0, b1, b2, b3 = buf[base - 1], buf[base], buf[base + 1], buf[base + 2]
    # cubic Lagrange on the surrounding four samples
    return (
        -b0 * frac * (frac - 1.0) * (frac - 2.0) / 6.0
        + b1 * (frac + 1.0) * (frac - 1.0) * (frac - 2.0) / 2.0
        - b2 * (frac + 1.0) * frac * (frac - 2.0) / 2.0
        + b3 * (frac + 1.0) * frac * (frac - 1.0) / 6.0
    )


def simulate_scatterer_network(
    gamma1: PulseProfile, gamma2: PulseProfile, topo: NetworkTopology
) -> ScattererSolution:
    """Signal-sector run of sender ↔ scatterer feedback loop feeding the receiver.

    The scatterer reflects r_s of the delayed sender output back into the
    sender and transmits t_s of the same delayed sample toward the receiver
    (lossless unidirectional link; channel loss is outside this model). The
    delay is rounded to whole grid steps and the rounding error reported.
    A zero-delay loop is closed algebraically, f_out = σ1 α1/(1 - r_s).
    """
    _check_pair(gamma1, gamma2)
    if topo.eps_ch != 0.0:
        raise ValueError("scatterer model assumes a lossless link")
    scat = topo.scatterer if topo.scatterer is not None else Scatterer(0.0, 0.0)
    dt = gamma1.dt
    n = gamma1.n
    delta = topo.delta
    r_s = complex(scat.reflectivity)
    t_s = scat.transmission
    d = int(round(scat.delay / dt))
    rounding = abs(scat.delay - d * dt)
    if 0 < d < 3:
        raise ValueError("delay must be zero or at least three grid steps")

    s1 = gamma1.sqrt_samples
    s2 = gamma2.sqrt_samples
    g1 = gamma1.magnitude
    g2 = gamma2.magnitude
    g1m = _mag_midpoints(g1)
    g2m = _mag_midpoints(g2)
    s1m = np.sqrt(g1m) * np.exp(-1j * _midpoints(gamma1.phase))
    s2m = np.sqrt(g2m) * np.exp(-1j * _midpoints(gamma2.phase))

    alpha1 = np.zeros(n, dtype=complex)
    alpha2 = np.zeros(n, dtype=complex)
    phi_out1 = np.zeros(n, dtype=complex)
    alpha1[0] = 1.0

    no_delay_gain = 1.0 / (1.0 - r_s) if d == 0 and r_s != 1.0 else 1.0

    def fin1(k_float: float) -> complex:
        # sender feedback r_s f_out,1(t - τ); index in grid units
        if d == 0:
            return 0.0  # folded into the algebraic loop below
        return r_s * _interp_delayed(phi_out1, k_float - d)

    phi_out1[0] = (no_delay_gain if d == 0 else 1.0) * s1[0] * alpha1[0]

    for k in range(n - 1):
        a = alpha1[k]
        if d == 0:
            # algebraic loop: f_in,1 = r_s f_out,1, f_out,1 = f_in,1 + σ1 α1
            k1 = -(0.5 * g1[k] + 1j * delta) * a - np.conj(s1[k]) * (
                r_s * no_delay_gain * s1[k] * a
            )
            a_stage = a + 0.5 * dt * k1
            k2 = -(0.5 * g1m[k] + 1j * delta) * a_stage - np.conj(s1m[k]) * (
                r_s * no_delay_gain * s1m[k] * a_stage
            )
            a_stage = a + 0.5 * dt * k2
            k3 = -(0.5 * g1m[k] + 1j * delta) * a_stage - np.conj(s1m[k]) * (
                r_s * no_delay_gain * s1m[k] * a_stage
            )
            a_stage = a + dt * k3
            k4 = -(0.5 * g1[k + 1] + 1j * delta) * a_stage - np.conj(s1[k + 1]) * (
                r_s * no_delay_gain * s1[k + 1] * a_stage
            )
        else:
            f0 = fin1(float(k))
            fm = fin1(k + 0.5)
            f1 = fin1(float(k + 1))
            k1 = -(0.5 * g1[k] + 1j * delta) * a - np.conj(s1[k]) * f0
            k2 = -(0.5 * g1m[k] + 1j * delta) * (a + 0.5 * dt * k1) - np.conj(s1m[k]) * fm
            k3 = -(0.5 * g1m[k] + 1j * delta) * (a + 0.5 * dt * k2) - np.conj(s1m[k]) * fm
            k4 = -(0.5 * g1[k + 1] + 1j * delta) * (a + dt * k3) - np.conj(s1[k + 1]) * f1
        alpha1[k + 1] = a + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if d == 0:
            phi_out1[k + 1] = no_delay_gain * s1[k + 1] * alpha1[k + 1]
        else:
            phi_out1[k + 1] = fin1(float(k + 1)) + s1[k + 1] * alpha1[k + 1]

    # forward feed: what the receiver sees
    phi_in2 = np.zeros(n, dtype=complex)
    if d == 0:
        phi_in2[:] = t_s * phi_out1
    else:
        phi_in2[d:] = t_s * phi_out1[:-d]
    phi_in2_mid = _midpoints(phi_in2)

    for k in range(n - 1):
        a = alpha2[k]
        k1 = -0.5 * g2[k] * a - np.conj(s2[k]) * phi_in2[k]
        k2 = -0.5 * g2m[k] * (a + 0.5 * dt * k1) - np.conj(s2m[k]) * phi_in2_mid[k]
        k3 = -0.5 * g2m[k] * (a + 0.5 * dt * k2) - np.conj(s2m[k]) * phi_in2_mid[k]
        k4 = -0.5 * g2[k + 1] * (a + dt * k3) - np.conj(s2[k + 1]) * phi_in2[k + 1]
        alpha2[k + 1] = a + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    f_out2 = phi_in2 + s2 * alpha2
    return ScattererSolution(
        t=gamma1.times,
        alpha1=alpha1,
        alpha2=alpha2,
        phi_out1=phi_out1,
        phi_in2=phi_in2,
        f_out2=f_out2,
        delay_steps=d,
        delay_rounding=rounding,
    )


def optimize_recovery_with_scatterer(
    gamma1: PulseProfile, topo: NetworkTopology, gamma_max: float
) -> OptimizedRecovery:
    """Receiver pulse (magnitude and phase) impedance-matched to the distorted packet.

    The receiver has no back-action on the sender/scatterer loop, so the
    incident packet φ_in,2(t) is computed once; the matching condition
    σ2 α2 = -φ_in,2 then absorbs it without reflection. Wherever the required
    |γ2| would exceed γ_max (in particular at the leading edge, where α2 ≈ 0)
    the coupling is clamped at γ_max with the matched phase, and the reflected
    remainder is reported. Without a scatterer and at δ = 0 this reduces to
    the dark-state synthesis from the sender pulse alone.
    """
    if gamma_max <= 0:
        raise ValueError("gamma_max must be positive")
    if gamma_max * gamma1.dt > 0.1:
        raise StabilityError("step-size instability: γ_max·dt exceeds 0.1")
    idle = PulseProfile(gamma1.t0, gamma1.dt, np.zeros(gamma1.n))
    probe = simulate_scatterer_network(gamma1, idle, topo)
    phi = probe.phi_in2
    phim = _midpoints(phi)
    dt = gamma1.dt
    n = gamma1.n
    seed_level = 1e-8 * np.abs(phi).max()

    root_max = np.sqrt(gamma_max)

    # matching condition: σ2 α2 = -φ_in,2  →  σ2 = -φ/α2, clamped at sqrt(γ_max)
    def sigma2(phi_v: complex, a2: complex) -> complex:
        if abs(phi_v) <= seed_level:
            return 0.0
        if abs(a2) * root_max <= abs(phi_v):
            return -root_max * phi_v / abs(phi_v)
        return -phi_v / a2

    def rhs(phi_v, a2):
        s2 = sigma2(phi_v, a2)
        return -0.5 * abs(s2) ** 2 * a2 - np.conj(s2) * phi_v

    alpha2 = np.zeros(n, dtype=complex)
    a = 0.0 + 0.0j
    for k in range(n - 1):
        k1 = rhs(phi[k], a)
        k2 = rhs(phim[k], a + 0.5 * dt * k1)
        k3 = rhs(phim[k], a + 0.5 * dt * k2)
        k4 = rhs(phi[k + 1], a + dt * k3)
        a = a + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        alpha2[k + 1] = a

    sig = np.array([sigma2(phi[k], alpha2[k]) for k in range(n)], dtype=complex)
    mag = np.abs(sig) ** 2
    raw_phase = np.where(np.abs(sig) > 0, -np.angle(sig), 0.0)
    # unwrap only over the driven region; hold the phase flat before seeding
    live = np.abs(sig) > 0
    phase = np.zeros(n)
    if live.any():
        first = int(np.argmax(live))
        phase[first:] = np.unwrap(raw_phase[first:])
        # γ2 = |γ2| e^{-2iφ} leaves φ free mod π; pick the branch continuous
        # with the sender-frame rotation δ·t accrued by packet arrival
        target = topo.delta * gamma1.times[first]
        phase[first:] += np.pi * np.round((target - phase[first]) / np.pi)
    pulse = PulseProfile(gamma1.t0, dt, mag, phase)

    final = simulate_scatterer_network(gamma1, pulse, topo)
    leak = _cumulative_simpson(np.abs(final.f_out2) ** 2, dt)
    captured = float(np.abs(final.alpha2[-1]) ** 2)
    clamped = float(np.mean(mag >= gamma_max * (1.0 - 1e-12)))
    return OptimizedRecovery(
        pulse=pulse,
        solution=final,
        captured=captured,
        reflected_energy=float(leak[-1]),
        clamped_fraction=clamped,
        capture_complete=bool(leak[-1] < 1e-3),
    )
