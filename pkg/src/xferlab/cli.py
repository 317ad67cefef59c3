"""Configuration-driven experiment runner emitting deterministic CSV artifacts.

Each experiment reproduces one of the package's standard data sets:

    fig2    toy swap network: node populations and average fidelity vs time
    fig3    cascaded transfer: populations and effective fidelity, amplitude
            traces, and the filtered detector signal
    fig4    encoded-channel fidelity sweep over channel loss and occupation
    fig5    impedance-matched receiver pulse against a scattering defect
    custom  any of the above with every parameter and grid overridable

Data files are plain CSV — one header line, floats printed with 12
significant digits, LF line endings — so two runs with the same
configuration and package version are byte identical. ``manifest.json``
records the configuration echo, grid parameters, numerical defect measures,
wall-clock time and a sha256 per data file; the wall-clock entry makes the
manifest itself intentionally non-reproducible.

Configuration precedence: command-line flags > config file (flat TOML
key/value) > per-experiment defaults.

Exit codes: 0 success, 2 configuration error (nothing written), 3 numerical
guard tripped during the run, 4 filesystem failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .bosoncode import corrected_block_channel, logical_fidelity, make_code
from .cascade import (
    NetworkTopology,
    PulseProfile,
    Scatterer,
    StabilityError,
    detector_signal,
    integrate_amplitudes,
    moment_trajectories,
    optimize_recovery_with_scatterer,
    stannigel_pulse,
)
from .hilbert import QubitState, TruncationError, thermal_tail
from .thermch import qubit_block_channel
from .toynet import ToyConfig, simulate_toy_transfer

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunManifest",
    "validate_config",
    "run_experiment",
    "main",
]

_FIGURES = ("fig2", "fig3", "fig4", "fig5")
_EXPERIMENTS = _FIGURES + ("custom",)
_CODES = ("none", "loss", "lossgain")
_CODE_DIM = 30  # loss-and-gain words reach |9>; thermal broadening needs headroom


class ConfigError(ValueError):
    """Invalid experiment configuration (reported before anything is written)."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment run: which data set to produce and with what parameters.

    ``None`` means "use the experiment's default". ``gamma`` is the coupling
    rate: the node-waveguide rate γ for the cascaded experiments and the swap
    coupling g for the toy model. ``eps_grid``/``nch_values`` define the fig4
    sweep axes; ``base`` selects which pipeline a ``custom`` run drives.
    """

    experiment: str
    out_dir: str = "xferlab-out"
    gamma: float = 1.0
    t_p: float | None = None
    dt: float | None = None
    n_ch: float | None = None
    eps: float | None = None
    code: str = "lossgain"
    seed: int = 0
    omega: float | None = None
    n_loc: int | None = None
    delta: float | None = None
    reflectivity: float | None = None
    scatter_delay: float | None = None
    gamma_max: float | None = None
    eps_grid: tuple[float, ...] | None = None
    nch_values: tuple[float, ...] | None = None
    base: str | None = None


@dataclass(frozen=True)
class RunManifest:
    """What a run produced: configuration echo, grids, defects, checksums."""

    config: dict
    version: str
    grid: dict
    defects: dict
    wall_clock_seconds: float
    files: dict


# ---------------------------------------------------------------------------
# parameter resolution and validation


def _cascade_defaults(cfg: ExperimentConfig) -> tuple[float, float, float]:
    """(t_p, dt, n_ch) for the cascaded experiments."""
    t_p = cfg.t_p if cfg.t_p is not None else 20.0 / cfg.gamma
    dt = cfg.dt if cfg.dt is not None else 1e-3 / cfg.gamma
    n_ch = cfg.n_ch if cfg.n_ch is not None else 5.0
    return t_p, dt, n_ch


def _fig5_defaults(cfg: ExperimentConfig):
    t_p = cfg.t_p if cfg.t_p is not None else 20.0 / cfg.gamma
    dt = cfg.dt if cfg.dt is not None else 2e-3 / cfg.gamma
    refl = cfg.reflectivity if cfg.reflectivity is not None else 0.6
    delay = cfg.scatter_delay if cfg.scatter_delay is not None else 0.15 * t_p
    delta = cfg.delta if cfg.delta is not None else cfg.gamma
    gamma_max = cfg.gamma_max if cfg.gamma_max is not None else 20.0 * cfg.gamma
    return t_p, dt, refl, delay, delta, gamma_max


def _fig4_axes(cfg: ExperimentConfig) -> tuple[tuple[float, ...], tuple[float, ...]]:
    if cfg.eps_grid is not None:
        eps_axis = tuple(sorted(cfg.eps_grid))
    elif cfg.eps is not None:
        eps_axis = (cfg.eps,)
    else:
        eps_axis = tuple(np.geomspace(1e-3, 0.2, 21))
    if cfg.nch_values is not None:
        nch_axis = tuple(sorted(cfg.nch_values))
    elif cfg.n_ch is not None:
        nch_axis = (cfg.n_ch,)
    else:
        nch_axis = (0.0, 2.0)
    return eps_axis, nch_axis


def validate_config(cfg: ExperimentConfig) -> list[str]:
    """All configuration violations, empty when the run may proceed."""
    bad: list[str] = []
    if cfg.experiment not in _EXPERIMENTS:
        bad.append(f"experiment must be one of {_EXPERIMENTS}, got {cfg.experiment!r}")
        return bad
    experiment = cfg.experiment
    if experiment == "custom":
        if cfg.base not in _FIGURES:
            bad.append(f"custom runs need base = one of {_FIGURES}, got {cfg.base!r}")
            return bad
        experiment = cfg.base

    if not cfg.gamma > 0:
        bad.append("gamma must be positive")
    if cfg.t_p is not None and not cfg.t_p > 0:
        bad.append("tp must be positive")
    if cfg.dt is not None and not cfg.dt > 0:
        bad.append("dt must be positive")
    if cfg.n_ch is not None and cfg.n_ch < 0:
        bad.append("nch must be non-negative")
    if cfg.eps is not None and not 0.0 <= cfg.eps <= 1.0:
        bad.append("eps must lie in [0, 1]")
    if cfg.code not in _CODES:
        bad.append(f"code must be one of {_CODES}")
    if cfg.seed < 0:
        bad.append("seed must be non-negative")
    if cfg.omega is not None and not cfg.omega > 0:
        bad.append("omega must be positive")
    if cfg.n_loc is not None and cfg.n_loc < 2:
        bad.append("n_loc must be at least 2")
    if cfg.eps_grid is not None and (
        len(cfg.eps_grid) == 0 or any(not 0.0 <= e <= 1.0 for e in cfg.eps_grid)
    ):
        bad.append("eps_grid entries must lie in [0, 1]")
    if cfg.nch_values is not None and (
        len(cfg.nch_values) == 0 or any(n < 0 for n in cfg.nch_values)
    ):
        bad.append("nch_values entries must be non-negative")
    if cfg.reflectivity is not None and not abs(cfg.reflectivity) < 1.0:
        bad.append("reflectivity magnitude must be below 1")
    if cfg.scatter_delay is not None and cfg.scatter_delay < 0:
        bad.append("scatter_delay must be non-negative")
    if cfg.gamma_max is not None and not cfg.gamma_max > 0:
        bad.append("gamma_max must be positive")
    if bad:
        return bad

    if experiment == "fig2":
        n_ch = cfg.n_ch if cfg.n_ch is not None else 2.0
        try:
            ToyConfig(g=cfg.gamma, n_ch=n_ch, n_loc=cfg.n_loc, t_p=cfg.t_p)
        except ValueError as exc:
            bad.append(f"toy network: {exc}")
    elif experiment == "fig3":
        t_p, dt, n_ch = _cascade_defaults(cfg)
        omega = cfg.omega if cfg.omega is not None else 50.0 * cfg.gamma
        if cfg.gamma * t_p < 5.0:
            bad.append(f"pulse window gamma*tp = {cfg.gamma * t_p:.2f} too short (need >= 5)")
        if dt > 1e-2 / cfg.gamma:
            bad.append("dt too coarse for the pulse leading edge (need dt <= 1e-2/gamma)")
        if max(cfg.gamma, omega) * dt >= 0.1:
            bad.append("unstable grid: max(gamma, omega)*dt must stay below 0.1")
    elif experiment == "fig4":
        _eps_axis, nch_axis = _fig4_axes(cfg)
        hottest = max(nch_axis)
        if thermal_tail(hottest, _CODE_DIM) >= 1e-4:
            bad.append(
                f"channel occupation {hottest} leaves a thermal tail above the "
                f"dim-{_CODE_DIM} code space"
            )
    elif experiment == "fig5":
        t_p, dt, _refl, _delay, _delta, gamma_max = _fig5_defaults(cfg)
        if cfg.gamma * t_p < 5.0:
            bad.append(f"pulse window gamma*tp = {cfg.gamma * t_p:.2f} too short (need >= 5)")
        if dt > 1e-2 / cfg.gamma:
            bad.append("dt too coarse for the pulse leading edge (need dt <= 1e-2/gamma)")
        if gamma_max * dt >= 0.1:
            bad.append("unstable grid: gamma_max*dt must stay below 0.1")
    return bad


# ---------------------------------------------------------------------------
# experiment runners


def _effective_fidelity(transfer: np.ndarray, i_d2: np.ndarray) -> np.ndarray:
    """Average qubit fidelity of the instantaneous effective receiver channel.

    At each time the receiver holds the transmitted amplitude T plus I_D2
    thermal quanta — a loss channel of strength ε = 1 − |T|² whose
    environment carries N = I_D2/ε; the deterministic transfer phase is
    assumed undone by the receiver frame.
    """
    eps = np.clip(1.0 - np.abs(transfer) ** 2, 0.0, 1.0)
    noise = np.maximum(i_d2, 0.0)
    out = np.empty(eps.size)
    for k in range(eps.size):
        n_env = noise[k] / max(eps[k], 1e-12)
        b = qubit_block_channel(eps[k], n_env)
        f_e = 0.25 * (b[0, 0, 0, 0] + b[0, 1, 0, 1] + b[1, 0, 1, 0] + b[1, 1, 1, 1])
        tr2 = 0.5 * (b[0, 0, 0, 0] + b[0, 0, 1, 1] + b[1, 1, 0, 0] + b[1, 1, 1, 1])
        out[k] = np.real(2.0 * f_e + tr2) / 3.0
    return out


def _run_fig2(cfg: ExperimentConfig):
    n_ch = cfg.n_ch if cfg.n_ch is not None else 2.0
    toy = ToyConfig(g=cfg.gamma, n_ch=n_ch, n_loc=cfg.n_loc, t_p=cfg.t_p)
    num = 201 if cfg.dt is None else max(2, int(round(toy.duration / cfg.dt)) + 1)
    res = simulate_toy_transfer(toy, QubitState(0.0, 1.0), num_times=num)
    total = res.population_node1 + res.population_channel + res.population_node2
    files = {
        "populations.csv": (
            ("t", "n1", "n2", "fbar"),
            (res.times, res.population_node1, res.population_node2, res.average_fidelity_trace),
        )
    }
    grid = {"dt": float(res.times[1] - res.times[0]), "rows": num, "t_final": float(res.times[-1])}
    defects = {
        "excitation_drift": float(np.max(np.abs(total - total[0]))),
        "final_average_infidelity": float(1.0 - res.average_fidelity),
    }
    return files, grid, defects


def _run_fig3(cfg: ExperimentConfig):
    t_p, dt, n_ch = _cascade_defaults(cfg)
    eps = cfg.eps if cfg.eps is not None else 0.0
    omega = cfg.omega if cfg.omega is not None else 50.0 * cfg.gamma
    delta = cfg.delta if cfg.delta is not None else 0.0
    release = stannigel_pulse(cfg.gamma, t_p, dt)
    capture = release.mirrored()
    topo = NetworkTopology(eps_ch=eps, n_ch=n_ch, delta=delta)
    sol = integrate_amplitudes(release, capture, topo)
    mom = moment_trajectories(release, capture, topo, n1_0=1.0, n2_0=0.0)
    det = detector_signal(release, omega, n_ch, n1_0=1.0, delta=delta)
    fbar = _effective_fidelity(sol.transfer, sol.i_d2)
    files = {
        "populations.csv": (("t", "n1", "n2", "fbar"), (mom.t, mom.n1, mom.n2, fbar)),
        "amplitudes.csv": (
            ("t", "reA1", "imA1", "reT", "imT", "absA2", "I_D2", "darkness"),
            (
                sol.t,
                sol.a1.real,
                sol.a1.imag,
                sol.transfer.real,
                sol.transfer.imag,
                np.abs(sol.a2_coef),
                sol.i_d2,
                np.abs(sol.darkness),
            ),
        ),
        "detector.csv": (
            ("t", "n_out_exact", "n_out_eq14"),
            (det.t, det.n_filter, det.n_filter_approx),
        ),
    }
    grid = {"dt": dt, "rows": int(sol.t.size), "t_p": t_p}
    defects = {
        "norm_identity_max": float(np.max(np.abs(sol.norm_residual()))),
        "final_transfer_deficit": float(1.0 - np.abs(sol.transfer[-1]) ** 2),
        "final_noise_weight": float(sol.i_d2[-1]),
    }
    return files, grid, defects


def _run_fig4(cfg: ExperimentConfig):
    eps_axis, nch_axis = _fig4_axes(cfg)
    trivial = make_code("none", _CODE_DIM)
    code1 = make_code("loss", _CODE_DIM)
    code2 = make_code("lossgain", _CODE_DIM)
    rows = []
    for e in eps_axis:
        for n in nch_axis:
            rows.append(
                (
                    e,
                    n,
                    logical_fidelity(trivial, e, n, corrected=False),
                    logical_fidelity(code1, e, n, corrected=True),
                    logical_fidelity(code2, e, n, corrected=True),
                )
            )
    cols = tuple(np.array(c) for c in zip(*rows))
    files = {
        "fidelity_sweep.csv": (
            ("eps", "nch", "fbar_uncorrected", "fbar_code1", "fbar_code2"),
            cols,
        )
    }
    grid = {
        "eps_points": len(eps_axis),
        "nch_points": len(nch_axis),
        "fock_dim": _CODE_DIM,
    }
    # worst-case trace preservation of the corrected pipeline on this grid
    probe = corrected_block_channel(code2, max(eps_axis), max(nch_axis))
    dev = 0.0
    for i in range(2):
        for j in range(2):
            unit = np.zeros((2, 2), dtype=complex)
            unit[i, j] = 1.0
            dev = max(dev, abs(np.trace(probe(unit)) - (1.0 if i == j else 0.0)))
    defects = {"corrected_tp_defect": float(dev)}
    return files, grid, defects


def _run_fig5(cfg: ExperimentConfig):
    t_p, dt, refl, delay, delta, gamma_max = _fig5_defaults(cfg)
    base = stannigel_pulse(cfg.gamma, t_p, dt)
    # hold the sender open for one more window so late echoes are released
    plateau = np.full(int(round(t_p / dt)), cfg.gamma)
    release = PulseProfile(0.0, dt, np.concatenate([base.magnitude, plateau]))
    topo = NetworkTopology(delta=delta, scatterer=Scatterer(refl, delay))
    opt = optimize_recovery_with_scatterer(release, topo, gamma_max)
    files = {
        "pulse.csv": (
            ("t", "abs_gamma2", "phi2"),
            (opt.pulse.times, opt.pulse.magnitude, opt.pulse.phase),
        )
    }
    grid = {"dt": dt, "rows": int(opt.pulse.n), "t_p": t_p, "window": float(opt.pulse.times[-1])}
    defects = {
        "capture_deficit": float(1.0 - opt.captured),
        "reflected_energy": float(opt.reflected_energy),
        "clamped_fraction": float(opt.clamped_fraction),
        "energy_account_max_dev": float(np.max(np.abs(opt.solution.energy_account() - 1.0))),
    }
    return files, grid, defects


_RUNNERS = {"fig2": _run_fig2, "fig3": _run_fig3, "fig4": _run_fig4, "fig5": _run_fig5}


# ---------------------------------------------------------------------------
# artifact writing


def _format_value(value: float) -> str:
    return f"{float(value):.12g}"


def _write_csv(path: Path, header: tuple[str, ...], columns) -> None:
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(_format_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n", newline="\n")


def _config_echo(cfg: ExperimentConfig) -> dict:
    echo = asdict(cfg)
    for key, value in echo.items():
        if isinstance(value, tuple):
            echo[key] = list(value)
    return echo


def run_experiment(cfg: ExperimentConfig) -> RunManifest:
    """Produce the experiment's data files and manifest under cfg.out_dir.

    Raises ConfigError before writing anything when the configuration is
    invalid; numerical guard failures from the physics modules propagate.
    """
    violations = validate_config(cfg)
    if violations:
        raise ConfigError("; ".join(violations))
    start = time.perf_counter()
    experiment = cfg.base if cfg.experiment == "custom" else cfg.experiment
    files, grid, defects = _RUNNERS[experiment](cfg)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    checksums = {}
    for name in sorted(files):
        header, columns = files[name]
        path = out / name
        _write_csv(path, header, columns)
        checksums[name] = hashlib.sha256(path.read_bytes()).hexdigest()

    manifest = RunManifest(
        config=_config_echo(cfg),
        version=__version__,
        grid=grid,
        defects=defects,
        wall_clock_seconds=time.perf_counter() - start,
        files=checksums,
    )
    (out / "manifest.json").write_text(json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# command line


_FILE_KEYS = {
    "out": "out_dir",
    "gamma": "gamma",
    "tp": "t_p",
    "dt": "dt",
    "nch": "n_ch",
    "eps": "eps",
    "code": "code",
    "seed": "seed",
    "omega": "omega",
    "n_loc": "n_loc",
    "delta": "delta",
    "reflectivity": "reflectivity",
    "scatter_delay": "scatter_delay",
    "gamma_max": "gamma_max",
    "eps_grid": "eps_grid",
    "nch_values": "nch_values",
    "base": "base",
}
_LIST_KEYS = {"eps_grid", "nch_values"}
_TEXT_KEYS = {"out", "code", "base"}
_INT_KEYS = {"seed", "n_loc"}


def _load_config_file(path: str) -> dict:
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config file: {exc}") from exc
    unknown = sorted(set(raw) - set(_FILE_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values: dict = {}
    for key, value in raw.items():
        field = _FILE_KEYS[key]
        if key in _LIST_KEYS:
            if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
            ):
                raise ConfigError(f"{key} must be a list of numbers")
            values[field] = tuple(float(v) for v in value)
        elif key in _TEXT_KEYS:
            if not isinstance(value, str):
                raise ConfigError(f"{key} must be a string")
            values[field] = value
        elif key in _INT_KEYS:
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{key} must be an integer")
            values[field] = value
        else:
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"{key} must be a number")
            values[field] = float(value)
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xferlab",
        description="Reproduce the package's standard data sets as deterministic CSV files.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    summaries = {
        "fig2": "toy swap network populations and fidelity",
        "fig3": "cascaded transfer traces and detector signal",
        "fig4": "encoded-channel fidelity sweep",
        "fig5": "matched receiver pulse against a scatterer",
        "custom": "any experiment with explicit parameters (needs a config file)",
    }
    for name in _EXPERIMENTS:
        p = sub.add_parser(name, help=summaries[name])
        p.add_argument("--config", help="flat TOML config file")
        p.add_argument("--out", help="output directory (default xferlab-out)")
        p.add_argument("--gamma", type=float, help="coupling rate")
        p.add_argument("--tp", type=float, help="pulse window / swap duration")
        p.add_argument("--nch", type=float, help="channel thermal occupation")
        p.add_argument("--eps", type=float, help="channel loss")
        p.add_argument("--code", choices=_CODES, help="bosonic code variant")
        p.add_argument("--dt", type=float, help="integration step")
        p.add_argument("--seed", type=int, help="seed echoed into the manifest")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    flag_values = {
        "out_dir": args.out,
        "gamma": args.gamma,
        "t_p": args.tp,
        "n_ch": args.nch,
        "eps": args.eps,
        "code": args.code,
        "dt": args.dt,
        "seed": args.seed,
    }
    try:
        merged = _load_config_file(args.config) if args.config else {}
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    cfg = ExperimentConfig(experiment=args.experiment, **merged)

    violations = validate_config(cfg)
    if violations:
        for line in violations:
            print(f"configuration error: {line}", file=sys.stderr)
        return 2
    try:
        manifest = run_experiment(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (StabilityError, TruncationError, FloatingPointError, ValueError) as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 4
    names = ", ".join(sorted(manifest.files))
    print(f"wrote {names} + manifest.json to {cfg.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
