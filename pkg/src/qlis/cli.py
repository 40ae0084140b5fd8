"""Command-line front end: named experiments driven by TOML configs.

Experiments: hom-scan (movable-BS coincidence over the wavepacket delay),
spdc-otoc (narrowband pair-source scan), phase-cycle (gated coincidences
over a set of exchange phases plus the solved pathway cross term), td-gate
(fixed-delay gated signal over the gate separation), tf-map (mixed
time-frequency coincidence map), algebra-check (operator-algebra residual
report).

Configs are TOML with explicit unit suffixes in key names (_s, _rad_per_s);
unknown keys are hard errors so a typo cannot silently change the physics.
Runs are deterministic: identical configs produce byte-identical CSV.

Exit codes: 0 success, 2 configuration error, 3 numeric/coverage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .algebra import (beam_splitter, build_fock_operators, casimir_check,
                      commutator_residuals, delayed_balanced_bs, squeezer)
from .errors import (CapabilityError, ConfigurationError, CoverageError,
                     GateKindError, QlisError, TruncationOverflowError,
                     ValidationError)
from .matter import CorrelatorSpec, MatterSystem, load_matter, multipoint_correlator
from .signals import (DetectionGate, HomConfig, SignalScan, SpdcParameters,
                      config_hash, exchange_cross_term, fixed_delay_signal,
                      gated_coincidence, hom_coincidence,
                      narrowband_spdc_coincidence, run_scan,
                      time_frequency_map)
from .states import (FrequencyGrid, delta_like_envelope, gaussian_envelope,
                     product_amplitude, spdc_amplitude)

_EXPERIMENTS = ("hom-scan", "spdc-otoc", "phase-cycle", "td-gate", "tf-map",
                "algebra-check")


class ConfigError(QlisError):
    """Invalid experiment configuration (reported with field paths)."""


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

class _Section:
    """Mapping wrapper that tracks which keys were consumed."""

    def __init__(self, data: dict, path: str = ""):
        if not isinstance(data, dict):
            raise ConfigError(f"section {path or '<root>'} must be a table")
        self._data = data
        self._path = path
        self._seen: set[str] = set()

    def _label(self, key: str) -> str:
        return f"{self._path}.{key}" if self._path else key

    def get(self, key: str, default=None, required: bool = False):
        self._seen.add(key)
        if key not in self._data:
            if required:
                raise ConfigError(f"missing required key {self._label(key)!r}")
            return default
        return self._data[key]

    def section(self, key: str, required: bool = False) -> "_Section | None":
        self._seen.add(key)
        if key not in self._data:
            if required:
                raise ConfigError(f"missing required table {self._label(key)!r}")
            return None
        return _Section(self._data[key], self._label(key))

    def finish(self) -> None:
        unknown = sorted(set(self._data) - self._seen)
        if unknown:
            raise ConfigError(
                f"unknown key(s) in {self._path or '<root>'}: {', '.join(unknown)}"
            )


def _load_config(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        # Accept a previously emitted scan JSON and re-run its config echo.
        return doc["metadata"]["config"] if "metadata" in doc else doc
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None


def _grid_from(section: _Section) -> FrequencyGrid:
    grid = FrequencyGrid(
        n_points=int(section.get("n_points", 256)),
        omega_min=float(section.get("omega_min_rad_per_s", required=True)),
        omega_max=float(section.get("omega_max_rad_per_s", required=True)),
    )
    section.finish()
    return grid


def _state_from(section: _Section, grid: FrequencyGrid):
    kind = section.get("kind", required=True)
    if kind == "delta-pair":
        eps = float(section.get("eps_bins", 2.0)) * grid.dt
        tau = float(section.get("tau_s", 0.0))
        phi_a = delta_like_envelope(grid, t_peak=tau, eps=eps,
                                    carrier=float(section.get("carrier_a_rad_per_s", 0.0)))
        phi_b = delta_like_envelope(grid, t_peak=0.0, eps=eps,
                                    carrier=float(section.get("carrier_b_rad_per_s", 0.0)))
        state = product_amplitude(grid, phi_a, phi_b)
    elif kind == "gaussian-pair":
        tau = float(section.get("tau_s", 0.0))
        sig_a = float(section.get("sigma_a_rad_per_s", required=True))
        sig_b = float(section.get("sigma_b_rad_per_s", sig_a))
        phi_a = gaussian_envelope(grid, float(section.get("carrier_a_rad_per_s", 0.0)),
                                  sig_a, t_peak=tau)
        phi_b = gaussian_envelope(grid, float(section.get("carrier_b_rad_per_s", 0.0)),
                                  sig_b, t_peak=0.0)
        state = product_amplitude(grid, phi_a, phi_b)
    elif kind == "spdc":
        params = SpdcParameters(
            sigma_p=float(section.get("sigma_p_rad_per_s", required=True)),
            entanglement_time=float(section.get("entanglement_time_s", required=True)),
            omega_p0=float(section.get("omega_p0_rad_per_s", required=True)),
            omega_a0=float(section.get("omega_a0_rad_per_s", required=True)),
            omega_b0=float(section.get("omega_b0_rad_per_s", required=True)),
            chirp=float(section.get("pump_chirp_s2", 0.0)),
        )
        state = spdc_amplitude(params, grid)
    else:
        raise ConfigError(f"unknown state kind {kind!r}")
    section.finish()
    return state


def _matter_from(section: _Section, base_dir: Path) -> MatterSystem:
    path = section.get("file")
    if path is not None:
        section.finish()
        full = (base_dir / path) if not Path(path).is_absolute() else Path(path)
        if not full.exists():
            raise ConfigError(f"matter model file {full} does not exist")
        return load_matter(full)
    energies = section.get("energies_rad_per_s", required=True)
    dim = len(energies)
    channels = {}
    chan_sec = section.section("channels", required=True)
    for label in ("a", "b"):
        rows = chan_sec.get(label, required=True)
        channels[label] = np.array(rows, dtype=float)
        if channels[label].shape != (dim, dim):
            raise ConfigError(f"channel {label!r} matrix must be {dim}x{dim}")
    chan_sec.finish()
    init = section.get("initial_state", required=True)
    state = np.array(init, dtype=complex)
    section.finish()
    return MatterSystem(np.diag(np.array(energies, dtype=float)), channels, state)


def _axis_from(section: _Section) -> np.ndarray:
    vals = np.linspace(float(section.get("min", required=True)),
                       float(section.get("max", required=True)),
                       int(section.get("points", required=True)))
    section.finish()
    return vals


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def _run_algebra_check(root: _Section, verbose: bool) -> tuple[SignalScan, int]:
    n_max = int(root.get("n_max", 4))
    tol = float(root.get("tolerance", 1e-10))
    root.finish()
    ops = build_fock_operators(n_max)
    res = commutator_residuals(ops, n_max - 1)
    res["casimir passive (balanced)"] = casimir_check(
        delayed_balanced_bs(0.0), ops, n_max - 2)
    res["casimir passive (T=0.8,R=0.6,phi=0.3)"] = casimir_check(
        beam_splitter(0.8, 0.6, 0.3), ops, n_max - 2)
    res["casimir active (beta=0.2)"] = casimir_check(
        squeezer(0.2), ops, max(n_max - 4, 0))
    bs = beam_splitter(0.8, 0.6, 0.3)
    res["unitarity (T=0.8,R=0.6)"] = float(np.linalg.norm(
        bs.matrix.conj().T @ bs.matrix - np.eye(2)))
    worst = max(res.values())
    for name, value in sorted(res.items()):
        status = "ok" if value <= tol else "FAIL"
        print(f"  {name:<40s} {value:.3e}  {status}")
    print(f"algebra-check: worst residual {worst:.3e} (tolerance {tol:g})")
    scan = SignalScan(
        axes={"index": np.arange(len(res), dtype=float)},
        columns={"residual": np.array(sorted(res.values()), dtype=complex)},
        metadata={"names": sorted(res), "n_max": n_max, "tolerance": tol},
    )
    return scan, 0 if worst <= tol else 3


def _run_hom_scan(root: _Section, base_dir: Path, jobs: int, verbose: bool):
    grid = _grid_from(root.section("grid", required=True))
    matter = _matter_from(root.section("matter", required=True), base_dir)
    scan_sec = root.section("scan", required=True)
    taus = _axis_from(scan_sec)
    run = root.section("run", required=True)
    coupling = float(run.get("coupling", 1e-2))
    contribution = run.get("contribution", "otoc_term")
    eps_bins = float(run.get("eps_bins", 2.0))
    t_center = float(run.get("t_center_s", 0.0))
    bs_rule = run.get("bs_delay_rule", "half-tau")
    run.finish()
    root.finish()

    # Delays snap to even grid multiples so the half-delay beam-splitter
    # shift stays on the time lattice; the snapped values are reported.
    dt = grid.dt
    taus = 2.0 * np.round(taus / (2.0 * dt)) * dt
    t_center = round(t_center / dt) * dt

    def build(tau: float) -> HomConfig:
        eps = eps_bins * dt
        phi_a = delta_like_envelope(grid, t_peak=tau, eps=eps)
        phi_b = delta_like_envelope(grid, t_peak=0.0, eps=eps)
        state = product_amplitude(grid, phi_a, phi_b)
        t_delay = tau / 2.0 if bs_rule == "half-tau" else float(bs_rule)
        return HomConfig(state=state, matter=matter, bs_delay_s=t_delay,
                         wavepacket_delay_s=tau, coupling=coupling,
                         t_center_s=t_center)

    def point(i: int) -> dict[str, complex]:
        cfg = build(float(taus[i]))
        signal = hom_coincidence(cfg, contribution)
        spec = CorrelatorSpec.of(("b", 0.0), ("a", float(taus[i])),
                                 ("b", 0.0), ("a", float(taus[i])))
        return {"signal": signal,
                "direct_correlator": multipoint_correlator(matter, spec)}

    rows = run_scan(point, len(taus), jobs)
    cols = {k: np.array([r[k] for r in rows]) for k in rows[0]}
    mags = np.abs(cols["signal"])
    print(f"hom-scan: {len(taus)} points, |signal| in "
          f"[{mags.min():.3e}, {mags.max():.3e}]")
    return SignalScan(axes={"tau_s": taus}, columns=cols, metadata={}), 0


def _run_spdc_otoc(root: _Section, base_dir: Path, jobs: int, verbose: bool):
    matter = _matter_from(root.section("matter", required=True), base_dir)
    src = root.section("source", required=True)
    params = SpdcParameters(
        sigma_p=float(src.get("sigma_p_rad_per_s", required=True)),
        entanglement_time=float(src.get("entanglement_time_s", required=True)),
        omega_p0=float(src.get("omega_p0_rad_per_s", required=True)),
        omega_a0=float(src.get("omega_a0_rad_per_s", required=True)),
        omega_b0=float(src.get("omega_b0_rad_per_s", required=True)),
        chirp=float(src.get("pump_chirp_s2", 0.0)),
    )
    src.finish()
    scan_sec = root.section("scan", required=True)
    taus = _axis_from(scan_sec)
    run = root.section("run", required=True)
    bs_rule = run.get("bs_delay_rule", "half-tau")
    run.finish()
    root.finish()

    def point(i: int) -> dict[str, complex]:
        tau = float(taus[i])
        t_delay = tau / 2.0 if bs_rule == "half-tau" else float(bs_rule)
        res = narrowband_spdc_coincidence(params, matter, t_delay, tau)
        return {"otoc": res.otoc, "toc": res.toc,
                "window": complex(res.window)}

    rows = run_scan(point, len(taus), jobs)
    cols = {k: np.array([r[k] for r in rows]) for k in rows[0]}
    print(f"spdc-otoc: {len(taus)} points, max |otoc| = "
          f"{np.max(np.abs(cols['otoc'])):.3e}")
    return SignalScan(axes={"tau_s": taus}, columns=cols, metadata={}), 0


def _run_phase_cycle(root: _Section, base_dir: Path, jobs: int, verbose: bool):
    grid = _grid_from(root.section("grid", required=True))
    state = _state_from(root.section("state", required=True), grid)
    matter = _matter_from(root.section("matter", required=True), base_dir)
    run = root.section("run", required=True)
    thetas = np.array(run.get("thetas_rad", [0.0, np.pi / 2.0, np.pi]), dtype=float)
    gate_width = float(run.get("gate_width_s", required=True))
    center_a = float(run.get("gate_center_a_s", required=True))
    center_b = float(run.get("gate_center_b_s", required=True))
    coupling = float(run.get("coupling", 1e-2))
    t_center = float(run.get("t_center_s", 0.0))
    pair_scatt = bool(run.get("include_pair_scattering", True))
    run.finish()
    root.finish()
    gate_a = DetectionGate("time", center_a, gate_width)
    gate_b = DetectionGate("time", center_b, gate_width)

    def point(i: int) -> dict[str, complex]:
        return {"coincidence": gated_coincidence(
            state, matter, float(thetas[i]), gate_a, gate_b, coupling,
            t_center=t_center, include_pair_scattering=pair_scatt)}

    rows = run_scan(point, len(thetas), jobs)
    counts = np.array([r["coincidence"].real for r in rows])
    # C(theta) = base + Re[exp(i theta) Z]: solve for base, Re Z, Im Z.
    design = np.column_stack([np.ones_like(thetas), np.cos(thetas), -np.sin(thetas)])
    sol, *_ = np.linalg.lstsq(design, counts, rcond=None)
    cross = exchange_cross_term(state, matter, gate_a, gate_b, coupling,
                                t_center=t_center,
                                include_pair_scattering=pair_scatt)
    print(f"phase-cycle: base={sol[0]:.6e}  Re(cross)={sol[1]:.6e}  "
          f"Im(cross)={sol[2]:.6e}  direct cross={cross:.6e}")
    cols = {
        "coincidence": np.array(counts, dtype=complex),
        "solved_cross_re": np.full(len(thetas), sol[1], dtype=complex),
        "direct_cross_re": np.full(len(thetas), cross, dtype=complex),
    }
    return SignalScan(axes={"theta_rad": thetas}, columns=cols, metadata={}), 0


def _run_td_gate(root: _Section, base_dir: Path, jobs: int, verbose: bool):
    grid = _grid_from(root.section("grid", required=True))
    state = _state_from(root.section("state", required=True), grid)
    matter = _matter_from(root.section("matter", required=True), base_dir)
    scan_sec = root.section("scan", required=True)
    taus = _axis_from(scan_sec)
    run = root.section("run", required=True)
    theta = float(run.get("theta_rad", 0.0))
    gate_width = float(run.get("gate_width_s", required=True))
    coupling = float(run.get("coupling", 1e-2))
    t_center = float(run.get("t_center_s", 0.0))
    pair_scatt = bool(run.get("include_pair_scattering", False))
    run.finish()
    root.finish()

    def point(i: int) -> dict[str, complex]:
        return {"signal": fixed_delay_signal(
            state, matter, theta, float(taus[i]), gate_width, coupling,
            t_center=t_center, include_pair_scattering=pair_scatt)}

    rows = run_scan(point, len(taus), jobs)
    vals = np.array([r["signal"] for r in rows])
    rev = vals[::-1]
    asym = float(np.sum(np.abs(vals - rev)) / max(np.sum(np.abs(vals)), 1e-300))
    print(f"td-gate: min={vals.real.min():.6e} max={vals.real.max():.6e} "
          f"delay-asymmetry={asym:.3e}")
    return SignalScan(axes={"tau_s": taus},
                      columns={"signal": vals.astype(complex)},
                      metadata={"delay_asymmetry": asym}), 0


def _run_tf_map(root: _Section, base_dir: Path, jobs: int, verbose: bool):
    grid = _grid_from(root.section("grid", required=True))
    state = _state_from(root.section("state", required=True), grid)
    matter = _matter_from(root.section("matter", required=True), base_dir)
    t_axis = _axis_from(root.section("time_axis", required=True))
    w_axis = _axis_from(root.section("frequency_axis", required=True))
    run = root.section("run", required=True)
    gate_t = DetectionGate("time", 0.0, float(run.get("time_gate_width_s", required=True)))
    gate_w = DetectionGate("frequency", 0.0,
                           float(run.get("frequency_gate_width_rad_per_s", required=True)))
    coupling = float(run.get("coupling", 1e-2))
    t_center = float(run.get("t_center_s", 0.0))
    run.finish()
    root.finish()

    vals = time_frequency_map(state, matter, t_axis, w_axis, gate_t, gate_w,
                              coupling, t_center=t_center)
    print(f"tf-map: {vals.shape[0]}x{vals.shape[1]} points, "
          f"max={vals.real.max():.6e}")
    return SignalScan(axes={"t_bar_s": t_axis, "omega_bar_rad_per_s": w_axis},
                      columns={"coincidence": vals.astype(complex)},
                      metadata={}), 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def run(config: dict, out: Path | None, fmt: str, jobs: int,
        verbose: bool, base_dir: Path) -> int:
    # Resolve file references against the config's own directory so the
    # JSON echo reproduces the run regardless of where it is replayed from.
    matter_sec = config.get("matter")
    if isinstance(matter_sec, dict) and "file" in matter_sec:
        path = Path(matter_sec["file"])
        if not path.is_absolute():
            matter_sec["file"] = str((base_dir / path).resolve())
    root = _Section(config)
    experiment = root.get("experiment", required=True)
    if experiment not in _EXPERIMENTS:
        raise ConfigError(
            f"unknown experiment {experiment!r}; pick one of {', '.join(_EXPERIMENTS)}"
        )
    if experiment == "algebra-check":
        scan, status = _run_algebra_check(root, verbose)
    elif experiment == "hom-scan":
        scan, status = _run_hom_scan(root, base_dir, jobs, verbose)
    elif experiment == "spdc-otoc":
        scan, status = _run_spdc_otoc(root, base_dir, jobs, verbose)
    elif experiment == "phase-cycle":
        scan, status = _run_phase_cycle(root, base_dir, jobs, verbose)
    elif experiment == "td-gate":
        scan, status = _run_td_gate(root, base_dir, jobs, verbose)
    else:
        scan, status = _run_tf_map(root, base_dir, jobs, verbose)

    meta = dict(scan.metadata)
    meta["config"] = config
    meta["config_hash"] = config_hash(config)
    meta["qlis_version"] = __version__
    scan = SignalScan(scan.axes, scan.columns, meta)
    if out is not None:
        if fmt == "csv":
            scan.to_csv(out)
        else:
            scan.to_json(out)
        if verbose:
            print(f"wrote {out} ({fmt}, config hash {meta['config_hash']})")
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qlis",
        description="quantum-light interferometric spectroscopy experiments",
    )
    parser.add_argument("--config", required=True, help="TOML config path "
                        "(or a previously emitted scan JSON)")
    parser.add_argument("--out", default=None, help="output file path")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--jobs", type=int, default=1,
                        help="parallel scan-point workers")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)
    path = Path(args.config)
    try:
        config = _load_config(path)
        out = Path(args.out) if args.out else None
        return run(config, out, args.format, args.jobs, args.verbose,
                   base_dir=path.parent)
    except (ConfigError, ConfigurationError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CoverageError, CapabilityError, TruncationOverflowError,
            GateKindError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        print("hint: widen the grid/scan range or lower the photon cutoff "
              "demands, then rerun", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
