"""Few-photon joint spectral amplitudes on uniform frequency grids.

Constructs, symmetrizes and transforms two-photon (and small N-photon)
amplitudes, converts them between frequency and time domain, and reads/writes
them as a self-describing JSON header plus a CSV or binary payload.

Conventions (hbar = c = 1):
  * frequencies in rad/s, times in s, on user-chosen scales;
  * the L2 norm carries the grid measure, ||Phi||^2 = sum |Phi|^2 dw_a dw_b;
  * time-domain conversion uses phi(t) = (2 pi)^{-1/2} integral dw phi(w)
    exp(-i w t), discretized so that Parseval holds exactly on the grid.

Field prefactors (quantization volume, sqrt(2 pi k / Omega), detector
efficiency) are absorbed into a single global constant, set to one; every
downstream signal is reported up to a positive global factor.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CapabilityError, CoverageError, ValidationError

#: Global field-normalization constant.  All external prefactors of the
#: quantized field are absorbed here; signals scale linearly with it.
FIELD_NORMALIZATION = 1.0


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform frequency grid omega_min .. omega_max with n_points samples."""

    n_points: int
    omega_min: float
    omega_max: float

    def __post_init__(self):
        if self.n_points < 8:
            raise ValidationError(f"n_points must be >= 8, got {self.n_points}")
        if not self.omega_max > self.omega_min:
            raise ValidationError("omega_max must exceed omega_min")

    @property
    def spacing(self) -> float:
        return (self.omega_max - self.omega_min) / (self.n_points - 1)

    @property
    def omegas(self) -> np.ndarray:
        return self.omega_min + self.spacing * np.arange(self.n_points)

    @property
    def dt(self) -> float:
        """Spacing of the conjugate time grid (2 pi / (N dw))."""
        return 2.0 * np.pi / (self.n_points * self.spacing)

    def times(self, t_center: float = 0.0) -> np.ndarray:
        """Conjugate time grid, centered on t_center."""
        n = self.n_points
        return t_center + self.dt * (np.arange(n) - n // 2)

    def span(self) -> float:
        return self.omega_max - self.omega_min


def _dft_matrix(grid: FrequencyGrid, times: np.ndarray) -> np.ndarray:
    """Matrix F with F[k, j] = dw/sqrt(2 pi) * exp(-i w_j t_k).

    Dense on purpose: grids are a few hundred points and the phase offsets
    (grid start, time center) are then exact by construction.
    """
    w = grid.omegas
    return (grid.spacing / math.sqrt(2.0 * np.pi)) * np.exp(
        -1j * np.outer(times, w)
    )


def envelope_to_time(grid: FrequencyGrid, values: np.ndarray,
                     t_center: float = 0.0) -> np.ndarray:
    """One-dimensional spectral envelope -> time envelope on grid.times()."""
    return _dft_matrix(grid, grid.times(t_center)) @ np.asarray(values)


# ---------------------------------------------------------------------------
# spectral envelopes
# ---------------------------------------------------------------------------

def gaussian_envelope(grid: FrequencyGrid, center: float, sigma: float,
                      t_peak: float = 0.0) -> np.ndarray:
    """Normalized Gaussian spectral envelope of width sigma (rad/s).

    t_peak shifts the conjugate temporal envelope to peak at t_peak via a
    linear spectral phase.
    """
    if sigma <= 0:
        raise ValidationError("sigma must be positive")
    w = grid.omegas
    env = np.exp(-((w - center) ** 2) / (4.0 * sigma**2)) * np.exp(1j * w * t_peak)
    norm = np.sqrt(np.sum(np.abs(env) ** 2) * grid.spacing)
    return env / norm


def delta_like_envelope(grid: FrequencyGrid, t_peak: float, eps: float,
                        carrier: float = 0.0) -> np.ndarray:
    """Spectral envelope of a near-delta temporal pulse delta_eps(t - t_peak).

    The temporal profile is a normalized Gaussian of standard deviation eps
    (conventionally two time bins); its spectrum must fit inside the grid
    band, which is checked.
    """
    if eps <= 0:
        raise ValidationError("eps must be positive")
    if 1.0 / eps > 0.45 * grid.span():
        raise CoverageError(
            f"delta-like pulse of width eps={eps:g} needs a frequency span "
            f">= {1.0 / (0.45 * eps):.3g} rad/s, grid has {grid.span():.3g}"
        )
    w = grid.omegas
    env = np.exp(-((w - carrier) ** 2) * eps**2 / 2.0) * np.exp(1j * w * t_peak)
    norm = np.sqrt(np.sum(np.abs(env) ** 2) * grid.spacing)
    return env / norm


# ---------------------------------------------------------------------------
# two-photon amplitudes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TwoPhotonAmplitude:
    """Joint spectral amplitude Phi(omega_a, omega_b) on a square grid.

    values[i, j] is the amplitude at (omega_a = omegas[i], omega_b =
    omegas[j]).  Amplitudes are immutable; all operations return new
    instances.  centers holds the nominal per-mode center frequencies
    (metadata used by scans and file headers).
    """

    grid: FrequencyGrid
    values: np.ndarray
    centers: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.complex128)
        if vals.shape != (self.grid.n_points, self.grid.n_points):
            raise ValidationError(
                f"values shape {vals.shape} does not match grid "
                f"({self.grid.n_points} points per axis)"
            )
        if not np.all(np.isfinite(vals)):
            raise ValidationError("amplitude contains non-finite entries")
        object.__setattr__(self, "values", vals)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2)) * self.grid.spacing)

    def normalized(self) -> "TwoPhotonAmplitude":
        n = self.norm
        if n == 0.0:
            raise ValidationError("cannot normalize a zero amplitude")
        return TwoPhotonAmplitude(self.grid, self.values / n, self.centers)

    def swapped(self) -> "TwoPhotonAmplitude":
        """Exchange the two frequency arguments, Phi(w_a, w_b) -> Phi(w_b, w_a)."""
        return TwoPhotonAmplitude(self.grid, self.values.T.copy(),
                                  (self.centers[1], self.centers[0]))

    def scaled(self, factor: complex) -> "TwoPhotonAmplitude":
        return TwoPhotonAmplitude(self.grid, self.values * factor, self.centers)

    def overlap(self, other: "TwoPhotonAmplitude") -> complex:
        """<self|other> with the grid measure."""
        if other.grid != self.grid:
            raise ValidationError("amplitudes live on different grids")
        return complex(np.vdot(self.values, other.values) * self.grid.spacing**2)

    def to_time_domain(self, t_center: float = 0.0) -> np.ndarray:
        """Conjugate time-domain amplitude Phi(t1, t2) on grid.times(t_center).

        Cached per t_center on the (immutable) instance; Parseval holds to
        roundoff: sum |Phi_t|^2 dt^2 == sum |Phi|^2 dw^2.
        """
        key = float(t_center)
        cache = getattr(self, "_time_cache", None)
        if cache is None:
            cache = {}
            object.__setattr__(self, "_time_cache", cache)
        if key not in cache:
            f = _dft_matrix(self.grid, self.grid.times(t_center))
            cache[key] = f @ self.values @ f.T
        return cache[key]


def product_amplitude(grid: FrequencyGrid, phi_a: np.ndarray, phi_b: np.ndarray,
                      centers: tuple[float, float] | None = None) -> TwoPhotonAmplitude:
    """Normalized product state Phi(w_a, w_b) = phi_a(w_a) phi_b(w_b)."""
    phi_a = np.asarray(phi_a, dtype=np.complex128)
    phi_b = np.asarray(phi_b, dtype=np.complex128)
    if phi_a.shape != (grid.n_points,) or phi_b.shape != (grid.n_points,):
        raise ValidationError("envelopes must be sampled on the grid")
    if np.max(np.abs(phi_a)) == 0.0 or np.max(np.abs(phi_b)) == 0.0:
        raise ValidationError("zero envelope")
    if centers is None:
        w = grid.omegas
        centers = (
            float(np.sum(w * np.abs(phi_a) ** 2) / np.sum(np.abs(phi_a) ** 2)),
            float(np.sum(w * np.abs(phi_b) ** 2) / np.sum(np.abs(phi_b) ** 2)),
        )
    amp = TwoPhotonAmplitude(grid, np.outer(phi_a, phi_b), centers)
    return amp.normalized()


def theta_symmetrize(phi: TwoPhotonAmplitude, theta: float) -> TwoPhotonAmplitude:
    """Exchange-phase symmetrized amplitude.

    Phi_theta(w_a, w_b) = [Phi(w_a, w_b) + e^{i theta} Phi(w_b, w_a)] / sqrt(2).

    Not renormalized: the interference contrast (zero norm at theta = pi for
    a symmetric input) is physical.  Use .normalized() explicitly if needed.
    """
    sym = (phi.values + np.exp(1j * theta) * phi.values.T) / math.sqrt(2.0)
    return TwoPhotonAmplitude(phi.grid, sym, phi.centers)


# ---------------------------------------------------------------------------
# N-photon amplitudes with pairwise exchange phases
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NPhotonAmplitude:
    """Rank-n joint spectral amplitude with a matrix of pairwise phases.

    theta_matrix[i, j] = theta_ij is antisymmetric by convention; only the
    upper triangle i < j enters the exchange sum.
    """

    grid: FrequencyGrid
    values: np.ndarray
    theta_matrix: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.complex128)
        n = vals.ndim
        if n < 2:
            raise ValidationError("need at least two photons")
        if n > 4:
            raise CapabilityError(f"more than 4 photons not supported (got {n})")
        if vals.shape != (self.grid.n_points,) * n:
            raise ValidationError("values shape does not match grid/photon count")
        th = np.asarray(self.theta_matrix, dtype=float)
        if th.shape != (n, n):
            raise ValidationError(f"theta_matrix must be {n}x{n}")
        if np.max(np.abs(th + th.T)) > 1e-12:
            raise ValidationError("theta_matrix must be antisymmetric")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "theta_matrix", th)

    @property
    def n(self) -> int:
        return self.values.ndim

    @property
    def norm(self) -> float:
        return float(
            np.sqrt(np.sum(np.abs(self.values) ** 2)) * self.grid.spacing ** (self.n / 2)
        )


def exchange_swap(values: np.ndarray, i: int, j: int) -> np.ndarray:
    """Exchange operator P_ij: swap the i-th and j-th frequency arguments."""
    return np.swapaxes(values, i, j)


def exchange_phase_amplitude(base: NPhotonAmplitude) -> NPhotonAmplitude:
    """Exchange-phase-cycled amplitude over all photon pairs.

    Phi_Theta = N^{-1} [Phi + sum_{i<j} e^{i theta_ij} P_ij Phi] with
    N = sqrt(C(n,2) + 1); the identity term enters with unit phase, matching
    the term count in N.
    """
    n = base.n
    out = base.values.copy()
    for i in range(n):
        for j in range(i + 1, n):
            out = out + np.exp(1j * base.theta_matrix[i, j]) * exchange_swap(
                base.values, i, j
            )
    norm_const = math.sqrt(math.comb(n, 2) + 1)
    return NPhotonAmplitude(base.grid, out / norm_const, base.theta_matrix)


# ---------------------------------------------------------------------------
# SPDC pair amplitudes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpdcParameters:
    """Narrowband-pumped parametric pair-source parameters.

    sigma_p is the pump bandwidth (rad/s), entanglement_time the width of the
    arrival-time-difference window (s).  chirp is an optional quadratic
    spectral phase on the pump envelope (s^2); zero gives the plain
    transform-limited pair.
    """

    sigma_p: float
    entanglement_time: float
    omega_p0: float
    omega_a0: float
    omega_b0: float
    chirp: float = 0.0

    def __post_init__(self):
        for name in ("sigma_p", "entanglement_time", "omega_p0", "omega_a0", "omega_b0"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")


def spdc_amplitude(params: SpdcParameters, grid: FrequencyGrid) -> TwoPhotonAmplitude:
    """Joint spectral amplitude of a narrowband-pumped photon pair.

    Gaussian pump envelope in the sum frequency times a sinc phase-matching
    profile in the difference frequency:

      Phi = N exp[-(w_a + w_b - w_p0)^2 / (4 sigma_p^2)]
              * sinc[(w_a - w_b - (w_a0 - w_b0)) T_e / 2],

    normalized on the grid.  The pump chirp, when set, multiplies the pump
    factor by exp[i chirp (w_a + w_b - w_p0)^2].
    """
    if abs(params.omega_a0 + params.omega_b0 - params.omega_p0) > grid.spacing:
        raise ValidationError(
            "omega_a0 + omega_b0 must equal omega_p0 within one grid spacing"
        )
    need_sum = 6.0 * params.sigma_p
    need_diff = 6.0 / params.entanglement_time
    span = grid.span()
    # The sum/difference variables range over twice the single-axis span.
    if 2.0 * span < need_sum or 2.0 * span < need_diff:
        raise CoverageError(
            f"grid span {span:.4g} rad/s too narrow: need >= {need_sum / 2:.4g} "
            f"for the pump and >= {need_diff / 2:.4g} for the phase-matching profile"
        )
    for c in (params.omega_a0, params.omega_b0):
        if not (grid.omega_min <= c <= grid.omega_max):
            raise CoverageError(f"center frequency {c:g} outside grid")
    w = grid.omegas
    wsum = w[:, None] + w[None, :] - params.omega_p0
    wdiff = w[:, None] - w[None, :] - (params.omega_a0 - params.omega_b0)
    pump = np.exp(-(wsum**2) / (4.0 * params.sigma_p**2))
    if params.chirp != 0.0:
        pump = pump * np.exp(1j * params.chirp * wsum**2)
    # np.sinc(x) = sin(pi x)/(pi x); argument here is x T_e / 2.
    match = np.sinc(wdiff * params.entanglement_time / (2.0 * np.pi))
    amp = TwoPhotonAmplitude(grid, pump * match, (params.omega_a0, params.omega_b0))
    return amp.normalized()


# ---------------------------------------------------------------------------
# import / export
# ---------------------------------------------------------------------------
#
# Layout: a JSON header file carries the grid parameters, centers and payload
# descriptor.  The array payload is stored either inline ("csv": rows of
# "re,im" pairs in row-major order, one grid row per line) or as a sibling
# binary file of little-endian float64 interleaved re/im pairs, row-major.

_SCHEMA = "qlis-amplitude-v1"


def save_amplitude(path: str | Path, amp: TwoPhotonAmplitude,
                   payload: str = "csv") -> None:
    path = Path(path)
    header = {
        "schema": _SCHEMA,
        "grid": {
            "n_points": amp.grid.n_points,
            "omega_min": amp.grid.omega_min,
            "omega_max": amp.grid.omega_max,
        },
        "centers": list(amp.centers),
        "payload": payload,
    }
    inter = np.empty((amp.grid.n_points, 2 * amp.grid.n_points))
    inter[:, 0::2] = amp.values.real
    inter[:, 1::2] = amp.values.imag
    if payload == "csv":
        payload_path = path.with_suffix(".csv")
        lines = "\n".join(",".join(repr(float(v)) for v in row) for row in inter)
        payload_path.write_text(lines + "\n")
    elif payload == "bin":
        payload_path = path.with_suffix(".bin")
        payload_path.write_bytes(inter.astype("<f8").tobytes())
    else:
        raise ValidationError(f"unknown payload format {payload!r}")
    header["payload_file"] = payload_path.name
    path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")


def load_amplitude(path: str | Path) -> TwoPhotonAmplitude:
    path = Path(path)
    header = json.loads(path.read_text())
    if header.get("schema") != _SCHEMA:
        raise ValidationError(f"unknown amplitude schema {header.get('schema')!r}")
    grid = FrequencyGrid(**header["grid"])
    payload_path = path.parent / header["payload_file"]
    n = grid.n_points
    if header["payload"] == "csv":
        inter = np.loadtxt(payload_path, delimiter=",").reshape(n, 2 * n)
    else:
        inter = np.frombuffer(payload_path.read_bytes(), dtype="<f8").reshape(n, 2 * n)
    values = inter[:, 0::2] + 1j * inter[:, 1::2]
    return TwoPhotonAmplitude(grid, values, tuple(header["centers"]))
