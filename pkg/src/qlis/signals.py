"""Fourth-order coincidence signals of two photons coupled to matter.

Evaluates the detection signals of the interferometric setups: the
two-detector coincidence with a movable beam splitter (including the single
contraction whose matter factor is the out-of-time-ordered correlator), the
temporally gated coincidence of an exchange-phase-symmetrized pair, the
fixed-delay signal obtained by scanning a common gate center, a mixed
time-frequency gated coincidence, and the narrowband pair-source limit
evaluated with superoperator propagators.

Perturbation structure.  The detected two-photon amplitude is built order
by order in the coupling lam:

  A0  both photons reach the detectors untouched;
  A1  an extra photon is emitted and never detected (one insertion);
  A2  one photon is absorbed and re-emitted toward its detector, in either
      time order (two insertions);
  A4  both photons are absorbed and re-emitted, the four events in every
      relative time order (four insertions; this family carries the
      wiggling-contour matter correlators).

Emission toward a detector is pinned to the detection time by free
propagation (the carried delta constraints), which is what collapses the
four nested interaction integrals down to at most two live dimensions.
The coincidence density is assembled as a sum of squared sector norms, so
it is real and nonnegative by construction, and it is sesquilinear in a
(bra, ket) amplitude pair, which is what exchange-phase cycling exploits.
Radiative self-contractions (emit-and-reabsorb within the interaction) and
the undetected-extra-photon dressing of the four-insertion family are not
modeled; see the module documentation in the README.

All signals are reported up to a global positive constant (prefactors of
the quantized field are set to one).
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import _kernels
from .errors import (CoverageError, GateKindError, ValidationError)
from .matter import MatterSystem
from .states import FrequencyGrid, SpdcParameters, TwoPhotonAmplitude, theta_symmetrize

_SQRT2PI = math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# gates and configs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DetectionGate:
    """Gaussian detector gate in time or frequency.

    The count-rate window is D(x) = exp(-(x - center)^2 / (2 width^2)); the
    width is the standard deviation of the window, i.e. of the squared
    up-conversion (pump) envelope.
    """

    kind: str
    center: float
    width: float

    def __post_init__(self):
        if self.kind not in ("time", "frequency"):
            raise ValidationError(f"gate kind must be time or frequency, got {self.kind!r}")
        if not self.width > 0:
            raise ValidationError("gate width must be positive")

    def window(self, x: np.ndarray) -> np.ndarray:
        return np.exp(-((np.asarray(x) - self.center) ** 2) / (2.0 * self.width**2))


def _require_kind(gate: DetectionGate, kind: str, name: str) -> None:
    if gate.kind != kind:
        raise GateKindError(f"{name} must be a {kind} gate, got {gate.kind}")


@dataclass(frozen=True)
class HomConfig:
    """Configuration of the movable-beam-splitter coincidence measurement.

    Detection happens at times detect_t_a_s / detect_t_b_s at detectors a
    light-travel time r_a_over_c_s / r_b_over_c_s from the sample; when the
    detection times are omitted they default to the peak arrival times
    r_a/c + tau and r_b/c (the wavepacket convention used throughout: the
    a-photon is delayed by tau, the b-photon is not).

    The interaction time grid is the conjugate grid of the state's
    frequency grid, centered at t_center_s; interaction integrals run up to
    t_star_s (default: the last grid time).
    """

    state: TwoPhotonAmplitude
    matter: MatterSystem
    bs_delay_s: float = 0.0
    wavepacket_delay_s: float = 0.0
    r_a_over_c_s: float = 0.0
    r_b_over_c_s: float = 0.0
    coupling: float = 1e-2
    t_center_s: float = 0.0
    detect_t_a_s: float | None = None
    detect_t_b_s: float | None = None
    t_star_s: float | None = None

    def times(self) -> np.ndarray:
        return self.state.grid.times(self.t_center_s)

    def detection_args(self) -> tuple[float, float]:
        """Retarded detection arguments (t_a - r_a/c, t_b - r_b/c)."""
        ta = self.detect_t_a_s
        tb = self.detect_t_b_s
        if ta is None:
            ta = self.r_a_over_c_s + self.wavepacket_delay_s
        if tb is None:
            tb = self.r_b_over_c_s
        return ta - self.r_a_over_c_s, tb - self.r_b_over_c_s

    def t_star(self) -> float:
        return self.times()[-1] if self.t_star_s is None else self.t_star_s

    def check_coverage(self, mass_tol: float = 1e-6) -> None:
        """Require the time grid to contain the wavepacket support.

        The support is measured from the time-domain marginals; samples
        shifted off the grid by delays are treated as zero by the
        quadrature, consistent with envelope decay, so only the unshifted
        support is enforced here.
        """
        psi_t = self.state.to_time_domain(self.t_center_s)
        marg = np.sum(np.abs(psi_t) ** 2, axis=1) + np.sum(np.abs(psi_t) ** 2, axis=0)
        total = float(np.sum(marg))
        edge = float(marg[0] + marg[1] + marg[-2] + marg[-1])
        if edge > mass_tol * total:
            raise CoverageError(
                f"time grid does not cover the wavepacket support: edge mass "
                f"fraction {edge / total:.3e} (tol {mass_tol:g}); widen the "
                f"frequency grid or move t_center_s"
            )


def coupling_heuristic(config: HomConfig) -> float:
    """Smallness parameter of the perturbative expansion.

    (lam * dipole scale * grid span)^4 should be well below one for the
    fourth-order truncation to be meaningful; callers get a warning beyond
    0.1.
    """
    dip = max(
        float(np.max(np.abs(config.matter.channel_matrix(c))))
        for c in config.matter.channels
    )
    span = config.times()[-1] - config.times()[0]
    return float((config.coupling * dip * span) ** 4)


# ---------------------------------------------------------------------------
# grid helpers
# ---------------------------------------------------------------------------

def _snap_index(ts: np.ndarray, t: float) -> int:
    i = int(round((t - ts[0]) / (ts[1] - ts[0])))
    return min(max(i, 0), len(ts) - 1)


def _shifted(psi_t: np.ndarray, ka: int, kb: int) -> np.ndarray:
    """psi_t sampled at index offsets (i + ka, j + kb), zero off the grid."""
    n = psi_t.shape[0]
    out = np.zeros_like(psi_t)
    a_lo, a_hi = max(0, -ka), min(n, n - ka)
    b_lo, b_hi = max(0, -kb), min(n, n - kb)
    if a_lo < a_hi and b_lo < b_hi:
        out[a_lo:a_hi, b_lo:b_hi] = psi_t[a_lo + ka:a_hi + ka, b_lo + kb:b_hi + kb]
    return out


def _trapz_vec(n: int, k_max: int) -> np.ndarray:
    w = np.zeros(n)
    if k_max >= 1:
        w[:k_max + 1] = 1.0
        w[0] = w[k_max] = 0.5
    return w


def _dipole_stack(matter: MatterSystem, channel: str, times: np.ndarray) -> np.ndarray:
    """V_c(t) for every grid time, stacked (n, d, d)."""
    v = matter.channel_matrix(channel)
    phase = np.exp(1j * np.outer(times, matter.energies))
    return np.einsum("tm,mn,tn->tmn", phase, v, phase.conj())


# ---------------------------------------------------------------------------
# beam-splitter coincidence: the wiggling-contour contraction and its family
# ---------------------------------------------------------------------------

def hom_coincidence(config: HomConfig, contribution: str = "otoc_term",
                    picture: str = "arrival") -> complex:
    """Coincidence density of the movable-BS setup at the detection point.

    contribution = "otoc_term": the single contraction in which both
    photons are absorbed and re-emitted across the beam splitter such that
    the four dipole factors read  V_a(t_a') V_b(t_b') V_a(x+T) V_b(y-T)
    with the live pair ordered y <= x <= t_b' + T.  Its matter factor is
    the out-of-time-ordered correlator in the short-pulse limit.

    contribution = "all_fourth_order": the full four-insertion family
    generated by the detection-basis interaction, i.e. every choice of
    shifted interaction term at the four events and every relative time
    order, summed.  Scales exactly as coupling^4.

    picture chooses the integration variables for the otoc term: "arrival"
    keeps the beam-splitter shifts inside the interaction factors (order of
    arrival at the detectors); "interaction" substitutes them into the
    integration bounds (order of interaction with the sample).  The two are
    the same signal and must agree to roundoff.

    Returns a complex amplitude-squared density, reported up to the global
    positive constant.
    """
    if contribution not in ("otoc_term", "all_fourth_order"):
        raise ValidationError(f"unknown contribution {contribution!r}")
    if picture not in ("arrival", "interaction"):
        raise ValidationError(f"unknown picture {picture!r}")
    config.check_coverage()
    h = coupling_heuristic(config)
    if h > 0.1:
        warnings.warn(
            f"coupling heuristic (lam * dipole * span)^4 = {h:.2g} is not small; "
            "the fourth-order truncation may not be meaningful",
            stacklevel=2,
        )
    ts = config.times()
    dt = float(ts[1] - ts[0])
    matter = config.matter
    if matter.psi0 is None:
        raise ValidationError("the coincidence engine needs a pure matter state")
    psi = matter.psi0
    psi_t = config.state.to_time_domain(config.t_center_s)
    k_t = int(round(config.bs_delay_s / dt))
    t_delay = k_t * dt  # snapped; keeps shifted samples on the grid
    ta_p, tb_p = config.detection_args()
    ia, ib = _snap_index(ts, ta_p), _snap_index(ts, tb_p)
    ta_p, tb_p = float(ts[ia]), float(ts[ib])
    bra_factor = np.conj(psi_t[ia, ib])
    lam4 = config.coupling**4

    if contribution == "otoc_term":
        u = _dipole_stack(matter, "b", np.array([tb_p]))[0] @ (
            _dipole_stack(matter, "a", np.array([ta_p]))[0] @ psi
        )
        i_star = _snap_index(ts, config.t_star())
        if picture == "arrival":
            # Live variables are the insertion times; the shifts sit in the
            # interaction factors.
            va_sh = _dipole_stack(matter, "a", ts + t_delay)
            vb_sh = _dipole_stack(matter, "b", ts - t_delay)
            mid = np.einsum("m,imn->in", u.conj(), va_sh)
            rv = np.einsum("jmn,n->jm", vb_sh, psi)
            corr = mid @ rv.T
            amp_sh = _shifted(psi_t, k_t, -k_t)
            i_max = min(_snap_index(ts, tb_p + t_delay), i_star)
            integral = _kernels.tri_ordered_sum(amp_sh * corr, i_max, dt)
        else:
            # Live variables are the interaction-factor times; the shifts
            # move into the ordering bounds (y' <= x' - 2T <= t_b').
            va_u = _dipole_stack(matter, "a", ts)
            vb_u = _dipole_stack(matter, "b", ts)
            mid = np.einsum("m,imn->in", u.conj(), va_u)
            rv = np.einsum("jmn,n->jm", vb_u, psi)
            corr = mid @ rv.T
            integrand = psi_t * corr
            i_max = min(_snap_index(ts, tb_p + 2 * t_delay), i_star + k_t)
            shifted_rows = _shifted(integrand, 2 * k_t, 0)
            integral = _kernels.tri_ordered_sum(shifted_rows, i_max - 2 * k_t, dt)
        return complex(lam4 / 16.0 * bra_factor * integral)

    # all_fourth_order: enumerate the detection-basis interaction choices.
    terms_a = (  # (coefficient, E shift, dipole channel, dipole shift)
        (0.5 + 0.0j, 0.0, "a", 0.0),
        (-0.5 + 0.0j, +t_delay, "a", +t_delay),
        (-0.5j, -t_delay, "b", +t_delay),
    )
    terms_b = (
        (0.5 + 0.0j, 0.0, "b", 0.0),
        (-0.5 + 0.0j, -t_delay, "b", -t_delay),
        (-0.5j, +t_delay, "a", -t_delay),
    )
    t_star = config.t_star()
    i_star = _snap_index(ts, t_star)
    stacks: dict[tuple[str, float], np.ndarray] = {}

    def stack(channel: str, shift: float) -> np.ndarray:
        key = (channel, shift)
        if key not in stacks:
            stacks[key] = _dipole_stack(matter, channel, ts + shift)
        return stacks[key]

    total = np.zeros(matter.dim, dtype=np.complex128)
    for ca, sea, cva, sva in terms_a:  # pin feeding detector a
        u_a = ta_p - sea
        if u_a > t_star:
            continue
        pin_a = _dipole_stack(matter, cva, np.array([u_a + sva]))[0]
        for cb, seb, cvb, svb in terms_b:  # pin feeding detector b
            u_b = tb_p - seb
            if u_b > t_star:
                continue
            pin_b = _dipole_stack(matter, cvb, np.array([u_b + svb]))[0]
            for cxa, sxa, cvxa, svxa in terms_a:  # absorbs the a photon
                va_live = stack(cvxa, svxa)
                kxa = int(round(sxa / dt))
                for cxb, sxb, cvxb, svxb in terms_b:  # absorbs the b photon
                    vb_live = stack(cvxb, svxb)
                    kxb = int(round(sxb / dt))
                    amp = _shifted(psi_t, kxa, kxb)
                    vec = _kernels.t_ordered_pair_amplitude(
                        amp, va_live, vb_live, pin_a, pin_b, u_a, u_b,
                        ts, ts, i_star, i_star, psi, dt,
                    )
                    total += (ca * cb * cxa * cxb) * vec
    return complex(lam4 * bra_factor * np.vdot(psi, total))


def refine_grid(grid: FrequencyGrid, factor: int = 2) -> FrequencyGrid:
    """Grid with `factor` times the points at the same spacing.

    The frequency span grows by the same factor, so the conjugate time step
    shrinks by it while the covered time span is preserved: exactly the
    refinement a grid-halving convergence check needs.
    """
    n = factor * grid.n_points
    return FrequencyGrid(n, grid.omega_min, grid.omega_min + (n - 1) * grid.spacing)


def richardson_check(build_config: Callable[[FrequencyGrid], HomConfig],
                     base_grid: FrequencyGrid,
                     contribution: str = "otoc_term") -> float:
    """Relative change of hom_coincidence under halving the time step.

    build_config must construct the same physical configuration on any
    grid (envelopes re-evaluated, not resampled); the refined grid keeps
    the frequency spacing and doubles the points, halving the time step at
    fixed time span.
    """
    coarse = hom_coincidence(build_config(base_grid), contribution)
    fine = hom_coincidence(build_config(refine_grid(base_grid)), contribution)
    scale = max(abs(coarse), abs(fine))
    if scale == 0.0:
        return 0.0
    return abs(fine - coarse) / scale


# ---------------------------------------------------------------------------
# gated coincidence of an exchange-phase-prepared pair (no interferometer)
# ---------------------------------------------------------------------------

def _cumtrapz0(f: np.ndarray, dt: float) -> np.ndarray:
    """Cumulative trapezoid along axis 0: out[k] = integral grid[0]..grid[k]."""
    cs = np.cumsum(f, axis=0)
    return (cs - 0.5 * f - 0.5 * f[0]) * dt


@dataclass
class AmplitudeStack:
    """Perturbative detection amplitudes of one two-photon state.

    Vacuum-sector amplitude per detection point (p, q) is
    a0[p, q] * psi + lam^2 a2[p, q, :] (+ lam^4 a4 on demand); the
    residual-one-photon sector enters through closed-form overlap tables
    (see pair_density).  Everything lives in the matter energy eigenbasis.
    """

    matter: MatterSystem
    psi_t: np.ndarray
    ts: np.ndarray
    dt: float
    i_star: int
    a2: np.ndarray          # (n, n, d) two-insertion vacuum-sector amplitude
    xa: np.ndarray          # (n, d) V_a(t_k) |psi>
    xb: np.ndarray
    va: np.ndarray          # (n, d, d) V_a(t_k)
    vb: np.ndarray

    @classmethod
    def build(cls, matter: MatterSystem, state: TwoPhotonAmplitude,
              t_center: float, t_star: float | None) -> "AmplitudeStack":
        if matter.psi0 is None:
            raise ValidationError("the coincidence engine needs a pure matter state")
        ts = state.grid.times(t_center)
        dt = float(ts[1] - ts[0])
        i_star = _snap_index(ts, ts[-1] if t_star is None else t_star)
        psi = matter.psi0
        psi_t = state.to_time_domain(t_center)
        va = _dipole_stack(matter, "a", ts)
        vb = _dipole_stack(matter, "b", ts)
        xa = np.einsum("kmn,n->km", va, psi)
        xb = np.einsum("kmn,n->km", vb, psi)
        w_star = _trapz_vec(len(ts), i_star)

        # Channel a scattered: rotating (absorb at x < t_p, emit at t_p)
        # plus counter-rotating (emit at t_p, absorb at x > t_p) pieces.
        f_rot = psi_t[:, :, None] * xa[:, None, :]
        s_rot = _cumtrapz0(f_rot, dt)                        # (n, n, d)
        rot_a = np.einsum("pmn,pqn->pqm", va, s_rot)
        g_cr = (w_star[:, None, None, None]
                * psi_t[:, :, None, None] * va[:, None, :, :])
        cum_cr = np.cumsum(g_cr, axis=0) * dt
        # integral t_p .. t_star with trapezoid ends on both sides
        upper = cum_cr[i_star][None, ...] - cum_cr \
            + 0.5 * dt * w_star[:, None, None, None] * psi_t[:, :, None, None] \
            * va[:, None, :, :]
        upper -= 0.5 * dt * (w_star[i_star] * psi_t[i_star][None, :, None, None]
                             * va[i_star][None, None, :, :])
        cr_a = np.einsum("pqmn,pn->pqm", upper, xa)

        # Channel b scattered: same structure on the second photon axis.
        f_rot_b = psi_t.T[:, :, None] * xb[:, None, :]       # (q-axis first)
        s_rot_b = _cumtrapz0(f_rot_b, dt)
        rot_b = np.einsum("qmn,qpn->pqm", vb, s_rot_b)
        g_cr_b = (w_star[:, None, None, None]
                  * psi_t.T[:, :, None, None] * vb[:, None, :, :])
        cum_cr_b = np.cumsum(g_cr_b, axis=0) * dt
        upper_b = cum_cr_b[i_star][None, ...] - cum_cr_b \
            + 0.5 * dt * w_star[:, None, None, None] * psi_t.T[:, :, None, None] \
            * vb[:, None, :, :]
        upper_b -= 0.5 * dt * (w_star[i_star] * psi_t.T[i_star][None, :, None, None]
                               * vb[i_star][None, None, :, :])
        cr_b = np.einsum("qpmn,qn->pqm", upper_b, xb)

        a2 = -(rot_a + cr_a + rot_b + cr_b)
        return cls(matter, psi_t, ts, dt, i_star, a2, xa, xb, va, vb)

    def a4_at(self, p: int, q: int) -> np.ndarray:
        """Four-insertion vacuum-sector amplitude at one detection point."""
        return _kernels.t_ordered_pair_amplitude(
            self.psi_t, self.va, self.vb, self.va[p], self.vb[q],
            float(self.ts[p]), float(self.ts[q]),
            self.ts, self.ts, self.i_star, self.i_star,
            self.matter.psi0, self.dt,
        )


def pair_density(bra: AmplitudeStack, ket: AmplitudeStack, lam: float,
                 points: np.ndarray | None = None,
                 include_pair_scattering: bool = True) -> np.ndarray:
    """Sesquilinear coincidence density W(bra, ket) on the detection grid.

    points, when given, is a boolean (n, n) mask; the four-insertion family
    is evaluated only there (it costs a grid-sized loop per point) and the
    returned array is zero outside.  With bra == ket the result is the
    physical bare density: real and nonnegative up to the truncated
    fourth-order cross terms.
    """
    if bra.matter is not ket.matter:
        raise ValidationError("bra and ket stacks must share the matter system")
    if bra.ts.shape != ket.ts.shape or abs(bra.dt - ket.dt) > 1e-15:
        raise ValidationError("bra and ket stacks live on different grids")
    psi = ket.matter.psi0
    n = len(ket.ts)
    dt = ket.dt
    lam2, lam4 = lam**2, lam**4
    w_full = _trapz_vec(n, n - 1)
    w_star = _trapz_vec(n, ket.i_star)

    # Vacuum sector: <A0b + lam^2 A2b (+ lam^4 A4b) | same for ket>.
    a0b, a0k = bra.psi_t, ket.psi_t
    psi_a2k = np.einsum("m,pqm->pq", psi.conj(), ket.a2)
    psi_a2b = np.einsum("m,pqm->pq", psi.conj(), bra.a2)
    w = (a0b.conj() * a0k).astype(np.complex128)
    w += lam2 * (a0b.conj() * psi_a2k + psi_a2b.conj() * a0k)
    w += lam4 * np.einsum("pqm,pqm->pq", bra.a2.conj(), ket.a2)

    if include_pair_scattering:
        mask = np.ones((n, n), dtype=bool) if points is None else points
        for p, q in zip(*np.nonzero(mask)):
            a4k = ket.a4_at(p, q)
            a4b = a4k if bra is ket else bra.a4_at(p, q)
            w[p, q] += lam4 * (
                np.conj(a0b[p, q]) * np.vdot(psi, a4k)
                + np.vdot(a4b, psi) * a0k[p, q]
            )

    # Residual-one-photon sector (an undetected extra emission), order lam^2.
    # Channel a amplitude over the leftover photon's time s:
    #   -i [ V_a(t_s) psi * Psi(p, q) theta(s <= t*)    (extra emission)
    #      + V_a(t_p) psi * Psi(s, q) ]                 (original a undetected)
    # and the mirrored form for channel b with Psi(p, s) and V_b(t_q).
    xa, xb = ket.xa, ket.xb
    norm_a = float(np.sum(w_star * np.einsum("sm,sm->s", xa.conj(), xa).real)) * dt
    norm_b = float(np.sum(w_star * np.einsum("sm,sm->s", xb.conj(), xb).real)) * dt
    ga = xa.conj() @ xa.T                    # ga[s, p] = <xa(s)|xa(p)>
    gb = xb.conj() @ xb.T
    ia_k = np.einsum("s,sp,sq->pq", w_star, ga, a0k) * dt
    ia_b = np.einsum("s,sp,sq->pq", w_star, ga, a0b) * dt
    ib_k = np.einsum("s,sq,ps->pq", w_star, gb, a0k) * dt
    ib_b = np.einsum("s,sq,ps->pq", w_star, gb, a0b) * dt
    col_a = np.einsum("s,sq,sq->q", w_full, a0b.conj(), a0k) * dt
    row_b = np.einsum("s,ps,ps->p", w_full, a0b.conj(), a0k) * dt
    xa_sq = np.einsum("pm,pm->p", xa.conj(), xa).real
    xb_sq = np.einsum("qm,qm->q", xb.conj(), xb).real
    w += lam2 * (
        a0b.conj() * a0k * (norm_a + norm_b)
        + a0b.conj() * ia_k + ia_b.conj() * a0k
        + a0b.conj() * ib_k + ib_b.conj() * a0k
        + xa_sq[:, None] * col_a[None, :]
        + xb_sq[None, :] * row_b[:, None]
    )
    return w


def _gate_mask(ts: np.ndarray, gate_a: DetectionGate, gate_b: DetectionGate,
               n_sigma: float = 5.0) -> np.ndarray:
    in_a = np.abs(ts - gate_a.center) <= n_sigma * gate_a.width
    in_b = np.abs(ts - gate_b.center) <= n_sigma * gate_b.width
    return in_a[:, None] & in_b[None, :]


def _default_t_star(gates: Iterable[DetectionGate]) -> float:
    # Interaction integrals run to the latest gated time plus five widths;
    # doubling this changes the signal below the documented 0.1%.
    return max(g.center + 5.0 * g.width for g in gates)


def gated_coincidence(state: TwoPhotonAmplitude, matter: MatterSystem,
                      theta: float, gate_a: DetectionGate, gate_b: DetectionGate,
                      coupling: float = 1e-2, t_center: float = 0.0,
                      t_star: float | None = None,
                      include_pair_scattering: bool = True) -> float:
    """Temporally gated coincidence count of an exchange-phase-prepared pair.

    The base amplitude is symmetrized with exchange phase theta, the bare
    coincidence density is built to fourth order in the coupling, and both
    detection times are integrated against Gaussian gate windows.
    """
    _require_kind(gate_a, "time", "gate_a")
    _require_kind(gate_b, "time", "gate_b")
    if t_star is None:
        t_star = _default_t_star((gate_a, gate_b))
    sym = theta_symmetrize(state, theta)
    stack = AmplitudeStack.build(matter, sym, t_center, t_star)
    mask = _gate_mask(stack.ts, gate_a, gate_b)
    w = pair_density(stack, stack, coupling, points=mask,
                     include_pair_scattering=include_pair_scattering)
    da = gate_a.window(stack.ts)
    db = gate_b.window(stack.ts)
    val = np.einsum("p,q,pq->", da, db, np.where(mask, w, 0.0)) * stack.dt**2
    return float(val.real)


def exchange_cross_term(state: TwoPhotonAmplitude, matter: MatterSystem,
                        gate_a: DetectionGate, gate_b: DetectionGate,
                        coupling: float = 1e-2, t_center: float = 0.0,
                        t_star: float | None = None,
                        include_pair_scattering: bool = True) -> float:
    """Pathway-exchange cross term isolated by phase cycling.

    Equals (C(theta=0) - C(theta=pi)) / 2: the gated integral of
    [W(Phi, Phi_swap) + W(Phi_swap, Phi)] / 2, evaluated directly from the
    sesquilinear density without any phase cycling.
    """
    _require_kind(gate_a, "time", "gate_a")
    _require_kind(gate_b, "time", "gate_b")
    if t_star is None:
        t_star = _default_t_star((gate_a, gate_b))
    ket = AmplitudeStack.build(matter, state, t_center, t_star)
    swp = AmplitudeStack.build(matter, state.swapped(), t_center, t_star)
    mask = _gate_mask(ket.ts, gate_a, gate_b)
    w_ks = pair_density(ket, swp, coupling, points=mask,
                        include_pair_scattering=include_pair_scattering)
    w_sk = pair_density(swp, ket, coupling, points=mask,
                        include_pair_scattering=include_pair_scattering)
    da = gate_a.window(ket.ts)
    db = gate_b.window(ket.ts)
    cross = 0.5 * (w_ks + w_sk)
    val = np.einsum("p,q,pq->", da, db, np.where(mask, cross, 0.0)) * ket.dt**2
    return float(val.real)


def fixed_delay_signal(state: TwoPhotonAmplitude, matter: MatterSystem,
                       theta: float, tau: float, gate_width: float,
                       coupling: float = 1e-2, t_center: float = 0.0,
                       t_star: float | None = None,
                       include_pair_scattering: bool = False,
                       center_stride: int = 2,
                       swap_roles: bool = False) -> float:
    """Delay-resolved signal: gated coincidences summed over a common center.

    Scans a pair of gates of the given width with fixed separation tau
    (gate_a at t_bar, gate_b at t_bar + tau) over all centers the grid
    supports and integrates.  With swap_roles the gates trade detectors,
    which must reproduce the signal at -tau.

    The pair-scattering family is off by default here (one density is
    reused for every center; enable it for small grids).
    """
    sym = theta_symmetrize(state, theta)
    ts = state.grid.times(t_center)
    dt = float(ts[1] - ts[0])
    k_tau = int(round(tau / dt))
    tau = k_tau * dt
    pad = 5.0 * gate_width
    plateau = gate_width >= (ts[-1] - ts[0])
    if plateau:
        # Gates wider than the grid count every pair at every center: the
        # scan integrates a plateau and needs no support-coverage guard.
        centers = ts[::center_stride]
    else:
        # Index arithmetic keeps the center set of the role-swapped scan at
        # delay tau in exact correspondence with the scan at -tau.
        i_lo = math.ceil((pad + max(0.0, -tau)) / dt - 1e-9)
        i_hi = len(ts) - 1 - math.ceil((pad + max(0.0, tau)) / dt - 1e-9)
        if i_hi <= i_lo:
            raise CoverageError(
                f"gate-center range empty: grid span {ts[0]:g}..{ts[-1]:g} cannot "
                f"hold gates of width {gate_width:g} separated by {tau:g}"
            )
        centers = ts[i_lo:i_hi + 1:center_stride]
    if t_star is None:
        t_star = float(max(centers[-1], centers[-1] + tau) + 5.0 * gate_width)
    stack = AmplitudeStack.build(matter, sym, t_center, t_star)
    band = np.abs((ts[None, :] - ts[:, None]) - (-tau if swap_roles else tau)) \
        <= 10.0 * gate_width
    w = pair_density(stack, stack, coupling, points=band,
                     include_pair_scattering=include_pair_scattering)
    w = np.where(band, w, 0.0)
    values = np.empty(len(centers))
    for i, tb in enumerate(centers):
        if swap_roles:
            da = np.exp(-((ts - (tb + tau)) ** 2) / (2 * gate_width**2))
            db = np.exp(-((ts - tb) ** 2) / (2 * gate_width**2))
        else:
            da = np.exp(-((ts - tb) ** 2) / (2 * gate_width**2))
            db = np.exp(-((ts - (tb + tau)) ** 2) / (2 * gate_width**2))
        values[i] = np.einsum("p,q,pq->", da, db, w).real * dt**2
    peak = float(np.max(np.abs(values)))
    if not plateau and peak > 0 \
            and max(abs(values[0]), abs(values[-1])) > 1e-5 * peak:
        raise CoverageError(
            "gate-center scan does not cover the signal support: endpoint "
            f"values are {values[0]:.3e}, {values[-1]:.3e} against peak {peak:.3e}"
        )
    return float(np.trapezoid(values, dx=float(centers[1] - centers[0])))


def mixed_density(state: TwoPhotonAmplitude, matter: MatterSystem,
                  coupling: float = 1e-2, t_center: float = 0.0,
                  t_star: float | None = None
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coincidence density with photon a in time and photon b in frequency.

    Returns (times, omegas, density).  The detection amplitude stack is
    transformed to the frequency domain on the second photon's axis (the
    frequency-gate detection kernel is exactly that transform of the
    time-pinned amplitudes).  Includes the amplitude orders through two
    insertions; the four-insertion family is not carried in the mixed route.
    """
    stack = AmplitudeStack.build(matter, state, t_center, t_star)
    ts, dt = stack.ts, stack.dt
    n = len(ts)
    omegas = state.grid.omegas
    psi = matter.psi0
    lam2 = coupling**2
    w_full = _trapz_vec(n, n - 1)
    w_star = _trapz_vec(n, stack.i_star)

    kmat = np.exp(1j * np.outer(ts, omegas)) * (dt / _SQRT2PI)   # (q, w)
    psi_mix = stack.psi_t @ kmat                                  # (p, w)
    a2_mix = np.einsum("pqm,qw->pwm", stack.a2, kmat)
    avac = psi_mix[:, :, None] * psi[None, None, :] + lam2 * a2_mix
    dens = np.einsum("pwm,pwm->pw", avac.conj(), avac).real

    # Residual sector, channel a (leftover photon integrated out).
    xa, xb = stack.xa, stack.xb
    norm_a = float(np.sum(w_star * np.einsum("sm,sm->s", xa.conj(), xa).real)) * dt
    ga = xa.conj() @ xa.T
    ia_mix = np.einsum("s,sp,sw->pw", w_star, ga, psi_mix) * dt
    col_mix = np.einsum("s,sw,sw->w", w_full, psi_mix.conj(), psi_mix).real * dt
    xa_sq = np.einsum("pm,pm->p", xa.conj(), xa).real
    dens += lam2 * (np.abs(psi_mix) ** 2 * norm_a
                    + 2.0 * np.real(psi_mix.conj() * ia_mix)
                    + xa_sq[:, None] * col_mix[None, :])

    # Residual sector, channel b: the detector-b pin transforms too.
    norm_b = float(np.sum(w_star * np.einsum("sm,sm->s", xb.conj(), xb).real)) * dt
    b_mix = np.einsum("qm,qw->wm", xb, kmat)                      # (w, d)
    hb = np.einsum("sm,wm->sw", xb.conj(), b_mix)
    uv = np.einsum("s,sw,ps->pw", w_star, hb, stack.psi_t) * dt
    b_sq = np.einsum("wm,wm->w", b_mix.conj(), b_mix).real
    row_sq = np.einsum("s,ps,ps->p", w_full, stack.psi_t.conj(), stack.psi_t).real * dt
    dens += lam2 * (np.abs(psi_mix) ** 2 * norm_b
                    + 2.0 * np.real(psi_mix.conj() * uv)
                    + row_sq[:, None] * b_sq[None, :])
    return ts, omegas, dens


def time_frequency_coincidence(state: TwoPhotonAmplitude, matter: MatterSystem,
                               t_bar_s: float, omega_bar_i: float,
                               gate_time: DetectionGate, gate_freq: DetectionGate,
                               coupling: float = 1e-2, t_center: float = 0.0,
                               t_star: float | None = None,
                               _density=None) -> float:
    """Mixed-domain gated coincidence at one (t_bar, omega_bar) point.

    The gates carry the widths; their centers are the scanned point.  For
    maps over many points, precompute mixed_density once and pass it in.
    """
    _require_kind(gate_time, "time", "gate_time")
    _require_kind(gate_freq, "frequency", "gate_freq")
    if t_star is None:
        t_star = gate_time.center + 5.0 * gate_time.width
    if _density is None:
        _density = mixed_density(state, matter, coupling, t_center, t_star)
    ts, omegas, dens = _density
    dt = float(ts[1] - ts[0])
    dw = float(omegas[1] - omegas[0])
    d_t = np.exp(-((ts - t_bar_s) ** 2) / (2 * gate_time.width**2))
    d_w = np.exp(-((omegas - omega_bar_i) ** 2) / (2 * gate_freq.width**2))
    return float(np.einsum("p,w,pw->", d_t, d_w, dens) * dt * dw)


def time_frequency_map(state: TwoPhotonAmplitude, matter: MatterSystem,
                       t_axis: np.ndarray, w_axis: np.ndarray,
                       gate_time: DetectionGate, gate_freq: DetectionGate,
                       coupling: float = 1e-2, t_center: float = 0.0,
                       t_star: float | None = None) -> np.ndarray:
    """Mixed-domain coincidence over a (t_bar, omega_bar) grid."""
    _require_kind(gate_time, "time", "gate_time")
    _require_kind(gate_freq, "frequency", "gate_freq")
    if t_star is None:
        t_star = float(np.max(t_axis)) + 5.0 * gate_time.width
    density = mixed_density(state, matter, coupling, t_center, t_star)
    ts, omegas, dens = density
    dt = float(ts[1] - ts[0])
    dw = float(omegas[1] - omegas[0])
    d_t = np.exp(-((np.asarray(t_axis)[:, None] - ts[None, :]) ** 2)
                 / (2 * gate_time.width**2))
    d_w = np.exp(-((np.asarray(w_axis)[:, None] - omegas[None, :]) ** 2)
                 / (2 * gate_freq.width**2))
    return np.einsum("ip,jw,pw->ij", d_t, d_w, dens) * dt * dw


# ---------------------------------------------------------------------------
# narrowband pair-source limit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NarrowbandResult:
    """Wiggling-contour and monotone-contour parts of the narrowband signal."""

    otoc: complex
    toc: complex
    window: float
    timescale_ok: bool


def _contour_four_point(matter: MatterSystem, tau: float, t: float,
                        backward: bool) -> complex:
    """<V_a G(tau) V_b G(-/+t) V_a G(tau) V_b> on the density operator."""
    if matter.rho0 is not None:
        rho = matter.rho0
    else:
        rho = np.outer(matter.psi0, matter.psi0.conj())
    va = matter.channel_matrix("a")
    vb = matter.channel_matrix("b")
    seg = -t if backward else t

    def prop(m, s):
        u = np.exp(-1j * matter.energies * s)
        return (u[:, None] * m) * u.conj()[None, :]

    m = vb @ rho
    m = prop(m, tau)
    m = va @ m
    m = prop(m, seg)
    m = vb @ m
    m = prop(m, tau)
    m = va @ m
    return complex(np.trace(m))


def narrowband_window(x: float) -> float:
    """Unit window on (-1/2, 1/2), exactly zero outside."""
    return 1.0 if -0.5 < x < 0.5 else 0.0


def narrowband_spdc_coincidence(spdc: SpdcParameters, matter: MatterSystem,
                                bs_delay: float, tau: float,
                                detect_delta_t: float | None = None,
                                n_quad: int = 201) -> NarrowbandResult:
    """Coincidence of a narrowband pair in the near-simultaneous-arrival limit.

    The pair's arrival-time-difference window (width = entanglement time)
    multiplies an integral over the spontaneous generation time t in
    (0, 2T): the wiggling-contour part propagates forward tau, backward t,
    forward tau between the four dipole factors; the monotone-contour
    companion replaces the backward segment by a forward one.  Both parts
    are evaluated with the matter superoperator propagators and returned
    with the window value and a flag recording whether the entanglement
    time is at least five times shorter than the fastest matter period.
    """
    if detect_delta_t is None:
        detect_delta_t = tau - 2.0 * bs_delay
    x = (detect_delta_t + 2.0 * bs_delay - tau) / spdc.entanglement_time
    win = narrowband_window(x)
    gaps = np.abs(matter.energies[:, None] - matter.energies[None, :])
    max_gap = float(np.max(gaps))
    ok = True
    if max_gap > 0:
        ok = spdc.entanglement_time * 5.0 <= 2.0 * np.pi / max_gap
        if not ok:
            warnings.warn(
                "entanglement time is not five times shorter than the fastest "
                "matter period; the near-simultaneous-arrival limit is marginal",
                stacklevel=2,
            )
    upper = 2.0 * bs_delay
    if upper <= 0.0 or win == 0.0:
        return NarrowbandResult(0.0j, 0.0j, win, ok)
    t_grid = np.linspace(0.0, upper, n_quad)
    otoc_vals = np.array(
        [_contour_four_point(matter, tau, t, backward=True) for t in t_grid]
    )
    toc_vals = np.array(
        [_contour_four_point(matter, tau, t, backward=False) for t in t_grid]
    )
    otoc = win * np.trapezoid(otoc_vals, t_grid)
    toc = win * np.trapezoid(toc_vals, t_grid)
    return NarrowbandResult(complex(otoc), complex(toc), win, ok)


# ---------------------------------------------------------------------------
# scalar helpers
# ---------------------------------------------------------------------------

def phase_matching(delta_k, length: float):
    """Colinear wave-mixing overlap factor (L/2) sinc(delta_k L / 2)."""
    if length <= 0:
        raise ValidationError("cavity length must be positive")
    x = np.asarray(delta_k, dtype=float) * length / 2.0
    out = (length / 2.0) * np.sinc(x / np.pi)
    return float(out) if np.isscalar(delta_k) else out


def retarded_field_contribution(series: Callable, r_over_c: float, t):
    """Source term of the detected field: -i <V>(t - r/c), causal.

    series is the matter expectation as a callable of time; the result is
    zero for t < r/c and -i series(t - r/c) otherwise.
    """
    if r_over_c < 0:
        raise ValidationError("r_over_c must be >= 0")
    t = np.asarray(t, dtype=float)
    shifted = t - r_over_c
    vals = -1j * np.asarray(series(shifted), dtype=np.complex128)
    out = np.where(shifted >= 0.0, vals, 0.0)
    return complex(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# scans and exports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SignalScan:
    """Named scan axes, one or more value columns, and provenance metadata.

    Column arrays are complex and shaped like the meshgrid of the axes in
    C order; metadata carries the configuration echo and its hash.
    """

    axes: dict[str, np.ndarray]
    columns: dict[str, np.ndarray]
    metadata: dict

    def __post_init__(self):
        shape = tuple(len(v) for v in self.axes.values())
        for name, col in self.columns.items():
            if np.asarray(col).shape != shape:
                raise ValidationError(f"column {name!r} does not match the axes")
            if not np.all(np.isfinite(np.asarray(col))):
                raise ValidationError(f"column {name!r} contains non-finite values")

    def to_csv(self, path: str | Path) -> None:
        axis_names = list(self.axes)
        col_names = list(self.columns)
        header = axis_names + [f"{c}_re" for c in col_names] \
            + [f"{c}_im" for c in col_names]
        grids = np.meshgrid(*self.axes.values(), indexing="ij")
        flat_axes = [g.reshape(-1) for g in grids]
        flat_cols = [np.asarray(self.columns[c]).reshape(-1) for c in col_names]
        lines = [",".join(header)]
        for i in range(flat_axes[0].size if flat_axes else 0):
            row = [repr(float(a[i])) for a in flat_axes]
            row += [repr(float(c[i].real)) for c in flat_cols]
            row += [repr(float(c[i].imag)) for c in flat_cols]
            lines.append(",".join(row))
        Path(path).write_text("\n".join(lines) + "\n")

    def to_json(self, path: str | Path) -> None:
        doc = {
            "schema": "qlis-scan-v1",
            "axes": {k: [float(x) for x in v] for k, v in self.axes.items()},
            "columns": {
                k: {
                    "re": np.asarray(v).real.reshape(-1).tolist(),
                    "im": np.asarray(v).imag.reshape(-1).tolist(),
                }
                for k, v in self.columns.items()
            },
            "metadata": self.metadata,
        }
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def config_hash(config: dict) -> str:
    """Deterministic hash of a configuration mapping."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def run_scan(evaluate: Callable[[int], dict[str, complex]],
             n_points: int, jobs: int = 1) -> list[dict[str, complex]]:
    """Evaluate a pure per-point function over a scan, optionally in parallel.

    Results are assembled by index, so the output is independent of
    completion order and of the worker count.
    """
    if jobs <= 1:
        return [evaluate(i) for i in range(n_points)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(evaluate, range(n_points)))
