"""Passive and active interferometric elements as mode transformations.

A two-port element is a 2x2 complex matrix acting on the mode operator
vector.  Passive elements (beam splitters, phase plates) are unitary and
conserve total photon number; active elements (parametric wave mixing)
satisfy the Bogoliubov constraint |M11|^2 - |M12|^2 = 1 and act on
(a1, a2^dagger).

A movable beam splitter carries a delay: its off-diagonal entries acquire
frequency-dependent phases exp(-/+ i omega T) when the transform is applied
to an amplitude grid.  The phase is always applied in the frequency domain;
a constant matrix entry cannot hold a function of omega.

The module also builds the truncated two-mode Fock representation with the
angular-momentum-like generators (J) of passive optics and the boost-like
generators (K) of active optics, and checks invariance of their quadratic
invariants under induced Fock-space transformations.  Operations that would
populate states above the photon cutoff raise TruncationOverflowError rather
than silently clipping; invariant checks restrict to the truncation-safe
subspace.  All elements are lossless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import TruncationOverflowError, ValidationError
from .states import FrequencyGrid, TwoPhotonAmplitude

_UNITARY_TOL = 1e-12
_BOGOLIUBOV_TOL = 1e-12


# ---------------------------------------------------------------------------
# mode transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeTransform:
    """2x2 mode transformation, tagged passive (unitary) or active (Bogoliubov).

    delay is the path delay T in seconds; it contributes phases
    exp(-i omega T) / exp(+i omega T) on the off-diagonal entries when the
    transform acts on frequency-resolved amplitudes.
    """

    matrix: np.ndarray
    kind: str
    delay: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.shape != (2, 2):
            raise ValidationError("matrix must be 2x2")
        object.__setattr__(self, "matrix", m)
        if self.kind == "passive":
            res = np.max(np.abs(m.conj().T @ m - np.eye(2)))
            if res > _UNITARY_TOL:
                raise ValidationError(
                    f"passive transform not unitary: |M^dag M - I| = {res:.3e}"
                )
        elif self.kind == "active":
            res = abs(abs(m[0, 0]) ** 2 - abs(m[0, 1]) ** 2 - 1.0)
            if res > _BOGOLIUBOV_TOL:
                raise ValidationError(
                    f"active transform violates |M11|^2 - |M12|^2 = 1 by {res:.3e}"
                )
        else:
            raise ValidationError(f"kind must be 'passive' or 'active', got {self.kind!r}")

    def matrix_at(self, omega: float | np.ndarray) -> np.ndarray:
        """Matrix including the frequency-dependent delay phases.

        For scalar omega returns a 2x2 array; for an array of n frequencies
        returns shape (n, 2, 2).
        """
        w = np.asarray(omega, dtype=float)
        phase = np.exp(-1j * w * self.delay)
        out = np.broadcast_to(self.matrix, w.shape + (2, 2)).copy()
        out[..., 0, 1] *= phase
        out[..., 1, 0] *= np.conj(phase)
        return out

    def adjoint(self) -> "ModeTransform":
        """Conjugate-transpose transform (inverse, for passive elements).

        The delay sign convention is preserved: the adjoint of the delayed
        balanced splitter undoes it on amplitude grids.
        """
        return ModeTransform(self.matrix.conj().T, self.kind, self.delay)


def beam_splitter(transmission: float, reflection: float, phi: float = 0.0) -> ModeTransform:
    """Lossless beam splitter with T^2 + R^2 = 1 and relative phase phi.

    Matrix ((T, i R e^{i phi}), (i R e^{-i phi}, T)).
    """
    residual = abs(transmission**2 + reflection**2 - 1.0)
    if residual > 1e-9:
        raise ValidationError(
            f"(T, R) not normalized: |T^2 + R^2 - 1| = {residual:.3e}"
        )
    if not (0.0 <= transmission <= 1.0 and 0.0 <= reflection <= 1.0):
        raise ValidationError("T and R must lie in [0, 1]")
    t, r = transmission, reflection
    m = np.array(
        [[t, 1j * r * np.exp(1j * phi)], [1j * r * np.exp(-1j * phi), t]],
        dtype=np.complex128,
    )
    # Re-normalize roundoff so the unitarity invariant holds exactly.
    if residual != 0.0:
        m[0, 0] = m[1, 1] = math.sqrt(1.0 - r**2)
    return ModeTransform(m, "passive")


def delayed_balanced_bs(t_delay: float) -> ModeTransform:
    """Balanced beam splitter whose off-diagonals carry exp(-/+ i omega T)."""
    s = 1.0 / math.sqrt(2.0)
    m = np.array([[s, 1j * s], [1j * s, s]], dtype=np.complex128)
    return ModeTransform(m, "passive", delay=t_delay)


def squeezer(beta: float, delta: float = 0.0) -> ModeTransform:
    """Two-mode squeezing element acting on (a1, a2^dagger).

    Matrix ((cosh b, e^{-i delta} sinh b), (e^{i delta} sinh b, cosh b)).
    """
    if beta < 0:
        raise ValidationError("beta must be >= 0")
    ch, sh = math.cosh(beta), math.sinh(beta)
    m = np.array(
        [[ch, np.exp(-1j * delta) * sh], [np.exp(1j * delta) * sh, ch]],
        dtype=np.complex128,
    )
    return ModeTransform(m, "active")


def compose(first: ModeTransform, second: ModeTransform) -> ModeTransform:
    """Transform equal to applying `first`, then `second` (matrix product).

    Only like kinds compose; delays must match (frequency-dependent phases of
    unequal delays do not reduce to a single element of this form).
    """
    if first.kind != second.kind:
        raise ValidationError("cannot compose passive with active transforms")
    if first.delay != second.delay and first.delay != 0.0 and second.delay != 0.0:
        raise ValidationError("cannot compose transforms with different delays")
    return ModeTransform(second.matrix @ first.matrix, first.kind,
                         max(first.delay, second.delay, key=abs))


# ---------------------------------------------------------------------------
# truncated two-mode Fock representation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TwoModeFockOperators:
    """Ladder and group generators on the (n_max + 1)^2 two-mode Fock space.

    Basis ordering: |n1, n2> with index n1 * (n_max + 1) + n2.  The J
    generators close the rotation-algebra relations and the K generators the
    boost-algebra relations exactly on states whose per-mode occupation stays
    below the cutoff; edge states are excluded from invariant checks.
    """

    n_max: int
    a1: np.ndarray
    a2: np.ndarray
    jx: np.ndarray
    jy: np.ndarray
    jz: np.ndarray
    kx: np.ndarray
    ky: np.ndarray
    kz: np.ndarray
    number: np.ndarray

    @property
    def dim(self) -> int:
        return (self.n_max + 1) ** 2

    @property
    def a1_dag(self) -> np.ndarray:
        return self.a1.conj().T

    @property
    def a2_dag(self) -> np.ndarray:
        return self.a2.conj().T

    @property
    def j_squared(self) -> np.ndarray:
        return self.jx @ self.jx + self.jy @ self.jy + self.jz @ self.jz

    @property
    def k_squared(self) -> np.ndarray:
        """Boost invariant Jz (Jz + 1).

        On the two-mode realization every boost invariant is a function of
        the mode imbalance Jz, which even the truncated squeezing generators
        commute with exactly; this closed form is therefore free of the
        truncation-edge defects that the matrix-product combination
        Kz^2 - Kx^2 - Ky^2 (equal to Jz^2 - 1/4 on this realization) picks
        up near the cutoff, and is the one used for conjugation checks.
        """
        return self.jz @ self.jz + self.jz

    @property
    def k_squared_quadratic(self) -> np.ndarray:
        """Matrix-product combination Kz^2 - Kx^2 - Ky^2.

        Exact only away from the cutoff; equals Jz^2 - 1/4 there.
        """
        return self.kz @ self.kz - self.kx @ self.kx - self.ky @ self.ky

    def total_photon_sector(self, n_total: int) -> np.ndarray:
        """Indices of basis states with n1 + n2 == n_total."""
        n = self.n_max + 1
        n1, n2 = np.divmod(np.arange(n * n), n)
        return np.nonzero(n1 + n2 == n_total)[0]

    def sector_projector(self, n_total_max: int) -> np.ndarray:
        """Projector onto total occupation <= n_total_max."""
        n = self.n_max + 1
        n1, n2 = np.divmod(np.arange(n * n), n)
        return np.diag((n1 + n2 <= n_total_max).astype(float))


def build_fock_operators(n_max: int) -> TwoModeFockOperators:
    """Construct the truncated two-mode operator set for cutoff n_max >= 2."""
    if n_max < 2:
        raise ValidationError(f"n_max must be >= 2, got {n_max}")
    n = n_max + 1
    a = np.diag(np.sqrt(np.arange(1, n)), k=1).astype(np.complex128)
    eye = np.eye(n)
    a1 = np.kron(a, eye)
    a2 = np.kron(eye, a)
    a1d, a2d = a1.conj().T, a2.conj().T
    jx = 0.5 * (a1d @ a2 + a2d @ a1)
    jy = -0.5j * (a1d @ a2 - a2d @ a1)
    jz = 0.5 * (a1d @ a1 - a2d @ a2)
    kx = 0.5 * (a1d @ a2d + a1 @ a2)
    ky = -0.5j * (a1d @ a2d - a1 @ a2)
    kz = 0.5 * (a1d @ a1 + a2 @ a2d)
    number = a1d @ a1 + a2d @ a2
    return TwoModeFockOperators(n_max, a1, a2, jx, jy, jz, kx, ky, kz, number)


def _fock_generator(gen2: np.ndarray, ops: TwoModeFockOperators, kind: str) -> np.ndarray:
    a1, a2 = ops.a1, ops.a2
    a1d, a2d = ops.a1_dag, ops.a2_dag
    if kind == "passive":
        # G = sum_ij B_ij a_i^dag a_j with B anti-Hermitian.
        return (
            gen2[0, 0] * (a1d @ a1) + gen2[0, 1] * (a1d @ a2)
            + gen2[1, 0] * (a2d @ a1) + gen2[1, 1] * (a2d @ a2)
        )
    # B acts on (a1, a2^dag): diagonal entries rotate, off-diagonals squeeze.
    return (
        gen2[0, 0] * (a1d @ a1) - gen2[1, 1] * (a2d @ a2)
        + gen2[0, 1] * (a1d @ a2d) - np.conj(gen2[0, 1]) * (a1 @ a2)
    )


def fock_unitary(transform: ModeTransform, ops: TwoModeFockOperators,
                 overflow_tol: float = 1e-3,
                 sector_n_max: int | None = None) -> np.ndarray:
    """Fock-space transformation induced by a 2x2 mode transform.

    For a passive transform M the returned U satisfies
    U^dag a_k U = sum_j M_kj a_j; for an active transform the analogous
    relation holds on (a1, a2^dag).  The generator is obtained from the
    matrix logarithm of M and exponentiated on the truncated space.

    Active transforms do not preserve photon number.  Their leakage through
    the cutoff is measured by exponentiating the same generator on a padded
    space: if any basis state with total occupation <= sector_n_max
    (default n_max - 2) would put more than overflow_tol of its weight
    above n_max, a TruncationOverflowError is raised instead of silently
    clipping.  States near the cutoff always leak under squeezing, so the
    caller should state the sector the transform is actually applied to.
    """
    gen2 = scipy.linalg.logm(np.asarray(transform.matrix))
    if transform.kind == "active":
        if sector_n_max is None:
            sector_n_max = max(ops.n_max - 2, 0)
        pad_ops = build_fock_operators(ops.n_max + 4)
        u_pad = scipy.linalg.expm(_fock_generator(gen2, pad_ops, "active"))
        n_big = pad_ops.n_max + 1
        n1, n2 = np.divmod(np.arange(n_big * n_big), n_big)
        above = (n1 > ops.n_max) | (n2 > ops.n_max)
        sector = (n1 + n2 <= sector_n_max)
        leak = float(np.max(
            np.sum(np.abs(u_pad[np.ix_(above, sector)]) ** 2, axis=0)
        ))
        if leak > overflow_tol:
            raise TruncationOverflowError(
                f"active transform puts weight {leak:.3e} of the total-"
                f"occupation<={sector_n_max} sector above the n_max={ops.n_max} "
                f"cutoff (tol {overflow_tol:g})"
            )
    return scipy.linalg.expm(_fock_generator(gen2, ops, transform.kind))


def commutator_residuals(ops: TwoModeFockOperators, n_sector_max: int) -> dict[str, float]:
    """Frobenius norms of the algebra-relation residuals on a safe sector.

    Evaluates [J_i, J_j] - i eps_ijk J_k and the boost relations
    [Kx, Ky] + i Kz, [Ky, Kz] - i Kx, [Kz, Kx] - i Ky, all projected onto
    total occupation <= n_sector_max, plus the ladder commutator
    [a_i, a_j^dag] - delta_ij on total occupation < n_max.
    """
    if n_sector_max > ops.n_max - 1:
        raise ValidationError(
            f"sector max {n_sector_max} not truncation-safe for n_max={ops.n_max}"
        )
    p = ops.sector_projector(n_sector_max)

    def comm(x, y):
        return x @ y - y @ x

    def res(m):
        return float(np.linalg.norm(p @ m @ p))

    out = {
        "[Jx,Jy]-iJz": res(comm(ops.jx, ops.jy) - 1j * ops.jz),
        "[Jy,Jz]-iJx": res(comm(ops.jy, ops.jz) - 1j * ops.jx),
        "[Jz,Jx]-iJy": res(comm(ops.jz, ops.jx) - 1j * ops.jy),
        "[Kx,Ky]+iKz": res(comm(ops.kx, ops.ky) + 1j * ops.kz),
        "[Ky,Kz]-iKx": res(comm(ops.ky, ops.kz) - 1j * ops.kx),
        "[Kz,Kx]-iKy": res(comm(ops.kz, ops.kx) - 1j * ops.ky),
    }
    p_ladder = ops.sector_projector(ops.n_max - 1)
    for (name, x, y, d) in (
        ("[a1,a1+]-1", ops.a1, ops.a1_dag, 1.0),
        ("[a2,a2+]-1", ops.a2, ops.a2_dag, 1.0),
        ("[a1,a2+]", ops.a1, ops.a2_dag, 0.0),
    ):
        m = comm(x, y) - d * np.eye(ops.dim)
        out[name] = float(np.linalg.norm(p_ladder @ m @ p_ladder))
    return out


def casimir_check(transform: ModeTransform, ops: TwoModeFockOperators,
                  n_sector_max: int | None = None,
                  overflow_tol: float = 1e-3) -> float:
    """Residual Frobenius norm of the quadratic invariant under conjugation.

    Passive transforms are checked on J^2, active ones on the boost
    invariant; the comparison is restricted to total occupation
    <= n_sector_max (default: n_max - 2, which keeps two quanta of headroom
    for pair creation).
    """
    if n_sector_max is None:
        n_sector_max = ops.n_max - 2
    if n_sector_max > ops.n_max - 1:
        raise ValidationError("sector exceeds the truncation-safe subspace")
    u = fock_unitary(transform, ops, overflow_tol=overflow_tol,
                     sector_n_max=n_sector_max)
    target = ops.j_squared if transform.kind == "passive" else ops.k_squared
    p = ops.sector_projector(n_sector_max)
    delta = u @ target @ u.conj().T - target
    return float(np.linalg.norm(p @ delta @ p))


# ---------------------------------------------------------------------------
# action on two-photon amplitudes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RotatedTwoPhoton:
    """Two-photon state after a passive transform, split by mode content.

    ab holds the two-mode-preserving amplitude Phi'(w_a, w_b); aa and bb hold
    the unsymmetrized kernels S(x, y) of the double-occupation components
    (coefficient of a^dag(x) a^dag(y) resp. b^dag(x) b^dag(y)).  Norms use
    the bosonic double-counting of the symmetrized kernels so that a passive
    transform preserves the total norm exactly.
    """

    grid: FrequencyGrid
    ab: np.ndarray
    aa: np.ndarray
    bb: np.ndarray

    def two_mode_amplitude(self) -> TwoPhotonAmplitude:
        return TwoPhotonAmplitude(self.grid, self.ab)

    def norms(self) -> dict[str, float]:
        dw2 = self.grid.spacing ** 2

        def same_mode_norm_sq(s):
            sym = 0.5 * (s + s.T)
            return 2.0 * float(np.sum(np.abs(sym) ** 2)) * dw2

        return {
            "ab": float(np.sum(np.abs(self.ab) ** 2)) * dw2,
            "aa": same_mode_norm_sq(self.aa),
            "bb": same_mode_norm_sq(self.bb),
        }

    def total_norm(self) -> float:
        return math.sqrt(sum(self.norms().values()))


def transform_two_photon(transform: ModeTransform,
                         state: TwoPhotonAmplitude | RotatedTwoPhoton) -> RotatedTwoPhoton:
    """Apply a passive transform to a two-photon state.

    Creation operators map as a_k^dag(w) -> sum_j M_jk(w) a_j^dag(w), with
    the delay phases of M evaluated on the grid.  Accepts either a plain
    two-mode amplitude or a previously rotated state (so a transform followed
    by its adjoint is the identity on all sectors).
    """
    if transform.kind != "passive":
        raise ValidationError("amplitude transport is defined for passive elements")
    if isinstance(state, TwoPhotonAmplitude):
        state = RotatedTwoPhoton(
            state.grid, state.values.copy(),
            np.zeros_like(state.values), np.zeros_like(state.values),
        )
    grid = state.grid
    w = grid.omegas
    m = transform.matrix_at(w)  # (n, 2, 2)
    m11, m12 = m[:, 0, 0], m[:, 0, 1]
    m21, m22 = m[:, 1, 0], m[:, 1, 1]

    def col(v):
        return v[:, None]

    def row(v):
        return v[None, :]

    ab, aa, bb = state.ab, state.aa, state.bb
    # a+(x) b+(y): a+ -> m11 a+ + m21 b+;  b+ -> m12 a+ + m22 b+.
    new_ab = col(m11) * row(m22) * ab + col(m12) * row(m21) * ab.T
    new_aa = col(m11) * row(m12) * ab
    new_bb = col(m21) * row(m22) * ab
    # a+(x) a+(y) kernels.
    new_aa += col(m11) * row(m11) * aa
    new_ab += col(m11) * row(m21) * (aa + aa.T)
    new_bb += col(m21) * row(m21) * aa
    # b+(x) b+(y) kernels.
    new_bb += col(m22) * row(m22) * bb
    new_ab += col(m12) * row(m22) * (bb + bb.T)
    new_aa += col(m12) * row(m12) * bb
    # Same-mode kernels are defined only up to their antisymmetric part;
    # store the canonical symmetric representative.
    new_aa = 0.5 * (new_aa + new_aa.T)
    new_bb = 0.5 * (new_bb + new_bb.T)
    return RotatedTwoPhoton(grid, new_ab, new_aa, new_bb)


def two_mode_coincidence(transform: ModeTransform, state: TwoPhotonAmplitude) -> float:
    """Probability weight left in the two-mode (one photon per port) sector."""
    return transform_two_photon(transform, state).norms()["ab"]
