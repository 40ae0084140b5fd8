"""Exact joint propagation of matter coupled to two discrete field modes.

Brute-force, non-perturbative reference dynamics: the matter system and a
pair of single-frequency modes are evolved with the full Hamiltonian by
eigendecomposition.  Used to validate the perturbative signal engine at
weak coupling; not part of any measurement pipeline.

The joint Hamiltonian is

    H = H_matter + w_a n_a + w_b n_b + lam * sum_c V_c (a_c + a_c^dag)

with an optional rotating-wave form  lam * sum_c (mu_c a_c^dag + mu_c^dag a_c)
in which absorption always lowers the photon number.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import ModeTransform, build_fock_operators, fock_unitary
from .errors import CapabilityError, ValidationError
from .matter import FLAVOR_LOWER, MatterSystem

_DIM_LIMIT = 4096


@dataclass(frozen=True)
class JointModel:
    """Matter plus two discrete modes with linear dipole coupling.

    Channels "a" and "b" couple to the first and second mode respectively.
    """

    matter: MatterSystem
    omega_a0: float
    omega_b0: float
    n_max: int = 2
    lam: float = 1e-2
    rwa: bool = False

    def __post_init__(self):
        if self.n_max < 1:
            raise ValidationError("n_max must be >= 1")
        if self.dim > _DIM_LIMIT:
            raise CapabilityError(
                f"joint dimension {self.dim} exceeds the desk-scale limit {_DIM_LIMIT}"
            )
        for c in ("a", "b"):
            if c not in self.matter.channels:
                raise ValidationError(f"matter system must define channel {c!r}")

    @property
    def field_dim(self) -> int:
        return (self.n_max + 1) ** 2

    @property
    def dim(self) -> int:
        return self.matter.dim * self.field_dim

    def field_ops(self):
        return build_fock_operators(self.n_max)

    def hamiltonian_parts(self) -> tuple[np.ndarray, np.ndarray]:
        """(H0, H1) with H = H0 + lam * H1, in the matter eigenbasis."""
        ops = self.field_ops()
        eye_f = np.eye(self.field_dim)
        eye_m = np.eye(self.matter.dim)
        n_a = ops.a1_dag @ ops.a1
        n_b = ops.a2_dag @ ops.a2
        h0 = (
            np.kron(self.matter.hamiltonian_eig(), eye_f)
            + np.kron(eye_m, self.omega_a0 * n_a + self.omega_b0 * n_b)
        )
        if self.rwa:
            mu_a = self.matter.channel_matrix("a", FLAVOR_LOWER)
            mu_b = self.matter.channel_matrix("b", FLAVOR_LOWER)
            h1 = (
                np.kron(mu_a, ops.a1_dag) + np.kron(mu_a.conj().T, ops.a1)
                + np.kron(mu_b, ops.a2_dag) + np.kron(mu_b.conj().T, ops.a2)
            )
        else:
            va = self.matter.channel_matrix("a")
            vb = self.matter.channel_matrix("b")
            h1 = (
                np.kron(va, ops.a1 + ops.a1_dag)
                + np.kron(vb, ops.a2 + ops.a2_dag)
            )
        return h0, h1

    def hamiltonian(self) -> np.ndarray:
        h0, h1 = self.hamiltonian_parts()
        return h0 + self.lam * h1

    def fock_state(self, n_a: int, n_b: int) -> np.ndarray:
        """Field basis vector |n_a, n_b>."""
        if not (0 <= n_a <= self.n_max and 0 <= n_b <= self.n_max):
            raise ValidationError("photon numbers outside the cutoff")
        v = np.zeros(self.field_dim, dtype=np.complex128)
        v[n_a * (self.n_max + 1) + n_b] = 1.0
        return v

    def initial_state(self, field_state: np.ndarray | None = None) -> np.ndarray:
        """Matter initial state (eigenbasis) tensor the given field state."""
        if self.matter.psi0 is None:
            raise ValidationError("joint propagation needs a pure matter state")
        if field_state is None:
            field_state = self.fock_state(1, 1)
        return np.kron(self.matter.psi0, np.asarray(field_state, dtype=np.complex128))

    def coincidence_projector(self, interferometer: ModeTransform | None = None,
                              ) -> np.ndarray:
        """Rotated two-photon coincidence observable a^dag b^dag b a.

        With an interferometer R the detected-mode observable is pulled back
        through the induced Fock-space transformation.
        """
        ops = self.field_ops()
        proj = ops.a1_dag @ ops.a2_dag @ ops.a2 @ ops.a1
        if interferometer is not None:
            u = fock_unitary(interferometer, ops)
            proj = u.conj().T @ proj @ u
        return np.kron(np.eye(self.matter.dim), proj)


def _eig(model: JointModel) -> tuple[np.ndarray, np.ndarray]:
    # Lazily attached to the (frozen, immutable) instance.
    cached = getattr(model, "_eig_cache", None)
    if cached is None:
        cached = np.linalg.eigh(model.hamiltonian())
        object.__setattr__(model, "_eig_cache", cached)
    return cached


def propagate(model: JointModel, state: np.ndarray, t: float) -> np.ndarray:
    """exp(-i H t) |state> by eigendecomposition; norm-preserving."""
    state = np.asarray(state, dtype=np.complex128)
    if state.shape != (model.dim,):
        raise ValidationError(f"state must have length {model.dim}")
    evals, evecs = _eig(model)
    return evecs @ (np.exp(-1j * evals * t) * (evecs.conj().T @ state))


def exact_coincidence(model: JointModel, t_meas: float,
                      field_state: np.ndarray | None = None,
                      interferometer: ModeTransform | None = None) -> float:
    """Two-photon coincidence expectation after exact joint evolution.

    Propagates matter (x) field_state (default |1,1>) to t_meas and returns
    the expectation of the rotated projector a^dag b^dag b a.
    """
    psi = propagate(model, model.initial_state(field_state), t_meas)
    obs = model.coincidence_projector(interferometer)
    val = np.vdot(psi, obs @ psi)
    return float(val.real)


def total_excitation_operator(model: JointModel) -> np.ndarray:
    """Matter excitation count plus photon number (conserved under RWA).

    Matter excitation is counted as the energy-level index ordering of the
    eigenbasis: the ground state counts 0, every other level 1.
    """
    ops = model.field_ops()
    exc = np.eye(model.matter.dim)
    exc[0, 0] = 0.0
    return (
        np.kron(exc, np.eye(model.field_dim))
        + np.kron(np.eye(model.matter.dim), ops.number)
    )
