"""Finite-dimensional matter with dipole channels and multipoint correlators.

A MatterSystem is a Hermitian Hamiltonian, a set of labeled Hermitian dipole
channel operators, and an initial pure state or density matrix.  Everything
is stored in the energy eigenbasis (computed once at construction); dipole
operators at time t then follow from pure phase factors, which makes
arbitrary multipoint correlators cheap.

Correlator specifications are ordered lists of (channel, time, flavor)
insertions.  No monotonicity is imposed on the times: wiggling
(forward-backward-forward) contours, where the correlator is genuinely out
of time ordering, evaluate through exactly the same code path as ordinary
time-ordered ones.

The raising/lowering split of a channel is defined in the energy eigenbasis:
the part of V mapping higher states to lower indices (strictly upper
triangular under ascending energy order) annihilates excitation and is the
lowering flavor; its adjoint is the raising flavor.  Energy ties are broken
by input ordering.  hbar = 1 throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ValidationError

_HERM_TOL = 1e-12

FLAVOR_FULL = "full"
FLAVOR_LOWER = "lower"
FLAVOR_RAISE = "raise"


@dataclass(frozen=True)
class DipoleChannel:
    """Hermitian dipole operator for one optical channel.

    split controls whether the raising/lowering decomposition is available;
    disable it for channels where the decomposition is not meaningful.
    """

    matrix: np.ndarray
    split: bool = True

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError("channel matrix must be square")
        if np.max(np.abs(m - m.conj().T)) > _HERM_TOL:
            raise ValidationError("channel dipole matrix must be Hermitian")
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class Insertion:
    """One dipole insertion of a correlator: channel label, time, flavor."""

    channel: str
    time: float
    flavor: str = FLAVOR_FULL

    def __post_init__(self):
        if self.flavor not in (FLAVOR_FULL, FLAVOR_LOWER, FLAVOR_RAISE):
            raise ValidationError(f"unknown flavor {self.flavor!r}")
        if not np.isfinite(self.time):
            raise ValidationError("insertion time must be finite")


@dataclass(frozen=True)
class CorrelatorSpec:
    """Ordered dipole insertions; element 0 acts first (rightmost in <...>)."""

    insertions: tuple[Insertion, ...]

    def __post_init__(self):
        if len(self.insertions) == 0:
            raise ValidationError("correlator spec must be nonempty")
        object.__setattr__(self, "insertions", tuple(self.insertions))

    @staticmethod
    def of(*entries: tuple) -> "CorrelatorSpec":
        """Build from (channel, time) or (channel, time, flavor) tuples."""
        return CorrelatorSpec(tuple(Insertion(*e) for e in entries))

    def conjugated(self) -> "CorrelatorSpec":
        """Reversed insertion order with raising/lowering flavors swapped."""
        swap = {FLAVOR_FULL: FLAVOR_FULL, FLAVOR_LOWER: FLAVOR_RAISE,
                FLAVOR_RAISE: FLAVOR_LOWER}
        return CorrelatorSpec(tuple(
            Insertion(i.channel, i.time, swap[i.flavor])
            for i in reversed(self.insertions)
        ))


class MatterSystem:
    """Matter Hamiltonian, dipole channels and initial state, eigenbasis-cached.

    Parameters
    ----------
    hamiltonian : (d, d) Hermitian array
    channels : mapping label -> DipoleChannel or Hermitian array
    initial_state : length-d vector (pure state) or (d, d) density matrix
    """

    def __init__(self, hamiltonian, channels, initial_state):
        h = np.asarray(hamiltonian, dtype=np.complex128)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValidationError("hamiltonian must be square")
        if np.max(np.abs(h - h.conj().T)) > _HERM_TOL:
            raise ValidationError("hamiltonian must be Hermitian within 1e-12")
        self.dim = h.shape[0]
        energies, basis = np.linalg.eigh(h)
        # eigh sorts ascending; ties keep input-derived ordering (stable).
        self.energies = energies
        self._basis = basis

        self.channels: dict[str, DipoleChannel] = {}
        self._v_eig: dict[str, np.ndarray] = {}
        self._mu_eig: dict[str, np.ndarray] = {}
        for label, chan in dict(channels).items():
            if not isinstance(chan, DipoleChannel):
                chan = DipoleChannel(np.asarray(chan))
            if chan.matrix.shape != (self.dim, self.dim):
                raise ValidationError(f"channel {label!r} has wrong dimension")
            self.channels[label] = chan
            v = basis.conj().T @ chan.matrix @ basis
            self._v_eig[label] = v
            if chan.split:
                # Lowering part: maps higher-energy states down, i.e. the
                # strictly upper triangle in ascending-energy index order.
                self._mu_eig[label] = np.triu(v, k=1)

        state = np.asarray(initial_state, dtype=np.complex128)
        if state.ndim == 1:
            if state.shape != (self.dim,):
                raise ValidationError("initial state vector has wrong dimension")
            n = np.linalg.norm(state)
            if abs(n - 1.0) > 1e-12:
                raise ValidationError(f"initial state norm {n} != 1 within 1e-12")
            self.rho0 = None
            self.psi0 = basis.conj().T @ state
        elif state.ndim == 2:
            if state.shape != (self.dim, self.dim):
                raise ValidationError("density matrix has wrong dimension")
            if abs(np.trace(state).real - 1.0) > 1e-12:
                raise ValidationError("density matrix trace != 1 within 1e-12")
            self.rho0 = basis.conj().T @ state @ basis
            self.psi0 = None
        else:
            raise ValidationError("initial state must be a vector or a matrix")

    # -- representation helpers -------------------------------------------

    def channel_matrix(self, channel: str, flavor: str = FLAVOR_FULL) -> np.ndarray:
        """Channel operator of the given flavor in the energy eigenbasis."""
        if channel not in self._v_eig:
            raise KeyError(f"unknown channel {channel!r}")
        if flavor == FLAVOR_FULL:
            return self._v_eig[channel]
        if channel not in self._mu_eig:
            raise ConfigurationError(
                f"channel {channel!r} has no raising/lowering split"
            )
        mu = self._mu_eig[channel]
        return mu if flavor == FLAVOR_LOWER else mu.conj().T

    def dipole_at(self, channel: str, t: float, flavor: str = FLAVOR_FULL) -> np.ndarray:
        """Interaction-picture dipole e^{iHt} V e^{-iHt} in the eigenbasis."""
        v = self.channel_matrix(channel, flavor)
        phase = np.exp(1j * self.energies * t)
        return v * np.outer(phase, phase.conj())

    def hamiltonian_eig(self) -> np.ndarray:
        return np.diag(self.energies).astype(np.complex128)

    def to_input_basis(self, matrix: np.ndarray) -> np.ndarray:
        return self._basis @ matrix @ self._basis.conj().T

    def propagator(self, t: float) -> np.ndarray:
        """U(t) = e^{-iHt} in the eigenbasis (diagonal)."""
        return np.diag(np.exp(-1j * self.energies * t))

    def expectation(self, op_chain: np.ndarray) -> complex:
        """<psi0| M |psi0> or Tr[M rho0] for an eigenbasis operator M."""
        if self.psi0 is not None:
            return complex(np.vdot(self.psi0, op_chain @ self.psi0))
        return complex(np.trace(op_chain @ self.rho0))


def heisenberg_dipole(sys: MatterSystem, channel: str, t: float) -> np.ndarray:
    """Heisenberg-picture dipole V(t) in the original input basis."""
    return sys.to_input_basis(sys.dipole_at(channel, t))


def multipoint_correlator(sys: MatterSystem, spec: CorrelatorSpec) -> complex:
    """<V_{c_m}(t_m) ... V_{c_1}(t_1)> with operators applied in list order.

    The insertion list is applied left to right onto the state (element 0
    first), i.e. read right-to-left in the bracket; times may be in any
    order, so wiggling contours evaluate directly.
    """
    if sys.psi0 is not None:
        vec = sys.psi0
        for ins in spec.insertions:
            vec = sys.dipole_at(ins.channel, ins.time, ins.flavor) @ vec
        return complex(np.vdot(sys.psi0, vec))
    mat = sys.rho0
    for ins in spec.insertions:
        mat = sys.dipole_at(ins.channel, ins.time, ins.flavor) @ mat
    return complex(np.trace(mat))


def rwa_correlator(sys: MatterSystem, spec: CorrelatorSpec) -> complex:
    """Correlator with raising/lowering flavors enforced on every insertion."""
    for ins in spec.insertions:
        if ins.flavor == FLAVOR_FULL:
            raise ConfigurationError(
                "rwa_correlator requires every insertion to carry a "
                "raising or lowering flavor"
            )
    return multipoint_correlator(sys, spec)


def liouville_green(sys: MatterSystem, t: float) -> np.ndarray:
    """Causal superoperator propagator on vectorized operators.

    Returns -i theta(t) U(t) (x) U(t)^* acting on row-major vec(rho); zero
    for t < 0, -i times the identity map at t = 0.  Composition satisfies
    G(t1) G(t2) = -i G(t1 + t2) for t1, t2 >= 0.
    """
    d = sys.dim
    if t < 0:
        return np.zeros((d * d, d * d), dtype=np.complex128)
    u = sys.propagator(t)
    return -1j * np.kron(u, u.conj())


def contour_propagator(sys: MatterSystem, t: float) -> np.ndarray:
    """Two-sided evolution superoperator U(t) (x) U(t)^* for any real t.

    Unlike liouville_green this carries no causal step and no -i prefactor;
    negative arguments propagate backward, which is what wiggling-contour
    correlators require.
    """
    u = sys.propagator(t)
    return np.kron(u, u.conj())


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

_SCHEMA = "qlis-matter-v1"


def _complex_to_pairs(m: np.ndarray) -> list:
    flat = np.asarray(m).reshape(-1)
    return [[float(z.real), float(z.imag)] for z in flat]


def _pairs_to_complex(pairs: Sequence, shape: tuple) -> np.ndarray:
    arr = np.array([complex(re, im) for re, im in pairs])
    return arr.reshape(shape)


def save_matter(path: str | Path, sys: MatterSystem) -> None:
    """Write the system (input basis) as a versioned JSON model file."""
    basis = sys._basis
    doc: dict = {
        "schema": _SCHEMA,
        "dim": sys.dim,
        "hamiltonian_re_im": _complex_to_pairs(
            basis @ np.diag(sys.energies) @ basis.conj().T
        ),
        "channels": {
            label: {
                "matrix_re_im": _complex_to_pairs(sys.to_input_basis(sys._v_eig[label])),
                "split": chan.split,
            }
            for label, chan in sys.channels.items()
        },
    }
    if sys.psi0 is not None:
        doc["initial_state"] = {
            "kind": "pure",
            "vector_re_im": _complex_to_pairs(basis @ sys.psi0),
        }
    else:
        doc["initial_state"] = {
            "kind": "density",
            "matrix_re_im": _complex_to_pairs(basis @ sys.rho0 @ basis.conj().T),
        }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_matter(path: str | Path) -> MatterSystem:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != _SCHEMA:
        raise ValidationError(f"unknown matter schema {doc.get('schema')!r}")
    d = int(doc["dim"])
    h = _pairs_to_complex(doc["hamiltonian_re_im"], (d, d))
    channels = {
        label: DipoleChannel(
            _pairs_to_complex(entry["matrix_re_im"], (d, d)),
            split=bool(entry.get("split", True)),
        )
        for label, entry in doc["channels"].items()
    }
    init = doc["initial_state"]
    if init["kind"] == "pure":
        state = _pairs_to_complex(init["vector_re_im"], (d,))
    else:
        state = _pairs_to_complex(init["matrix_re_im"], (d, d))
    return MatterSystem(h, channels, state)
