import numpy as np
import pytest

from qlis import (FrequencyGrid, TruncationOverflowError, ValidationError,
                  beam_splitter, build_fock_operators, casimir_check,
                  commutator_residuals, compose, delayed_balanced_bs,
                  fock_unitary, gaussian_envelope, product_amplitude,
                  squeezer, transform_two_photon, two_mode_coincidence)


def balanced():
    return beam_splitter(1 / np.sqrt(2), 1 / np.sqrt(2), 0.0)


def test_fully_transmissive_is_identity():
    bs = beam_splitter(1.0, 0.0, 0.0)
    assert np.allclose(bs.matrix, np.eye(2), atol=1e-15)


def test_balanced_matrix():
    bs = balanced()
    ref = np.array([[1.0, 1.0j], [1.0j, 1.0]]) / np.sqrt(2)
    assert np.allclose(bs.matrix, ref, atol=1e-15)


def test_non_normalized_pair_rejected():
    with pytest.raises(ValidationError, match="normalized"):
        beam_splitter(0.9, 0.6)


def test_compose_with_adjoint_is_identity():
    bs = beam_splitter(0.8, 0.6, 0.4)
    prod = compose(bs, bs.adjoint())
    assert np.max(np.abs(prod.matrix - np.eye(2))) < 1e-12


def test_squeezer_values():
    assert np.allclose(squeezer(0.0, 1.3).matrix, np.eye(2), atol=1e-15)
    sq = squeezer(1.0, 0.0)
    assert np.allclose(sq.matrix, [[np.cosh(1.0), np.sinh(1.0)],
                                   [np.sinh(1.0), np.cosh(1.0)]], atol=1e-15)


@pytest.mark.parametrize("beta,delta", [(0.3, 0.0), (1.2, 0.7), (2.5, -1.1)])
def test_bogoliubov_constraint(beta, delta):
    m = squeezer(beta, delta).matrix
    assert abs(abs(m[0, 0]) ** 2 - abs(m[0, 1]) ** 2 - 1.0) < 1e-12


def test_group_closure(rng):
    for _ in range(10):
        t1, t2 = np.sqrt(rng.uniform(0.1, 0.9, size=2))
        p1 = compose(beam_splitter(t1, np.sqrt(1 - t1**2), rng.uniform(0, 2 * np.pi)),
                     beam_splitter(t2, np.sqrt(1 - t2**2), rng.uniform(0, 2 * np.pi)))
        assert p1.kind == "passive"  # construction re-validates unitarity
        a1 = compose(squeezer(rng.uniform(0, 1.5)), squeezer(rng.uniform(0, 1.5)))
        assert a1.kind == "active"


# -- truncated Fock representation -------------------------------------------

def test_jz_on_one_zero():
    ops = build_fock_operators(2)
    state = np.zeros(ops.dim)
    state[1 * 3 + 0] = 1.0  # |1, 0>
    assert np.allclose(ops.jz @ state, 0.5 * state, atol=1e-15)


def test_commutators_on_safe_sector():
    ops = build_fock_operators(4)
    res = commutator_residuals(ops, 3)
    assert max(res.values()) < 1e-12


def test_j_and_k_hermitian():
    ops = build_fock_operators(3)
    for m in (ops.jx, ops.jy, ops.jz, ops.kx, ops.ky, ops.kz):
        assert np.max(np.abs(m - m.conj().T)) < 1e-14


def test_j_squared_sector_eigenvalues():
    ops = build_fock_operators(4)
    for n in range(4):
        idx = ops.total_photon_sector(n)
        block = ops.j_squared[np.ix_(idx, idx)]
        expect = (n / 2) * (n / 2 + 1)
        assert np.allclose(np.linalg.eigvalsh(block), expect, atol=1e-12)


def test_build_rejects_small_cutoff():
    with pytest.raises(ValidationError):
        build_fock_operators(1)


def test_casimir_identity_and_balanced():
    ops = build_fock_operators(4)
    ident = beam_splitter(1.0, 0.0)
    assert casimir_check(ident, ops, 2) < 1e-12
    assert casimir_check(balanced(), ops, 2) < 1e-10


def test_casimir_squeezer_truncation_limited():
    ops = build_fock_operators(6)
    assert casimir_check(squeezer(0.3, 0.0), ops, 2) < 1e-8


def test_overflowing_squeezer_raises():
    ops = build_fock_operators(3)
    with pytest.raises(TruncationOverflowError):
        fock_unitary(squeezer(2.0), ops, sector_n_max=2)


def test_passive_number_conservation(rng):
    ops = build_fock_operators(3)
    for _ in range(5):
        t = np.sqrt(rng.uniform(0.05, 0.95))
        u = fock_unitary(beam_splitter(t, np.sqrt(1 - t**2),
                                       rng.uniform(0, 2 * np.pi)), ops)
        psi = rng.normal(size=ops.dim) + 1j * rng.normal(size=ops.dim)
        psi /= np.linalg.norm(psi)
        before = np.vdot(psi, ops.number @ psi)
        after = np.vdot(u @ psi, ops.number @ (u @ psi))
        assert abs(after - before) < 1e-12


def test_induced_adjoint_action():
    ops = build_fock_operators(4)
    bs = beam_splitter(0.8, 0.6, 0.3)
    u = fock_unitary(bs, ops)
    p = ops.sector_projector(3)
    lhs = u.conj().T @ ops.a1 @ u
    rhs = bs.matrix[0, 0] * ops.a1 + bs.matrix[0, 1] * ops.a2
    assert np.linalg.norm(p @ (lhs - rhs) @ p) < 1e-12


# -- action on two-photon amplitudes -----------------------------------------

def identical_pair(n=96):
    g = FrequencyGrid(n, -48.0, 48.0)
    phi = gaussian_envelope(g, 0.0, 4.0)
    return g, product_amplitude(g, phi, phi)


def test_delayed_bs_at_zero_matches_balanced():
    assert np.allclose(delayed_balanced_bs(0.0).matrix, balanced().matrix,
                       atol=1e-15)


def test_hom_bunching_is_pointwise():
    _, amp = identical_pair()
    rot = transform_two_photon(delayed_balanced_bs(0.0), amp)
    assert np.max(np.abs(rot.ab)) < 1e-12
    # everything sits in the double-occupation sectors, norm preserved
    assert abs(rot.total_norm() - 1.0) < 1e-12


def test_two_mode_part_formula():
    g = FrequencyGrid(96, -48.0, 48.0)
    amp = product_amplitude(g, gaussian_envelope(g, -9.0, 4.0),
                            gaussian_envelope(g, 7.0, 3.0))
    t_delay = 0.21
    rot = transform_two_photon(delayed_balanced_bs(t_delay), amp)
    w = g.omegas
    phase = np.exp(-1j * (w[:, None] - w[None, :]) * t_delay)
    ref = 0.5 * (amp.values - phase * amp.values.T)
    assert np.max(np.abs(rot.ab - ref)) < 1e-12


def test_round_trip_restores_amplitude():
    _, amp = identical_pair()
    bs = delayed_balanced_bs(0.37)
    rot = transform_two_photon(bs, amp)
    back = transform_two_photon(bs.adjoint(), rot)
    assert np.max(np.abs(back.ab - amp.values)) < 1e-12
    assert np.max(np.abs(back.aa)) < 1e-12
    assert np.max(np.abs(back.bb)) < 1e-12


def test_unitarity_of_sector_split(rng):
    g = FrequencyGrid(48, -24.0, 24.0)
    vals = rng.normal(size=(48, 48)) + 1j * rng.normal(size=(48, 48))
    amp = (lambda a: a.normalized())(
        __import__("qlis").TwoPhotonAmplitude(g, vals))
    rot = transform_two_photon(delayed_balanced_bs(0.13), amp)
    assert abs(rot.total_norm() - 1.0) < 1e-12


def test_hom_dip_coincidence_curve():
    _, amp = identical_pair()
    c0 = two_mode_coincidence(delayed_balanced_bs(0.0), amp)
    c_far = two_mode_coincidence(delayed_balanced_bs(3.0), amp)
    assert c0 < 1e-12
    assert abs(c_far - 0.5) < 1e-3
