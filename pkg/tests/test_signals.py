import numpy as np
import pytest

from qlis import (CoverageError, DetectionGate, FrequencyGrid, GateKindError,
                  HomConfig, SpdcParameters, ValidationError,
                  delta_like_envelope, exchange_cross_term, fixed_delay_signal,
                  gated_coincidence, gaussian_envelope, hom_coincidence,
                  mixed_density, narrowband_spdc_coincidence, pair_density,
                  phase_matching, product_amplitude, refine_grid,
                  retarded_field_contribution, richardson_check,
                  spdc_amplitude, theta_symmetrize, time_frequency_coincidence,
                  time_frequency_map)
from qlis.signals import AmplitudeStack, SignalScan, config_hash, run_scan

from conftest import decoupled_system, time_span_grid, v_system


def delta_pair_config(vs, tau_raw, grid, coupling=1e-2, t_center=None):
    dt = grid.dt
    tau = 2 * round(tau_raw / (2 * dt)) * dt
    if t_center is None:
        t_center = round(1.05 / dt) * dt
    eps = 2 * dt
    state = product_amplitude(grid, delta_like_envelope(grid, tau, eps),
                              delta_like_envelope(grid, 0.0, eps))
    return HomConfig(state=state, matter=vs, bs_delay_s=tau / 2,
                     wavepacket_delay_s=tau, coupling=coupling,
                     t_center_s=t_center), tau


def gaussian_pair(grid):
    return product_amplitude(grid, gaussian_envelope(grid, -0.4, 2.0, t_peak=0.9),
                             gaussian_envelope(grid, 0.5, 3.0, t_peak=0.3))


# -- movable-BS coincidence ----------------------------------------------------

def test_zero_coupling_kills_the_wiggling_term():
    grid = time_span_grid(128, 2.7)
    cfg, _ = delta_pair_config(decoupled_system(), 1.0, grid)
    assert abs(hom_coincidence(cfg, "otoc_term")) < 1e-30


def test_otoc_ratio_stable_over_delay_scan():
    from qlis import CorrelatorSpec, multipoint_correlator
    vs = v_system()
    grid = time_span_grid(256, 2.7)
    ratios = []
    for tau_raw in np.linspace(0.8, 1.8, 8):
        cfg, tau = delta_pair_config(vs, tau_raw, grid)
        sig = hom_coincidence(cfg, "otoc_term")
        corr = multipoint_correlator(
            vs, CorrelatorSpec.of(("b", 0.0), ("a", tau), ("b", 0.0), ("a", tau)))
        ratios.append(sig / corr)
    ratios = np.array(ratios)
    rel = np.abs(ratios - ratios.mean()) / abs(ratios.mean())
    assert rel.max() < 0.02


def test_arrival_and_interaction_pictures_agree():
    vs = v_system()
    grid = time_span_grid(128, 2.0)
    dt = grid.dt
    tc = round(0.6 / dt) * dt
    state = product_amplitude(grid, gaussian_envelope(grid, 0.0, 7.0, t_peak=0.7),
                              gaussian_envelope(grid, 0.4, 9.0, t_peak=0.2))
    cfg = HomConfig(state=state, matter=vs, bs_delay_s=12 * dt,
                    wavepacket_delay_s=24 * dt, coupling=1e-2, t_center_s=tc,
                    detect_t_a_s=0.7, detect_t_b_s=0.25)
    a = hom_coincidence(cfg, "otoc_term", picture="arrival")
    b = hom_coincidence(cfg, "otoc_term", picture="interaction")
    assert abs(a - b) / abs(a) < 1e-10


def test_all_fourth_order_scales_as_coupling_fourth():
    vs = v_system()
    grid = time_span_grid(96, 2.0)
    dt = grid.dt
    tc = round(0.6 / dt) * dt
    state = product_amplitude(grid, gaussian_envelope(grid, 0.0, 7.0, t_peak=0.7),
                              gaussian_envelope(grid, 0.4, 9.0, t_peak=0.2))
    lams = np.logspace(-3, -1, 5)
    vals = []
    for lam in lams:
        cfg = HomConfig(state=state, matter=vs, bs_delay_s=12 * dt,
                        wavepacket_delay_s=24 * dt, coupling=lam, t_center_s=tc,
                        detect_t_a_s=0.7, detect_t_b_s=0.25)
        vals.append(abs(hom_coincidence(cfg, "all_fourth_order")))
    slope = np.polyfit(np.log(lams), np.log(vals), 1)[0]
    assert abs(slope - 4.0) < 0.05


def test_all_fourth_order_contains_the_wiggling_entry():
    # The full family includes the single wiggling-contour contraction with
    # a combinatorial weight, so both must be nonzero together.
    vs = v_system()
    grid = time_span_grid(96, 2.7)
    cfg, _ = delta_pair_config(vs, 1.0, grid)
    full = hom_coincidence(cfg, "all_fourth_order")
    single = hom_coincidence(cfg, "otoc_term")
    assert abs(single) > 0
    assert abs(full) > 0


def test_unknown_contribution_rejected():
    grid = time_span_grid(96, 2.7)
    cfg, _ = delta_pair_config(v_system(), 1.0, grid)
    with pytest.raises(ValidationError):
        hom_coincidence(cfg, "sixth_order")


def test_coverage_error_for_offgrid_support():
    vs = v_system()
    grid = time_span_grid(128, 2.0)
    state = product_amplitude(grid, gaussian_envelope(grid, 0.0, 4.0, t_peak=5.0),
                              gaussian_envelope(grid, 0.0, 4.0))
    cfg = HomConfig(state=state, matter=vs, coupling=1e-2)
    with pytest.raises(CoverageError):
        hom_coincidence(cfg, "otoc_term")


def test_coupling_heuristic_warns():
    vs = v_system()
    grid = time_span_grid(96, 2.7)
    cfg, _ = delta_pair_config(vs, 1.0, grid, coupling=0.8)
    with pytest.warns(UserWarning, match="fourth-order"):
        hom_coincidence(cfg, "otoc_term")


def test_richardson_grid_halving():
    vs = v_system()

    def build(grid):
        cfg, _ = delta_pair_config(vs, 1.2, grid)
        return cfg

    rel = richardson_check(build, time_span_grid(256, 2.7), "otoc_term")
    assert rel < 0.01


# -- gated coincidence -----------------------------------------------------------

@pytest.fixture(scope="module")
def gated_setup():
    vs = v_system(eta=0.0)
    grid = time_span_grid(72, 8.0)
    state = gaussian_pair(grid)
    return vs, grid, state


def test_gate_kind_mismatch(gated_setup):
    vs, grid, state = gated_setup
    fgate = DetectionGate("frequency", 1.0, 0.3)
    tgate = DetectionGate("time", 1.0, 0.3)
    with pytest.raises(GateKindError):
        gated_coincidence(state, vs, 0.0, fgate, tgate)
    with pytest.raises(GateKindError):
        time_frequency_coincidence(state, vs, 0.0, 1.0, tgate, tgate)


def test_gates_off_support_give_zero(gated_setup):
    vs, grid, state = gated_setup
    ga = DetectionGate("time", -3.6, 0.1)
    gb = DetectionGate("time", 3.6, 0.1)
    val = gated_coincidence(state, vs, 0.3, ga, gb, 3e-2, t_star=2.5)
    assert abs(val) < 1e-12


def test_wide_gate_recovers_ungated(gated_setup):
    vs, grid, state = gated_setup
    theta, lam, t_star = 0.7, 3e-2, 2.5
    sym = theta_symmetrize(state, theta)
    stack = AmplitudeStack.build(vs, sym, 0.0, t_star)
    ungated = float(np.sum(pair_density(stack, stack, lam)).real * stack.dt**2)
    wide = DetectionGate("time", 0.0, 1e4)
    gated = gated_coincidence(state, vs, theta, wide, wide, lam, t_star=t_star)
    assert abs(gated - ungated) / abs(ungated) < 0.01


def test_t_star_doubling_stability(gated_setup):
    vs, grid, state = gated_setup
    ga = DetectionGate("time", 1.0, 0.5)
    gb = DetectionGate("time", 0.6, 0.5)
    t_star = 3.5
    c1 = gated_coincidence(state, vs, 0.7, ga, gb, 3e-2, t_star=t_star)
    c2 = gated_coincidence(state, vs, 0.7, ga, gb, 3e-2, t_star=2 * t_star)
    assert abs(c2 - c1) / abs(c1) <= 1e-3


def test_density_real_nonnegative(gated_setup):
    vs, grid, state = gated_setup
    stack = AmplitudeStack.build(vs, theta_symmetrize(state, 0.4), 0.0, 2.5)
    w = pair_density(stack, stack, 3e-2)
    assert float(np.max(np.abs(w.imag))) < 1e-12
    assert float(np.min(w.real)) > -1e-10


def test_phase_cycling_isolates_cross_term(gated_setup):
    vs, grid, state = gated_setup
    ga = DetectionGate("time", 1.15, 0.35)
    gb = DetectionGate("time", 0.55, 0.35)
    lam = 3e-2
    c0 = gated_coincidence(state, vs, 0.0, ga, gb, lam)
    cpi = gated_coincidence(state, vs, np.pi, ga, gb, lam)
    direct = exchange_cross_term(state, vs, ga, gb, lam)
    half = 0.5 * (c0 - cpi)
    assert abs(half - direct) / abs(direct) < 1e-6


# -- fixed-delay signal ----------------------------------------------------------

def test_fixed_delay_swap_roles_is_delay_reversal(gated_setup):
    vs, grid, state = gated_setup
    tau = 0.4
    s_minus = fixed_delay_signal(state, vs, 0.7, -tau, 0.25, 3e-2)
    s_swap = fixed_delay_signal(state, vs, 0.7, tau, 0.25, 3e-2, swap_roles=True)
    assert abs(s_swap - s_minus) <= 1e-9 * abs(s_minus)


def test_fixed_delay_emission_order_asymmetry(gated_setup):
    vs, grid, state = gated_setup
    tau = 0.4
    s_plus = fixed_delay_signal(state, vs, 0.7, tau, 0.25, 3e-2)
    s_minus = fixed_delay_signal(state, vs, 0.7, -tau, 0.25, 3e-2)
    assert abs(s_plus - s_minus) / (s_plus + s_minus) > 1e-4


def test_fixed_delay_flat_for_decoupled_matter():
    dec = decoupled_system()
    grid = time_span_grid(72, 8.0)
    state = gaussian_pair(grid)
    dt = grid.dt
    vals = np.array([
        fixed_delay_signal(state, dec, 0.4, 2 * k * dt, 1e5, 1e-2)
        for k in (-2, -1, 0, 1, 2)
    ])
    assert (vals.max() - vals.min()) <= 1e-9 * vals.mean()


def test_fixed_delay_coverage_guard():
    vs = v_system(eta=0.0)
    grid = time_span_grid(48, 3.0)
    state = gaussian_pair(grid)
    with pytest.raises(CoverageError):
        fixed_delay_signal(state, vs, 0.0, 0.2, 0.4, 1e-2)


# -- time-frequency coincidence ---------------------------------------------------

@pytest.fixture(scope="module")
def epr_setup():
    w0 = 40.0
    grid = FrequencyGrid(96, w0 - 52.8, w0 + 51.7)
    dec = decoupled_system()
    return w0, grid, dec


def test_tf_anticorrelation_with_chirp(epr_setup):
    w0, grid, dec = epr_setup
    pars = SpdcParameters(sigma_p=2.0, entanglement_time=0.5, omega_p0=2 * w0,
                          omega_a0=w0, omega_b0=w0, chirp=-0.05)
    state = spdc_amplitude(pars, grid)
    gt = DetectionGate("time", 0.0, 0.25)
    gw = DetectionGate("frequency", w0, 2.0)
    t_axis = np.linspace(-1.5, 1.5, 13)
    w_axis = np.linspace(w0 - 12, w0 + 12, 13)
    cmap = time_frequency_map(state, dec, t_axis, w_axis, gt, gw)
    tt, ww = np.meshgrid(t_axis, w_axis, indexing="ij")
    tot = cmap.sum()
    mt, mw = (tt * cmap).sum() / tot, (ww * cmap).sum() / tot
    cov = ((tt - mt) * (ww - mw) * cmap).sum() / tot
    corr = cov / np.sqrt((((tt - mt) ** 2) * cmap).sum() / tot
                         * (((ww - mw) ** 2) * cmap).sum() / tot)
    assert corr < -0.05


def test_tf_far_gate_zero(epr_setup):
    w0, grid, dec = epr_setup
    pars = SpdcParameters(sigma_p=2.0, entanglement_time=0.5, omega_p0=2 * w0,
                          omega_a0=w0, omega_b0=w0)
    state = spdc_amplitude(pars, grid)
    gt = DetectionGate("time", 0.0, 0.25)
    gw = DetectionGate("frequency", w0, 2.0)
    val = time_frequency_coincidence(state, dec, 0.0, w0 + 500.0, gt, gw)
    assert abs(val) < 1e-12


def test_tf_marginal_matches_time_gated(epr_setup):
    w0, grid, dec = epr_setup
    pars = SpdcParameters(sigma_p=2.0, entanglement_time=0.5, omega_p0=2 * w0,
                          omega_a0=w0, omega_b0=w0)
    state = spdc_amplitude(pars, grid)
    gt = DetectionGate("time", 0.0, 0.25)
    gw = DetectionGate("frequency", w0, 2.0)
    lam = 1e-2
    dens = mixed_density(state, dec, lam, t_star=1.25)
    marg = sum(
        time_frequency_coincidence(state, dec, 0.0, wb, gt, gw, lam,
                                   t_star=1.25, _density=dens)
        for wb in grid.omegas
    ) * grid.spacing / (np.sqrt(2 * np.pi) * gw.width)
    stack = AmplitudeStack.build(dec, state, 0.0, 1.25)
    w = pair_density(stack, stack, lam, include_pair_scattering=False)
    d_t = np.exp(-stack.ts**2 / (2 * gt.width**2))
    time_only = float(np.einsum("p,pq->", d_t, w.real) * stack.dt**2)
    assert abs(marg - time_only) / time_only < 0.01


# -- narrowband pair limit ---------------------------------------------------------

def test_narrowband_window_zeroing():
    vs = v_system()
    sp = SpdcParameters(sigma_p=2.0, entanglement_time=0.05, omega_p0=80.0,
                        omega_a0=40.0, omega_b0=40.0)
    inside = narrowband_spdc_coincidence(sp, vs, 0.35, 0.7)
    assert inside.window == 1.0 and abs(inside.otoc) > 0
    # Window argument outside (-1/2, 1/2): identically zero.
    out = narrowband_spdc_coincidence(sp, vs, 0.35, 0.7,
                                      detect_delta_t=0.7 - 0.7 + 0.026)
    assert out.window == 0.0 and out.otoc == 0.0
    edge = narrowband_spdc_coincidence(sp, vs, 0.35, 0.7,
                                       detect_delta_t=0.025)
    assert edge.window == 0.0  # boundary of the open interval


def test_narrowband_zero_length_integration():
    vs = v_system()
    sp = SpdcParameters(sigma_p=2.0, entanglement_time=0.05, omega_p0=80.0,
                        omega_a0=40.0, omega_b0=40.0)
    res = narrowband_spdc_coincidence(sp, vs, 0.0, 0.7)
    assert res.otoc == 0.0


def test_narrowband_timescale_flag():
    vs = v_system()
    slow = SpdcParameters(sigma_p=2.0, entanglement_time=3.0, omega_p0=80.0,
                          omega_a0=40.0, omega_b0=40.0)
    with pytest.warns(UserWarning, match="entanglement time"):
        res = narrowband_spdc_coincidence(slow, vs, 0.35, 0.7)
    assert not res.timescale_ok


def test_narrowband_tracks_delta_route():
    from qlis import HomConfig
    vs = v_system()
    grid = time_span_grid(320, 1.6)
    dt = grid.dt
    tc = round(0.55 / dt) * dt
    sp = SpdcParameters(sigma_p=2.0, entanglement_time=1e-4, omega_p0=80.0,
                        omega_a0=40.0, omega_b0=40.0)
    dvals, nvals = [], []
    for tau_raw in np.linspace(0.15, 0.55, 9):
        tau = 2 * round(tau_raw / (2 * dt)) * dt
        eps = 2 * dt
        state = product_amplitude(grid, delta_like_envelope(grid, tau, eps),
                                  delta_like_envelope(grid, 0.0, eps))
        cfg = HomConfig(state=state, matter=vs, bs_delay_s=tau / 2,
                        wavepacket_delay_s=tau, coupling=1e-2, t_center_s=tc)
        dvals.append(hom_coincidence(cfg, "otoc_term"))
        res = narrowband_spdc_coincidence(sp, vs, bs_delay=tau / 2, tau=tau)
        nvals.append(res.otoc / tau)  # per unit generation time
    dvals = np.array(dvals) / dvals[0]
    nvals = np.array(nvals) / nvals[0]
    assert np.max(np.abs(dvals - nvals)) / np.max(np.abs(nvals)) < 0.05


# -- scalar helpers -------------------------------------------------------------------

def test_phase_matching_values():
    length = 2.4
    assert abs(phase_matching(0.0, length) - length / 2) < 1e-15
    assert abs(phase_matching(2 * np.pi / length, length)) < 1e-15
    x = np.pi / length  # delta_k L / 2 = pi / 2
    assert abs(phase_matching(x, length) - length / np.pi) < 1e-12
    with pytest.raises(ValidationError):
        phase_matching(0.1, -1.0)


def test_retarded_field_causality():
    series = lambda t: np.exp(-1j * 1.3 * np.asarray(t))
    assert retarded_field_contribution(series, 2.0, 1.0) == 0.0
    val = retarded_field_contribution(series, 0.0, 0.7)
    assert abs(val - (-1j) * np.exp(-1j * 1.3 * 0.7)) < 1e-14
    # shifting r/c by delta equals shifting t by -delta
    a = retarded_field_contribution(series, 0.4, 1.9)
    b = retarded_field_contribution(series, 0.0, 1.5)
    assert abs(a - b) < 1e-14


# -- scan plumbing ---------------------------------------------------------------------

def test_run_scan_parallel_deterministic():
    def evaluate(i):
        return {"v": complex(np.sin(0.1 * i), np.cos(0.2 * i))}

    serial = run_scan(evaluate, 37, jobs=1)
    parallel = run_scan(evaluate, 37, jobs=4)
    assert serial == parallel


def test_scan_exports(tmp_path):
    axes = {"x": np.linspace(0, 1, 3), "y": np.linspace(0, 2, 2)}
    cols = {"v": np.arange(6, dtype=complex).reshape(3, 2)}
    scan = SignalScan(axes, cols, {"config": {"a": 1},
                                   "config_hash": config_hash({"a": 1})})
    p_csv = tmp_path / "scan.csv"
    scan.to_csv(p_csv)
    lines = p_csv.read_text().splitlines()
    assert lines[0] == "x,y,v_re,v_im"
    assert len(lines) == 7
    scan.to_json(tmp_path / "scan.json")
    scan.to_csv(tmp_path / "scan2.csv")
    assert (tmp_path / "scan.csv").read_bytes() == (tmp_path / "scan2.csv").read_bytes()
