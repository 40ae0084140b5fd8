import numpy as np

from qlis import (JointModel, MatterSystem, beam_splitter, coincidence_orders,
                  liouville_fourth_order, oracle_residuals)

from conftest import v_system


def balanced():
    return beam_splitter(1 / np.sqrt(2), 1 / np.sqrt(2))


def hom_null_model(lam=1e-2):
    # Degenerate modes + balanced splitter: the noninteracting coincidence
    # vanishes exactly, so the perturbative orders are clean of background.
    return JointModel(v_system(), 1.1, 1.1, n_max=2, lam=lam)


def test_odd_orders_vanish():
    orders = coincidence_orders(hom_null_model(), 2.0, interferometer=balanced())
    assert abs(orders[1]) < 1e-20
    assert abs(orders[3]) < 1e-20


def test_hom_null_background():
    orders = coincidence_orders(hom_null_model(), 2.0, interferometer=balanced())
    assert abs(orders[0]) < 1e-14
    assert orders[2] > 0.0  # counter-rotating two-insertion term


def test_detection_basis_routes_agree():
    m = hom_null_model()
    a = coincidence_orders(m, 2.0, interferometer=balanced(),
                           route="rotate_observable")
    b = coincidence_orders(m, 2.0, interferometer=balanced(),
                           route="rotate_state")
    scale = max(abs(a[k]) for k in a) or 1.0
    assert max(abs(a[k] - b[k]) for k in a) / scale < 1e-10


def test_labeled_terms_match_nested_commutator_expansion():
    # Small two-level model so the vectorized (superoperator) route stays
    # tractable; the two bookkeepings must agree to roundoff.
    h = np.diag([0.0, 1.3])
    va = np.array([[0.4, 0.8], [0.8, -0.2]])
    vb = np.array([[0.0, 0.5], [0.5, 0.3]])
    matter = MatterSystem(h, {"a": va, "b": vb}, np.array([1.0, 0.0]))
    m = JointModel(matter, 1.2, 0.9, n_max=2, lam=1e-2)
    hilbert = coincidence_orders(m, 1.7, interferometer=balanced())
    liouville = liouville_fourth_order(m, 1.7, interferometer=balanced())
    assert max(abs(hilbert[k] - liouville[k]) for k in range(5)) < 1e-8


def test_oracle_equivalence_scaling():
    m = hom_null_model()
    res = oracle_residuals(m, 2.0, [1e-3, 3e-3, 1e-2], interferometer=balanced())
    assert res["relative_residual"][-1] <= 1e-3
    slope = np.polyfit(np.log(res["lams"]), np.log(res["relative_residual"]), 1)[0]
    assert abs(slope - 2.0) <= 0.2


def test_fourth_order_scales_as_lam4():
    m = hom_null_model()
    orders = coincidence_orders(m, 2.0, interferometer=balanced())
    lams = np.logspace(-3, -1, 7)
    vals = abs(orders[4]) * lams**4
    slope = np.polyfit(np.log(lams), np.log(vals), 1)[0]
    assert abs(slope - 4.0) <= 0.05


def test_prediction_beats_background_subtraction():
    # The through-fourth-order prediction tracks the exact signal so closely
    # that the residual is orders of magnitude below the fourth-order term.
    m = hom_null_model()
    res = oracle_residuals(m, 2.0, [1e-2], interferometer=balanced())
    exact = res["exact"][0]
    pred = res["predicted"][0]
    fourth = res["fourth_order"][0]
    assert abs(exact - pred) < 1e-3 * abs(fourth)
    assert abs(fourth) > 0
