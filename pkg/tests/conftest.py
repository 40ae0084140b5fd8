import numpy as np
import pytest

from qlis import FrequencyGrid, MatterSystem


def v_system(eta: float = 0.35, superposition: bool = True) -> MatterSystem:
    """Three-level V system (ground plus two excited levels).

    eta adds a weak cross component to the channel dipoles; with perfectly
    selective channels the alternating four-point correlator vanishes
    identically (the operator product is nilpotent), so eta > 0 is needed
    wherever a nonzero wiggling-contour correlator is the point.
    """
    h = np.diag([0.0, 1.0, 1.3])
    va = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=float)
    vb = np.array([[0, 0, 1], [0, 0, 0], [1, 0, 0]], dtype=float)
    psi = np.ones(3) / np.sqrt(3) if superposition else np.array([1.0, 0, 0])
    return MatterSystem(h, {"a": va + eta * vb, "b": vb + eta * va}, psi)


def decoupled_system() -> MatterSystem:
    zero = np.zeros((3, 3))
    return MatterSystem(np.diag([0.0, 1.0, 1.3]), {"a": zero, "b": zero},
                        np.ones(3) / np.sqrt(3))


def time_span_grid(n_points: int, span_t: float, center: float = 0.0) -> FrequencyGrid:
    """Frequency grid whose conjugate time grid covers span_t seconds."""
    dw = 2.0 * np.pi / span_t
    return FrequencyGrid(n_points, center - n_points * dw / 2,
                         center + (n_points / 2 - 1) * dw)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
