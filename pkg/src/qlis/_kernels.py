"""Hot numeric kernels: numba-compiled with a pure-numpy fallback.

The backend is chosen once at import time.  Set the environment variable
QLIS_NUMBA=0 to force the numpy path (e.g. on machines without a working
numba toolchain, or to cross-check results); QLIS_NUMBA=1 insists on numba
and raises if it cannot be imported.  ``NUMBA_ENABLED`` records the choice.

Both backends implement the same two operations and agree to roundoff:

* ``tri_ordered_sum``: trapezoid quadrature of f(x, y) over the ordered
  triangle y <= x <= x_max on a uniform grid.

* ``t_ordered_pair_amplitude``: the time-ordered double integral
  integral dx dy  amp(x, y) * T[P_a P_b V_a(x) V_b(y)] |psi>
  where P_a, P_b are fixed ("pinned") matrices with attached times, V_a(x),
  V_b(y) are per-grid-point matrices, and T orders the four factors by
  their times (latest leftmost).  Ties are broken by a fixed precedence:
  pin-a, pin-b, live-a, live-b from the left.

benchmarks/benchmark_kernels.py compares the two backends.
"""

from __future__ import annotations

import os

import numpy as np

_env = os.environ.get("QLIS_NUMBA", "").strip().lower()
if _env in ("0", "false", "off"):
    NUMBA_ENABLED = False
elif _env in ("1", "true", "on"):
    import numba  # noqa: F401  (fail loudly if requested but missing)

    NUMBA_ENABLED = True
else:
    try:
        import numba  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - exercised only without numba
        NUMBA_ENABLED = False


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def _trapz_weights(n: int, i_max: int) -> np.ndarray:
    """Composite trapezoid weights on indices 0..i_max, zero beyond."""
    w = np.zeros(n)
    if i_max >= 1:
        w[: i_max + 1] = 1.0
        w[0] = 0.5
        w[i_max] = 0.5
    return w


def _tri_ordered_sum_np(f: np.ndarray, i_max: int, dt: float) -> complex:
    n = f.shape[0]
    if i_max < 1:
        return 0.0 + 0.0j
    i_max = min(i_max, n - 1)
    m = i_max + 1
    w = np.tril(np.ones((m, m)))
    w[:, 0] = 0.5
    np.fill_diagonal(w, 0.5)
    w[0, :] = 0.0
    w *= _trapz_weights(m, i_max)[:, None]
    return complex(np.sum(w * f[:m, :m]) * dt * dt)


def _t_ordered_pair_amplitude_np(
    amp: np.ndarray,
    va: np.ndarray,
    vb: np.ndarray,
    pin_a: np.ndarray,
    pin_b: np.ndarray,
    t_pin_a: float,
    t_pin_b: float,
    xs: np.ndarray,
    ys: np.ndarray,
    i_max: int,
    j_max: int,
    psi: np.ndarray,
    dt: float,
) -> np.ndarray:
    d = psi.shape[0]
    out = np.zeros(d, dtype=np.complex128)
    if i_max < 1 or j_max < 1:
        return out
    wx = _trapz_weights(amp.shape[0], i_max)
    wy = _trapz_weights(amp.shape[1], j_max)
    vb_psi = np.einsum("jmn,n->jm", vb, psi)
    for i in range(i_max + 1):
        # Order the three fixed factors (pins and the live-a one) latest
        # first; ties follow the precedence pin-a > pin-b > live-a > live-b.
        fixed = sorted(((t_pin_a, 3, pin_a), (t_pin_b, 2, pin_b),
                        (xs[i], 1, va[i])), key=lambda e: (e[0], e[1]),
                       reverse=True)
        f_times = [e[0] for e in fixed]
        f_ops = [e[2] for e in fixed]
        # The live-b factor slots in by its time (strictly later goes left;
        # at a tie it acts first, i.e. sits right of the tied factor).
        # ys is ascending, so the four slots are contiguous index ranges.
        cuts = [np.searchsorted(ys[:j_max + 1], t, side="right")
                for t in (f_times[2], f_times[1], f_times[0])]
        bounds = [0, *cuts, j_max + 1]
        coeff = wx[i] * wy * amp[i]
        r = psi
        suffix = [psi]                       # f2 psi, f1 f2 psi applied below
        for op in reversed(f_ops):
            r = op @ r
            suffix.append(r)
        # suffix[k] = product of the last k fixed ops applied to psi
        prefix = [np.eye(d, dtype=np.complex128)]
        acc = np.eye(d, dtype=np.complex128)
        for op in f_ops:
            acc = acc @ op
            prefix.append(acc)
        for slot in range(4):
            lo, hi = bounds[3 - slot], bounds[4 - slot]
            if lo >= hi:
                continue
            # slot = number of fixed ops acting after (left of) live-b
            if slot == 3:
                seg = coeff[lo:hi] @ vb_psi[lo:hi]
                out += prefix[3] @ seg
            else:
                mat = np.tensordot(coeff[lo:hi], vb[lo:hi], axes=(0, 0))
                out += prefix[slot] @ (mat @ suffix[3 - slot])
    return out * dt * dt


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:
    from numba import njit

    @njit(cache=False, nogil=True)
    def _tri_ordered_sum_nb(f, i_max, dt):  # noqa: C901  jitted
        n = f.shape[0]
        if i_max < 1:
            return 0.0 + 0.0j
        if i_max > n - 1:
            i_max = n - 1
        total = 0.0 + 0.0j
        for i in range(1, i_max + 1):
            wo = 1.0
            if i == 0 or i == i_max:
                wo = 0.5
            row = 0.0 + 0.0j
            for j in range(i + 1):
                wi = 1.0
                if j == 0 or j == i:
                    wi = 0.5
                row += wi * f[i, j]
            total += wo * row
        return total * dt * dt

    @njit(cache=False, nogil=True)
    def _t_ordered_pair_amplitude_nb(
        amp, va, vb, pin_a, pin_b, t_pin_a, t_pin_b,
        xs, ys, i_max, j_max, psi, dt,
    ):  # pragma: no cover - jitted
        d = psi.shape[0]
        out = np.zeros(d, dtype=np.complex128)
        if i_max < 1 or j_max < 1:
            return out
        times = np.empty(4)
        prec = np.empty(4, dtype=np.int64)
        times[0], times[1] = t_pin_a, t_pin_b
        prec[0], prec[1], prec[2], prec[3] = 3, 2, 1, 0
        vec = np.empty(d, dtype=np.complex128)
        tmp = np.empty(d, dtype=np.complex128)
        for i in range(i_max + 1):
            wx = 0.5 if (i == 0 or i == i_max) else 1.0
            times[2] = xs[i]
            for j in range(j_max + 1):
                wy = 0.5 if (j == 0 or j == j_max) else 1.0
                c = wx * wy * amp[i, j]
                if c == 0.0:
                    continue
                times[3] = ys[j]
                for m in range(d):
                    vec[m] = psi[m]
                # Apply the four events earliest-first.  At equal times the
                # event with lower precedence acts first (so the higher
                # precedence one ends up leftmost).
                applied0 = applied1 = applied2 = applied3 = False
                for _ in range(4):
                    best = -1
                    bt = 0.0
                    bp = 0
                    if not applied0:
                        best, bt, bp = 0, times[0], prec[0]
                    if not applied1 and (best < 0 or times[1] < bt or
                                         (times[1] == bt and prec[1] < bp)):
                        best, bt, bp = 1, times[1], prec[1]
                    if not applied2 and (best < 0 or times[2] < bt or
                                         (times[2] == bt and prec[2] < bp)):
                        best, bt, bp = 2, times[2], prec[2]
                    if not applied3 and (best < 0 or times[3] < bt or
                                         (times[3] == bt and prec[3] < bp)):
                        best, bt, bp = 3, times[3], prec[3]
                    if best == 0:
                        mat = pin_a
                        applied0 = True
                    elif best == 1:
                        mat = pin_b
                        applied1 = True
                    elif best == 2:
                        mat = va[i]
                        applied2 = True
                    else:
                        mat = vb[j]
                        applied3 = True
                    for m in range(d):
                        acc = 0.0 + 0.0j
                        for k in range(d):
                            acc += mat[m, k] * vec[k]
                        tmp[m] = acc
                    for m in range(d):
                        vec[m] = tmp[m]
                for m in range(d):
                    out[m] += c * vec[m]
        for m in range(d):
            out[m] *= dt * dt
        return out


# ---------------------------------------------------------------------------
# public dispatch
# ---------------------------------------------------------------------------

def tri_ordered_sum(f: np.ndarray, i_max: int, dt: float) -> complex:
    """Trapezoid quadrature of f over the ordered triangle y <= x <= x[i_max].

    Implements integral_{x0}^{x[i_max]} dx integral_{x0}^{x} dy f(x, y) on
    the uniform grid underlying f; entries beyond i_max are ignored.
    """
    f = np.ascontiguousarray(f, dtype=np.complex128)
    if NUMBA_ENABLED:
        return complex(_tri_ordered_sum_nb(f, int(i_max), float(dt)))
    return complex(_tri_ordered_sum_np(f, int(i_max), float(dt)))


def t_ordered_pair_amplitude(
    amp: np.ndarray,
    va: np.ndarray,
    vb: np.ndarray,
    pin_a: np.ndarray,
    pin_b: np.ndarray,
    t_pin_a: float,
    t_pin_b: float,
    xs: np.ndarray,
    ys: np.ndarray,
    i_max: int,
    j_max: int,
    psi: np.ndarray,
    dt: float,
) -> np.ndarray:
    """Time-ordered double integral of amp(x,y) T[Pa Pb Va(x) Vb(y)] |psi>.

    Returns the resulting matter-space vector.  The live variables run over
    grid indices 0..i_max and 0..j_max with trapezoid weights; the four
    factors are ordered by their times (the two pins carry fixed times).
    """
    args = (
        np.ascontiguousarray(amp, dtype=np.complex128),
        np.ascontiguousarray(va, dtype=np.complex128),
        np.ascontiguousarray(vb, dtype=np.complex128),
        np.ascontiguousarray(pin_a, dtype=np.complex128),
        np.ascontiguousarray(pin_b, dtype=np.complex128),
        float(t_pin_a),
        float(t_pin_b),
        np.ascontiguousarray(xs, dtype=np.float64),
        np.ascontiguousarray(ys, dtype=np.float64),
        int(i_max),
        int(j_max),
        np.ascontiguousarray(psi, dtype=np.complex128),
        float(dt),
    )
    if NUMBA_ENABLED:
        return _t_ordered_pair_amplitude_nb(*args)
    return _t_ordered_pair_amplitude_np(*args)
