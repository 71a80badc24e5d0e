"""Projected Newton minimizer on quadratic and signal-fit objectives."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from ttfilter.errors import ConfigurationError, NumericalError
from ttfilter.model import MeasurementModel, build_grid, expected_signal
from ttfilter.nll import NllReport, measurement_nll
from ttfilter.optimize import (
    BoxConstraints,
    NewtonOptions,
    box_from_grid,
    minimize,
)

from conftest import random_spd


def quadratic(H: np.ndarray, m: np.ndarray):
    def fun(x: np.ndarray) -> NllReport:
        d = x - m
        return NllReport(value=0.5 * d @ H @ d, grad=H @ d, hess=H.copy())

    return fun


def wide_box(n: int) -> BoxConstraints:
    return BoxConstraints(lower=np.full(n, -100.0), upper=np.full(n, 100.0))


def test_box_validation_and_clip():
    box = BoxConstraints(lower=np.array([0.0, 0.0]), upper=np.array([1.0, 2.0]))
    np.testing.assert_array_equal(box.clip(np.array([-1.0, 3.0])), [0.0, 2.0])
    assert box.contains(np.array([0.5, 0.5]))
    assert not box.contains(np.array([1.5, 0.5]))
    with pytest.raises(ConfigurationError):
        BoxConstraints(lower=np.array([1.0]), upper=np.array([1.0]))


def test_box_from_grid_pads_by_one_spacing(grid55):
    box = box_from_grid(grid55, n_targets=2)
    np.testing.assert_array_equal(box.lower, np.full(4, -10.0))
    np.testing.assert_array_equal(box.upper, np.full(4, 50.0))


def test_quadratic_interior_converges_fast(rng):
    H = random_spd(6, rng)
    m = rng.uniform(-5.0, 5.0, size=6)
    res = minimize(quadratic(H, m), np.zeros(6), wide_box(6))
    assert res.converged
    assert res.iterations <= 2
    np.testing.assert_allclose(res.x, m, atol=1e-8)
    assert res.active_set.size == 0


def test_quadratic_constrained_matches_qp_oracle(rng):
    # 2-D case solvable by enumerating active sets of the KKT system
    for _ in range(25):
        H = random_spd(2, rng)
        m = rng.uniform(1.5, 4.0, size=2)  # minimizer outside the unit box
        box = BoxConstraints(lower=np.array([0.0, 0.0]), upper=np.array([1.0, 1.0]))

        best_val, best_x = np.inf, None
        for fixed in itertools.product([None, 0.0, 1.0], repeat=2):
            free = [i for i, f in enumerate(fixed) if f is None]
            x = np.array([0.0 if f is None else f for f in fixed])
            if free:
                sub = H[np.ix_(free, free)]
                rhs = H[np.ix_(free, [i for i in range(2) if i not in free])]
                fixed_vals = x[[i for i in range(2) if i not in free]]
                b = H @ m
                x[free] = np.linalg.solve(
                    sub, b[free] - (rhs @ fixed_vals if fixed_vals.size else 0.0)
                )
            if np.all(x >= -1e-12) and np.all(x <= 1.0 + 1e-12):
                d = x - m
                v = 0.5 * d @ H @ d
                if v < best_val:
                    best_val, best_x = v, np.clip(x, 0.0, 1.0)

        res = minimize(quadratic(H, m), np.full(2, 0.5), box)
        np.testing.assert_allclose(res.x, best_x, atol=1e-6)
        assert box.contains(res.x)


def test_active_set_reported_on_boundary():
    H = np.eye(2)
    m = np.array([5.0, 0.3])
    box = BoxConstraints(lower=np.array([0.0, 0.0]), upper=np.array([1.0, 1.0]))
    res = minimize(quadratic(H, m), np.full(2, 0.5), box)
    np.testing.assert_allclose(res.x, [1.0, 0.3], atol=1e-8)
    assert 0 in res.active_set.tolist()


def test_noise_free_signal_fit_recovers_target(rng):
    grid = build_grid(2, 2, 10.0)
    meas = MeasurementModel()
    truth = np.array([[3.7, 6.2]])
    frame = expected_signal(truth, grid, meas)

    def fun(x):
        return measurement_nll(x, frame, grid, meas)

    box = box_from_grid(grid, n_targets=1)
    res = minimize(fun, np.array([5.0, 5.0]), box)
    assert res.converged

    # coarse grid search oracle: best 0.01 m cell should agree
    xs = np.arange(3.0, 7.01, 0.01)
    vals = np.array(
        [[fun(np.array([a, b])).value for b in xs] for a in xs]
    )
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    np.testing.assert_allclose(res.x, [xs[i], xs[j]], atol=1e-2)
    np.testing.assert_allclose(res.x, truth.ravel(), atol=1e-3)


def test_objective_never_increases(grid55, meas_default, rng):
    frame = rng.uniform(0.5, 4.0, size=25)
    values = []

    def fun(x):
        rep = measurement_nll(x, frame, grid55, meas_default)
        values.append(rep.value)
        return rep

    box = box_from_grid(grid55, n_targets=2)
    x0 = rng.uniform(5.0, 35.0, size=4)
    res = minimize(fun, x0, box)
    # accepted iterates only decrease; the trace also holds rejected trial
    # points, so compare the start against the final value
    assert res.value <= values[0] + 1e-12
    assert box.contains(res.x)


def test_restart_from_optimum_is_immediate(rng):
    H = random_spd(4, rng)
    m = rng.uniform(-3.0, 3.0, size=4)
    box = wide_box(4)
    first = minimize(quadratic(H, m), np.zeros(4), box)
    again = minimize(quadratic(H, m), first.x, box)
    assert again.converged
    assert again.iterations <= 1
    np.testing.assert_allclose(again.x, first.x, atol=1e-10)


def test_start_outside_box_is_clipped_first():
    H = np.eye(2)
    m = np.array([0.5, 0.5])
    box = BoxConstraints(lower=np.zeros(2), upper=np.ones(2))
    res = minimize(quadratic(H, m), np.array([50.0, -50.0]), box)
    np.testing.assert_allclose(res.x, m, atol=1e-8)


def test_nonfinite_start_raises():
    box = wide_box(2)

    def fun(x):
        return NllReport(value=np.nan, grad=np.zeros(2), hess=np.eye(2))

    with pytest.raises(NumericalError):
        minimize(fun, np.zeros(2), box)


def test_iteration_cap_respected(rng):
    H = random_spd(3, rng)
    m = rng.uniform(-3.0, 3.0, size=3)
    opts = NewtonOptions(max_iter=1)
    res = minimize(quadratic(H, m), np.zeros(3), wide_box(3), opts)
    assert res.iterations <= 1
