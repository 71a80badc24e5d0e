"""Measurement-consistency gate and the two recovery procedures.

Twice the measurement NLL at the estimate is chi-square with one degree of
freedom per sensor when the estimate explains the frame, so a far upper-tail
threshold flags steps where the optimizer converged to the wrong basin.  Two
escalating repairs follow: re-estimation with sensors introduced one at a
time (boundary ring first, then a maximin fill), and square hopping, which
relocates the worst-fitting targets to candidate grid cells chosen by signal
deficit and re-optimizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy.stats import chi2 as _chi2

from .errors import ConfigurationError
from .model import MeasurementModel, SensorGrid, signal_components
from .nll import PropagatedPrior, measurement_nll
from .optimize import BoxConstraints, NewtonOptions, OptimizeResult, minimize


@dataclass(frozen=True)
class ConsistencyConfig:
    p_value: float = 0.0013
    n_bad_tgt: int = 2
    n_bad_sq: int = 12
    max_subsets: int = 66

    def __post_init__(self):
        if not 0.0 < self.p_value < 1.0:
            raise ConfigurationError("p_value must lie in (0, 1)")
        if self.n_bad_tgt < 1 or self.n_bad_sq < 1 or self.max_subsets < 1:
            raise ConfigurationError("recovery sizes must be positive")


@lru_cache(maxsize=64)
def chi2_threshold(dof: int, p_value: float) -> float:
    """Upper-tail chi-square quantile: P(X > threshold) = p_value."""
    if dof < 1:
        raise ConfigurationError("dof must be at least 1")
    if not 0.0 < p_value < 1.0:
        raise ConfigurationError("p_value must lie in (0, 1)")
    return float(_chi2.isf(p_value, dof))


def consistency_statistic(
    x: np.ndarray, frame: np.ndarray, grid: SensorGrid, meas: MeasurementModel
) -> float:
    """2 * measurement NLL; chi-square with one dof per sensor when consistent."""
    return 2.0 * measurement_nll(x, frame, grid, meas).value


def is_consistent(
    x: np.ndarray,
    frame: np.ndarray,
    grid: SensorGrid,
    meas: MeasurementModel,
    config: ConsistencyConfig,
) -> tuple[bool, float]:
    stat = consistency_statistic(x, frame, grid, meas)
    return stat <= chi2_threshold(grid.count, config.p_value), stat


@dataclass(frozen=True)
class ExcessDeficit:
    """Per-target signal excess and per-sensor deficit after removal.

    ``excess[c]`` sums, over sensors, how much of the predicted surplus
    (alpha_s - a_s) target c's own contribution could account for;
    ``deficit[s]`` is the measured signal left unexplained once the
    ``removed`` targets are dropped from the prediction.
    """

    excess: np.ndarray  # (C,)
    deficit: np.ndarray  # (S,)
    removed: tuple[int, ...]


def signal_excess(
    x: np.ndarray, frame: np.ndarray, grid: SensorGrid, meas: MeasurementModel
) -> np.ndarray:
    f = signal_components(x, grid, meas)  # (C, S)
    surplus = f.sum(axis=0) - np.asarray(frame, dtype=float)  # alpha - a
    return np.maximum(surplus[None, :] - f, 0.0).sum(axis=1)


def excess_deficit(
    x: np.ndarray,
    frame: np.ndarray,
    grid: SensorGrid,
    meas: MeasurementModel,
    removed: np.ndarray,
) -> ExcessDeficit:
    f = signal_components(x, grid, meas)
    frame = np.asarray(frame, dtype=float)
    surplus = f.sum(axis=0) - frame
    excess = np.maximum(surplus[None, :] - f, 0.0).sum(axis=1)
    keep = np.setdiff1d(np.arange(f.shape[0]), removed)
    alpha_tilde = f[keep].sum(axis=0) if keep.size else np.zeros(grid.count)
    deficit = np.maximum(frame - alpha_tilde, 0.0)
    return ExcessDeficit(excess=excess, deficit=deficit, removed=tuple(int(c) for c in removed))


def maximin_order(
    positions: np.ndarray, grid: SensorGrid, used: np.ndarray
) -> np.ndarray:
    """Remaining sensors ordered by descending min-distance to the targets.

    Ties break toward the lower sensor index.  The ordering is computed once
    against fixed target positions; callers re-estimate between additions.
    """
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    remaining = np.setdiff1d(np.arange(grid.count), used)
    if remaining.size == 0:
        return remaining
    d = np.linalg.norm(
        pos[:, None, :] - grid.positions[remaining][None, :, :], axis=2
    ).min(axis=0)
    order = np.lexsort((remaining, -d))
    return remaining[order]


def _center_ring(grid: SensorGrid, n_targets: int) -> np.ndarray:
    """Neutral start: targets spaced on a small ring around the grid center."""
    angles = 2.0 * np.pi * (np.arange(n_targets) + 0.5) / n_targets
    offsets = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return (grid.center + 0.25 * grid.spacing * offsets).ravel()


def _grow_sensor_set(
    frame: np.ndarray,
    grid: SensorGrid,
    meas: MeasurementModel,
    start: np.ndarray,
    box: BoxConstraints,
    options: NewtonOptions | None,
) -> OptimizeResult:
    used = grid.boundary_indices()
    res = minimize(
        lambda x: measurement_nll(x, frame, grid, meas, used),
        start,
        box,
        options,
    )
    while used.size < grid.count:
        nxt = maximin_order(res.x, grid, used)[0]
        used = np.append(used, nxt)
        sensors = used.copy()
        res = minimize(
            lambda x, s=sensors: measurement_nll(x, frame, grid, meas, s),
            res.x,
            box,
            options,
        )
    return res


def one_by_one_recovery(
    frame: np.ndarray,
    grid: SensorGrid,
    meas: MeasurementModel,
    prior: PropagatedPrior,
    box: BoxConstraints,
    x0: np.ndarray | None = None,
    options: NewtonOptions | None = None,
) -> OptimizeResult:
    """Re-acquire the target vector by growing the sensor set one at a time.

    The refit is a pure measurement fit: the gate only fires when the belief
    stopped explaining the frame, so folding the (suspect) prior back into
    the objective would drag every stage toward the basin being escaped.
    The procedure runs the boundary stage, then adds the remaining sensors
    in maximin order, re-optimizing after each addition, so the final result
    uses every sensor and twice its value is the consistency statistic.

    The whole sweep runs from two starts, the prior mean (or ``x0``) and a
    neutral ring at the grid center, keeping the lower final NLL.  The prior
    mean is the better start when the belief merely drifted; the neutral
    start wins when the belief itself is the wrong-basin culprit, which is
    common right after a widely scattered initialization.
    """
    start = prior.mean_x if x0 is None else np.asarray(x0, dtype=float).ravel()
    res = _grow_sensor_set(frame, grid, meas, start, box, options)
    neutral = _center_ring(grid, start.size // 2)
    if not np.allclose(neutral, start):
        alt = _grow_sensor_set(frame, grid, meas, neutral, box, options)
        if alt.value < res.value:
            res = alt
    return res


@dataclass
class RecoveryOutcome:
    result: OptimizeResult
    gate_passed: bool
    attempts: int  # subsets actually optimized


def square_hopping_recovery(
    x_est: np.ndarray,
    frame: np.ndarray,
    grid: SensorGrid,
    meas: MeasurementModel,
    prior: PropagatedPrior,
    box: BoxConstraints,
    config: ConsistencyConfig,
    options: NewtonOptions | None = None,
) -> RecoveryOutcome:
    """Relocate the worst-fitting targets onto candidate grid squares.

    The targets with the largest signal excess are tentatively removed; grid
    squares are ranked by the measured signal their corner sensors are left
    unable to explain; each small square subset seeds a fresh measurement
    fit with the removed targets placed at the square centers.  Like the
    one-by-one procedure the refit ignores the prior (the prior argument is
    kept for interface symmetry): the first candidate whose statistic clears
    the gate wins, and a gate pass always improves on the inconsistent
    incoming estimate because both are scored by the same statistic.  If no
    candidate passes, the best measurement NLL seen (including the incoming
    estimate) is returned flagged.
    """
    del prior
    x_est = np.asarray(x_est, dtype=float).ravel()
    n_targets = x_est.size // 2
    thr = chi2_threshold(grid.count, config.p_value)

    incoming = OptimizeResult(
        x=x_est.copy(),
        value=measurement_nll(x_est, frame, grid, meas).value,
        iterations=0,
        converged=True,
        active_set=np.array([], dtype=int),
    )
    if 2.0 * incoming.value <= thr:
        return RecoveryOutcome(result=incoming, gate_passed=True, attempts=0)

    n_bad = min(config.n_bad_tgt, n_targets)
    ed_probe = excess_deficit(x_est, frame, grid, meas, np.array([], dtype=int))
    bad = np.lexsort((np.arange(n_targets), -ed_probe.excess))[:n_bad]
    ed = excess_deficit(x_est, frame, grid, meas, bad)

    corners, centers = grid.squares()
    sq_deficit = ed.deficit[corners].sum(axis=1)
    ranked = np.lexsort((np.arange(len(sq_deficit)), -sq_deficit))
    candidates = ranked[: min(config.n_bad_sq, len(ranked))]

    best = incoming
    attempts = 0
    for subset in combinations(candidates, n_bad):
        if attempts >= config.max_subsets:
            break
        x_start = x_est.copy()
        for tgt, sq in zip(bad, subset):
            x_start[2 * tgt : 2 * tgt + 2] = centers[sq]
        res = minimize(
            lambda x: measurement_nll(x, frame, grid, meas), x_start, box, options
        )
        attempts += 1
        if res.value < best.value:
            best = res
        if 2.0 * res.value <= thr:
            return RecoveryOutcome(result=res, gate_passed=True, attempts=attempts)
    return RecoveryOutcome(result=best, gate_passed=False, attempts=attempts)
