"""The per-step tracking filter and whole-track driver.

Each step: propagate the posterior through the constant-velocity model with
inflated noise, maximize the spatial likelihood inside the search box, gate
the fit with the chi-square consistency test (escalating through one-by-one
sensor re-acquisition and square hopping when it fails), repair the Hessian
to positive definite, spread sigma points on the combined NLL surface (with
the polar correction for targets sitting close to a sensor), and read off
posterior moments.  Any numerical failure downgrades the step to the
propagated prior so a single bad frame cannot kill the track.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .consistency import (
    ConsistencyConfig,
    is_consistent,
    one_by_one_recovery,
    square_hopping_recovery,
)
from .errors import ConfigurationError, NumericalError
from .hessfix import repair_hessian
from .metrics import TrackRecord, omat
from .model import MeasurementModel, Scenario, SensorGrid, Trajectory, stack_state
from .moments import PosteriorBelief, assemble, spatial_moments, velocity_moments
from .nll import (
    FilterNoiseModel,
    GaussianBelief,
    PropagatedPrior,
    combined_nll,
    combined_value_batch,
    measurement_nll,
    propagate_prior,
)
from .optimize import BoxConstraints, NewtonOptions, box_from_grid, minimize
from .quadrature import (
    build_sigma_points,
    near_sensor_pairs,
    polar_sigma_adjust,
    radial_rule,
    simplex_directions,
)


@dataclass(frozen=True)
class FilterConfig:
    """Tracker variant switches and numeric knobs."""

    nonlinear_correction: bool = True
    one_by_one: bool = True
    hopping: bool = True
    fixed_init: bool = False
    alpha: float = 3.0  # spatial inflation of the assumed process noise
    sigma_s2: float | None = None  # override the scenario's measurement noise
    near_sensor_fraction: float = 0.2  # polar gate, in grid spacings
    box_margin: float = 1.0  # search box padding, in grid spacings
    init_spatial_var: float = 100.0
    init_velocity_var: float = 5e-4
    init_radius: float = 5.0  # fixed-init scatter around the grid center
    consistency: ConsistencyConfig = field(default_factory=ConsistencyConfig)
    optimizer: NewtonOptions = field(default_factory=NewtonOptions)


@dataclass(frozen=True)
class FilterContext:
    """Precomputed per-scenario machinery shared by every step."""

    scenario: Scenario
    config: FilterConfig
    meas: MeasurementModel  # the filter's assumed measurement model
    noise: FilterNoiseModel
    box: BoxConstraints
    rule: object
    dirs: object
    near_threshold: float


def make_context(scenario: Scenario, config: FilterConfig) -> FilterContext:
    meas = scenario.meas
    if config.sigma_s2 is not None:
        meas = replace(meas, sigma_s2=config.sigma_s2)
    dim = 2 * scenario.n_targets
    return FilterContext(
        scenario=scenario,
        config=config,
        meas=meas,
        noise=FilterNoiseModel(alpha=config.alpha),
        box=box_from_grid(scenario.grid, scenario.n_targets, config.box_margin),
        rule=radial_rule(dim),
        dirs=simplex_directions(dim),
        near_threshold=config.near_sensor_fraction * scenario.grid.spacing,
    )


def init_belief(
    mode: str,
    config: FilterConfig,
    grid: SensorGrid,
    rng: np.random.Generator,
    truth_state: np.ndarray | None = None,
    n_targets: int | None = None,
    frame: np.ndarray | None = None,
    meas: MeasurementModel | None = None,
    box: BoxConstraints | None = None,
) -> GaussianBelief:
    """Initial belief: noisy-truth means or blind fixed-center means.

    ``random_around_truth`` draws each mean from a Gaussian centered on the
    true launch state; ``fixed_center`` places every target mean uniformly
    within ``init_radius`` of the grid center with zero velocity (no access
    to the truth), then sharpens the spatial means with one measurement fit
    against the first frame when one is supplied.  Both modes use the same
    diagonal covariance.
    """
    if mode == "random_around_truth":
        if truth_state is None:
            raise ConfigurationError("random_around_truth needs the truth state")
        c = np.asarray(truth_state).shape[0]
        sd = np.concatenate(
            [
                np.full(2 * c, np.sqrt(config.init_spatial_var)),
                np.full(2 * c, np.sqrt(config.init_velocity_var)),
            ]
        )
        mean = stack_state(truth_state) + sd * rng.standard_normal(4 * c)
    elif mode == "fixed_center":
        if n_targets is None:
            raise ConfigurationError("fixed_center needs n_targets")
        c = n_targets
        radius = config.init_radius * np.sqrt(rng.random(c))
        angle = 2.0 * np.pi * rng.random(c)
        pos = grid.center + np.stack(
            [radius * np.cos(angle), radius * np.sin(angle)], axis=1
        )
        mean = np.concatenate([pos.ravel(), np.zeros(2 * c)])
        if frame is not None:
            if meas is None or box is None:
                raise ConfigurationError(
                    "fixed_center refinement needs meas and box with the frame"
                )
            fit = minimize(
                lambda x: measurement_nll(x, frame, grid, meas),
                mean[: 2 * c],
                box,
                config.optimizer,
            )
            mean[: 2 * c] = fit.x
    else:
        raise ConfigurationError(f"unknown init mode {mode!r}")
    cov = np.diag(
        np.concatenate(
            [
                np.full(2 * c, config.init_spatial_var),
                np.full(2 * c, config.init_velocity_var),
            ]
        )
    )
    return GaussianBelief(mean=mean, cov=cov)


@dataclass
class StepOutput:
    posterior: PosteriorBelief
    x_ml: np.ndarray
    statistic: float
    consistent: bool
    actions: tuple[str, ...]
    exclusions: tuple[tuple[int, int], ...]
    wall_time: float


def _prior_posterior(prior: PropagatedPrior) -> PosteriorBelief:
    return assemble(
        prior.mean_x, prior.mean_v, prior.cov_xx, prior.cov_vv, prior.cov_vx
    )


def step(belief: GaussianBelief, frame: np.ndarray, ctx: FilterContext) -> StepOutput:
    """Advance the belief by one measurement frame."""
    tic = time.perf_counter()
    cfg = ctx.config
    grid, meas = ctx.scenario.grid, ctx.meas
    actions: list[str] = []

    prior = propagate_prior(belief, ctx.noise)

    def objective(x):
        return combined_nll(x, frame, grid, meas, prior)

    try:
        res = minimize(objective, prior.mean_x, ctx.box, cfg.optimizer)
        x_hat = res.x
        ok, stat = is_consistent(x_hat, frame, grid, meas, cfg.consistency)

        # Recoveries refit by measurement likelihood alone, so their value
        # doubles as the candidate statistic: adopt whenever it improves.
        if not ok and cfg.one_by_one:
            cand = one_by_one_recovery(
                frame, grid, meas, prior, ctx.box, options=cfg.optimizer
            )
            actions.append("one_by_one")
            if 2.0 * cand.value < stat:
                x_hat = cand.x
                ok, stat = is_consistent(x_hat, frame, grid, meas, cfg.consistency)

        if not ok and cfg.hopping:
            outcome = square_hopping_recovery(
                x_hat, frame, grid, meas, prior, ctx.box, cfg.consistency, cfg.optimizer
            )
            actions.append(
                f"hopping:{'pass' if outcome.gate_passed else 'best'}"
                f"[{outcome.attempts}]"
            )
            if 2.0 * outcome.result.value < stat:
                x_hat = outcome.result.x
                ok, stat = is_consistent(x_hat, frame, grid, meas, cfg.consistency)

        repair = repair_hessian(
            x_hat, frame, grid, meas, prior, ctx.box, cfg.optimizer
        )
        if repair.exclusions:
            actions.append(
                "hessfix:" + ",".join(f"{c}@{s}" for c, s in repair.exclusions)
            )

        points = build_sigma_points(
            repair.x,
            repair.hessian,
            ctx.rule,
            ctx.dirs,
            lambda pts: combined_value_batch(pts, frame, grid, meas, prior),
        )
        if cfg.nonlinear_correction:
            near = near_sensor_pairs(repair.x, grid, ctx.near_threshold)
            if near:
                chol = scipy.linalg.cho_factor(repair.hessian, lower=True)
                cov_prelim = scipy.linalg.cho_solve(chol, np.eye(repair.x.size))
                for c, s in near:
                    points = polar_sigma_adjust(
                        points,
                        c,
                        grid.positions[s],
                        cov_prelim[2 * c : 2 * c + 2, 2 * c : 2 * c + 2],
                    )
                    actions.append(f"polar:{c}@{s}")

        mean_x, cov_xx = spatial_moments(points)
        mean_v, cov_vv, cov_vx = velocity_moments(prior, mean_x, cov_xx)
        posterior = assemble(mean_x, mean_v, cov_xx, cov_vv, cov_vx)
        x_ml = repair.x
        exclusions = repair.exclusions
    except NumericalError as exc:
        # a broken step must not kill the track: carry the prior forward
        actions.append(f"fallback:prior({exc})")
        posterior = _prior_posterior(prior)
        x_ml = prior.mean_x.copy()
        stat = float("nan")
        ok = False
        exclusions = ()

    return StepOutput(
        posterior=posterior,
        x_ml=x_ml,
        statistic=float(stat),
        consistent=bool(ok),
        actions=tuple(actions),
        exclusions=tuple(exclusions),
        wall_time=time.perf_counter() - tic,
    )


def track(
    trajectory: Trajectory,
    ctx: FilterContext,
    rng: np.random.Generator | np.random.SeedSequence | int,
    label: str = "tt",
) -> TrackRecord:
    """Run the filter over a full trajectory and record per-step results."""
    rng = np.random.default_rng(rng)
    cfg = ctx.config
    grid = ctx.scenario.grid
    c = trajectory.n_targets
    t_steps = trajectory.n_steps

    if cfg.fixed_init:
        belief = init_belief(
            "fixed_center",
            cfg,
            grid,
            rng,
            n_targets=c,
            frame=trajectory.frames[0],
            meas=ctx.meas,
            box=ctx.box,
        )
    else:
        belief = init_belief(
            "random_around_truth", cfg, grid, rng, truth_state=trajectory.states[0]
        )

    truth = trajectory.states[1:, :, :2].copy()
    estimates = np.empty((t_steps, c, 2))
    velocities = np.empty((t_steps, c, 2))
    covs = np.empty((t_steps, 2 * c, 2 * c))
    omat_vals = np.empty(t_steps)
    step_time = np.empty(t_steps)
    statistic = np.empty(t_steps)
    consistent = np.empty(t_steps, dtype=bool)
    actions: list[tuple[str, ...]] = []

    for t in range(t_steps):
        out = step(belief, trajectory.frames[t], ctx)
        belief = out.posterior.belief()
        estimates[t] = out.posterior.mean_x.reshape(c, 2)
        velocities[t] = out.posterior.mean_v.reshape(c, 2)
        covs[t] = out.posterior.cov_xx
        step_time[t] = out.wall_time
        statistic[t] = out.statistic
        consistent[t] = out.consistent
        actions.append(out.actions)
        omat_vals[t] = omat(estimates[t], truth[t]).value

    return TrackRecord(
        label=label,
        truth=truth,
        estimates=estimates,
        velocities=velocities,
        covs=covs,
        omat=omat_vals,
        step_time=step_time,
        statistic=statistic,
        consistent=consistent,
        actions=actions,
    )
