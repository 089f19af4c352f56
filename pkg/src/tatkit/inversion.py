"""Measurement operator, its exact discrete adjoint, and Landweber descent.

The forward operator maps an initial pressure to its receiver traces. The
adjoint is the algebraic transpose of the full discrete pipeline (leapfrog
recursion plus bilinear sampling), implemented as a time-reversed stepping
with receiver injection, so the adjoint identity holds to roundoff and
gradient descent on the data misfit is genuinely descending.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import BoundaryPatch, Phantom, Region, SpeedField
from .wave import (
    SimOptions,
    Trace,
    _Engine,
    _crop,
    _embed,
    _padded_setup,
    _receiver_matrix,
    cfl_time_step,
    simulate_initial_state,
)

__all__ = [
    "InversionRun",
    "forward_operator",
    "adjoint_operator",
    "landweber",
    "estimate_operator_norm",
]


def forward_operator(
    f: Phantom | np.ndarray,
    patch: BoundaryPatch,
    speed: SpeedField,
    t_max: float,
    options: SimOptions = SimOptions(),
) -> Trace:
    """Receiver traces of the wave launched by initial pressure f."""
    values = f.values if isinstance(f, Phantom) else np.asarray(f, dtype=float)
    _, trace = simulate_initial_state(speed, values, t_max, patch, options)
    return trace


def adjoint_operator(
    residual: Trace,
    speed: SpeedField,
    t_max: float,
    options: SimOptions = SimOptions(),
) -> np.ndarray:
    """Transpose of :func:`forward_operator` applied to a trace.

    Runs the transposed recursion backwards in time, injecting the trace
    through the transposed sampling stencil, and returns the t = 0 field
    restricted to the patch's region interior. The trace discretization
    must match what the forward operator produces for the same t_max.
    """
    patch = residual.patch
    region = patch.region
    grid = speed.grid
    if not region.grid.same_as(grid):
        raise ValueError("patch region and speed live on different grids")
    dt, steps = cfl_time_step(grid, speed.c_max, t_max, options.cfl_factor)
    if residual.n_samples != steps + 1 or abs(residual.dt - dt) > 1e-12 * max(dt, 1.0):
        raise ValueError(
            "trace discretization does not match the forward operator "
            f"(expected {steps + 1} samples at dt={dt}, got {residual.n_samples} at dt={residual.dt})"
        )

    pad = 0
    work_grid = grid
    c = speed.values
    if options.boundary == "padded":
        work_grid, pad = _padded_setup(grid, speed.c_max, t_max)
        c = _embed(c, pad, "edge")
    engine = _Engine(work_grid, c, dt, options)
    rec = _receiver_matrix(work_grid, np.asarray(patch.samples, dtype=float))
    G = residual.values

    inv_d1 = 1.0 / engine.d1 if engine.d1 is not None else None
    d2 = engine.d2

    def inject(k: int) -> np.ndarray:
        return (rec.T @ G[:, k]).reshape(work_grid.dims)

    mu_next = np.zeros(work_grid.dims)  # adjoint level k+1
    mu_next2 = np.zeros(work_grid.dims)  # adjoint level k+2
    for k in range(steps, 0, -1):
        if inv_d1 is None:
            mu_k = inject(k) + engine.apply_a_transpose(mu_next) - mu_next2
        else:
            mu_k = (
                inject(k)
                + engine.apply_a_transpose(inv_d1 * mu_next)
                - d2 * inv_d1 * mu_next2
            )
        mu_next2 = mu_next
        mu_next = mu_k
    if inv_d1 is None:
        w = inject(0) + engine.apply_a_transpose(0.5 * mu_next) - mu_next2
    else:
        w = inject(0) + engine.apply_a_transpose(0.5 * mu_next) - d2 * inv_d1 * mu_next2
    w = _crop(w, pad)
    return np.where(region.interior_mask, w, 0.0)


@dataclass(frozen=True)
class InversionRun:
    """Landweber iteration outcome with its residual history."""

    estimate: np.ndarray
    residual_history: np.ndarray
    step_size: float
    iterations: int
    config: dict

    def __post_init__(self):
        hist = np.asarray(self.residual_history, dtype=float)
        if not np.all(np.isfinite(hist)):
            raise ValueError("residual history must be finite")
        if hist.size != self.iterations + 1:
            raise ValueError("residual history must include iteration 0")
        object.__setattr__(self, "residual_history", hist)


def estimate_operator_norm(
    patch: BoundaryPatch,
    speed: SpeedField,
    t_max: float,
    power_iterations: int = 10,
    options: SimOptions = SimOptions(),
    seed: int = 0,
) -> float:
    """Power iteration on the normal operator, seeded deterministically."""
    if power_iterations < 5:
        raise ValueError("need at least 5 power iterations")
    region = patch.region
    mask = region.interior_mask
    rng = np.random.default_rng(seed)
    f = np.where(mask, rng.standard_normal(speed.grid.dims), 0.0)
    norm = np.linalg.norm(f)
    if norm == 0.0:
        raise ValueError("region interior is empty")
    f /= norm
    lam = 0.0
    for _ in range(power_iterations):
        g = forward_operator(f, patch, speed, t_max, options)
        b = adjoint_operator(g, speed, t_max, options)
        lam = float(np.vdot(f, b))
        nb = np.linalg.norm(b)
        if nb == 0.0:
            return 0.0
        f = b / nb
    return math.sqrt(max(lam, 0.0))


def landweber(
    data: Trace,
    patch: BoundaryPatch,
    speed: SpeedField,
    t_max: float,
    iterations: int,
    step_size: float | None = None,
    support: Region | None = None,
    options: SimOptions = SimOptions(),
    norm_seed: int = 0,
) -> InversionRun:
    """Gradient descent f <- P[f + s * adj(data - fwd(f))] from f = 0.

    P zeroes everything outside the support region (shrunk by the phantom
    margin of 2h). Without an explicit step size, 0.9 / |op|^2 from power
    iteration is used. Aborts when the residual grows three times in a row.
    """
    if support is None:
        support = patch.region
    grid = speed.grid
    if not support.grid.same_as(grid):
        raise ValueError("support region and speed live on different grids")
    mask = support.phi <= -2.0 * grid.h

    norm_est = None
    if step_size is None:
        norm_est = estimate_operator_norm(
            patch, speed, t_max, options=options, seed=norm_seed
        )
        if norm_est == 0.0:
            raise ValueError("operator norm estimate is zero; nothing to invert")
        step_size = 0.9 / norm_est**2

    f = np.zeros(grid.dims)
    history = []
    grow_streak = 0
    for it in range(iterations + 1):
        residual_trace = forward_operator(f, patch, speed, t_max, options)
        r = data.values - residual_trace.values
        rnorm = float(np.linalg.norm(r))
        if history:
            grow_streak = grow_streak + 1 if rnorm > history[-1] else 0
            if grow_streak >= 3:
                raise RuntimeError(
                    f"residual grew for 3 consecutive iterations at iteration {it}; "
                    f"reduce step_size (currently {step_size:.3g})"
                )
        history.append(rnorm)
        if it == iterations:
            break
        update = adjoint_operator(
            Trace(patch=patch, dt=data.dt, values=r, t_max=t_max),
            speed,
            t_max,
            options,
        )
        f = np.where(mask, f + step_size * update, 0.0)

    return InversionRun(
        estimate=f,
        residual_history=np.asarray(history),
        step_size=float(step_size),
        iterations=iterations,
        config={
            "t_max": t_max,
            "boundary": options.boundary,
            "cfl_factor": options.cfl_factor,
            "norm_estimate": norm_est,
            "n_receivers": int(len(patch.sample_indices)),
        },
    )
