"""Spatial predator-prey model on a periodic square domain.

Agents perform Gaussian random walks.  Prey reproduce with a fixed
probability per step; predators hunt prey within their radius of vision,
reproduce only after a kill, and risk death when the hunt fails.  Within a
step all agents act once, in a jointly random order, with updates applied
immediately.  Prey search uses uniform grid binning with cell size at least
the vision radius, so each query scans a 3 x 3 block of cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from ._rng import spawn_rng, subseed

PREY = _kernels.PREY
PREDATOR = _kernels.PREDATOR

DEFAULT_AGENT_CAP = 1_000_000
DEFAULT_INITIAL_PREY = 320
DEFAULT_INITIAL_PREDATORS = 40


@dataclass(frozen=True)
class PpmParams:
    """Domain geometry, movement variance, and the event probabilities."""

    width: float = 100.0
    height: float = 100.0
    step_variance: float = 1.0
    p_rep: float = 0.03
    p_rep_pred: float = 0.5
    p_death: float = 0.02
    vision: float = 3.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.step_variance <= 0:
            raise ValueError("domain size and step variance must be positive")
        for p in (self.p_rep, self.p_rep_pred, self.p_death):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        if not 0 < self.vision < min(self.width, self.height) / 2:
            raise ValueError("vision must be positive and below half the "
                             "smaller domain extent")


@dataclass
class PpmState:
    """Positions (n, 2) and breeds (n,) with 0 = prey, 1 = predator."""

    positions: np.ndarray
    breeds: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        self.breeds = np.asarray(self.breeds, dtype=np.int8).reshape(-1)
        if len(self.positions) != len(self.breeds):
            raise ValueError("positions and breeds must have equal length")

    def __len__(self):
        return len(self.breeds)


class CountState(NamedTuple):
    prey: int
    predators: int


def torus_distance(a, b, params):
    """Euclidean distance under minimal-image wrapping in both coordinates."""
    return math.sqrt(_kernels.torus_dist2(
        float(a[0]), float(a[1]), float(b[0]), float(b[1]),
        params.width, params.height))


def random_state(num_prey, num_predators, params, seed):
    """Uniformly placed initial condition."""
    rng = spawn_rng(seed, 0xA1)
    n = num_prey + num_predators
    pos = rng.random((n, 2)) * [params.width, params.height]
    breeds = np.concatenate([np.zeros(num_prey, np.int8),
                             np.ones(num_predators, np.int8)])
    return PpmState(pos, breeds)


def ppm_step(state, params, seed):
    """Advance one step; returns a new state, the input is untouched."""
    n = len(state)
    if n == 0:
        return PpmState(np.empty((0, 2)), np.empty(0, np.int8))
    px = np.empty(2 * n)
    py = np.empty(2 * n)
    br = np.empty(2 * n, np.int8)
    px[:n] = state.positions[:, 0]
    py[:n] = state.positions[:, 1]
    br[:n] = state.breeds
    rstate = _kernels.rng_init(subseed(seed, 0xB2))
    cnt = _kernels.ppm_step_core(
        px, py, br, n, params.width, params.height,
        math.sqrt(params.step_variance), params.p_rep, params.p_rep_pred,
        params.p_death, params.vision, rstate)
    return PpmState(np.column_stack([px[:cnt], py[:cnt]]), br[:cnt])


def ppm_counts(state):
    pred = int(np.count_nonzero(state.breeds == PREDATOR))
    return CountState(len(state) - pred, pred)


def run_counts(state, params, num_steps, seed, agent_cap=DEFAULT_AGENT_CAP):
    """Count time series over num_steps.

    Returns (counts (num_steps+1, 2), status, final_state, steps_done).
    Status: 0 completed, 1 predators extinct first, 2 prey extinct first,
    3 agent cap exceeded; after a terminal event the counts rows repeat.
    """
    counts, status, px, py, br, steps_done = _kernels.ppm_run(
        np.ascontiguousarray(state.positions[:, 0]),
        np.ascontiguousarray(state.positions[:, 1]),
        state.breeds, int(num_steps), params.width, params.height,
        math.sqrt(params.step_variance), params.p_rep, params.p_rep_pred,
        params.p_death, params.vision, subseed(seed, 0xB3), int(agent_cap))
    return counts, int(status), PpmState(np.column_stack([px, py]), br), \
        int(steps_done)


def extinction_outcomes(num_prey, num_predators, num_realizations, num_steps,
                        params, seed, agent_cap=DEFAULT_AGENT_CAP):
    """Outcome codes of independent realizations from uniform placement.

    0 = both breeds alive at the horizon, 1 = predators extinct first,
    2 = prey extinct first, 3 = agent cap exceeded.
    """
    return _kernels.ppm_outcome_batch(
        int(num_prey), int(num_predators), int(num_realizations),
        int(num_steps), params.width, params.height,
        math.sqrt(params.step_variance), params.p_rep, params.p_rep_pred,
        params.p_death, params.vision, subseed(seed, 0xB4), int(agent_cap))


def save_snapshot(state, path):
    """Position/breed table (x, y, breed) for scatter plotting."""
    with open(path, "w") as fh:
        fh.write("x,y,breed\n")
        for (x, y), b in zip(state.positions, state.breeds):
            fh.write(f"{x!r},{y!r},{int(b)}\n")


def save_count_series(counts, path):
    """Two-column table (prey, predators); the row index is the step."""
    with open(path, "w") as fh:
        fh.write("prey,predators\n")
        for row in np.asarray(counts):
            fh.write(f"{int(row[0])},{int(row[1])}\n")
