"""Training-data generation: measurement points and pointwise estimates.

Drift and diffusion are estimated at chosen aggregate states from k short
simulations of lag tau each,

    b(x) ~ mean[(X_tau - x)] / tau
    a(x) ~ mean[(X_tau - x)(X_tau - x)^T] / tau,

the second moment deliberately uncentered, which carries an O(tau) bias of
b b^T tau.  Conservation laws are removed by dropping the last coordinate of
every conserved block, and measurements can be rescaled to frequencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, mjp
from ._rng import spawn_rng, subseed
from .mjp import CapacityError


class DataError(ValueError):
    """Measurement data violates a structural assumption."""


@dataclass
class Measurement:
    """One training row: a state with its pointwise drift/diffusion estimate."""

    point: np.ndarray
    drift_est: np.ndarray
    diffusion_est: np.ndarray
    sample_count: int
    lag: float

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=float)
        self.drift_est = np.asarray(self.drift_est, dtype=float)
        self.diffusion_est = np.asarray(self.diffusion_est, dtype=float)
        d = self.point.shape[0]
        if self.drift_est.shape != (d,) or self.diffusion_est.shape != (d, d):
            raise ValueError("inconsistent measurement dimensions")
        if not np.allclose(self.diffusion_est, self.diffusion_est.T):
            raise ValueError("diffusion estimate must be symmetric")
        if self.lag <= 0:
            raise ValueError("lag must be positive")

    @property
    def dim(self):
        return self.point.shape[0]


@dataclass(frozen=True)
class SamplingPlan:
    """How many points, how many short runs per point, and the lag time."""

    num_points: int
    samples_per_point: int
    lag: float
    mode: str = "uniform_simplex"

    def __post_init__(self):
        if self.num_points < 1 or self.samples_per_point < 1:
            raise ValueError("num_points and samples_per_point must be >= 1")
        if self.lag <= 0:
            raise ValueError("lag must be positive")
        if self.mode not in ("uniform_simplex", "on_the_fly"):
            raise ValueError(f"unknown sampling mode {self.mode!r}")


# --------------------------------------------------------------------------
# measurement point selection

def simplex_size(population_size, num_types):
    """Number of count states summing to N: C(N + d - 1, d - 1)."""
    return math.comb(population_size + num_types - 1, num_types - 1)


def simplex_points(population_size, num_types, cap=200_000):
    """All count vectors with the given total, lexicographically decreasing.

    Raises CapacityError above ``cap`` states; sample instead in that case.
    """
    size = simplex_size(population_size, num_types)
    if size > cap:
        raise CapacityError(f"simplex has {size} points, above the cap of "
                            f"{cap}; draw samples instead of enumerating")
    out = np.empty((size, num_types), dtype=np.int64)
    row = 0

    def rec(prefix, remaining, slots):
        nonlocal row
        if slots == 1:
            out[row, :len(prefix)] = prefix
            out[row, -1] = remaining
            row += 1
            return
        for v in range(remaining, -1, -1):
            rec(prefix + [v], remaining - v, slots - 1)

    rec([], population_size, num_types)
    return out


def default_measurement_count(population_size, num_types=3, cap=10_000):
    """A tenth of the simplex, rounded, capped at 10000 points."""
    return min(round(0.1 * simplex_size(population_size, num_types)), cap)


def _random_composition(rng, total, slots):
    # stars and bars: slots-1 cut positions among total+slots-1 symbols
    cuts = np.sort(rng.choice(total + slots - 1, size=slots - 1,
                              replace=False))
    bounds = np.concatenate([[-1], cuts, [total + slots - 1]])
    return np.diff(bounds) - 1


def sample_simplex_points(population_size, num_types, num_points, seed,
                          num_blocks=1, enumeration_cap=200_000):
    """Uniformly drawn distinct count states, without replacement.

    With ``num_blocks`` > 1 the points are concatenations of independent
    simplex states (one per conserved block), uniform over the product.
    Falls back from full enumeration to rejection sampling when the
    (product) simplex is larger than the enumeration cap.
    """
    block_size = simplex_size(population_size, num_types)
    total = block_size ** num_blocks
    if num_points > total:
        raise ValueError(f"cannot draw {num_points} distinct points from a "
                         f"space of {total}")
    rng = spawn_rng(seed, 0x5A)
    if total <= enumeration_cap:
        states = simplex_points(population_size, num_types,
                                cap=enumeration_cap)
        chosen = rng.choice(total, size=num_points, replace=False)
        blocks = []
        for b in range(num_blocks):
            idx = (chosen // block_size ** (num_blocks - 1 - b)) % block_size
            blocks.append(states[idx])
        return np.concatenate(blocks, axis=1)
    seen = set()
    rows = []
    while len(rows) < num_points:
        parts = [
            _random_composition(rng, population_size, num_types)
            for _ in range(num_blocks)]
        row = tuple(int(v) for part in parts for v in part)
        if row not in seen:
            seen.add(row)
            rows.append(row)
    return np.array(rows, dtype=np.int64)


def largest_remainder_counts(freqs, total):
    """Integer counts summing to ``total`` closest to freqs * total."""
    freqs = np.asarray(freqs, dtype=float)
    raw = freqs * total
    counts = np.floor(raw).astype(np.int64)
    short = int(total - counts.sum())
    if short < 0:
        raise ValueError("frequencies sum to more than one")
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def lift_macro_to_micro(c, network, seed):
    """Agent types realizing per-cluster frequencies, random within clusters.

    ``c`` stacks one frequency block per cluster; blocks are rounded to
    integer counts with largest-remainder correction.
    """
    c = np.asarray(c, dtype=float)
    q_count = network.num_clusters
    if c.size % q_count:
        raise ValueError("frequency vector does not split into cluster blocks")
    d = c.size // q_count
    sizes = network.cluster_sizes
    counts = np.empty((q_count, d), dtype=np.int64)
    for q in range(q_count):
        counts[q] = largest_remainder_counts(c[q * d:(q + 1) * d],
                                             int(sizes[q]))
    members, offsets = network.cluster_members()
    types = np.empty(network.num_agents, dtype=np.int64)
    rstate = _kernels.rng_init(subseed(seed, 0x11F7))
    _kernels.lift_types_inplace(members, offsets, counts, types, rstate)
    return types


# --------------------------------------------------------------------------
# pointwise Kramers-Moyal estimation

def km_estimate(sampler, point, plan, seed):
    """Drift/diffusion estimate at one point from k short runs.

    ``sampler(point, lag, k, seed)`` must return a (k, dim) array of states
    at time ``lag`` started from ``point``.
    """
    point = np.asarray(point, dtype=float)
    samples = np.asarray(
        sampler(point, plan.lag, plan.samples_per_point, seed), dtype=float)
    if samples.ndim != 2 or samples.shape[1] != point.size:
        raise ValueError("sampler must return a (k, dim) array")
    delta = samples - point
    drift = delta.mean(axis=0) / plan.lag
    diffusion = (delta.T @ delta) / (samples.shape[0] * plan.lag)
    return Measurement(point, drift, diffusion, samples.shape[0], plan.lag)


def estimate_measurements(sampler, points, plan, seed):
    """One Measurement per point, with per-point derived seeds."""
    return [km_estimate(sampler, pt, plan, subseed(seed, 0x301, i))
            for i, pt in enumerate(np.asarray(points))]


def jump_model_sampler(model):
    """Short-run sampler backed by the exact SSA of a jump model."""

    def sampler(point, lag, k, seed):
        x0 = np.asarray(np.rint(point), dtype=np.int64)
        return mjp.sample_states_after(model, x0, lag, k, seed)

    return sampler


def network_evm_sampler(network, rates):
    """Short-run sampler for the network voter model.

    Points are stacked per-cluster type counts.  Every sample lifts the
    macro state to fresh agent types (uniform within clusters), runs
    lag / step_size voter sweeps, and aggregates back to counts.
    """
    indptr, indices = network.csr()
    members, offsets = network.cluster_members()
    d = rates.num_types
    sizes = network.cluster_sizes

    def sampler(point, lag, k, seed):
        steps = lag / rates.step_size
        num_steps = int(round(steps))
        if num_steps < 1 or abs(steps - num_steps) > 1e-9:
            raise ValueError("lag must be a positive multiple of step_size")
        counts = np.asarray(np.rint(point), dtype=np.int64).reshape(
            network.num_clusters, d)
        if np.any(counts.sum(axis=1) != sizes):
            raise DataError("cluster counts do not match cluster sizes")
        return _kernels.evm_km_batch(
            indptr, indices, members, offsets, counts, rates.imitation,
            rates.exploration, float(rates.step_size), num_steps, int(k),
            subseed(seed, 0x77))

    return sampler


def ppm_sampler(params):
    """Short-run sampler for the predator-prey model.

    Points are (prey, predator) counts; agents are placed uniformly at
    random, an approximation to the developed spatial distribution.
    """

    def sampler(point, lag, k, seed):
        num_steps = int(round(lag))
        if num_steps < 1 or abs(lag - num_steps) > 1e-9:
            raise ValueError("the predator-prey lag is a whole number of steps")
        prey_n, pred_n = (int(v) for v in np.rint(point))
        return _kernels.ppm_km_batch(
            prey_n, pred_n, int(k), num_steps, params.width, params.height,
            math.sqrt(params.step_variance), params.p_rep, params.p_rep_pred,
            params.p_death, params.vision, subseed(seed, 0x88))

    return sampler


def collect_ppm_count_states(params, initial_counts, num_trajectories,
                             num_steps, lag_steps, seed,
                             agent_cap=1_000_000):
    """On-the-fly measurement states for the predator-prey model.

    Runs an ensemble from the initial counts and gathers the count state at
    every lag multiple, deduplicating identical states.
    """
    from .prey import random_state, run_counts
    seen = {}
    for tr in range(num_trajectories):
        state = random_state(int(initial_counts[0]), int(initial_counts[1]),
                             params, subseed(seed, 0x99, tr))
        counts, status, _, steps_done = run_counts(
            state, params, num_steps, subseed(seed, 0x9A, tr),
            agent_cap=agent_cap)
        last = steps_done if status != 0 else num_steps
        for row in counts[lag_steps:last + 1:lag_steps]:
            seen.setdefault((int(row[0]), int(row[1])), None)
    states = np.array(sorted(seen), dtype=np.int64)
    return states


# --------------------------------------------------------------------------
# conservation reduction and frequency scaling

def reduce_and_scale(measurements, population_size, conserved, num_blocks=1):
    """Drop conserved coordinates and rescale to frequencies.

    With ``conserved``, every block of dim/num_blocks coordinates must sum
    to ``population_size`` (checked to 1e-9); the last coordinate of each
    block is dropped from points, drift rows, and diffusion rows/columns.
    Scaling divides points and drift by N and the diffusion matrix by N^2;
    N = 1 leaves values unscaled.
    """
    if not measurements:
        return []
    dim = measurements[0].dim
    n = float(population_size)
    keep = np.arange(dim)
    if conserved:
        if dim % num_blocks:
            raise ValueError("dimension does not split into equal blocks")
        block = dim // num_blocks
        keep = np.array([i for i in range(dim) if (i % block) != block - 1])
    out = []
    for m in measurements:
        if conserved:
            sums = m.point.reshape(num_blocks, -1).sum(axis=1)
            if np.any(np.abs(sums - population_size) > 1e-9):
                raise DataError("conservation violated: block sums "
                                f"{sums} != {population_size}")
        out.append(Measurement(
            m.point[keep] / n,
            m.drift_est[keep] / n,
            m.diffusion_est[np.ix_(keep, keep)] / n ** 2,
            m.sample_count, m.lag))
    return out


def reconstruct_conserved(reduced_point, population_size, num_blocks=1):
    """Recover dropped block coordinates of a reduced, scaled point."""
    pt = np.asarray(reduced_point, dtype=float).reshape(num_blocks, -1)
    last = 1.0 - pt.sum(axis=1, keepdims=True)
    return np.concatenate([pt, last], axis=1).reshape(-1) * population_size


# --------------------------------------------------------------------------
# persistence

def save_measurements(measurements, path):
    """Flat table: point, drift, upper-triangular diffusion, k, lag."""
    if not measurements:
        raise ValueError("nothing to save")
    d = measurements[0].dim
    pairs = [(i, j) for i in range(d) for j in range(i, d)]
    cols = ([f"x_{i}" for i in range(d)] + [f"drift_{i}" for i in range(d)]
            + [f"diff_{i}_{j}" for i, j in pairs] + ["k", "lag"])
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for m in measurements:
            vals = ([repr(float(v)) for v in m.point]
                    + [repr(float(v)) for v in m.drift_est]
                    + [repr(float(m.diffusion_est[i, j])) for i, j in pairs]
                    + [str(m.sample_count), repr(float(m.lag))])
            fh.write(",".join(vals) + "\n")


def load_measurements(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        d = sum(1 for c in header if c.startswith("x_"))
        pairs = [(i, j) for i in range(d) for j in range(i, d)]
        out = []
        for line in fh:
            vals = line.strip().split(",")
            point = np.array([float(v) for v in vals[:d]])
            drift = np.array([float(v) for v in vals[d:2 * d]])
            diff = np.zeros((d, d))
            for (i, j), v in zip(pairs, vals[2 * d:2 * d + len(pairs)]):
                diff[i, j] = diff[j, i] = float(v)
            k = int(vals[2 * d + len(pairs)])
            lag = float(vals[2 * d + len(pairs) + 1])
            out.append(Measurement(point, drift, diff, k, lag))
    return out
