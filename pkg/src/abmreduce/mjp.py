"""Markov jump processes over population states.

Agent-type transition systems are represented chemistry-style: each rule
consumes reactant counts, produces product counts, and fires at a rate
proportional to the number of agent combinations, scaled by the population
size.  The module provides exact stochastic simulation (direct-method SSA),
a matrix-exponential solver of the forward equation on small state spaces
(validation oracle), and the analytic SDE limit in frequency coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.linalg
import yaml

from . import _kernels
from .dictionary import (falling_factorial_poly, fields_from_rule_terms,
                         poly_mul)


class CapacityError(RuntimeError):
    """A requested enumeration exceeds the configured state cap."""


@dataclass(frozen=True)
class TransitionRule:
    """One transition: reactant counts -> product counts at a rate constant."""

    reactants: tuple
    products: tuple
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "reactants",
                           tuple(int(a) for a in self.reactants))
        object.__setattr__(self, "products",
                           tuple(int(b) for b in self.products))
        if len(self.reactants) != len(self.products):
            raise ValueError("reactant and product vectors differ in length")
        if any(a < 0 for a in self.reactants + self.products):
            raise ValueError("stoichiometric counts must be nonnegative")
        if self.rate <= 0:
            raise ValueError("rate constant must be positive")
        if all(b == a for a, b in zip(self.reactants, self.products)):
            raise ValueError("rule has zero net change")

    @property
    def net_change(self):
        return tuple(b - a for a, b in zip(self.reactants, self.products))

    @property
    def order(self):
        return sum(self.reactants)


@dataclass(frozen=True)
class JumpModel:
    """A set of transition rules acting on d agent-type counts."""

    num_types: int
    rules: tuple
    population_size: int

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        if self.num_types < 1 or self.population_size < 1:
            raise ValueError("num_types and population_size must be >= 1")
        if not self.rules:
            raise ValueError("model needs at least one rule")
        for r in self.rules:
            if len(r.reactants) != self.num_types:
                raise ValueError("rule dimension does not match num_types")

    @property
    def num_rules(self):
        return len(self.rules)

    @property
    def max_order(self):
        return max(r.order for r in self.rules)

    def conserves_population(self):
        return all(sum(r.net_change) == 0 for r in self.rules)

    def reactant_matrix(self):
        return np.array([r.reactants for r in self.rules], dtype=np.int64)

    def product_matrix(self):
        return np.array([r.products for r in self.rules], dtype=np.int64)

    def rate_vector(self):
        return np.array([r.rate for r in self.rules], dtype=float)


@dataclass
class Trajectory:
    """Piecewise-constant sample path: state[i] holds on [times[i], times[i+1])."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states)
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def state_at(self, t):
        idx = np.searchsorted(self.times, t, side="right") - 1
        return self.states[max(idx, 0)]


def propensity(model, rule_index, x):
    """Firing rate of one rule at a population state.

    gamma_k * N * prod_i N^{-a_ik} C(x_i, a_ik) when every x_i covers the
    reactant demand, zero otherwise.
    """
    rule = model.rules[rule_index]
    x = np.asarray(x)
    if x.shape != (model.num_types,):
        raise ValueError("state dimension does not match the model")
    value = rule.rate * model.population_size
    for xi, a in zip(x, rule.reactants):
        if xi < a:
            return 0.0
        value *= math.comb(int(xi), a) / model.population_size ** a
    return value


def propensities(model, x):
    return np.array([propensity(model, k, x) for k in range(model.num_rules)])


def gillespie_simulate(model, x0, t_end, seed):
    """Exact SSA sample path; records every jump plus a hold at t_end."""
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    x0 = np.asarray(x0, dtype=np.int64)
    times, states = _kernels.ssa_trajectory(
        model.reactant_matrix(), model.product_matrix(), model.rate_vector(),
        float(model.population_size), x0, float(t_end), int(seed))
    if times[-1] < t_end:
        times = np.append(times, t_end)
        states = np.vstack([states, states[-1]])
    return Trajectory(times, states)


def sample_states_after(model, x0, lag, k, seed):
    """k independent states X_lag given X_0 = x0, as a (k, d) array."""
    x0 = np.asarray(x0, dtype=np.int64)
    return _kernels.ssa_batch_final(
        model.reactant_matrix(), model.product_matrix(), model.rate_vector(),
        float(model.population_size), x0, float(lag), int(k), int(seed))


# --------------------------------------------------------------------------
# forward-equation oracle on enumerable state spaces

@dataclass
class CmeSolution:
    states: np.ndarray        # (S, d) lexicographically sorted
    probabilities: np.ndarray
    index: dict = field(repr=False)

    def probability_of(self, x):
        return self.probabilities[self.index[tuple(int(v) for v in x)]]

    def total_variation(self, other_probs):
        return 0.5 * float(np.abs(self.probabilities - other_probs).sum())

    def empirical(self, samples):
        """Empirical distribution of sampled states aligned to this support.

        Samples outside the enumerated support would indicate a reachability
        bug and raise KeyError.
        """
        probs = np.zeros(len(self.probabilities))
        for row in np.asarray(samples):
            probs[self.index[tuple(int(v) for v in row)]] += 1
        return probs / len(samples)


def enumerate_reachable(model, support, state_cap=20000):
    """Closure of the support under all rules with positive propensity."""
    frontier = [tuple(int(v) for v in x) for x in support]
    seen = set(frontier)
    while frontier:
        nxt = []
        for x in frontier:
            for rule in model.rules:
                if all(xi >= a for xi, a in zip(x, rule.reactants)):
                    y = tuple(xi + nu for xi, nu in zip(x, rule.net_change))
                    if y not in seen:
                        seen.add(y)
                        if len(seen) > state_cap:
                            raise CapacityError(
                                f"reachable state space exceeds cap of "
                                f"{state_cap} states")
                        nxt.append(y)
        frontier = nxt
    return sorted(seen)


def cme_solve(model, p0, t, state_cap=20000):
    """Solve the forward (master) equation from distribution p0 to time t.

    ``p0`` maps state tuples to probabilities and must sum to one.  The rate
    matrix is assembled over the reachable closure of the support; jumps that
    would leave the nonnegative orthant carry zero propensity and are thereby
    excluded.  The action of the matrix exponential is evaluated with a
    scaling/truncated-series scheme (scipy expm_multiply).
    """
    total = sum(p0.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError("initial distribution must sum to 1")
    states = enumerate_reachable(model, list(p0.keys()), state_cap)
    index = {s: i for i, s in enumerate(states)}
    p_vec = np.zeros(len(states))
    for s, p in p0.items():
        p_vec[index[tuple(int(v) for v in s)]] = p
    if t == 0:
        return CmeSolution(np.array(states, dtype=np.int64), p_vec, index)

    rows, cols, vals = [], [], []
    for j, x in enumerate(states):
        xa = np.asarray(x)
        for k, rule in enumerate(model.rules):
            a = propensity(model, k, xa)
            if a <= 0.0:
                continue
            y = tuple(xi + nu for xi, nu in zip(x, rule.net_change))
            rows.append(index[y])
            cols.append(j)
            vals.append(a)
            rows.append(j)
            cols.append(j)
            vals.append(-a)
    n = len(states)
    rate_matrix = scipy.sparse.csc_matrix(
        (vals, (rows, cols)), shape=(n, n))
    p_t = scipy.sparse.linalg.expm_multiply(rate_matrix * float(t), p_vec)
    return CmeSolution(np.array(states, dtype=np.int64), p_t, index)


# --------------------------------------------------------------------------
# analytic SDE limit (chemical Langevin form) in frequency coordinates

def limit_sde(model, dictionary):
    """Polynomial drift b(c) and diffusion a(c) = sigma sigma^T of the limit SDE.

    Propensities are rescaled to frequencies, alpha~_k(c) = alpha_k(c N) / N,
    with the binomial combination counts expanded exactly so the 1/N
    correction terms of finite populations are kept.  Drift is the propensity-
    weighted sum of net change vectors; the diffusion matrix carries an extra
    1/N.  If the dictionary has d-1 coordinates and the model conserves the
    population, the last coordinate is eliminated via the conservation law.

    Returns (drift, diffusion_aa); diffusion rows are the upper triangle in
    row-major (i, j) pair order.
    """
    d = model.num_types
    n_agents = model.population_size
    terms = []
    for rule in model.rules:
        prop = {tuple(0 for _ in range(d)): float(rule.rate)}
        for coord, a in enumerate(rule.reactants):
            if a:
                prop = poly_mul(prop,
                                falling_factorial_poly(coord, a, n_agents, d))
        terms.append((prop, rule.net_change))

    reduce_blocks = None
    if dictionary.dim == d - 1:
        if not model.conserves_population():
            raise ValueError("cannot reduce: the model does not conserve the "
                             "population size")
        reduce_blocks = [list(range(d))]
    elif dictionary.dim != d:
        raise ValueError(f"dictionary dimension {dictionary.dim} matches "
                         f"neither d={d} nor d-1")
    return fields_from_rule_terms(terms, d, n_agents, dictionary,
                                  reduce_blocks=reduce_blocks)


# --------------------------------------------------------------------------
# serialization

def jump_model_to_dict(model):
    return {
        "num_types": model.num_types,
        "population_size": model.population_size,
        "rules": [{"reactants": list(r.reactants),
                   "products": list(r.products),
                   "rate": float(r.rate)} for r in model.rules],
    }


def jump_model_from_dict(data):
    rules = tuple(TransitionRule(tuple(r["reactants"]), tuple(r["products"]),
                                 float(r["rate"])) for r in data["rules"])
    return JumpModel(int(data["num_types"]), rules,
                     int(data["population_size"]))


def save_jump_model(model, path):
    with open(path, "w") as fh:
        yaml.safe_dump(jump_model_to_dict(model), fh, sort_keys=False)


def load_jump_model(path):
    with open(path) as fh:
        return jump_model_from_dict(yaml.safe_load(fh))
