"""Network-resolved extended voter model.

Agents sit on the nodes of an undirected interaction network and carry one
of d types.  Imitation moves an agent to a neighbor's type at a rate
proportional to the neighbor-type frequency; exploration switches types
spontaneously.  The discrete-time dynamics resamples every agent, in random
order, from the row of exp(t_step * G) belonging to its current type, where
G collects the per-agent transition rates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from . import _kernels
from ._rng import spawn_rng, subseed
from .dictionary import fields_from_rule_terms
from .mjp import JumpModel, TransitionRule


@dataclass(frozen=True)
class Network:
    """Undirected simple graph with a cluster label per agent."""

    adjacency: np.ndarray
    cluster_of: np.ndarray
    _csr: tuple = field(init=False, repr=False, compare=False)
    _members: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        clusters = np.asarray(self.cluster_of, dtype=np.int64)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] < 1:
            raise ValueError("adjacency must be square and nonempty")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(adj)):
            raise ValueError("self-loops are not allowed")
        if clusters.shape != (adj.shape[0],):
            raise ValueError("cluster_of must assign every agent")
        num_clusters = int(clusters.max()) + 1 if clusters.size else 0
        counts = np.bincount(clusters, minlength=num_clusters)
        if np.any(counts == 0) or np.any(clusters < 0):
            raise ValueError("cluster ids must be contiguous and nonempty")
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "cluster_of", clusters)
        indptr = np.zeros(adj.shape[0] + 1, dtype=np.int64)
        indptr[1:] = np.cumsum(adj.sum(axis=1))
        # row-major flat positions of edges; modulo recovers the column
        indices = (np.flatnonzero(adj) % adj.shape[0]).astype(np.int64)
        object.__setattr__(self, "_csr", (indptr, indices))
        order = np.argsort(clusters, kind="stable").astype(np.int64)
        offsets = np.zeros(num_clusters + 1, dtype=np.int64)
        offsets[1:] = np.cumsum(counts)
        object.__setattr__(self, "_members", (order, offsets))

    @property
    def num_agents(self):
        return self.adjacency.shape[0]

    @property
    def num_clusters(self):
        return len(self._members[1]) - 1

    @property
    def cluster_sizes(self):
        return np.diff(self._members[1])

    def csr(self):
        """(indptr, indices) adjacency in compressed sparse row form."""
        return self._csr

    def cluster_members(self):
        """(members, offsets): agents of cluster q are members[o[q]:o[q+1]]."""
        return self._members

    def degrees(self):
        return np.diff(self._csr[0])


def make_complete_network(num_agents):
    adj = ~np.eye(num_agents, dtype=bool)
    return Network(adj, np.zeros(num_agents, dtype=np.int64))


def make_clustered_network(sizes, p, seed):
    """Complete subgraph per cluster; inter-cluster edges i.i.d. with prob p."""
    sizes = [int(s) for s in sizes]
    if any(s < 1 for s in sizes):
        raise ValueError("cluster sizes must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError("edge probability must lie in [0, 1]")
    n = sum(sizes)
    rng = spawn_rng(seed, 0xC1)
    adj = np.zeros((n, n), dtype=bool)
    starts = np.cumsum([0] + sizes)
    clusters = np.zeros(n, dtype=np.int64)
    for q, s in enumerate(sizes):
        lo, hi = starts[q], starts[q + 1]
        adj[lo:hi, lo:hi] = True
        clusters[lo:hi] = q
    for q in range(len(sizes)):
        for r in range(q + 1, len(sizes)):
            block = rng.random((sizes[q], sizes[r])) < p
            adj[starts[q]:starts[q + 1], starts[r]:starts[r + 1]] = block
            adj[starts[r]:starts[r + 1], starts[q]:starts[q + 1]] = block.T
    np.fill_diagonal(adj, False)
    return Network(adj, clusters)


def make_random_network(num_agents, p, seed):
    """Erdos-Renyi graph on a single cluster."""
    rng = spawn_rng(seed, 0xE5)
    upper = np.triu(rng.random((num_agents, num_agents)) < p, k=1)
    return Network(upper | upper.T, np.zeros(num_agents, dtype=np.int64))


@dataclass(frozen=True)
class VoterRates:
    """Imitation/exploration rate constants and the discrete step size."""

    imitation: np.ndarray
    exploration: np.ndarray
    inter_cluster_imitation: np.ndarray = None
    step_size: float = 0.01

    def __post_init__(self):
        imi = np.asarray(self.imitation, dtype=float)
        exp = np.asarray(self.exploration, dtype=float)
        if imi.ndim != 2 or imi.shape[0] != imi.shape[1]:
            raise ValueError("imitation matrix must be square")
        if exp.shape != imi.shape:
            raise ValueError("exploration matrix must match imitation shape")
        for m in (imi, exp):
            if np.any(np.diag(m) != 0):
                raise ValueError("rate matrices must have zero diagonal")
            if np.any(m < 0):
                raise ValueError("rates must be nonnegative")
        object.__setattr__(self, "imitation", imi)
        object.__setattr__(self, "exploration", exp)
        if self.inter_cluster_imitation is not None:
            beta = np.asarray(self.inter_cluster_imitation, dtype=float)
            if beta.shape != imi.shape or np.any(beta < 0):
                raise ValueError("inter-cluster rates must match and be >= 0")
            object.__setattr__(self, "inter_cluster_imitation", beta)
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")

    @property
    def num_types(self):
        return self.imitation.shape[0]

    @property
    def beta(self):
        """Inter-cluster imitation rates; defaults to the intra rates."""
        if self.inter_cluster_imitation is None:
            return self.imitation
        return self.inter_cluster_imitation


def cyclic_rates(d=3, strong=2.0, weak=1.0, exploration=0.01, step_size=0.01):
    """Cyclic-dominance imitation pattern used by the benchmark experiments.

    gamma[i, i+1] = strong around the cycle, the reverse direction = weak,
    uniform exploration off the diagonal.
    """
    imi = np.zeros((d, d))
    for i in range(d):
        imi[i, (i + 1) % d] = strong
        imi[(i + 1) % d, i] = weak
    exp = np.full((d, d), float(exploration))
    np.fill_diagonal(exp, 0.0)
    return VoterRates(imi, exp, step_size=step_size)


def evm_jump_model(rates, population_size):
    """Complete-network voter model as a Markov jump process.

    Imitation (i, j) is the second-order rule S_i + S_j -> 2 S_j with rate
    gamma_ij; exploration is the first-order rule S_i -> S_j with rate
    gamma'_ij.  Zero-rate transitions are omitted.
    """
    d = rates.num_types
    rules = []
    for i in range(d):
        for j in range(d):
            if i == j or rates.imitation[i, j] == 0:
                continue
            reac = [0] * d
            prod = [0] * d
            reac[i] += 1
            reac[j] += 1
            prod[j] += 2
            rules.append(TransitionRule(tuple(reac), tuple(prod),
                                        float(rates.imitation[i, j])))
    for i in range(d):
        for j in range(d):
            if i == j or rates.exploration[i, j] == 0:
                continue
            reac = [0] * d
            prod = [0] * d
            reac[i] += 1
            prod[j] += 1
            rules.append(TransitionRule(tuple(reac), tuple(prod),
                                        float(rates.exploration[i, j])))
    return JumpModel(d, tuple(rules), int(population_size))


# --------------------------------------------------------------------------
# discrete-time simulation

def dt_evm_step(network, rates, types, seed):
    """One sweep of the discrete-time voter dynamics; returns the new types.

    Agents are processed in a uniformly random order and updated in place,
    so later agents see earlier flips.  Isolated agents only explore.
    """
    types = np.asarray(types, dtype=np.int64)
    d = rates.num_types
    if types.shape != (network.num_agents,):
        raise ValueError("state length does not match the network")
    if np.any(types < 0) or np.any(types >= d):
        raise ValueError("type labels out of range")
    out = types.copy()
    indptr, indices = network.csr()
    X = np.empty((network.num_agents, d), dtype=np.int64)
    _kernels.neighbor_type_counts(indptr, indices, out, d, X)
    rstate = _kernels.rng_init(subseed(seed, 0xD7))
    order = np.empty(network.num_agents, dtype=np.int64)
    flips = np.zeros((d, d), dtype=np.int64)
    scratch = [np.empty((d, d)) for _ in range(5)]
    _kernels.evm_step_inplace(indptr, indices, out, X, rates.imitation,
                              rates.exploration, float(rates.step_size),
                              rstate, order, flips, *scratch)
    return out


def simulate_dt_evm(network, rates, types0, num_steps, seed):
    """Evolve for num_steps sweeps.

    Returns (counts, flips, final_types) where counts[s] stacks the
    per-cluster type counts after s steps and flips tallies type changes
    by (old, new).
    """
    types = np.asarray(types0, dtype=np.int64).copy()
    indptr, indices = network.csr()
    members, offsets = network.cluster_members()
    counts, flips = _kernels.evm_run_counts(
        indptr, indices, types, members, offsets, rates.imitation,
        rates.exploration, float(rates.step_size), int(num_steps),
        subseed(seed, 0xD8))
    return counts, flips, types


def aggregate(network, types, num_types):
    """Per-cluster type frequencies, cluster-major: freqs[q*d + i]."""
    types = np.asarray(types)
    freqs = np.zeros(network.num_clusters * num_types)
    sizes = network.cluster_sizes
    for q in range(network.num_clusters):
        mask = network.cluster_of == q
        block = np.bincount(types[mask], minlength=num_types)
        freqs[q * num_types:(q + 1) * num_types] = block / sizes[q]
    return freqs


# --------------------------------------------------------------------------
# analytic two-cluster limit model

def two_cluster_limit_sde(rates, p, population_size, dictionary):
    """Polynomial drift/diffusion of the two-cluster frequency SDE.

    Both clusters have ``population_size`` agents; inter-cluster edges exist
    with probability p.  Each agent then has N(1+p) expected interaction
    partners, so intra-cluster imitation is scaled by 1/(p+1) and
    inter-cluster imitation by p/(p+1); exploration is network-independent.
    The noise carries the usual 1/sqrt(N) so a = sigma sigma^T gets 1/N.

    The dictionary selects full (2d) or per-cluster conservation-reduced
    (2(d-1)) coordinates.
    """
    d = rates.num_types
    dim = 2 * d
    beta = rates.beta
    intra = 1.0 / (p + 1.0)
    inter = p / (p + 1.0)

    def unit(q, i):
        e = [0] * dim
        e[q * d + i] = 1
        return tuple(e)

    terms = []
    for q in range(2):
        qq = 1 - q
        for i in range(d):
            for j in range(d):
                if i == j:
                    continue
                nu = np.zeros(dim, dtype=int)
                nu[q * d + i] = -1
                nu[q * d + j] = 1
                if rates.imitation[i, j] > 0:
                    prop = {tuple(np.add(unit(q, i), unit(q, j))):
                            intra * rates.imitation[i, j]}
                    terms.append((prop, tuple(nu)))
                if rates.exploration[i, j] > 0:
                    terms.append(({unit(q, i): rates.exploration[i, j]},
                                  tuple(nu)))
                if inter > 0 and beta[i, j] > 0:
                    prop = {tuple(np.add(unit(q, i), unit(qq, j))):
                            inter * beta[i, j]}
                    terms.append((prop, tuple(nu)))

    reduce_blocks = None
    if dictionary.dim == 2 * (d - 1):
        reduce_blocks = [list(range(d)), list(range(d, 2 * d))]
    elif dictionary.dim != dim:
        raise ValueError(f"dictionary dimension {dictionary.dim} matches "
                         f"neither 2d={dim} nor 2(d-1)={2 * (d - 1)}")
    return fields_from_rule_terms(terms, dim, population_size, dictionary,
                                  reduce_blocks=reduce_blocks)


# --------------------------------------------------------------------------
# serialization

def network_to_dict(network):
    i, j = np.nonzero(np.triu(network.adjacency, k=1))
    return {
        "num_agents": int(network.num_agents),
        "cluster_of": [int(c) for c in network.cluster_of],
        "edges": [[int(a), int(b)] for a, b in zip(i, j)],
    }


def network_from_dict(data):
    n = int(data["num_agents"])
    adj = np.zeros((n, n), dtype=bool)
    for a, b in data["edges"]:
        adj[a, b] = adj[b, a] = True
    return Network(adj, np.asarray(data["cluster_of"], dtype=np.int64))


def save_network(network, path):
    with open(path, "w") as fh:
        yaml.safe_dump(network_to_dict(network), fh, sort_keys=False)


def load_network(path):
    with open(path) as fh:
        return network_from_dict(yaml.safe_load(fh))


def adjacency_matrix(network):
    """Dense 0/1 matrix, e.g. for plotting."""
    return network.adjacency.astype(np.int8)
