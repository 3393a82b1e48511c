"""Numba-compiled simulation kernels.

All kernels draw randomness from an explicit xoshiro256++ stream whose seed
is derived from (master seed, work-item index) with splitmix64 mixing, so
batch results are bitwise reproducible regardless of thread count.  Parallel
loops only ever write to disjoint output rows.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

# --------------------------------------------------------------------------
# splittable RNG: splitmix64 seeding + xoshiro256++ streams

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)
_W1 = np.uint64(0xA0761D6478BD642F)
_U64 = np.uint64(64)
_U11 = np.uint64(11)
_U17 = np.uint64(17)
_U23 = np.uint64(23)
_U27 = np.uint64(27)
_U30 = np.uint64(30)
_U31 = np.uint64(31)
_U45 = np.uint64(45)
_INV53 = 1.0 / 9007199254740992.0  # 2^-53
_TWO_PI = 6.283185307179586


@nb.njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> _U30)) * _SM_M1
    z = (z ^ (z >> _U27)) * _SM_M2
    return z ^ (z >> _U31)


@nb.njit(cache=True)
def derive_seed(master, index):
    """64-bit stream seed for work item ``index`` under ``master``."""
    z = _mix64(np.uint64(master) + _SM_GAMMA)
    z = _mix64(z ^ (np.uint64(index) * _W1 + _SM_GAMMA))
    return z


@nb.njit(cache=True)
def rng_init(seed):
    s = np.empty(4, np.uint64)
    z = np.uint64(seed)
    for i in range(4):
        z = z + _SM_GAMMA
        s[i] = _mix64(z)
    return s


@nb.njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << k) | (x >> (_U64 - k))


@nb.njit(cache=True, inline="always")
def _next_u64(s):
    r = _rotl(s[0] + s[3], _U23) + s[0]
    t = s[1] << _U17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], _U45)
    return r


@nb.njit(cache=True, inline="always")
def rng_uniform(s):
    """Uniform double in [0, 1)."""
    return (_next_u64(s) >> _U11) * _INV53


@nb.njit(cache=True, inline="always")
def rng_below(s, n):
    """Uniform integer in [0, n)."""
    v = int(rng_uniform(s) * n)
    if v >= n:
        v = n - 1
    return v


@nb.njit(cache=True, inline="always")
def rng_exponential(s):
    return -math.log(1.0 - rng_uniform(s))


@nb.njit(cache=True, inline="always")
def rng_normal(s):
    u1 = 1.0 - rng_uniform(s)
    u2 = rng_uniform(s)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)


@nb.njit(cache=True)
def _shuffle(s, arr):
    for i in range(arr.size - 1, 0, -1):
        j = rng_below(s, i + 1)
        tmp = arr[i]
        arr[i] = arr[j]
        arr[j] = tmp


# --------------------------------------------------------------------------
# Markov jump process: direct-method SSA

@nb.njit(cache=True, inline="always")
def _propensity(reactants, rates, pop_size, x, k):
    # gamma_k * N * prod_i N^{-a_ik} C(x_i, a_ik), zero if any x_i < a_ik
    a = rates[k] * pop_size
    for i in range(x.size):
        r = reactants[k, i]
        if x[i] < r:
            return 0.0
        for q in range(r):
            a *= (x[i] - q) / pop_size
        for q in range(2, r + 1):
            a /= q
    return a


@nb.njit(cache=True)
def ssa_final_state(reactants, products, rates, pop_size, x, t_end, rstate):
    """Evolve the jump process in place up to time t_end (direct method)."""
    K = rates.size
    d = x.size
    props = np.empty(K)
    t = 0.0
    while True:
        total = 0.0
        for k in range(K):
            p = _propensity(reactants, rates, pop_size, x, k)
            props[k] = p
            total += p
        if total <= 0.0:
            break
        t += rng_exponential(rstate) / total
        if t > t_end:
            break
        u = rng_uniform(rstate) * total
        acc = 0.0
        chosen = K - 1
        for k in range(K):
            acc += props[k]
            if u < acc:
                chosen = k
                break
        for i in range(d):
            x[i] += products[chosen, i] - reactants[chosen, i]


@nb.njit(cache=True)
def ssa_trajectory(reactants, products, rates, pop_size, x0, t_end, seed):
    """Record every jump; returns (times, states) without the final hold."""
    rstate = rng_init(seed)
    K = rates.size
    d = x0.size
    x = x0.copy()
    props = np.empty(K)
    cap = 256
    times = np.empty(cap)
    states = np.empty((cap, d), np.int64)
    times[0] = 0.0
    states[0] = x
    n = 1
    t = 0.0
    while True:
        total = 0.0
        for k in range(K):
            p = _propensity(reactants, rates, pop_size, x, k)
            props[k] = p
            total += p
        if total <= 0.0:
            break
        t += rng_exponential(rstate) / total
        if t > t_end:
            break
        u = rng_uniform(rstate) * total
        acc = 0.0
        chosen = K - 1
        for k in range(K):
            acc += props[k]
            if u < acc:
                chosen = k
                break
        for i in range(d):
            x[i] += products[chosen, i] - reactants[chosen, i]
        if n == cap:
            cap *= 2
            new_t = np.empty(cap)
            new_s = np.empty((cap, d), np.int64)
            new_t[:n] = times[:n]
            new_s[:n] = states[:n]
            times = new_t
            states = new_s
        times[n] = t
        states[n] = x
        n += 1
    return times[:n].copy(), states[:n].copy()


@nb.njit(cache=True)
def ssa_rule_counts(reactants, products, rates, pop_size, x0, t_end, seed):
    """Number of firings per rule over [0, t_end]."""
    rstate = rng_init(seed)
    K = rates.size
    x = x0.copy()
    props = np.empty(K)
    fired = np.zeros(K, np.int64)
    t = 0.0
    while True:
        total = 0.0
        for k in range(K):
            p = _propensity(reactants, rates, pop_size, x, k)
            props[k] = p
            total += p
        if total <= 0.0:
            break
        t += rng_exponential(rstate) / total
        if t > t_end:
            break
        u = rng_uniform(rstate) * total
        acc = 0.0
        chosen = K - 1
        for k in range(K):
            acc += props[k]
            if u < acc:
                chosen = k
                break
        fired[chosen] += 1
        for i in range(x.size):
            x[i] += products[chosen, i] - reactants[chosen, i]
    return fired


@nb.njit(cache=True, parallel=True)
def ssa_batch_final(reactants, products, rates, pop_size, x0, lag, k, master):
    """k independent end states of short runs started at x0."""
    d = x0.size
    out = np.empty((k, d), np.int64)
    for i in nb.prange(k):
        rstate = rng_init(derive_seed(master, i))
        x = x0.copy()
        ssa_final_state(reactants, products, rates, pop_size, x, lag, rstate)
        out[i] = x
    return out


# --------------------------------------------------------------------------
# small dense matrix exponential (scaling-and-squaring + truncated series)

@nb.njit(cache=True)
def expm_dense(A, out, work1, work2, work3):
    """out = exp(A) for small d x d matrices; A untouched, work* are scratch."""
    d = A.shape[0]
    nrm = 0.0
    for i in range(d):
        row = 0.0
        for j in range(d):
            row += abs(A[i, j])
        if row > nrm:
            nrm = row
    s = 0
    while nrm > 0.5:
        nrm *= 0.5
        s += 1
    scale = 0.5 ** s
    # work1 = scaled matrix, work2 = running series term, out = partial sum
    for i in range(d):
        for j in range(d):
            work1[i, j] = A[i, j] * scale
            work2[i, j] = work1[i, j]
            out[i, j] = work1[i, j]
        out[i, i] += 1.0
    for m in range(2, 40):
        tmax = 0.0
        for i in range(d):
            for j in range(d):
                acc = 0.0
                for l in range(d):
                    acc += work2[i, l] * work1[l, j]
                work3[i, j] = acc / m
        for i in range(d):
            for j in range(d):
                work2[i, j] = work3[i, j]
                out[i, j] += work3[i, j]
                if abs(work3[i, j]) > tmax:
                    tmax = abs(work3[i, j])
        if tmax < 1e-16:
            break
    for _ in range(s):
        for i in range(d):
            for j in range(d):
                acc = 0.0
                for l in range(d):
                    acc += out[i, l] * out[l, j]
                work3[i, j] = acc
        for i in range(d):
            for j in range(d):
                out[i, j] = work3[i, j]


# --------------------------------------------------------------------------
# discrete-time extended voter model on a network

@nb.njit(cache=True)
def neighbor_type_counts(indptr, indices, types, num_types, X):
    """X[a, t] = number of neighbors of agent a having type t."""
    X[:] = 0
    for a in range(types.size):
        for e in range(indptr[a], indptr[a + 1]):
            X[a, types[indices[e]]] += 1


@nb.njit(cache=True)
def evm_step_inplace(indptr, indices, types, X, gamma, gprime, t_step,
                     rstate, order, flips, G, P, w1, w2, w3):
    """One sweep: agents in random order, each resampled from exp(t*G) rows.

    ``X`` holds neighbor type counts and is updated incrementally as agents
    flip, so later agents see earlier updates.  Flip counts are accumulated
    into ``flips`` by (old type, new type).
    """
    n = types.size
    d = gamma.shape[0]
    for i in range(n):
        order[i] = i
    _shuffle(rstate, order)
    for oi in range(n):
        agent = order[oi]
        deg = indptr[agent + 1] - indptr[agent]
        cur = types[agent]
        for i in range(d):
            rowsum = 0.0
            for j in range(d):
                if i == j:
                    continue
                g = gprime[i, j]
                if deg > 0:
                    g += gamma[i, j] * X[agent, j] / deg
                G[i, j] = g * t_step
                rowsum += g
            G[i, i] = -rowsum * t_step
        expm_dense(G, P, w1, w2, w3)
        u = rng_uniform(rstate)
        acc = 0.0
        new = d - 1
        for j in range(d):
            acc += P[cur, j]
            if u < acc:
                new = j
                break
        if new != cur:
            types[agent] = new
            flips[cur, new] += 1
            for e in range(indptr[agent], indptr[agent + 1]):
                nbr = indices[e]
                X[nbr, cur] -= 1
                X[nbr, new] += 1


@nb.njit(cache=True)
def evm_run_counts(indptr, indices, types, members, offsets, gamma, gprime,
                   t_step, num_steps, seed):
    """Evolve in place for num_steps; returns per-cluster type counts history."""
    rstate = rng_init(seed)
    n = types.size
    d = gamma.shape[0]
    num_clusters = offsets.size - 1
    X = np.empty((n, d), np.int64)
    neighbor_type_counts(indptr, indices, types, d, X)
    order = np.empty(n, np.int64)
    flips = np.zeros((d, d), np.int64)
    G = np.empty((d, d))
    P = np.empty((d, d))
    w1 = np.empty((d, d))
    w2 = np.empty((d, d))
    w3 = np.empty((d, d))
    hist = np.zeros((num_steps + 1, num_clusters * d), np.int64)
    for q in range(num_clusters):
        for p_ in range(offsets[q], offsets[q + 1]):
            hist[0, q * d + types[members[p_]]] += 1
    for step in range(1, num_steps + 1):
        evm_step_inplace(indptr, indices, types, X, gamma, gprime, t_step,
                         rstate, order, flips, G, P, w1, w2, w3)
        for q in range(num_clusters):
            for p_ in range(offsets[q], offsets[q + 1]):
                hist[step, q * d + types[members[p_]]] += 1
    return hist, flips


@nb.njit(cache=True)
def lift_types_inplace(members, offsets, counts, types, rstate):
    """Assign types within each cluster to match counts, in random placement."""
    num_clusters, d = counts.shape
    for q in range(num_clusters):
        lo, hi = offsets[q], offsets[q + 1]
        pos = lo
        for ty in range(d):
            for _ in range(counts[q, ty]):
                types[members[pos]] = ty
                pos += 1
        for i in range(hi - lo - 1, 0, -1):
            j = rng_below(rstate, i + 1)
            ai = members[lo + i]
            aj = members[lo + j]
            tmp = types[ai]
            types[ai] = types[aj]
            types[aj] = tmp


@nb.njit(cache=True, parallel=True)
def evm_km_batch(indptr, indices, members, offsets, counts, gamma, gprime,
                 t_step, num_steps, k, master):
    """k lag-time end states (per-cluster counts) from one macro state.

    Each sample independently lifts the macro state to agent types, runs
    ``num_steps`` voter sweeps, and aggregates per-cluster type counts.
    """
    n = indptr.size - 1
    d = gamma.shape[0]
    num_clusters = offsets.size - 1
    out = np.empty((k, num_clusters * d), np.int64)
    for smp in nb.prange(k):
        rstate = rng_init(derive_seed(master, smp))
        types = np.empty(n, np.int64)
        lift_types_inplace(members, offsets, counts, types, rstate)
        X = np.empty((n, d), np.int64)
        neighbor_type_counts(indptr, indices, types, d, X)
        order = np.empty(n, np.int64)
        flips = np.zeros((d, d), np.int64)
        G = np.empty((d, d))
        P = np.empty((d, d))
        w1 = np.empty((d, d))
        w2 = np.empty((d, d))
        w3 = np.empty((d, d))
        for _ in range(num_steps):
            evm_step_inplace(indptr, indices, types, X, gamma, gprime, t_step,
                             rstate, order, flips, G, P, w1, w2, w3)
        row = np.zeros(num_clusters * d, np.int64)
        for q in range(num_clusters):
            for p_ in range(offsets[q], offsets[q + 1]):
                row[q * d + types[members[p_]]] += 1
        out[smp] = row
    return out


# --------------------------------------------------------------------------
# spatial predator-prey model (periodic square, grid-binned prey search)

PREY = 0
PREDATOR = 1


@nb.njit(cache=True, inline="always")
def _wrap(x, width):
    y = x % width
    if y < 0.0:
        y += width
    return y


@nb.njit(cache=True, inline="always")
def torus_dist2(ax, ay, bx, by, width, height):
    dx = abs(ax - bx)
    if width - dx < dx:
        dx = width - dx
    dy = abs(ay - by)
    if height - dy < dy:
        dy = height - dy
    return dx * dx + dy * dy


@nb.njit(cache=True, inline="always")
def _grid_insert(head, nxt, prv, cell, i):
    j = head[cell]
    nxt[i] = j
    prv[i] = -1
    if j != -1:
        prv[j] = i
    head[cell] = i


@nb.njit(cache=True, inline="always")
def _grid_remove(head, nxt, prv, cell, i):
    p = prv[i]
    q = nxt[i]
    if p == -1:
        head[cell] = q
    else:
        nxt[p] = q
    if q != -1:
        prv[q] = p


@nb.njit(cache=True)
def ppm_step_core(px, py, br, n, width, height, sqrt_h, p_rep, p_rep_pred,
                  p_death, vision, rstate):
    """One model step on capacity-2n working arrays; returns new agent count.

    Input agents occupy slots [0, n); offspring are appended.  Survivors are
    compacted to the front of the arrays before returning.
    """
    ncx = max(1, int(width / vision))
    ncy = max(1, int(height / vision))
    csx = width / ncx
    csy = height / ncy
    cap = px.size
    head = np.full(ncx * ncy, -1, np.int64)
    nxt = np.empty(cap, np.int64)
    prv = np.empty(cap, np.int64)
    cell_of = np.empty(cap, np.int64)
    alive = np.ones(cap, np.uint8)
    v2 = vision * vision

    for i in range(n):
        if br[i] == PREY:
            cx = min(int(px[i] / csx), ncx - 1)
            cy = min(int(py[i] / csy), ncy - 1)
            c = cy * ncx + cx
            cell_of[i] = c
            _grid_insert(head, nxt, prv, c, i)

    order = np.empty(n, np.int64)
    for i in range(n):
        order[i] = i
    _shuffle(rstate, order)

    xs = np.empty(3, np.int64)
    ys = np.empty(3, np.int64)
    m = n
    for oi in range(n):
        i = order[oi]
        if alive[i] == 0:
            continue
        # Gaussian move, wrapped
        nx = _wrap(px[i] + sqrt_h * rng_normal(rstate), width)
        ny = _wrap(py[i] + sqrt_h * rng_normal(rstate), height)
        if br[i] == PREY:
            cx = min(int(nx / csx), ncx - 1)
            cy = min(int(ny / csy), ncy - 1)
            c = cy * ncx + cx
            if c != cell_of[i]:
                _grid_remove(head, nxt, prv, cell_of[i], i)
                cell_of[i] = c
                _grid_insert(head, nxt, prv, c, i)
            px[i] = nx
            py[i] = ny
            if rng_uniform(rstate) < p_rep:
                px[m] = rng_uniform(rstate) * width
                py[m] = rng_uniform(rstate) * height
                br[m] = PREY
                alive[m] = 1
                ccx = min(int(px[m] / csx), ncx - 1)
                ccy = min(int(py[m] / csy), ncy - 1)
                cc = ccy * ncx + ccx
                cell_of[m] = cc
                _grid_insert(head, nxt, prv, cc, m)
                m += 1
        else:
            px[i] = nx
            py[i] = ny
            cx = min(int(nx / csx), ncx - 1)
            cy = min(int(ny / csy), ncy - 1)
            # candidate cells, deduplicated for tiny grids
            nxs = 0
            for o in range(-1, 2):
                cc = (cx + o) % ncx
                seen = False
                for q in range(nxs):
                    if xs[q] == cc:
                        seen = True
                if not seen:
                    xs[nxs] = cc
                    nxs += 1
            nys = 0
            for o in range(-1, 2):
                cc = (cy + o) % ncy
                seen = False
                for q in range(nys):
                    if ys[q] == cc:
                        seen = True
                if not seen:
                    ys[nys] = cc
                    nys += 1
            count = 0
            victim = -1
            for qx in range(nxs):
                for qy in range(nys):
                    j = head[ys[qy] * ncx + xs[qx]]
                    while j != -1:
                        if torus_dist2(nx, ny, px[j], py[j],
                                       width, height) <= v2:
                            count += 1
                            if rng_below(rstate, count) == 0:
                                victim = j
                        j = nxt[j]
            if victim >= 0:
                alive[victim] = 0
                _grid_remove(head, nxt, prv, cell_of[victim], victim)
                if rng_uniform(rstate) < p_rep_pred:
                    px[m] = rng_uniform(rstate) * width
                    py[m] = rng_uniform(rstate) * height
                    br[m] = PREDATOR
                    alive[m] = 1
                    m += 1
            elif rng_uniform(rstate) < p_death:
                alive[i] = 0
    # compact survivors to the front
    cnt = 0
    for i in range(m):
        if alive[i]:
            px[cnt] = px[i]
            py[cnt] = py[i]
            br[cnt] = br[i]
            cnt += 1
    return cnt


@nb.njit(cache=True)
def ppm_run(px0, py0, br0, num_steps, width, height, sqrt_h, p_rep,
            p_rep_pred, p_death, vision, seed, agent_cap):
    """Run num_steps; returns (counts history, status, px, py, br, n).

    status: 0 completed, 1 predators reached zero first, 2 prey reached zero
    first, 3 agent cap exceeded.  The run stops at the step where the status
    became terminal; remaining history rows repeat the last counts.
    """
    rstate = rng_init(seed)
    n = br0.size
    px = px0.copy()
    py = py0.copy()
    br = br0.copy()
    counts = np.zeros((num_steps + 1, 2), np.int64)
    for i in range(n):
        counts[0, br[i]] += 1
    status = 0
    if counts[0, PREDATOR] == 0:
        status = 1
    if counts[0, PREY] == 0:
        status = 2
    step_done = 0
    for step in range(1, num_steps + 1):
        if status != 0:
            counts[step] = counts[step - 1]
            continue
        if 2 * n > agent_cap:
            status = 3
            counts[step] = counts[step - 1]
            continue
        wx = np.empty(2 * n)
        wy = np.empty(2 * n)
        wb = np.empty(2 * n, np.int8)
        wx[:n] = px[:n]
        wy[:n] = py[:n]
        wb[:n] = br[:n]
        n = ppm_step_core(wx, wy, wb, n, width, height, sqrt_h, p_rep,
                          p_rep_pred, p_death, vision, rstate)
        px = wx
        py = wy
        br = wb
        prey = 0
        pred = 0
        for i in range(n):
            if wb[i] == PREY:
                prey += 1
            else:
                pred += 1
        counts[step, PREY] = prey
        counts[step, PREDATOR] = pred
        step_done = step
        if pred == 0 and prey > 0:
            status = 1
        elif prey == 0:
            status = 2
    return counts, status, px[:n].copy(), py[:n].copy(), br[:n].copy(), step_done


@nb.njit(cache=True, parallel=True)
def ppm_outcome_batch(num_prey, num_pred, num_real, num_steps, width, height,
                      sqrt_h, p_rep, p_rep_pred, p_death, vision, master,
                      agent_cap):
    """Extinction outcome per realization from uniform initial placement.

    0 = neither breed extinct by num_steps, 1 = predators extinct first,
    2 = prey extinct first, 3 = agent cap exceeded.
    """
    out = np.empty(num_real, np.int64)
    for r in nb.prange(num_real):
        rstate = rng_init(derive_seed(master, r))
        n = num_prey + num_pred
        px = np.empty(n)
        py = np.empty(n)
        br = np.empty(n, np.int8)
        for i in range(n):
            px[i] = rng_uniform(rstate) * width
            py[i] = rng_uniform(rstate) * height
            br[i] = PREY if i < num_prey else PREDATOR
        status = 0
        for _ in range(num_steps):
            if 2 * n > agent_cap:
                status = 3
                break
            wx = np.empty(2 * n)
            wy = np.empty(2 * n)
            wb = np.empty(2 * n, np.int8)
            wx[:n] = px[:n]
            wy[:n] = py[:n]
            wb[:n] = br[:n]
            n = ppm_step_core(wx, wy, wb, n, width, height, sqrt_h, p_rep,
                              p_rep_pred, p_death, vision, rstate)
            px = wx
            py = wy
            br = wb
            prey = 0
            pred = 0
            for i in range(n):
                if br[i] == PREY:
                    prey += 1
                else:
                    pred += 1
            if pred == 0 and prey > 0:
                status = 1
                break
            if prey == 0:
                status = 2
                break
        out[r] = status
    return out


@nb.njit(cache=True, parallel=True)
def ppm_km_batch(num_prey, num_pred, k, num_steps, width, height, sqrt_h,
                 p_rep, p_rep_pred, p_death, vision, master):
    """k lag-time count states from uniform placement of (prey, predators)."""
    out = np.empty((k, 2), np.int64)
    for smp in nb.prange(k):
        rstate = rng_init(derive_seed(master, smp))
        n = num_prey + num_pred
        px = np.empty(n)
        py = np.empty(n)
        br = np.empty(n, np.int8)
        for i in range(n):
            px[i] = rng_uniform(rstate) * width
            py[i] = rng_uniform(rstate) * height
            br[i] = PREY if i < num_prey else PREDATOR
        for _ in range(num_steps):
            wx = np.empty(2 * n)
            wy = np.empty(2 * n)
            wb = np.empty(2 * n, np.int8)
            wx[:n] = px[:n]
            wy[:n] = py[:n]
            wb[:n] = br[:n]
            n = ppm_step_core(wx, wy, wb, n, width, height, sqrt_h, p_rep,
                              p_rep_pred, p_death, vision, rstate)
            px = wx
            py = wy
            br = wb
        prey = 0
        pred = 0
        for i in range(n):
            if br[i] == PREY:
                prey += 1
            else:
                pred += 1
        out[smp, PREY] = prey
        out[smp, PREDATOR] = pred
    return out

