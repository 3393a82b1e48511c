"""Monomial dictionaries and polynomial vector fields.

The dictionary fixes an ordered basis of monomials; every matrix and
coefficient vector in the identification pipeline is indexed against it.
Ordering is graded lexicographic with the constant first, e.g. for two
coordinates and degree 3:

    1, c1, c2, c1^2, c1*c2, c2^2, c1^3, c1^2*c2, c1*c2^2, c2^3
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np


class DictionaryError(ValueError):
    """Raised when a polynomial term cannot be represented in a dictionary."""


def graded_multi_indices(dim, max_degree):
    """All exponent tuples of total degree <= max_degree, graded-lex ordered."""
    out = []
    for deg in range(max_degree + 1):
        block = [e for e in itertools.product(range(deg + 1), repeat=dim)
                 if sum(e) == deg]
        out.extend(sorted(block, reverse=True))
    return out


@dataclass(frozen=True)
class MonomialDictionary:
    """Ordered monomial basis on ``dim`` coordinates up to ``max_degree``."""

    dim: int
    max_degree: int
    multi_indices: tuple = field(init=False, repr=False, compare=False)
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dictionary needs at least one coordinate")
        if self.max_degree < 1:
            raise ValueError("dictionary must contain the degree-1 monomials")
        mi = tuple(graded_multi_indices(self.dim, self.max_degree))
        object.__setattr__(self, "multi_indices", mi)
        object.__setattr__(self, "_index", {e: k for k, e in enumerate(mi)})

    @property
    def size(self):
        return len(self.multi_indices)

    def __len__(self):
        return len(self.multi_indices)

    def index_of(self, exponents):
        """Position of a monomial; raises DictionaryError if absent."""
        key = tuple(int(e) for e in exponents)
        try:
            return self._index[key]
        except KeyError:
            raise DictionaryError(
                f"monomial with multi-index {key} is not in the dictionary "
                f"(dim={self.dim}, max_degree={self.max_degree})") from None

    def coordinate_index(self, i):
        """Dictionary position of the first-degree monomial x_i."""
        e = [0] * self.dim
        e[i] = 1
        return self.index_of(e)

    def pair_index(self, i, j):
        """Dictionary position of x_i * x_j."""
        e = [0] * self.dim
        e[i] += 1
        e[j] += 1
        return self.index_of(e)

    def evaluate(self, x):
        """Evaluate all basis monomials at a single point, shape (n,)."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected point of dimension {self.dim}")
        return self.evaluate_many(x[None, :])[:, 0]

    def evaluate_many(self, points):
        """Evaluate at points of shape (m, dim); returns Psi of shape (n, m)."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise ValueError(f"expected points of shape (m, {self.dim})")
        m = pts.shape[0]
        # cached coordinate powers, pw[j][e] = points[:, j] ** e
        pw = [np.vander(pts[:, j], self.max_degree + 1, increasing=True).T
              for j in range(self.dim)]
        psi = np.empty((self.size, m))
        for k, exps in enumerate(self.multi_indices):
            row = np.ones(m)
            for j, e in enumerate(exps):
                if e:
                    row = row * pw[j][e]
            psi[k] = row
        return psi

    def to_dict(self):
        return {"dim": self.dim, "max_degree": self.max_degree,
                "multi_indices": [list(e) for e in self.multi_indices]}

    @classmethod
    def from_dict(cls, data):
        d = cls(int(data["dim"]), int(data["max_degree"]))
        stored = data.get("multi_indices")
        if stored is not None:
            if [list(e) for e in d.multi_indices] != [list(e) for e in stored]:
                raise DictionaryError("stored multi-index list does not match "
                                      "the graded-lexicographic ordering")
        return d


# ---------------------------------------------------------------------------
# sparse polynomial arithmetic (dict of exponent tuple -> coefficient)

def poly_add(p, q, scale=1.0):
    """p + scale * q, in place on a copy of p."""
    out = dict(p)
    for e, c in q.items():
        out[e] = out.get(e, 0.0) + scale * c
    return out

def poly_scale(p, s):
    return {e: s * c for e, c in p.items()}

def poly_mul(p, q):
    out = {}
    for ep, cp in p.items():
        for eq, cq in q.items():
            e = tuple(a + b for a, b in zip(ep, eq))
            out[e] = out.get(e, 0.0) + cp * cq
    return out

def poly_shift(p, coord, dim):
    """Multiply a polynomial by the monomial x_coord."""
    out = {}
    for e, c in p.items():
        e2 = list(e)
        e2[coord] += 1
        out[tuple(e2)] = c
    return out

def poly_eval(p, x):
    total = 0.0
    for e, c in p.items():
        term = c
        for j, k in enumerate(e):
            if k:
                term *= x[j] ** k
        total += term
    return total


def falling_factorial_poly(coord, order, population_size, dim):
    """Polynomial form of N^{-a} C(x*N, a) in the frequency coordinate.

    Equals prod_{r<a} (c - r/N) / a!, which keeps the 1/N correction terms
    of the binomial combination counts exactly.
    """
    p = {tuple(0 for _ in range(dim)): 1.0}
    unit = [0] * dim
    unit[coord] = 1
    mono = {tuple(unit): 1.0}
    for r in range(order):
        shifted = poly_add(mono, {tuple(0 for _ in range(dim)): 1.0},
                           scale=-r / population_size)
        p = poly_mul(p, shifted)
    return poly_scale(p, 1.0 / math.factorial(order))


def eliminate_simplex_coordinate(p, coord, block, dim):
    """Substitute x_coord = 1 - sum of the other coordinates in ``block``.

    ``block`` is the set of coordinate indices sharing the conservation law.
    The result still lives on ``dim`` coordinates with exponent 0 at ``coord``.
    """
    rest = {tuple(0 for _ in range(dim)): 1.0}
    for j in block:
        if j != coord:
            unit = [0] * dim
            unit[j] = 1
            rest = poly_add(rest, {tuple(unit): 1.0}, scale=-1.0)
    out = {}
    for e, c in p.items():
        term = {tuple(0 if j == coord else v for j, v in enumerate(e)): c}
        for _ in range(e[coord]):
            term = poly_mul(term, rest)
        for e2, c2 in term.items():
            out[e2] = out.get(e2, 0.0) + c2
    return out


def drop_coordinates(p, coords):
    """Remove coordinates (which must not appear) from the exponent tuples."""
    drop = set(coords)
    out = {}
    for e, c in p.items():
        if any(e[j] for j in drop):
            raise ValueError("cannot drop a coordinate that still appears")
        out[tuple(v for j, v in enumerate(e) if j not in drop)] = c
    return out


def project_poly(p, dictionary, on_overflow="error"):
    """Coefficient vector of a polynomial over the dictionary.

    ``on_overflow`` controls terms outside the dictionary: "error" raises a
    DictionaryError naming the missing multi-index, "truncate" drops them.
    Returns (coefficients, dropped_norm).
    """
    vec = np.zeros(dictionary.size)
    dropped = 0.0
    for e, c in p.items():
        if c == 0.0:
            continue
        try:
            vec[dictionary.index_of(e)] = c
        except DictionaryError:
            if on_overflow == "truncate":
                dropped += c * c
            else:
                raise
    return vec, math.sqrt(dropped)


@dataclass
class PolynomialField:
    """A vector of polynomials sharing one dictionary.

    ``coefficients`` has one row per output component and one column per
    dictionary entry.
    """

    dictionary: MonomialDictionary
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.atleast_2d(np.asarray(self.coefficients, float))
        if self.coefficients.shape[1] != self.dictionary.size:
            raise ValueError("coefficient columns must match dictionary size")

    @property
    def num_outputs(self):
        return self.coefficients.shape[0]

    def __call__(self, x):
        return self.coefficients @ self.dictionary.evaluate(x)

    def evaluate_many(self, points):
        """Shape (n_out, m) values at points of shape (m, dim)."""
        return self.coefficients @ self.dictionary.evaluate_many(points)

    def component(self, i):
        """Sparse-dict form of output component i."""
        out = {}
        for k, c in enumerate(self.coefficients[i]):
            if c != 0.0:
                out[self.dictionary.multi_indices[k]] = c
        return out

    def derivative(self, i, coord):
        """Coefficient vector of d(component i)/dx_coord over the dictionary."""
        out = np.zeros(self.dictionary.size)
        for k, c in enumerate(self.coefficients[i]):
            e = self.dictionary.multi_indices[k]
            if c != 0.0 and e[coord]:
                e2 = list(e)
                e2[coord] -= 1
                out[self.dictionary.index_of(e2)] += c * e[coord]
        return out

    @classmethod
    def from_polys(cls, dictionary, polys, on_overflow="error"):
        coeffs = np.zeros((len(polys), dictionary.size))
        for i, p in enumerate(polys):
            coeffs[i], _ = project_poly(p, dictionary, on_overflow)
        return cls(dictionary, coeffs)


def fields_from_rule_terms(terms, dim, population_size, dictionary,
                           reduce_blocks=None):
    """Assemble drift/diffusion fields from polynomial transition terms.

    ``terms`` is a list of (propensity_poly, net_change_vector) pairs in the
    ``dim``-dimensional frequency coordinates.  Drift is the propensity-
    weighted sum of net changes; the diffusion matrix a = sigma sigma^T gets
    the extra 1/population_size factor of the noise amplitudes.

    With ``reduce_blocks`` (a list of coordinate-index lists, each summing to
    one), the last coordinate of every block is eliminated and dropped, and
    the returned fields live on the remaining coordinates.

    Returns (drift, diffusion) where diffusion rows are the upper triangle
    (i <= j) of a in row-major pair order.
    """
    zero = {}
    drift = [dict(zero) for _ in range(dim)]
    diff = [[dict(zero) for _ in range(dim)] for _ in range(dim)]
    for prop, nu in terms:
        for i in range(dim):
            if nu[i]:
                drift[i] = poly_add(drift[i], prop, scale=float(nu[i]))
            for j in range(i, dim):
                if nu[i] and nu[j]:
                    diff[i][j] = poly_add(
                        diff[i][j], prop,
                        scale=float(nu[i] * nu[j]) / population_size)

    keep = list(range(dim))
    if reduce_blocks:
        dropped = [block[-1] for block in reduce_blocks]
        for block in reduce_blocks:
            last = block[-1]
            drift = [eliminate_simplex_coordinate(p, last, block, dim)
                     for p in drift]
            diff = [[eliminate_simplex_coordinate(p, last, block, dim)
                     for p in row] for row in diff]
        keep = [i for i in range(dim) if i not in dropped]
        drift = [drop_coordinates(drift[i], dropped) for i in keep]
        diff = [[drop_coordinates(diff[min(i, j)][max(i, j)], dropped)
                 for j in keep] for i in keep]
    else:
        diff = [[diff[min(i, j)][max(i, j)] for j in keep] for i in keep]
        drift = [drift[i] for i in keep]

    d_red = len(keep)
    if dictionary.dim != d_red:
        raise DictionaryError(
            f"dictionary has {dictionary.dim} coordinates but the "
            f"{'reduced ' if reduce_blocks else ''}model has {d_red}")
    drift_field = PolynomialField.from_polys(dictionary, drift)
    pairs = [(i, j) for i in range(d_red) for j in range(i, d_red)]
    diff_field = PolynomialField.from_polys(
        dictionary, [diff[i][j] for i, j in pairs])
    return drift_field, diff_field
