"""Generator identification over monomial dictionaries.

From pointwise drift/diffusion estimates the generator action on every
basis function is assembled,

    dpsi_k(x) = sum_i b_i dpsi_k/dx_i + 1/2 sum_ij a_ij d2psi_k/dx_i dx_j,

and the matrix M minimizing ||dPsi - M Psi||_F is solved for in the least-
squares sense; L = M^T is the empirical generator matrix.  The drift is read
off the columns belonging to the coordinate monomials; the diffusion follows
from the columns of the quadratic monomials after removing the drift
products.  Rate-constant reconstruction inverts the coefficient map of the
reduced three-type voter model.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import yaml

from .dictionary import (DictionaryError, MonomialDictionary, PolynomialField,
                         poly_add, poly_mul, project_poly)


class ContractError(ValueError):
    """Inputs violate an interface contract (dimension or dictionary)."""


@lru_cache(maxsize=32)
def _derivative_ops(dim, max_degree):
    """First-derivative matrices D[i] with dpsi_k/dx_i = sum_l D[i][k,l] psi_l."""
    dictionary = MonomialDictionary(dim, max_degree)
    n = dictionary.size
    ops = []
    for i in range(dim):
        D = np.zeros((n, n))
        for k, e in enumerate(dictionary.multi_indices):
            if e[i]:
                e2 = list(e)
                e2[i] -= 1
                D[k, dictionary.index_of(e2)] = e[i]
        ops.append(D)
    return ops


def eval_dictionary(dictionary, x):
    """Basis function values psi(x), the constant first."""
    return dictionary.evaluate(x)


def apply_generator_to_dictionary(dictionary, x, b, a):
    """Generator action values dpsi(x) for pointwise drift b and diffusion a."""
    b = np.asarray(b, dtype=float)
    a = np.asarray(a, dtype=float)
    d = dictionary.dim
    if b.shape != (d,) or a.shape != (d, d):
        raise ValueError("drift/diffusion dimensions do not match")
    if not np.allclose(a, a.T):
        raise ValueError("diffusion matrix must be symmetric")
    psi = dictionary.evaluate(x)
    ops = _derivative_ops(dictionary.dim, dictionary.max_degree)
    out = np.zeros_like(psi)
    for i in range(d):
        first = ops[i] @ psi
        out += b[i] * first
        for j in range(d):
            if a[i, j] != 0.0:
                out += 0.5 * a[i, j] * (ops[j] @ (ops[i] @ psi))
    return out


@dataclass
class GeneratorMatrix:
    """Fitted (or analytically constructed) generator matrix L = M^T."""

    dictionary: MonomialDictionary
    entries: np.ndarray
    rank: int = None
    rank_deficient: bool = False
    truncated_columns: dict = field(default_factory=dict)

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        n = self.dictionary.size
        if self.entries.shape != (n, n):
            raise ValueError("generator matrix must be n x n over the "
                             "dictionary")


def generator_from_fields(drift, diffusion_aa, on_overflow="truncate"):
    """Analytic generator matrix of a polynomial SDE on the drift's dictionary.

    Column k holds the expansion of the generator applied to the k-th basis
    monomial.  Images of high-degree monomials can leave the dictionary;
    those terms are dropped ("truncate", recorded per column) or raise
    ("error").
    """
    dictionary = drift.dictionary
    if diffusion_aa.dictionary != dictionary:
        raise ContractError("drift and diffusion must share a dictionary")
    d = dictionary.dim
    n = dictionary.size
    pair_row = {}
    idx = 0
    for i in range(d):
        for j in range(i, d):
            pair_row[(i, j)] = idx
            idx += 1
    if diffusion_aa.num_outputs != idx:
        raise ContractError("diffusion field must carry the upper-triangular "
                            "pair rows")
    b_polys = [drift.component(i) for i in range(d)]
    a_polys = {p: diffusion_aa.component(r) for p, r in pair_row.items()}

    entries = np.zeros((n, n))
    truncated = {}
    for col, e in enumerate(dictionary.multi_indices):
        image = {}
        for i in range(d):
            if e[i]:
                e2 = list(e)
                e2[i] -= 1
                image = poly_add(image,
                                 poly_mul(b_polys[i], {tuple(e2): float(e[i])}))
        for i in range(d):
            if e[i] >= 2:
                e2 = list(e)
                e2[i] -= 2
                image = poly_add(
                    image, poly_mul(a_polys[(i, i)],
                                    {tuple(e2): 0.5 * e[i] * (e[i] - 1)}))
            for j in range(i + 1, d):
                if e[i] and e[j]:
                    e2 = list(e)
                    e2[i] -= 1
                    e2[j] -= 1
                    image = poly_add(
                        image, poly_mul(a_polys[(i, j)],
                                        {tuple(e2): float(e[i] * e[j])}))
        vec, dropped = project_poly(image, dictionary, on_overflow)
        entries[:, col] = vec
        if dropped > 0.0:
            truncated[col] = dropped
    return GeneratorMatrix(dictionary, entries, rank=n,
                           truncated_columns=truncated)


def fit_generator(measurements, dictionary, rcond=1e-10):
    """Least-squares generator fit from pointwise estimates.

    Solves min ||dPsi - M Psi||_F by SVD pseudoinverse with a relative
    singular-value cutoff and returns L = M^T.  A rank-deficient data matrix
    is fitted anyway (minimum-norm) with the warning flag set.
    """
    if not measurements:
        raise ValueError("no measurements")
    n = dictionary.size
    m = len(measurements)
    if m < n:
        warnings.warn(f"only {m} measurements for {n} basis functions; "
                      "the fit is underdetermined", stacklevel=2)
    points = np.stack([ms.point for ms in measurements])
    if points.shape[1] != dictionary.dim:
        raise ContractError("measurement dimension does not match dictionary")
    psi = dictionary.evaluate_many(points)           # (n, m)
    ops = _derivative_ops(dictionary.dim, dictionary.max_degree)
    d = dictionary.dim
    bmat = np.stack([ms.drift_est for ms in measurements])        # (m, d)
    amat = np.stack([ms.diffusion_est for ms in measurements])    # (m, d, d)
    dpsi = np.zeros_like(psi)
    for i in range(d):
        first = ops[i] @ psi
        dpsi += first * bmat[:, i]
        for j in range(d):
            second = ops[j] @ first
            dpsi += 0.5 * second * amat[:, i, j]
    # L = M^T solves Psi^T L = dPsi^T in the least-squares sense
    L, _, rank, _ = np.linalg.lstsq(psi.T, dpsi.T, rcond=rcond)
    return GeneratorMatrix(dictionary, L, rank=int(rank),
                           rank_deficient=int(rank) < n)


def extract_drift(generator):
    """Drift polynomials: the L columns of the coordinate monomials."""
    dictionary = generator.dictionary
    cols = [generator.entries[:, dictionary.coordinate_index(i)]
            for i in range(dictionary.dim)]
    return PolynomialField(dictionary, np.stack(cols))


def extract_diffusion(generator, drift, on_overflow="truncate"):
    """Diffusion polynomials a_ij from the quadratic-monomial columns.

    a_ij = (L psi)(x) for psi = x_i x_j minus b_i x_j + b_j x_i (twice the
    product for i = j), with exact polynomial arithmetic.  Products of a
    degree-(max) drift with a coordinate overflow the dictionary; overflow
    terms are dropped by default or raise with on_overflow="error".
    Returns the upper-triangular pair rows in row-major order.
    """
    dictionary = generator.dictionary
    if drift.dictionary != dictionary:
        raise ContractError("drift dictionary does not match the generator")
    d = dictionary.dim
    rows = []
    for i in range(d):
        b_i = drift.component(i)
        for j in range(i, d):
            col = generator.entries[:, dictionary.pair_index(i, j)]
            image = {dictionary.multi_indices[k]: col[k]
                     for k in range(dictionary.size) if col[k] != 0.0}
            unit_j = [0] * d
            unit_j[j] = 1
            image = poly_add(image, poly_mul(b_i, {tuple(unit_j): 1.0}),
                             scale=-1.0)
            unit_i = [0] * d
            unit_i[i] = 1
            image = poly_add(image,
                             poly_mul(drift.component(j),
                                      {tuple(unit_i): 1.0}), scale=-1.0)
            vec, _ = project_poly(image, dictionary, on_overflow)
            rows.append(vec)
    return PolynomialField(dictionary, np.stack(rows))


def psd_sigma(a):
    """Positive-semidefinite square root via eigendecomposition.

    Negative eigenvalues are clipped to zero; returns (sigma, clipped) where
    sigma sigma^T reproduces the projected matrix and ``clipped`` is the
    total clipped eigenvalue mass.
    """
    a = np.asarray(a, dtype=float)
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    clipped = float(-w[w < 0].sum())
    w = np.clip(w, 0.0, None)
    return v * np.sqrt(w), clipped


def threshold_field(fld, threshold):
    """Zero all coefficients below threshold in absolute value."""
    coeffs = fld.coefficients.copy()
    coeffs[np.abs(coeffs) < threshold] = 0.0
    return PolynomialField(fld.dictionary, coeffs)


# --------------------------------------------------------------------------
# identified model container

@dataclass
class IdentifiedSde:
    """Polynomial drift and diffusion with the dictionary they live on.

    ``diffusion_aa`` holds the upper triangle of a(c) = sigma sigma^T in
    row-major (i, j) pair order.  ``population_size`` records the frequency
    scaling (1 for unscaled count coordinates).
    """

    dictionary: MonomialDictionary
    drift: PolynomialField
    diffusion_aa: PolynomialField
    population_size: int = 1
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        d = self.dictionary.dim
        if self.drift.num_outputs != d:
            raise ContractError("drift must have one row per coordinate")
        if self.diffusion_aa.num_outputs != d * (d + 1) // 2:
            raise ContractError("diffusion must carry the upper-triangular "
                                "pair rows")
        if (self.drift.dictionary != self.dictionary
                or self.diffusion_aa.dictionary != self.dictionary):
            raise ContractError("fields must share the model dictionary")

    @property
    def dim(self):
        return self.dictionary.dim

    @property
    def pairs(self):
        d = self.dim
        return [(i, j) for i in range(d) for j in range(i, d)]

    def drift_at(self, c):
        return self.drift(np.asarray(c, dtype=float))

    def diffusion_at(self, c):
        vals = self.diffusion_aa(np.asarray(c, dtype=float))
        d = self.dim
        a = np.empty((d, d))
        for (i, j), v in zip(self.pairs, vals):
            a[i, j] = a[j, i] = v
        return a

    def diffusion_at_many(self, points):
        vals = self.diffusion_aa.evaluate_many(points)   # (npairs, m)
        d = self.dim
        a = np.empty((points.shape[0], d, d))
        for (i, j), row in zip(self.pairs, vals):
            a[:, i, j] = row
            a[:, j, i] = row
        return a


def identify_sde(measurements, dictionary, population_size=1, rcond=1e-10,
                 coefficient_threshold=0.0, provenance=None):
    """Fit the generator and extract the governing equations in one go."""
    generator = fit_generator(measurements, dictionary, rcond=rcond)
    drift = extract_drift(generator)
    diffusion = extract_diffusion(generator, drift)
    if coefficient_threshold > 0.0:
        drift = threshold_field(drift, coefficient_threshold)
        diffusion = threshold_field(diffusion, coefficient_threshold)
    prov = dict(provenance or {})
    if measurements:
        prov.setdefault("m", len(measurements))
        prov.setdefault("k", int(measurements[0].sample_count))
        prov.setdefault("lag", float(measurements[0].lag))
    sde = IdentifiedSde(dictionary, drift, diffusion,
                        population_size=int(population_size), provenance=prov)
    return sde, generator


def analytic_sde(drift, diffusion_aa, population_size=1, provenance=None):
    return IdentifiedSde(drift.dictionary, drift, diffusion_aa,
                         population_size=int(population_size),
                         provenance=dict(provenance or {}))


def sufficient_degree(model):
    """Monomial degree sufficient for identification: transition order + 1."""
    return model.max_order + 1


# --------------------------------------------------------------------------
# rate-constant reconstruction for the reduced three-type voter model

@dataclass
class RateReconstruction:
    imitation: np.ndarray
    exploration: np.ndarray
    residual: float
    rank: int


_V_MONOMIALS = [(2, 0), (0, 2), (1, 1), (1, 0), (0, 1), (0, 0)]


def _coefficient_vector(sde):
    """v = (drift rows 1..2, N-rescaled diffusion rows 11, 12, 22)."""
    dictionary = sde.dictionary
    idx = [dictionary.index_of(e) for e in _V_MONOMIALS]
    parts = [sde.drift.coefficients[0][idx], sde.drift.coefficients[1][idx]]
    n_scale = float(sde.population_size)
    for row in range(3):
        parts.append(sde.diffusion_aa.coefficients[row][idx] * n_scale)
    return np.concatenate(parts)


@lru_cache(maxsize=1)
def _rate_design_matrix():
    """Columns: coefficient vectors of unit-rate transitions, via the limit SDE."""
    from .voter import VoterRates, evm_jump_model
    from .mjp import limit_sde
    dictionary = MonomialDictionary(2, 2)
    pairs = [(i, j) for i in range(3) for j in range(3) if i != j]
    cols = []
    for which in ("imitation", "exploration"):
        for (i, j) in pairs:
            imi = np.zeros((3, 3))
            exp = np.zeros((3, 3))
            (imi if which == "imitation" else exp)[i, j] = 1.0
            rates = VoterRates(imi, exp)
            model = evm_jump_model(rates, 1)
            drift, diff = limit_sde(model, dictionary)
            sde = IdentifiedSde(dictionary, drift, diff, population_size=1)
            cols.append(_coefficient_vector(sde))
    return np.stack(cols, axis=1)


def reconstruct_rates(sde):
    """Estimate the voter rate constants behind an identified reduced model.

    Solves the linear system mapping the twelve rate constants (six
    imitation, six exploration) to the drift and N-rescaled diffusion
    coefficients, in the minimum-norm least-squares sense.  The drift alone
    only pins rate differences; the diffusion contributes the sums, but with
    noisy input the system generally has no exact solution, hence the
    residual is reported.
    """
    if sde.dim != 2:
        raise ContractError("rate reconstruction expects the reduced "
                            "two-coordinate voter model")
    if sde.dictionary.max_degree < 2:
        raise ContractError("dictionary must contain the quadratic monomials")
    design = _rate_design_matrix()
    v = _coefficient_vector(sde)
    gamma, _, rank, _ = np.linalg.lstsq(design, v, rcond=None)
    residual = float(np.linalg.norm(design @ gamma - v))
    pairs = [(i, j) for i in range(3) for j in range(3) if i != j]
    imi = np.zeros((3, 3))
    exp = np.zeros((3, 3))
    for col, (i, j) in enumerate(pairs):
        imi[i, j] = gamma[col]
        exp[i, j] = gamma[6 + col]
    return RateReconstruction(imi, exp, residual, int(rank))


# --------------------------------------------------------------------------
# model persistence (bit-exact round trip)

class _ModelDumper(yaml.SafeDumper):
    pass


def _float_representer(dumper, value):
    if value != value:
        text = ".nan"
    elif value == float("inf"):
        text = ".inf"
    elif value == float("-inf"):
        text = "-.inf"
    else:
        text = repr(float(value))
        # PyYAML needs a dot in the mantissa to resolve scientific notation
        if "e" in text and "." not in text:
            text = text.replace("e", ".0e")
    return dumper.represent_scalar("tag:yaml.org,2002:float", text)


_ModelDumper.add_representer(float, _float_representer)

MODEL_SCHEMA = "abmreduce-model/1"


def model_to_dict(sde):
    return {
        "schema": MODEL_SCHEMA,
        "dictionary": sde.dictionary.to_dict(),
        "drift": [[float(v) for v in row] for row in sde.drift.coefficients],
        "diffusion_pairs": [[i, j] for i, j in sde.pairs],
        "diffusion": [[float(v) for v in row]
                      for row in sde.diffusion_aa.coefficients],
        "population_size": int(sde.population_size),
        "provenance": {k: (float(v) if isinstance(v, float) else v)
                       for k, v in sde.provenance.items()},
    }


def model_from_dict(data):
    if data.get("schema") != MODEL_SCHEMA:
        raise ContractError(f"unsupported model schema {data.get('schema')!r}")
    dictionary = MonomialDictionary.from_dict(data["dictionary"])
    drift = PolynomialField(dictionary, np.array(data["drift"], dtype=float))
    diffusion = PolynomialField(dictionary,
                                np.array(data["diffusion"], dtype=float))
    return IdentifiedSde(dictionary, drift, diffusion,
                         population_size=int(data["population_size"]),
                         provenance=dict(data.get("provenance") or {}))


def save_model(sde, path):
    with open(path, "w") as fh:
        yaml.dump(model_to_dict(sde), fh, Dumper=_ModelDumper,
                  sort_keys=False)


def load_model(path):
    with open(path) as fh:
        return model_from_dict(yaml.safe_load(fh))
