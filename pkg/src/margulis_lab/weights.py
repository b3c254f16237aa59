"""Weight-space machinery for the representations used by the lab.

Covers the adjoint representation, exterior powers of the standard
representation (the building blocks of the height functions), and the
adjoint representation of a product group restricted to the invariant
complement of a diagonal subalgebra.  On top of the decompositions this
module provides the unipotent polynomial expansion, the positive-weight
anchor search, and the contraction averages of the diagonal flow.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import liecore as lc
from .errors import AnchorNotFound, BadDelta, NotFoundWithinHorizon, ZeroVector
from .estimates import AveragingEstimate


class Representation:
    """Common interface: a linear G-action on R^dim in a fixed basis.

    The basis is chosen so that the representation matrix of any element
    of the diagonal flow is diagonal, and so that the basis is orthonormal
    for the norm the representation carries.  Reducible representations
    split into irreducible components and use the max norm across them;
    irreducible ones use the plain Euclidean norm of the coordinates.
    """

    kind = "abstract"

    @property
    def dim(self):
        raise NotImplementedError

    def matrix(self, g):
        raise NotImplementedError

    def matrix_many(self, blocks):
        """Representation matrices for a batch of elements.

        `blocks` is the per-factor list of (N, n, n) arrays as produced by
        `HorosphericalChart.exp_coords_many`.
        """
        raise NotImplementedError

    def flow_weights(self, a):
        """Diagonal of log rep(a_1) in the representation basis."""
        raise NotImplementedError

    @property
    def components(self):
        """Index slices of the irreducible components."""
        return (np.arange(self.dim),)

    def apply(self, g, vec):
        return self.matrix(g) @ np.asarray(vec, dtype=float)

    def coords(self, v):
        """Coerce a vector-like input (LieVector or array) to coordinates."""
        if isinstance(v, lc.LieVector):
            raise TypeError(f"{self.kind} representation does not accept LieVector input")
        vec = np.asarray(v, dtype=float)
        if vec.shape != (self.dim,):
            raise ValueError(f"expected coordinate vector of length {self.dim}")
        return vec

    def norms_many(self, vecs):
        """Norm along the last axis: max over components of Euclidean norms."""
        vecs = np.asarray(vecs, dtype=float)
        comps = self.components
        if len(comps) == 1:
            return np.linalg.norm(vecs, axis=-1)
        per = [np.linalg.norm(vecs[..., idx], axis=-1) for idx in comps]
        return np.max(np.stack(per, axis=0), axis=0)

    def norm(self, vec):
        return float(self.norms_many(self.coords(vec)))


class AdjointRep(Representation):
    """Adjoint action of G on its Lie algebra, in an orthonormal basis."""

    kind = "adjoint"

    def __init__(self, model):
        self.model = model
        self._basis = _orthonormal_lie_basis(model)
        self._comp = _factor_slices(model)

    @property
    def dim(self):
        return self.model.dim

    @property
    def components(self):
        return self._comp

    def basis_vector(self, k):
        return self._basis[k]

    def to_coords(self, v):
        return np.array([lc.inner_product(v, b) for b in self._basis])

    def from_coords(self, vec):
        out = lc.zero_vector(self.model)
        for c, b in zip(vec, self._basis):
            out = out + float(c) * b
        return out

    def coords(self, v):
        if isinstance(v, lc.LieVector):
            return self.to_coords(v)
        return super().coords(v)

    def matrix(self, g):
        cols = [self.to_coords(lc.adjoint(g, b)) for b in self._basis]
        return np.column_stack(cols)

    def matrix_many(self, blocks):
        model = self.model
        N = blocks[0].shape[0]
        out = np.zeros((N, self.dim, self.dim))
        inv = [np.linalg.inv(b) for b in blocks]
        for f in range(model.factors):
            idx = self._comp[f]
            B = np.stack([self._basis[k].blocks[f] for k in idx])
            conj = np.einsum("nab,kbc,ncd->nkad", blocks[f], B, inv[f])
            # coordinates of the conjugates: 2n tr(Y b^T)
            out[np.ix_(np.arange(N), idx, idx)] = (
                2.0 * model.n * np.einsum("nkab,lab->nlk", conj, B)
            )
        return out

    def flow_weights(self, a):
        out = np.zeros(self.dim)
        for k, b in enumerate(self._basis):
            la = a.log_a1()
            img = _bracket(la, b)
            coeff = lc.inner_product(img, b)  # basis vectors are ad(a)-eigen
            out[k] = coeff
        return out


def _bracket(x, y):
    return lc.LieVector(
        x.model, tuple(a @ b - b @ a for a, b in zip(x.blocks, y.blocks))
    )


def _orthonormal_lie_basis(model):
    basis = []
    n = model.n
    for f in range(model.factors):
        # traceless diagonal part, orthonormalized
        raw = [np.diag([1.0 if t == i else (-1.0 if t == i + 1 else 0.0) for t in range(n)])
               for i in range(n - 1)]
        ortho = []
        for m in raw:
            v = lc.LieVector(model, tuple(
                m.copy() if ff == f else np.zeros((n, n)) for ff in range(model.factors)
            ))
            for u in ortho:
                v = v - lc.inner_product(v, u) * u
            v = (1.0 / lc.norm(v)) * v
            ortho.append(v)
        basis.extend(ortho)
        scale = 1.0 / math.sqrt(2.0 * n)
        for i in range(n):
            for j in range(n):
                if i != j:
                    basis.append(scale * lc.elementary(model, f, i, j))
    return tuple(basis)


def _factor_slices(model):
    per = model.n * model.n - 1
    return tuple(np.arange(f * per, (f + 1) * per) for f in range(model.factors))


class ExteriorPowerRep(Representation):
    """k-th exterior power of the standard representation (one factor)."""

    kind = "exterior"

    def __init__(self, model, k):
        if model.factors != 1:
            raise ValueError("exterior powers are defined for single-factor models")
        if not 1 <= k <= model.n - 1:
            raise ValueError(f"exterior power degree must be in [1, {model.n - 1}]")
        self.model = model
        self.k = k
        self.subsets = tuple(itertools.combinations(range(model.n), k))

    @property
    def dim(self):
        return len(self.subsets)

    def matrix(self, g):
        return self._compound(g.blocks[0][None, :, :])[0]

    def matrix_many(self, blocks):
        return self._compound(blocks[0])

    def _compound(self, g):
        N = g.shape[0]
        m = self.dim
        out = np.empty((N, m, m))
        for a, I in enumerate(self.subsets):
            for b, J in enumerate(self.subsets):
                sub = g[np.ix_(np.arange(N), I, J)]
                if self.k == 1:
                    out[:, a, b] = sub[:, 0, 0]
                elif self.k == 2:
                    out[:, a, b] = sub[:, 0, 0] * sub[:, 1, 1] - sub[:, 0, 1] * sub[:, 1, 0]
                else:
                    out[:, a, b] = np.linalg.det(sub)
        return out

    def flow_weights(self, a):
        w = np.asarray(a.weights[0])
        return np.array([w[list(I)].sum() for I in self.subsets])

    def highest_vector(self):
        """Coordinates of e_1 ^ ... ^ e_k."""
        vec = np.zeros(self.dim)
        vec[self.subsets.index(tuple(range(self.k)))] = 1.0
        return vec


class RestrictionRep(AdjointRep):
    """Adjoint of SL2xSL2, with the complement of the diagonal exposed.

    Lie(G) splits as Lie(S) + V_S for the diagonally embedded SL2; V_S is
    the antidiagonal copy.  The G-action is the full adjoint one (two
    irreducible components, max norm); this class adds coordinates for
    the two summands.
    """

    kind = "restriction"

    def __init__(self, model):
        if model.tag != "SL2xSL2":
            raise ValueError("complement restriction is defined on SL2xSL2")
        super().__init__(model)
        unit = _orthonormal_lie_basis(lc.model_group("SL2"))
        s_basis, v_basis = [], []
        for b in unit:
            x = b.blocks[0]
            s_basis.append(lc.LieVector(model, (x / math.sqrt(2.0), x / math.sqrt(2.0))))
            v_basis.append(lc.LieVector(model, (x / math.sqrt(2.0), -x / math.sqrt(2.0))))
        self.s_basis = tuple(s_basis)
        self.v_s_basis = tuple(v_basis)
        self.v_s_coords = np.column_stack([self.to_coords(v) for v in v_basis])
        self.s_coords = np.column_stack([self.to_coords(v) for v in s_basis])

    def complement_vector(self, cs):
        """LieVector in V_S from its 3 orthonormal coordinates."""
        return self.from_coords(self.v_s_coords @ np.asarray(cs, dtype=float))

    def project_complement(self, v):
        """Orthogonal V_S-coordinates of a LieVector."""
        return self.v_s_coords.T @ self.to_coords(v)


class FactorRep(Representation):
    """A representation of one factor, viewed as a representation of G."""

    kind = "factor"

    def __init__(self, model, factor, inner):
        self.model = model
        self.factor = factor
        self.inner = inner

    @property
    def dim(self):
        return self.inner.dim

    def matrix(self, g):
        single = lc.GroupElement(self.inner.model, (g.blocks[self.factor],))
        return self.inner.matrix(single)

    def matrix_many(self, blocks):
        return self.inner.matrix_many([blocks[self.factor]])

    def flow_weights(self, a):
        inner_flow = lc.OneParamDiagonal(self.inner.model,
                                         (a.weights[self.factor],))
        return self.inner.flow_weights(inner_flow)


def height_channel_reps(model):
    """The exterior-power representations behind the height summands."""
    if model.factors == 1:
        return [exterior_power_rep(model, k) for k in range(1, model.n)]
    single = lc.model_group("SL2")
    return [FactorRep(model, f, exterior_power_rep(single, 1))
            for f in range(model.factors)]


def adjoint_rep(model):
    return AdjointRep(model)


def exterior_power_rep(model, k):
    return ExteriorPowerRep(model, k)


def restriction_rep(model):
    return RestrictionRep(model)


# -- weight decomposition -----------------------------------------------------

@dataclass(frozen=True)
class WeightSpace:
    beta: float
    vectors: np.ndarray  # dim x multiplicity, orthonormal columns


@dataclass(frozen=True)
class WeightDecomposition:
    rep: Representation
    flow: lc.OneParamDiagonal
    entries: tuple

    @property
    def weights(self):
        return [e.beta for e in self.entries]

    def multiplicities(self):
        return [e.vectors.shape[1] for e in self.entries]

    def project(self, vec, entry):
        V = entry.vectors
        return V @ (V.T @ vec)

    def coefficients(self, vec):
        """Per-entry coefficient arrays of vec in the weight basis."""
        return [e.vectors.T @ vec for e in self.entries]

    def reconstruct(self, coeffs):
        out = np.zeros(self.rep.dim)
        for e, c in zip(self.entries, coeffs):
            out += e.vectors @ c
        return out


def weight_decompose(rep, a, rel_tol=1e-8):
    """Eigen-decomposition of rep(a_1), grouped into weight spaces.

    Eigenvalues are clustered with relative tolerance `rel_tol`; weights
    are reported as logarithms and sorted ascending.
    """
    M = rep.matrix(a.element(1.0))
    M = (M + M.T) / 2.0
    evals, evecs = np.linalg.eigh(M)
    logs = np.log(evals)
    order = np.argsort(logs, kind="stable")
    logs, evecs = logs[order], evecs[:, order]
    entries = []
    start = 0
    for i in range(1, len(logs) + 1):
        if i == len(logs) or abs(logs[i] - logs[start]) > rel_tol * max(1.0, abs(logs[start])):
            beta = float(np.mean(logs[start:i]))
            block = evecs[:, start:i]
            # re-orthonormalize within the cluster for safety
            q, _ = np.linalg.qr(block)
            q.flags.writeable = False
            entries.append(WeightSpace(beta, q))
            start = i
    dec = WeightDecomposition(rep, a, tuple(entries))
    assert sum(dec.multiplicities()) == rep.dim
    return dec


# -- unipotent expansion and the anchor search --------------------------------

@dataclass(frozen=True)
class UnipotentExpansion:
    """Polynomial coefficient map u -> (f_{beta,j}(u)) for a fixed vector.

    `degree` is the exact polynomial degree bound coming from the
    nilpotency order of the represented chart generators.
    """

    rep: Representation
    v: np.ndarray
    chart: lc.HorosphericalChart
    decomposition: WeightDecomposition
    degree: int

    def coefficients(self, u_coords):
        return evaluate_expansion(self.rep, self.v, self.chart, u_coords,
                                  decomposition=self.decomposition)

    def reconstruct(self, u_coords):
        return self.decomposition.reconstruct(self.coefficients(u_coords))


def unipotent_expansion(rep, v, chart, decomposition=None):
    vec = rep.coords(v)
    if not np.any(vec):
        raise ZeroVector("expansion of the zero vector")
    dec = decomposition or weight_decompose(rep, chart.flow)
    # degree bound: nilpotency order of a generic represented chart element
    generic = chart.lie(np.arange(1.0, chart.d_U + 1.0))
    N = _rep_lie_matrix(rep, generic)
    deg, p = 0, np.eye(rep.dim)
    while True:
        p = p @ N
        if np.allclose(p, 0.0, atol=1e-12):
            break
        deg += 1
    return UnipotentExpansion(rep, vec, chart, dec, deg)


def _rep_lie_matrix(rep, v):
    """Derived representation of a Lie vector, by nilpotent log trick."""
    g = lc.exp_map(v)
    M = rep.matrix(g)
    # rep of exp(v) is unipotent when v is nilpotent; take its exact log
    X = M - np.eye(rep.dim)
    out = np.zeros_like(M)
    term = np.eye(rep.dim)
    for j in range(1, rep.dim + 1):
        term = term @ X
        if np.allclose(term, 0.0, atol=1e-14):
            break
        out += ((-1.0) ** (j + 1) / j) * term
    return out


def evaluate_expansion(rep, v, chart, u_coords, decomposition=None):
    """Weight-basis coefficients of rep(exp(sum u_j b_j)) v."""
    vec = rep.coords(v)
    if not np.any(vec):
        raise ZeroVector("expansion of the zero vector")
    dec = decomposition or weight_decompose(rep, chart.flow)
    img = rep.apply(chart.exp_coords(u_coords), vec)
    return dec.coefficients(img)


def anchor_check(rep, v, chart, r, decomposition=None, grid_points=33):
    """Locate a positive-weight coefficient with positive sup over B_r^U.

    The sup is estimated on a dense coordinate grid (grid_points per
    axis, cube intersected with the ball); the coefficients are
    polynomials of low degree, so the grid estimate is reliable.  Raises
    AnchorNotFound when every positive-weight coefficient stays below
    1e-9 in absolute value, which violates the expansion hypotheses for
    valid inputs.
    """
    if r <= 0:
        raise ValueError("anchor search radius must be positive")
    vec = rep.coords(v)
    if not np.any(vec):
        raise ZeroVector("anchor search for the zero vector")
    dec = decomposition or weight_decompose(rep, chart.flow)
    axes = [np.linspace(-r, r, grid_points)] * chart.d_U
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, chart.d_U)
    grid = grid[np.einsum("ij,ij->i", grid, grid) <= r * r + 1e-12]
    blocks = chart.exp_coords_many(grid)
    mats = rep.matrix_many(blocks)
    images = mats @ vec
    best = None
    for e in dec.entries:
        if e.beta <= 1e-12:
            continue
        sups = np.abs(images @ e.vectors).max(axis=0)
        j = int(np.argmax(sups))
        if best is None or sups[j] > best[2]:
            best = (e.beta, j, float(sups[j]))
    if best is None or best[2] < 1e-9:
        raise AnchorNotFound(
            "no positive-weight component with positive sup "
            f"(best {0.0 if best is None else best[2]:.3g})"
        )
    return best


# -- contraction averages ------------------------------------------------------

def _norm_values(rep, images, beta, t, delta):
    scaled = images * np.exp(t * beta)[None, :]
    return rep.norms_many(scaled) ** (-delta)


def _gauss_cache(order):
    from scipy.special import roots_legendre

    if order not in _gauss_cache.store:
        _gauss_cache.store[order] = roots_legendre(order)
    return _gauss_cache.store[order]


_gauss_cache.store = {}


def _adaptive_line_average(values_at, r, tol, max_depth=48):
    """Adaptive Gauss mean of a vector-valued integrand over [-r, r].

    `values_at(s)` takes an array of abscissas and returns an (N, S)
    array.  Segments are bisected until the 32-vs-16-point discrepancy,
    summed over segments, is below tol for every column.  Returns
    (means, errors), each of shape (S,).  Deterministic: the segment
    queue is processed in a fixed order.
    """
    x_hi, w_hi = _gauss_cache(32)
    x_lo, w_lo = _gauss_cache(16)

    def seg(a, b):
        mid, half = (a + b) / 2.0, (b - a) / 2.0
        f_hi = values_at(mid + half * x_hi)
        f_lo = values_at(mid + half * x_lo)
        hi = half * np.tensordot(w_hi, f_hi, axes=(0, 0))
        lo = half * np.tensordot(w_lo, f_lo, axes=(0, 0))
        return hi, np.abs(hi - lo)

    hi0, d0 = seg(-r, r)
    stack = [(-r, r, 0, hi0, d0)]
    total = np.zeros_like(hi0)
    err = np.zeros_like(hi0)
    while stack:
        a, b, depth, hi, d = stack.pop()
        if depth >= max_depth or float(d.max()) <= tol * (b - a) / (2.0 * r):
            total += hi
            err += d
            continue
        m = (a + b) / 2.0
        h1, d1 = seg(a, m)
        h2, d2 = seg(m, b)
        stack.append((a, m, depth + 1, h1, d1))
        stack.append((m, b, depth + 1, h2, d2))
    return total / (2.0 * r), err / (2.0 * r)


def contraction_average(rep, v, a, chart, delta, t, r, spec=None):
    """Averaged inverse-power norm of the flowed representation orbit.

    Estimates the mean over the radius-r horospherical ball of
    ||rep(a_t u) v||^{-delta}, with a quadrature error proxy.  The output
    scales exactly like c^{-delta} under v -> c v.
    """
    if delta <= 0 or delta >= 1:
        raise BadDelta(f"delta must lie in (0, 1), got {delta}")
    vec = rep.coords(v)
    if not np.any(vec):
        raise ZeroVector("contraction average of the zero vector")
    spec = spec or lc.QuadratureSpec()
    beta = rep.flow_weights(a)
    rule = spec.resolve(chart.d_U)
    if rule == "gauss" and chart.d_U == 1:
        def values_at(s):
            mats = rep.matrix_many(chart.exp_coords_many(s[:, None]))
            return _norm_values(rep, mats @ vec, beta, t, delta)[:, None]

        means, errs = _adaptive_line_average(values_at, r, spec.tol)
        return AveragingEstimate(mean=float(means[0]), error=float(errs[0]),
                                 nodes=0, r=r, t=t)
    coords, wts = lc.ball_coords(chart.d_U, r, spec)
    mats = rep.matrix_many(chart.exp_coords_many(coords))
    vals = _norm_values(rep, mats @ vec, beta, t, delta)
    mean = float(np.dot(wts, vals) / wts.sum())
    if rule == "qmc":
        nb = min(spec.batches, len(wts))
        bm = [vals[i::nb].mean() for i in range(nb)]
        err = float(np.std(bm, ddof=1) / math.sqrt(nb)) if nb > 1 else 0.0
    else:
        cs = spec.coarse()
        c2, w2 = lc.ball_coords(chart.d_U, r, cs)
        m2 = rep.matrix_many(chart.exp_coords_many(c2))
        v2 = _norm_values(rep, m2 @ vec, beta, t, delta)
        err = abs(mean - float(np.dot(w2, v2) / w2.sum()))
    return AveragingEstimate(mean=mean, error=err, nodes=len(wts), r=r, t=t)


def sphere_sample(rep, count, seed, subspace=None):
    """Unit vectors (for the representation norm), reproducibly sampled.

    When `subspace` (a dim x m coordinate matrix) is given, the samples
    are drawn from that subspace; used for complements V_S.
    """
    rng = np.random.default_rng(seed)
    m = rep.dim if subspace is None else subspace.shape[1]
    raw = rng.standard_normal((count, m))
    if subspace is not None:
        raw = raw @ subspace.T
    norms = rep.norms_many(raw)
    return raw / norms[:, None]


@dataclass(frozen=True)
class ContractionTime:
    t: float
    max_ratio: float
    ratio_error: float
    delta: float
    c: float


def find_contraction_time(rep, a, chart, delta, c, sphere_samples=100, seed=0,
                          t_max=25.0, r=2.0, spec=None, subspace=None,
                          t_step=0.25):
    """Smallest grid time at which the contraction average beats c.

    Scans t = t_step, 2 t_step, ... up to t_max and returns the first t
    where max over sampled unit vectors of the averaged ratio drops below
    c.  Raises NotFoundWithinHorizon when the grid is exhausted, which
    signals that delta is too large for this representation.
    """
    if delta <= 0 or delta >= 1:
        raise BadDelta(f"delta must lie in (0, 1), got {delta}")
    if not 0 < c < 1:
        raise ValueError("target contraction factor must lie in (0, 1)")
    spec = spec or lc.QuadratureSpec()
    V = sphere_sample(rep, sphere_samples, seed, subspace=subspace).T  # dim x S
    beta = rep.flow_weights(a)
    coords, wts = lc.ball_coords(chart.d_U, r, spec)
    mats = rep.matrix_many(chart.exp_coords_many(coords))
    images = np.einsum("nij,js->nis", mats, V)
    wts_n = wts / wts.sum()
    rule = spec.resolve(chart.d_U)
    if rule == "gauss":
        cs = spec.coarse()
        c2, w2 = lc.ball_coords(chart.d_U, r, cs)
        m2 = rep.matrix_many(chart.exp_coords_many(c2))
        images2 = np.einsum("nij,js->nis", m2, V)
        w2_n = w2 / w2.sum()
    def precise_ratios(t):
        """Adaptive 1-D re-evaluation; only available on line charts."""
        def values_at(s):
            mats = rep.matrix_many(chart.exp_coords_many(s[:, None]))
            imgs = np.einsum("nij,js->nis", mats, V)
            scaled = imgs * np.exp(t * beta)[None, :, None]
            return rep.norms_many(np.swapaxes(scaled, 1, 2)) ** (-delta)

        return _adaptive_line_average(values_at, r, spec.tol)

    best = None
    t = t_step
    while t <= t_max + 1e-9:
        scaled = images * np.exp(t * beta)[None, :, None]
        vals = rep.norms_many(np.swapaxes(scaled, 1, 2)) ** (-delta)  # N x S
        means = wts_n @ vals
        ratio = float(means.max())
        if rule == "gauss":
            s2 = images2 * np.exp(t * beta)[None, :, None]
            v2 = w2_n @ (rep.norms_many(np.swapaxes(s2, 1, 2)) ** (-delta))
            err = float(np.abs(means - v2).max())
        else:
            nb = min(spec.batches, vals.shape[0])
            bm = np.stack([vals[i::nb].mean(axis=0) for i in range(nb)])
            err = float((np.std(bm, axis=0, ddof=1) / math.sqrt(nb)).max())
        if rule == "gauss" and chart.d_U == 1 and ratio < c:
            # confirm the grid hit with the adaptive integrator
            means, errs = precise_ratios(t)
            ratio, err = float(means.max()), float(errs.max())
        if best is None or ratio < best.max_ratio:
            best = ContractionTime(t, ratio, err, delta, c)
        if ratio < c:
            return ContractionTime(t, ratio, err, delta, c)
        t += t_step
    raise NotFoundWithinHorizon(t_max, best.max_ratio if best else None)
