"""Matrix realizations of the model groups and their Lie algebras.

Three model groups are supported: SL2 (rank one), SL3 (higher rank) and
SL2xSL2 (a product with a genuine intermediate-orbit situation).  Group
elements and Lie vectors are stored as tuples of per-factor dense
matrices.  The inner product on the Lie algebra is the positive form
``<X, Y> = -B(X, theta Y)`` built from the Killing form ``B`` and the
Cartan involution ``theta X = -X^T``; for sl(n) this comes out to
``2 n tr(X Y^T)`` per factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm as _scipy_expm
from scipy.linalg import logm as _scipy_logm
from scipy.special import roots_legendre
from scipy.stats import qmc as _qmc

from .errors import BadSpec, OutOfChart, TrivialU

_DET_TOL = 1e-10
_DET_RENORM = 1e-12
_TRACE_TOL = 1e-12


def _freeze(a):
    a = np.ascontiguousarray(np.asarray(a, dtype=float))
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ModelGroup:
    """One of the three model groups, as a product of SL(n) factors."""

    tag: str
    n: int
    factors: int

    @property
    def dim(self):
        """Dimension of the Lie algebra."""
        return self.factors * (self.n * self.n - 1)

    @property
    def sizes(self):
        return (self.n,) * self.factors


_MODELS = {
    "SL2": ModelGroup("SL2", 2, 1),
    "SL3": ModelGroup("SL3", 3, 1),
    "SL2xSL2": ModelGroup("SL2xSL2", 2, 2),
}


def model_group(tag):
    """Look up a model group by tag (SL2, SL3 or SL2xSL2)."""
    try:
        return _MODELS[tag]
    except KeyError:
        raise KeyError(f"unknown model tag {tag!r}; expected one of {sorted(_MODELS)}")


@dataclass(frozen=True)
class GroupElement:
    """Element of a model group: one unimodular matrix per factor."""

    model: ModelGroup
    blocks: tuple

    def __post_init__(self):
        blocks = []
        for b in self.blocks:
            b = np.asarray(b, dtype=float)
            d = np.linalg.det(b)
            if abs(d - 1.0) > _DET_RENORM:
                if abs(d - 1.0) > 0.5:
                    raise ValueError(f"matrix determinant {d} too far from 1")
                b = b / d ** (1.0 / b.shape[0])
            blocks.append(_freeze(b))
        object.__setattr__(self, "blocks", tuple(blocks))
        for b in self.blocks:
            assert abs(np.linalg.det(b) - 1.0) <= _DET_TOL

    def __mul__(self, other):
        if isinstance(other, GroupElement):
            return GroupElement(
                self.model, tuple(a @ b for a, b in zip(self.blocks, other.blocks))
            )
        return NotImplemented

    def inv(self):
        return GroupElement(self.model, tuple(np.linalg.inv(b) for b in self.blocks))

    def op_distance_to_identity(self):
        return max(
            np.linalg.norm(b - np.eye(b.shape[0]), 2) for b in self.blocks
        )


def identity(model):
    return GroupElement(model, tuple(np.eye(model.n) for _ in range(model.factors)))


@dataclass(frozen=True)
class LieVector:
    """Element of the Lie algebra: one traceless matrix per factor."""

    model: ModelGroup
    blocks: tuple

    def __post_init__(self):
        blocks = []
        for b in self.blocks:
            b = np.asarray(b, dtype=float)
            tr = np.trace(b)
            if abs(tr) > _TRACE_TOL:
                if abs(tr) > 1e-8:
                    raise ValueError(f"matrix trace {tr} not negligible")
                b = b - (tr / b.shape[0]) * np.eye(b.shape[0])
            blocks.append(_freeze(b))
        object.__setattr__(self, "blocks", tuple(blocks))

    def __add__(self, other):
        return LieVector(
            self.model, tuple(a + b for a, b in zip(self.blocks, other.blocks))
        )

    def __sub__(self, other):
        return LieVector(
            self.model, tuple(a - b for a, b in zip(self.blocks, other.blocks))
        )

    def __rmul__(self, c):
        return LieVector(self.model, tuple(float(c) * b for b in self.blocks))

    def __neg__(self):
        return (-1.0) * self


def lie_vector(model, blocks):
    return LieVector(model, tuple(blocks))


def zero_vector(model):
    return LieVector(model, tuple(np.zeros((model.n, model.n)) for _ in range(model.factors)))


def elementary(model, factor, i, j):
    """Root vector E_ij placed in one factor, zero elsewhere."""
    blocks = [np.zeros((model.n, model.n)) for _ in range(model.factors)]
    blocks[factor][i, j] = 1.0
    return LieVector(model, tuple(blocks))


def diagonal_vector(model, factor, entries):
    """Traceless diagonal vector placed in one factor."""
    entries = np.asarray(entries, dtype=float)
    blocks = [np.zeros((model.n, model.n)) for _ in range(model.factors)]
    blocks[factor] = np.diag(entries - entries.mean())
    return LieVector(model, tuple(blocks))


def inner_product(v, w):
    """Positive-definite form -B(X, theta Y): per factor 2 n tr(X Y^T)."""
    total = 0.0
    for a, b in zip(v.blocks, w.blocks):
        total += 2.0 * a.shape[0] * float(np.tensordot(a, b, axes=2))
    return total


def norm(v):
    return math.sqrt(max(inner_product(v, v), 0.0))


def adjoint(g, v):
    """Adjoint action Ad(g) v = g v g^{-1}, blockwise."""
    out = []
    for gb, vb in zip(g.blocks, v.blocks):
        out.append(gb @ vb @ np.linalg.inv(gb))
    return LieVector(g.model, tuple(out))


# -- exponential / logarithm -------------------------------------------------

def _nilpotency_order(b):
    """Smallest k with b^k == 0 exactly, or None if b is not nilpotent."""
    n = b.shape[0]
    p = b.copy()
    for k in range(1, n + 1):
        if not p.any():
            return k
        p = p @ b
    return None


def _expm_block(b):
    k = _nilpotency_order(b)
    if k is not None:
        # finite sum, exact on nilpotent input
        out = np.eye(b.shape[0])
        term = np.eye(b.shape[0])
        for j in range(1, k):
            term = term @ b / j
            out = out + term
        return out
    if b.shape[0] == 2:
        # traceless 2x2: b^2 = disc * I
        disc = -float(np.linalg.det(b))
        if disc > 1e-12:
            mu = math.sqrt(disc)
            return math.cosh(mu) * np.eye(2) + (math.sinh(mu) / mu) * b
        if disc < -1e-12:
            nu = math.sqrt(-disc)
            return math.cos(nu) * np.eye(2) + (math.sin(nu) / nu) * b
        c0 = 1.0 + disc / 2.0 + disc * disc / 24.0
        c1 = 1.0 + disc / 6.0 + disc * disc / 120.0
        return c0 * np.eye(2) + c1 * b
    return _scipy_expm(b)


def exp_map(v):
    """Matrix exponential per factor; exact finite sum on nilpotent input."""
    return GroupElement(v.model, tuple(_expm_block(b) for b in v.blocks))


_CHART_RADIUS = 0.5


def _logm_block(b):
    n = b.shape[0]
    gap = np.linalg.norm(b - np.eye(n), 2)
    if gap >= _CHART_RADIUS:
        raise OutOfChart(f"operator distance to identity {gap:.4g} >= {_CHART_RADIUS}")
    nil = _nilpotency_order(b - np.eye(n))
    if nil is not None:
        # unipotent: finite Mercator series
        x = b - np.eye(n)
        out = np.zeros_like(x)
        term = np.eye(n)
        for j in range(1, nil):
            term = term @ x
            out = out + ((-1.0) ** (j + 1) / j) * term
        return out
    if n == 2:
        # det = 1: log M = f(beta) (M - (tr/2) I), beta = tr/2 - 1
        half_tr = float(np.trace(b)) / 2.0
        beta = half_tr - 1.0
        if abs(beta) < 1e-6:
            f = 1.0 - beta / 3.0 + (2.0 / 15.0) * beta * beta
        elif beta > 0:
            f = math.acosh(half_tr) / math.sqrt(beta * (beta + 2.0))
        else:
            f = math.acos(half_tr) / math.sqrt(-beta * (beta + 2.0))
        return f * (b - half_tr * np.eye(2))
    out = _scipy_logm(b)
    out = np.real(out)
    return out - (np.trace(out) / n) * np.eye(n)


def log_map(g):
    """Inverse chart near the identity.

    Raises OutOfChart when any factor is at operator distance >= 0.5
    from the identity.
    """
    return LieVector(g.model, tuple(_logm_block(b) for b in g.blocks))


# -- one-parameter diagonal subgroups and horospherical charts ---------------

@dataclass(frozen=True)
class OneParamDiagonal:
    """a_t = exp(t diag(weights)) per factor; weights sum to zero."""

    model: ModelGroup
    weights: tuple

    def __post_init__(self):
        ws = tuple(tuple(float(x) for x in w) for w in self.weights)
        if len(ws) != self.model.factors:
            raise ValueError("one weight vector per factor required")
        for w in ws:
            if len(w) != self.model.n:
                raise ValueError("weight vector length must match matrix size")
            if abs(sum(w)) > 1e-12:
                raise ValueError("weights must sum to zero per factor")
        if not any(x > 0 for w in ws for x in w):
            raise ValueError("at least one strictly positive weight required")
        object.__setattr__(self, "weights", ws)

    def element(self, t):
        return GroupElement(
            self.model,
            tuple(np.diag(np.exp(t * np.asarray(w))) for w in self.weights),
        )

    def log_a1(self):
        return LieVector(self.model, tuple(np.diag(w) for w in self.weights))


def default_flow(model):
    """The standard diagonal flow used by the experiments."""
    if model.tag == "SL2":
        return OneParamDiagonal(model, ((1.0, -1.0),))
    if model.tag == "SL3":
        return OneParamDiagonal(model, ((1.0, 0.0, -1.0),))
    if model.tag == "SL2xSL2":
        return OneParamDiagonal(model, ((1.0, -1.0), (1.0, -1.0)))
    raise KeyError(model.tag)


@dataclass(frozen=True)
class HorosphericalChart:
    """Root-vector basis of Lie(U) with its Ad(a_t)-eigenvalues.

    Chart coordinates are Euclidean: the basis is declared orthonormal in
    the U-metric, which need not agree with the ambient form; ambient
    norms of combinations are available through `ambient_norm`.
    """

    flow: OneParamDiagonal
    basis: tuple
    weights: np.ndarray
    positions: tuple  # (factor, i, j) per basis vector

    @property
    def d_U(self):
        return len(self.basis)

    @property
    def model(self):
        return self.flow.model

    def lie(self, coords):
        coords = np.asarray(coords, dtype=float)
        blocks = [np.zeros((self.model.n, self.model.n)) for _ in range(self.model.factors)]
        for c, (f, i, j) in zip(coords, self.positions):
            blocks[f][i, j] += c
        return LieVector(self.model, tuple(blocks))

    def exp_coords(self, coords):
        return exp_map(self.lie(coords))

    def exp_coords_many(self, coords):
        """Vectorized exp over an (N, d_U) coordinate array.

        Returns one (N, n, n) array per factor.  The generators are
        nilpotent, so the truncated series is exact.
        """
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        n, N = self.model.n, coords.shape[0]
        out = []
        for f in range(self.model.factors):
            X = np.zeros((N, n, n))
            for k, (ff, i, j) in enumerate(self.positions):
                if ff == f:
                    X[:, i, j] += coords[:, k]
            E = np.broadcast_to(np.eye(n), (N, n, n)).copy()
            term = E.copy()
            for j in range(1, n):
                term = np.einsum("nij,njk->nik", term, X) / j
                E += term
            out.append(E)
        return out

    def log_coords(self, u):
        """Chart coordinates of a unipotent element of U.

        The logarithm of a unipotent matrix is a finite sum, globally
        defined; no chart-radius restriction applies here.
        """
        out = np.empty(self.d_U)
        logs = []
        for b in u.blocks:
            n = b.shape[0]
            x = b - np.eye(n)
            acc = np.zeros_like(x)
            term = np.eye(n)
            for j in range(1, n):
                term = term @ x
                acc = acc + ((-1.0) ** (j + 1) / j) * term
            logs.append(acc)
        for k, (f, i, j) in enumerate(self.positions):
            out[k] = logs[f][i, j]
        return out

    def ambient_norm(self, coords):
        return norm(self.lie(coords))


def horospherical_chart(a):
    """Basis of the expanding horospherical algebra of the flow a.

    The basis vectors are the elementary root vectors with strictly
    positive Ad(log a_1)-eigenvalue, sorted by ascending weight; they are
    exact eigenvectors of Ad(a_t).
    """
    entries = []
    for f, w in enumerate(a.weights):
        for i in range(a.model.n):
            for j in range(a.model.n):
                if i == j:
                    continue
                lam = w[i] - w[j]
                if lam > 1e-12:
                    entries.append((lam, f, i, j))
    if not entries:
        raise TrivialU("flow has no expanding directions")
    entries.sort(key=lambda e: (e[0], e[1], e[2], e[3]))
    basis = tuple(elementary(a.model, f, i, j) for _, f, i, j in entries)
    weights = np.array([e[0] for e in entries])
    weights.flags.writeable = False
    positions = tuple((f, i, j) for _, f, i, j in entries)
    chart = HorosphericalChart(a, basis, weights, positions)
    # eigenvector sanity: Ad(a_1) b = e^{lambda} b to 1e-10
    a1 = a.element(1.0)
    for lam, b in zip(weights, basis):
        img = adjoint(a1, b)
        diff = img - math.exp(lam) * b
        assert norm(diff) <= 1e-10 * max(1.0, math.exp(lam))
    return chart


# -- quadrature over horospherical balls -------------------------------------

@dataclass(frozen=True)
class QuadratureSpec:
    """How to integrate over a coordinate ball in Lie(U).

    rule "auto" selects tensor Gauss-Legendre for d_U <= 2 and a
    scrambled Sobol sequence for d_U = 3.  `order` is the per-axis
    Gauss order, `samples` the QMC node count, `batches` the number of
    consecutive blocks used for standard-error estimates.
    """

    rule: str = "auto"
    order: int = 64
    samples: int = 4096
    seed: int = 0
    batches: int = 16
    tol: float = 5e-7

    def resolve(self, d):
        if self.rule == "auto":
            return "gauss" if d <= 2 else "qmc"
        return self.rule

    def coarse(self):
        return QuadratureSpec(self.rule, max(2, self.order // 2), self.samples,
                              self.seed, self.batches, self.tol)


def ball_coords(d, r, spec):
    """Nodes and weights for the radius-r coordinate ball in R^d.

    Weights sum to r^d, the ball mass under the normalization that gives
    the unit ball mass one.
    """
    if r <= 0:
        raise BadSpec("ball radius must be positive")
    rule = spec.resolve(d)
    if rule == "gauss":
        if spec.order < 1:
            raise BadSpec("gauss order must be >= 1")
        if d == 1:
            x, w = roots_legendre(spec.order)
            return (r * x)[:, None], r * w / 2.0
        if d == 2:
            x, w = roots_legendre(spec.order)
            rho = r * (x + 1.0) / 2.0
            wr = r * w / 2.0
            n_th = 2 * spec.order
            theta = 2.0 * np.pi * np.arange(n_th) / n_th
            wt = 2.0 * np.pi / n_th
            R, T = np.meshgrid(rho, theta, indexing="ij")
            coords = np.stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()], axis=1)
            weights = ((wr * rho)[:, None] * wt / np.pi * np.ones(n_th)[None, :]).ravel()
            return coords, weights
        if d == 3:
            x, w = roots_legendre(spec.order)
            rho = r * (x + 1.0) / 2.0
            wr = r * w / 2.0
            cz, wz = roots_legendre(max(4, spec.order // 2))
            n_th = max(8, spec.order)
            theta = 2.0 * np.pi * np.arange(n_th) / n_th
            wt = 2.0 * np.pi / n_th
            sz = np.sqrt(np.maximum(0.0, 1.0 - cz * cz))
            R, Z, T = np.meshgrid(rho, cz, theta, indexing="ij")
            S = np.sqrt(np.maximum(0.0, 1.0 - Z * Z))
            coords = np.stack(
                [(R * S * np.cos(T)).ravel(), (R * S * np.sin(T)).ravel(), (R * Z).ravel()],
                axis=1,
            )
            weights = (
                (wr * rho * rho)[:, None, None]
                * wz[None, :, None]
                * (wt * np.ones(n_th))[None, None, :]
            ).ravel() / (4.0 * np.pi / 3.0)
            return coords, weights
        raise BadSpec(f"gauss rule not provided for d_U = {d}")
    if rule == "qmc":
        if spec.samples < 1:
            raise BadSpec("qmc sample count must be >= 1")
        target = spec.samples
        vol_ratio = _unit_ball_volume(d) / 2.0 ** d
        m = max(4, math.ceil(math.log2(target / vol_ratio * 1.3)))
        sob = _qmc.Sobol(d, scramble=True, seed=spec.seed)
        accepted = np.empty((0, d))
        while accepted.shape[0] < target:
            pts = 2.0 * sob.random(2 ** m) - 1.0
            keep = np.einsum("ij,ij->i", pts, pts) <= 1.0
            accepted = np.vstack([accepted, pts[keep]])
            m = max(2, m - 1)  # top-up draws if acceptance fell short
        coords = r * accepted[:target]
        weights = np.full(target, r ** d / target)
        return coords, weights
    raise BadSpec(f"unknown quadrature rule {rule!r}")


def _unit_ball_volume(d):
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def ball_nodes(chart, r, spec):
    """Quadrature nodes (u_i, w_i) on B_r^U; weights sum to r^{d_U}."""
    coords, weights = ball_coords(chart.d_U, r, spec)
    if len(weights) == 0:
        raise BadSpec("empty quadrature rule")
    nodes = [(chart.exp_coords(c), float(w)) for c, w in zip(coords, weights)]
    return nodes
