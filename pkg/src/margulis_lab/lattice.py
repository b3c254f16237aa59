"""Points of X = G/Gamma for Gamma = SL(n,Z) (and products).

A point is held as a coset representative together with lattice-reduction
data.  Reduction, covolume minima and the nearest-return search are all
performed in exact rational arithmetic on the float entries (every float
is a rational number), so the integer unimodular transforms are exact and
the pipeline survives the extreme dynamic ranges created by long diagonal
flows.  The height function is built from reciprocal minimal covolumes of
primitive sublattices, one summand per exterior power of the standard
lattice of each factor.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from itertools import combinations, product as iproduct

import numpy as np
from scipy.linalg import polar as _polar

from . import liecore as lc
from .errors import EnumerationOverflow, OutOfChart
from .estimates import AveragingEstimate

_LLL_DELTA = Fraction(99, 100)


# -- exact lattice reduction ---------------------------------------------------

def _dot(u, v):
    return sum(a * b for a, b in zip(u, v))


def _lll_int_columns(cols, delta_num=99, delta_den=100):
    """Exact LLL on integer columns; returns (reduced, U).

    U is the integer unimodular column transform: reduced = input @ U.
    Uses the all-integer Gram-Schmidt representation (the scaled vectors
    B*_i = d_{i-1} b*_i are integral and d_i = (B*_i . B*_i)/d_{i-1}),
    so every comparison is exact whatever the dynamic range.
    """
    n = len(cols)
    b = [list(c) for c in cols]
    U = [[1 if i == j else 0 for i in range(n)] for j in range(n)]  # U[j] = column j

    def gso():
        d = [1] * (n + 1)  # d[i+1] corresponds to d_i, d[0] = d_{-1} = 1
        bstar = []
        lam = [[0] * n for _ in range(n)]
        for i in range(n):
            v = list(b[i])
            for j in range(i):
                lam[i][j] = _dot(b[i], bstar[j])
                v = [(d[j + 1] * x - lam[i][j] * y) // d[j]
                     for x, y in zip(v, bstar[j])]
            bstar.append(v)
            d[i + 1] = _dot(v, v) // d[i]
            if d[i + 1] == 0:
                raise ValueError("linearly dependent lattice basis")
        return bstar, lam, d

    k = 1
    guard = 0
    while k < n:
        guard += 1
        if guard > 100000:
            raise RuntimeError("LLL failed to terminate")
        bstar, lam, d = gso()
        for j in range(k - 1, -1, -1):
            # mu_kj = lam_kj / d_j; reduce when |mu| > 1/2.  Size reduction
            # leaves the Gram-Schmidt data intact; only the lambda row of
            # the working vector changes.
            if 2 * abs(lam[k][j]) > d[j + 1]:
                q = (2 * lam[k][j] + d[j + 1]) // (2 * d[j + 1])
                b[k] = [x - q * y for x, y in zip(b[k], b[j])]
                U[k] = [x - q * y for x, y in zip(U[k], U[j])]
                lam[k][j] -= q * d[j + 1]
                for i in range(j):
                    lam[k][i] -= q * lam[j][i]
        # Lovasz condition, cleared of denominators:
        # den d_k d_{k-2} >= num d_{k-1}^2 - den lam^2
        lhs = delta_den * d[k + 1] * d[k - 1]
        rhs = delta_num * d[k] * d[k] - delta_den * lam[k][k - 1] ** 2
        if lhs >= rhs:
            k += 1
        else:
            b[k], b[k - 1] = b[k - 1], b[k]
            U[k], U[k - 1] = U[k - 1], U[k]
            k = max(k - 1, 1)
    return b, U


def _det_int(U):
    n = len(U)
    if n == 1:
        return U[0][0]
    if n == 2:
        return U[0][0] * U[1][1] - U[0][1] * U[1][0]
    # columns U[j]; expand along first row
    det = 0
    for j in range(n):
        minor = [[U[jj][ii] for jj in range(n) if jj != j] for ii in range(1, n)]
        sub = minor[0][0] * minor[1][1] - minor[0][1] * minor[1][0]
        det += (-1) ** j * U[j][0] * sub
    return det


def _normalize_signs(b, U):
    """Make the largest-magnitude entry of each column positive; det +1."""
    n = len(b)
    for j in range(n):
        col = b[j]
        lead = max(range(n), key=lambda i: (abs(col[i]), -i))
        if col[lead] < 0:
            b[j] = [-x for x in col]
            U[j] = [-x for x in U[j]]
    if _det_int(U) < 0:
        b[-1] = [-x for x in b[-1]]
        U[-1] = [-x for x in U[-1]]
    return b, U


def _scaled_integer_columns(mat):
    """Columns as exact integers over a common denominator.

    Every float is a dyadic rational, so the scaling is exact; exact
    Fraction entries are accepted as well.
    """
    a = np.asarray(mat, dtype=object)
    n = a.shape[0]
    fracs = [[a[i, j] if isinstance(a[i, j], Fraction) else Fraction(float(a[i, j]))
              for i in range(n)] for j in range(n)]
    den = 1
    for col in fracs:
        for x in col:
            den = den * x.denominator // math.gcd(den, x.denominator)
    cols = [[int(x * den) for x in col] for col in fracs]
    return cols, den


def reduce_block(mat):
    """Exact LLL reduction of the column lattice of one factor.

    Returns (reduced float matrix, integer transform as tuple rows).
    """
    cols, den = _scaled_integer_columns(mat)
    red, U = _lll_int_columns(cols)
    red, U = _normalize_signs(red, U)
    n = len(cols)
    U_rows = tuple(tuple(U[j][i] for j in range(n)) for i in range(n))
    out = np.empty((n, n))
    for j, c in enumerate(red):
        for i, x in enumerate(c):
            out[i, j] = float(Fraction(x, den))
    return out, U_rows


# -- lattice points ------------------------------------------------------------

@dataclass(frozen=True)
class LatticePoint:
    """Coset representative with cached reduction data."""

    rep: lc.GroupElement
    reduced: bool = False
    reduction_transform: tuple = None

    def __post_init__(self):
        if self.reduction_transform is None:
            n = self.rep.model.n
            eye = tuple(tuple(1 if i == j else 0 for j in range(n)) for i in range(n))
            object.__setattr__(
                self, "reduction_transform",
                tuple(eye for _ in range(self.rep.model.factors)))

    @property
    def model(self):
        return self.rep.model

    def translate(self, g):
        """Left translation: the point g x, unreduced."""
        return LatticePoint(g * self.rep)

    def gamma_translate(self, gammas):
        """Right multiplication by an integral unimodular tuple (same coset)."""
        blocks = tuple(
            b @ np.asarray(g, dtype=float) for b, g in zip(self.rep.blocks, gammas)
        )
        return LatticePoint(lc.GroupElement(self.model, blocks))


def lattice_point(g):
    return LatticePoint(g)


def reduce_point(x):
    """LLL-reduce the column lattice of the representative, per factor.

    The output represents the same coset: rep_new = rep_old @ U with U an
    exact integer unimodular matrix (det +1).  Idempotent: reducing a
    reduced point returns it unchanged.
    """
    if x.reduced:
        return x
    blocks = []
    transforms = []
    for b in x.rep.blocks:
        red, U = reduce_block(b)
        blocks.append(red)
        transforms.append(U)
    g = lc.GroupElement(x.model, tuple(blocks))
    return LatticePoint(g, reduced=True, reduction_transform=tuple(transforms))


# -- shortest vectors and covolume minima --------------------------------------

@dataclass(frozen=True)
class ShortestVector:
    norm: float
    coeffs: tuple
    vector: np.ndarray
    exhaustive: bool


def shortest_vector(mat, budget=100000, already_reduced=False):
    """Shortest nonzero vector of the column lattice of `mat`.

    Reduces exactly, then enumerates integer coefficients inside the
    Cramer box implied by the current best length, with a 1.5x safety
    factor.  Raises EnumerationOverflow when the box exceeds `budget`
    candidates.
    """
    if already_reduced:
        red = np.asarray(mat, dtype=float)
    else:
        red, _ = reduce_block(mat)
    n = red.shape[0]
    best = min(np.linalg.norm(red[:, j]) for j in range(n))
    inv = np.linalg.inv(red)
    bounds = np.floor(1.5 * best * np.linalg.norm(inv, axis=1) + 1e-9).astype(int)
    bounds = np.maximum(bounds, 1)
    count = int(np.prod(2 * bounds + 1))
    if count > budget:
        raise EnumerationOverflow(
            f"search box of {count} candidates exceeds budget {budget}")
    ranges = [np.arange(-b, b + 1) for b in bounds]
    K = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, n)
    K = K[np.any(K != 0, axis=1)]
    V = K @ red.T
    norms = np.linalg.norm(V, axis=1)
    i = int(np.argmin(norms))
    return ShortestVector(float(norms[i]), tuple(int(c) for c in K[i]), V[i], True)


def _compound_matrix(b, k):
    n = b.shape[0]
    subs = list(combinations(range(n), k))
    m = len(subs)
    out = np.empty((m, m))
    for a_, I in enumerate(subs):
        for c_, J in enumerate(subs):
            out[a_, c_] = np.linalg.det(b[np.ix_(I, J)]) if k > 1 else b[I[0], J[0]]
    return out


def _height_channels(model):
    """(factor, exterior power) pairs defining the height summands."""
    if model.factors == 1:
        return tuple((0, k) for k in range(1, model.n))
    return tuple((f, 1) for f in range(model.factors))


def min_covolume(x, channel, budget=100000):
    """Minimal covolume of a primitive rank-k sublattice of one factor."""
    x = reduce_point(x)
    f, k = channel
    b = x.rep.blocks[f]
    if k == 1:
        return shortest_vector(b, budget=budget, already_reduced=True).norm
    comp = _compound_matrix(b, k)
    return shortest_vector(comp, budget=budget).norm


# -- height configuration and the height function ------------------------------

@dataclass(frozen=True)
class HeightConfig:
    """Parameters of the height function h = C_* sum_k (eps h_k)^{delta_*}."""

    delta_star: float = 0.5
    q: tuple = (1.0,)
    c: tuple = (1.0,)
    eps: float = 0.05
    C_star: float = 2.25
    delta_one_scan: float = 0.8
    cocompact: bool = False

    def __post_init__(self):
        if not 0 < self.delta_star < self.delta_one_scan:
            raise ValueError("delta_star must lie in (0, delta_one_scan)")
        if len(self.q) != len(self.c):
            raise ValueError("q and c must have the same length")
        if any(qk <= 0 for qk in self.q):
            # q_k > 0 puts sum q_k w_k inside the open positive chamber
            raise ValueError("q entries must be positive")
        if abs(min(ck * qk for ck, qk in zip(self.c, self.q)) - 1.0) > 1e-12:
            raise ValueError("normalization min_k c_k q_k = 1 violated")
        if self.eps <= 0 or self.C_star < 1:
            raise ValueError("eps must be positive and C_star >= 1")

    @property
    def rank(self):
        return len(self.q)


# Fallback C_* values keep h >= 2: the per-channel minimum of beta is
# bounded below through the Hermite constant of the relevant dimension.
_DEFAULT_CSTAR = {"SL2": 9.3, "SL3": 4.8, "SL2xSL2": 4.7}


def default_height_config(model, eps=0.05, C_star=None, delta_star=0.5):
    r = len(_height_channels(model))
    if C_star is None:
        C_star = _DEFAULT_CSTAR[model.tag] * (0.05 / eps) ** delta_star
    return HeightConfig(delta_star=delta_star, q=(1.0,) * r, c=(1.0,) * r,
                        eps=eps, C_star=C_star)


def beta_k(x, k, cfg, budget=100000):
    """Reciprocal minimal covolume in channel k, raised to 1/c_k.

    Channels are 1-based; for SL(n) channel k ranges over the exterior
    powers 1..n-1, for products over the factors.  The value is invariant
    under right multiplication by integral unimodular matrices.
    """
    channels = _height_channels(x.model)
    if not 1 <= k <= len(channels):
        raise ValueError(f"channel index {k} out of range 1..{len(channels)}")
    d = min_covolume(x, channels[k - 1], budget=budget)
    return d ** (-1.0 / cfg.c[k - 1])


def height(x, cfg, budget=100000):
    """Proper cusp-excursion function; constant 2 on cocompact models."""
    if cfg.cocompact:
        return 2.0
    channels = _height_channels(x.model)
    if len(channels) != cfg.rank:
        raise ValueError("height config rank does not match the model")
    x = reduce_point(x)
    total = 0.0
    for k in range(1, cfg.rank + 1):
        hk = beta_k(x, k, cfg, budget=budget) ** (1.0 / cfg.q[k - 1])
        total += (cfg.eps * hk) ** cfg.delta_star
    return cfg.C_star * total


# -- injectivity-radius proxy ---------------------------------------------------

@dataclass(frozen=True)
class InjectivityEstimate:
    value: float
    witness: tuple  # (factor, integer matrix rows)
    exhaustive: bool

    def __post_init__(self):
        if self.value <= 0:
            raise ValueError("injectivity proxy must be positive")


def _integer_unimodulars(n, bound):
    key = (n, bound)
    if key not in _integer_unimodulars.cache:
        rng = range(-bound, bound + 1)
        out = []
        for entries in iproduct(rng, repeat=n * n):
            m = np.array(entries, dtype=float).reshape(n, n)
            if abs(np.linalg.det(m) - 1.0) < 1e-9:
                if not np.array_equal(m, np.eye(n)):
                    out.append(m)
        _integer_unimodulars.cache[key] = np.stack(out)
    return _integer_unimodulars.cache[key]


_integer_unimodulars.cache = {}


def _return_distance(model, mat):
    """Chart distance of a lattice return from the identity.

    Inside the log chart this is the Lie-algebra norm of the logarithm;
    outside it falls back to the operator-norm distance, a lower bound
    that never competes with genuinely small returns.
    """
    single = lc.model_group("SL2") if mat.shape[0] == 2 else lc.model_group("SL3")
    try:
        return lc.norm(lc.LieVector(single, (_safe_log(mat),)))
    except OutOfChart:
        return float(np.linalg.norm(mat - np.eye(mat.shape[0]), 2))


def riemannian_upper_bound(mat):
    """Valid upper bound for the right-invariant distance to the identity.

    Uses the one-parameter path of the logarithm inside the chart; outside
    it the polar factorization gives the bound |log Q| + |log P| (both
    logarithms are globally defined and Ad(K)-invariance of the form makes
    the conjugated rotation leg isometric).
    """
    n = mat.shape[0]
    model = lc.model_group("SL2") if n == 2 else lc.model_group("SL3")
    try:
        v = lc.LieVector(model, (_safe_log(mat),))
        return lc.norm(v)
    except OutOfChart:
        q, p = _polar(mat)
        if np.linalg.det(q) < 0:  # keep both factors in the identity component
            q, p = -q, -p
        logp = _symmetric_log(p)
        logq = _rotation_log(q)
        return (math.sqrt(max(lc.inner_product(lc.LieVector(model, (logq,)),
                                               lc.LieVector(model, (logq,))), 0.0))
                + math.sqrt(max(lc.inner_product(lc.LieVector(model, (logp,)),
                                                 lc.LieVector(model, (logp,))), 0.0)))


def _safe_log(mat):
    from .liecore import _logm_block

    return _logm_block(mat)


def _symmetric_log(p):
    w, v = np.linalg.eigh((p + p.T) / 2.0)
    w = np.maximum(w, 1e-300)
    out = v @ np.diag(np.log(w)) @ v.T
    return out - np.trace(out) / p.shape[0] * np.eye(p.shape[0])


def _rotation_log(q):
    from scipy.linalg import logm

    out = np.real(logm(q))
    return out - np.trace(out) / q.shape[0] * np.eye(q.shape[0])


def injectivity_proxy(x, budget=100000):
    """Half the nearest nontrivial lattice return, per factor.

    Enumerates integral unimodular candidates with growing entry bound,
    measures the chart distance of the conjugate g gamma g^{-1} from the
    identity (or its operator-norm distance outside the chart), and
    returns half the minimum.  The exhaustive flag certifies that the
    enumeration box provably contains the minimizer.
    """
    x = reduce_point(x)
    n = x.model.n
    best = None
    exhaustive = True
    for f, g in enumerate(x.rep.blocks):
        ginv = np.linalg.inv(g)
        cond = np.linalg.norm(g, 2) * np.linalg.norm(ginv, 2)
        bound = 1
        factor_best = None
        while True:
            if (2 * bound + 1) ** (n * n) > budget and bound > 1:
                exhaustive = False
                break
            cands = _integer_unimodulars(n, bound)
            conj = np.einsum("ab,nbc,cd->nad", g, cands, ginv)
            dists = np.linalg.norm(conj - np.eye(n), axis=(1, 2))
            order = np.argsort(dists, kind="stable")
            i = order[0]
            val = _return_distance(x.model, conj[i])
            cand = (val, f, tuple(tuple(int(v) for v in row) for row in cands[i]))
            if factor_best is None or val < factor_best[0]:
                factor_best = cand
            # certification: any better candidate gamma satisfies
            # |gamma - I|_op <= cond(g) |conj - I|_op, entrywise bounded
            needed = cond * min(2.0, factor_best[0]) + 1.0
            if needed <= bound:
                break
            if (2 * (bound + 1) + 1) ** (n * n) > budget:
                exhaustive = False
                break
            bound += 1
        if factor_best is None:
            # budget too small for certification; fall back to the 3x3
            # elementary returns, still a valid upper bound
            cands = _integer_unimodulars(n, 1)
            conj = np.einsum("ab,nbc,cd->nad", g, cands, ginv)
            dists = np.linalg.norm(conj - np.eye(n), axis=(1, 2))
            i = int(np.argmin(dists))
            factor_best = (_return_distance(x.model, conj[i]), f,
                           tuple(tuple(int(v) for v in row) for row in cands[i]))
            exhaustive = False
        if factor_best is not None and (best is None or factor_best[0] < best[0]):
            best = factor_best
    value = 0.5 * best[0]
    return InjectivityEstimate(value=value, witness=(best[1], best[2]),
                               exhaustive=exhaustive)


# -- Margulis-inequality probe and the Diophantine predicate --------------------

def height_margulis_check(x, cfg, a, chart, t, spec=None, c=0.5, B=None,
                          budget=100000):
    """Average of the height over the flowed 2-ball versus c h(x) + B.

    Returns (lhs, rhs_c, rhs_B): the averaging estimate, the contraction
    part c h(x) and the additive slack.  When B is not supplied, the
    empirical slack max(lhs - c h(x), 0) is reported; no judgement is
    made here, assertions belong to the experiment layer.
    """
    from . import averaging

    obs = averaging.Observable(lambda p: height(p, cfg, budget=budget), "height")
    lhs = averaging.apply_operator(obs, x, a, chart, 2.0, t, spec)
    hx = height(x, cfg, budget=budget)
    rhs_c = c * hx
    rhs_B = max(lhs.mean - rhs_c, 0.0) if B is None else B
    return lhs, rhs_c, rhs_B


def diophantine_check(x, catalog, V, d, r=None, search_budget=200000):
    """(V, d)-Diophantine test against a catalog of closed orbits.

    True iff every catalog orbit of volume at most V stays at distance at
    least d; with `r` given, additionally requires the injectivity proxy
    to reach r.  Returns (flag, violating orbit or None).
    """
    from . import orbits

    if r is not None and injectivity_proxy(x).value < r:
        return False, None
    for Y in catalog:
        if Y.volume <= V:
            est = orbits.orbit_distance(x, Y, search_budget=search_budget)
            if est.value < d:
                return False, Y
    return True, None


# -- serialization ---------------------------------------------------------------

def point_to_record(x):
    """Structured text record of a point: model, row-major blocks, flag."""
    blocks = [[_format_entry(v) for v in b.ravel()] for b in x.rep.blocks]
    return json.dumps({"model": x.model.tag, "blocks": blocks, "reduced": x.reduced})


def _format_entry(v):
    f = Fraction(float(v)).limit_denominator(10 ** 12)
    if float(f) == float(v) and f.denominator <= 10 ** 6:
        return str(f)
    return repr(float(v))


def point_from_record(text):
    """Parse a point record; exact rational entries are accepted."""
    data = json.loads(text)
    model = lc.model_group(data["model"])
    blocks = []
    for b in data["blocks"]:
        vals = [Fraction(str(v)) for v in b]
        blocks.append(np.array([float(v) for v in vals]).reshape(model.n, model.n))
    return LatticePoint(lc.GroupElement(model, tuple(blocks)),
                        reduced=bool(data.get("reduced", False)))
