"""Closed intermediate orbits in the SL2xSL2 model.

The intermediate subgroup is the diagonally embedded SL(2,R).  A
one-parameter family of closed orbits is produced by rational upper
triangular conjugators g_q = [[1, 1/q], [0, 1]]: the stabilizer of the
base point (g_q, e) is a congruence-commensurable lattice, its index is
computed by exact coset enumeration, and the orbit volume is that index
times the configured covolume of SL(2,Z).

Sheets of an orbit near a point x are the complement-direction vectors v
with exp(v) x on the orbit.  For this family they are in exact bijection
with rational matrices R = gamma_2 g_q gamma_1^{-1} close to x_2^{-1} x_1,
which the code enumerates as integer lattice points in a 4-dimensional
ellipsoid; membership of R in the double coset is a gcd/determinant test
on q R, and the sheet vector is recovered in closed form from the matrix
logarithm of x_2 R x_1^{-1}.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.linalg import polar as _polar
from scipy.optimize import minimize as _minimize

from . import liecore as lc
from . import lattice as lat
from . import weights as wt
from .errors import OutOfChart

BASE_COVOLUME = math.pi ** 2 / 3.0  # configured Haar constant; only ratios matter
MIN_ORBIT_VOLUME = 1.0


# -- exact coset enumeration ---------------------------------------------------

def _hnf_2x2(rows):
    """Row Hermite normal form of an integer 2x2 matrix with det != 0."""
    (a, b), (c, d) = rows
    if a == 0 and c == 0:
        raise ValueError("singular lattice basis")
    g, u, v = _xgcd(a, c)
    r0 = (u * a + v * c, u * b + v * d)
    r1 = ((-c // g) * a + (a // g) * c, (-c // g) * b + (a // g) * d)
    assert r1[0] == 0
    if r1[1] < 0:
        r1 = (0, -r1[1])
    if r0[0] < 0:
        r0 = (-r0[0], -r0[1])
    if r1[1]:
        k = r0[1] // r1[1]
        r0 = (r0[0], r0[1] - k * r1[1])
    return (r0, r1)


def _xgcd(a, b):
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r:
        qt = old_r // r
        old_r, r = r, old_r - qt * r
        old_s, s = s, old_s - qt * s
        old_t, t = t, old_t - qt * t
    if old_r < 0:
        old_r, old_s, old_t = -old_r, -old_s, -old_t
    return old_r, old_s, old_t


def _canonical_lattice(rows):
    """Canonical (denominator, HNF) tag of a rational row lattice."""
    den = 1
    for r in rows:
        for x in r:
            den = den * x.denominator // math.gcd(den, x.denominator)
    ints = tuple(tuple(int(x * den) for x in r) for r in rows)
    hnf = _hnf_2x2(ints)
    g = den
    for r in hnf:
        for x in r:
            g = math.gcd(g, abs(x))
    return (den // g, tuple(tuple(x // g for x in r) for r in hnf))


def _frac_mat(rows):
    return tuple(tuple(Fraction(x) for x in r) for r in rows)


def _mat_mul(a, b):
    return tuple(
        tuple(sum(a[i][k] * b[k][j] for k in range(2)) for j in range(2))
        for i in range(2)
    )


def _mat_inv_unimodular(a):
    det = a[0][0] * a[1][1] - a[0][1] * a[1][0]
    return ((a[1][1] / det, -a[0][1] / det), (-a[1][0] / det, a[0][0] / det))


def coset_index(q):
    """Index of SL(2,Z) in the stabilizer lattice of the q-orbit.

    Exact breadth-first enumeration of the cosets, realized as the orbit
    of the standard lattice under right multiplication by the g_q-conjugated
    generators of SL(2,Z).
    """
    if q < 1:
        raise ValueError("q must be a positive integer")
    gq = _frac_mat(((1, Fraction(1, q)), (0, 1)))
    gq_inv = _mat_inv_unimodular(gq)
    gens = []
    for m in (((0, -1), (1, 0)), ((1, 1), (0, 1))):
        gh = _mat_mul(_mat_mul(gq, _frac_mat(m)), gq_inv)
        gens.append(gh)
        gens.append(_mat_inv_unimodular(gh))
    start_rows = _frac_mat(((1, 0), (0, 1)))
    seen = {_canonical_lattice(start_rows)}
    frontier = [start_rows]
    while frontier:
        nxt = []
        for rows in frontier:
            for gh in gens:
                new_rows = _mat_mul(rows, gh)
                tag = _canonical_lattice(new_rows)
                if tag not in seen:
                    seen.add(tag)
                    nxt.append(new_rows)
        frontier = nxt
    return len(seen)


# -- orbit descriptors -----------------------------------------------------------

@dataclass(frozen=True)
class DiagonalOrbitFamily:
    """Closed-orbit family data: parameter, rational conjugator, exact index."""

    q: int
    conjugator: tuple  # exact rational rows of g_q
    index: int


@dataclass(frozen=True)
class OrbitDescriptor:
    """A closed orbit of the diagonal SL(2,R) in the SL2xSL2 model."""

    label: str
    base: lat.LatticePoint
    volume: float
    s_basis: tuple
    v_s_basis: tuple
    gamma_budget: int
    family: DiagonalOrbitFamily

    def __post_init__(self):
        if self.volume < MIN_ORBIT_VOLUME:
            raise ValueError("orbit volume below the configured floor")

    @property
    def q(self):
        return self.family.q


def _split_basis(model):
    rep = wt.restriction_rep(model)
    # rank check: the 6 vectors span Lie(G)
    mat = np.column_stack([rep.to_coords(v) for v in rep.s_basis + rep.v_s_basis])
    assert np.linalg.matrix_rank(mat, tol=1e-10) == model.dim
    # invariance of the complement: [Lie(S), V_S] stays in V_S
    for s in rep.s_basis:
        for v in rep.v_s_basis:
            br = lc.LieVector(model, tuple(
                a @ b - b @ a for a, b in zip(s.blocks, v.blocks)))
            back = rep.complement_vector(rep.project_complement(br))
            assert lc.norm(br - back) <= 1e-9 * max(1.0, lc.norm(br))
    return rep.s_basis, rep.v_s_basis


def make_diagonal_orbit(q, gamma_budget=200000, base_covolume=BASE_COVOLUME):
    """Closed orbit through (g_q, e) with exactly computed volume."""
    model = lc.model_group("SL2xSL2")
    idx = coset_index(q)
    gq = np.array([[1.0, 1.0 / q], [0.0, 1.0]])
    base = lat.LatticePoint(lc.GroupElement(model, (gq, np.eye(2))))
    s_basis, v_s_basis = _split_basis(model)
    fam = DiagonalOrbitFamily(
        q=q, conjugator=((Fraction(1), Fraction(1, q)), (Fraction(0), Fraction(1))),
        index=idx)
    return OrbitDescriptor(
        label=f"diag-q{q}", base=base, volume=idx * base_covolume,
        s_basis=s_basis, v_s_basis=v_s_basis, gamma_budget=gamma_budget,
        family=fam)


# -- window sets and sheets -------------------------------------------------------

@dataclass(frozen=True)
class WindowConfig:
    """Window-size law: radius eps_h * h(x)^{-kappa}."""

    eps_h: float = 1e-2
    kappa: float = 6.0

    def __post_init__(self):
        if not 0 < self.eps_h <= 0.5:
            raise ValueError("eps_h must be small and positive")
        if self.kappa < 1:
            raise ValueError("kappa must be >= 1")

    def radius(self, h_x):
        return self.eps_h * h_x ** (-self.kappa)


@dataclass(frozen=True)
class SheetSet:
    """Nearby sheets of an orbit: nonzero complement vectors hitting it."""

    vectors: tuple       # LieVector entries of V_S
    coords: np.ndarray   # orthonormal V_S coordinates, one row per sheet
    norms: np.ndarray
    residuals: np.ndarray
    exhaustive: bool

    def __len__(self):
        return len(self.vectors)


def _ellipsoid_points(W, target, radius, budget):
    """All integer n with |W n - target|_2 <= radius, by sphere decoding.

    The basis is LLL-reduced exactly first, so the decoding tree stays
    tight even for badly distorted transforms.
    """
    dim = W.shape[1]
    cols, den = lat._scaled_integer_columns(W)
    red, U = lat._lll_int_columns(cols)
    W = np.array([[float(Fraction(x, den)) for x in col] for col in red]).T
    G = W.T @ W
    L = np.linalg.cholesky(G)
    R = L.T
    center = np.linalg.solve(W, target)
    out = []
    count = 0

    def recurse(level, residual, partial):
        nonlocal count
        if count > budget:
            return False
        if level < 0:
            m = partial[::-1]
            out.append(tuple(sum(U[j][i] * m[j] for j in range(dim))
                             for i in range(dim)))
            return True
        # offset contributed by already-fixed deeper coordinates
        shift = sum(R[level, j] * (partial[dim - 1 - j] - center[j])
                    for j in range(level + 1, dim))
        rad = math.sqrt(max(residual, 0.0)) / R[level, level]
        mid = center[level] - shift / R[level, level]
        lo = math.ceil(mid - rad - 1e-12)
        hi = math.floor(mid + rad + 1e-12)
        ok = True
        for n in range(lo, hi + 1):
            count += 1
            if count > budget:
                return False
            leg = R[level, level] * (n - center[level]) + shift
            rem = residual - leg * leg
            if rem < -1e-12:
                continue
            partial.append(n)
            ok = recurse(level - 1, rem, partial) and ok
            partial.pop()
        return ok

    complete = recurse(dim - 1, radius * radius, [])
    return out, complete


def _sheet_transform(x):
    """4-D lattice basis W: columns vec(x2 E_ij x1^{-1}), and x pieces."""
    x1, x2 = x.rep.blocks
    x1inv = np.linalg.inv(x1)
    cols = []
    for i in range(2):
        for j in range(2):
            E = np.zeros((2, 2))
            E[i, j] = 1.0
            cols.append((x2 @ E @ x1inv).ravel())
    return np.column_stack(cols), x1, x2, x1inv


def _double_coset_member(N, q):
    """Integer test: N/q lies in the double coset of g_q (SNF (1, q^2))."""
    det = N[0] * N[3] - N[1] * N[2]
    if det != q * q:
        return False
    g = 0
    for v in N:
        g = math.gcd(g, abs(v))
    return g == 1


def _candidate_matrices(x, q, radius, budget):
    """Rational candidates R with |x2 R x1^{-1} - I|_F <= radius."""
    W, x1, x2, x1inv = _sheet_transform(x)
    target = np.eye(2).ravel()
    points, complete = _ellipsoid_points(W / q, target, radius, budget)
    cands = []
    for n4 in points:
        if not _double_coset_member(n4, q):
            continue
        N = np.array(n4, dtype=float).reshape(2, 2)
        R = N / q
        M = x2 @ R @ x1inv
        cands.append((N, M))
    return cands, complete, x1, x2


_SHEET_MODEL = None


def _restriction():
    global _SHEET_MODEL
    if _SHEET_MODEL is None:
        _SHEET_MODEL = wt.restriction_rep(lc.model_group("SL2xSL2"))
    return _SHEET_MODEL


def enumerate_sheets(x, Y, cfg, h_x, budget=None):
    """All window-sized complement vectors carrying x onto the orbit.

    The window radius eps_h h(x)^{-kappa} must sit below the injectivity
    proxy at x (checked).  Returns a SheetSet sorted by (norm, coords);
    the exhaustive flag records whether the candidate enumeration covered
    the window with certainty, and turns False on budget exhaustion.
    """
    budget = budget or Y.gamma_budget
    x = lat.reduce_point(x)
    delta_w = cfg.radius(h_x)
    inj = lat.injectivity_proxy(x).value
    if delta_w > inj:
        raise ValueError(
            f"window radius {delta_w:.3g} exceeds injectivity proxy {inj:.3g}")
    wF = delta_w / (2.0 * math.sqrt(2.0))
    rho = 1.1 * (2.0 * wF) * math.exp(2.0 * wF) + 1e-12
    cands, complete, x1, x2 = _candidate_matrices(x, Y.q, rho, budget)
    rep = _restriction()
    model = x.model
    rows = []
    for N, M in cands:
        if np.linalg.norm(M - np.eye(2), 2) >= 0.49:
            continue
        try:
            w = 0.5 * lat._safe_log(M)
        except OutOfChart:
            continue
        v = lc.LieVector(model, (w, -w))
        nv = lc.norm(v)
        if nv <= 1e-12 or nv > delta_w:
            continue
        accuracy = np.abs(lc._expm_block(2.0 * w) @ x1 - x2 @ (N / Y.q)).max()
        rows.append((nv, rep.project_complement(v), v, accuracy))
    rows.sort(key=lambda r: (r[0], tuple(r[1])))
    if rows:
        norms = np.array([r[0] for r in rows])
        coords = np.stack([r[1] for r in rows])
        residuals = np.array([r[3] for r in rows])
        assert residuals.max() <= 1e-9 * max(1.0, np.abs(x1).max(), np.abs(x2).max())
    else:
        norms = np.empty(0)
        coords = np.empty((0, 3))
        residuals = np.empty(0)
    return SheetSet(vectors=tuple(r[2] for r in rows), coords=coords,
                    norms=norms, residuals=residuals, exhaustive=complete)


# -- Margulis functions ------------------------------------------------------------

@dataclass(frozen=True)
class FValue:
    """Value of a Margulis function; tainted when enumeration was partial."""

    value: float
    tainted: bool

    def __float__(self):
        return self.value


def margulis_f(x, Y, cfg, hcfg, delta_F, budget=None):
    """Inverse-power sheet sum, falling back to the height off the window."""
    if not 0 < delta_F <= 1:
        raise ValueError("delta_F must lie in (0, 1]")
    if delta_F > 1.0 / cfg.kappa + 1e-12:
        raise ValueError("consistency requires delta_F <= 1/kappa")
    h_x = lat.height(x, hcfg)
    sheets = enumerate_sheets(x, Y, cfg, h_x, budget=budget)
    if len(sheets) == 0:
        return FValue(h_x, not sheets.exhaustive)
    return FValue(float(np.sum(sheets.norms ** (-delta_F))), not sheets.exhaustive)


def margulis_F(x, Y, cfg, hcfg, delta_F, lam=1.0, budget=None):
    """Sheet sum plus lambda vol(Y) h(x); the drift observable for orbits."""
    if lam < 1:
        raise ValueError("lambda must be >= 1")
    f = margulis_f(x, Y, cfg, hcfg, delta_F, budget=budget)
    h_x = lat.height(x, hcfg)
    return FValue(f.value + lam * Y.volume * h_x, f.tainted)


# -- orbit distance -----------------------------------------------------------------

@dataclass(frozen=True)
class DistanceEstimate:
    value: float
    certified: bool


def _rub2(M):
    """Distance-to-identity upper bound for a det-1 2x2 matrix.

    Inside the chart: the ambient norm of the closed-form logarithm.
    Outside: rotation angle plus stretch via the polar factors, both in
    closed form (ambient norm is twice the Frobenius norm on sl2).
    """
    d2 = M - _EYE2
    fro = math.sqrt(float(np.tensordot(d2, d2, axes=2)))
    if fro < 0.49:
        X = lat._safe_log(M)
        return 2.0 * math.sqrt(float(np.tensordot(X, X, axes=2)))
    A = M.T @ M
    half_tr = (A[0, 0] + A[1, 1]) / 2.0
    disc = math.sqrt(max(half_tr * half_tr - 1.0, 0.0))
    sigma2 = half_tr + disc  # largest eigenvalue of M^T M; det = 1
    stretch = 0.5 * abs(math.log(max(sigma2, 1e-300)))
    # rotation factor Q = M P^{-1} with P = (M^T M)^{1/2}
    p = _spd_sqrt_inv_2x2(A)
    Q = M @ p
    theta = math.atan2(Q[1, 0], Q[0, 0])
    return 2.0 * math.sqrt(2.0) * (abs(theta) + stretch)


_EYE2 = np.eye(2)


def _spd_sqrt_inv_2x2(A):
    tr = A[0, 0] + A[1, 1]
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    s = math.sqrt(max(det, 1e-300))
    t = math.sqrt(max(tr + 2.0 * s, 1e-300))
    sqrtA = (A + s * _EYE2) / t
    d = sqrtA[0, 0] * sqrtA[1, 1] - sqrtA[0, 1] * sqrtA[1, 0]
    return np.array([[sqrtA[1, 1], -sqrtA[0, 1]], [-sqrtA[1, 0], sqrtA[0, 0]]]) / d


_SL2_GEN = (
    np.array([[1.0, 0.0], [0.0, -1.0]]),
    np.array([[0.0, 1.0], [0.0, 0.0]]),
    np.array([[0.0, 0.0], [1.0, 0.0]]),
)


def _pair_objective(M, h):
    return math.hypot(_rub2(h @ M), _rub2(h))


def _pair_distance(M, h0, maxiter=160):
    """min over h in SL2 of sqrt(d(e,hM)^2 + d(e,h)^2), started at h0."""

    def objective(xi):
        X = xi[0] * _SL2_GEN[0] + xi[1] * _SL2_GEN[1] + xi[2] * _SL2_GEN[2]
        return _pair_objective(M, lc._expm_block(X) @ h0)

    res = _minimize(objective, np.zeros(3), method="Nelder-Mead",
                    options={"xatol": 1e-8, "fatol": 1e-11, "maxiter": maxiter})
    return float(res.fun)


def _start_point(M):
    """Half-way start: h0 with h0 M and h0 at comparable distances."""
    try:
        return lc._expm_block(-0.5 * lat._safe_log(M))
    except OutOfChart:
        A = M.T @ M
        p_inv_half = _spd_sqrt_inv_2x2(_spd_sqrt_2x2(A))
        q = M @ _spd_sqrt_inv_2x2(A)
        return p_inv_half @ q.T


def _spd_sqrt_2x2(A):
    tr = A[0, 0] + A[1, 1]
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    s = math.sqrt(max(det, 1e-300))
    t = math.sqrt(max(tr + 2.0 * s, 1e-300))
    return (A + s * _EYE2) / t


_DISTANCE_LADDER = (0.05, 0.2, 0.8, 1.8)
_MAX_COVER_RADIUS = 4.5


def _coverage_needed(d):
    # a point of Y at distance d forces |M - I|_F <= (d/sqrt2) e^d
    return 0.9 * d * math.exp(d)


def _stretch_lower_bound(M):
    """Rigorous lower bound for the pair distance of a candidate.

    The stretch |log sigma_1| grows at most half the ambient path speed,
    so dist(e, M) >= 2 |log sigma_1(M)| and the two-leg minimum is at
    least that over sqrt(2).
    """
    s = np.linalg.svd(M, compute_uv=False)
    return math.sqrt(2.0) * abs(math.log(float(s[0])))


def _best_over_candidates(cands, best):
    if not cands:
        return best
    scored = []
    for _N, M in cands:
        if _stretch_lower_bound(M) >= best:
            continue
        scored.append((_pair_objective(M, _start_point(M)), M))
    scored.sort(key=lambda z: z[0])
    for quick, M in scored[:24]:
        if quick >= 2.0 * best and quick >= 2.0 * scored[0][0]:
            break
        d = _pair_distance(M, _start_point(M))
        if d < best:
            best = d
    return best


def orbit_distance(x, Y, search_budget=200000, cap=None):
    """Distance from x to the orbit, as a certified-when-possible minimum.

    Enumerates nearby double-coset candidates inside a growing radius
    ladder and minimizes the right-invariant distance proxy over the
    free subgroup direction for each candidate.  The returned value is
    always a valid upper bound; `certified` means the enumeration radius
    provably covered every candidate that could do better.

    With `cap` set, the search stops once the distance is certified to
    be at least cap and returns the clamp min(distance, cap); this is the
    fast path for threshold tests far below cap.
    """
    x = lat.reduce_point(x)
    best = math.inf
    complete_at = 0.0
    if cap is not None:
        rho = _coverage_needed(cap)
        cands, complete, _x1, _x2 = _candidate_matrices(x, Y.q, rho, search_budget)
        if complete and not cands:
            return DistanceEstimate(cap, True)
        if complete:
            best = _best_over_candidates(cands, best)
            if best >= cap:
                return DistanceEstimate(cap, True)
            if _coverage_needed(best) <= rho:
                return DistanceEstimate(best, True)
    for rho in _DISTANCE_LADDER:
        cands, complete, x1, x2 = _candidate_matrices(x, Y.q, rho, search_budget)
        if complete:
            complete_at = rho
        best = _best_over_candidates(cands, best)
        if not complete:
            break
        if best < math.inf and _coverage_needed(best) <= complete_at:
            return DistanceEstimate(best, True)
    if best < math.inf and complete_at >= _DISTANCE_LADDER[-1]:
        # one adaptive rung sized to certify the current minimum
        rho = min(1.05 * _coverage_needed(best), _MAX_COVER_RADIUS)
        if rho > complete_at:
            cands, complete, _x1, _x2 = _candidate_matrices(x, Y.q, rho, search_budget)
            if complete:
                complete_at = rho
                best = _best_over_candidates(cands, best)
    certified = best < math.inf and _coverage_needed(best) <= complete_at
    return DistanceEstimate(best, certified)


# -- isolation and counting -----------------------------------------------------------

def sample_orbit_points(Y, count, seed=0, spread=0.8):
    """Points on the orbit: exp(xi) acting diagonally on the base point."""
    rng = np.random.default_rng(seed)
    model = Y.base.model
    out = []
    for _ in range(count):
        xi = rng.normal(size=(2, 2))
        xi -= np.trace(xi) / 2.0 * np.eye(2)
        xi *= rng.uniform(0.1, spread) / max(np.linalg.norm(xi), 1e-12)
        s = lc._expm_block(xi)
        g = lc.GroupElement(model, (s @ Y.base.rep.blocks[0], s @ Y.base.rep.blocks[1]))
        out.append(lat.reduce_point(lat.LatticePoint(g)))
    return out


def isolation_experiment(Y, Z, samples, search_budget=200000,
                         residual_tol=1e-6):
    """Minimum distance from points of Y to the orbit Z.

    Requires distinct orbits and checks that every sample is genuinely on
    Y before measuring.  Returns (min distance, all certified flag).
    """
    if Y.label == Z.label:
        raise ValueError("orbits must be distinct")
    dists = []
    certified = True
    for p in samples:
        on_y = orbit_distance(p, Y, search_budget=search_budget)
        if on_y.value > residual_tol:
            raise ValueError(f"sample is not on {Y.label}: residual {on_y.value:.3g}")
        est = orbit_distance(p, Z, search_budget=search_budget)
        dists.append(est.value)
        certified = certified and est.certified
    return min(dists), certified


def catalog_count(q_max, base_covolume=BASE_COVOLUME):
    """Orbit volumes for q <= q_max and dyadic counting data.

    Returns (entries, counts): entries is the list of (q, volume); counts
    maps each dyadic level R = 2^k to N(R) = #{q : volume <= R}.
    """
    if q_max > 50:
        raise ValueError("family parameter capped at 50")
    entries = [(q, coset_index(q) * base_covolume) for q in range(1, q_max + 1)]
    vols = np.array([v for _, v in entries])
    k_max = int(math.ceil(math.log2(vols.max()))) + 1
    counts = [(float(2 ** k), int(np.sum(vols <= 2 ** k))) for k in range(k_max + 1)]
    return entries, counts


# -- serialization ----------------------------------------------------------------------

def catalog_to_text(orbitlist):
    recs = [{"label": Y.label, "q": Y.q, "volume": Y.volume,
             "gamma_budget": Y.gamma_budget} for Y in orbitlist]
    return "\n".join(json.dumps(r) for r in recs) + "\n"


def catalog_from_text(text, base_covolume=BASE_COVOLUME):
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        Y = make_diagonal_orbit(int(rec["q"]), gamma_budget=int(rec["gamma_budget"]),
                                base_covolume=base_covolume)
        if abs(Y.volume - float(rec["volume"])) > 1e-6 * float(rec["volume"]):
            raise ValueError(f"volume mismatch for {rec['label']}")
        out.append(Y)
    return out


def sheets_to_csv(sheets):
    """CSV rendering of a sheet set: coordinates, norm, residual."""
    import csv

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["c1", "c2", "c3", "norm", "residual"])
    for i in range(len(sheets)):
        row = [repr(float(c)) for c in sheets.coords[i]]
        row += [repr(float(sheets.norms[i])), repr(float(sheets.residuals[i]))]
        w.writerow(row)
    return buf.getvalue()
