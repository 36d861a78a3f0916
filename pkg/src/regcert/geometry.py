"""Convex sets in R^n and the exact operations the estimators sit on.

The set vocabulary is a small tagged family: polyhedra {z : Cz <= d}, closed
euclidean balls, singletons, finite products, and the conic neighborhood of a
direction (the union of scaled balls lam * B(ybar, delta) over lam >= 0).
Every variant supports nearest-point projection and distance; polyhedra
additionally expose active-row normal cone generators and a deterministic LP.

Projections onto polyhedra use Dykstra's alternating scheme over the
halfspace rows, which converges to the exact nearest point (not merely a
feasible one).  The LP is a dense two-phase primal simplex with Bland's
anti-cycling rule, so its output is reproducible down to the vertex chosen.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .errors import (
    DimensionMismatch,
    EmptySet,
    NotInSet,
    SimplexIterationLimit,
)

# Package-wide default tolerances.  Feasibility residuals are judged against
# TOL_FEAS, set membership against TOL_MEMBER, and a constraint row counts as
# active within TOL_ACTIVE.
TOL_FEAS = 1e-9
TOL_MEMBER = 1e-7
TOL_ACTIVE = 1e-7

DYKSTRA_TOL = 1e-10
DYKSTRA_MAX_SWEEPS = 10_000

_GOLDEN_ITERS = 48
_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def as_vector(x, dim: int | None = None, name: str = "vector") -> np.ndarray:
    """Validate and convert to a finite 1-d float array."""
    v = np.asarray(x, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise DimensionMismatch(f"{name}: expected a 1-d array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name}: entries must be finite")
    if dim is not None and v.size != dim:
        raise DimensionMismatch(f"{name}: expected length {dim}, got {v.size}")
    return v


def _rows(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim == 1:
        P = P[None, :]
    return P


class ConvexSet:
    """Common interface: dim, project, distance, contains (all batched)."""

    dim: int

    def project_batch(self, P: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def distance_batch(self, P: np.ndarray) -> np.ndarray:
        P = _rows(P)
        Q = self.project_batch(P)
        return np.linalg.norm(P - Q, axis=1)

    def project(self, p) -> np.ndarray:
        p = as_vector(p, self.dim, "point")
        return self.project_batch(p[None, :])[0]

    def distance(self, p) -> float:
        p = as_vector(p, self.dim, "point")
        return float(self.distance_batch(p[None, :])[0])

    def contains(self, p, tol: float = TOL_MEMBER) -> bool:
        return self.distance(p) <= tol


# ---------------------------------------------------------------------------
# Dykstra's alternating projection for halfspace systems.

def dykstra_halfspaces(C, d, P, rhs=None, tol=DYKSTRA_TOL,
                       max_sweeps=DYKSTRA_MAX_SWEEPS):
    """Project each row of P onto {z : Cz <= d} (or a per-point rhs).

    rhs, when given, has shape (B, m) and replaces d per point; this is what
    the pulled-back preimage systems need, where the right-hand side varies
    with the sampled y.  Returns (Q, residual) where residual is the final
    per-point feasibility violation in normalized row units.  Points whose
    residual stops improving are retired early; an infeasible system would
    otherwise burn the whole sweep cap for every point.
    """
    C = np.asarray(C, dtype=float)
    P = _rows(P).astype(float, copy=True)
    B, _ = P.shape
    m = C.shape[0]
    if m == 0:
        return P, np.zeros(B)
    if rhs is None:
        rhs = np.broadcast_to(np.asarray(d, dtype=float), (B, m)).copy()
    rhs = np.asarray(rhs, dtype=float)

    row_sq = np.einsum("ij,ij->i", C, C)
    row_norm = np.sqrt(row_sq)
    X = P
    alpha = np.zeros((B, m))  # Dykstra's per-row scalar corrections
    active = np.arange(B)
    last_resid = np.full(B, np.inf)
    checkpoint = np.full(B, np.inf)
    for sweep in range(max_sweeps):
        Xa = X[active]
        Ra = rhs[active]
        start = Xa.copy()
        alpha_start = alpha[active].copy()
        for i in range(m):
            Y = Xa + alpha[active, i, None] * C[i]
            mu = np.maximum((Y @ C[i] - Ra[:, i]) / row_sq[i], 0.0)
            Xa = Y - mu[:, None] * C[i]
            alpha[active, i] = mu
        X[active] = Xa
        feas = np.max(np.maximum(Xa @ C.T - Ra, 0.0) / row_norm[None, :],
                      axis=1)
        move = np.max(np.abs(Xa - start), axis=1)
        # the iterate can park on a false plateau while the corrections keep
        # inflating toward a constraint-status flip, so convergence must be
        # read off the corrections, never the iterate movement alone
        corr = np.max(np.abs(alpha[active] - alpha_start) * row_norm[None, :],
                      axis=1)
        resid = np.maximum(feas, np.maximum(move, corr))
        last_resid[active] = resid
        keep = resid > tol
        if sweep % 300 == 299:
            # only a persistent feasibility violation marks an empty system;
            # a slow move with feas -> 0 is a thin-angle geometry still
            # converging toward the projection and must keep running
            stalled = (feas > 1e-5) & (feas > 0.9 * checkpoint[active])
            keep &= ~stalled
            checkpoint[active] = feas
        active = active[keep]
        if active.size == 0:
            break
    feas_final = np.max(np.maximum(X @ C.T - rhs, 0.0) / row_norm[None, :],
                        axis=1)
    return X, feas_final


def golden_min(fn, lo, hi, iters: int = _GOLDEN_ITERS):
    """Vectorized golden-section minimizer over per-point brackets.

    fn maps abscissae (B,) to values (B,) and must be unimodal on [lo, hi],
    which holds for the convex sections this is used on.  Fixed iteration
    count, so identical inputs give identical outputs.  Returns (argmin, min).
    """
    a = np.asarray(lo, dtype=float).copy()
    b = np.asarray(hi, dtype=float).copy()
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1 = fn(x1)
    f2 = fn(x2)
    for _ in range(iters):
        left = f1 < f2
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
        x1_new = np.where(left, b - _INVPHI * (b - a), x2)
        x2_new = np.where(left, x1, a + _INVPHI * (b - a))
        fresh = np.where(left, x1_new, x2_new)
        fv = fn(fresh)
        f1_old = f1
        f1 = np.where(left, fv, f2)
        f2 = np.where(left, f1_old, fv)
        x1, x2 = x1_new, x2_new
    xs = np.where(f1 < f2, x1, x2)
    vals = np.minimum(f1, f2)
    return xs, vals


# ---------------------------------------------------------------------------
# Set variants.

class Polyhedron(ConvexSet):
    """{z : C z <= d}.

    Rows with a zero normal and negative offset would be an implicit
    empty-set encoding and are rejected at construction; zero rows with
    d >= 0 are dropped as vacuous.  Feasibility of the remaining system is
    decided lazily by a phase-1 LP and cached.
    """

    def __init__(self, C, d):
        C = np.asarray(C, dtype=float)
        if C.ndim == 1:
            C = C[None, :]
        d = np.atleast_1d(np.asarray(d, dtype=float))
        if C.ndim != 2:
            raise DimensionMismatch("C must be a matrix")
        if C.shape[0] != d.size:
            raise DimensionMismatch(
                f"row count mismatch: C has {C.shape[0]} rows, d has {d.size}"
            )
        if not (np.all(np.isfinite(C)) and np.all(np.isfinite(d))):
            raise ValueError("polyhedron data must be finite")
        norms = np.linalg.norm(C, axis=1)
        zero = norms <= 1e-12
        if np.any(zero & (d < -1e-12)):
            raise ValueError(
                "zero-normal row with negative offset: encode an empty set "
                "explicitly instead"
            )
        keep = ~zero
        self.C = np.ascontiguousarray(C[keep])
        self.d = np.ascontiguousarray(d[keep])
        self._feasible: bool | None = True if self.C.shape[0] == 0 else None

    def __repr__(self):
        return f"Polyhedron(rows={self.n_rows}, dim={self.dim})"

    @property
    def dim(self) -> int:
        return self.C.shape[1]

    @property
    def n_rows(self) -> int:
        return self.C.shape[0]

    def is_feasible(self) -> bool:
        """Phase-1 LP feasibility, cached after the first call."""
        if self._feasible is None:
            res = solve_lp(np.zeros(self.dim), self, _feasibility_probe=True)
            self._feasible = res.status != "infeasible"
        return self._feasible

    def project_batch(self, P: np.ndarray) -> np.ndarray:
        P = _rows(P)
        if self.n_rows == 0:
            return P.copy()
        Q, resid = dykstra_halfspaces(self.C, self.d, P)
        if np.any(resid > 1e-7):
            if not self.is_feasible():
                raise EmptySet("cannot project onto an empty polyhedron")
            warnings.warn("Dykstra projection left residual above 1e-7",
                          stacklevel=3)
        return Q

    def distance_batch(self, P: np.ndarray) -> np.ndarray:
        P = _rows(P)
        if self.n_rows == 0:
            return np.zeros(P.shape[0])
        if self._feasible is False:
            return np.full(P.shape[0], np.inf)
        try:
            Q = self.project_batch(P)
        except EmptySet:
            return np.full(P.shape[0], np.inf)
        return np.linalg.norm(P - Q, axis=1)

    def project(self, p) -> np.ndarray:
        p = as_vector(p, self.dim, "point")
        q = self.project_batch(p[None, :])[0]
        self._validate_kkt(p, q)
        return q

    def _validate_kkt(self, p, q):
        # the step p - q must be a nonnegative combination of active rows
        r = p - q
        rn = np.linalg.norm(r)
        if rn <= 10 * DYKSTRA_TOL or self.n_rows == 0:
            return
        act = self.C @ q >= self.d - TOL_ACTIVE * (1.0 + np.abs(self.d))
        if not np.any(act):
            warnings.warn("projection step with no active rows", stacklevel=3)
            return
        _, res = nnls(self.C[act].T, r)
        if res > 1e-6 * (1.0 + rn):
            warnings.warn(
                f"projection KKT residual {res:.2e} exceeds tolerance",
                stacklevel=3,
            )


class Ball(ConvexSet):
    """Closed euclidean ball."""

    def __init__(self, center, radius):
        self.center = as_vector(center, name="center")
        self.radius = float(radius)
        if not (np.isfinite(self.radius) and self.radius >= 0.0):
            raise ValueError("radius must be finite and nonnegative")

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"

    @property
    def dim(self) -> int:
        return self.center.size

    def project_batch(self, P: np.ndarray) -> np.ndarray:
        P = _rows(P)
        D = P - self.center[None, :]
        n = np.linalg.norm(D, axis=1)
        scale = np.ones_like(n)
        out = n > self.radius
        scale[out] = self.radius / n[out]
        return self.center[None, :] + D * scale[:, None]

    def distance_batch(self, P: np.ndarray) -> np.ndarray:
        n = np.linalg.norm(_rows(P) - self.center[None, :], axis=1)
        return np.maximum(n - self.radius, 0.0)


class Singleton(ConvexSet):
    """One-point set."""

    def __init__(self, point):
        self.point = as_vector(point, name="point")

    def __repr__(self):
        return f"Singleton({self.point.tolist()})"

    @property
    def dim(self) -> int:
        return self.point.size

    def project_batch(self, P: np.ndarray) -> np.ndarray:
        P = _rows(P)
        return np.broadcast_to(self.point, P.shape).copy()

    def distance_batch(self, P: np.ndarray) -> np.ndarray:
        return np.linalg.norm(_rows(P) - self.point[None, :], axis=1)


class DirectionalCone(ConvexSet):
    """Union over lam >= 0 of lam * B(ybar, delta).

    For ||ybar|| < delta the generating ball holds the origin in its interior
    and the union is the whole space, which recovers the undirected case.
    The distance section g(lam) = ||p - lam ybar|| - lam delta is convex, so
    a golden-section search over lam >= 0 finds its minimum; the distance is
    the positive part of that minimum.
    """

    def __init__(self, ybar, delta):
        self.ybar = as_vector(ybar, name="ybar")
        self.delta = float(delta)
        if not (np.isfinite(self.delta) and self.delta >= 0.0):
            raise ValueError("delta must be finite and nonnegative")

    def __repr__(self):
        return f"DirectionalCone(ybar={self.ybar.tolist()}, delta={self.delta})"

    @property
    def dim(self) -> int:
        return self.ybar.size

    @property
    def whole_space(self) -> bool:
        return float(np.linalg.norm(self.ybar)) < self.delta

    def _lam_max(self, norms: np.ndarray) -> np.ndarray:
        denom = max(float(np.linalg.norm(self.ybar)) - self.delta, 1e-12)
        return 10.0 * (norms + 1.0) / denom

    def _best_lambda(self, P: np.ndarray):
        P = _rows(P)

        def g(lams):
            diff = P - lams[:, None] * self.ybar[None, :]
            return np.linalg.norm(diff, axis=1) - lams * self.delta

        lam, val = golden_min(g, np.zeros(P.shape[0]),
                              self._lam_max(np.linalg.norm(P, axis=1)))
        at_zero = g(np.zeros(P.shape[0]))
        pick0 = at_zero <= val
        return np.where(pick0, 0.0, lam), np.where(pick0, at_zero, val)

    def project_batch(self, P: np.ndarray) -> np.ndarray:
        # The union of balls is the revolution cone {z : <z, u> >= ||z|| cos t}
        # around u = ybar/||ybar|| with sin t = delta/||ybar||, so projection
        # splits into axis and radial components with a closed form; the
        # golden-section distance route above stays as the independent check.
        P = _rows(P)
        if self.whole_space:
            return P.copy()
        nrm = float(np.linalg.norm(self.ybar))
        if nrm <= 0.0:
            return np.zeros_like(P)
        u = self.ybar / nrm
        sin_t = min(self.delta / nrm, 1.0)
        cos_t = np.sqrt(max(1.0 - sin_t * sin_t, 0.0))
        a = P @ u
        perp = P - a[:, None] * u[None, :]
        t = np.linalg.norm(perp, axis=1)
        inside = (t * cos_t <= a * sin_t) & (a >= 0.0)
        s = a * cos_t + t * sin_t
        Q = np.zeros_like(P)
        Q[inside] = P[inside]
        edge = (~inside) & (s > 0.0) & (t > 1e-300)
        if np.any(edge):
            vhat = perp[edge] / t[edge, None]
            Q[edge] = s[edge, None] * (cos_t * u[None, :] + sin_t * vhat)
        return Q

    def distance_batch(self, P: np.ndarray) -> np.ndarray:
        P = _rows(P)
        if self.whole_space:
            return np.zeros(P.shape[0])
        _, val = self._best_lambda(P)
        return np.maximum(val, 0.0)


class ProductSet(ConvexSet):
    """Cartesian product; operations split over the factor blocks."""

    def __init__(self, factors):
        factors = tuple(factors)
        if not factors:
            raise ValueError("product needs at least one factor")
        self.factors = factors

    def __repr__(self):
        return f"ProductSet({list(self.factors)!r})"

    @property
    def dim(self) -> int:
        return sum(f.dim for f in self.factors)

    def _split(self, P):
        out = []
        at = 0
        for f in self.factors:
            out.append(P[:, at:at + f.dim])
            at += f.dim
        return out

    def project_batch(self, P: np.ndarray) -> np.ndarray:
        P = _rows(P)
        if P.shape[1] != self.dim:
            raise DimensionMismatch("product point has wrong length")
        return np.hstack([
            f.project_batch(block)
            for f, block in zip(self.factors, self._split(P))
        ])


# ---------------------------------------------------------------------------
# Module-level operation surface.

def project(s: ConvexSet, p) -> np.ndarray:
    return s.project(p)


def distance(s: ConvexSet, p) -> float:
    return s.distance(p)


def cone_distance(dc: DirectionalCone, p) -> float:
    """Distance from p to the conic neighborhood of dc."""
    return dc.distance(p)


def cone_contains(dc: DirectionalCone, p, tol: float = TOL_MEMBER) -> bool:
    return cone_distance(dc, p) <= tol


def normal_cone_generators(poly: Polyhedron, k,
                           tol_active: float = TOL_ACTIVE) -> np.ndarray:
    """Rows of poly.C active at k; these generate the normal cone there.

    Requires k to lie in the polyhedron up to tol_active (NotInSet
    otherwise).  Returns the raw active rows, shape (n_active, dim); an
    interior point yields an empty array.
    """
    k = as_vector(k, poly.dim, "point")
    if poly.n_rows == 0:
        return np.zeros((0, poly.dim))
    slack = poly.C @ k - poly.d
    norms = np.linalg.norm(poly.C, axis=1)
    if np.any(slack / norms > tol_active):
        raise NotInSet("point violates the constraint system")
    active = slack >= -tol_active * norms
    return poly.C[active].copy()


def project_onto_generated_cone(G: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Nearest point of cone{rows of G} to y, via nonnegative least squares."""
    y = np.asarray(y, dtype=float)
    if G.shape[0] == 0:
        return np.zeros_like(y)
    coef, _ = nnls(G.T, y)
    return G.T @ coef


# ---------------------------------------------------------------------------
# Deterministic LP: maximize objective . z over a polyhedron.

@dataclass(frozen=True)
class LpResult:
    """status is 'optimal', 'infeasible', or 'unbounded'; optimum and value
    are only meaningful for 'optimal'."""

    status: str
    optimum: np.ndarray | None = None
    value: float | None = None


def solve_lp(objective, poly: Polyhedron, max_iters: int = 20_000,
             _feasibility_probe: bool = False) -> LpResult:
    """Maximize objective . z subject to poly.C z <= poly.d, z free.

    Two-phase dense primal simplex.  Free variables are split z = u - w,
    slacks complete the starting basis, and Bland's smallest-index rule picks
    both the entering column and the leaving row, so the solve is
    deterministic and cannot cycle.  Infeasible and unbounded outcomes are
    ordinary results, not errors.
    """
    c_obj = as_vector(objective, poly.dim, "objective")
    A = poly.C
    b = poly.d.copy()
    m, n = A.shape
    if m == 0:
        if np.linalg.norm(c_obj) <= 1e-15:
            return LpResult("optimal", np.zeros(n), 0.0)
        return LpResult("unbounded")

    # columns: u (n), w (n), slacks (m), then any phase-1 artificials
    ncols = 2 * n + m
    T = np.zeros((m, ncols))
    T[:, :n] = A
    T[:, n:2 * n] = -A
    T[:, 2 * n:] = np.eye(m)
    rhs = b.copy()
    flip = rhs < 0
    T[flip] *= -1.0
    rhs[flip] *= -1.0

    basis = np.array([2 * n + i for i in range(m)])
    art_rows = np.where(flip)[0]
    if art_rows.size:
        Art = np.zeros((m, art_rows.size))
        for j, i in enumerate(art_rows):
            Art[i, j] = 1.0
            basis[i] = ncols + j
        T = np.hstack([T, Art])

    tol = 1e-9

    def run_simplex(T, rhs, basis, cost, iter_budget):
        """Minimize cost . x in place; returns (iterations, unbounded)."""
        it = 0
        mm = T.shape[0]
        while True:
            if it >= iter_budget:
                raise SimplexIterationLimit(
                    f"simplex exceeded {iter_budget} pivots"
                )
            reduced = cost - cost[basis] @ T
            candidates = np.where(reduced < -tol)[0]
            if candidates.size == 0:
                return it, False
            entering = int(candidates[0])  # Bland: smallest index
            col = T[:, entering]
            pos = col > tol
            if not np.any(pos):
                return it, True
            ratios = np.full(mm, np.inf)
            ratios[pos] = rhs[pos] / col[pos]
            best = np.min(ratios)
            ties = np.where(ratios <= best + 1e-12)[0]
            leave = int(ties[np.argmin(basis[ties])])
            piv = T[leave, entering]
            T[leave] /= piv
            rhs[leave] /= piv
            fac = T[:, entering].copy()
            fac[leave] = 0.0
            T -= np.outer(fac, T[leave])
            rhs -= fac * rhs[leave]
            np.copyto(rhs, 0.0, where=(rhs < 0) & (rhs > -1e-11))
            basis[leave] = entering
            it += 1

    used = 0
    if art_rows.size:
        cost1 = np.zeros(T.shape[1])
        cost1[ncols:] = 1.0
        used, unb = run_simplex(T, rhs, basis, cost1, max_iters)
        if unb:
            raise SimplexIterationLimit("phase-1 reported an unbounded ray")
        art_basic = basis >= ncols
        if float(np.sum(rhs[art_basic])) > 1e-7:
            return LpResult("infeasible")
        # pivot leftover artificials out; rows that cannot pivot are
        # redundant and get dropped
        drop = []
        for i in np.where(art_basic)[0]:
            row = T[i, :ncols]
            j = int(np.argmax(np.abs(row)))
            if abs(row[j]) > tol:
                piv = T[i, j]
                T[i] /= piv
                rhs[i] /= piv
                fac = T[:, j].copy()
                fac[i] = 0.0
                T -= np.outer(fac, T[i])
                rhs -= fac * rhs[i]
                basis[i] = j
            else:
                drop.append(i)
        if drop:
            keep = np.setdiff1d(np.arange(T.shape[0]), drop)
            T = T[keep]
            rhs = rhs[keep]
            basis = basis[keep]
        T = T[:, :ncols]

    if _feasibility_probe:
        return LpResult("optimal", np.zeros(n), 0.0)

    cost2 = np.zeros(T.shape[1])
    cost2[:n] = -c_obj          # maximize c.z == minimize -c.(u - w)
    cost2[n:2 * n] = c_obj
    _, unb = run_simplex(T, rhs, basis, cost2, max_iters - used)
    if unb:
        return LpResult("unbounded")
    x = np.zeros(T.shape[1])
    x[basis] = rhs
    z = x[:n] - x[n:2 * n]
    return LpResult("optimal", z, float(c_obj @ z))
