"""Embedded manifolds, constraint submanifolds, and discrete geodesic solvers.

Points and ambient vectors are plain float ndarrays. All geometry objects are
immutable after construction and safe to share across threads; every solver in
this module is a pure function of its inputs.

Built-in manifolds (plane, sphere) and constraints (circle, latitude circle,
single point) use exact level-set projections and analytic tangent splittings,
so no mesh error enters the curve calculus built on top of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "ON_MANIFOLD_TOL",
    "GEODESIC_TOL",
    "ORTHOGONALITY_TOL",
    "ProjectionError",
    "SolverError",
    "EmbeddedManifold",
    "ConstraintSubmanifold",
    "Plane",
    "Sphere",
    "Circle",
    "PointConstraint",
    "GeometryBudget",
    "project_point",
    "tangent_projection",
    "normal_component",
    "minimizing_geodesic",
    "minimizing_geodesic_to_submanifold",
    "geodesic_distance",
    "dist_to_submanifold",
    "check_normalization",
    "manifold_from_descriptor",
    "descriptor_of",
]

# Default tolerances; all solver entry points accept overrides.
ON_MANIFOLD_TOL = 1e-10
GEODESIC_TOL = 1e-8
ORTHOGONALITY_TOL = 1e-3

# Normalization thresholds that keep the chord/normal-component estimates
# used throughout the curve shortening machinery literally valid.
SECOND_FORM_MAX = 1.0 / 16.0
CURVATURE_MAX = 1.0 / 64.0
INJ_RADIUS_M_MIN = 8.0
INJ_RADIUS_N_MIN = 4.0
FOCAL_RADIUS_MIN = 4.0
CHORD_FACTOR_MAX = 2.0
CHORD_REGIME = 8.0


class ProjectionError(RuntimeError):
    """Projection onto a manifold is undefined or failed for the input."""


class SolverError(RuntimeError):
    """A geodesic solve did not reach its residual target.

    Carries the best iterate so callers can inspect or retry.
    """

    def __init__(self, message: str, *, residual: float | None = None,
                 iterations: int | None = None, best: np.ndarray | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.best = best


def _as_points(v) -> np.ndarray:
    return np.asarray(v, dtype=float)


class EmbeddedManifold:
    """Explicit embedding of a manifold in Euclidean space.

    Subclasses provide exact nearest-point projection, tangent projection,
    a scalar constraint residual, and the analytic normalization constants
    (second fundamental form bound, curvature bound, injectivity radius).
    """

    ambient_dim: int
    intrinsic_dim: int

    def project(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def tangent_project(self, pts: np.ndarray, vecs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def constraint_residual(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        raise NotImplementedError

    # analytic normalization data
    @property
    def second_form_bound(self) -> float:
        raise NotImplementedError

    @property
    def curvature_bound(self) -> float:
        raise NotImplementedError

    @property
    def injectivity_radius(self) -> float:
        raise NotImplementedError

    def normal_component(self, pts: np.ndarray, vecs: np.ndarray) -> np.ndarray:
        vecs = _as_points(vecs)
        return vecs - self.tangent_project(pts, vecs)

    def contains(self, pts: np.ndarray, tol: float = ON_MANIFOLD_TOL) -> bool:
        return bool(np.all(self.constraint_residual(_as_points(pts)) <= tol))


class ConstraintSubmanifold(EmbeddedManifold):
    """A closed submanifold on which curve endpoints are constrained to lie.

    Adds an orthonormal tangent basis used for endpoint-orthogonality checks.
    """

    def tangent_basis(self, p: np.ndarray) -> np.ndarray:
        """Orthonormal basis of the tangent space at p, shape (k, ambient_dim)."""
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Plane(EmbeddedManifold):
    """The flat subspace spanned by the first `dim` coordinates of R^ambient_dim.

    With dim == ambient_dim this is all of Euclidean space (the disk scenario);
    with dim < ambient_dim it is a coordinate plane such as z = 0 in R^3.
    """

    ambient_dim: int = 2
    dim: int = 2
    working_radius: float = 64.0

    def __post_init__(self):
        if not 1 <= self.dim <= self.ambient_dim:
            raise ValueError("plane dimension must satisfy 1 <= dim <= ambient_dim")

    @property
    def intrinsic_dim(self) -> int:
        return self.dim

    def project(self, pts):
        pts = _as_points(pts).copy()
        pts[..., self.dim:] = 0.0
        return pts

    def tangent_project(self, pts, vecs):
        vecs = _as_points(vecs).copy()
        vecs[..., self.dim:] = 0.0
        return vecs

    def constraint_residual(self, pts):
        pts = _as_points(pts)
        if self.dim == self.ambient_dim:
            return np.zeros(pts.shape[:-1])
        return np.linalg.norm(pts[..., self.dim:], axis=-1)

    def sample_points(self, rng, count):
        out = np.zeros((count, self.ambient_dim))
        out[:, : self.dim] = rng.uniform(-self.working_radius, self.working_radius,
                                         size=(count, self.dim))
        return out

    @property
    def second_form_bound(self):
        return 0.0

    @property
    def curvature_bound(self):
        return 0.0

    @property
    def injectivity_radius(self):
        return math.inf


@dataclass(frozen=True, eq=False)
class Sphere(EmbeddedManifold):
    """Round sphere of given radius centered at the origin of R^ambient_dim."""

    radius: float = 16.0
    ambient_dim: int = 3

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")

    @property
    def intrinsic_dim(self) -> int:
        return self.ambient_dim - 1

    def project(self, pts):
        pts = _as_points(pts)
        norms = np.linalg.norm(pts, axis=-1, keepdims=True)
        if np.any(norms == 0.0):
            raise ProjectionError("sphere projection undefined at the origin")
        return (self.radius / norms) * pts

    def tangent_project(self, pts, vecs):
        pts = _as_points(pts)
        vecs = _as_points(vecs)
        normals = pts / np.linalg.norm(pts, axis=-1, keepdims=True)
        radial = np.sum(vecs * normals, axis=-1, keepdims=True)
        return vecs - radial * normals

    def constraint_residual(self, pts):
        pts = _as_points(pts)
        return np.abs(np.linalg.norm(pts, axis=-1) - self.radius)

    def sample_points(self, rng, count):
        g = rng.normal(size=(count, self.ambient_dim))
        return self.radius * g / np.linalg.norm(g, axis=-1, keepdims=True)

    @property
    def second_form_bound(self):
        return 1.0 / self.radius

    @property
    def curvature_bound(self):
        return 1.0 / self.radius**2

    @property
    def injectivity_radius(self):
        return math.pi * self.radius


@dataclass(frozen=True, eq=False)
class Circle(ConstraintSubmanifold):
    """Circle in the x-y coordinate plane, at fixed values of the remaining axes.

    Covers the boundary circle of the disk scenario (ambient_dim=2), the
    equator of a sphere (ambient_dim=3, height=0), and latitude circles
    (height = sphere_radius * sin(angle), radius = sphere_radius * cos(angle)).
    """

    radius: float = 16.0
    center: tuple[float, float] = (0.0, 0.0)
    height: float = 0.0
    ambient_dim: int = 2

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("circle radius must be positive")
        if self.ambient_dim < 2:
            raise ValueError("circle needs ambient dimension >= 2")

    @property
    def intrinsic_dim(self) -> int:
        return 1

    def _offsets(self, pts):
        off = _as_points(pts)[..., :2] - np.asarray(self.center)
        return off

    def project(self, pts):
        pts = _as_points(pts)
        off = self._offsets(pts).copy()
        norms = np.linalg.norm(off, axis=-1, keepdims=True)
        # on the axis every circle point is nearest; break the tie at angle 0
        axis = norms[..., 0] == 0.0
        if np.any(axis):
            off = off.copy()
            off[axis] = (1.0, 0.0)
            norms = np.linalg.norm(off, axis=-1, keepdims=True)
        out = np.zeros(pts.shape[:-1] + (self.ambient_dim,))
        out[..., :2] = np.asarray(self.center) + (self.radius / norms) * off
        if self.ambient_dim > 2:
            out[..., 2] = self.height
        return out

    def tangent_project(self, pts, vecs):
        vecs = _as_points(vecs)
        off = self._offsets(pts)
        norms = np.linalg.norm(off, axis=-1, keepdims=True)
        tang = np.zeros(np.broadcast_shapes(vecs.shape[:-1], norms.shape[:-1]) + (self.ambient_dim,))
        tang[..., 0] = -off[..., 1]
        tang[..., 1] = off[..., 0]
        tang = tang / norms
        coef = np.sum(vecs * tang, axis=-1, keepdims=True)
        return coef * tang

    def tangent_basis(self, p):
        off = self._offsets(p)
        norm = float(np.linalg.norm(off))
        basis = np.zeros((1, self.ambient_dim))
        basis[0, 0] = -off[1] / norm
        basis[0, 1] = off[0] / norm
        return basis

    def constraint_residual(self, pts):
        pts = _as_points(pts)
        off = self._offsets(pts)
        res = np.abs(np.linalg.norm(off, axis=-1) - self.radius)
        if self.ambient_dim > 2:
            pin = np.zeros(self.ambient_dim - 2)
            pin[0] = self.height
            res = np.hypot(res, np.linalg.norm(pts[..., 2:] - pin, axis=-1))
        return res

    def sample_points(self, rng, count):
        ang = rng.uniform(0.0, 2.0 * math.pi, size=count)
        out = np.zeros((count, self.ambient_dim))
        out[:, 0] = self.center[0] + self.radius * np.cos(ang)
        out[:, 1] = self.center[1] + self.radius * np.sin(ang)
        if self.ambient_dim > 2:
            out[:, 2] = self.height
        return out

    @property
    def second_form_bound(self):
        # curvature of the circle as a curve in ambient space
        return 1.0 / self.radius

    @property
    def curvature_bound(self):
        return 0.0

    @property
    def injectivity_radius(self):
        return math.pi * self.radius


@dataclass(frozen=True, eq=False)
class PointConstraint(ConstraintSubmanifold):
    """A single point; the degenerate constraint for geodesic-loop problems."""

    location: tuple[float, ...] = (0.0, 0.0)

    @property
    def ambient_dim(self) -> int:  # type: ignore[override]
        return len(self.location)

    @property
    def intrinsic_dim(self) -> int:
        return 0

    def project(self, pts):
        pts = _as_points(pts)
        out = np.empty(pts.shape[:-1] + (self.ambient_dim,))
        out[...] = np.asarray(self.location)
        return out

    def tangent_project(self, pts, vecs):
        return np.zeros_like(_as_points(vecs))

    def tangent_basis(self, p):
        return np.zeros((0, self.ambient_dim))

    def constraint_residual(self, pts):
        pts = _as_points(pts)
        return np.linalg.norm(pts - np.asarray(self.location), axis=-1)

    def sample_points(self, rng, count):
        return np.tile(np.asarray(self.location, dtype=float), (count, 1))

    @property
    def second_form_bound(self):
        return 0.0

    @property
    def curvature_bound(self):
        return 0.0

    @property
    def injectivity_radius(self):
        return math.inf


# ---------------------------------------------------------------------------
# point-level operations


def project_point(m: EmbeddedManifold, v) -> np.ndarray:
    """Nearest-point projection of an ambient vector onto the manifold."""
    p = m.project(_as_points(v))
    res = float(np.max(m.constraint_residual(p)))
    if res > ON_MANIFOLD_TOL:
        raise ProjectionError(f"projection residual {res:.3e} exceeds {ON_MANIFOLD_TOL:.1e}")
    return p


def tangent_projection(m: EmbeddedManifold, p, v) -> np.ndarray:
    """Component of an ambient vector tangent to the manifold at p."""
    return m.tangent_project(_as_points(p), _as_points(v))


def normal_component(m: EmbeddedManifold, p, v) -> np.ndarray:
    """Component of an ambient vector normal to the manifold at p."""
    return m.normal_component(_as_points(p), _as_points(v))


# ---------------------------------------------------------------------------
# batched discrete geodesic solver

_TRIDIAG_CACHE: dict[int, np.ndarray] = {}


def _tridiag_denoms(n: int) -> np.ndarray:
    """Forward-elimination denominators for tridiag(-1, 2, -1) of size n."""
    got = _TRIDIAG_CACHE.get(n)
    if got is not None:
        return got
    denoms = np.empty(n)
    denoms[0] = 2.0
    for i in range(1, n):
        denoms[i] = 2.0 - 1.0 / denoms[i - 1]
    _TRIDIAG_CACHE[n] = denoms
    return denoms


def _tridiag_solve(denoms: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Thomas solve of tridiag(-1, b, -1) x = rhs with rhs shape (..., n, d).

    Implemented with per-row elementwise sweeps so a segment's solution is
    bit-identical whether it is solved alone or inside a larger batch.
    """
    n = denoms.shape[0]
    y = rhs.astype(float, copy=True)
    for i in range(1, n):
        y[..., i, :] += y[..., i - 1, :] / denoms[i - 1]
    x = np.empty_like(y)
    x[..., n - 1, :] = y[..., n - 1, :] / denoms[n - 1]
    for i in range(n - 2, -1, -1):
        x[..., i, :] = (y[..., i, :] + x[..., i + 1, :]) / denoms[i]
    return x


def _batch_energy(pts: np.ndarray) -> np.ndarray:
    """Sum of squared chord lengths per segment curve; shape (B,)."""
    d = np.diff(pts, axis=-2)
    return np.sum(d * d, axis=(-2, -1))


def solve_geodesic_batch(
    manifold: EmbeddedManifold,
    pts: np.ndarray,
    constraint: Optional[ConstraintSubmanifold] = None,
    *,
    tol: float = GEODESIC_TOL,
    max_iters: int = 200,
    precondition: bool = True,
):
    """Minimize the discrete Dirichlet energy of a batch of node chains.

    pts has shape (B, m+1, dim). pts[:, 0] is held fixed. Without a
    constraint, pts[:, -1] is also fixed; with one, the last node slides on
    the constraint submanifold, which yields the discrete free-boundary
    condition (last chord orthogonal to the constraint) at the minimum.

    Each iteration projects the nodal energy gradient to the tangent spaces,
    applies an inverse-Laplacian preconditioner (or a plain scaled gradient
    step when precondition=False), backtracks on the energy, and re-projects
    onto the manifold. The iteration stops per segment when

        m^2 * max_node |tangential gradient|  <=  tol,

    the same acceleration-scaled residual reported by geodesic certificates.

    Returns (pts, residuals, iterations, converged) with converged a boolean
    mask per segment. Nodes of converged segments are never touched again, so
    batch composition does not influence any individual result.
    """
    pts = np.array(pts, dtype=float)
    B, m1, dim = pts.shape
    m = m1 - 1
    free = constraint is not None
    n_unknown = (m - 1) + (1 if free else 0)
    residuals = np.zeros(B)
    iterations = np.zeros(B, dtype=int)
    if n_unknown <= 0 or m < 1:
        return pts, residuals, iterations, np.ones(B, dtype=bool)

    denoms = _tridiag_denoms(m - 1) if m > 1 else None
    scale = float(m * m)
    profile = (np.arange(1, m + 1) / m)[None, :, None]
    active = np.ones(B, dtype=bool)
    converged = np.zeros(B, dtype=bool)

    def _gradients(sub):
        gint = 2.0 * sub[:, 1:m] - sub[:, :m - 1] - sub[:, 2:]
        gint = manifold.tangent_project(sub[:, 1:m], gint)
        gend = None
        if free:
            gend = constraint.tangent_project(sub[:, m], sub[:, m] - sub[:, m - 1])
        return gint, gend

    def _residual(gint, gend):
        sq = np.sum(gint * gint, axis=-1)
        worst = np.max(sq, axis=-1) if sq.shape[1] else np.zeros(sq.shape[0])
        if gend is not None:
            worst = np.maximum(worst, np.sum(gend * gend, axis=-1))
        return scale * np.sqrt(worst)

    for it in range(max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        sub = pts[idx]
        gint, gend = _gradients(sub)
        res = _residual(gint, gend)
        residuals[idx] = res
        iterations[idx] = it
        done = res <= tol
        if np.any(done):
            converged[idx[done]] = True
            active[idx[done]] = False
            keep = ~done
            idx, sub = idx[keep], sub[keep]
            gint = gint[keep]
            if gend is not None:
                gend = gend[keep]
            if idx.size == 0:
                continue

        if precondition:
            # Newton step of the flat problem. With a sliding endpoint the
            # constrained system splits: solve the pinned-end tridiagonal
            # system, then add the linear profile carrying the endpoint move
            # z = m * (g_end + tangential part of the interior response).
            v = _tridiag_solve(denoms, gint) if m > 1 else np.zeros_like(gint)
            if free:
                vm1 = v[:, -1] if m > 1 else np.zeros((idx.size, dim))
                z = m * (gend + constraint.tangent_project(sub[:, m], vm1))
                step = np.concatenate([v, np.zeros((idx.size, 1, dim))], axis=1)
                step += profile * z[:, None, :]
            else:
                step = v
        else:
            step = 0.25 * gint
            if free:
                step = np.concatenate([step, 0.5 * gend[:, None, :]], axis=1)

        e0 = _batch_energy(sub)
        alpha = np.ones(idx.size)
        pending = np.arange(idx.size)
        accepted = np.zeros(idx.size, dtype=bool)
        cand_all = sub.copy()
        for _ in range(40):
            trial = sub[pending].copy()
            a = alpha[pending][:, None, None]
            trial[:, 1:m] = manifold.project(trial[:, 1:m] - a * step[pending][:, : m - 1])
            if free:
                trial[:, m] = constraint.project(trial[:, m] - a[:, 0] * step[pending][:, -1])
            e1 = _batch_energy(trial)
            ok = e1 <= e0[pending]
            if np.any(ok):
                rows = pending[ok]
                cand_all[rows] = trial[ok]
                accepted[rows] = True
                pending = pending[~ok]
            if pending.size == 0:
                break
            alpha[pending] *= 0.5
        # segments whose line search stalled keep their nodes and stop moving
        if np.any(~accepted):
            stalled = idx[~accepted]
            active[stalled] = False
        moved = idx[accepted]
        pts[moved] = cand_all[accepted]

    # final residual refresh for segments that ran until max_iters
    idx = np.flatnonzero(active)
    if idx.size:
        gint, gend = _gradients(pts[idx])
        res = _residual(gint, gend)
        residuals[idx] = res
        converged[idx] = res <= tol
    return pts, residuals, iterations, converged


def _chord_nodes(a: np.ndarray, b: np.ndarray, k: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, k + 1)[:, None]
    return a[None, :] * (1.0 - t) + b[None, :] * t


def _solve_single(manifold, nodes, constraint=None, *, tol, max_iters, precondition=True):
    pts, res, iters, ok = solve_geodesic_batch(
        manifold, nodes[None, :, :], constraint,
        tol=tol, max_iters=max_iters, precondition=precondition)
    if not ok[0]:
        raise SolverError(
            f"geodesic solve stopped at residual {res[0]:.3e} after {iters[0]} iterations "
            f"(target {tol:.1e})",
            residual=float(res[0]), iterations=int(iters[0]), best=pts[0])
    return pts[0]


def minimizing_geodesic(m: EmbeddedManifold, p, q, k: int = 16,
                        tol: float = GEODESIC_TOL, max_iters: int = 200,
                        precondition: bool = True):
    """Discrete minimizing geodesic between two points of the manifold.

    Returns a DiscreteCurve with k+1 samples, endpoints exactly p and q,
    solved to the given acceleration-scaled residual. The chord between the
    endpoints, projected onto the manifold, seeds the descent; within the
    normalization regime (endpoint distance at most 4) the minimizer there
    is unique.
    """
    from .curve import DiscreteCurve

    p = _as_points(p)
    q = _as_points(q)
    if k < 1:
        raise ValueError("need at least one sample interval")
    nodes = _chord_nodes(p, q, k)
    if k > 1:
        nodes[1:-1] = m.project(nodes[1:-1])
    nodes[0], nodes[-1] = p, q
    nodes = _solve_single(m, nodes, tol=tol, max_iters=max_iters,
                          precondition=precondition)
    return DiscreteCurve(nodes, m)


def minimizing_geodesic_to_submanifold(m: EmbeddedManifold, n: ConstraintSubmanifold,
                                       p, k: int = 16, tol: float = GEODESIC_TOL,
                                       max_iters: int = 200, precondition: bool = True):
    """Discrete minimizing geodesic from a point to the constraint submanifold.

    The returned curve runs from p (parameter 0) to a point of the constraint
    (parameter 1); at the minimum the final chord is orthogonal to the
    constraint's tangent space. Seeded from the chord to the ambient-nearest
    constraint point, so ties between minimizers resolve deterministically.
    """
    from .curve import DiscreteCurve

    p = _as_points(p)
    foot = n.project(p)
    nodes = _chord_nodes(p, foot, k)
    if k > 1:
        nodes[1:-1] = m.project(nodes[1:-1])
    nodes[0], nodes[-1] = p, foot
    nodes = _solve_single(m, nodes, constraint=n, tol=tol, max_iters=max_iters,
                          precondition=precondition)
    return DiscreteCurve(nodes, m)


def geodesic_distance(m: EmbeddedManifold, p, q, k: int = 64,
                      tol: float = GEODESIC_TOL) -> float:
    """Length of the discrete minimizing geodesic between p and q."""
    return minimizing_geodesic(m, p, q, k=k, tol=tol).length()


def dist_to_submanifold(m: EmbeddedManifold, n: ConstraintSubmanifold, p,
                        k: int = 64, tol: float = GEODESIC_TOL) -> float:
    """Length of the discrete minimizing geodesic from p to the constraint."""
    return minimizing_geodesic_to_submanifold(m, n, p, k=k, tol=tol).length()


# ---------------------------------------------------------------------------
# normalization report


@dataclass(frozen=True)
class GeometryBudget:
    """Measured normalization constants and their pass/fail verdicts.

    A run on a non-conforming pair is a report outcome, never an exception;
    downstream drivers gate on `conforming`.
    """

    sup_AM: float
    sup_AN: float
    inj_radius_M: float
    curvature_M: float
    inj_radius_N: float
    focal_radius_N: float
    chord_factor_M: float
    chord_factor_N: float
    sampled_AM: float
    sampled_AN: float
    sample_budget: int
    seed: int
    checks: dict = field(default_factory=dict)

    @property
    def conforming(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return None
            return x
        return {
            "sup_AM": clean(self.sup_AM),
            "sup_AN": clean(self.sup_AN),
            "inj_radius_M": clean(self.inj_radius_M),
            "curvature_M": clean(self.curvature_M),
            "inj_radius_N": clean(self.inj_radius_N),
            "focal_radius_N": clean(self.focal_radius_N),
            "chord_factor_M": clean(self.chord_factor_M),
            "chord_factor_N": clean(self.chord_factor_N),
            "sampled_AM": clean(self.sampled_AM),
            "sampled_AN": clean(self.sampled_AN),
            "sample_budget": self.sample_budget,
            "seed": self.seed,
            "checks": dict(self.checks),
            "conforming": self.conforming,
        }


def focal_radius(m: EmbeddedManifold, n: ConstraintSubmanifold) -> float:
    """Focal radius of the constraint inside the host manifold.

    Analytic per built-in pair: geodesics leaving a circle orthogonally inside
    a plane focus at its center; those leaving a latitude circle of a sphere
    focus at the poles; a point constraint inherits the host's conjugate
    radius.
    """
    if isinstance(n, PointConstraint):
        return m.injectivity_radius
    if isinstance(m, Plane) and isinstance(n, Circle):
        return n.radius
    if isinstance(m, Sphere) and isinstance(n, Circle):
        lat = math.asin(max(-1.0, min(1.0, n.height / m.radius)))
        return m.radius * (math.pi / 2.0 - abs(lat))
    return math.inf


def _chord_pairs(mfd: EmbeddedManifold, rng: np.random.Generator, count: int):
    """Random point pairs with ambient separation inside the chord regime."""
    xs = mfd.sample_points(rng, count)
    if isinstance(mfd, Sphere):
        theta = rng.uniform(0.0, 2.0 * math.asin(min(1.0, CHORD_REGIME / (2.0 * mfd.radius))),
                            size=count)
        tang = mfd.tangent_project(xs, rng.normal(size=xs.shape))
        tang /= np.linalg.norm(tang, axis=-1, keepdims=True)
        ys = np.cos(theta)[:, None] * xs + np.sin(theta)[:, None] * mfd.radius * tang
    elif isinstance(mfd, Circle):
        theta = rng.uniform(-min(math.pi, CHORD_REGIME / mfd.radius),
                            min(math.pi, CHORD_REGIME / mfd.radius), size=count)
        off = xs[:, :2] - np.asarray(mfd.center)
        c, s = np.cos(theta), np.sin(theta)
        rot = np.empty_like(off)
        rot[:, 0] = c * off[:, 0] - s * off[:, 1]
        rot[:, 1] = s * off[:, 0] + c * off[:, 1]
        ys = xs.copy()
        ys[:, :2] = np.asarray(mfd.center) + rot
    else:
        delta = rng.normal(size=xs.shape)
        delta *= (rng.uniform(0.0, CHORD_REGIME, size=(count, 1))
                  / np.linalg.norm(delta, axis=-1, keepdims=True))
        ys = mfd.project(xs + delta)
        far = np.linalg.norm(ys - xs, axis=-1) > CHORD_REGIME
        ys[far] = xs[far]
    return xs, ys


def _measured_second_form(mfd, xs, ys):
    d = ys - xs
    dist = np.linalg.norm(d, axis=-1)
    perp = np.linalg.norm(mfd.normal_component(ys, d), axis=-1)
    mask = dist > 1e-9
    if not np.any(mask):
        return 0.0
    return float(np.max(2.0 * perp[mask] / dist[mask] ** 2))


def _measured_chord_factor(mfd, xs, ys, k, tol):
    chords = np.linalg.norm(ys - xs, axis=-1)
    mask = chords > 1e-9
    if not np.any(mask):
        return 1.0
    t = np.linspace(0.0, 1.0, k + 1)[None, :, None]
    nodes = xs[mask][:, None, :] * (1.0 - t) + ys[mask][:, None, :] * t
    nodes[:, 1:-1] = mfd.project(nodes[:, 1:-1])
    pts, res, _, ok = solve_geodesic_batch(mfd, nodes, tol=tol)
    lengths = np.sum(np.linalg.norm(np.diff(pts, axis=1), axis=-1), axis=-1)
    return float(np.max(lengths / chords[mask]))


def check_normalization(m: EmbeddedManifold, n: ConstraintSubmanifold,
                        sample_budget: int = 256, seed: int = 0,
                        k_segment: int = 16) -> GeometryBudget:
    """Measure the normalization constants and report pass/fail per condition.

    Analytic bounds come from the manifold classes; the second-fundamental-form
    and chord-versus-distance bounds are additionally probed on sampled point
    pairs with ambient separation at most 8, using the discrete geodesic
    solver for intrinsic distances.
    """
    rng = np.random.default_rng(seed)
    xs_m, ys_m = _chord_pairs(m, rng, sample_budget)
    xs_n, ys_n = _chord_pairs(n, rng, sample_budget)

    sampled_am = _measured_second_form(m, xs_m, ys_m)
    sampled_an = _measured_second_form(n, xs_n, ys_n)
    chord_m = _measured_chord_factor(m, xs_m, ys_m, k_segment, GEODESIC_TOL)
    chord_n = _measured_chord_factor(n, xs_n, ys_n, k_segment, GEODESIC_TOL)

    sup_am = m.second_form_bound
    sup_an = n.second_form_bound
    checks = {
        "second_form_M": sup_am <= SECOND_FORM_MAX,
        "second_form_N": sup_an <= SECOND_FORM_MAX,
        "injectivity_M": m.injectivity_radius >= INJ_RADIUS_M_MIN,
        "curvature_M": m.curvature_bound <= CURVATURE_MAX,
        "injectivity_N": n.injectivity_radius >= INJ_RADIUS_N_MIN,
        "focal_N": focal_radius(m, n) >= FOCAL_RADIUS_MIN,
        "chord_factor_M": chord_m <= CHORD_FACTOR_MAX,
        "chord_factor_N": chord_n <= CHORD_FACTOR_MAX,
    }
    return GeometryBudget(
        sup_AM=sup_am, sup_AN=sup_an,
        inj_radius_M=m.injectivity_radius, curvature_M=m.curvature_bound,
        inj_radius_N=n.injectivity_radius, focal_radius_N=focal_radius(m, n),
        chord_factor_M=chord_m, chord_factor_N=chord_n,
        sampled_AM=sampled_am, sampled_AN=sampled_an,
        sample_budget=sample_budget, seed=seed, checks=checks)


# ---------------------------------------------------------------------------
# JSON scenario descriptors


def manifold_from_descriptor(obj: dict):
    """Build (manifold, constraint) from a JSON scenario descriptor.

    Example: {"kind": "sphere", "radius": 16.0, "constraint": {"kind": "equator"}}.
    """
    kind = obj.get("kind")
    if kind == "plane":
        mfd = Plane(ambient_dim=int(obj.get("ambient_dim", 2)),
                    dim=int(obj.get("dim", obj.get("ambient_dim", 2))))
    elif kind == "sphere":
        mfd = Sphere(radius=float(obj.get("radius", 16.0)),
                     ambient_dim=int(obj.get("ambient_dim", 3)))
    else:
        raise ValueError(f"unknown manifold kind: {kind!r}")

    cobj = obj.get("constraint")
    constraint = None
    if cobj is not None:
        ckind = cobj.get("kind")
        if ckind == "circle":
            center = tuple(float(x) for x in cobj.get("center", (0.0, 0.0)))
            constraint = Circle(radius=float(cobj["radius"]), center=center,
                                height=float(cobj.get("height", 0.0)),
                                ambient_dim=mfd.ambient_dim)
        elif ckind == "equator":
            if not isinstance(mfd, Sphere):
                raise ValueError("equator constraint requires a sphere manifold")
            constraint = Circle(radius=mfd.radius, ambient_dim=mfd.ambient_dim)
        elif ckind == "latitude":
            if not isinstance(mfd, Sphere):
                raise ValueError("latitude constraint requires a sphere manifold")
            ang = float(cobj["angle"])
            constraint = Circle(radius=mfd.radius * math.cos(ang),
                                height=mfd.radius * math.sin(ang),
                                ambient_dim=mfd.ambient_dim)
        elif ckind == "point":
            constraint = PointConstraint(tuple(float(x) for x in cobj["location"]))
        else:
            raise ValueError(f"unknown constraint kind: {ckind!r}")
    return mfd, constraint


def descriptor_of(m: EmbeddedManifold, n: ConstraintSubmanifold | None = None) -> dict:
    """Inverse of manifold_from_descriptor for the built-in types."""
    if isinstance(m, Plane):
        desc: dict = {"kind": "plane", "ambient_dim": m.ambient_dim, "dim": m.dim}
    elif isinstance(m, Sphere):
        desc = {"kind": "sphere", "radius": m.radius, "ambient_dim": m.ambient_dim}
    else:
        raise ValueError(f"no descriptor for {type(m).__name__}")
    if n is not None:
        if isinstance(n, Circle):
            desc["constraint"] = {"kind": "circle", "radius": n.radius,
                                  "center": list(n.center), "height": n.height}
        elif isinstance(n, PointConstraint):
            desc["constraint"] = {"kind": "point", "location": list(n.location)}
        else:
            raise ValueError(f"no descriptor for {type(n).__name__}")
    return desc
