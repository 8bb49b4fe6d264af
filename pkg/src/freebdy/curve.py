"""Discrete curves on an embedded manifold and their energy calculus.

A curve is a uniformly parametrized chain of on-manifold samples over [0, 1].
The discrete Dirichlet energy K * sum |p_{j+1} - p_j|^2 is exactly the energy
of the chord-interpolated curve, so the classical facts (length^2 <= energy
with equality at constant speed, the square-root Holder bound, Wirtinger-type
inequalities) hold for the discrete objects without quadrature slack.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .manifold import (
    ON_MANIFOLD_TOL,
    ConstraintSubmanifold,
    EmbeddedManifold,
)

__all__ = [
    "BREAK_ANGLE_TOL",
    "CurveValidationError",
    "GridMismatchError",
    "DiscreteCurve",
    "ReparamMap",
    "CurveClassMembership",
    "w12_distance",
    "reparametrize_constant_speed",
    "holder_bound_check",
    "curve_class_membership",
    "curve_to_dict",
    "curve_from_dict",
    "curve_to_csv",
]

# Turning angle beyond which a node counts as a genuine corner of the polyline.
BREAK_ANGLE_TOL = 1e-4


class CurveValidationError(ValueError):
    """A curve violates its on-manifold or endpoint invariants."""


class GridMismatchError(ValueError):
    """Two curves do not share a parameter grid; resample before comparing."""


# --- array-level kernels (shared with the shortening and validation modules)


def chord_lengths(samples: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.diff(samples, axis=0), axis=-1)


def polyline_length(samples: np.ndarray) -> float:
    return float(np.sum(chord_lengths(samples)))


def dirichlet_energy(samples: np.ndarray, dt: float) -> float:
    d = np.diff(samples, axis=0)
    return float(np.sum(d * d) / dt)


def l2_sq_trapezoid(diff: np.ndarray, dt: float) -> float:
    sq = np.sum(diff * diff, axis=-1)
    return float(np.trapezoid(sq, dx=dt))


def w12_sq(a: np.ndarray, b: np.ndarray, dt: float) -> float:
    diff = a - b
    return l2_sq_trapezoid(diff, dt) + dirichlet_energy(diff, dt)


def turning_angles(samples: np.ndarray) -> np.ndarray:
    """Turning angle at each interior node, NaN where a chord degenerates."""
    d = np.diff(samples, axis=0)
    norms = np.linalg.norm(d, axis=-1)
    out = np.full(samples.shape[0] - 2, np.nan)
    ok = (norms[:-1] > 0) & (norms[1:] > 0)
    if np.any(ok):
        u = d[:-1][ok] / norms[:-1][ok, None]
        v = d[1:][ok] / norms[1:][ok, None]
        dots = np.clip(np.sum(u * v, axis=-1), -1.0, 1.0)
        out[ok] = np.arccos(dots)
    return out


# --- curve objects


@dataclass(frozen=True, eq=False)
class DiscreteCurve:
    """K+1 on-manifold samples at the uniform parameters j/K.

    Immutable value object: the sample array is copied and write-protected at
    construction, and every operation returns a new curve.
    """

    samples: np.ndarray
    manifold: EmbeddedManifold
    endpoints_on: Optional[ConstraintSubmanifold] = None

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 2:
            raise CurveValidationError("curve needs a (K+1, dim) sample array with K >= 1")
        if arr.shape[1] != self.manifold.ambient_dim:
            raise CurveValidationError(
                f"sample dimension {arr.shape[1]} != ambient {self.manifold.ambient_dim}")
        if not np.all(np.isfinite(arr)):
            raise CurveValidationError("curve samples must be finite")
        res = float(np.max(self.manifold.constraint_residual(arr)))
        if res > ON_MANIFOLD_TOL:
            raise CurveValidationError(
                f"sample off manifold: residual {res:.3e} > {ON_MANIFOLD_TOL:.1e}")
        if self.endpoints_on is not None:
            eres = float(np.max(self.endpoints_on.constraint_residual(arr[[0, -1]])))
            if eres > ON_MANIFOLD_TOL:
                raise CurveValidationError(
                    f"endpoint off constraint: residual {eres:.3e} > {ON_MANIFOLD_TOL:.1e}")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def segments(self) -> int:
        return self.samples.shape[0] - 1

    @property
    def params(self) -> np.ndarray:
        k = self.segments
        return np.arange(k + 1) / k

    def energy(self) -> float:
        """Discrete Dirichlet energy K * sum of squared chord lengths."""
        return dirichlet_energy(self.samples, 1.0 / self.segments)

    def length(self) -> float:
        return polyline_length(self.samples)

    def speeds(self) -> np.ndarray:
        return chord_lengths(self.samples) * self.segments

    @cached_property
    def constant_speed(self) -> bool:
        s = self.speeds()
        top = float(np.max(s))
        if top == 0.0:
            return True
        return float(np.max(s) - np.min(s)) <= 1e-8 * top

    def is_point(self, tol: float = 0.0) -> bool:
        return self.length() <= tol

    def point_at(self, t: float) -> np.ndarray:
        """Chord-interpolated position at an arbitrary parameter."""
        k = self.segments
        x = min(max(float(t), 0.0), 1.0) * k
        j = min(int(math.floor(x)), k - 1)
        frac = x - j
        return (1.0 - frac) * self.samples[j] + frac * self.samples[j + 1]

    def with_samples(self, samples: np.ndarray) -> "DiscreteCurve":
        return DiscreteCurve(samples, self.manifold, self.endpoints_on)

    def resampled(self, k: int) -> "DiscreteCurve":
        """Chord-interpolate onto k+1 uniform parameters and re-project."""
        t = np.arange(k + 1) / k
        old = self.samples
        x = t * self.segments
        j = np.minimum(x.astype(int), self.segments - 1)
        frac = (x - j)[:, None]
        pts = (1.0 - frac) * old[j] + frac * old[j + 1]
        pts[0], pts[-1] = old[0], old[-1]
        if k > 1:
            pts[1:-1] = self.manifold.project(pts[1:-1])
        return self.with_samples(pts)


@dataclass(frozen=True, eq=False)
class ReparamMap:
    """Monotone piecewise-linear surjection of [0, 1] onto itself."""

    knots_t: np.ndarray
    knots_value: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.knots_t, dtype=float)
        v = np.asarray(self.knots_value, dtype=float)
        if t.shape != v.shape or t.ndim != 1 or t.shape[0] < 2:
            raise ValueError("reparametrization needs matching 1-d knot arrays")
        if t[0] != 0.0 or t[-1] != 1.0 or abs(v[0]) > 1e-15 or abs(v[-1] - 1.0) > 1e-12:
            raise ValueError("reparametrization must map [0, 1] onto [0, 1]")
        if np.any(np.diff(v) < -1e-15):
            raise ValueError("reparametrization must be non-decreasing")
        object.__setattr__(self, "knots_t", t)
        object.__setattr__(self, "knots_value", v)

    @classmethod
    def identity(cls) -> "ReparamMap":
        return cls(np.array([0.0, 1.0]), np.array([0.0, 1.0]))

    def __call__(self, t):
        return np.interp(t, self.knots_t, self.knots_value)

    def max_identity_deviation(self) -> float:
        return float(np.max(np.abs(self.knots_value - self.knots_t)))


def w12_distance(c1: DiscreteCurve, c2: DiscreteCurve) -> float:
    """Sobolev distance of two curves sampled on the same parameter grid.

    Combines the trapezoid L^2 term with the Dirichlet quadrature of the
    difference of derivatives, all in ambient coordinates.
    """
    if c1.samples.shape != c2.samples.shape:
        raise GridMismatchError(
            f"curves sampled on different grids ({c1.segments} vs {c2.segments} "
            "segments); resample one of them first")
    return math.sqrt(w12_sq(c1.samples, c2.samples, 1.0 / c1.segments))


def reparametrize_constant_speed(c: DiscreteCurve):
    """Resample a curve uniformly by arc length.

    Returns (curve, P) where P is the monotone map with input = output o P.
    The image and both endpoints are preserved; interior samples land on the
    original polyline and are then re-projected onto the manifold. A curve of
    zero length comes back unchanged with the identity map.
    """
    old = c.samples
    k = c.segments
    chords = chord_lengths(old)
    cum = np.concatenate([[0.0], np.cumsum(chords)])
    total = cum[-1]
    if total <= 0.0:
        return c.with_samples(old), ReparamMap.identity()

    targets = total * np.arange(k + 1) / k
    seg = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, k - 1)
    denom = np.where(chords[seg] > 0.0, chords[seg], 1.0)
    frac = np.clip((targets - cum[seg]) / denom, 0.0, 1.0)[:, None]
    pts = (1.0 - frac) * old[seg] + frac * old[seg + 1]
    pts[0], pts[-1] = old[0], old[-1]
    if k > 1:
        pts[1:-1] = c.manifold.project(pts[1:-1])
    pmap = ReparamMap(np.arange(k + 1) / k, cum / total)
    return c.with_samples(pts), pmap


def holder_bound_check(c: DiscreteCurve, x: float, y: float):
    """Square-root Holder bound |c(x)-c(y)|^2 <= |x-y| * E(c) at two parameters."""
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise ValueError("parameters must lie in [0, 1]")
    lhs = float(np.sum((c.point_at(x) - c.point_at(y)) ** 2))
    rhs = abs(y - x) * c.energy()
    ok = lhs <= rhs * (1.0 + 1e-12) + 1e-15
    return lhs, rhs, ok


@dataclass(frozen=True)
class CurveClassMembership:
    """Verdict on membership in the admissible piecewise-geodesic class.

    The class with parameter L holds constant-speed curves with endpoints on
    the constraint, at most L-1 corners, every geodesic piece of length at
    most 1, and Lipschitz constant at most L.
    """

    L: int
    break_count: int
    max_segment_length: float
    lipschitz: float
    constant_speed: bool
    endpoints_on_constraint: bool

    @property
    def verdict(self) -> bool:
        return (self.break_count <= self.L - 1
                and self.max_segment_length <= 1.0 + 1e-9
                and self.lipschitz <= self.L * (1.0 + 1e-9)
                and self.constant_speed
                and self.endpoints_on_constraint)


def curve_class_membership(c: DiscreteCurve, L: int,
                           constraint: ConstraintSubmanifold | None = None,
                           break_angle_tol: float = BREAK_ANGLE_TOL) -> CurveClassMembership:
    """Classify a curve against the admissible class with parameter L.

    Corners are inferred from samples: any interior node whose turning angle
    exceeds the angular tolerance counts as a break point.
    """
    n = constraint if constraint is not None else c.endpoints_on
    on_n = False
    if n is not None:
        on_n = bool(np.max(n.constraint_residual(c.samples[[0, -1]])) <= ON_MANIFOLD_TOL)
    angles = turning_angles(c.samples)
    is_break = np.where(np.isnan(angles), False, angles > break_angle_tol)
    break_count = int(np.sum(is_break))
    bounds = np.concatenate([[0], np.flatnonzero(is_break) + 1, [c.segments]])
    chords = chord_lengths(c.samples)
    cum = np.concatenate([[0.0], np.cumsum(chords)])
    seg_lengths = np.diff(cum[bounds])
    max_seg = float(np.max(seg_lengths)) if seg_lengths.size else 0.0
    lipschitz = float(np.max(chords) * c.segments)
    return CurveClassMembership(
        L=L, break_count=break_count, max_segment_length=max_seg,
        lipschitz=lipschitz, constant_speed=c.constant_speed,
        endpoints_on_constraint=on_n)


# --- serialization (schema shared with the CLI)


def curve_to_dict(c: DiscreteCurve) -> dict:
    return {
        "ambient_dim": c.manifold.ambient_dim,
        "params": [float(t) for t in c.params],
        "samples": [[float(x) for x in row] for row in c.samples],
        "endpoints_on_constraint": c.endpoints_on is not None,
    }


def curve_from_dict(obj: dict, manifold: EmbeddedManifold,
                    constraint: ConstraintSubmanifold | None = None) -> DiscreteCurve:
    samples = np.asarray(obj["samples"], dtype=float)
    if samples.ndim != 2 or samples.shape[1] != int(obj["ambient_dim"]):
        raise CurveValidationError("sample array does not match declared ambient_dim")
    wants_constraint = bool(obj.get("endpoints_on_constraint", False))
    return DiscreteCurve(samples, manifold,
                         constraint if wants_constraint else None)


def curve_to_csv(c: DiscreteCurve) -> str:
    """One sample per row: parameter then ambient coordinates."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + [f"x{i}" for i in range(c.manifold.ambient_dim)])
    for t, row in zip(c.params, c.samples):
        writer.writerow([format(t, ".17g")] + [format(v, ".17g") for v in row])
    return buf.getvalue()
