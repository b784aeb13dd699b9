"""Certified region-of-attraction level sets for the mass-spring-damper loops.

Four estimates are computed from the robustness bounds: a combined-state
level for the two-loop scheme (MFC1), a split level that exploits the
disturbance-free model loop (MFC2, level c_star + c_tilde), and one level
each for the plain and high-gain single-loop designs.  Invalid estimates
(negative radicand or radius) are first-class absent results carrying the
failing reason; they are never silent zeros.

All sets are quadratic-form sublevel sets.  Helpers map the scaled frames
back to physical coordinates for plotting and sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .plant import MsdParams, sigma1_bar
from .synthesis import LyapunovCertificate

__all__ = [
    "RoaEstimate",
    "RegionSweep",
    "aux_radius",
    "r_mfc1",
    "r_mfc2",
    "r_sl",
    "r_slhg",
    "c_star",
    "c_star_budget",
    "compare_levels",
    "ellipse_boundary",
    "estimate_mfc1",
    "estimate_mfc2",
    "estimate_sl",
    "estimate_slhg",
    "mfc2_region_sweep",
    "polygon_area",
]

REASON_DAMPING = "gamma-below-damping-threshold"
REASON_RADICAND = "negative-radicand"
REASON_RADIUS = "negative-radius"
REASON_CSTAR = "c-star-exceeds-budget"


def aux_radius(
    p: MsdParams, gamma_bound: float, ref_norm: float
) -> tuple[float | None, str | None]:
    """Shared radius block of all level formulas.

    sqrt((sqrt((m Gamma)^2 - dc_d^2) - |dk|) / sigma1_bar - 3/4 |v|^2) - 3/2 |v|
    where |v| is the norm of the shifted reference state.  Returns
    (radius, None) or (None, reason) when a radicand or the radius goes
    negative.  A vanishing sigma1_bar (purely linear uncertainty) is outside
    the formula's scope and raises ZeroDivisionError.
    """
    s1b = sigma1_bar(p)
    if s1b == 0.0:
        raise ZeroDivisionError(
            "sigma1_bar is zero; the cubic-uncertainty level formulas do not "
            "apply to purely linear uncertainty"
        )
    inner = (p.m * gamma_bound) ** 2 - p.dc_d**2
    if inner <= 0.0:
        return None, REASON_DAMPING
    core = (math.sqrt(inner) - abs(p.dk)) / s1b - 0.75 * ref_norm * ref_norm
    if core < 0.0:
        return None, REASON_RADICAND
    r = math.sqrt(core) - 1.5 * ref_norm
    if r < 0.0:
        return None, REASON_RADIUS
    return r, None


def r_mfc1(
    p: MsdParams, gamma_bound: float, ref_norm: float
) -> tuple[float | None, str | None]:
    """Combined-state radius for the two-loop scheme (equals aux_radius / sqrt(2))."""
    s1b = sigma1_bar(p)
    if s1b == 0.0:
        raise ZeroDivisionError(
            "sigma1_bar is zero; the cubic-uncertainty level formulas do not "
            "apply to purely linear uncertainty"
        )
    inner = (p.m * gamma_bound) ** 2 - p.dc_d**2
    if inner <= 0.0:
        return None, REASON_DAMPING
    core = (math.sqrt(inner) - abs(p.dk)) / (2.0 * s1b) - 0.375 * ref_norm * ref_norm
    if core < 0.0:
        return None, REASON_RADICAND
    r = math.sqrt(core) - 1.5 / math.sqrt(2.0) * ref_norm
    if r < 0.0:
        return None, REASON_RADIUS
    return r, None


def c_star(vartheta: float, P: np.ndarray, x_tilde_star_0: Sequence[float]) -> float:
    """Model-loop level vartheta * e0' P e0 for the initial model error e0."""
    if vartheta <= 0:
        raise ValueError("vartheta must be positive")
    e0 = np.asarray(x_tilde_star_0, dtype=float)
    return float(vartheta * e0 @ np.asarray(P) @ e0)


def c_star_budget(
    p: MsdParams, gamma_bound: float, ref_norm: float, vartheta: float, lam_min: float
) -> float:
    """Largest model-loop level that still leaves a nonnegative split radius.

    Equals vartheta * lambda_min * aux_radius^2; above it the split estimate
    is absent.
    """
    ra, reason = aux_radius(p, gamma_bound, ref_norm)
    if ra is None:
        raise ValueError(f"no valid level budget: {reason}")
    return vartheta * lam_min * ra * ra


def r_mfc2(
    p: MsdParams,
    gamma_bound: float,
    ref_norm: float,
    c_star_value: float,
    vartheta: float,
    lam_min: float,
) -> tuple[float | None, str | None]:
    """Split radius: aux_radius discounted by the model-loop level budget."""
    if c_star_value < 0:
        raise ValueError("c_star must be nonnegative")
    ra, reason = aux_radius(p, gamma_bound, ref_norm)
    if ra is None:
        return None, reason
    r = ra - math.sqrt(c_star_value / (vartheta * lam_min))
    if r < 0.0:
        return None, REASON_CSTAR
    return r, None


def r_sl(
    p: MsdParams, gamma_bound: float, x_s_norm: float
) -> tuple[float | None, str | None]:
    """Single-loop radius about the steady state."""
    return aux_radius(p, gamma_bound, x_s_norm)


def r_slhg(
    p: MsdParams, gamma_bound: float, x_s_norm: float
) -> tuple[float | None, str | None]:
    """Single-loop high-gain radius (same formula, high-gain bound) in the scaled frame."""
    return aux_radius(p, gamma_bound, x_s_norm)


def compare_levels(
    c_star_value: float,
    p: MsdParams,
    gamma_bound: float,
    ref_norm: float,
    vartheta: float,
    lam_min: float,
) -> tuple[float, float, float]:
    """Split-frame levels of the two estimation routes sharing one c_star.

    Returns (c1_tilde, c2_tilde, difference) with
    c1_tilde = lambda_min (r_a / sqrt(2))^2 - c_star and
    c2_tilde = lambda_min (r_a - sqrt(c_star / (vartheta lambda_min)))^2.
    The difference is provably positive for vartheta > 1.
    """
    if vartheta <= 1:
        raise ValueError("vartheta must exceed 1 for the level comparison")
    ra, reason = aux_radius(p, gamma_bound, ref_norm)
    if ra is None:
        raise ValueError(f"level comparison undefined: {reason}")
    c1_tilde = lam_min * (ra / math.sqrt(2.0)) ** 2 - c_star_value
    c2_tilde = lam_min * (ra - math.sqrt(c_star_value / (vartheta * lam_min))) ** 2
    diff = c2_tilde - c1_tilde
    if diff <= 0:
        raise ArithmeticError(
            f"split route did not dominate: c2_tilde - c1_tilde = {diff:.3e}"
        )
    return c1_tilde, c2_tilde, diff


def _inv_sqrt(P: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(np.asarray(P, dtype=float))
    if np.any(w <= 0):
        raise ValueError("shape matrix must be positive definite")
    return V @ np.diag(1.0 / np.sqrt(w)) @ V.T


def ellipse_boundary(
    P_effective: np.ndarray, level: float, center: Sequence[float], points: int
) -> np.ndarray:
    """States x with (x - center)' P_effective (x - center) = level.

    Parameterised by angle through the symmetric inverse square root of the
    shape matrix; returns an array of shape (points, 2).
    """
    if level <= 0:
        raise ValueError("level must be positive")
    S = _inv_sqrt(P_effective)
    theta = 2.0 * math.pi * np.arange(points) / points
    circle = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return np.asarray(center, dtype=float) + math.sqrt(level) * circle @ S.T


@dataclass(frozen=True)
class RoaEstimate:
    """One certified level set: its level, frame, and physical-frame geometry.

    ``level`` is None for invalid estimates, with ``reason`` naming the
    failing radicand.  For the split estimate the level decomposes as
    c_star + c_tilde.  Membership is evaluable through ``lyapunov_value``;
    the drawable two-dimensional set is exposed through ``physical_shape``
    and ``boundary``.
    """

    kind: str
    level: float | None
    radius_aux: float | None
    x_d: tuple
    x_s: tuple
    P: np.ndarray
    vartheta: float
    epsilon: float
    c_star: float | None = None
    c_tilde: float | None = None
    x0_star: tuple | None = None
    reason: str | None = None

    @property
    def valid(self) -> bool:
        return self.level is not None

    @property
    def n(self) -> int:
        return len(self.x_d)

    @property
    def frame(self) -> str:
        return {
            "MFC1": "combined model error and scaled process error",
            "MFC2": "combined model error and scaled process error",
            "SL": "deviation from the steady state",
            "SLHG": "scaled deviation from the steady state",
        }[self.kind]

    def d_matrix(self) -> np.ndarray:
        n = self.n
        return np.diag([self.epsilon ** (n - 1 - j) for j in range(n)])

    def d_inv(self) -> np.ndarray:
        n = self.n
        inv = 1.0 / self.epsilon
        return np.diag([inv ** (n - 1 - j) for j in range(n)])

    @property
    def center(self) -> np.ndarray:
        """Physical-frame center of the drawable set."""
        x_s = np.asarray(self.x_s)
        if self.kind in ("SL", "SLHG"):
            return x_s
        x0s = np.asarray(self.x0_star if self.x0_star is not None else self.x_d)
        return x0s + (x_s - np.asarray(self.x_d))

    def lyapunov_value(self, x: Sequence[float], x_star: Sequence[float] | None = None):
        """Lyapunov value of a physical state (pair) in the estimate's frame."""
        P = np.asarray(self.P)
        x = np.asarray(x, dtype=float)
        x_s = np.asarray(self.x_s)
        if self.kind == "SL":
            e = x - x_s
            return float(e @ P @ e) if e.ndim == 1 else np.einsum("...i,ij,...j", e, P, e)
        if self.kind == "SLHG":
            z = (x - x_s) @ self.d_inv().T
            return float(z @ P @ z) if z.ndim == 1 else np.einsum("...i,ij,...j", z, P, z)
        if x_star is None:
            raise ValueError(f"{self.kind} membership needs the model state as well")
        xs = np.asarray(x_star, dtype=float)
        e_star = xs - np.asarray(self.x_d)
        zt = ((x - x_s) - e_star) @ self.d_inv().T
        v = self.vartheta * np.einsum("...i,ij,...j", e_star, P, e_star) + np.einsum(
            "...i,ij,...j", zt, P, zt
        )
        return float(v) if np.ndim(v) == 0 else v

    def contains(self, x, x_star=None) -> bool | np.ndarray:
        if not self.valid:
            raise ValueError(f"estimate {self.kind} is invalid ({self.reason})")
        return self.lyapunov_value(x, x_star) <= self.level

    def physical_shape(self) -> tuple[np.ndarray, float, np.ndarray]:
        """Shape matrix, level and center of the drawable set in physical coordinates.

        For the scaled frames the quadratic form pulls back through the time
        scaling; for the combined frames the drawable set is the process-error
        slice at the stored initial model error.
        """
        if not self.valid:
            raise ValueError(f"estimate {self.kind} is invalid ({self.reason})")
        P = np.asarray(self.P)
        if self.kind == "SL":
            return P, self.level, self.center
        Dinv = self.d_inv()
        Q = Dinv @ P @ Dinv
        if self.kind == "SLHG":
            return Q, self.level, self.center
        if self.kind == "MFC2":
            return Q, self.c_tilde, self.center
        # MFC1: slice the combined ball at the stored initial model error
        e0 = np.asarray(self.x0_star if self.x0_star is not None else self.x_d) - np.asarray(
            self.x_d
        )
        spent = self.vartheta * float(e0 @ P @ e0)
        remaining = self.level - spent
        if remaining <= 0:
            raise ValueError("initial model error exhausts the combined level")
        return Q, remaining, self.center

    def boundary(self, points: int = 256) -> np.ndarray:
        Q, level, center = self.physical_shape()
        return ellipse_boundary(Q, level, center, points)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "valid": self.valid,
            "level": self.level,
            "c_star": self.c_star,
            "c_tilde": self.c_tilde,
            "radius": self.radius_aux,
            "center": self.center.tolist() if self.valid else None,
            "frame": self.frame,
            "reason": self.reason,
        }


def estimate_sl(
    p: MsdParams, cert: LyapunovCertificate, x_s: Sequence[float], x_d: Sequence[float]
) -> RoaEstimate:
    """Level set of the plain single-loop design about its steady state."""
    r, reason = r_sl(p, cert.gamma_sl, float(np.linalg.norm(x_s)))
    level = None if r is None else cert.lambda_min * r * r
    return RoaEstimate(
        kind="SL",
        level=level,
        radius_aux=r,
        x_d=tuple(x_d),
        x_s=tuple(x_s),
        P=cert.P,
        vartheta=cert.vartheta,
        epsilon=cert.epsilon,
        reason=reason,
    )


def estimate_slhg(
    p: MsdParams, cert: LyapunovCertificate, x_s: Sequence[float], x_d: Sequence[float]
) -> RoaEstimate:
    """Level set of the high-gain single-loop design, in its scaled frame."""
    r, reason = r_slhg(p, cert.gamma_slhg, float(np.linalg.norm(x_s)))
    level = None if r is None else cert.lambda_min * r * r
    return RoaEstimate(
        kind="SLHG",
        level=level,
        radius_aux=r,
        x_d=tuple(x_d),
        x_s=tuple(x_s),
        P=cert.P,
        vartheta=cert.vartheta,
        epsilon=cert.epsilon,
        reason=reason,
    )


def estimate_mfc1(
    p: MsdParams,
    cert: LyapunovCertificate,
    x_s: Sequence[float],
    x_d: Sequence[float],
    x0_star: Sequence[float] | None = None,
) -> RoaEstimate:
    """Combined-state level set of the two-loop scheme."""
    r, reason = r_mfc1(p, cert.gamma_mfc, float(np.linalg.norm(x_s)))
    level = None if r is None else cert.lambda_min * r * r
    return RoaEstimate(
        kind="MFC1",
        level=level,
        radius_aux=r,
        x_d=tuple(x_d),
        x_s=tuple(x_s),
        P=cert.P,
        vartheta=cert.vartheta,
        epsilon=cert.epsilon,
        x0_star=None if x0_star is None else tuple(x0_star),
        reason=reason,
    )


def estimate_mfc2(
    p: MsdParams,
    cert: LyapunovCertificate,
    x_s: Sequence[float],
    x_d: Sequence[float],
    x0_star: Sequence[float],
) -> RoaEstimate:
    """Split level set: exact model-loop level plus the discounted process level."""
    e0 = np.asarray(x0_star, dtype=float) - np.asarray(x_d, dtype=float)
    cs = c_star(cert.vartheta, cert.P, e0)
    r, reason = r_mfc2(
        p,
        cert.gamma_mfc,
        float(np.linalg.norm(x_s)),
        cs,
        cert.vartheta,
        cert.lambda_min,
    )
    ct = None if r is None else cert.lambda_min * r * r
    return RoaEstimate(
        kind="MFC2",
        level=None if ct is None else cs + ct,
        radius_aux=r,
        x_d=tuple(x_d),
        x_s=tuple(x_s),
        P=cert.P,
        vartheta=cert.vartheta,
        epsilon=cert.epsilon,
        c_star=cs,
        c_tilde=ct,
        x0_star=tuple(x0_star),
        reason=reason,
    )


@dataclass(frozen=True)
class RegionSweep:
    """Union regions reachable by sweeping the initial model state.

    ``green`` is the boundary polygon of the union over initial model states
    on the fixed c_star ellipse; ``grey`` sweeps all admissible c_star levels
    as well.  The membership closures evaluate the underlying union tests.
    """

    green: np.ndarray
    grey: np.ndarray
    c_star_level: float
    c_tilde_level: float
    c_star_max: float
    green_contains: Callable
    grey_contains: Callable


def polygon_area(polygon: np.ndarray) -> float:
    """Shoelace area of a closed polygon given as ordered vertices."""
    x = polygon[:, 0]
    y = polygon[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _union_membership(centers: np.ndarray, thresholds: np.ndarray, Q: np.ndarray):
    def contains(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        diffs = pts[:, None, :] - centers[None, :, :]
        vals = np.einsum("kmi,ij,kmj->km", diffs, Q, diffs)
        return np.any(vals <= thresholds[None, :], axis=1)

    return contains


def mfc2_region_sweep(
    p: MsdParams,
    cert: LyapunovCertificate,
    x_s: Sequence[float],
    x_d: Sequence[float],
    c_star_level: float,
    samples: int = 720,
    rays: int = 720,
    c_grid: int = 25,
) -> RegionSweep:
    """Outer boundaries of the swept split-estimate regions.

    The union membership is tested directly against densely sampled center
    ellipses.  Boundaries are extracted on a ray fan from the common
    centroid: along a ray each member ellipse occupies an exact interval
    (its quadratic form is quadratic in the ray parameter), so the outer
    extent is the maximum of the interval endpoints in closed form.  This
    stays correct where the sampled union has radial gaps, which a
    bisection search would mistake for the boundary.
    """
    if samples < 16:
        raise ValueError("need at least 16 sweep samples")
    x_d = np.asarray(x_d, dtype=float)
    x_s = np.asarray(x_s, dtype=float)
    ref_norm = float(np.linalg.norm(x_s))
    ra, reason = aux_radius(p, cert.gamma_mfc, ref_norm)
    if ra is None:
        raise ValueError(f"region sweep undefined: {reason}")
    lam = cert.lambda_min
    vth = cert.vartheta
    c_max = vth * lam * ra * ra
    if c_star_level < 0 or c_star_level > c_max:
        raise ValueError(f"c_star level {c_star_level} outside [0, {c_max}]")

    P = np.asarray(cert.P)
    Dinv = np.diag([1.0 / cert.epsilon, 1.0])
    Q = Dinv @ P @ Dinv
    S = _inv_sqrt(P)
    centroid = x_s.copy()  # x_d + steady offset, the c_star = 0 center

    def c_tilde_of(cs: float) -> float:
        return lam * (ra - math.sqrt(cs / (vth * lam))) ** 2

    def ring(cs: float, count: int) -> np.ndarray:
        if cs == 0.0:
            return centroid[None, :]
        theta = 2.0 * math.pi * np.arange(count) / count
        circle = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        return centroid + math.sqrt(cs / vth) * circle @ S.T

    green_centers = ring(c_star_level, samples)
    green_thresholds = np.full(len(green_centers), c_tilde_of(c_star_level))
    green_contains = _union_membership(green_centers, green_thresholds, Q)

    grey_count = max(32, samples // 4)
    grey_centers = []
    grey_thresholds = []
    for cs in np.linspace(0.0, c_max, c_grid):
        pts = ring(float(cs), grey_count)
        grey_centers.append(pts)
        grey_thresholds.append(np.full(len(pts), c_tilde_of(float(cs))))
    grey_centers = np.concatenate(grey_centers, axis=0)
    grey_thresholds = np.concatenate(grey_thresholds)
    grey_contains = _union_membership(grey_centers, grey_thresholds, Q)

    theta = 2.0 * math.pi * np.arange(rays) / rays
    dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)

    def outer_boundary(centers: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
        # along ray x = centroid + t d each ellipse is the interval where
        # alpha t^2 + beta t + gamma <= 0; the outer boundary is the largest
        # upper interval endpoint over all member ellipses
        alpha = np.einsum("ri,ij,rj->r", dirs, Q, dirs)
        diff = centroid - centers
        beta = 2.0 * dirs @ (Q @ diff.T)
        gamma = np.einsum("mi,ij,mj->m", diff, Q, diff) - thresholds
        disc = beta * beta - 4.0 * alpha[:, None] * gamma[None, :]
        with np.errstate(invalid="ignore"):
            t_plus = (-beta + np.sqrt(disc)) / (2.0 * alpha[:, None])
        t_plus = np.where(disc >= 0.0, t_plus, -np.inf)
        t_outer = np.maximum(np.max(t_plus, axis=1), 0.0)
        # nudge inward so the vertices satisfy the membership test in floats
        return centroid + (t_outer * (1.0 - 1e-9))[:, None] * dirs

    return RegionSweep(
        green=outer_boundary(green_centers, green_thresholds),
        grey=outer_boundary(grey_centers, grey_thresholds),
        c_star_level=float(c_star_level),
        c_tilde_level=c_tilde_of(c_star_level),
        c_star_max=c_max,
        green_contains=green_contains,
        grey_contains=grey_contains,
    )
