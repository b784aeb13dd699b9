"""Brute-force validation of the certificates by batched Monte-Carlo runs.

Initial states are sampled uniformly inside a certified level set (slightly
shrunk, since the certified sets are open), all samples are integrated as one
vectorised batch, and each run is classified: converged to the analytic
equilibrium, diverged, settled elsewhere, or Lyapunov increase while inside
the set.  Sampling uses a counter-based generator, so reports are
byte-for-byte reproducible for a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .plant import Box, MsdParams, MsdPlant, msd_phi, phi_lipschitz_sup
from .roa import RoaEstimate, _inv_sqrt
from .simulate import (
    ControllerSpec,
    SetPoint,
    Trajectory,
    _rk4_components,
    build_closed_loop,
)
from .synthesis import GainSet

__all__ = [
    "FalsificationReport",
    "DecreaseCheck",
    "sample_in_set",
    "falsify_roa",
    "gamma_empirical",
    "lyapunov_decrease_check",
]

#: Certified sets are open; samples are drawn from this fraction of the level.
BOUNDARY_MARGIN = 0.999


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def _unit_ball(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    g = rng.standard_normal((count, dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    radii = rng.random(count) ** (1.0 / dim)
    return g / norms * radii[:, None]


def sample_in_set(
    estimate: RoaEstimate, count: int, seed: int, margin: float = BOUNDARY_MARGIN
) -> tuple[np.ndarray, np.ndarray | None]:
    """Uniform initial states inside a certified set, in physical coordinates.

    Unit-ball samples are pushed through the inverse symmetric square root of
    the set's shape matrix and mapped to physical coordinates.  Returns the
    process states (count, n) and, for the two-loop kinds, the matching model
    states; single-loop kinds return None for the model part.
    """
    if not estimate.valid:
        raise ValueError(f"cannot sample the invalid {estimate.kind} estimate "
                         f"({estimate.reason})")
    rng = _rng(seed)
    n = estimate.n
    P = np.asarray(estimate.P)
    S = _inv_sqrt(P)
    D = estimate.d_matrix()
    x_s = np.asarray(estimate.x_s)
    x_d = np.asarray(estimate.x_d)

    if estimate.kind == "SL":
        u = _unit_ball(rng, count, n)
        x0 = x_s + math.sqrt(margin * estimate.level) * u @ S.T
        return x0, None
    if estimate.kind == "SLHG":
        u = _unit_ball(rng, count, n)
        z = math.sqrt(margin * estimate.level) * u @ S.T
        return x_s + z @ D.T, None
    if estimate.kind == "MFC2":
        u = _unit_ball(rng, count, n)
        zt = math.sqrt(margin * estimate.c_tilde) * u @ S.T
        e_star = np.asarray(estimate.x0_star) - x_d
        x0 = x_s + e_star + zt @ D.T
        x0_star = np.tile(np.asarray(estimate.x0_star), (count, 1))
        return x0, x0_star
    if estimate.kind == "MFC1":
        u = _unit_ball(rng, count, 2 * n)
        es = math.sqrt(margin * estimate.level / estimate.vartheta) * u[:, :n] @ S.T
        zt = math.sqrt(margin * estimate.level) * u[:, n:] @ S.T
        x0 = x_s + es + zt @ D.T
        return x0, x_d + es
    raise ValueError(f"unknown estimate kind {estimate.kind!r}")


@dataclass(frozen=True)
class DecreaseCheck:
    """Outcome of a discrete Lyapunov-decrease scan along one trajectory."""

    passed: bool
    first_violation_time: float | None
    exit_time: float | None


def lyapunov_decrease_check(
    traj: Trajectory,
    tolerance: float = 1e-9,
    level: float | None = None,
    floor: float = 0.0,
) -> DecreaseCheck:
    """Check V(t_{k+1}) <= V(t_k) (1 + tolerance) while the state stays certified.

    The scan exits vacuously once the Lyapunov value leaves the level set (or
    drops below ``floor``, which guards against rounding noise after the run
    has numerically converged).
    """
    V = traj.V
    t = traj.t
    for k in range(len(V)):
        vk = float(V[k])
        if not math.isfinite(vk) or (level is not None and vk > level) or vk < floor:
            return DecreaseCheck(True, None, float(t[k]))
        if k + 1 < len(V) and float(V[k + 1]) > vk * (1.0 + tolerance):
            return DecreaseCheck(False, float(t[k + 1]), None)
    return DecreaseCheck(True, None, None)


def gamma_empirical(p: MsdParams, region: Box, pairs: int, seed: int) -> float:
    """Largest sampled difference quotient of the uncertainty on a box.

    Half of the pairs are independent uniform draws (long baselines); the
    other half pair a uniform base point with a nearby second point, which
    resolves the local gradient so the maximum converges to the analytic
    gradient supremum from below.  A degenerate point region yields 0 by
    convention.
    """
    if pairs < 1:
        raise ValueError("need at least one pair")
    rng = _rng(seed)
    a = region.sample(rng, pairs)
    b = region.sample(rng, pairs)
    half = pairs // 2
    widths = np.asarray(region.hi) - np.asarray(region.lo)
    scale = 1e-3 * float(np.max(widths))
    if half > 0 and scale > 0:
        dirs = rng.standard_normal((half, region.dim))
        norms = np.linalg.norm(dirs, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        b[:half] = np.clip(a[:half] + scale * dirs / norms, region.lo, region.hi)
    num = np.abs(msd_phi(p, (a[:, 0], a[:, 1])) - msd_phi(p, (b[:, 0], b[:, 1])))
    den = np.linalg.norm(a - b, axis=1)
    mask = den > 0
    if not np.any(mask):
        return 0.0
    return float(np.max(num[mask] / den[mask]))


@dataclass(frozen=True)
class FalsificationReport:
    """Monte-Carlo verdict over one certified set."""

    kind: str
    level: float
    samples: int
    converged: int
    violations: tuple
    empirical_gamma: float
    analytic_gamma: float
    seed: int
    horizon: float
    h: float

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "level": self.level,
            "samples": self.samples,
            "converged": self.converged,
            "violations": [
                {"x0": list(x0), "mode": mode, "time": time}
                for x0, mode, time in self.violations
            ],
            "empirical_gamma": self.empirical_gamma,
            "analytic_gamma": self.analytic_gamma,
            "seed": self.seed,
            "horizon": self.horizon,
            "h": self.h,
        }


def falsify_roa(
    estimate: RoaEstimate,
    plant: MsdPlant,
    gains: GainSet,
    controller_kind: str,
    count: int,
    horizon: float,
    h: float,
    seed: int,
    decrease_tolerance: float = 1e-9,
    lipschitz_pairs: int = 10_000,
) -> FalsificationReport:
    """Simulate sampled initial states from a certified set and tally failures.

    A run converges when its final state lies within one percent of its
    initial distance to the analytic equilibrium (0.01 absolute when starting
    on it).  Lyapunov increase is monitored online while the combined state
    remains inside the set.  Violations are data, not errors.
    """
    x0, x0_star = sample_in_set(estimate, count, seed)
    y_d = float(estimate.x_d[0])
    spec = ControllerSpec(kind=controller_kind, gains=gains, reference=SetPoint(y_d))
    loop = build_closed_loop(plant, spec, estimate.vartheta)
    n = loop.n

    P = np.asarray(estimate.P)
    x_s = np.asarray(estimate.x_s)
    v_of = loop.make_v(P, tuple(float(v) for v in x_s))
    level = float(estimate.level)
    floor = 1e-12 * level

    x0_cols = tuple(np.ascontiguousarray(x0[:, i]) for i in range(n))
    if controller_kind == "MFC":
        if x0_star is None:
            raise ValueError("two-loop falsification needs sampled model states")
        star_cols = tuple(np.ascontiguousarray(x0_star[:, i]) for i in range(n))
        comps = loop.assemble(x0_cols, star_cols)
    else:
        comps = loop.assemble(x0_cols, None)

    steps = int(round(horizon / h))
    alive = np.ones(count, dtype=bool)
    fail_time = np.full(count, np.nan)
    viol_v = np.zeros(count, dtype=bool)
    viol_v_time = np.full(count, np.nan)

    with np.errstate(all="ignore"):
        v_prev = np.asarray(v_of(0.0, comps), dtype=float)
        in_set = v_prev <= level * (1.0 + 1e-12)
        rhs = loop.rhs
        for k in range(steps):
            t = k * h
            comps = _rk4_components(rhs, t, comps, h)
            finite = np.ones(count, dtype=bool)
            for c in comps:
                finite &= np.isfinite(c)
            newly_dead = alive & ~finite
            if np.any(newly_dead):
                fail_time[newly_dead] = (k + 1) * h
                alive &= finite
            v_new = np.asarray(v_of(t + h, comps), dtype=float)
            inc = in_set & (v_new > v_prev * (1.0 + decrease_tolerance)) & (v_prev > floor)
            fresh = inc & ~viol_v
            if np.any(fresh):
                viol_v_time[fresh] = (k + 1) * h
                viol_v |= inc
            in_set &= v_new <= level
            v_prev = v_new

    x_final = np.stack([comps[(n if controller_kind == "MFC" else 0) + i]
                        for i in range(n)], axis=1)
    with np.errstate(all="ignore"):
        dist = np.linalg.norm(x_final - x_s, axis=1)
    d0 = np.linalg.norm(x0 - x_s, axis=1)
    threshold = np.maximum(0.01 * d0, 0.01)
    near = alive & np.asarray(dist <= threshold)

    violations = []
    for i in range(count):
        if not alive[i]:
            violations.append((tuple(x0[i]), "diverged", float(fail_time[i])))
        elif not near[i]:
            violations.append((tuple(x0[i]), "wrong-equilibrium", None))
        elif viol_v[i]:
            violations.append((tuple(x0[i]), "V-increase", float(viol_v_time[i])))
    violations.sort(key=lambda item: item[0])
    converged = count - len(violations)

    return FalsificationReport(
        kind=estimate.kind,
        level=level,
        samples=count,
        converged=converged,
        violations=tuple(violations),
        empirical_gamma=gamma_empirical(plant.params, plant.domain, lipschitz_pairs, seed + 1),
        analytic_gamma=phi_lipschitz_sup(plant.params, plant.domain),
        seed=seed,
        horizon=horizon,
        h=h,
    )
