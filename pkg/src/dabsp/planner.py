"""Objective evaluation, myopic action selection and the inference step."""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .association import (
    DEFAULT_GATE_SIGMA,
    DEFAULT_PRUNE,
    forced_ml_update,
    posterior_update,
    posterior_update_info,
    scene_weights,
)
from .gmm import GmmBelief, WeightDistribution, collapse, kl_to_uniform, propagate
from .harness.metrics import epsilon, eta_da
from .obs_sim import simulate_observations
from .world import Action, GroundTruth, World

SIGMA_MODES = ("worst", "collapse")


@dataclass(frozen=True)
class CostWeights:
    M_u: float = 0.0
    M_G: float = 0.0
    M_sigma: float = 0.0
    M_w: float = 0.0
    epsilon: float = 1e-6
    sigma_mode: str = "worst"
    goal: Optional[tuple] = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if min(self.M_u, self.M_G, self.M_sigma, self.M_w) < 0:
            raise ValueError("cost weights must be non-negative")
        if self.sigma_mode not in SIGMA_MODES:
            raise ValueError(f"sigma_mode must be one of {SIGMA_MODES}")


@dataclass(frozen=True)
class CostBreakdown:
    c_u: float
    c_G: float
    c_sigma: float
    c_w: float
    total: float


def evaluate_cost(posterior: GmmBelief, weights: Optional[WeightDistribution], action: Action, cw: CostWeights) -> CostBreakdown:
    """Weighted sum of control, goal, uncertainty and ambiguity costs.

    ``weights`` are the posterior scene weights; None (no association was
    made) contributes no ambiguity cost.
    """
    c_u = float(np.linalg.norm(action.control))
    mean = collapse(posterior)
    c_G = 0.0 if cw.goal is None else float(np.linalg.norm(mean.mean - np.asarray(cw.goal, dtype=float)))
    if cw.sigma_mode == "worst":
        c_sigma = max(float(np.trace(c.cov)) for c in posterior.components)
    else:
        c_sigma = float(np.trace(mean.cov))
    c_w = 0.0 if weights is None else 1.0 / (kl_to_uniform(weights) + cw.epsilon)
    total = cw.M_u * c_u + cw.M_G * c_G + cw.M_sigma * c_sigma + cw.M_w * c_w
    return CostBreakdown(c_u, c_G, c_sigma, c_w, total)


@dataclass(frozen=True, eq=False)
class ActionEvaluation:
    """Objective value and diagnostics for one candidate action."""

    action: str
    J: float
    J_unnormalized: float
    stderr: float
    c_u: float
    c_G: float
    c_sigma: float
    c_w: float
    modes_mean: float
    modes_total: int
    n_samples: int
    n_null: int
    eta_da: float
    eps_bsp: float
    eps_da: float
    tables: tuple = field(default=(), repr=False)

    def row(self):
        return {k: getattr(self, k) for k in ROW_FIELDS}


ROW_FIELDS = (
    "action", "J", "J_unnormalized", "stderr", "c_u", "c_G", "c_sigma", "c_w",
    "modes_mean", "modes_total", "n_samples", "n_null", "eta_da", "eps_bsp", "eps_da",
)


@dataclass(frozen=True, eq=False)
class PlanReport:
    evaluations: tuple
    chosen: str
    tie_break: str = ""

    def evaluation(self, action_id) -> ActionEvaluation:
        return next(e for e in self.evaluations if e.action == action_id)

    def ranking(self):
        return [e.action for e in sorted(self.evaluations, key=lambda e: e.J)]


def evaluate_objective(
    belief: GmmBelief,
    action: Action,
    world: World,
    cw: CostWeights,
    n: int,
    rng: np.random.Generator,
    prune_threshold=DEFAULT_PRUNE,
    gate_sigma=DEFAULT_GATE_SIGMA,
    association: str = "da",
    keep_tables: bool = False,
) -> ActionEvaluation:
    """Sampled objective for one action.

    Each simulated observation contributes its cost weighted by its
    likelihood w_s; J is the w_s-weighted mean and ``J_unnormalized`` the
    raw sum.  A null observation costs the propagated belief at w_s = 1.
    With ``association="oracle"`` every observation is assigned to the
    scene that generated it instead of being weighed over all scenes.
    """
    prop = propagate(belief, world.motion, action)
    samples = simulate_observations(prop, world, n, rng)
    ws, costs, breakdowns, modes, etas, eb, ed, tables = [], [], [], [], [], [], [], []
    for s in samples:
        gt = GroundTruth(s.source_pose, s.source_scene)
        if s.is_null:
            post, weights, w_s = prop, None, 1.0
        else:
            scenes = None if association == "da" else (s.source_scene,)
            res = posterior_update_info(prop, s.z, world, prune_threshold, gate_sigma, scene_ids=scenes)
            post, weights, w_s = res.belief, scene_weights(res, world), res.table.likelihood
            if keep_tables:
                tables.append(res.table)
        b = evaluate_cost(post, weights, action, cw)
        ws.append(w_s)
        costs.append(b.total)
        breakdowns.append((b.c_u, b.c_G, b.c_sigma, b.c_w))
        modes.append(len(post))
        etas.append(eta_da(post, gt))
        ed.append(epsilon(post, gt, "DA"))
        eb.append(epsilon(forced_ml_update(prop, s.z, world), gt, "BSP"))
    ws = np.array(ws)
    costs = np.array(costs)
    total_w = ws.sum()
    J = float(ws @ costs / total_w) if total_w > 0 else float(np.mean(costs))
    p = ws / total_w if total_w > 0 else np.full(len(ws), 1.0 / len(ws))
    stderr = float(np.sqrt(np.sum(p * p * (costs - J) ** 2)))
    parts = p @ np.array(breakdowns)
    return ActionEvaluation(
        action=action.id,
        J=J,
        J_unnormalized=float(ws @ costs),
        stderr=stderr,
        c_u=float(parts[0]),
        c_G=float(parts[1]),
        c_sigma=float(parts[2]),
        c_w=float(parts[3]),
        modes_mean=float(np.mean(modes)),
        modes_total=int(np.sum(modes)),
        n_samples=n,
        n_null=sum(s.is_null for s in samples),
        eta_da=float(np.mean(etas)),
        eps_bsp=float(np.mean(eb)),
        eps_da=float(np.mean(ed)),
        tables=tuple(tables),
    )


def action_rng(seed, action: Action) -> np.random.Generator:
    """Independent stream per (seed, action id); ``seed`` may be a tuple of ints."""
    key = [int(s) for s in np.atleast_1d(seed)]
    return np.random.default_rng(key + [zlib.crc32(action.id.encode())])


def select_action(
    belief: GmmBelief,
    actions: Sequence[Action],
    world: World,
    cw: CostWeights,
    n: int,
    seed,
    prune_threshold=DEFAULT_PRUNE,
    gate_sigma=DEFAULT_GATE_SIGMA,
    jobs: int = 1,
    association: str = "da",
) -> PlanReport:
    """argmin of the objective; ties go to the earliest action."""
    if not actions:
        raise ValueError("need at least one candidate action")

    def run(a):
        return evaluate_objective(belief, a, world, cw, n, action_rng(seed, a), prune_threshold, gate_sigma, association)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            evals = tuple(pool.map(run, actions))
    else:
        evals = tuple(run(a) for a in actions)
    Js = np.array([e.J for e in evals])
    best = int(np.argmin(Js))
    ties = [evals[k].action for k in np.flatnonzero(Js == Js[best])]
    note = f"tie between {ties}; first in declaration order kept" if len(ties) > 1 else ""
    return PlanReport(evals, evals[best].action, note)


def infer_step(propagated: GmmBelief, z, world: World, prune_threshold=DEFAULT_PRUNE, gate_sigma=DEFAULT_GATE_SIGMA) -> GmmBelief:
    """Posterior after the executed action's real observation (None: no update)."""
    return posterior_update(propagated, z, world, prune_threshold, gate_sigma)
