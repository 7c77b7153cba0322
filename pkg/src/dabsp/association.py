"""Data-association weights and the posterior mixture.

For prior component j and scene i the unnormalized weight is

    w_ij = integral N(z; h(x, A_i), R) P(A_i | x) N(x; mu_j, Sigma_j) dx
         = N(z; H mu_j + c_i, S_j) * sum_boxes density * mass(N(m_ij, P_j), box)

where (m_ij, P_j) is the Kalman-conditioned component.  The box masses
come from ``kernels.box_masses``.  Work is done in log space so far-off
observations underflow gracefully.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .gmm import (
    ContractViolation,
    GaussianComponent,
    GmmBelief,
    WeightDistribution,
    condition,
    kalman_gain,
    prune,
)
from .kernels import box_masses
from .world import World

DEFAULT_GATE_SIGMA = 6.0
DEFAULT_PRUNE = 1e-3
UNSUPPORTED_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class WeightTable:
    """Association weights for one observation.

    ``w`` holds the per-scene term (a) weights, ``w_tilde`` the per-component
    scene probabilities (each supported row sums to one; unsupported rows are
    zero), ``log_w`` the raw log w_ij.
    """

    scene_ids: tuple
    log_w: np.ndarray
    supported: np.ndarray
    prior_weights: np.ndarray

    @property
    def row_supported(self):
        return np.isfinite(self.log_w).any(axis=1)

    @property
    def log_component_likelihood(self):
        return logsumexp(self.log_w, axis=1)

    @property
    def w_tilde(self):
        out = np.zeros_like(self.log_w)
        rows = self.row_supported
        out[rows] = np.exp(self.log_w[rows] - self.log_component_likelihood[rows, None])
        return out

    @property
    def w(self):
        with np.errstate(divide="ignore"):
            lx = np.log(self.prior_weights)
        return np.exp(logsumexp(lx[:, None] + self.log_w, axis=0))

    @property
    def likelihood(self) -> float:
        return float(self.w.sum())

    def term_a(self) -> WeightDistribution:
        return WeightDistribution(tuple(zip(self.scene_ids, self.w)))


@dataclass(frozen=True, eq=False)
class UpdateResult:
    belief: GmmBelief
    table: WeightTable
    n_before_prune: int
    pruned_weights: np.ndarray
    step_scenes: tuple  # scene associated at this update, per posterior component (None if not split)
    threshold: float


def _check_obs(z, world):
    if z is None:
        raise ContractViolation("null observation: the caller must skip the update")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (world.obs_model.H.shape[0],):
        raise ContractViolation(f"observation has shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ContractViolation("observation is not finite")
    return z


def _terms(z, propagated: GmmBelief, world: World, gate_sigma, scene_ids=None):
    z = _check_obs(z, world)
    scenes = world.scenes if scene_ids is None else tuple(world.scene(s) for s in scene_ids)
    H, R = world.obs_model.H, world.obs_model.cov
    offsets = np.array([world.obs_model.offset(s) for s in scenes]).reshape(len(scenes), -1)
    M, N, d = len(propagated), len(scenes), propagated.dim
    log_lik = np.full((M, N), -np.inf)
    cond_means = np.zeros((M, N, d))
    cond_covs = np.zeros((M, d, d))
    supported = np.zeros((M, N), dtype=bool)
    jobs = []  # (j, i, density, lo, hi)
    for j, comp in enumerate(propagated.components):
        S, L, K, P = kalman_gain(comp.cov, H, R)
        cond_covs[j] = P
        innov = z - (H @ comp.mean + offsets)
        r = np.linalg.solve(L, innov.T)
        log_lik[j] = -0.5 * np.sum(r * r, axis=0) - np.sum(np.log(np.diag(L))) - 0.5 * len(z) * np.log(2 * np.pi)
        cond_means[j] = comp.mean + innov @ K.T
        sd = np.sqrt(np.diag(comp.cov))
        lo, hi = comp.mean - gate_sigma * sd, comp.mean + gate_sigma * sd
        for i, scene in enumerate(scenes):
            boxes = [b for b in scene.region.boxes if b.density > 0 and b.intersects(lo, hi)]
            if boxes:
                supported[j, i] = True
                jobs.extend((j, i, b.density, b.lo, b.hi) for b in boxes)
    mass = np.zeros((M, N))
    if jobs:
        jj = np.array([t[0] for t in jobs])
        ii = np.array([t[1] for t in jobs])
        m = box_masses(
            cond_means[jj, ii],
            cond_covs[jj],
            np.array([t[3] for t in jobs]),
            np.array([t[4] for t in jobs]),
        )
        np.add.at(mass, (jj, ii), np.array([t[2] for t in jobs]) * m)
    with np.errstate(divide="ignore"):
        log_w = np.where(supported & (mass > 0), log_lik + np.log(mass), -np.inf)
    table = WeightTable(tuple(s.id for s in scenes), log_w, supported & np.isfinite(log_w), propagated.weights)
    return table, cond_means, cond_covs


def weight_table(z, propagated: GmmBelief, world: World, gate_sigma=DEFAULT_GATE_SIGMA, scene_ids=None) -> WeightTable:
    return _terms(z, propagated, world, gate_sigma, scene_ids)[0]


def term_a_weights(z, propagated: GmmBelief, world: World, gate_sigma=DEFAULT_GATE_SIGMA) -> WeightDistribution:
    """Unnormalized w^i per scene; their sum is the observation likelihood."""
    return weight_table(z, propagated, world, gate_sigma).term_a()


def term_b_weights(z, propagated: GmmBelief, world: World, gate_sigma=DEFAULT_GATE_SIGMA):
    """Matrix of scene probabilities per prior component (rows j, columns i)."""
    return weight_table(z, propagated, world, gate_sigma).w_tilde


def posterior_update_info(
    propagated: GmmBelief,
    z,
    world: World,
    prune_threshold=DEFAULT_PRUNE,
    gate_sigma=DEFAULT_GATE_SIGMA,
    scene_ids=None,
) -> UpdateResult:
    """Split every component over its supported scenes, weight, prune.

    Component (i, j) gets weight proportional to xi_j * w_ij, i.e. the
    component's marginal likelihood times its row of ``w_tilde``.  A
    component no scene can explain is carried over unsplit at a floor
    weight.
    """
    table, cond_means, cond_covs = _terms(z, propagated, world, gate_sigma, scene_ids)
    with np.errstate(divide="ignore"):
        log_xi = np.log(propagated.weights)
    rows = table.row_supported
    log_l = table.log_component_likelihood
    floor = (np.max(log_l[rows]) if rows.any() else 0.0) + np.log(UNSUPPORTED_FLOOR)

    log_weights, comps, lineages, step_scenes = [], [], [], []
    for j, prior in enumerate(propagated.components):
        if not rows[j]:
            log_weights.append(log_xi[j] + (floor if rows.any() else 0.0))
            comps.append(prior)
            lineages.append(propagated.lineages[j])
            step_scenes.append(None)
            continue
        for i in np.flatnonzero(table.supported[j]):
            log_weights.append(log_xi[j] + table.log_w[j, i])
            comps.append(GaussianComponent(cond_means[j, i], cond_covs[j]))
            lineages.append(propagated.lineages[j] + ((j, table.scene_ids[i]),))
            step_scenes.append(table.scene_ids[i])
    log_weights = np.array(log_weights)
    weights = np.exp(log_weights - logsumexp(log_weights))
    full = GmmBelief.from_unnormalized(weights, tuple(comps), tuple(lineages))
    pruned = prune(full, prune_threshold)
    survivors = {id(c) for c in pruned.components}
    kept = [k for k in range(len(full)) if id(full.components[k]) in survivors]
    dropped = np.setdiff1d(np.arange(len(full)), kept)
    return UpdateResult(
        belief=pruned,
        table=table,
        n_before_prune=len(full),
        pruned_weights=full.weights[dropped],
        step_scenes=tuple(step_scenes[k] for k in kept),
        threshold=prune_threshold,
    )


def posterior_update(propagated: GmmBelief, z, world: World, prune_threshold=DEFAULT_PRUNE, gate_sigma=DEFAULT_GATE_SIGMA) -> GmmBelief:
    if z is None:
        return propagated
    return posterior_update_info(propagated, z, world, prune_threshold, gate_sigma).belief


def scene_weights(result: Optional[UpdateResult], world: World) -> Optional[WeightDistribution]:
    """Posterior weight aggregated per scene over all world scenes.

    Components that were not split at this update are left out; None when
    no component carries an association.
    """
    if result is None:
        return None
    agg = dict.fromkeys(world.scene_ids, 0.0)
    for w, sid in zip(result.belief.weights, result.step_scenes):
        if sid is not None:
            agg[sid] += w
    total = sum(agg.values())
    if not total > 0:
        return None
    return WeightDistribution(tuple((sid, v / total) for sid, v in agg.items())).normalize()


def nominal_scene(world: World, pose, z=None, cov=None):
    """Scene a data-association-given planner expects to see from ``pose``.

    The scene with the largest event likelihood at the pose; if none is
    observable there, the scene whose predicted observation is nearest to
    ``z`` under innovation covariance ``cov``.
    """
    p = world.event_matrix(pose)[0]
    if p.max() > 0:
        return world.scenes[int(np.argmax(p))].id
    if z is None:
        return None
    S_inv = np.linalg.inv(world.obs_model.H @ cov @ world.obs_model.H.T + world.obs_model.cov)
    d = [float((z - world.obs_model.predict(pose, s)) @ S_inv @ (z - world.obs_model.predict(pose, s))) for s in world.scenes]
    return world.scenes[int(np.argmin(d))].id


def forced_ml_update(propagated: GmmBelief, z, world: World) -> GmmBelief:
    """Single-hypothesis baseline with association fixed in advance.

    Keeps only the heaviest component and associates ``z`` with the scene
    expected from its mean, as a planner assuming solved data association
    would.
    """
    j = int(np.argmax(propagated.weights))
    comp = propagated.components[j]
    lineage = propagated.lineages[j]
    if z is None:
        return GmmBelief([1.0], (comp,), (lineage,))
    z = _check_obs(z, world)
    sid = nominal_scene(world, comp.mean, z, comp.cov)
    post = condition(comp, z, world.scene(sid), world.obs_model)
    return GmmBelief([1.0], (post,), (lineage + ((j, sid),),))
