"""Simulating the future observation set from a propagated belief."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .gmm import ContractViolation, GmmBelief, psd_sqrt
from .world import World


@dataclass(frozen=True, eq=False)
class SimulatedObservation:
    """One sampled observation.

    ``z`` is None when the viewpoint fell where no scene is observable.
    ``source_scene`` and ``source_pose`` are the hidden generating truth;
    ``noise`` is the exact draw added to the nominal observation.
    """

    z: Optional[np.ndarray]
    source_pose: np.ndarray
    source_scene: Optional[str]
    source_component: int
    noise: np.ndarray
    weight_hint: float = 1.0

    @property
    def is_null(self) -> bool:
        return self.z is None


def simulate_observations(
    propagated: GmmBelief, world: World, n: int, rng: np.random.Generator
) -> list[SimulatedObservation]:
    """Draw ``n`` (viewpoint, scene, observation) triples.

    Viewpoints come from the mixture (component by weight, then a Gaussian
    draw), the scene from the event likelihood at the viewpoint, and the
    observation from the noisy sensing model.  Random numbers are consumed
    in one fixed block per quantity, so the list depends only on the rng
    state.
    """
    if n < 1:
        raise ContractViolation("need at least one simulated observation")
    d = propagated.dim
    d_z = world.obs_model.cov.shape[0]
    comps = rng.choice(len(propagated), size=n, p=propagated.weights)
    std = rng.standard_normal((n, d))
    u = rng.random(n)
    nv = rng.standard_normal((n, d_z))

    roots = [psd_sqrt(c.cov) for c in propagated.components]
    poses = np.array([propagated.components[j].mean + roots[j] @ e for j, e in zip(comps, std)])
    cdf = np.cumsum(world.event_matrix(poses), axis=1)
    picks = (cdf <= u[:, None]).sum(axis=1)
    noise = nv @ psd_sqrt(world.obs_model.cov).T

    out = []
    for k in range(n):
        scene_id = world.scenes[picks[k]].id if picks[k] < len(world.scenes) else None
        z = None if scene_id is None else world.obs_model.predict(poses[k], world.scene(scene_id)) + noise[k]
        out.append(
            SimulatedObservation(
                z=z,
                source_pose=poses[k],
                source_scene=scene_id,
                source_component=int(comps[k]),
                noise=noise[k],
                weight_hint=1.0 / n,
            )
        )
    return out
