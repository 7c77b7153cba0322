"""Environment description: scenes, event likelihoods, motion and sensing.

Poses and observations are real vectors.  Motion is ``f(x, u) = F x + d u``
with additive N(0, cov) noise; observing scene i from pose x gives
``H (x - anchor_i) + shift_i`` plus N(0, cov) noise.  Scenes sharing a shift
are exactly aliased.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .gmm import ContractViolation, GaussianComponent, GmmBelief, psd_sqrt


def _vec(v):
    a = np.atleast_1d(np.asarray(v, dtype=float)).copy()
    a.setflags(write=False)
    return a


def _mat(m):
    a = np.atleast_2d(np.asarray(m, dtype=float)).copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Action:
    id: str
    control: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "control", _vec(self.control))


@dataclass(frozen=True, eq=False)
class Box:
    """Half-open axis-aligned box [lo, hi) carrying a constant density."""

    lo: np.ndarray
    hi: np.ndarray
    density: float = 1.0

    def __post_init__(self):
        lo, hi = _vec(self.lo), _vec(self.hi)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ContractViolation(f"bad box bounds {lo} .. {hi}")
        if not 0.0 <= self.density <= 1.0:
            raise ContractViolation("box density must lie in [0, 1]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "density", float(self.density))

    def contains(self, x):
        x = np.atleast_2d(x)
        return np.all((x >= self.lo) & (x < self.hi), axis=1)

    def intersects(self, lo, hi) -> bool:
        return bool(np.all(self.lo < hi) and np.all(lo < self.hi))


@dataclass(frozen=True, eq=False)
class EventRegion:
    """Piecewise-constant P(A_i | x) as a sum of box densities."""

    boxes: tuple

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))

    def likelihood(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        p = np.zeros(x.shape[0])
        for b in self.boxes:
            p += b.density * b.contains(x)
        return p


@dataclass(frozen=True, eq=False)
class Scene:
    id: str
    anchor: np.ndarray
    shift: np.ndarray
    region: EventRegion

    def __post_init__(self):
        object.__setattr__(self, "anchor", _vec(self.anchor))
        object.__setattr__(self, "shift", _vec(self.shift))


@dataclass(frozen=True, eq=False)
class MotionModel:
    cov: np.ndarray
    step: float = 1.0
    F: Optional[np.ndarray] = None

    def __post_init__(self):
        cov = _mat(self.cov)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "F", _mat(np.eye(cov.shape[0]) if self.F is None else self.F))

    def mean(self, x, action: Action):
        return self.F @ np.asarray(x, dtype=float) + self.step * action.control


@dataclass(frozen=True, eq=False)
class ObservationModel:
    cov: np.ndarray
    H: Optional[np.ndarray] = None

    def __post_init__(self):
        cov = _mat(self.cov)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "H", _mat(np.eye(cov.shape[0]) if self.H is None else self.H))

    def offset(self, scene: Scene):
        """Constant term c_i in h(x, A_i) = H x + c_i."""
        return scene.shift - self.H @ scene.anchor

    def predict(self, x, scene: Scene):
        return self.H @ np.asarray(x, dtype=float) + self.offset(scene)


@dataclass(frozen=True, eq=False)
class World:
    scenes: tuple
    motion: MotionModel
    obs_model: ObservationModel
    alias_groups: tuple = ()

    def __post_init__(self):
        scenes = tuple(self.scenes)
        ids = [s.id for s in scenes]
        if len(set(ids)) != len(ids):
            raise ContractViolation("scene ids must be unique")
        d = self.motion.F.shape[0]
        for s in scenes:
            if s.anchor.shape != (d,) or s.shift.shape != (self.obs_model.H.shape[0],):
                raise ContractViolation(f"scene {s.id!r} has mismatched dimensions")
            if any(b.lo.shape != (d,) for b in s.region.boxes):
                raise ContractViolation(f"scene {s.id!r} region has the wrong dimension")
        index = {sid: k for k, sid in enumerate(ids)}
        groups = tuple(tuple(g) for g in self.alias_groups)
        for g in groups:
            for sid in g:
                if sid not in index:
                    raise ContractViolation(f"alias group names unknown scene {sid!r}")
            shifts = [scenes[index[sid]].shift for sid in g]
            if any(not np.array_equal(shifts[0], s) for s in shifts[1:]):
                raise ContractViolation(f"aliased scenes {g} must share one shift")
        object.__setattr__(self, "scenes", scenes)
        object.__setattr__(self, "alias_groups", groups)
        object.__setattr__(self, "_index", index)
        worst = self.max_total_likelihood()
        if worst > 1.0 + 1e-12:
            raise ContractViolation(f"event likelihoods sum to {worst} > 1 somewhere")

    @property
    def dim(self) -> int:
        return self.motion.F.shape[0]

    @property
    def scene_ids(self):
        return [s.id for s in self.scenes]

    def scene(self, scene_id) -> Scene:
        try:
            return self.scenes[self._index[scene_id]]
        except KeyError:
            raise ContractViolation(f"unknown scene {scene_id!r}") from None

    def scene_index(self, scene_id) -> int:
        self.scene(scene_id)
        return self._index[scene_id]

    def event_matrix(self, poses):
        """P(A_i | x) for every pose (rows) and scene (columns)."""
        poses = np.atleast_2d(np.asarray(poses, dtype=float))
        return np.column_stack([s.region.likelihood(poses) for s in self.scenes]) if self.scenes else np.zeros((len(poses), 0))

    def max_total_likelihood(self) -> float:
        """Exact maximum of sum_i P(A_i|x), evaluated once per grid cell."""
        boxes = [b for s in self.scenes for b in s.region.boxes]
        if not boxes:
            return 0.0
        axes = []
        for k in range(self.dim):
            edges = sorted({float(v) for b in boxes for v in (b.lo[k], b.hi[k]) if np.isfinite(v)})
            outside = [edges[0] - 1.0, edges[-1] + 1.0] if edges else [0.0]
            axes.append([0.5 * (a + b) for a, b in zip(edges, edges[1:])] + edges + outside)
        pts = np.array(list(itertools.product(*axes)))
        return float(self.event_matrix(pts).sum(axis=1).max())


@dataclass(frozen=True, eq=False)
class GroundTruth:
    pose: np.ndarray
    true_scene: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "pose", _vec(self.pose))


def event_likelihood(world: World, scene_id, pose) -> float:
    return float(world.scene(scene_id).region.likelihood(pose)[0])


def observe_nominal(world: World, pose, scene_id):
    return world.obs_model.predict(pose, world.scene(scene_id))


def sample_scene(world: World, pose, u: float):
    """Pick a scene by inverting the event-likelihood CDF at uniform ``u``.

    Returns None when ``u`` falls in the null-observation remainder.
    """
    p = world.event_matrix(pose)[0]
    k = int(np.searchsorted(np.cumsum(p), u, side="right"))
    return world.scenes[k].id if k < len(p) else None


def observe(world: World, pose, scene_id, rng: np.random.Generator):
    """Noisy observation of ``scene_id`` from ``pose``; None for a null scene."""
    noise = psd_sqrt(world.obs_model.cov) @ rng.standard_normal(world.obs_model.cov.shape[0])
    if scene_id is None:
        return None
    return observe_nominal(world, pose, scene_id) + noise


def step_ground_truth(world: World, gt: GroundTruth, action: Action, rng: np.random.Generator) -> GroundTruth:
    if gt.pose.shape != (world.dim,):
        raise ContractViolation("ground-truth pose has the wrong dimension")
    noise = psd_sqrt(world.motion.cov) @ rng.standard_normal(world.dim)
    pose = world.motion.mean(gt.pose, action) + noise
    return GroundTruth(pose, sample_scene(world, pose, rng.random()))


def sample_belief(belief: GmmBelief, rng: np.random.Generator):
    j = int(rng.choice(len(belief), p=belief.weights))
    c = belief.components[j]
    return c.mean + psd_sqrt(c.cov) @ rng.standard_normal(c.dim)


# --- bundled worlds ---------------------------------------------------------

ABSTRACT_ANCHORS = ((-5.0, 5.0), (0.0, 5.0), (5.0, 5.0))
ABSTRACT_WIDTHS = (4.0, 2.0, 4.0)
FAR = 50.0


def abstract_world(
    alias=(),
    anchors=ABSTRACT_ANCHORS,
    region_width=ABSTRACT_WIDTHS,
    band=0.5,
    step=1.0,
    motion_cov=0.02,
    obs_cov=0.01,
    shift_spacing=3.0,
):
    """Three-object world with configurable exact aliasing.

    Each scene is observable from a vertical stripe centred under its
    anchor, above ``y = band``; ``region_width`` is one width or one per
    scene.  The middle scene is also
    visible from anywhere below the band, so moving sideways yields an
    unambiguous sighting.  ``alias`` lists 1-based scene numbers that share
    one appearance shift, e.g. ``(1, 3)``.
    """
    alias = tuple(sorted(int(a) for a in alias))
    shifts = [np.array([0.0, shift_spacing * k]) for k in range(len(anchors))]
    for a in alias[1:]:
        shifts[a - 1] = shifts[alias[0] - 1]
    scenes = []
    halves = np.broadcast_to(0.5 * np.asarray(region_width, dtype=float), (len(anchors),))
    for k, (anchor, shift, half) in enumerate(zip(anchors, shifts, halves)):
        boxes = [Box((anchor[0] - half, band), (anchor[0] + half, FAR))]
        if k == len(anchors) // 2:
            boxes.append(Box((-FAR, -FAR), (FAR, band)))
        scenes.append(Scene(f"A{k + 1}", anchor, shift, EventRegion(boxes)))
    groups = (tuple(f"A{a}" for a in alias),) if len(alias) > 1 else ()
    return World(
        tuple(scenes),
        MotionModel(motion_cov * np.eye(2), step=step),
        ObservationModel(obs_cov * np.eye(2)),
        groups,
    )


def abstract_prior(sigma_x=4.0, sigma_y=0.2):
    return GmmBelief.gaussian([0.0, 0.0], np.diag([sigma_x**2, sigma_y**2]))


ABSTRACT_ACTIONS = (Action("up", [0.0, 1.0]), Action("right", [1.0, 0.0]))

# Corridor slots: name -> (anchor x, region lo x, region hi x)
CORRIDOR_SLOTS = {
    "elevator": (-1.0, -3.0, 0.5),
    "near": (1.0, 0.5, 1.5),
    "far": (2.5, 1.5, 4.0),
}

TWO_FLOOR_LAYOUT = (
    {"elevator": "elevator", "near": "shelf", "far": "left_shelf"},
    {"elevator": "elevator", "near": "shelf", "far": "right_shelf"},
)

FOUR_FLOOR_LAYOUT = (
    {"elevator": "elevator", "near": "left_shelf", "far": "right_shelf"},
    {"elevator": "elevator", "near": None, "far": "right_shelf"},
    {"elevator": "elevator", "near": "left_shelf", "far": None},
    {"elevator": "elevator", "near": None, "far": None},
)


def corridor_world(
    layout=TWO_FLOOR_LAYOUT,
    slots=CORRIDOR_SLOTS,
    floor_spacing=10.0,
    band=2.0,
    step=1.0,
    motion_cov=(0.01, 0.0001),
    obs_cov=0.01,
    shift_spacing=3.0,
):
    """Parallel corridors (floors) with per-floor object layouts.

    ``layout[f]`` maps slot name to object type, or None where the object
    was removed.  Objects of one type look identical on every floor, so
    they are exactly aliased across floors.  Poses are (x along corridor,
    y = floor_spacing * floor).
    """
    types = []
    for floor in layout:
        for t in floor.values():
            if t is not None and t not in types:
                types.append(t)
    type_shift = {t: np.array([0.0, shift_spacing * k]) for k, t in enumerate(types)}
    scenes, members = [], {t: [] for t in types}
    for f, floor in enumerate(layout):
        y = floor_spacing * f
        for slot, t in floor.items():
            if t is None:
                continue
            ax, lo, hi = slots[slot]
            sid = f"F{f + 1}-{slot}"
            region = EventRegion([Box((lo, y - band), (hi, y + band))])
            scenes.append(Scene(sid, (ax, y), type_shift[t], region))
            members[t].append(sid)
    groups = tuple(tuple(m) for m in members.values() if len(m) > 1)
    return World(
        tuple(scenes),
        MotionModel(np.diag(motion_cov), step=step),
        ObservationModel(obs_cov * np.eye(2)),
        groups,
    )


def corridor_prior(n_floors=2, weights=None, x0=0.0, sigma_x=0.3, sigma_y=0.1, floor_spacing=10.0):
    weights = np.full(n_floors, 1.0 / n_floors) if weights is None else np.asarray(weights, dtype=float)
    comps = tuple(
        GaussianComponent([x0, floor_spacing * f], np.diag([sigma_x**2, sigma_y**2])) for f in range(n_floors)
    )
    return GmmBelief.from_unnormalized(weights, comps)


CORRIDOR_ACTIONS = (Action("fwd1", [1.0, 0.0]), Action("fwd2", [2.0, 0.0]), Action("bwd1", [-1.0, 0.0]))
