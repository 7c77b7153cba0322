"""Scenario files.

A scenario is a YAML mapping::

    seed: 7                          # required
    world:
      builtin: corridor              # abstract | corridor | four_floors
      params: {floor_spacing: 10}    # forwarded to the builder
      # or, instead of builtin:
      # scenes: [{id, anchor, shift, region: [{lo, hi, density}]}]
      # motion: {cov, step, F}
      # observation: {cov, H}
      # alias_groups: [[id, ...]]
    prior:                           # default: the builtin world's prior
      params: {sigma_x: 0.3}
      # or components: [{weight, mean, cov}]
    actions: [{id, control}]         # default: the builtin world's actions
    cost: {M_u, M_G, M_sigma, M_w, epsilon, sigma_mode, goal}
    planning: {samples, prune_threshold, gate_sigma, jobs}
    episode: {length, truth: {pose | component}}
    sweep: {alias_sets, seeds}
    output: {dir}

Every problem is reported as a ``ConfigError`` naming the field and, when
known, the line it came from.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from ..association import DEFAULT_GATE_SIGMA, DEFAULT_PRUNE
from ..gmm import GaussianComponent, GmmBelief
from ..planner import SIGMA_MODES, CostWeights
from ..world import (
    ABSTRACT_ACTIONS,
    CORRIDOR_ACTIONS,
    FOUR_FLOOR_LAYOUT,
    Action,
    Box,
    EventRegion,
    MotionModel,
    ObservationModel,
    Scene,
    World,
    abstract_prior,
    abstract_world,
    corridor_prior,
    corridor_world,
)

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"

TOP_LEVEL = {"name", "seed", "world", "prior", "actions", "cost", "planning", "episode", "sweep", "output"}


class ConfigError(ValueError):
    def __init__(self, field, message, line=None, source=None):
        self.field, self.line, self.source = field, line, source
        where = f"{source}:" if source else ""
        where += f"{line}: " if line else (" " if source else "")
        super().__init__(f"{where}{field}: {message}")


def _four_floor_world(**kw):
    return corridor_world(layout=FOUR_FLOOR_LAYOUT, **kw)


def _four_floor_prior(**kw):
    return corridor_prior(n_floors=4, **kw)


BUILTINS = {
    "abstract": (abstract_world, abstract_prior, ABSTRACT_ACTIONS),
    "corridor": (corridor_world, corridor_prior, CORRIDOR_ACTIONS),
    "four_floors": (_four_floor_world, _four_floor_prior, CORRIDOR_ACTIONS),
}


def _line_map(node, path=(), out=None):
    """Map of key paths to 1-based source lines from a composed YAML tree."""
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            _line_map(v, path + (k.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, path + (i,), out)
    return out


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    raw: dict
    seed: int
    world: World
    prior: GmmBelief
    actions: tuple
    cost: CostWeights
    samples: int
    prune_threshold: float
    gate_sigma: float
    jobs: int
    episode_length: int
    truth_pose: Optional[np.ndarray]
    truth_component: Optional[int]
    sweep_alias_sets: tuple
    sweep_seeds: int
    output_dir: str
    source: Optional[str] = None

    @property
    def name(self):
        return self.raw.get("name", self.raw["world"].get("builtin", "custom"))

    def action(self, action_id) -> Action:
        for a in self.actions:
            if a.id == action_id:
                return a
        raise ConfigError("actions", f"no action named {action_id!r}", source=self.source)

    def with_overrides(self, seed=None, samples=None, output_dir=None, **raw_updates) -> "ScenarioConfig":
        raw = copy.deepcopy(self.raw)
        if seed is not None:
            raw["seed"] = seed
        if samples is not None:
            raw.setdefault("planning", {})["samples"] = samples
        if output_dir is not None:
            raw.setdefault("output", {})["dir"] = str(output_dir)
        for section, values in raw_updates.items():
            raw.setdefault(section, {}).update(values)
        return parse_config(raw, source=self.source)

    def to_dict(self):
        return copy.deepcopy(self.raw)


class _Parser:
    def __init__(self, raw, lines, source):
        self.raw, self.lines, self.source = raw, lines, source

    def fail(self, path, message):
        line = None
        for k in range(len(path), -1, -1):
            line = self.lines.get(tuple(path[:k]))
            if line:
                break
        raise ConfigError(".".join(str(p) for p in path) or "<root>", message, line, self.source)

    def section(self, key, required=False):
        val = self.raw.get(key)
        if val is None:
            if required:
                self.fail((key,), "missing required section")
            return {}
        if not isinstance(val, dict):
            self.fail((key,), "expected a mapping")
        return val

    def number(self, path, value, kind=float, lo=None, hi=None, lo_open=False):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"expected a number, got {value!r}")
        if kind is int and int(value) != value:
            self.fail(path, f"expected an integer, got {value!r}")
        value = kind(value)
        if not np.isfinite(value):
            self.fail(path, "must be finite")
        if lo is not None and (value <= lo if lo_open else value < lo):
            self.fail(path, f"must be {'>' if lo_open else '>='} {lo}")
        if hi is not None and value > hi:
            self.fail(path, f"must be <= {hi}")
        return value

    def array(self, path, value, shape=None):
        try:
            a = np.asarray(value, dtype=float)
        except (TypeError, ValueError):
            self.fail(path, f"expected a numeric array, got {value!r}")
        if a.dtype == object or not np.all(np.isfinite(a)):
            self.fail(path, "expected a finite numeric array")
        if shape is not None and a.shape != shape:
            self.fail(path, f"expected shape {shape}, got {a.shape}")
        return a

    def cov(self, path, value, d):
        a = self.array(path, value)
        if a.ndim == 0:
            a = float(a) * np.eye(d)
        elif a.ndim == 1:
            a = np.diag(a)
        if a.shape != (d, d):
            self.fail(path, f"expected a {d}x{d} covariance")
        if not np.allclose(a, a.T):
            self.fail(path, "covariance must be symmetric")
        if np.linalg.eigvalsh(a)[0] < 0:
            self.fail(path, "covariance must be positive semi-definite")
        return a

    def call(self, path, fn, params):
        try:
            return fn(**params)
        except TypeError as exc:
            self.fail(path, f"unsupported parameter ({exc})")
        except ValueError as exc:
            self.fail(path, str(exc))

    # -- sections ---------------------------------------------------------

    def world(self):
        spec = self.section("world", required=True)
        builtin = spec.get("builtin")
        if builtin is not None:
            if builtin not in BUILTINS:
                self.fail(("world", "builtin"), f"unknown builtin {builtin!r}; choose from {sorted(BUILTINS)}")
            params = spec.get("params") or {}
            if not isinstance(params, dict):
                self.fail(("world", "params"), "expected a mapping")
            return self.call(("world", "params"), BUILTINS[builtin][0], params), builtin
        return self.explicit_world(spec), None

    def explicit_world(self, spec):
        scenes_raw = spec.get("scenes")
        if not isinstance(scenes_raw, list) or not scenes_raw:
            self.fail(("world", "scenes"), "need `builtin` or a non-empty list of scenes")
        scenes = []
        d = None
        for k, s in enumerate(scenes_raw):
            p = ("world", "scenes", k)
            if not isinstance(s, dict):
                self.fail(p, "expected a mapping")
            for key in ("id", "anchor", "shift", "region"):
                if key not in s:
                    self.fail(p, f"missing `{key}`")
            anchor = self.array(p + ("anchor",), s["anchor"])
            d = anchor.shape[0] if d is None else d
            anchor = self.array(p + ("anchor",), s["anchor"], (d,))
            shift = self.array(p + ("shift",), s["shift"])
            boxes = []
            if not isinstance(s["region"], list):
                self.fail(p + ("region",), "expected a list of boxes")
            for b, box in enumerate(s["region"]):
                bp = p + ("region", b)
                if not isinstance(box, dict) or "lo" not in box or "hi" not in box:
                    self.fail(bp, "a box needs `lo` and `hi`")
                lo = self.array(bp + ("lo",), box["lo"], (d,))
                hi = self.array(bp + ("hi",), box["hi"], (d,))
                dens = self.number(bp + ("density",), box.get("density", 1.0), lo=0.0, hi=1.0)
                if np.any(hi <= lo):
                    self.fail(bp, "every `hi` must exceed `lo`")
                boxes.append(Box(lo, hi, dens))
            scenes.append(Scene(str(s["id"]), anchor, shift, EventRegion(boxes)))
        motion = spec.get("motion") or {}
        obs = spec.get("observation") or {}
        if "cov" not in motion:
            self.fail(("world", "motion", "cov"), "missing")
        if "cov" not in obs:
            self.fail(("world", "observation", "cov"), "missing")
        F = None if motion.get("F") is None else self.array(("world", "motion", "F"), motion["F"], (d, d))
        H = None if obs.get("H") is None else self.array(("world", "observation", "H"), obs["H"])
        dz = d if H is None else H.shape[0]
        mm = MotionModel(
            self.cov(("world", "motion", "cov"), motion["cov"], d),
            step=self.number(("world", "motion", "step"), motion.get("step", 1.0)),
            F=F,
        )
        om = ObservationModel(self.cov(("world", "observation", "cov"), obs["cov"], dz), H=H)
        groups = spec.get("alias_groups") or ()
        try:
            return World(tuple(scenes), mm, om, tuple(tuple(str(x) for x in g) for g in groups))
        except ValueError as exc:
            self.fail(("world",), str(exc))

    def prior(self, world, builtin):
        spec = self.section("prior")
        comps = spec.get("components")
        if comps is None:
            if builtin is None:
                self.fail(("prior", "components"), "a custom world needs explicit prior components")
            params = spec.get("params") or {}
            return self.call(("prior", "params"), BUILTINS[builtin][1], params)
        if not isinstance(comps, list) or not comps:
            self.fail(("prior", "components"), "expected a non-empty list")
        weights, gcs = [], []
        for k, c in enumerate(comps):
            p = ("prior", "components", k)
            if not isinstance(c, dict) or "mean" not in c or "cov" not in c:
                self.fail(p, "a component needs `mean` and `cov`")
            mean = self.array(p + ("mean",), c["mean"], (world.dim,))
            gcs.append(GaussianComponent(mean, self.cov(p + ("cov",), c["cov"], world.dim)))
            weights.append(self.number(p + ("weight",), c.get("weight", 1.0), lo=0.0, lo_open=True))
        return GmmBelief.from_unnormalized(weights, tuple(gcs))

    def actions(self, world, builtin):
        spec = self.raw.get("actions")
        if spec is None:
            if builtin is None:
                self.fail(("actions",), "a custom world needs an action list")
            return BUILTINS[builtin][2]
        if not isinstance(spec, list) or not spec:
            self.fail(("actions",), "expected a non-empty list")
        out, seen = [], set()
        for k, a in enumerate(spec):
            p = ("actions", k)
            if not isinstance(a, dict) or "id" not in a or "control" not in a:
                self.fail(p, "an action needs `id` and `control`")
            if a["id"] in seen:
                self.fail(p + ("id",), f"duplicate action id {a['id']!r}")
            seen.add(a["id"])
            out.append(Action(str(a["id"]), self.array(p + ("control",), a["control"], (world.dim,))))
        return tuple(out)

    def cost(self, world):
        spec = self.section("cost")
        known = {"M_u", "M_G", "M_sigma", "M_w", "epsilon", "sigma_mode", "goal"}
        for key in spec:
            if key not in known:
                self.fail(("cost", key), f"unknown key; expected one of {sorted(known)}")
        kw = {m: self.number(("cost", m), spec.get(m, 0.0), lo=0.0) for m in ("M_u", "M_G", "M_sigma", "M_w")}
        kw["epsilon"] = self.number(("cost", "epsilon"), spec.get("epsilon", 1e-6), lo=0.0, lo_open=True)
        mode = spec.get("sigma_mode", "worst")
        if mode not in SIGMA_MODES:
            self.fail(("cost", "sigma_mode"), f"expected one of {SIGMA_MODES}")
        kw["sigma_mode"] = mode
        if spec.get("goal") is not None:
            kw["goal"] = tuple(self.array(("cost", "goal"), spec["goal"], (world.dim,)))
        return CostWeights(**kw)


def parse_config(raw, source=None, lines=None) -> ScenarioConfig:
    """Validate a scenario mapping and build its objects."""
    lines = lines or {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "a scenario must be a mapping", source=source)
    p = _Parser(raw, lines, source)
    for key in raw:
        if key not in TOP_LEVEL:
            p.fail((key,), f"unknown section; expected one of {sorted(TOP_LEVEL)}")
    if "seed" not in raw:
        p.fail(("seed",), "missing required field")
    seed = p.number(("seed",), raw["seed"], int, lo=0)

    world, builtin = p.world()
    prior = p.prior(world, builtin)
    if prior.dim != world.dim:
        p.fail(("prior",), f"prior has dimension {prior.dim}, world has {world.dim}")
    actions = p.actions(world, builtin)
    cost = p.cost(world)

    plan = p.section("planning")
    samples = p.number(("planning", "samples"), plan.get("samples", 200), int, lo=1)
    prune_threshold = p.number(("planning", "prune_threshold"), plan.get("prune_threshold", DEFAULT_PRUNE), lo=0.0)
    if prune_threshold >= 1:
        p.fail(("planning", "prune_threshold"), "must be < 1")
    gate = p.number(("planning", "gate_sigma"), plan.get("gate_sigma", DEFAULT_GATE_SIGMA), lo=0.0, lo_open=True)
    jobs = p.number(("planning", "jobs"), plan.get("jobs", 1), int, lo=1)

    ep = p.section("episode")
    length = p.number(("episode", "length"), ep.get("length", 3), int, lo=0)
    truth = ep.get("truth") or {}
    if not isinstance(truth, dict):
        p.fail(("episode", "truth"), "expected a mapping")
    pose = None if truth.get("pose") is None else p.array(("episode", "truth", "pose"), truth["pose"], (world.dim,))
    comp = None
    if truth.get("component") is not None:
        comp = p.number(("episode", "truth", "component"), truth["component"], int, lo=0, hi=len(prior) - 1)

    sw = p.section("sweep")
    alias_sets = sw.get("alias_sets", [[]])
    if not isinstance(alias_sets, list) or not all(isinstance(a, list) for a in alias_sets):
        p.fail(("sweep", "alias_sets"), "expected a list of lists")
    if alias_sets and builtin != "abstract":
        if any(alias_sets):
            p.fail(("sweep", "alias_sets"), "alias sweeps need the abstract builtin world")
    sweep_seeds = p.number(("sweep", "seeds"), sw.get("seeds", 50), int, lo=1)

    out = p.section("output")
    out_dir = str(out.get("dir", "out"))

    return ScenarioConfig(
        raw=copy.deepcopy(raw),
        seed=seed,
        world=world,
        prior=prior,
        actions=actions,
        cost=cost,
        samples=samples,
        prune_threshold=prune_threshold,
        gate_sigma=gate,
        jobs=jobs,
        episode_length=length,
        truth_pose=pose,
        truth_component=comp,
        sweep_alias_sets=tuple(tuple(int(x) for x in a) for a in alias_sets),
        sweep_seeds=sweep_seeds,
        output_dir=out_dir,
        source=source,
    )


def load_config(path) -> ScenarioConfig:
    """Read a scenario file; bare names resolve to the bundled scenarios."""
    path = Path(path)
    if not path.exists() and (SCENARIO_DIR / f"{path.name}.yaml").exists():
        path = SCENARIO_DIR / f"{path.name}.yaml"
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read scenario: {exc.strerror}", source=str(path)) from exc
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("<syntax>", str(getattr(exc, "problem", exc)), mark.line + 1 if mark else None, str(path)) from exc
    lines = _line_map(node) if node is not None else {}
    return parse_config(raw, source=str(path), lines=lines)


def bundled_scenarios():
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.yaml"))
