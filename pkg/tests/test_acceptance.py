"""End-to-end acceptance criteria.

Each test records one PASS/FAIL line (with its runtime budget) that is
printed in the pytest terminal summary.
"""

import filecmp
import subprocess
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

from dabsp.association import posterior_update_info, scene_weights, term_a_weights, weight_table
from dabsp.gmm import GaussianComponent, GmmBelief, collapse, propagate
from dabsp.harness.config import load_config
from dabsp.harness.episode import run_episode
from dabsp.harness.studies import alias_label, epsilon_study, eta_study
from dabsp.obs_sim import simulate_observations
from dabsp.planner import CostWeights, evaluate_cost, evaluate_objective, action_rng, select_action
from dabsp.world import ABSTRACT_ACTIONS, abstract_prior, abstract_world, observe_nominal

import conftest
from conftest import make_world, mixture
from oracles import (
    closed_form_marginal,
    grid_posterior,
    mixture_on_grid,
    posterior_grid,
    random_cov,
    random_posterior_case,
    random_term_a_case,
    term_a_oracle,
)

pytestmark = pytest.mark.acceptance


@contextmanager
def criterion(number, title, budget):
    """Time the block, record a summary line, then enforce the budget."""
    info = {"detail": ""}
    start = time.perf_counter()
    ok = False
    try:
        yield info
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        status = "PASS" if ok and elapsed < budget else "FAIL"
        detail = info["detail"] if ok else "assertion failed"
        conftest.ACCEPTANCE_LINES.append(
            f"[{status}] criterion {number:2d} {title}: {detail} ({elapsed:.1f} s, budget {budget} s)"
        )
    assert elapsed < budget, f"took {elapsed:.1f} s, budget {budget} s"


def bundled_worlds():
    worlds = [(f"abstract {alias_label(a)}", abstract_world(alias=a), abstract_prior()) for a in [(), (1, 2), (1, 3), (1, 2, 3)]]
    for name in ("corridor", "four_floors"):
        cfg = load_config(name)
        worlds.append((name, cfg.world, cfg.prior))
    return worlds


def random_belief(rng, prior):
    """1-4 components scattered around the prior's modes with random shapes."""
    m = int(rng.integers(1, 5))
    picks = rng.choice(len(prior), size=m, p=prior.weights)
    comps = []
    for j in picks:
        base = prior.components[j]
        sd = np.sqrt(np.diag(base.cov))
        mean = base.mean + rng.normal(0, 1, prior.dim) * (sd + 0.5)
        comps.append(GaussianComponent(mean, random_cov(rng, (0.05, 2.0), 0.8)))
    return GmmBelief(rng.dirichlet(np.ones(m)), tuple(comps))


def test_criterion_01_weight_normalization():
    with criterion(1, "w-tilde rows sum to one", 60) as info:
        rng = np.random.default_rng(101)
        worlds = bundled_worlds()
        worst, rows, skipped = 0.0, 0, 0
        for k in range(1000):
            _, world, prior = worlds[k % len(worlds)]
            belief = random_belief(rng, prior)
            comp = belief.components[int(rng.choice(len(belief), p=belief.weights))]
            pose = rng.multivariate_normal(comp.mean, comp.cov)
            scene = world.scenes[int(rng.integers(len(world.scenes)))]
            z = observe_nominal(world, pose, scene.id) + rng.normal(0, 0.5, world.obs_model.cov.shape[0])
            table = weight_table(z, belief, world)
            wt = table.w_tilde
            sup = table.row_supported
            # rows of components that no scene can explain carry no association
            assert np.all(wt[~sup] == 0)
            worst = max(worst, float(np.abs(wt[sup].sum(axis=1) - 1.0).max(initial=0.0)))
            rows += int(sup.sum())
            skipped += int((~sup).sum())
        info["detail"] = f"max |row sum - 1| = {worst:.1e} over {rows} rows ({skipped} unsupported rows)"
        assert worst <= 1e-9
        assert rows > 1000


def test_criterion_02_integration_oracle():
    with criterion(2, "term (a) against dense quadrature", 120) as info:
        rng = np.random.default_rng(202)
        worst, negligible = 0.0, 0
        for _ in range(50):
            belief, world, z = random_term_a_case(rng)
            got = term_a_weights(z, belief, world).values
            c = belief.components[0]
            ref = np.array([term_a_oracle(z, c.mean, c.cov, s, world.obs_model.H, world.obs_model.cov) for s in world.scenes])
            total = ref.sum()
            assert total > 0
            for g, r in zip(got, ref):
                if r < 1e-12 * total:
                    # below the grid's own accuracy; must stay negligible
                    negligible += 1
                    assert abs(g - r) <= 1e-12 * total
                else:
                    worst = max(worst, abs(g - r) / r)
        # region covering the whole prior: closed-form marginal likelihood
        w = make_world([("A", [1.0, 2.0], [0.5, -0.5], [([-80, -80], [80, 80], 1.0)])], obs_cov=0.2)
        b = GmmBelief.gaussian([0.3, -0.2], [[1.0, 0.4], [0.4, 0.8]])
        z = np.array([-0.4, -2.1])
        exact = closed_form_marginal(z, b.components[0].mean, b.components[0].cov, np.eye(2),
                                     w.scenes[0].shift - w.scenes[0].anchor, w.obs_model.cov)
        closed = abs(term_a_weights(z, b, w).total - exact) / exact
        info["detail"] = (f"max rel err {worst:.1e} on 50 cases ({negligible} negligible scene weights); "
                          f"closed form rel err {closed:.1e}")
        assert worst < 1e-4
        assert closed < 1e-4


def test_criterion_03_posterior_oracle():
    with criterion(3, "posterior against grid Bayes", 120) as info:
        rng = np.random.default_rng(303)
        errs = []
        for _ in range(10):
            belief, world, z = random_posterior_case(rng)
            post = posterior_update_info(belief, z, world, prune_threshold=1e-9).belief
            xs, ys = posterior_grid(post)
            ref, cell = grid_posterior(z, belief.weights, belief.means, belief.covs, world, xs, ys)
            errs.append(float(np.abs(mixture_on_grid(post, xs, ys) - ref).sum() * cell))
        info["detail"] = f"max L1 {max(errs):.1e} on 10 cases"
        assert max(errs) < 1e-3


def test_criterion_04_degeneracies():
    with criterion(4, "no-aliasing and full-aliasing limits", 30) as info:
        rng = np.random.default_rng(404)
        # (a) abstract world without aliasing, one- and two-mode priors
        world = abstract_world(alias=())
        two = mixture([0.5, 0.5], [[0.0, 0.0], [0.5, 0.0]], [np.diag([16.0, 0.04])] * 2)
        worst_top, checked = 1.0, 0
        for prior in (abstract_prior(), two):
            for a in ABSTRACT_ACTIONS:
                prop = propagate(prior, world.motion, a)
                for s in simulate_observations(prop, world, 100, rng):
                    if s.is_null:
                        continue
                    res = posterior_update_info(prop, s.z, world)
                    assert len(res.belief) == len(prop)
                    worst_top = min(worst_top, float(res.table.w_tilde.max(axis=1).min()))
                    checked += 1
        assert worst_top > 1 - 1e-6
        # (b) three identical co-located scenes
        box = ([-40, -40], [40, 40], 1 / 3)
        alias = make_world([(f"A{i}", [1.0, 1.0], [0.0, 2.0], [box]) for i in range(3)],
                           obs_cov=0.1, alias_groups=(("A0", "A1", "A2"),))
        prior = mixture([0.4, 0.6], [[0, 0], [2, 1]], [np.eye(2), 0.5 * np.eye(2)])
        cw = CostWeights(M_w=1.0, epsilon=1e-6)
        uniform_err, c_w = 0.0, []
        for s in simulate_observations(prior, alias, 50, rng):
            res = posterior_update_info(prior, s.z, alias)
            uniform_err = max(uniform_err, float(np.abs(res.table.w_tilde - 1 / 3).max()))
            c_w.append(evaluate_cost(res.belief, scene_weights(res, alias), ABSTRACT_ACTIONS[0], cw).c_w)
        c_w = np.array(c_w)
        info["detail"] = (f"(a) min top w-tilde 1-{1 - worst_top:.0e} on {checked} obs; "
                          f"(b) max |w-tilde - 1/3| {uniform_err:.0e}, c_w eps {c_w.min() * 1e-6:.6f}..{c_w.max() * 1e-6:.6f}")
        assert uniform_err < 1e-3
        np.testing.assert_allclose(c_w, 1 / cw.epsilon, rtol=1e-3)


def test_criterion_05_collapse():
    with criterion(5, "moment-matched collapse", 30) as info:
        rng = np.random.default_rng(505)
        b = mixture([0.2, 0.5, 0.3], [[-2, 1], [3, 0], [0, -4]], [np.eye(2), [[2, 0.5], [0.5, 1]], 0.3 * np.eye(2)])
        n = 1_000_000
        comps = rng.choice(3, size=n, p=b.weights)
        x = np.empty((n, 2))
        for j, c in enumerate(b.components):
            idx = comps == j
            x[idx] = rng.multivariate_normal(c.mean, c.cov, size=idx.sum())
        c = collapse(b)
        sd = np.sqrt(np.diag(c.cov))
        mean_err = float(np.max(np.abs(x.mean(0) - c.mean) / sd))
        cov_err = float(np.max(np.abs(np.cov(x.T) - c.cov) / np.outer(sd, sd)))
        single = GmmBelief.gaussian([1.5, -2.0], [[2.0, 0.3], [0.3, 1.0]])
        same = collapse(single)
        exact = np.array_equal(same.mean, single.components[0].mean) and np.array_equal(same.cov, single.components[0].cov)
        info["detail"] = f"mean err {mean_err:.1e} sd, cov err {cov_err:.1e} (relative); single component exact: {exact}"
        assert mean_err < 0.01 and cov_err < 0.01
        assert exact


def test_criterion_06_estimation_error_study():
    with criterion(6, "abstract world estimation error, 50 seeds", 300) as info:
        cfg = load_config("abstract")
        up, right = cfg.action("up"), cfg.action("right")
        parts = []
        ok = True
        for alias in [(1, 2), (1, 3), (1, 2, 3)]:
            world = abstract_world(alias=alias)
            amb = epsilon_study(world, cfg.prior, up, range(50), cfg.prune_threshold, cfg.gate_sigma)
            clear = epsilon_study(world, cfg.prior, right, range(50), cfg.prune_threshold, cfg.gate_sigma)
            gap = abs(clear.median_da - clear.median_bsp) / clear.median_bsp
            ok &= amb.median_da < amb.median_bsp and gap < 0.1
            parts.append(f"{alias_label(alias)} up {amb.median_da:.2f}<{amb.median_bsp:.2f}, right gap {gap:.3f}")
        info["detail"] = "; ".join(parts)
        assert ok


def test_criterion_07_corridor_ranking():
    with criterion(7, "corridor picks the disambiguating action", 120) as info:
        cfg = load_config("corridor")
        report = select_action(cfg.prior, cfg.actions, cfg.world, cfg.cost, cfg.samples, cfg.seed,
                               cfg.prune_threshold, cfg.gate_sigma)
        episode = run_episode(cfg)
        after = next(r for r in episode.records if r["kind"] == "step" and r["action"] == "fwd2")
        eta = after["metrics"]["eta_da"]
        Js = ", ".join(f"{e.action} {e.J:.3f}" for e in report.evaluations)
        info["detail"] = f"J: {Js}; chosen {report.chosen}; eta_da after fwd2 = {eta:.6f}"
        assert report.chosen == "fwd2"
        assert episode.summary["actions"][0] == "fwd2"
        assert eta == pytest.approx(1.0, abs=1e-9)


def test_criterion_08_association_accuracy():
    with criterion(8, "four-floor corridor association accuracy, 50 seeds", 300) as info:
        study = eta_study(load_config("four_floors"), range(50))
        da, base = study.eta_da.mean(), study.eta_baseline.mean()
        zeros = int(np.sum(study.eta_baseline == 0))
        info["detail"] = f"mean eta_da {da:.3f} vs baseline {base:.3f}; baseline zero on {zeros} seeds"
        assert da > base
        assert zeros >= 1


def test_criterion_09_determinism(tmp_path):
    with criterion(9, "byte-identical episode log", 30) as info:
        logs = []
        for k in range(2):
            out = tmp_path / f"run{k}"
            res = subprocess.run([sys.executable, "-m", "dabsp", "run", "--config", "corridor", "--seed", "11",
                                  "--out", str(out)], capture_output=True, text=True)
            assert res.returncode == 0, res.stderr
            logs.append(out / "episode.jsonl")
        same = filecmp.cmp(logs[0], logs[1], shallow=False)
        info["detail"] = f"{logs[0].stat().st_size} bytes, identical: {same}"
        assert same


def test_criterion_10_mode_bookkeeping():
    with criterion(10, "mode count before and after pruning", 30) as info:
        rng = np.random.default_rng(1010)
        updates, uniform, pruned = 0, 0, 0
        for name, world, prior in bundled_worlds():
            belief = prior
            for step in range(3):
                action = load_config("abstract" if name.startswith("abstract") else name).actions[step % 2]
                prop = propagate(belief, world.motion, action)
                for s in simulate_observations(prop, world, 20, rng):
                    if s.is_null:
                        continue
                    res = posterior_update_info(prop, s.z, world)
                    per_row = res.table.supported.sum(axis=1)
                    assert res.n_before_prune == int(np.maximum(per_row, 1).sum())
                    if np.all(per_row == per_row[0]) and per_row[0] > 0:
                        assert res.n_before_prune == len(prop) * int(per_row[0])
                        uniform += 1
                    assert len(res.belief) <= res.n_before_prune
                    assert len(res.belief) + len(res.pruned_weights) == res.n_before_prune
                    assert np.all(res.pruned_weights < res.threshold)
                    pruned += len(res.pruned_weights)
                    updates += 1
                    belief = res.belief
        # instrumented episodes
        for name in ("corridor", "four_floors"):
            for r in run_episode(load_config(name).with_overrides(samples=20)).records:
                if r["kind"] == "step" and r["weights"] is not None:
                    assert r["modes"] + len(r["pruned_weights"]) == r["modes_before_prune"]
                    assert all(w < 1e-3 for w in r["pruned_weights"])
        info["detail"] = f"{updates} updates ({uniform} with equal support per component), {pruned} components pruned"
        assert updates > 100 and pruned > 0
