import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dabsp.gmm import (
    JITTER_FLOOR,
    ContractViolation,
    GaussianComponent,
    GmmBelief,
    NumericalError,
    WeightDistribution,
    collapse,
    condition,
    kl_to_uniform,
    propagate,
    prune,
)
from dabsp.world import Action, MotionModel, ObservationModel, Scene, EventRegion

from conftest import mixture


def spd(rng, d, scale=1.0):
    a = rng.normal(size=(d, d))
    return scale * (a @ a.T + 0.2 * np.eye(d))


class TestComponent:
    def test_arrays_are_read_only_copies(self):
        mean = np.array([1.0, 2.0])
        c = GaussianComponent(mean, np.eye(2))
        mean[0] = 99.0
        assert c.mean[0] == 1.0
        with pytest.raises(ValueError):
            c.mean[0] = 5.0

    def test_asymmetric_cov_rejected(self):
        with pytest.raises(ContractViolation):
            GaussianComponent([0, 0], [[1.0, 0.5], [0.0, 1.0]])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ContractViolation):
            GaussianComponent([0, 0, 0], np.eye(2))

    def test_jitter_lifts_singular_cov_and_is_recorded(self):
        c = GaussianComponent([0, 0], [[1.0, 1.0], [1.0, 1.0]])
        assert np.linalg.eigvalsh(c.cov)[0] == pytest.approx(JITTER_FLOOR, rel=1e-6)
        assert c.jitter == pytest.approx(JITTER_FLOOR, rel=1e-6)
        assert GaussianComponent([0, 0], np.eye(2)).jitter == 0.0

    def test_nonfinite_rejected(self):
        with pytest.raises(NumericalError):
            GaussianComponent([0, 0], [[np.nan, 0], [0, 1]])

    def test_logpdf_matches_scipy(self, rng):
        from scipy.stats import multivariate_normal

        cov = spd(rng, 3)
        c = GaussianComponent([1, 2, 3], cov)
        x = rng.normal(size=(5, 3))
        np.testing.assert_allclose(c.logpdf(x), multivariate_normal([1, 2, 3], cov).logpdf(x), rtol=1e-12)


class TestBelief:
    def test_weights_must_sum_to_one(self):
        comps = (GaussianComponent([0], [[1]]), GaussianComponent([1], [[1]]))
        with pytest.raises(ContractViolation):
            GmmBelief([0.5, 0.6], comps)
        GmmBelief([0.5, 0.5 + 5e-10], comps)

    def test_empty_and_mixed_dimension_rejected(self):
        with pytest.raises(ContractViolation):
            GmmBelief([], ())
        with pytest.raises(ContractViolation):
            GmmBelief([0.5, 0.5], (GaussianComponent([0], [[1]]), GaussianComponent([0, 0], np.eye(2))))

    def test_from_unnormalized(self):
        b = mixture([2, 6], [[0], [1]], [[[1]], [[1]]])
        np.testing.assert_allclose(b.weights, [0.25, 0.75])
        with pytest.raises(NumericalError):
            GmmBelief.from_unnormalized([0.0, 0.0], b.components)

    def test_default_lineage_is_empty(self):
        b = GmmBelief.gaussian([0, 0], np.eye(2))
        assert b.lineages == ((),)


def test_propagate_linear_model(rng):
    F = np.array([[1.0, 0.1], [0.0, 1.0]])
    Q = np.diag([0.01, 0.02])
    b = mixture([0.3, 0.7], [[0, 0], [5, 1]], [np.eye(2), 2 * np.eye(2)])
    out = propagate(b, MotionModel(Q, step=2.0, F=F), Action("a", [1.0, -1.0]))
    for c_in, c_out in zip(b.components, out.components):
        np.testing.assert_allclose(c_out.mean, F @ c_in.mean + [2.0, -2.0])
        np.testing.assert_allclose(c_out.cov, F @ c_in.cov @ F.T + Q)
    np.testing.assert_array_equal(out.weights, b.weights)
    with pytest.raises(ContractViolation):
        propagate(b, MotionModel(np.eye(2)), Action("bad", [1.0, 0.0, 0.0]))


def test_condition_matches_information_form(rng):
    for _ in range(20):
        d = 2
        cov, R = spd(rng, d), spd(rng, d, 0.1)
        H = rng.normal(size=(d, d)) + 2 * np.eye(d)
        mean = rng.normal(size=d)
        scene = Scene("s", rng.normal(size=d), rng.normal(size=d), EventRegion(()))
        obs = ObservationModel(R, H)
        z = rng.normal(size=d)
        post = condition(GaussianComponent(mean, cov), z, scene, obs)
        c = scene.shift - H @ scene.anchor
        info = np.linalg.inv(cov) + H.T @ np.linalg.inv(R) @ H
        P = np.linalg.inv(info)
        m = P @ (np.linalg.solve(cov, mean) + H.T @ np.linalg.solve(R, z - c))
        np.testing.assert_allclose(post.cov, P, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(post.mean, m, rtol=1e-9, atol=1e-12)


def test_condition_rejects_wrong_observation_shape():
    scene = Scene("s", [0, 0], [0, 0], EventRegion(()))
    with pytest.raises(ContractViolation):
        condition(GaussianComponent([0, 0], np.eye(2)), [1.0], scene, ObservationModel(np.eye(2)))


def test_collapse_single_component_is_identity():
    b = GmmBelief.gaussian([1.5, -2.0], [[2.0, 0.3], [0.3, 1.0]])
    c = collapse(b)
    np.testing.assert_array_equal(c.mean, b.components[0].mean)
    np.testing.assert_array_equal(c.cov, b.components[0].cov)


def test_collapse_matches_samples():
    rng = np.random.default_rng(7)
    b = mixture([0.2, 0.5, 0.3], [[6, 4], [9, 3], [7, 8]], [np.eye(2), [[2, 0.5], [0.5, 1]], 0.3 * np.eye(2)])
    n = 1_000_000
    comps = rng.choice(3, size=n, p=b.weights)
    x = np.empty((n, 2))
    for j, c in enumerate(b.components):
        idx = comps == j
        x[idx] = rng.multivariate_normal(c.mean, c.cov, size=idx.sum())
    c = collapse(b)
    assert np.linalg.norm(x.mean(0) - c.mean) / np.linalg.norm(c.mean) < 0.01
    emp = np.cov(x.T)
    assert np.linalg.norm(emp - c.cov) / np.linalg.norm(c.cov) < 0.01


class TestPrune:
    def test_drops_and_renormalizes(self):
        b = mixture([0.6, 0.3995, 0.0005], [[0], [1], [2]], [[[1]]] * 3)
        out = prune(b, 1e-3)
        assert len(out) == 2
        np.testing.assert_allclose(out.weights, np.array([0.6, 0.3995]) / 0.9995)

    def test_keeps_heaviest_when_all_below(self):
        b = mixture([0.3, 0.4, 0.3], [[0], [1], [2]], [[[1]]] * 3)
        out = prune(b, 0.5)
        assert len(out) == 1 and out.components[0] is b.components[1]

    def test_threshold_zero_is_identity(self):
        b = mixture([0.5, 0.5], [[0], [1]], [[[1]]] * 2)
        assert prune(b, 0.0) is b

    def test_bad_threshold(self):
        with pytest.raises(ContractViolation):
            prune(GmmBelief.gaussian([0], [[1]]), 1.0)


class TestKl:
    def test_uniform_is_zero(self):
        assert kl_to_uniform([1 / 3] * 3) == 0.0

    def test_one_hot_is_log_n(self):
        assert kl_to_uniform([0, 1, 0, 0]) == pytest.approx(np.log(4))

    def test_requires_normalized(self):
        with pytest.raises(ContractViolation):
            kl_to_uniform([0.5, 0.2])

    def test_weight_distribution_input(self):
        w = WeightDistribution((("a", 2.0), ("b", 2.0))).normalize()
        assert w.normalized and kl_to_uniform(w) == 0.0
        assert w.as_dict() == {"a": 0.5, "b": 0.5}

    def test_weight_distribution_validation(self):
        with pytest.raises(ContractViolation):
            WeightDistribution((("a", -1.0),))
        with pytest.raises(NumericalError):
            WeightDistribution((("a", 0.0),)).normalize()


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=12).filter(lambda v: sum(v) > 1e-6))
def test_kl_bounds(values):
    w = np.array(values) / sum(values)
    kl = kl_to_uniform(w)
    assert 0.0 <= kl <= np.log(len(w)) + 1e-12


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0.01, 1.0), min_size=1, max_size=6),
    st.floats(0.0, 0.3),
    st.integers(0, 2**31),
)
def test_prune_and_collapse_properties(raw_w, threshold, seed):
    rng = np.random.default_rng(seed)
    n = len(raw_w)
    b = mixture(raw_w, rng.normal(0, 3, (n, 2)), [spd(rng, 2) for _ in range(n)])
    out = prune(b, threshold)
    assert 1 <= len(out) <= n
    assert out.weights.sum() == pytest.approx(1.0, abs=1e-12)
    kept = set(map(id, out.components))
    for w, c in zip(b.weights, b.components):
        if id(c) not in kept:
            assert w < threshold
    c = collapse(b)
    np.testing.assert_allclose(c.mean, b.weights @ b.means, atol=1e-12)
    # the collapsed covariance dominates the average within-component spread
    inner = np.einsum("r,rij->ij", b.weights, b.covs)
    assert np.linalg.eigvalsh(c.cov - inner)[0] > -1e-9
