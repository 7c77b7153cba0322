"""Gaussian and Gaussian-mixture belief arithmetic.

All types are immutable: arrays are copied on construction and marked
read-only, and every operation returns a new value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

JITTER_FLOOR = 1e-9
WEIGHT_TOL = 1e-9

Lineage = tuple  # tuple of (component index j, scene id) pairs, oldest first


class ContractViolation(ValueError):
    """An operation was called with inputs outside its contract."""


class NumericalError(ArithmeticError):
    """A linear-algebra step failed even after jitter."""


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def psd_sqrt(cov):
    """Lower factor L with L @ L.T == cov; tolerates singular PSD input."""
    cov = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """One belief mode N(mean, cov).

    A covariance with an eigenvalue below ``JITTER_FLOOR`` is lifted by a
    diagonal shift; the shift applied is kept in ``jitter``.
    """

    mean: np.ndarray
    cov: np.ndarray
    jitter: float = 0.0

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        d = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (d, d):
            raise ContractViolation(f"mean {mean.shape} and cov {cov.shape} do not agree")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise NumericalError("non-finite mean or covariance")
        scale = max(np.max(np.abs(cov)), 1.0)
        if np.max(np.abs(cov - cov.T)) > 1e-9 * scale:
            raise ContractViolation("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        jitter = self.jitter
        lam = np.linalg.eigvalsh(cov)[0]
        if lam < JITTER_FLOOR:
            shift = JITTER_FLOOR - lam
            cov = cov + shift * np.eye(d)
            jitter += shift
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))
        object.__setattr__(self, "jitter", float(jitter))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def logpdf(self, x):
        x = np.atleast_2d(x)
        L = np.linalg.cholesky(self.cov)
        r = np.linalg.solve(L, (x - self.mean).T)
        return -0.5 * np.sum(r * r, axis=0) - np.sum(np.log(np.diag(L))) - 0.5 * self.dim * np.log(2 * np.pi)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def mahalanobis2(self, x):
        d = np.asarray(x, dtype=float) - self.mean
        return float(d @ np.linalg.solve(self.cov, d))


@dataclass(frozen=True, eq=False)
class GmmBelief:
    """Weighted Gaussian mixture with per-component lineage.

    ``lineages[r]`` lists the (prior component index, scene id) pairs of
    every association that produced component r.
    """

    weights: np.ndarray
    components: tuple
    lineages: tuple = None

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ContractViolation("a belief needs at least one component")
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != len(comps):
            raise ContractViolation("one weight per component is required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ContractViolation(f"weights must be non-negative and sum to 1 (sum={w.sum()!r})")
        d = comps[0].dim
        if any(c.dim != d for c in comps):
            raise ContractViolation("all components must share one dimension")
        lineages = self.lineages
        if lineages is None:
            lineages = tuple(() for _ in comps)
        lineages = tuple(tuple((int(j), i) for j, i in lin) for lin in lineages)
        if len(lineages) != len(comps):
            raise ContractViolation("one lineage per component is required")
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "lineages", lineages)

    @classmethod
    def from_unnormalized(cls, weights, components, lineages=None):
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if not total > 0 or not np.isfinite(total):
            raise NumericalError("mixture weights do not have a positive finite sum")
        return cls(w / total, components, lineages)

    @classmethod
    def gaussian(cls, mean, cov):
        return cls([1.0], (GaussianComponent(mean, cov),))

    def __len__(self):
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def means(self):
        return np.array([c.mean for c in self.components])

    @property
    def covs(self):
        return np.array([c.cov for c in self.components])

    def pdf(self, x):
        x = np.atleast_2d(x)
        return sum(w * c.pdf(x) for w, c in zip(self.weights, self.components))


@dataclass(frozen=True)
class WeightDistribution:
    """Per-scene association weights, optionally normalized."""

    entries: tuple  # ((scene id, weight), ...)
    normalized: bool = False

    def __post_init__(self):
        entries = tuple((sid, float(w)) for sid, w in self.entries)
        if any(w < 0 or not np.isfinite(w) for _, w in entries):
            raise ContractViolation("weights must be finite and non-negative")
        if self.normalized and abs(sum(w for _, w in entries) - 1.0) > WEIGHT_TOL:
            raise ContractViolation("normalized weights must sum to 1")
        object.__setattr__(self, "entries", entries)

    @property
    def ids(self):
        return [sid for sid, _ in self.entries]

    @property
    def values(self):
        return np.array([w for _, w in self.entries])

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def normalize(self) -> "WeightDistribution":
        total = self.total
        if not total > 0:
            raise NumericalError("cannot normalize an all-zero weight distribution")
        return WeightDistribution(tuple((sid, w / total) for sid, w in self.entries), normalized=True)

    def as_dict(self):
        return dict(self.entries)


def propagate(belief: GmmBelief, motion, action) -> GmmBelief:
    """Push every component through the linear motion model; weights are kept."""
    F = motion.F
    if F.shape[1] != belief.dim:
        raise ContractViolation(f"belief has dimension {belief.dim}, motion model expects {F.shape[1]}")
    shift = motion.step * np.asarray(action.control, dtype=float)
    if shift.shape != (F.shape[0],):
        raise ContractViolation(f"action {action.id!r} has the wrong control dimension")
    comps = tuple(GaussianComponent(F @ c.mean + shift, F @ c.cov @ F.T + motion.cov) for c in belief.components)
    return GmmBelief(belief.weights, comps, belief.lineages)


def kalman_gain(cov, H, R):
    """Innovation covariance, gain and Joseph-form posterior covariance."""
    S = H @ cov @ H.T + R
    S = 0.5 * (S + S.T)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        try:
            L = np.linalg.cholesky(S + JITTER_FLOOR * np.eye(S.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise NumericalError("innovation covariance is not positive definite") from exc
    K = np.linalg.solve(L.T, np.linalg.solve(L, H @ cov)).T
    A = np.eye(cov.shape[0]) - K @ H
    P = A @ cov @ A.T + K @ R @ K.T
    return S, L, K, 0.5 * (P + P.T)


def condition(component: GaussianComponent, obs, scene, obs_model) -> GaussianComponent:
    """Kalman (information-form equivalent) update of one component given scene."""
    z = np.atleast_1d(np.asarray(obs, dtype=float))
    H, R = obs_model.H, obs_model.cov
    if z.shape != (H.shape[0],):
        raise ContractViolation(f"observation has shape {z.shape}, model emits {H.shape[0]}")
    _, _, K, P = kalman_gain(component.cov, H, R)
    innovation = z - obs_model.predict(component.mean, scene)
    return GaussianComponent(component.mean + K @ innovation, P)


def collapse(belief: GmmBelief) -> GaussianComponent:
    """Moment-matched single Gaussian."""
    if len(belief) == 1:
        return belief.components[0]
    w = belief.weights
    means = belief.means
    mu = w @ means
    diff = means - mu
    cov = np.einsum("r,rij->ij", w, belief.covs) + np.einsum("r,ri,rj->ij", w, diff, diff)
    return GaussianComponent(mu, cov)


def prune(belief: GmmBelief, threshold: float) -> GmmBelief:
    """Drop components with weight below ``threshold`` and renormalize.

    If nothing survives, the single heaviest component is kept.
    """
    if not 0.0 <= threshold < 1.0:
        raise ContractViolation("prune threshold must lie in [0, 1)")
    keep = np.flatnonzero(belief.weights >= threshold)
    if keep.size == len(belief):
        return belief
    if keep.size == 0:
        keep = np.array([int(np.argmax(belief.weights))])
    return GmmBelief.from_unnormalized(
        belief.weights[keep],
        tuple(belief.components[k] for k in keep),
        tuple(belief.lineages[k] for k in keep),
    )


def kl_to_uniform(weights: WeightDistribution | Sequence[float]) -> float:
    """KL(w || uniform) in nats, with 0 log 0 = 0."""
    if isinstance(weights, WeightDistribution):
        w = weights.values
    else:
        w = np.asarray(weights, dtype=float)
    if w.size == 0:
        raise ContractViolation("need at least one weight")
    if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
        raise ContractViolation("kl_to_uniform expects normalized weights")
    nz = w[w > 0]
    return max(float(np.sum(nz * np.log(nz * w.size))), 0.0)
