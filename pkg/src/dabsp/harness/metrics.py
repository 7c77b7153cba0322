"""Scoring a posterior against ground truth."""

from __future__ import annotations

import numpy as np
from scipy.stats import chi2

from ..gmm import ContractViolation, GmmBelief, collapse
from ..world import GroundTruth

CONSISTENCY_LEVEL = 0.9999


def consistent_components(posterior: GmmBelief, gt: GroundTruth) -> np.ndarray:
    """Boolean mask of components that explain the ground truth.

    A component qualifies when the truth lies inside its 0.9999 Mahalanobis
    ellipsoid and, if the true scene at the last step is known, its most
    recent association names that scene.
    """
    if gt.pose.shape != (posterior.dim,):
        raise ContractViolation("ground-truth pose has the wrong dimension")
    limit = chi2.ppf(CONSISTENCY_LEVEL, posterior.dim)
    mask = np.array([c.mahalanobis2(gt.pose) <= limit for c in posterior.components])
    if gt.true_scene is not None:
        mask &= np.array([bool(lin) and lin[-1][1] == gt.true_scene for lin in posterior.lineages])
    return mask


def eta_da(posterior: GmmBelief, gt: GroundTruth) -> float:
    """Posterior weight on the correct hypothesis; 0 once it has been pruned."""
    return float(posterior.weights[consistent_components(posterior, gt)].sum())


def epsilon(posterior: GmmBelief, gt: GroundTruth, mode: str = "DA") -> float:
    """Estimation error.

    ``"DA"``: weight-averaged distance from the truth to each component mean.
    ``"BSP"``: distance from the truth to the posterior mean, used for the
    single-hypothesis baseline.
    """
    if mode == "DA":
        d = np.linalg.norm(posterior.means - gt.pose, axis=1)
        return float(posterior.weights @ d)
    if mode == "BSP":
        return float(np.linalg.norm(collapse(posterior).mean - gt.pose))
    raise ValueError(f"unknown epsilon mode {mode!r}")
