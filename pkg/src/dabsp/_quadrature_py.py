"""Pure-NumPy box-mass kernel (fallback for the compiled ``_quadrature``)."""

import numpy as np
from scipy.special import erfc

SQRT1_2 = 0.7071067811865476
INV_SQRT_2PI = 0.3989422804014327
# standardized half-width beyond which the outer integrand is below 1e-16
TAIL = 8.5
MAX_PANELS = 4096


def phi_interval(a, b):
    """P(a < N(0,1) < b), computed on the tail that keeps precision."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    upper = 0.5 * (erfc(a * SQRT1_2) - erfc(b * SQRT1_2))
    lower = 0.5 * (erfc(-b * SQRT1_2) - erfc(-a * SQRT1_2))
    middle = 1.0 - 0.5 * erfc(-a * SQRT1_2) - 0.5 * erfc(b * SQRT1_2)
    out = np.where(a >= 0.0, upper, np.where(b <= 0.0, lower, middle))
    return np.where(b > a, out, 0.0)


def panel_width(rho):
    r = abs(rho)
    if r < 1e-300:
        return 0.5
    return 0.5 * min(1.0, np.sqrt(max(1.0 - r * r, 0.0)) / r)


def box_mass_2d(mean, cov, lo, hi, nodes, weights):
    s0 = np.sqrt(cov[0, 0])
    s1 = np.sqrt(cov[1, 1])
    rho = cov[0, 1] / (s0 * s1)
    rho = min(max(rho, -1.0), 1.0)
    a0 = max((lo[0] - mean[0]) / s0, -TAIL)
    b0 = min((hi[0] - mean[0]) / s0, TAIL)
    if not b0 > a0:
        return 0.0
    if rho == 0.0:
        return float(phi_interval(a0, b0) * phi_interval((lo[1] - mean[1]) / s1, (hi[1] - mean[1]) / s1))

    sc = np.sqrt(max(1.0 - rho * rho, 1e-300))
    n_panels = int(min(MAX_PANELS, max(1, np.ceil((b0 - a0) / panel_width(rho)))))
    edges = np.linspace(a0, b0, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    t = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()

    lo1 = (lo[1] - mean[1]) / s1
    hi1 = (hi[1] - mean[1]) / s1
    inner = phi_interval((lo1 - rho * t) / sc, (hi1 - rho * t) / sc)
    return float(np.sum(w * INV_SQRT_2PI * np.exp(-0.5 * t * t) * inner))


def box_masses_2d(means, covs, lo, hi, nodes, weights):
    means = np.asarray(means, dtype=float)
    covs = np.asarray(covs, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = means.shape[0]
    out = np.empty(n)
    s0 = np.sqrt(covs[:, 0, 0])
    s1 = np.sqrt(covs[:, 1, 1])
    independent = covs[:, 0, 1] == 0.0
    if np.any(independent):
        idx = np.flatnonzero(independent)
        m, a, b = means[idx], lo[idx], hi[idx]
        out[idx] = phi_interval((a[:, 0] - m[:, 0]) / s0[idx], (b[:, 0] - m[:, 0]) / s0[idx]) * phi_interval(
            (a[:, 1] - m[:, 1]) / s1[idx], (b[:, 1] - m[:, 1]) / s1[idx]
        )
    for k in np.flatnonzero(~independent):
        out[k] = box_mass_2d(means[k], covs[k], lo[k], hi[k], nodes, weights)
    return out
