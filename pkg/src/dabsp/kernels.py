"""Gaussian box-mass kernel with backend selection.

The compiled ``_quadrature`` extension is used when it imports; otherwise
the NumPy implementation in ``_quadrature_py`` is used.  Setting the
environment variable ``DABSP_PURE_PYTHON=1`` forces the fallback.

For 2-D boxes the mass is integrated exactly (erf) along the second axis
and with composite 8-point Gauss-Legendre along the first, with panel
width tied to the correlation so the inner CDF transition is resolved.
1-D boxes use the erf closed form; higher dimensions defer to SciPy.
"""

import os

import numpy as np
from scipy.stats import multivariate_normal

from . import _quadrature_py

GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(8)

_compiled = None
if not os.environ.get("DABSP_PURE_PYTHON"):
    try:
        from . import _quadrature as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def _backend(name):
    if name is None:
        name = BACKEND
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernel is not available")
        return _compiled
    if name == "python":
        return _quadrature_py
    raise ValueError(f"unknown backend {name!r}")


def box_masses(means, covs, lo, hi, backend=None):
    """Probability mass of N(means[k], covs[k]) inside [lo[k], hi[k]).

    Bounds may be infinite.  Returns an array of shape (n,).
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    n, d = means.shape
    covs = np.asarray(covs, dtype=float).reshape(n, d, d)
    lo = np.asarray(lo, dtype=float).reshape(n, d)
    hi = np.asarray(hi, dtype=float).reshape(n, d)
    if n == 0:
        return np.zeros(0)
    if d == 1:
        s = np.sqrt(covs[:, 0, 0])
        return _quadrature_py.phi_interval((lo[:, 0] - means[:, 0]) / s, (hi[:, 0] - means[:, 0]) / s)
    if d == 2:
        return _backend(backend).box_masses_2d(means, covs, lo, hi, GL_NODES, GL_WEIGHTS)
    out = np.empty(n)
    for k in range(n):
        a = np.maximum(lo[k], means[k] - 12.0 * np.sqrt(np.diag(covs[k])))
        b = np.minimum(hi[k], means[k] + 12.0 * np.sqrt(np.diag(covs[k])))
        out[k] = 0.0 if np.any(b <= a) else multivariate_normal(means[k], covs[k]).cdf(b, lower_limit=a)
    return out


def box_mass(mean, cov, lo, hi, backend=None):
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    return float(box_masses(mean[None], np.asarray(cov)[None], np.asarray(lo)[None], np.asarray(hi)[None], backend)[0])
