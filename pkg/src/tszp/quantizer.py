"""Uniform error-bounded quantization: the only lossy stage.

Bin ``q`` covers ``[2(q-1)eps, 2q eps)`` and reconstructs to its centre
``q * 2eps - eps``, so every sample comes back within ``eps``.  Both
functions accept scalars or arrays; arithmetic is binary64.
"""

from __future__ import annotations

import numpy as np

from .errors import QuantizationOverflowError, ValidationError

INDEX_MAX = 2**31 - 1


def _check_eps(eps) -> float:
    eps = float(eps)
    if not (eps > 0 and np.isfinite(eps)):
        raise ValidationError(f"error bound must be positive and finite, got {eps}")
    return eps


def quantize(a, eps):
    """Bin index of ``a``: ``floor(a / 2eps) + 1``.

    A near-tie where binary64 rounding of the quotient lands the sample on
    the wrong side of a bin edge is moved to the adjacent bin, so the
    reconstruction error never exceeds ``eps`` as evaluated in binary64.
    """
    eps = _check_eps(eps)
    scalar = np.ndim(a) == 0
    a = np.asarray(a, dtype=np.float64)
    q = np.floor(a / (2.0 * eps)) + 1.0
    err = a - (q * (2.0 * eps) - eps)
    q += (err > eps).astype(np.float64)
    q -= (err < -eps).astype(np.float64)
    if q.size and (q.max() > INDEX_MAX or q.min() < -INDEX_MAX):
        raise QuantizationOverflowError(
            f"bin index out of signed 32-bit range (eps={eps:g} too small for the data range)"
        )
    q = q.astype(np.int64)
    return int(q) if scalar else q


def bin_half_width(eps, amax) -> float:
    """Half-width to quantize with so the reconstruction honours ``eps`` in binary64.

    Bin centres are rounded to binary64, so a sample on a bin edge can end up
    a few ulps further than ``eps`` from both neighbouring centres.  Shrinking
    the half-width by a relative margin proportional to ``amax / eps`` absorbs
    those rounding errors for every sample with ``|a| <= amax``.
    """
    eps = _check_eps(eps)
    margin = 2.0**-49 * (1.0 + float(amax) / eps)
    if not margin < 2.0**-16:
        # the data range needs far more bins than a signed 32-bit index holds
        raise QuantizationOverflowError(f"eps={eps:g} is too small for values up to {float(amax):g}")
    return eps * (1.0 - margin)


def dequantize(q, eps):
    """Bin centre ``q * 2eps - eps`` in binary64."""
    eps = _check_eps(eps)
    out = np.asarray(q, dtype=np.float64) * (2.0 * eps) - eps
    return float(out) if np.ndim(q) == 0 else out
