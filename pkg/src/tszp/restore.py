"""Topology restoration applied after the base (bin-centre) reconstruction.

Three stages run in order: extrema stencils, order restoration inside
(class, bin) groups, and RBF refinement of lost saddles.  Every stage
computes its proposals from an immutable snapshot and then applies them
one at a time in raster order behind a guard that reverts any update which
would give a point or one of its 4-neighbours a class the original field did
not have (FP/FT) or strip a correctly classified point of its class.

Offsets are counted in representable-value steps of the working dtype, so
strict inequalities hold at any magnitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import CorruptMetadataError
from .grid import ScalarField2D
from .topo_meta import RankLookup
from .topology import (
    MAXIMUM,
    MINIMUM,
    REGULAR,
    SADDLE,
    CriticalPointMap,
    classify_array,
    classify_array_point,
)

STAGE_EXTREMA = "extrema-stencil"
STAGE_ORDER = "order-restore"
STAGE_SADDLE = "rbf-saddle"
STAGES = (STAGE_EXTREMA, STAGE_ORDER, STAGE_SADDLE)

WOULD_CREATE_FP = "would-create-FP"
WOULD_CREATE_FT = "would-create-FT"
WOULD_CREATE_FN = "would-create-FN"
EXCEEDS_TOLERANCE = "exceeds-tolerance"
NEIGHBORS_COLLAPSED = "neighbors-collapsed"
NOT_RESTORED = "not-restored"

K_SIZES = (3, 5, 7)


@dataclass(frozen=True)
class RbfParams:
    sigma: float
    k_size: int
    eps_rbf: float

    def __post_init__(self):
        if not 0.5 <= self.sigma <= 1.0:
            raise ValueError(f"sigma must lie in [0.5, 1.0], got {self.sigma}")
        if self.k_size not in K_SIZES:
            raise ValueError(f"k_size must be one of {K_SIZES}, got {self.k_size}")
        if not self.eps_rbf > 0:
            raise ValueError("eps_rbf must be positive")

    @property
    def radius(self) -> int:
        return self.k_size // 2


@dataclass(frozen=True)
class CorrectionOutcome:
    position: Tuple[int, int]
    stage: str
    applied: bool
    reverted_reason: Optional[str] = None

    def __post_init__(self):
        if self.applied == (self.reverted_reason is not None):
            raise ValueError("reverted_reason must be set exactly when applied is False")


# -- representable-value stepping ---------------------------------------------


def step_ulps(values, steps) -> np.ndarray:
    """Move each value by ``steps`` representable values (negative = down)."""
    x = np.asarray(values)
    if x.dtype == np.float32:
        ityp, sign = np.int32, np.int32(-(2**31))
    else:
        x = x.astype(np.float64)
        ityp, sign = np.int64, np.int64(-(2**63))
    bits = np.atleast_1d(x).view(ityp)
    mag = bits & ~sign
    ordered = np.where(bits < 0, -mag, mag) + np.asarray(steps, dtype=ityp)
    back = np.where(ordered < 0, (-ordered) | sign, ordered).astype(ityp)
    out = back.view(x.dtype)
    return out.reshape(x.shape) if x.ndim else out[0]


def _next_value(v, toward, f32):
    if f32:
        return float(np.nextafter(np.float32(v), np.float32(toward)))
    return math.nextafter(float(v), toward)


# -- guard ----------------------------------------------------------------------


_AROUND = ((0, 0), (0, -1), (0, 1), (-1, 0), (1, 0))


def _window_rows(arr, x, y):
    """5x5 window centred on (x, y) as nested Python lists, None off-grid."""
    ny, nx = arr.shape
    rows = []
    for yy in range(y - 2, y + 3):
        if 0 <= yy < ny:
            lo, hi = max(x - 2, 0), min(x + 3, nx)
            vals = arr[yy, lo:hi].tolist()
            rows.append([None] * (lo - (x - 2)) + vals + [None] * ((x + 3) - hi))
        else:
            rows.append([None] * 5)
    return rows


def _local_class(w, cx, cy) -> int:
    """Same rule as ``classify_array_point`` evaluated inside a window."""
    p = w[cy][cx]
    t = w[cy - 1][cx] if cy > 0 else None
    d = w[cy + 1][cx] if cy < 4 else None
    l = w[cy][cx - 1] if cx > 0 else None
    r = w[cy][cx + 1] if cx < 4 else None
    avail = [v for v in (t, d, l, r) if v is not None]
    if not avail:
        return REGULAR
    if all(p < v for v in avail):
        return MINIMUM
    if all(p > v for v in avail):
        return MAXIMUM
    if len(avail) == 4:
        if (t > p and d > p and l < p and r < p) or (t < p and d < p and l > p and r > p):
            return SADDLE
    return REGULAR


def _guarded_set(arr, labels, x, y, value) -> Optional[str]:
    """Set ``arr[y, x] = value`` unless the guard objects; return the objection."""
    ny, nx = arr.shape
    w = _window_rows(arr, x, y)
    pts = [(dx, dy) for dx, dy in _AROUND if 0 <= x + dx < nx and 0 <= y + dy < ny]
    before = [_local_class(w, 2 + dx, 2 + dy) for dx, dy in pts]
    w[2][2] = float(value)
    reason = None
    for (dx, dy), was in zip(pts, before):
        now = _local_class(w, 2 + dx, 2 + dy)
        stored = labels[y + dy, x + dx]
        if now != REGULAR:
            if stored == REGULAR:
                reason = WOULD_CREATE_FP
                break
            if now != stored:
                reason = WOULD_CREATE_FT
                break
        elif was == stored != REGULAR:
            reason = WOULD_CREATE_FN
            break
    if reason is None:
        arr[y, x] = value
    return reason


def _neighbor_matrix(arr, pos):
    """(k, 4) neighbour values (top, bottom, left, right) with NaN where missing."""
    ny, nx = arr.shape
    ys, xs = np.divmod(pos, nx)
    out = np.full((pos.size, 4), np.nan, dtype=arr.dtype)
    for j, (dy, dx) in enumerate(((-1, 0), (1, 0), (0, -1), (0, 1))):
        yy, xx = ys + dy, xs + dx
        ok = (yy >= 0) & (yy < ny) & (xx >= 0) & (xx < nx)
        out[ok, j] = arr[yy[ok], xx[ok]]
    return out


def _lookup_index(lookup: RankLookup, pos: np.ndarray) -> np.ndarray:
    i = np.searchsorted(lookup.positions, pos)
    i = np.minimum(i, max(lookup.positions.size - 1, 0))
    if pos.size and (lookup.positions.size == 0 or np.any(lookup.positions[i] != pos)):
        raise CorruptMetadataError("no rank recorded for a labelled extremum")
    return i


def _apply_serial(arr, labels, pos, proposals, stage, reference, cap, outcomes, check):
    nx = arr.shape[1]
    for p, value, ref in zip(pos.tolist(), proposals, reference):
        y, x = divmod(p, nx)
        if not np.isfinite(value) or abs(float(value) - float(ref)) > cap:
            outcomes.append(CorrectionOutcome((x, y), stage, False, EXCEEDS_TOLERANCE))
            continue
        reason = check(x, y, value) if check else None
        if reason is None:
            reason = _guarded_set(arr, labels, x, y, value)
        outcomes.append(CorrectionOutcome((x, y), stage, reason is None, reason))


# -- stage 1: extrema stencils ---------------------------------------------------


def restore_extrema(
    base: ScalarField2D, cp_map: CriticalPointMap, lookup: RankLookup, eps: float
) -> Tuple[ScalarField2D, List[CorrectionOutcome]]:
    """Re-instate lost minima and maxima.

    A lost maximum with rank ``d`` becomes ``d`` steps above the largest of
    its neighbours; a lost minimum with rank ``d`` in a group of ``k`` becomes
    ``k + 1 - d`` steps below the smallest, so restored values ascend with
    rank for both classes.  Neighbour values are read from ``base``.
    """
    arr = np.array(base.values)
    labels = cp_map.labels
    cur = classify_array(arr)
    want = (labels == MINIMUM) | (labels == MAXIMUM)
    pos = np.flatnonzero((want & (cur != labels)).ravel())
    outcomes: List[CorrectionOutcome] = []
    if pos.size == 0:
        return base, outcomes

    li = _lookup_index(lookup, pos)
    rank = lookup.ranks[li]
    size = lookup.group_size[li]
    cls = labels.ravel()[pos]
    nb = _neighbor_matrix(arr, pos)
    is_max = cls == MAXIMUM
    anchor = np.where(is_max, np.nanmax(nb, axis=1), np.nanmin(nb, axis=1)).astype(arr.dtype)
    steps = np.where(is_max, rank, -(size + 1 - rank))
    proposals = step_ulps(anchor, steps)

    _apply_serial(arr, labels, pos, proposals, STAGE_EXTREMA, arr.ravel()[pos].copy(), eps, outcomes, None)
    return ScalarField2D(arr), outcomes


# -- stage 2: relative order inside (class, bin) groups ---------------------------


def restore_order(
    fld: ScalarField2D,
    cp_map: CriticalPointMap,
    lookup: RankLookup,
    eps: float,
) -> Tuple[ScalarField2D, List[CorrectionOutcome]]:
    """Make every (class, bin) group strictly ascending in rank.

    Maxima are only ever nudged upward and minima downward, each by the
    smallest number of steps that clears its rank neighbour; a nudge larger
    than the overcorrection tolerance ``0.1 * eps`` is suppressed.
    """
    outcomes: List[CorrectionOutcome] = []
    multi = lookup.group_size >= 2
    if not multi.any():
        return fld, outcomes
    arr = np.array(fld.values)
    flat = arr.reshape(-1)
    labels = cp_map.labels
    nx = arr.shape[1]
    eps_rbf = 0.1 * eps
    f32 = arr.dtype == np.float32

    idx = np.flatnonzero(multi)
    order = idx[np.lexsort((lookup.ranks[idx], lookup.group[idx]))]
    g = lookup.group[order]
    v = flat[lookup.positions[order]]
    same = g[1:] == g[:-1]
    bad_groups = set(g[1:][same & ~(v[1:] > v[:-1])].tolist())
    if not bad_groups:
        return fld, outcomes

    bounds = np.flatnonzero(np.concatenate([[True], ~same, [True]]))
    for s, e in zip(bounds[:-1], bounds[1:]):
        if g[s] not in bad_groups:
            continue
        members = lookup.positions[order[s:e]].tolist()
        ascending = lookup.classes[order[s]] == MAXIMUM
        walk = range(1, len(members)) if ascending else range(len(members) - 2, -1, -1)
        for i in walk:
            p = members[i]
            ref = flat[members[i - 1] if ascending else members[i + 1]]
            cur = float(flat[p])
            if ascending:
                target = max(cur, _next_value(ref, math.inf, f32))
            else:
                target = min(cur, _next_value(ref, -math.inf, f32))
            if target == cur:
                continue
            y, x = divmod(p, nx)
            if abs(float(target) - float(cur)) > eps_rbf:
                outcomes.append(CorrectionOutcome((x, y), STAGE_ORDER, False, EXCEEDS_TOLERANCE))
                continue
            reason = _guarded_set(arr, labels, x, y, target)
            outcomes.append(CorrectionOutcome((x, y), STAGE_ORDER, reason is None, reason))
    return ScalarField2D(arr), outcomes


# -- stage 3: RBF saddle refinement ----------------------------------------------


def _global_variation(arr) -> Tuple[float, float]:
    lo, hi = float(arr.min()), float(arr.max())
    g = hi - lo
    return g, (float(np.std(arr, dtype=np.float64)) / g if g > 0 else 0.0)


def _k_size(v_g: float) -> int:
    if v_g < 0.05:
        return 7
    if v_g < 0.2:
        return 5
    return 3


def _window(arr, ys, xs, radius, include_center):
    """Values (k, m) in the Chebyshev window, NaN outside the grid, with offsets."""
    ny, nx = arr.shape
    dy, dx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    dy, dx = dy.ravel(), dx.ravel()
    if not include_center:
        keep = (dy != 0) | (dx != 0)
        dy, dx = dy[keep], dx[keep]
    yy = ys[:, None] + dy[None, :]
    xx = xs[:, None] + dx[None, :]
    ok = (yy >= 0) & (yy < ny) & (xx >= 0) & (xx < nx)
    vals = np.where(ok, arr[np.clip(yy, 0, ny - 1), np.clip(xx, 0, nx - 1)], np.nan)
    return vals.astype(np.float64), dy, dx


def _adaptive_sigma(arr, ys, xs, radius, g):
    if g <= 0:
        return np.ones(ys.size)
    vals, _, _ = _window(arr, ys, xs, radius, include_center=True)
    v_l = (np.nanmax(vals, axis=1) - np.nanmin(vals, axis=1)) / g
    return 0.5 + 0.5 * (1.0 - np.clip(v_l, 0.0, 1.0))


def adaptive_params(base: ScalarField2D, p: Tuple[int, int], eps: float) -> RbfParams:
    """Kernel size from global variation, then width from local variation on that window."""
    x, y = p
    g, v_g = _global_variation(base.values)
    k = _k_size(v_g)
    sigma = _adaptive_sigma(base.values, np.array([y]), np.array([x]), k // 2, g)[0]
    return RbfParams(float(sigma), k, 0.1 * eps)


def _rbf_proposals(arr, ys, xs, sigma, radius):
    vals, dy, dx = _window(arr, ys, xs, radius, include_center=False)
    d2 = (dy * dy + dx * dx).astype(np.float64)
    w = np.exp(-d2[None, :] / (2.0 * np.asarray(sigma, dtype=np.float64)[:, None] ** 2))
    w = np.where(np.isnan(vals), 0.0, w)
    lo = np.nanmin(vals, axis=1)
    hi = np.nanmax(vals, axis=1)
    # offsets from the minimum keep equal neighbourhoods exact
    num = np.nansum(w * (vals - lo[:, None]), axis=1)
    out = lo + num / w.sum(axis=1)
    return np.clip(out, lo, hi)


def rbf_refine(base: ScalarField2D, p: Tuple[int, int], params: RbfParams) -> float:
    """Gaussian-weighted convex combination of the window around ``p`` (``p`` excluded)."""
    x, y = p
    if base.size < 2:
        raise ValueError("RBF refinement needs at least two grid points")
    return float(
        _rbf_proposals(base.values, np.array([y]), np.array([x]), np.array([params.sigma]), params.radius)[0]
    )


def _saddle_feasible(arr, x, y) -> bool:
    ny, nx = arr.shape
    if not (0 < x < nx - 1 and 0 < y < ny - 1):
        return False
    t, d, l, r = arr[y - 1, x], arr[y + 1, x], arr[y, x - 1], arr[y, x + 1]
    return min(t, d) > max(l, r) or min(l, r) > max(t, d)


def refine_saddles(
    fld: ScalarField2D, cp_map: CriticalPointMap, eps: float
) -> Tuple[ScalarField2D, List[CorrectionOutcome]]:
    """Try to recover each lost saddle with an RBF re-estimate.

    An update is kept only if it moves the point by at most ``eps`` (so the
    total error stays within ``2 eps``), makes the point a saddle, and passes
    the guard.  When the four neighbours leave no open interval that would
    separate the two pairs, no convex update can help and the saddle stays
    lost.
    """
    arr = np.array(fld.values)
    labels = cp_map.labels
    cur = classify_array(arr)
    pos = np.flatnonzero(((labels == SADDLE) & (cur != SADDLE)).ravel())
    outcomes: List[CorrectionOutcome] = []
    if pos.size == 0:
        return fld, outcomes
    nx = arr.shape[1]
    ys, xs = np.divmod(pos, nx)
    g, v_g = _global_variation(arr)
    radius = _k_size(v_g) // 2
    sigma = _adaptive_sigma(arr, ys, xs, radius, g)
    proposals = _rbf_proposals(arr, ys, xs, sigma, radius).astype(arr.dtype)

    def check(x, y, value):
        if not _saddle_feasible(arr, x, y):
            return NEIGHBORS_COLLAPSED
        old = arr[y, x]
        arr[y, x] = value
        now = classify_array_point(arr, x, y)
        arr[y, x] = old
        if now == SADDLE:
            return None
        return WOULD_CREATE_FT if now != REGULAR else NOT_RESTORED

    _apply_serial(arr, labels, pos, proposals, STAGE_SADDLE, arr.ravel()[pos].copy(), eps, outcomes, check)
    return ScalarField2D(arr), outcomes


def restore_topology(base: ScalarField2D, cp_map: CriticalPointMap, lookup: RankLookup, eps: float):
    """All three stages in order; returns the field and the combined outcome list."""
    fld, out1 = restore_extrema(base, cp_map, lookup, eps)
    fld, out2 = restore_order(fld, cp_map, lookup, eps)
    fld, out3 = refine_saddles(fld, cp_map, eps)
    return fld, out1 + out2 + out3


def outcome_stats(outcomes) -> dict:
    stats = {s: {"applied": 0, "suppressed": 0, "reasons": {}} for s in STAGES}
    for o in outcomes:
        st = stats[o.stage]
        if o.applied:
            st["applied"] += 1
        else:
            st["suppressed"] += 1
            st["reasons"][o.reverted_reason] = st["reasons"].get(o.reverted_reason, 0) + 1
    return stats
