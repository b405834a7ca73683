"""Exact point-to-polyline queries on closed loops.

Loops are ``(n, 2)`` vertex arrays, implicitly closed (last vertex joins the
first). A collection of loops is flattened into segment arrays once and then
queried many times.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .exceptions import DegenerateSegmentError, OpenContourError

_CHUNK = 1 << 22  # pair evaluations per chunk in brute-force paths


@dataclass(frozen=True, eq=False)
class SegmentSet:
    """Flattened segments of one or more closed loops."""

    a: np.ndarray          # (M, 2) segment starts
    b: np.ndarray          # (M, 2) segment ends
    loop: np.ndarray       # (M,) loop id of each segment
    start: np.ndarray      # (L + 1,) offsets of each loop in the flat arrays
    arclen: np.ndarray     # (M,) arc length at segment start, within its loop
    loop_length: np.ndarray  # (L,)

    @classmethod
    def from_loops(cls, loops) -> "SegmentSet":
        a_parts, b_parts, ids, arcs, lengths = [], [], [], [], []
        offsets = [0]
        for k, pts in enumerate(loops):
            pts = np.asarray(pts, dtype=float)
            if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
                raise OpenContourError("a closed loop needs at least 3 vertices")
            nxt = np.roll(pts, -1, axis=0)
            seg_len = np.hypot(*(nxt - pts).T)
            if np.any(seg_len == 0):
                raise DegenerateSegmentError(f"loop {k} has a zero-length segment")
            a_parts.append(pts)
            b_parts.append(nxt)
            ids.append(np.full(len(pts), k))
            arcs.append(np.concatenate([[0.0], np.cumsum(seg_len)[:-1]]))
            lengths.append(seg_len.sum())
            offsets.append(offsets[-1] + len(pts))
        if not a_parts:
            raise OpenContourError("no loops given")
        return cls(np.ascontiguousarray(np.vstack(a_parts)), np.ascontiguousarray(np.vstack(b_parts)), np.concatenate(ids),
                   np.asarray(offsets), np.concatenate(arcs), np.asarray(lengths))

    def __len__(self):
        return len(self.a)

    @property
    def max_length(self) -> float:
        return float(np.max(np.hypot(*(self.b - self.a).T)))

    def next_index(self, idx):
        """Index of the segment following ``idx`` in its loop."""
        idx = np.asarray(idx)
        lo = self.start[self.loop[idx]]
        hi = self.start[self.loop[idx] + 1]
        return np.where(idx + 1 < hi, idx + 1, lo)

    def prev_index(self, idx):
        idx = np.asarray(idx)
        lo = self.start[self.loop[idx]]
        hi = self.start[self.loop[idx] + 1]
        return np.where(idx > lo, idx - 1, hi - 1)


def segment_distance(p, a, b):
    """Distance from points ``p`` to segments ``[a, b]`` (broadcasting).

    Returns ``(dist, t)`` with ``t`` in [0, 1] the foot parameter.
    """
    ab = b - a
    ap = p - a
    t = np.clip(np.sum(ap * ab, axis=-1) / np.sum(ab * ab, axis=-1), 0.0, 1.0)
    foot = a + t[..., None] * ab
    return np.hypot(*np.moveaxis(p - foot, -1, 0)), t


def nearest_segment(points, segs: SegmentSet, bucket_size: float | None = None):
    """Exact nearest segment for every point.

    Segments are hashed into square buckets (default side: 12 median segment
    lengths, which keeps far-field ring scans short) and each query scans rings of buckets outward until no unscanned
    segment can be closer. Ties go to the lowest segment index, matching
    :func:`brute_nearest`.

    Returns ``(dist, seg_index, t)``.
    """
    points = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    if bucket_size is None:
        bucket_size = 12.0 * float(np.median(np.hypot(*(segs.b - segs.a).T)))
    lo = np.minimum(segs.a.min(axis=0), segs.b.min(axis=0))
    hi = np.maximum(segs.a.max(axis=0), segs.b.max(axis=0))
    nbx = int((hi[0] - lo[0]) / bucket_size) + 1
    nby = int((hi[1] - lo[1]) / bucket_size) + 1
    offsets, items = _kernels.build_buckets(segs.a, segs.b, lo[0], lo[1], bucket_size, nbx, nby)
    return _kernels.nearest_bucketed(points, segs.a, segs.b, offsets, items,
                                     lo[0], lo[1], bucket_size, nbx, nby)


def brute_nearest(points, segs: SegmentSet):
    """Nearest segment by scanning every segment (no acceleration)."""
    points = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    return _kernels.brute_nearest(points, segs.a, segs.b)


def crossing_parity(points, segs: SegmentSet) -> np.ndarray:
    """Even-odd point-in-polygon test against all loops (True = inside).

    A horizontal ray towards +x is cast from each point; a segment counts when
    ``min(ya, yb) <= y < max(ya, yb)``. Points sharing a y coordinate share
    one crossing list, so grid rows cost one pass over the segments.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    ys, inverse = np.unique(points[:, 1], return_inverse=True)
    inside = np.zeros(len(points), dtype=bool)
    ya, yb = segs.a[:, 1], segs.b[:, 1]
    xa, xb = segs.a[:, 0], segs.b[:, 0]
    lo_y, hi_y = np.minimum(ya, yb), np.maximum(ya, yb)
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(len(ys) + 1))
    rows = max(1, _CHUNK // max(len(segs), 1))
    for lo in range(0, len(ys), rows):
        y = ys[lo:lo + rows, None]
        hit = (lo_y <= y) & (y < hi_y)
        with np.errstate(invalid="ignore", divide="ignore"):
            xc = xa + (y - ya) * (xb - xa) / (yb - ya)
        xc = np.where(hit, xc, np.inf)
        xc.sort(axis=1)
        counts = hit.sum(axis=1)
        for r in range(len(y)):
            members = order[bounds[lo + r]:bounds[lo + r + 1]]
            if counts[r] == 0:
                continue
            crossings = xc[r, :counts[r]]
            n_right = counts[r] - np.searchsorted(crossings, points[members, 0], side="right")
            inside[members] = (n_right % 2) == 1
    return inside


def signed_area(pts) -> float:
    x, y = np.asarray(pts, dtype=float).T
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
