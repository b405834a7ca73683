"""Independent reference computations.

Everything here avoids the fast paths of the main library: min-cut uses a
generic max-flow routine, distances are brute force over all segments, the
reach is found by inflating tangent balls, and the linearized rate is
checked against a spectral front-tracking integrator.
"""
from __future__ import annotations

import math

import networkx as nx
import numpy as np
from networkx.algorithms.flow import edmonds_karp
from scipy.spatial import cKDTree

from .contour import as_contours, stack_vertices
from .exceptions import GraphTooLargeError
from .grid import GridSpec
from .polyline import segment_distance

MAX_CUT_CELLS = 128 * 128


# ---------------------------------------------------------------------------
# anisotropic set energy: exact minimizers


def _neighbor_pairs(shape):
    ny, nx_ = shape
    idx = np.arange(ny * nx_).reshape(shape)
    horiz = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    vert = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    return np.vstack([horiz, vert])


def anisotropic_energy(U, f, dx) -> float:
    """``sum_{neighbors} dx |U_i - U_j| + sum f U dx^2`` (Neumann boundary)."""
    U = np.asarray(U, dtype=float)
    f = np.asarray(f, dtype=float)
    per = np.abs(np.diff(U, axis=0)).sum() + np.abs(np.diff(U, axis=1)).sum()
    return float(per * dx + (U * f).sum() * dx * dx)


def build_cut_graph(f, dx) -> nx.DiGraph:
    """s-t graph whose minimum cut is the anisotropic energy minus a constant.

    A cell on the source side belongs to the set. Positive ``f`` becomes an
    edge to the sink (paid when the cell is in), negative ``f`` an edge from
    the source (paid when it is out), and each neighbor pair gets capacity
    ``dx`` both ways.
    """
    f = np.asarray(f, dtype=float)
    G = nx.DiGraph()
    flat = f.ravel()
    w = flat * dx * dx
    G.add_nodes_from(range(flat.size))
    G.add_nodes_from(["s", "t"])
    for i in np.flatnonzero(w > 0):
        G.add_edge(int(i), "t", capacity=float(w[i]))
    for i in np.flatnonzero(w < 0):
        G.add_edge("s", int(i), capacity=float(-w[i]))
    for a, b in _neighbor_pairs(f.shape):
        G.add_edge(int(a), int(b), capacity=float(dx))
        G.add_edge(int(b), int(a), capacity=float(dx))
    return G


def mincut_solve(f, grid: GridSpec):
    """Exact minimizer of the anisotropic set energy by augmenting-path max-flow.

    Returns ``(U, energy)`` with ``U`` a binary array on the grid.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise ValueError("f does not match the grid")
    return mincut_minimum(f, grid.dx)


def mincut_minimum(f, dx):
    """:func:`mincut_solve` on a bare array (also below the 8-cell grid minimum)."""
    f = np.asarray(f, dtype=float)
    if f.size > MAX_CUT_CELLS:
        raise GraphTooLargeError(f"min-cut oracle limited to {MAX_CUT_CELLS} cells, got {f.size}")
    G = build_cut_graph(f, dx)
    _, (source_side, _) = nx.minimum_cut(G, "s", "t", flow_func=edmonds_karp)
    U = np.zeros(f.size)
    members = [k for k in source_side if k != "s"]
    U[members] = 1.0
    U = U.reshape(f.shape)
    return U, anisotropic_energy(U, f, dx)


def exhaustive_minimum(f, dx):
    """Minimum of the anisotropic energy over all 2^n subsets (n <= 20).

    Returns ``(U, energy, energies)`` where ``energies`` lists every subset's
    energy in bit order (bit k of the subset index = cell k, row-major).
    """
    f = np.asarray(f, dtype=float)
    n = f.size
    if n > 20:
        raise GraphTooLargeError("exhaustive enumeration limited to 20 cells")
    codes = np.arange(2**n, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(n)) & 1).astype(float)
    pairs = _neighbor_pairs(f.shape)
    per = np.abs(bits[:, pairs[:, 0]] - bits[:, pairs[:, 1]]).sum(axis=1)
    energies = per * dx + bits @ f.ravel() * dx * dx
    k = int(np.argmin(energies))
    return bits[k].reshape(f.shape), float(energies[k]), energies


# ---------------------------------------------------------------------------
# geometry oracles


def rolling_ball(contours, slack: float | None = None, iters: int = 40) -> float:
    """Largest radius of tangent balls on both sides that contain no vertex.

    For each vertex x the open balls ``B_r(x + r nu)`` and ``B_r(x - r nu)``
    must miss every contour vertex by ``slack`` (default: 1e-3 of the mean
    edge length). The feasible set of r is an interval from 0, found by
    bisection on a log scale.

    Near a curvature maximum a ball only slightly too large dips below the
    curve by a depth quadratic in the curvature excess, so the overshoot in
    1/r grows like sqrt(slack); keep the slack far below the edge length.
    """
    pts, nrm, _, ds = stack_vertices(as_contours(contours))
    if slack is None:
        slack = 1e-3 * float(np.mean(ds))
    tree = cKDTree(pts)

    def feasible(r):
        centers = np.vstack([pts + r * nrm, pts - r * nrm])
        dist, _ = tree.query(centers, k=1)
        return bool(np.all(dist >= r - slack))

    lo = float(np.min(ds)) * 1e-3
    span = np.ptp(pts, axis=0)
    hi = float(np.hypot(*span))
    if feasible(hi):
        return hi
    if not feasible(lo):
        return 0.0
    for _ in range(iters):
        mid = math.sqrt(lo * hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def brute_pair_distance(points, contours) -> np.ndarray:
    """Unsigned distance from each point to the closest segment, scanning all."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    loops = [c.vertices if hasattr(c, "vertices") else np.asarray(c, dtype=float)
             for c in (contours if isinstance(contours, (list, tuple)) else [contours])]
    a = np.vstack(loops)
    b = np.vstack([np.roll(v, -1, axis=0) for v in loops])
    out = np.empty(len(points))
    chunk = max(1, (1 << 22) // len(a))
    for lo in range(0, len(points), chunk):
        p = points[lo:lo + chunk, None, :]
        dist, _ = segment_distance(p, a[None], b[None])
        out[lo:lo + chunk] = dist.min(axis=1)
    return out


# ---------------------------------------------------------------------------
# linearized volume-preserving curvature flow around the unit disk


def linearized_rate(k: int) -> float:
    """Decay rate of mode ``k`` of ``r = 1 + eps cos(k theta)`` about the unit disk.

    Curvature of the perturbed circle is ``1 + eps (k^2 - 1) cos(k theta)``
    to first order; the average curvature has no first-order part, so the
    normal velocity ``-(kappa - mean kappa)`` gives ``eps' = -(k^2 - 1) eps``.
    """
    if k < 2:
        raise ValueError("modes 0 and 1 change volume or translate; no decay rate")
    return float(k * k - 1)


def _polar_curvature(r, dtheta):
    m = len(r)
    freq = np.fft.fftfreq(m, d=dtheta / (2 * np.pi))
    rh = np.fft.fft(r)
    r1 = np.real(np.fft.ifft(1j * freq * rh))
    r2 = np.real(np.fft.ifft(-(freq**2) * rh))
    speed = np.sqrt(r * r + r1 * r1)
    kappa = (r * r + 2 * r1 * r1 - r * r2) / speed**3
    return kappa, speed


def front_tracking_rate(k: int, n_angles: int = 256, eps0: float = 1e-4, t_end: float = 0.2,
                        dt: float | None = None) -> float:
    """Fitted decay rate of mode ``k`` from a spectral polar-graph integrator.

    Evolves ``r_t = -(kappa - mean kappa) speed / r`` (normal velocity of a
    polar graph) with classical RK4 and fits the log of the mode amplitude.
    """
    theta = 2 * np.pi * np.arange(n_angles) / n_angles
    dtheta = 2 * np.pi / n_angles
    r = 1.0 + eps0 * np.cos(k * theta)
    if dt is None:
        dt = 0.5 / (n_angles / 2) ** 2
    steps = int(math.ceil(t_end / dt))
    dt = t_end / steps

    def rhs(r):
        kappa, speed = _polar_curvature(r, dtheta)
        mean = np.sum(kappa * speed) / np.sum(speed)
        return -(kappa - mean) * speed / r

    times, amps = [], []
    for s in range(steps + 1):
        if s % max(1, steps // 40) == 0:
            times.append(s * dt)
            amps.append(2 * abs(np.fft.rfft(r)[k]) / n_angles)
        if s == steps:
            break
        k1 = rhs(r)
        k2 = rhs(r + 0.5 * dt * k1)
        k3 = rhs(r + 0.5 * dt * k2)
        k4 = rhs(r + dt * k3)
        r = r + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    slope = np.polyfit(times, np.log(amps), 1)[0]
    return float(-slope)
