"""Mean-shift clustering of unit-norm embeddings on the hypersphere.

Each seed point is shifted toward the local mean direction under a
von Mises-Fisher kernel until it stops moving; converged seeds that agree in
direction are merged into modes, and every foreground pixel is assigned to
its angularly nearest mode. No cluster count is ever supplied: the number of
recovered modes is purely a property of the data and the kernel width.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import BinaryMask, EmbeddingField, Grid2D, validate_pair
from .errors import DegenerateShift, EmptyForeground

# Seeds are iterated in fixed-size blocks so that the parallel and the
# sequential paths perform identical floating-point operations.
_SEED_BLOCK = 64


@dataclass(frozen=True)
class VmfConfig:
    """Spherical mean-shift settings.

    kappa is the kernel concentration (larger = narrower kernel). Seeds are
    every seed_stride-th foreground point; stride 1 iterates every point.
    merge_tolerance is transitive: converged seeds chain into one mode
    whenever each link of the chain is within the tolerance.
    """

    kappa: float = 10.0
    max_iters: int = 100
    shift_tolerance: float = 1e-4
    merge_tolerance: float = 0.1
    seed_stride: int = 1
    min_cluster_pixels: int = 16
    parallel_seeds: bool = False

    def __post_init__(self):
        if not math.isfinite(self.kappa) or self.kappa <= 0:
            raise ValueError(f"kappa must be finite and > 0, got {self.kappa}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not math.isfinite(self.shift_tolerance) or self.shift_tolerance <= 0:
            raise ValueError(f"shift_tolerance must be > 0, got {self.shift_tolerance}")
        if not math.isfinite(self.merge_tolerance) or self.merge_tolerance <= 0:
            raise ValueError(f"merge_tolerance must be > 0, got {self.merge_tolerance}")
        if self.seed_stride < 1:
            raise ValueError(f"seed_stride must be >= 1, got {self.seed_stride}")
        if self.min_cluster_pixels < 0:
            raise ValueError(f"min_cluster_pixels must be >= 0, got {self.min_cluster_pixels}")


@dataclass(frozen=True)
class FlatIndex:
    """Inverse of flatten_foreground: raveled pixel index per matrix row."""

    indices: np.ndarray
    height: int
    width: int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.indices, dtype=np.int64).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "indices", arr)


@dataclass(frozen=True)
class ModeSearch:
    """Modes recovered by mean-shift, sorted by descending seed-basin size."""

    modes: np.ndarray  # (M, D), unit rows
    basin_seeds: np.ndarray  # (M,) converged seeds merged into each mode
    dropped_seeds: int

    def __post_init__(self):
        m = np.ascontiguousarray(self.modes, dtype=np.float64).copy()
        m.setflags(write=False)
        b = np.ascontiguousarray(self.basin_seeds, dtype=np.int64).copy()
        b.setflags(write=False)
        object.__setattr__(self, "modes", m)
        object.__setattr__(self, "basin_seeds", b)


@dataclass(frozen=True)
class ClusterResult:
    """Cluster modes plus the per-pixel assignment grid (-1 = background)."""

    modes: np.ndarray  # (num_clusters, D)
    assignment: Grid2D
    num_clusters: int
    basin_pixels: np.ndarray  # (num_clusters,) pixels assigned to each mode

    def __post_init__(self):
        m = np.ascontiguousarray(self.modes, dtype=np.float64).copy()
        m.setflags(write=False)
        b = np.ascontiguousarray(self.basin_pixels, dtype=np.int64).copy()
        b.setflags(write=False)
        object.__setattr__(self, "modes", m)
        object.__setattr__(self, "basin_pixels", b)
        if m.shape[0] != self.num_clusters or b.shape[0] != self.num_clusters:
            raise ValueError("modes/basin_pixels length must equal num_clusters")
        if self.num_clusters:
            norms = np.sqrt(np.einsum("ij,ij->i", m, m))
            if np.abs(norms - 1.0).max() > 1e-9:
                raise ValueError("every mode must have unit norm within 1e-9")
        a = self.assignment.values
        if a.min(initial=-1) < -1 or a.max(initial=-1) > self.num_clusters - 1:
            raise ValueError("assignment indices must lie in {-1, 0..num_clusters-1}")


def flatten_foreground(emb: EmbeddingField, mask: BinaryMask):
    """Stack the embeddings of mask-1 pixels into an (n, D) matrix.

    Rows follow row-major pixel order; the returned FlatIndex maps each row
    back to its raveled pixel position.
    """
    validate_pair(emb, mask)
    if not emb.normalized:
        raise ValueError("flatten_foreground requires a normalized field")
    sel = mask.values.ravel().astype(bool)
    if not sel.any():
        raise EmptyForeground("mask selects no pixels")
    x = emb.values.reshape(-1, emb.dim)[sel]
    return x, FlatIndex(np.flatnonzero(sel), emb.height, emb.width)


def vmf_shift_step(x_points: np.ndarray, x: np.ndarray, kappa: float) -> np.ndarray:
    """One kernel-weighted mean-direction update of a single unit vector.

    Computes (sum_j x_j * exp(kappa * <x_j, x>)) renormalized to unit length.
    The largest dot product is subtracted inside the exponential, which
    rescales numerator and denominator identically and avoids overflow at
    large kappa. Raises DegenerateShift when the weighted sum has near-zero
    norm relative to the total weight (exactly antipodal mass cancels).
    """
    dots = x_points @ x
    w = np.exp(kappa * (dots - dots.max()))
    s = w @ x_points
    norm = float(np.sqrt(s @ s))
    if norm < 1e-12 * float(w.sum()):
        raise DegenerateShift("weighted mean direction has near-zero norm")
    return s / norm


def _iterate_block(x_points: np.ndarray, seeds: np.ndarray, cfg: VmfConfig):
    """Shift a block of seeds to convergence; returns (endpoints, dropped)."""
    pts = seeds.copy()
    n_seeds = pts.shape[0]
    dropped = np.zeros(n_seeds, dtype=bool)
    active = np.ones(n_seeds, dtype=bool)
    for _ in range(cfg.max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        cur = pts[idx]
        dots = cur @ x_points.T
        w = np.exp(cfg.kappa * (dots - dots.max(axis=1, keepdims=True)))
        s = w @ x_points
        norms = np.sqrt(np.einsum("ij,ij->i", s, s))
        bad = norms < 1e-12 * w.sum(axis=1)
        safe = np.where(bad, 1.0, norms)
        new = s / safe[:, None]
        cos = np.clip(np.einsum("ij,ij->i", new, cur), -1.0, 1.0)
        moved = np.arccos(cos)
        pts[idx[~bad]] = new[~bad]
        dropped[idx[bad]] = True
        active[idx] = ~(bad | (moved < cfg.shift_tolerance))
    return pts, dropped


def mean_shift_modes(x_points: np.ndarray, cfg: VmfConfig) -> ModeSearch:
    """Iterate strided seeds to their modes and merge coinciding directions.

    Seeds that raise DegenerateShift are dropped and counted. Surviving
    endpoints are merged by single linkage: endpoints within merge_tolerance
    angular distance share a mode, transitively. Each mode is the renormalized
    mean of its merged endpoints, and modes are sorted by descending basin
    seed count (ties: the earliest contributing seed first).
    """
    if x_points.ndim != 2 or x_points.shape[0] == 0:
        raise ValueError("point matrix must be non-empty (n, D)")
    seeds = x_points[:: cfg.seed_stride].copy()
    blocks = [seeds[i : i + _SEED_BLOCK] for i in range(0, seeds.shape[0], _SEED_BLOCK)]
    if cfg.parallel_seeds and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=min(4, len(blocks))) as pool:
            results = list(pool.map(lambda b: _iterate_block(x_points, b, cfg), blocks))
    else:
        results = [_iterate_block(x_points, b, cfg) for b in blocks]
    endpoints = np.concatenate([r[0] for r in results], axis=0)
    dropped = np.concatenate([r[1] for r in results], axis=0)

    alive = np.flatnonzero(~dropped)
    n_dropped = int(dropped.sum())
    if alive.size == 0:
        return ModeSearch(np.zeros((0, x_points.shape[1])), np.zeros(0, dtype=np.int64), n_dropped)

    pts = endpoints[alive]
    cos = np.clip(pts @ pts.T, -1.0, 1.0)
    adj = np.arccos(cos) <= cfg.merge_tolerance

    # connected components of the merge graph (single linkage)
    n_pts = pts.shape[0]
    comp = np.full(n_pts, -1, dtype=np.int64)
    n_comp = 0
    for root in range(n_pts):
        if comp[root] >= 0:
            continue
        stack = [root]
        comp[root] = n_comp
        while stack:
            node = stack.pop()
            for nb in np.flatnonzero(adj[node]):
                if comp[nb] < 0:
                    comp[nb] = n_comp
                    stack.append(nb)
        n_comp += 1

    modes = []
    counts = []
    first_seed = []
    for c in range(n_comp):
        members = np.flatnonzero(comp == c)
        mean = pts[members].mean(axis=0)
        norm = float(np.sqrt(mean @ mean))
        if norm < 1e-12:
            n_dropped += members.size
            continue
        modes.append(mean / norm)
        counts.append(members.size)
        first_seed.append(int(alive[members[0]]))
    if not modes:
        return ModeSearch(np.zeros((0, x_points.shape[1])), np.zeros(0, dtype=np.int64), n_dropped)
    order = sorted(range(len(modes)), key=lambda i: (-counts[i], first_seed[i]))
    modes_arr = np.stack([modes[i] for i in order])
    counts_arr = np.array([counts[i] for i in order], dtype=np.int64)
    return ModeSearch(modes_arr, counts_arr, n_dropped)


def assign_to_modes(
    x_points: np.ndarray, index: FlatIndex, modes: np.ndarray, cfg: VmfConfig
) -> ClusterResult:
    """Assign every point to its angularly nearest mode and dissolve runts.

    Clusters owning fewer than min_cluster_pixels pixels are dissolved and
    their pixels reassigned to the nearest surviving mode; ties go to the
    lowest mode index. With no survivor at all, every pixel is left
    unassigned (-1).
    """
    if modes.ndim != 2 or modes.shape[0] == 0:
        raise ValueError("modes must be non-empty (M, D)")
    n_modes = modes.shape[0]
    dots = x_points @ modes.T
    assign = np.argmax(dots, axis=1)
    counts = np.bincount(assign, minlength=n_modes)
    keep = counts >= cfg.min_cluster_pixels

    grid = np.full(index.height * index.width, -1, dtype=np.int64)
    if not keep.any():
        empty = np.zeros((0, modes.shape[1]))
        return ClusterResult(
            empty, Grid2D(grid.reshape(index.height, index.width)), 0, np.zeros(0, dtype=np.int64)
        )

    new_pos = np.cumsum(keep) - 1  # old mode index -> surviving index
    survivors = np.flatnonzero(keep)
    nearest_surv = np.argmax(dots[:, survivors], axis=1)
    final = np.where(keep[assign], new_pos[assign], nearest_surv)
    grid[index.indices] = final
    basin = np.bincount(final, minlength=survivors.size)
    return ClusterResult(
        modes[survivors],
        Grid2D(grid.reshape(index.height, index.width)),
        int(survivors.size),
        basin,
    )


def cluster_field(emb: EmbeddingField, mask: BinaryMask, cfg: VmfConfig) -> ClusterResult:
    """flatten_foreground, mean_shift_modes, and assign_to_modes end to end.

    Accepts raw embeddings and normalizes them over the mask first; fields
    that already carry unit vectors pass through unchanged.
    """
    if not emb.normalized:
        from .optimize import normalize_field

        emb = normalize_field(emb, mask)
    x_points, index = flatten_foreground(emb, mask)
    search = mean_shift_modes(x_points, cfg)
    if search.modes.shape[0] == 0:
        grid = np.full((index.height, index.width), -1, dtype=np.int64)
        return ClusterResult(
            np.zeros((0, emb.dim)), Grid2D(grid), 0, np.zeros(0, dtype=np.int64)
        )
    return assign_to_modes(x_points, index, search.modes, cfg)
