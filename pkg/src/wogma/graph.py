"""Skeleton graph construction and multi-scale spatio-temporal adjacency.

A spatial joint graph is disentangled into one 0/1 matrix per exact graph
distance, each scale is tiled across the frames of a clip window, and the
tiled matrices are symmetrically degree-normalised. The normalised matrices
are what the graph convolution consumes.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources as importlib_resources
from pathlib import Path

import numpy as np

from .errors import DataFormatError

JOINT_COUNT = 18
NECK = 1          # 0-indexed positions of the normalisation anchors
R_HIP = 8
L_HIP = 11

JOINT_NAMES = [
    "nose", "neck", "r_shoulder", "r_elbow", "r_wrist",
    "l_shoulder", "l_elbow", "l_wrist", "r_hip", "r_knee", "r_ankle",
    "l_hip", "l_knee", "l_ankle", "r_eye", "l_eye", "r_ear", "l_ear",
]


@dataclass(frozen=True)
class SkeletonGraph:
    """Undirected joint graph with a symmetric zero-diagonal 0/1 adjacency."""

    joint_count: int
    edges: tuple[tuple[int, int], ...]   # 1-indexed pairs as given
    adjacency: np.ndarray                # (N, N) float64


def build_spatial_graph(edge_list, joint_count: int) -> SkeletonGraph:
    """Build the spatial graph from 1-indexed undirected edges."""
    adj = np.zeros((joint_count, joint_count))
    edges = []
    for i, j in edge_list:
        if not (1 <= i <= joint_count and 1 <= j <= joint_count):
            raise DataFormatError(f"edge ({i}, {j}) outside joint range 1..{joint_count}")
        if i == j:
            raise DataFormatError(f"self-loop ({i}, {j}) not allowed in the edge list")
        adj[i - 1, j - 1] = 1.0
        adj[j - 1, i - 1] = 1.0
        edges.append((i, j))
    return SkeletonGraph(joint_count=joint_count, edges=tuple(edges), adjacency=adj)


def load_edge_file(path) -> tuple[list[tuple[int, int]], int]:
    """Parse an `i j` per line edge file; joint count = max index seen."""
    edges: list[tuple[int, int]] = []
    top = 0
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DataFormatError(f"{path}:{lineno}: expected two joint indices, got {raw!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise DataFormatError(f"{path}:{lineno}: non-integer joint index in {raw!r}") from exc
        edges.append((i, j))
        top = max(top, i, j)
    if not edges:
        raise DataFormatError(f"{path}: no edges found")
    return edges, top


def default_skeleton() -> SkeletonGraph:
    """The shipped 18-joint pose skeleton."""
    with importlib_resources.as_file(
        importlib_resources.files("wogma").joinpath("resources/skeleton_edges.txt")
    ) as path:
        edges, count = load_edge_file(path)
    return build_spatial_graph(edges, max(count, JOINT_COUNT))


def disentangle_multiscale(adjacency: np.ndarray, scales: int) -> list[np.ndarray]:
    """0/1 matrices A_0..A_M with A_m[i, j] = 1 iff graph distance(i, j) == m.

    A_0 is the identity; scales are pairwise disjoint by construction because
    each node pair has exactly one shortest-path distance.
    """
    n = adjacency.shape[0]
    reach = np.eye(n, dtype=bool)                      # nodes within distance m-1
    dist_known = np.eye(n, dtype=bool)
    mats = [np.eye(n)]
    adj_bool = adjacency > 0
    for _ in range(scales):
        reach = (reach.astype(np.int64) @ adj_bool.astype(np.int64) > 0) | reach
        fresh = reach & ~dist_known
        mats.append(fresh.astype(np.float64))
        dist_known |= fresh
    return mats


def tile_window(scale_adjacency: np.ndarray, tau: int) -> np.ndarray:
    """Tile a spatial scale matrix into a (tau*N, tau*N) block matrix.

    Every (p, q) frame block equals scale_adjacency + I clipped to {0, 1}, so
    each joint connects to itself and its scale-m neighbours in every frame
    of the window. Self-connections keep all degrees positive.
    """
    n = scale_adjacency.shape[0]
    block = np.minimum(scale_adjacency + np.eye(n), 1.0)
    return np.kron(np.ones((tau, tau)), block)


def normalize(matrix: np.ndarray) -> np.ndarray:
    """Symmetric degree normalisation D^-1/2 A D^-1/2; zero rows stay zero."""
    degree = matrix.sum(axis=1)
    inv_sqrt = np.where(degree > 0, 1.0 / np.sqrt(np.where(degree > 0, degree, 1.0)), 0.0)
    return matrix * inv_sqrt[:, None] * inv_sqrt[None, :]


@dataclass(frozen=True)
class MultiScaleAdjacency:
    """Normalised adjacency per scale, in tiled and spatial form.

    `tiled[m]` is the (tau*N, tau*N) normalised block matrix the convolution
    contract is written against. `spatial[m]` is the N x N normalised form of
    scale m with self-connections; because every frame block of the tiled
    matrix is identical, applying tiled[m] to a window equals applying
    spatial[m] / tau to the window's frame-sum (used as a fast path).
    """

    scales: int
    tau: int
    tiled: tuple[np.ndarray, ...]
    spatial: tuple[np.ndarray, ...]


def build_multiscale(graph: SkeletonGraph, scales: int, tau: int) -> MultiScaleAdjacency:
    mats = disentangle_multiscale(graph.adjacency, scales)
    tiled = tuple(normalize(tile_window(m, tau)) for m in mats)
    spatial = tuple(normalize(np.minimum(m + np.eye(graph.joint_count), 1.0)) for m in mats)
    return MultiScaleAdjacency(scales=scales, tau=tau, tiled=tiled, spatial=spatial)
