"""Nodal patches: element aggregation around a star node and boundary sampling.

A patch collects the elements within a few topological layers of its star
node.  Layer 0 is the set of elements touching the node; each further layer
adds every element sharing a node with the current aggregate.  The stencil is
the node set of the aggregate with the star listed first, and rho is the
largest star-to-stencil distance (the scaling radius of the local fit).

Boundary patches are grown past the requested depth until the stencil reaches
an oversampled target, so fits near the boundary see roughly as much data as
interior ones.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import ceil

import numpy as np

from .basis import basis_dim
from .mesh import Mesh, Topology


class PatchBuildError(RuntimeError):
    pass


@dataclass(eq=False)
class Patch:
    star: int
    elements: np.ndarray          # sorted element ids
    stencil: np.ndarray           # node ids, star first
    rho: float
    is_boundary: bool
    layers_used: int
    target_size: int
    # boundary-condition sampling (filled by place_boundary_samples)
    sample_points: np.ndarray | None = None    # (n_i, 2)
    sample_normals: np.ndarray | None = None   # (n_i, 2)
    sample_edges: np.ndarray | None = None     # (n_i,) boundary-edge index
    over_cap: bool = False

    @property
    def n_samples(self) -> int:
        return 0 if self.sample_points is None else self.sample_points.shape[0]

    def center(self, mesh: Mesh) -> np.ndarray:
        return mesh.nodes[self.star]


def default_layer_depth(p: int) -> int:
    return p // 2 + 1


def compact_layer_depth(p: int) -> int:
    """Leaner alternative used in some of the smoothness studies."""
    return max(2, (p + 1) // 2)


def _grow_one_layer(current: set[int], topo: Topology, tris: np.ndarray) -> set[int]:
    nodes = set()
    for e in current:
        nodes.update(int(v) for v in tris[e])
    grown = set(current)
    for n in nodes:
        grown.update(int(e) for e in topo.node_to_elements[n])
    return grown


def build_patch(
    star: int,
    depth: int,
    mesh: Mesh,
    topo: Topology,
    p: int,
    oversample: float = 1.5,
) -> Patch:
    """Aggregate ``depth`` topological layers around ``star``.

    Boundary patches keep growing one layer at a time while the stencil is
    smaller than ceil(oversample * Q); any patch short of Q itself also grows.
    A patch that cannot reach Q even after consuming the whole mesh raises
    PatchBuildError (the mesh is too coarse for this degree).
    """
    if depth < 1:
        raise ValueError("layer depth must be >= 1")
    Q = basis_dim(p)
    tris = mesh.triangles
    is_boundary = star in topo.boundary_nodes
    target = max(Q, ceil(oversample * Q)) if is_boundary else Q

    current: set[int] = {int(e) for e in topo.node_to_elements[star]}
    layers = 1
    for _ in range(depth - 1):
        current = _grow_one_layer(current, topo, tris)
        layers += 1

    def stencil_of(elems: set[int]) -> np.ndarray:
        nodes = {int(v) for e in elems for v in tris[e]}
        nodes.discard(star)
        return np.concatenate([[star], np.array(sorted(nodes), dtype=np.int64)])

    stencil = stencil_of(current)
    while stencil.size < target:
        grown = _grow_one_layer(current, topo, tris)
        if grown == current:
            break
        current = grown
        layers += 1
        stencil = stencil_of(current)

    if stencil.size < Q:
        raise PatchBuildError(
            f"patch at node {star}: stencil has {stencil.size} nodes, "
            f"needs at least {Q} for degree {p}"
        )

    d = mesh.nodes[stencil] - mesh.nodes[star]
    rho = float(np.hypot(d[:, 0], d[:, 1]).max())
    return Patch(
        star=star,
        elements=np.array(sorted(current), dtype=np.int64),
        stencil=stencil,
        rho=rho,
        is_boundary=is_boundary,
        layers_used=layers,
        target_size=target,
    )


def build_all_patches(
    mesh: Mesh,
    topo: Topology,
    p: int,
    depth: int | None = None,
    oversample: float = 1.5,
) -> list[Patch]:
    if depth is None:
        depth = default_layer_depth(p)
    return [build_patch(i, depth, mesh, topo, p, oversample) for i in range(mesh.n_nodes)]


def support_boundary_edges(patch: Patch, topo: Topology) -> np.ndarray:
    """Boundary-edge indices lying inside the star node's hat support.

    The hat support is the union of elements touching the star node (layer 0),
    not the full patch; these are the edges where locally absorbed boundary
    data can influence the blended field through this patch.
    """
    supp = set(int(e) for e in topo.node_to_elements[patch.star])
    hits = [b for b in range(topo.n_boundary_edges) if int(topo.bedge_owner[b]) in supp]
    return np.array(hits, dtype=np.int64)


def place_boundary_samples(
    patch: Patch,
    mesh: Mesh,
    topo: Topology,
    gamma_edges: np.ndarray,
    p: int,
    per_edge: int = 1,
) -> Patch:
    """Attach constraint sample points on the constrained boundary.

    One midpoint per constrained boundary edge inside the hat support by
    default; per_edge=2 uses the two-point Gauss positions instead.  The
    total is capped so that (1 + n_i) <= Q: if the cap forces fewer than one
    sample per edge, one per edge is kept and the patch is flagged.
    """
    gamma = set(int(g) for g in gamma_edges)
    edges = [int(b) for b in support_boundary_edges(patch, topo) if int(b) in gamma]
    if not edges:
        return replace(patch, sample_points=None, sample_normals=None, sample_edges=None)

    Q = basis_dim(p)
    n_per = per_edge
    over_cap = False
    while n_per > 1 and 1 + n_per * len(edges) > Q:
        n_per -= 1
    if 1 + n_per * len(edges) > Q:
        over_cap = True  # kept at one per edge regardless; map build will reject

    if n_per == 1:
        ts = np.array([0.5])
    else:
        # Gauss-Legendre positions mapped to (0, 1); strictly inside the edge
        gl = np.polynomial.legendre.leggauss(n_per)[0]
        ts = 0.5 * (gl + 1.0)

    pts, nrm, eid = [], [], []
    for b in edges:
        a, c = topo.bedge_nodes[b]
        xa, xc = mesh.nodes[a], mesh.nodes[c]
        for t in ts:
            pts.append(xa + t * (xc - xa))
            nrm.append(topo.bedge_normals[b])
            eid.append(b)
    return replace(
        patch,
        sample_points=np.array(pts),
        sample_normals=np.array(nrm),
        sample_edges=np.array(eid, dtype=np.int64),
        over_cap=over_cap,
    )


def dump_patch(patch: Patch) -> str:
    lines = [
        f"star {patch.star}",
        f"boundary {int(patch.is_boundary)} layers {patch.layers_used} "
        f"target {patch.target_size} rho {patch.rho!r}",
        "elements " + " ".join(str(e) for e in patch.elements),
        "stencil " + " ".join(str(n) for n in patch.stencil),
    ]
    if patch.n_samples:
        lines.append(f"samples {patch.n_samples}")
        for k in range(patch.n_samples):
            x, y = patch.sample_points[k]
            nx, ny = patch.sample_normals[k]
            lines.append(f"  {x!r} {y!r} n=({nx!r},{ny!r}) edge {patch.sample_edges[k]}")
    return "\n".join(lines)
