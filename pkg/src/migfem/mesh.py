"""Triangular mesh container, structured mesh generation, and edge topology.

The mesh is deliberately minimal: node coordinates, CCW element connectivity,
and the bounding box of the intended domain.  Everything adjacency-related
(node-to-element tables, interior/boundary edge lists with normals) lives in
``Topology`` and is computed once per mesh by ``compute_topology``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonManifoldError(RuntimeError):
    """An edge is shared by more than two elements."""


def cross2(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """z-component of the cross product of stacked 2D vectors."""
    u = np.asarray(u)
    v = np.asarray(v)
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


@dataclass(eq=False)
class Mesh:
    nodes: np.ndarray          # (n_nodes, 2) float64
    triangles: np.ndarray      # (n_triangles, 3) int64, CCW on construction
    domain_box: tuple[float, float, float, float]  # (xmin, xmax, ymin, ymax)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def signed_areas(self) -> np.ndarray:
        a = self.nodes[self.triangles[:, 0]]
        b = self.nodes[self.triangles[:, 1]]
        c = self.nodes[self.triangles[:, 2]]
        return 0.5 * cross2(b - a, c - a)

    def min_signed_area(self) -> float:
        return float(self.signed_areas().min())

    def min_edge_length(self) -> float:
        tri = self.triangles
        lengths = []
        for k in range(3):
            d = self.nodes[tri[:, (k + 1) % 3]] - self.nodes[tri[:, k]]
            lengths.append(np.hypot(d[:, 0], d[:, 1]))
        return float(np.min(lengths))


def build_structured_tri_mesh(
    nx: int, ny: int, box: tuple[float, float, float, float]
) -> Mesh:
    """Uniform grid of (nx-1)*(ny-1) quads, each split along the
    lower-left to upper-right diagonal into two CCW triangles.

    Nodes are numbered row-major (iy * nx + ix); grid spacing along x is
    (xmax - xmin)/(nx - 1).
    """
    if nx < 2 or ny < 2:
        raise ValueError("need at least a 2x2 grid of nodes")
    xmin, xmax, ymin, ymax = box
    xs = np.linspace(xmin, xmax, nx)
    ys = np.linspace(ymin, ymax, ny)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    tris = np.empty(((nx - 1) * (ny - 1) * 2, 3), dtype=np.int64)
    t = 0
    for iy in range(ny - 1):
        for ix in range(nx - 1):
            a = iy * nx + ix
            b = a + 1
            c = a + nx + 1
            d = a + nx
            tris[t] = (a, b, c)       # lower-right triangle
            tris[t + 1] = (a, c, d)   # upper-left triangle
            t += 2
    return Mesh(nodes=nodes, triangles=tris, domain_box=tuple(box))


def perturb_interior_nodes(mesh: Mesh, delta_frac: float, seed: int) -> Mesh:
    """Displace interior nodes uniformly within a disk of radius delta_frac*h.

    h is the minimum edge length of the input mesh (the grid spacing for a
    structured square mesh).  Boundary nodes stay fixed.  The draw uses a
    counter-based generator so the result depends only on (mesh, delta, seed).
    Inverted elements are allowed; callers can inspect min_signed_area().
    """
    topo = compute_topology(mesh)
    h = mesh.min_edge_length()
    rng = np.random.Generator(np.random.Philox(key=seed))
    radius = delta_frac * h

    nodes = mesh.nodes.copy()
    interior = np.setdiff1d(np.arange(mesh.n_nodes), np.fromiter(topo.boundary_nodes, dtype=np.int64))
    # one (r, theta) draw per interior node, in node order
    u = rng.random((interior.size, 2))
    r = radius * np.sqrt(u[:, 0])
    theta = 2.0 * np.pi * u[:, 1]
    nodes[interior, 0] += r * np.cos(theta)
    nodes[interior, 1] += r * np.sin(theta)
    return Mesh(nodes=nodes, triangles=mesh.triangles.copy(), domain_box=mesh.domain_box)


@dataclass(eq=False)
class Topology:
    node_to_elements: list[np.ndarray]   # per node, sorted element indices
    # interior edges
    edge_nodes: np.ndarray    # (E, 2) int, oriented as traversed by the left element
    edge_left: np.ndarray     # (E,) element on the left of (a -> b)
    edge_right: np.ndarray    # (E,) element on the right
    edge_normals: np.ndarray  # (E, 2) unit normal pointing from left into right
    # boundary edges
    bedge_nodes: np.ndarray    # (B, 2) int, CCW within the owning element
    bedge_owner: np.ndarray    # (B,)
    bedge_normals: np.ndarray  # (B, 2) outward unit normal
    boundary_nodes: frozenset[int] = field(default_factory=frozenset)

    @property
    def n_internal_edges(self) -> int:
        return self.edge_nodes.shape[0]

    @property
    def n_boundary_edges(self) -> int:
        return self.bedge_nodes.shape[0]


def _edge_normal(nodes: np.ndarray, a: int, b: int) -> np.ndarray:
    d = nodes[b] - nodes[a]
    n = np.array([d[1], -d[0]])
    return n / np.hypot(n[0], n[1])


def compute_topology(mesh: Mesh) -> Topology:
    """Edge bookkeeping for a conforming triangulation.

    Each interior edge is stored once, oriented as its left element traverses
    it (CCW), so the stored normal points out of the left element and into the
    right one.  An edge incident to three or more elements raises
    NonManifoldError.
    """
    tris = mesh.triangles
    node_to_elements: list[list[int]] = [[] for _ in range(mesh.n_nodes)]
    for e, tri in enumerate(tris):
        for v in tri:
            node_to_elements[v].append(e)

    # key (min, max) -> list of (element, directed a, directed b)
    edge_map: dict[tuple[int, int], list[tuple[int, int, int]]] = {}
    for e, (i, j, k) in enumerate(tris):
        for a, b in ((i, j), (j, k), (k, i)):
            key = (min(a, b), max(a, b))
            edge_map.setdefault(key, []).append((e, int(a), int(b)))

    e_nodes, e_left, e_right, e_norm = [], [], [], []
    b_nodes, b_owner, b_norm = [], [], []
    for key in sorted(edge_map):
        owners = edge_map[key]
        if len(owners) > 2:
            raise NonManifoldError(
                f"edge {key} shared by {len(owners)} elements: {[o[0] for o in owners]}"
            )
        if len(owners) == 1:
            e, a, b = owners[0]
            b_nodes.append((a, b))
            b_owner.append(e)
            b_norm.append(_edge_normal(mesh.nodes, a, b))
        else:
            (e0, a0, b0), (e1, a1, b1) = owners
            # left element = the one traversing the edge as (a0, b0); the other
            # must traverse it reversed in a consistently oriented mesh
            e_nodes.append((a0, b0))
            e_left.append(e0)
            e_right.append(e1)
            e_norm.append(_edge_normal(mesh.nodes, a0, b0))

    boundary_nodes = frozenset(int(n) for ab in b_nodes for n in ab)
    return Topology(
        node_to_elements=[np.array(sorted(els), dtype=np.int64) for els in node_to_elements],
        edge_nodes=np.array(e_nodes, dtype=np.int64).reshape(-1, 2),
        edge_left=np.array(e_left, dtype=np.int64),
        edge_right=np.array(e_right, dtype=np.int64),
        edge_normals=np.array(e_norm, dtype=np.float64).reshape(-1, 2),
        bedge_nodes=np.array(b_nodes, dtype=np.int64).reshape(-1, 2),
        bedge_owner=np.array(b_owner, dtype=np.int64),
        bedge_normals=np.array(b_norm, dtype=np.float64).reshape(-1, 2),
        boundary_nodes=boundary_nodes,
    )


def save_mesh_text(mesh: Mesh, path: str) -> None:
    """Plain-text mesh: counts header, 'x y' node lines, 'i j k' element lines."""
    with open(path, "w") as f:
        f.write(f"{mesh.n_nodes} {mesh.n_triangles}\n")
        xmin, xmax, ymin, ymax = mesh.domain_box
        f.write(f"{xmin!r} {xmax!r} {ymin!r} {ymax!r}\n")
        for x, y in mesh.nodes:
            f.write(f"{float(x)!r} {float(y)!r}\n")
        for i, j, k in mesh.triangles:
            f.write(f"{i} {j} {k}\n")


def load_mesh_text(path: str) -> Mesh:
    with open(path) as f:
        n_nodes, n_tris = (int(t) for t in f.readline().split())
        box = tuple(float(t) for t in f.readline().split())
        nodes = np.array(
            [[float(t) for t in f.readline().split()] for _ in range(n_nodes)]
        )
        tris = np.array(
            [[int(t) for t in f.readline().split()] for _ in range(n_tris)],
            dtype=np.int64,
        )
    return Mesh(nodes=nodes, triangles=tris, domain_box=box)
