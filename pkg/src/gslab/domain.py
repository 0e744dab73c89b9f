"""Grid domains, lumped volume measures, and the discrete Dirichlet form.

Nodes are interior lattice points of a box (optionally minus a masked
region) at spacing h = side/(n+1), ordered lexicographically by
coordinates.  The form is the standard (2d+1)-point stencil with edge
weight h^(d-2) and Dirichlet closure against the boundary; masses are
lumped, m_i = h^d, so operator eigenvalues approximate their continuum
counterparts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import EmptyDomainError


def _rect_distance(points, lo, hi):
    """Euclidean distance from each point to an axis-aligned closed box."""
    d = np.zeros(len(points))
    acc = np.zeros(len(points))
    for k in range(points.shape[1]):
        dk = np.maximum.reduce([lo[k] - points[:, k], np.zeros(len(points)), points[:, k] - hi[k]])
        acc += dk**2
    d = np.sqrt(acc)
    return d


class MaskRegion:
    """Closed region removed from the box; nodes inside (or on it) are dropped."""

    def __init__(self, lo, hi, name="box"):
        self.lo = np.asarray(lo, float)
        self.hi = np.asarray(hi, float)
        self.name = name

    def contains(self, points):
        inside = np.ones(len(points), dtype=bool)
        for k in range(points.shape[1]):
            inside &= (points[:, k] >= self.lo[k] - 1e-12) & (points[:, k] <= self.hi[k] + 1e-12)
        return inside

    def distance(self, points):
        return _rect_distance(points, self.lo, self.hi)


def make_mask(spec, extents):
    """Mask factory for the named shapes understood by scenario configs."""
    if spec is None:
        return None
    if isinstance(spec, MaskRegion):
        return spec
    shape = spec.get("shape")
    if shape == "box":
        return MaskRegion(spec["lo"], spec["hi"], name="box")
    if shape == "lshape":
        # remove the closed upper-right quadrant
        lo = [0.5 * (a + b) for a, b in extents]
        hi = [b for _, b in extents]
        return MaskRegion(lo, hi, name="lshape")
    raise ValueError(f"unknown mask shape {shape!r}")


@dataclass
class GridDomain:
    dim: int
    extents: tuple
    n: int
    h: float
    nodes: np.ndarray          # (N, dim) coordinates, lexicographic order
    rho: np.ndarray            # distance to the domain complement
    lattice: np.ndarray        # (N, dim) integer lattice indices, 1..n
    mask: MaskRegion | None = None

    @property
    def size(self):
        return len(self.nodes)

    def index_of(self, point, tol=1e-9):
        """Node index of the given coordinates (exact lattice match)."""
        hits = np.where(np.all(np.abs(self.nodes - np.asarray(point)) <= tol, axis=1))[0]
        if hits.size != 1:
            raise KeyError(f"no unique node at {point}")
        return int(hits[0])


def build_grid(dim, extents, n, mask=None):
    """Interior lattice grid of a box, minus an optional masked region.

    extents: sequence of (lo, hi) per dimension; all sides must share the
    spacing h = side/(n+1).  Raises EmptyDomainError when masking removes
    every interior node.
    """
    if dim not in (1, 2):
        raise ValueError("only dimensions 1 and 2 are supported")
    if n < 3:
        raise ValueError("need at least 3 nodes per side")
    extents = tuple((float(a), float(b)) for a, b in extents)
    if len(extents) != dim:
        raise ValueError("extents must list one (lo, hi) pair per dimension")
    sides = [b - a for a, b in extents]
    if any(s <= 0 for s in sides):
        raise ValueError("box sides must have positive length")
    h = sides[0] / (n + 1)
    if any(abs(s / (n + 1) - h) > 1e-12 * h for s in sides):
        raise ValueError("unequal grid spacing across dimensions is unsupported")

    axes = [extents[k][0] + h * np.arange(1, n + 1) for k in range(dim)]
    idx_axes = [np.arange(1, n + 1)] * dim
    if dim == 1:
        nodes = axes[0][:, None]
        lattice = idx_axes[0][:, None]
    else:
        # lexicographic by coordinates: x varies slowest
        xx, yy = np.meshgrid(axes[0], axes[1], indexing="ij")
        ii, jj = np.meshgrid(idx_axes[0], idx_axes[1], indexing="ij")
        nodes = np.column_stack([xx.ravel(), yy.ravel()])
        lattice = np.column_stack([ii.ravel(), jj.ravel()])

    mask = make_mask(mask, extents)
    if mask is not None:
        keep = ~mask.contains(nodes)
        nodes, lattice = nodes[keep], lattice[keep]
    if len(nodes) == 0:
        raise EmptyDomainError("mask removed every interior node")

    rho = np.full(len(nodes), np.inf)
    for k in range(dim):
        lo, hi = extents[k]
        rho = np.minimum(rho, nodes[:, k] - lo)
        rho = np.minimum(rho, hi - nodes[:, k])
    if mask is not None:
        rho = np.minimum(rho, mask.distance(nodes))
    return GridDomain(dim, extents, n, h, nodes, rho, lattice, mask)


@dataclass
class DiscreteMeasure:
    """Nonnegative node weights with finite total mass."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("measure weights must be finite and nonnegative")

    @property
    def total(self):
        return float(self.weights.sum())

    def __len__(self):
        return len(self.weights)


@dataclass
class FormOperator:
    """Symmetric stiffness + lumped mass: the discrete (E, F, H) triple.

    apply(f) returns H f in the m-weighted sense, (S f) / m.  Edge arrays
    (each undirected edge listed once, plus Dirichlet boundary edges per
    node) feed the energy-measure routines.
    """

    grid: GridDomain
    stiffness: sp.csr_matrix
    mass: np.ndarray
    edge_i: np.ndarray
    edge_j: np.ndarray
    edge_w: np.ndarray
    bnd_i: np.ndarray
    bnd_w: np.ndarray
    _sym: sp.csr_matrix | None = field(default=None, repr=False)

    @property
    def size(self):
        return len(self.mass)

    def apply(self, f):
        return (self.stiffness @ f) / self.mass

    def energy(self, f):
        return float(f @ (self.stiffness @ f))

    def bilinear(self, f, g):
        return float(f @ (self.stiffness @ g))

    def symmetrized(self):
        """D^{-1/2} S D^{-1/2} with D = diag(mass); shares the spectrum of H."""
        if self._sym is None:
            inv_sqrt = 1.0 / np.sqrt(self.mass)
            D = sp.diags(inv_sqrt)
            self._sym = (D @ self.stiffness @ D).tocsr()
        return self._sym


def build_laplacian(grid):
    """Dirichlet finite-difference Laplacian on the grid.

    Every one of the 2d stencil directions either links two interior nodes
    (off-diagonal -h^(d-2)) or closes against the boundary/mask (pure
    diagonal contribution), so the diagonal is uniformly 2d * h^(d-2) and
    E[f] = sum_edges w (f_i - f_j)^2 + sum_bnd w f_i^2 > 0 for f != 0.
    """
    d, h = grid.dim, grid.h
    w = h ** (d - 2)
    key_of = {tuple(ix): i for i, ix in enumerate(map(tuple, grid.lattice))}
    ei, ej = [], []
    bi = []
    n_nodes = grid.size
    offsets = []
    for k in range(d):
        step = [0] * d
        step[k] = 1
        offsets.append(tuple(step))
        offsets.append(tuple(-s for s in step))
    for i, ix in enumerate(map(tuple, grid.lattice)):
        for off in offsets:
            nb = tuple(a + b for a, b in zip(ix, off))
            j = key_of.get(nb)
            if j is None:
                bi.append(i)
            elif j > i:
                ei.append(i)
                ej.append(j)
    ei = np.asarray(ei, dtype=int)
    ej = np.asarray(ej, dtype=int)
    bi = np.asarray(bi, dtype=int)
    rows = np.concatenate([ei, ej, np.arange(n_nodes)])
    cols = np.concatenate([ej, ei, np.arange(n_nodes)])
    vals = np.concatenate([-w * np.ones(2 * ei.size), 2 * d * w * np.ones(n_nodes)])
    S = sp.csr_matrix(sp.coo_matrix((vals, (rows, cols)), shape=(n_nodes, n_nodes)))
    mass = np.full(n_nodes, h**d)
    return FormOperator(
        grid, S, mass,
        edge_i=ei, edge_j=ej, edge_w=np.full(ei.size, w),
        bnd_i=bi, bnd_w=np.full(bi.size, w),
    )


def carre_du_champ(form, f):
    """Energy measure Gamma[f]: half of each interior edge term to each
    endpoint, the full boundary-edge term to its node.  Sums exactly to E[f].
    """
    f = np.asarray(f, dtype=float)
    gamma = np.zeros(form.size)
    diff2 = form.edge_w * (f[form.edge_i] - f[form.edge_j]) ** 2
    np.add.at(gamma, form.edge_i, 0.5 * diff2)
    np.add.at(gamma, form.edge_j, 0.5 * diff2)
    np.add.at(gamma, form.bnd_i, form.bnd_w * f[form.bnd_i] ** 2)
    return DiscreteMeasure(gamma)


def mutual_energy(form, f, g):
    """Mutual energy measure by polarization: (Gamma[f+g] - Gamma[f-g]) / 4."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    plus = carre_du_champ(form, f + g).weights
    minus = carre_du_champ(form, f - g).weights
    vals = 0.25 * (plus - minus)
    out = DiscreteMeasure.__new__(DiscreteMeasure)  # signed measure: skip validation
    out.weights = vals
    return out


def truncation_inequality(form, f, a):
    """One-sided discrete truncation bound for a >= 0.

    Returns (E[(f-a)_+], bound) with
    bound = sum over {f > a} of Gamma[f] plus the half of each level-set
    crossing edge charged to the low side; the energy of the truncation
    never exceeds it.
    """
    if a < 0:
        raise ValueError("truncation level must be nonnegative")
    f = np.asarray(f, dtype=float)
    g = np.maximum(f - a, 0.0)
    lhs = form.energy(g)
    gamma = carre_du_champ(form, f).weights
    above = f > a
    bound = float(np.sum(gamma[above]))
    cross = above[form.edge_i] != above[form.edge_j]
    bound += float(np.sum(0.5 * form.edge_w[cross]
                          * (f[form.edge_i[cross]] - f[form.edge_j[cross]]) ** 2))
    return lhs, bound


def stencil_connected(form):
    """Breadth-first check that the interior stencil graph is one component."""
    n = form.size
    if n == 0:
        return False
    adj = [[] for _ in range(n)]
    for a, b in zip(form.edge_i, form.edge_j):
        adj[a].append(b)
        adj[b].append(a)
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    return bool(seen.all())
