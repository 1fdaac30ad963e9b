"""Uniform grids on coordinate balls in C^n and flat tori.

A grid covers the 2n real coordinates x_1, y_1, ..., x_n, y_n.  Ball grids
tag nodes as interior (the full finite-difference stencil stays inside the
closed ball), boundary (inside the ball but without full stencil margin;
Dirichlet data lives here) or exterior (unused).  Torus grids wrap.

Complex Hessians are assembled from second-order central differences of
the real Hessian; the stencil weights are obtained by pushing the real
difference weights through the same algebra as `complex_hessian_point`,
so quadratics are reproduced exactly.
"""

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .errors import DimensionMismatchError, StencilError
from .fm import CONE_TOL, geometric_mean_clamped
from .hermitian import HermitianMatrix, MetricMatrix
from .multiindex import subset_sums

BALL = "ball"
TORUS = "torus"


@lru_cache(maxsize=None)
def stencil(n: int):
    """Finite-difference stencil for the complex Hessian at unit spacing.

    Returns (offsets, weights): integer offsets of shape (S, 2n) and the
    complex weight matrices of shape (S, n, n), such that the complex
    Hessian at a node equals sum_s weights[s] * u[node + offsets[s]] / h^2.
    Offsets whose weight matrix vanishes (mixed differences within one
    complex coordinate) are dropped.
    """
    d2 = 2 * n
    entries = {}  # offset tuple -> real Hessian weight matrix

    def add(offset, a, b, w):
        mat = entries.setdefault(tuple(offset), np.zeros((d2, d2)))
        mat[a, b] += w
        if a != b:
            mat[b, a] += w

    zero = [0] * d2
    for a in range(d2):
        e = zero.copy()
        e[a] = 1
        add(e, a, a, 1.0)
        e = zero.copy()
        e[a] = -1
        add(e, a, a, 1.0)
        add(zero, a, a, -2.0)
    for a in range(d2):
        for b in range(a + 1, d2):
            for sa in (1, -1):
                for sb in (1, -1):
                    e = zero.copy()
                    e[a] = sa
                    e[b] = sb
                    add(e, a, b, sa * sb / 4.0)

    offsets, weights = [], []
    for off, S in entries.items():
        xx = S[0::2, 0::2]
        yy = S[1::2, 1::2]
        xy = S[0::2, 1::2]
        yx = S[1::2, 0::2]
        W = 0.25 * (xx + yy + 1j * (xy - yx))
        if np.abs(W).max() > 0.0:
            offsets.append(off)
            weights.append(W)
    off_arr = np.array(offsets, dtype=int)
    w_arr = np.array(weights, dtype=complex)
    off_arr.setflags(write=False)
    w_arr.setflags(write=False)
    return off_arr, w_arr


@dataclass(frozen=True)
class GridDomain:
    """Uniform grid over a ball of given radius or a period-1 torus."""

    n: int
    kind: str
    points_per_axis: int
    radius: float = 1.0

    def __post_init__(self):
        if self.kind not in (BALL, TORUS):
            raise DimensionMismatchError(f"unknown domain kind {self.kind!r}")
        if self.points_per_axis < 5 or self.points_per_axis % 2 == 0:
            raise DimensionMismatchError("points_per_axis must be odd and >= 5")
        if self.n < 1:
            raise DimensionMismatchError("complex dimension must be >= 1")
        if self.kind == BALL and not self.radius > 0:
            raise DimensionMismatchError("ball radius must be positive")

    @classmethod
    def ball(cls, n: int, radius: float = 1.0, points_per_axis: int = None):
        if points_per_axis is None:
            points_per_axis = 33 if n == 1 else 13
        return cls(n=n, kind=BALL, points_per_axis=points_per_axis, radius=radius)

    @classmethod
    def torus(cls, n: int, points_per_axis: int = None):
        if points_per_axis is None:
            points_per_axis = 33 if n == 1 else 13
        return cls(n=n, kind=TORUS, points_per_axis=points_per_axis, radius=1.0)

    @property
    def spacing(self) -> float:
        if self.kind == BALL:
            return 2.0 * self.radius / (self.points_per_axis - 1)
        return 1.0 / self.points_per_axis

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * (2 * self.n)

    @property
    def node_count(self) -> int:
        return self.points_per_axis ** (2 * self.n)

    @cached_property
    def axis(self) -> np.ndarray:
        if self.kind == BALL:
            return np.linspace(-self.radius, self.radius, self.points_per_axis)
        return np.arange(self.points_per_axis) * self.spacing

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape (node_count, 2n), C-order over the grid."""
        grids = np.meshgrid(*([self.axis] * (2 * self.n)), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    @cached_property
    def norms_squared(self) -> np.ndarray:
        return (self.coords ** 2).sum(axis=-1)

    @cached_property
    def _masks(self):
        offsets, _ = stencil(self.n)
        if self.kind == TORUS:
            interior = np.ones(self.node_count, dtype=bool)
            return interior, np.zeros_like(interior), np.zeros_like(interior)
        tie = 4.0 * np.finfo(float).eps * max(1.0, self.radius)
        inside = np.sqrt(self.norms_squared) <= self.radius + tie
        inside_grid = inside.reshape(self.shape)
        interior_grid = inside_grid.copy()
        pp = self.points_per_axis
        idx = np.indices(self.shape)
        for d in offsets:
            if not d.any():
                continue
            shifted = idx + d.reshape((-1,) + (1,) * (2 * self.n))
            valid = ((shifted >= 0) & (shifted < pp)).all(axis=0)
            ok = np.zeros(self.shape, dtype=bool)
            sh = tuple(shifted[k][valid] for k in range(2 * self.n))
            ok[valid] = inside_grid[sh]
            interior_grid &= ok
        interior = interior_grid.ravel()
        boundary = inside & ~interior
        exterior = ~inside
        return interior, boundary, exterior

    @property
    def interior_mask(self) -> np.ndarray:
        return self._masks[0]

    @property
    def boundary_mask(self) -> np.ndarray:
        return self._masks[1]

    @property
    def exterior_mask(self) -> np.ndarray:
        return self._masks[2]

    def neighbor_indices(self, flat_nodes: np.ndarray) -> np.ndarray:
        """Flat indices of every stencil neighbor, shape (S, len(flat_nodes))."""
        offsets, _ = stencil(self.n)
        multi = np.array(np.unravel_index(flat_nodes, self.shape))
        out = np.empty((offsets.shape[0], flat_nodes.size), dtype=np.int64)
        pp = self.points_per_axis
        for s, d in enumerate(offsets):
            shifted = multi + d[:, None]
            if self.kind == TORUS:
                shifted %= pp
            elif (shifted < 0).any() or (shifted >= pp).any():
                raise StencilError("stencil leaves the grid box")
            out[s] = np.ravel_multi_index(shifted, self.shape)
        return out


@dataclass(frozen=True)
class GridFunction:
    """Real scalar field sampled on a grid."""

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape == (self.domain.node_count,):
            v = v.reshape(self.domain.shape)
        if v.shape != self.domain.shape:
            raise DimensionMismatchError(
                f"values shape {v.shape} does not match grid {self.domain.shape}"
            )
        usable = ~self.domain.exterior_mask
        if not np.isfinite(v.ravel()[usable]).all():
            raise DimensionMismatchError(
                "grid function must be finite at interior and boundary nodes"
            )
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    @classmethod
    def from_callable(cls, domain: GridDomain, func) -> "GridFunction":
        """Sample ``func(coords) -> values`` with coords of shape (K, 2n)."""
        return cls(domain, np.asarray(func(domain.coords), dtype=float))

    @classmethod
    def constant(cls, domain: GridDomain, value: float) -> "GridFunction":
        return cls(domain, np.full(domain.shape, float(value)))

    @classmethod
    def _unchecked(cls, domain: GridDomain, values: np.ndarray) -> "GridFunction":
        """Wrap raw values without the finiteness invariant (field outputs
        legitimately carry NaN at nodes lacking stencil margin)."""
        gf = object.__new__(cls)
        object.__setattr__(gf, "domain", domain)
        arr = np.asarray(values, dtype=float).reshape(domain.shape).copy()
        arr.setflags(write=False)
        object.__setattr__(gf, "values", arr)
        return gf

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.domain, values)


@dataclass(frozen=True)
class MetricField:
    """Metric per node: a shared constant matrix or one matrix per node."""

    domain: GridDomain
    constant: MetricMatrix = None
    per_node: np.ndarray = None  # (node_count, n, n) complex

    def __post_init__(self):
        if (self.constant is None) == (self.per_node is None):
            raise DimensionMismatchError(
                "provide exactly one of a constant metric or a per-node array"
            )
        if self.constant is not None:
            if self.constant.dim != self.domain.n:
                raise DimensionMismatchError("metric dimension does not match grid")
        else:
            arr = np.asarray(self.per_node, dtype=complex)
            n = self.domain.n
            if arr.shape != (self.domain.node_count, n, n):
                raise DimensionMismatchError("per-node metric array has wrong shape")
            # validation through the scalar type, node by node
            for k in range(arr.shape[0]):
                MetricMatrix(HermitianMatrix(arr[k]))
            object.__setattr__(self, "per_node", arr)

    @classmethod
    def flat(cls, domain: GridDomain) -> "MetricField":
        return cls(domain=domain, constant=MetricMatrix.identity(domain.n))

    @property
    def is_constant(self) -> bool:
        return self.constant is not None

    def cholesky_inverse_at(self, flat_nodes: np.ndarray) -> np.ndarray:
        """Inverse Cholesky factors C^{-1}, shape (K, n, n)."""
        n = self.domain.n
        if self.is_constant:
            Cinv = np.linalg.inv(self.constant.cholesky)
            return np.broadcast_to(Cinv, (flat_nodes.size, n, n))
        C = np.linalg.cholesky(self.per_node[flat_nodes])
        return np.linalg.inv(C)


def hessian_stack(u: GridFunction, flat_nodes: np.ndarray,
                  chi: HermitianMatrix = None) -> np.ndarray:
    """Discrete complex Hessians (plus an optional constant shift) at nodes."""
    domain = u.domain
    _, weights = stencil(domain.n)
    neighbors = domain.neighbor_indices(flat_nodes)
    vals = u.flat[neighbors]  # (S, K)
    H = np.tensordot(vals.T, weights, axes=(1, 0)) / domain.spacing ** 2
    H = 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))
    if chi is not None:
        H = H + chi.entries
    return H


def relative_lambda_stack(H: np.ndarray, g: MetricField,
                          flat_nodes: np.ndarray) -> np.ndarray:
    """Relative eigenvalues of each Hessian against the metric, ascending."""
    Cinv = g.cholesky_inverse_at(flat_nodes)
    M = Cinv @ H @ np.conj(np.swapaxes(Cinv, -1, -2))
    M = 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))
    return np.linalg.eigvalsh(M)


def fd_complex_hessian(u: GridFunction, node) -> HermitianMatrix:
    """Second-order discrete complex Hessian at one grid node."""
    domain = u.domain
    flat = int(np.ravel_multi_index(tuple(node), domain.shape))
    if domain.kind == BALL and not domain.interior_mask[flat]:
        raise StencilError(f"node {tuple(node)} lacks the one-cell stencil margin")
    H = hessian_stack(u, np.array([flat]))[0]
    return HermitianMatrix(H)


@dataclass(frozen=True)
class ConeFieldReport:
    """Per-node cone verdicts for a sampled function."""

    domain: GridDomain
    member: np.ndarray   # bool, grid shaped; False at non-evaluable nodes
    margin: np.ndarray   # float, grid shaped; NaN at non-evaluable nodes
    evaluable: np.ndarray

    @property
    def all_member(self) -> bool:
        return bool(self.member[self.evaluable.reshape(self.domain.shape)].all())

    @property
    def min_margin(self) -> float:
        vals = self.margin[self.evaluable.reshape(self.domain.shape)]
        return float(vals.min()) if vals.size else np.nan


def cone_field(u: GridFunction, g: MetricField, m: int,
               chi: HermitianMatrix = None,
               tol: float = CONE_TOL) -> ConeFieldReport:
    """Nodewise m-cone membership of (chi +) the discrete Hessian of u."""
    domain = u.domain
    nodes = np.flatnonzero(domain.interior_mask)
    H = hessian_stack(u, nodes, chi)
    lam = relative_lambda_stack(H, g, nodes)
    margin = subset_sums(lam, m).min(axis=-1)
    member_flat = np.zeros(domain.node_count, dtype=bool)
    margin_flat = np.full(domain.node_count, np.nan)
    member_flat[nodes] = margin >= -tol
    margin_flat[nodes] = margin
    return ConeFieldReport(domain=domain,
                           member=member_flat.reshape(domain.shape),
                           margin=margin_flat.reshape(domain.shape),
                           evaluable=domain.interior_mask.copy())


def fm_field(u: GridFunction, g: MetricField, m: int,
             chi: HermitianMatrix = None,
             tol: float = CONE_TOL) -> GridFunction:
    """Nodewise F_m of (chi +) the discrete Hessian of u.

    Nodes where the Hessian exits the m-cone carry the (negative) cone
    margin instead of an operator value; nodes without stencil margin
    carry NaN and are excluded from the grid-function finiteness check by
    construction (they are boundary or exterior).
    """
    domain = u.domain
    nodes = np.flatnonzero(domain.interior_mask)
    H = hessian_stack(u, nodes, chi)
    lam = relative_lambda_stack(H, g, nodes)
    sums = subset_sums(lam, m)
    margin = sums.min(axis=-1)
    values = np.where(
        margin >= -tol,
        geometric_mean_clamped(np.maximum(sums, -tol), tol),
        margin,
    )
    out = np.full(domain.node_count, np.nan)
    out[nodes] = values
    if domain.kind == TORUS:
        return GridFunction(domain, out)
    return GridFunction._unchecked(domain, out)
