"""Uniform 2D grids, fields, stencils, smoothing and boundary projection.

Axis 0 is x; for space-time problems axis 1 is the time-like coordinate y.
Node (i, j) sits at (i * hx, j * hy).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from . import kernels
from .errors import GridError, NonFiniteError


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise GridError("node counts must be integers")
        if self.nx < 3 or self.ny < 3:
            raise GridError(f"grid needs at least 3x3 nodes, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise GridError("domain extents must be positive")

    @property
    def hx(self) -> float:
        return self.lx / (self.nx - 1)

    @property
    def hy(self) -> float:
        return self.ly / (self.ny - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    def x(self) -> np.ndarray:
        return np.arange(self.nx) * self.hx

    def y(self) -> np.ndarray:
        return np.arange(self.ny) * self.hy

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x(), self.y(), indexing="ij")

    @classmethod
    def square(cls, n: int = 64) -> "GridSpec":
        return cls(n, n, 1.0, 1.0)

    def to_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "lx": self.lx, "ly": self.ly}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(int(d["nx"]), int(d["ny"]), float(d.get("lx", 1.0)), float(d.get("ly", 1.0)))


@dataclass(frozen=True, eq=False)
class Field:
    """An immutable scalar lattice on a :class:`GridSpec`."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, order="C", copy=True)
        if v.shape != self.spec.shape:
            raise GridError(f"values of shape {v.shape} do not match grid {self.spec.shape}")
        if not np.isfinite(v).all():
            raise NonFiniteError("field contains NaN or Inf")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, spec: GridSpec) -> "Field":
        return cls(spec, np.zeros(spec.shape))

    @classmethod
    def constant(cls, spec: GridSpec, c: float) -> "Field":
        return cls(spec, np.full(spec.shape, float(c)))

    @classmethod
    def from_function(cls, spec: GridSpec, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "Field":
        X, Y = spec.mesh()
        return cls(spec, np.broadcast_to(fn(X, Y), spec.shape))

    def copy_values(self) -> np.ndarray:
        """A writable float64 copy of the values."""
        return np.array(self.values, copy=True)

    def __add__(self, other: "Field") -> "Field":
        _same_grid(self, other)
        return Field(self.spec, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _same_grid(self, other)
        return Field(self.spec, self.values - other.values)

    def __mul__(self, a: float) -> "Field":
        return Field(self.spec, self.values * a)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.spec, -self.values)

    def __repr__(self) -> str:
        return f"Field({self.spec.nx}x{self.spec.ny}, max|u|={np.abs(self.values).max():.4g})"


def _same_grid(a: Field, b: Field) -> None:
    if a.spec != b.spec:
        raise GridError(f"grid mismatch: {a.spec} vs {b.spec}")


# --------------------------------------------------------------------------
# boundary conditions

EDGES = ("x0", "x1", "y0", "y1")
_EDGE_INDEX = {name: i for i, name in enumerate(EDGES)}


@dataclass(frozen=True, eq=False)
class Dirichlet:
    values: Union[float, np.ndarray] = 0.0


@dataclass(frozen=True)
class Neumann:
    """Zero-flux edge: copies the adjacent interior node."""


@dataclass(frozen=True)
class Periodic:
    """Copies the opposite interior node; must be paired with the opposite edge."""


@dataclass(frozen=True, eq=False)
class Initial:
    """Initial-data edge of a space-time problem (the y = 0 edge)."""

    values: Union[float, np.ndarray] = 0.0


EdgeCondition = Union[Dirichlet, Neumann, Periodic, Initial]

# corner resolution: higher wins, applied last
_PRIORITY = {Periodic: 0, Neumann: 1, Dirichlet: 2, Initial: 3}
_KIND = {
    Periodic: kernels.KIND_PERIODIC,
    Neumann: kernels.KIND_NEUMANN,
    Dirichlet: kernels.KIND_DIRICHLET,
    Initial: kernels.KIND_INITIAL,
}


def _edge_length(spec: GridSpec, edge: str) -> int:
    return spec.ny if edge in ("x0", "x1") else spec.nx


@dataclass(frozen=True, eq=False)
class BoundarySpec:
    x0: EdgeCondition = field(default_factory=Dirichlet)
    x1: EdgeCondition = field(default_factory=Dirichlet)
    y0: EdgeCondition = field(default_factory=Dirichlet)
    y1: EdgeCondition = field(default_factory=Dirichlet)

    def edges(self) -> dict[str, EdgeCondition]:
        return {e: getattr(self, e) for e in EDGES}

    @classmethod
    def dirichlet_all(cls, value: float = 0.0) -> "BoundarySpec":
        return cls(Dirichlet(value), Dirichlet(value), Dirichlet(value), Dirichlet(value))

    @classmethod
    def space_time(cls, initial, left=0.0, right=0.0) -> "BoundarySpec":
        """Initial data on y = 0, Dirichlet sides in x, outflow (zero flux) at y = Y."""
        return cls(Dirichlet(left), Dirichlet(right), Initial(initial), Neumann())

    def validate(self, spec: GridSpec) -> None:
        e = self.edges()
        for a, b in (("x0", "x1"), ("y0", "y1")):
            if isinstance(e[a], Periodic) != isinstance(e[b], Periodic):
                raise GridError(f"periodic edges must be paired: {a}/{b}")
        if any(isinstance(c, Initial) for k, c in e.items() if k != "y0"):
            raise GridError("Initial data is only allowed on the y0 edge")
        for name, cond in e.items():
            if isinstance(cond, (Dirichlet, Initial)) and np.ndim(cond.values) > 0:
                n = _edge_length(spec, name)
                if np.shape(cond.values) != (n,):
                    raise GridError(
                        f"edge {name} has {np.size(cond.values)} samples, expected {n}")
                if not np.isfinite(cond.values).all():
                    raise NonFiniteError(f"edge {name} samples are not finite")

    def plan(self, spec: GridSpec, scale: float = 1.0) -> "ProjectionPlan":
        """Kernel-ready arrays; edge data are divided by ``scale``."""
        self.validate(spec)
        L = max(spec.nx, spec.ny)
        vals = np.zeros((4, L))
        kinds = np.zeros(4, dtype=np.intc)
        pad = np.zeros(4, dtype=np.intc)
        for name, cond in self.edges().items():
            k = _EDGE_INDEX[name]
            kinds[k] = _KIND[type(cond)]
            n = _edge_length(spec, name)
            if isinstance(cond, (Dirichlet, Initial)):
                vals[k, :n] = np.broadcast_to(np.asarray(cond.values, dtype=float), (n,)) / scale
                pad[k] = kernels.PAD_ODD
            elif isinstance(cond, Periodic):
                pad[k] = kernels.PAD_WRAP
            else:
                pad[k] = kernels.PAD_EVEN
        order = sorted(range(4), key=lambda k: (_PRIORITY[type(getattr(self, EDGES[k]))], k))
        return ProjectionPlan(np.asarray(order, dtype=np.intc), kinds, vals, pad)

    def edge_values(self, spec: GridSpec, edge: str) -> np.ndarray | None:
        cond = getattr(self, edge)
        if isinstance(cond, (Dirichlet, Initial)):
            return np.broadcast_to(np.asarray(cond.values, dtype=float), (_edge_length(spec, edge),)).copy()
        return None

    def to_dict(self) -> dict:
        out = {}
        for name, cond in self.edges().items():
            d = {"kind": type(cond).__name__.lower()}
            if isinstance(cond, (Dirichlet, Initial)):
                v = np.asarray(cond.values, dtype=float)
                d["values"] = v.tolist() if v.ndim else float(v)
            out[name] = d
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "BoundarySpec":
        kinds = {"dirichlet": Dirichlet, "neumann": Neumann, "periodic": Periodic, "initial": Initial}
        conds = {}
        for name in EDGES:
            e = d[name]
            kls = kinds[e["kind"]]
            if kls in (Dirichlet, Initial):
                v = e.get("values", 0.0)
                conds[name] = kls(np.asarray(v, dtype=float) if isinstance(v, list) else float(v))
            else:
                conds[name] = kls()
        return cls(**conds)


@dataclass(frozen=True)
class ProjectionPlan:
    order: np.ndarray
    kinds: np.ndarray
    vals: np.ndarray
    pad: np.ndarray

    def apply(self, u: np.ndarray) -> None:
        kernels.project(u, self.order, self.kinds, self.vals)


# --------------------------------------------------------------------------
# smoothing

@dataclass(frozen=True)
class SmoothingKernel:
    """Normalized, truncated 1D Gaussian taps; ``sigma`` in grid cells."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise GridError(f"smoothing sigma must be positive, got {self.sigma}")

    @property
    def radius(self) -> int:
        return max(1, math.ceil(3.0 * self.sigma))

    @property
    def weights(self) -> np.ndarray:
        k = np.arange(-self.radius, self.radius + 1, dtype=float)
        w = np.exp(-k * k / (2.0 * self.sigma ** 2))
        return w / w.sum()


_ALL_EVEN = np.full(4, kernels.PAD_EVEN, dtype=np.intc)


def smooth_array(u: np.ndarray, weights: np.ndarray, pad: np.ndarray | None = None) -> np.ndarray:
    u = np.ascontiguousarray(u, dtype=np.float64)
    r = (len(weights) - 1) // 2
    if r >= min(u.shape) - 1:
        raise GridError(f"kernel radius {r} too large for grid {u.shape}")
    out = np.empty_like(u)
    kernels.smooth(u, np.ascontiguousarray(weights, dtype=np.float64),
                   _ALL_EVEN if pad is None else pad, np.empty_like(u), out)
    return out


def gaussian_smooth(u: Field, k: SmoothingKernel, bc: BoundarySpec | None = None) -> Field:
    """Separable Gaussian filter.

    Without ``bc`` every edge is reflect-padded (``u[-1] := u[1]``).  With
    ``bc`` the padding follows each edge's condition: odd reflection about
    the boundary value for Dirichlet/Initial edges (so boundary values and
    affine profiles are preserved), even reflection for zero-flux edges, and
    wrap-around for periodic pairs.
    """
    pad = None if bc is None else bc.plan(u.spec).pad
    return Field(u.spec, smooth_array(u.values, k.weights, pad))


def project_boundary(u: Field, bc: BoundarySpec) -> Field:
    v = u.copy_values()
    bc.plan(u.spec).apply(v)
    return Field(u.spec, v)


# --------------------------------------------------------------------------
# stencils (interior only; boundary nodes are 0)

def laplacian(u: Field) -> Field:
    out = np.empty(u.spec.shape)
    kernels.laplacian(u.values, u.spec.hx, u.spec.hy, out)
    return Field(u.spec, out)


def deriv_x(u: Field) -> Field:
    out = np.empty(u.spec.shape)
    kernels.deriv_x(u.values, u.spec.hx, out)
    return Field(u.spec, out)


def deriv_y(u: Field) -> Field:
    out = np.empty(u.spec.shape)
    kernels.deriv_y(u.values, u.spec.hy, out)
    return Field(u.spec, out)


def deriv_xx(u: Field) -> Field:
    out = np.empty(u.spec.shape)
    kernels.deriv_xx(u.values, u.spec.hx, out)
    return Field(u.spec, out)


# --------------------------------------------------------------------------
# norms

def relative_l2(pred: Field, ref: Field) -> float:
    _same_grid(pred, ref)
    denom = float(np.sum(ref.values ** 2))
    if denom == 0.0:
        raise GridError("relative L2 against an all-zero reference is undefined")
    return math.sqrt(float(np.sum((pred.values - ref.values) ** 2)) / denom)


def max_abs_error(pred: Field, ref: Field) -> float:
    _same_grid(pred, ref)
    return float(np.max(np.abs(pred.values - ref.values)))
