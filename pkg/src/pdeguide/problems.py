"""Governing equations: residuals, residual energies and closed-form references.

Residuals are interior-only; boundary and initial data are owned by the
projection step.  Poisson uses R = -kappa * lap(u) - f so that R = 0 exactly
when -div(kappa grad u) = f holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import kernels
from .errors import ConfigError, GridError
from .grid import BoundarySpec, Field, GridSpec


@dataclass(frozen=True)
class ZeroSource:
    def evaluate(self, spec: GridSpec) -> np.ndarray:
        return np.zeros(spec.shape)


@dataclass(frozen=True)
class SinSinSource:
    """f(x, y) = amplitude * sin(pi x) sin(pi y)."""

    amplitude: float = 2.0 * math.pi ** 2

    def evaluate(self, spec: GridSpec) -> np.ndarray:
        X, Y = spec.mesh()
        return self.amplitude * np.sin(np.pi * X) * np.sin(np.pi * Y)


SourceSpec = Union[ZeroSource, SinSinSource]


@dataclass(frozen=True)
class SineProfile:
    """Initial profile h(x) = amplitude * sin(k pi x)."""

    wavenumber: int = 1
    amplitude: float = 1.0

    def __call__(self, x):
        return self.amplitude * np.sin(self.wavenumber * np.pi * np.asarray(x, dtype=float))


def _finish(p) -> None:
    if not p.coefficient > 0:
        raise ConfigError(f"{p.equation} coefficient must be positive, got {p.coefficient}")
    if p.bc is None:
        h = p.initial(p.spec.x())
        object.__setattr__(p, "bc", BoundarySpec.space_time(h))
    p.bc.validate(p.spec)


@dataclass(frozen=True, eq=False)
class Poisson:
    spec: GridSpec
    kappa: float
    source: SourceSpec = field(default_factory=SinSinSource)
    bc: BoundarySpec = field(default_factory=BoundarySpec.dirichlet_all)

    equation = "poisson"
    code = kernels.EQ_POISSON

    @property
    def coefficient(self) -> float:
        return self.kappa

    def __post_init__(self):
        _finish(self)


@dataclass(frozen=True, eq=False)
class HeatSpaceTime:
    spec: GridSpec
    alpha: float
    initial: SineProfile = field(default_factory=SineProfile)
    bc: BoundarySpec | None = None

    equation = "heat"
    code = kernels.EQ_HEAT

    @property
    def coefficient(self) -> float:
        return self.alpha

    def __post_init__(self):
        _finish(self)


@dataclass(frozen=True, eq=False)
class BurgersSpaceTime:
    spec: GridSpec
    nu: float
    initial: SineProfile = field(default_factory=lambda: SineProfile(wavenumber=2))
    bc: BoundarySpec | None = None

    equation = "burgers"
    code = kernels.EQ_BURGERS

    @property
    def coefficient(self) -> float:
        return self.nu

    def __post_init__(self):
        _finish(self)


PdeProblem = Union[Poisson, HeatSpaceTime, BurgersSpaceTime]

EQUATIONS = ("poisson", "heat", "burgers")


def make_problem(equation: str, coef: float, spec: GridSpec | None = None) -> PdeProblem:
    """Canonical problem for ``equation`` on ``spec`` (default 64x64 unit square).

    Poisson: f = 2 pi^2 sin(pi x) sin(pi y), u = 0 on the boundary.
    Heat:    h(x) = sin(pi x), u = 0 at x = 0, 1.
    Burgers: h(x) = sin(2 pi x), u = 0 at x = 0, 1 (standing shock at x = 0.5).
    """
    spec = spec or GridSpec.square(64)
    if equation == "poisson":
        return Poisson(spec, float(coef))
    if equation == "heat":
        return HeatSpaceTime(spec, float(coef))
    if equation == "burgers":
        return BurgersSpaceTime(spec, float(coef))
    raise ConfigError(f"unknown equation {equation!r}; expected one of {EQUATIONS}")


def source_array(p: PdeProblem) -> np.ndarray:
    if isinstance(p, Poisson):
        return p.source.evaluate(p.spec)
    return np.zeros(p.spec.shape)


def residual_array(p: PdeProblem, u: np.ndarray, f: np.ndarray | None = None) -> np.ndarray:
    out = np.empty(p.spec.shape)
    kernels.residual(np.ascontiguousarray(u, dtype=np.float64), p.code, p.coefficient,
                     source_array(p) if f is None else f, p.spec.hx, p.spec.hy, out)
    return out


def residual(p: PdeProblem, u: Field) -> Field:
    if u.spec != p.spec:
        raise GridError(f"field grid {u.spec} does not match problem grid {p.spec}")
    # Field() rejects non-finite results
    return Field(p.spec, residual_array(p, u.values))


def energy_from_residual(r: np.ndarray, spec: GridSpec) -> float:
    return 0.5 * spec.hx * spec.hy * float(np.sum(r[1:-1, 1:-1] ** 2))


def energy(p: PdeProblem, u: Field) -> float:
    return energy_from_residual(residual(p, u).values, p.spec)


def adjoint_direction(p: PdeProblem, u: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Transposed-stencil gradient J(u)^T R of the energy (interior unknowns)."""
    hx, hy = p.spec.hx, p.spec.hy
    out = np.zeros_like(r)
    if isinstance(p, Poisson):
        kernels.laplacian(r, hx, hy, out)
        return -p.kappa * out
    dy = np.zeros_like(r)
    dxx = np.zeros_like(r)
    kernels.deriv_y(r, hy, dy)
    kernels.deriv_xx(r, hx, dxx)
    if isinstance(p, HeatSpaceTime):
        return -dy - p.alpha * dxx
    ux = np.zeros_like(r)
    dur = np.zeros_like(r)
    kernels.deriv_x(u, hx, ux)
    kernels.deriv_x(np.ascontiguousarray(u * r), hx, dur)
    out = -dy - dur + r * ux - p.nu * dxx
    out[[0, -1], :] = 0.0
    out[:, [0, -1]] = 0.0
    return out


def analytic_solution(p: PdeProblem) -> Field | None:
    spec = p.spec
    X, Y = spec.mesh()
    if isinstance(p, Poisson):
        if not isinstance(p.source, SinSinSource) or spec.lx != 1.0 or spec.ly != 1.0:
            return None
        amp = p.source.amplitude / (2.0 * math.pi ** 2 * p.kappa)
        return Field(spec, amp * np.sin(np.pi * X) * np.sin(np.pi * Y))
    if isinstance(p, HeatSpaceTime):
        if spec.lx != 1.0:
            return None
        k = p.initial.wavenumber * math.pi
        return Field(spec, p.initial.amplitude * np.exp(-p.alpha * k * k * Y) * np.sin(k * X))
    return None


def problem_to_dict(p: PdeProblem) -> dict:
    d = {"equation": p.equation, "coef": p.coefficient, "grid": p.spec.to_dict()}
    if isinstance(p, Poisson):
        d["source"] = ({"kind": "zero"} if isinstance(p.source, ZeroSource)
                       else {"kind": "sinsin", "amplitude": p.source.amplitude})
    else:
        d["initial"] = {"kind": "sine", "wavenumber": p.initial.wavenumber,
                        "amplitude": p.initial.amplitude}
    d["bc"] = p.bc.to_dict()
    return d


def problem_from_dict(d: dict) -> PdeProblem:
    spec = GridSpec.from_dict(d["grid"]) if "grid" in d else GridSpec.square(64)
    eq = d["equation"]
    coef = float(d["coef"])
    bc = BoundarySpec.from_dict(d["bc"]) if "bc" in d else None
    if eq == "poisson":
        s = d.get("source", {"kind": "sinsin"})
        src = ZeroSource() if s["kind"] == "zero" else SinSinSource(float(s.get("amplitude", 2 * math.pi ** 2)))
        return Poisson(spec, coef, src, bc or BoundarySpec.dirichlet_all())
    if eq in ("heat", "burgers"):
        default_k = 1 if eq == "heat" else 2
        i = d.get("initial", {})
        prof = SineProfile(int(i.get("wavenumber", default_k)), float(i.get("amplitude", 1.0)))
        kls = HeatSpaceTime if eq == "heat" else BurgersSpaceTime
        return kls(spec, coef, prof, bc)
    raise ConfigError(f"unknown equation {eq!r}")
