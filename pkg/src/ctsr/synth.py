"""Synthetic data generation.

Two sources: an explicit 2D periodic Burgers solver (random trigonometric
initial conditions, FTCS stepping) and manufactured datasets built from
random trigonometric fields with closed-form derivatives, whose target
channel is computed exactly from declared true coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ctsr.assembly import contract_candidate
from ctsr.cases import CASES, CasePreset
from ctsr.datasets import PERIODIC, GridDataset, QuantitySpec
from ctsr.library import component_names, independent_components

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# analytic field family

@dataclass(frozen=True)
class TrigMode:
    amplitude: float
    wavevector: tuple[float, ...]
    omega: float
    phase: float


@dataclass(frozen=True)
class TrigField:
    """Sum of travelling cosine modes; closed under differentiation and
    under orthogonal changes of coordinates."""

    modes: tuple[TrigMode, ...]
    dim: int

    def evaluate(self, coords: np.ndarray, t: float = 0.0) -> np.ndarray:
        """coords has shape (dim, ...); returns the trailing shape."""
        coords = np.asarray(coords, dtype=float)
        out = np.zeros(coords.shape[1:])
        for m in self.modes:
            if m.amplitude == 0.0:
                continue
            theta = np.tensordot(np.asarray(m.wavevector), coords,
                                 axes=(0, 0))
            out += m.amplitude * np.cos(theta + m.omega * t + m.phase)
        return out

    def derivative(self, axes: tuple[int, ...]) -> TrigField:
        modes = []
        for m in self.modes:
            amp, ph = m.amplitude, m.phase
            for a in axes:
                amp *= m.wavevector[a]
                ph += math.pi / 2.0
            modes.append(TrigMode(amp, m.wavevector, m.omega, ph))
        return TrigField(tuple(modes), self.dim)

    def time_derivative(self) -> TrigField:
        return TrigField(tuple(
            TrigMode(m.amplitude * m.omega, m.wavevector, m.omega,
                     m.phase + math.pi / 2.0) for m in self.modes),
            self.dim)

    def rotate(self, R: np.ndarray) -> TrigField:
        """Field observed in rotated coordinates: f'(y) = f(R^T y)."""
        R = np.asarray(R, dtype=float)
        return TrigField(tuple(
            TrigMode(m.amplitude, tuple(R @ np.asarray(m.wavevector)),
                     m.omega, m.phase) for m in self.modes), self.dim)

    def scaled(self, c: float) -> TrigField:
        return TrigField(tuple(
            TrigMode(c * m.amplitude, m.wavevector, m.omega, m.phase)
            for m in self.modes), self.dim)


def trig_sum(fields: list[TrigField]) -> TrigField:
    dim = fields[0].dim
    modes = tuple(m for f in fields for m in f.modes)
    return TrigField(modes, dim)


def random_trig_field(rng: np.random.Generator, dim: int, n_modes: int,
                      max_wavenumber: int, amplitude: float,
                      richness: tuple[float, ...] | None = None,
                      steady: bool = True) -> TrigField:
    """Seeded random field; richness weights damp modes that vary along
    the corresponding axis."""
    modes = []
    scale = amplitude / math.sqrt(max(n_modes, 1))
    for _ in range(n_modes):
        while True:
            k = rng.integers(-max_wavenumber, max_wavenumber + 1, size=dim)
            if np.any(k != 0):
                break
        amp = scale * rng.normal()
        if richness is not None:
            for a in range(dim):
                if k[a] != 0:
                    amp *= richness[a]
        omega = 0.0 if steady else float(rng.normal())
        phase = float(rng.uniform(0.0, TWO_PI))
        modes.append(TrigMode(float(amp), tuple(float(v) for v in k),
                              omega, phase))
    return TrigField(tuple(modes), dim)


def grid_coords(shape: tuple[int, ...]) -> np.ndarray:
    """(dim, *shape) coordinates of a [0, 2*pi) periodic grid."""
    axes = [np.arange(n) * (TWO_PI / n) for n in shape]
    return np.stack(np.meshgrid(*axes, indexing="ij"))


# ---------------------------------------------------------------------------
# 2D Burgers solver

@dataclass(frozen=True)
class BurgersConfig:
    n: int = 64
    epsilon: float = 0.1
    dt: float = 0.01
    steps: int = 200
    save_every: int = 2
    seed: int = 0
    max_wavenumber: int = 4

    def __post_init__(self):
        if self.n < 4:
            raise ValueError("grid too small")
        if self.epsilon <= 0 or self.dt <= 0:
            raise ValueError("epsilon and dt must be positive")
        if self.steps < 1 or self.save_every < 1:
            raise ValueError("steps and save_every must be >= 1")
        if self.steps % self.save_every:
            raise ValueError("steps must be a multiple of save_every")


def ddx(arr: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Second-order central first derivative on a periodic axis."""
    return (np.roll(arr, -1, axis) - np.roll(arr, 1, axis)) / (2.0 * h)


def laplacian(arr: np.ndarray, h: float) -> np.ndarray:
    """Compact second-order Laplacian on a periodic grid."""
    out = -2.0 * len(arr.shape) * arr
    for axis in range(arr.ndim):
        out = out + np.roll(arr, -1, axis) + np.roll(arr, 1, axis)
    return out / (h * h)


def burgers_initial_component(rng: np.random.Generator, coords: np.ndarray,
                              max_wavenumber: int = 4) -> np.ndarray:
    """Random trigonometric polynomial, rescaled to max amplitude 2 and
    shifted by a uniform offset in [-2, 2]."""
    K = max_wavenumber
    f0 = np.zeros(coords.shape[1:])
    for k in range(-K, K + 1):
        for l in range(-K, K + 1):
            lam = rng.normal()
            gam = rng.normal()
            theta = k * coords[0] + l * coords[1]
            f0 += lam * np.cos(theta) + gam * np.sin(theta)
    c = rng.uniform(-2.0, 2.0)
    peak = np.abs(f0).max()
    if peak > 0:
        f0 = 2.0 * f0 / peak
    return f0 + c


def burgers2d_simulate(config: BurgersConfig,
                       init=None) -> GridDataset:
    """Advance the 2D viscous Burgers system with forward-Euler time
    stepping and central differences on a doubly periodic grid.

    init, when given, is a callable coords -> (u0, v0) replacing the
    random initial condition (used for convergence studies).
    """
    n = config.n
    h = TWO_PI / n
    coords = grid_coords((n, n))
    if init is None:
        rng = np.random.default_rng(config.seed)
        u = burgers_initial_component(rng, coords, config.max_wavenumber)
        v = burgers_initial_component(rng, coords, config.max_wavenumber)
    else:
        u, v = (np.array(a, dtype=float) for a in init(coords))

    speed = max(np.abs(u).max(), np.abs(v).max())
    bound = h * h / (4.0 * config.epsilon)
    if speed > 0:
        bound = min(bound, h / speed)
    if config.dt > bound:
        raise ValueError(
            f"dt={config.dt} violates the explicit stability bound "
            f"{bound:.6g} (grid spacing {h:.6g}, epsilon {config.epsilon}, "
            f"max speed {speed:.6g})")

    n_snaps = config.steps // config.save_every + 1
    us = np.empty((n_snaps, n, n))
    vs = np.empty((n_snaps, n, n))
    us[0], vs[0] = u, v
    eps, dt = config.epsilon, config.dt
    for step in range(1, config.steps + 1):
        ux, uy = ddx(u, h, 0), ddx(u, h, 1)
        vx, vy = ddx(v, h, 0), ddx(v, h, 1)
        u_new = u + dt * (-u * ux - v * uy + eps * laplacian(u, h))
        v_new = v + dt * (-u * vx - v * vy + eps * laplacian(v, h))
        u, v = u_new, v_new
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise FloatingPointError(
                f"solution became non-finite at step {step}")
        if step % config.save_every == 0:
            idx = step // config.save_every
            us[idx], vs[idx] = u, v

    return GridDataset(
        spatial_dim=2, shape=(n, n), spacing=(h, h),
        dt=config.dt * config.save_every, times=n_snaps,
        boundary=(PERIODIC, PERIODIC),
        fields={"u": us, "v": vs},
        quantities={"u": QuantitySpec("u", 1, False,
                                      {(0,): "u", (1,): "v"})},
        provenance={
            "generator": "burgers2d",
            "seed": config.seed,
            "epsilon": config.epsilon,
            "dt": config.dt,
            "save_every": config.save_every,
            "steps": config.steps,
            "initial_condition": "independent random trigonometric "
                                 "polynomials per velocity component",
            "lhs_quantity": "u",
        })


# ---------------------------------------------------------------------------
# manufactured datasets

KIND_TO_CASE = {
    "burgers-2d": "burgers2d",
    "natural-convection-2d": "convection2d",
    "navier-stokes-3d": "ns3d",
    "giesekus-3d": "giesekus3d",
}

CONSTANT_CHANNELS = {
    "convection2d": {"gx": 0.0, "gy": -1.0},
}


@dataclass(frozen=True)
class ManufacturedSpec:
    kind: str
    shape: tuple[int, ...]
    times: int = 1
    dt: float = 0.02
    seed: int = 0
    n_modes: int = 6
    max_wavenumber: int = 2
    amplitude: float = 1.0
    richness: tuple[float, ...] | None = None
    derivative_mode: str = "analytic"
    coefficients: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in KIND_TO_CASE:
            raise ValueError(
                f"unknown kind {self.kind!r}; expected one of "
                f"{sorted(KIND_TO_CASE)}")
        preset = self.case()
        if len(self.shape) != preset.spatial_dim:
            raise ValueError(
                f"{self.kind} needs a {preset.spatial_dim}D shape")
        if self.richness is not None and \
                len(self.richness) != preset.spatial_dim:
            raise ValueError("richness needs one weight per axis")
        if self.derivative_mode not in ("analytic", "stencil"):
            raise ValueError(
                f"derivative_mode must be analytic or stencil, got "
                f"{self.derivative_mode!r}")
        if self.times < 1 or self.dt <= 0:
            raise ValueError("times must be >= 1 and dt positive")
        if self.coefficients is not None and \
                len(self.coefficients) != len(preset.truth):
            raise ValueError(
                f"{self.kind} has {len(preset.truth)} true coefficients")

    def case(self) -> CasePreset:
        return CASES[KIND_TO_CASE[self.kind]]

    def truth_terms(self):
        preset = self.case()
        if self.coefficients is None:
            return preset.truth
        return tuple((term, c) for (term, _), c in
                     zip(preset.truth, self.coefficients))


def _axis_combos(dim: int, depth: int):
    """Sorted derivative multi-indices up to the given depth."""
    out = []
    for d in range(1, depth + 1):
        seen = set()
        for combo in np.ndindex(*(dim,) * d):
            key = tuple(sorted(combo))
            if key not in seen:
                seen.add(key)
                out.append(key)
    return out


def manufactured_dataset(spec: ManufacturedSpec) -> GridDataset:
    """Random analytic fields plus an exactly-known regression target.

    The stored target channel is the declared right-hand side evaluated
    analytically (sum of true-coefficient-weighted candidate values); the
    fields themselves do not solve any PDE.  In analytic derivative mode
    every spatial-derivative channel the library can request is
    pre-computed exactly; in stencil mode derivatives fall back to finite
    differences, which is the controlled noise source.
    """
    preset = spec.case()
    dim = preset.spatial_dim
    shape = spec.shape
    coords = grid_coords(shape)
    steady = spec.times == 1
    snap_times = np.arange(spec.times) * spec.dt
    rng = np.random.default_rng(spec.seed)
    constants = CONSTANT_CHANNELS.get(preset.name, {})

    analytic: dict[str, TrigField] = {}
    fields: dict[str, np.ndarray] = {}
    quantities: dict[str, QuantitySpec] = {}
    for inp in preset.inputs:
        names = component_names(inp, dim)
        quantities[inp.name] = QuantitySpec(
            inp.name, inp.base_order, inp.symmetric_base, dict(names))
        for ch in independent_components(inp, dim):
            if ch in constants:
                fields[ch] = np.full((spec.times,) + shape, constants[ch])
                continue
            f = random_trig_field(rng, dim, spec.n_modes,
                                  spec.max_wavenumber, spec.amplitude,
                                  spec.richness, steady)
            analytic[ch] = f
            fields[ch] = np.stack([f.evaluate(coords, t)
                                   for t in snap_times])

    ds = GridDataset(
        spatial_dim=dim, shape=shape,
        spacing=tuple(TWO_PI / n for n in shape),
        dt=spec.dt, times=spec.times,
        boundary=(PERIODIC,) * dim,
        fields=fields, quantities=quantities,
        provenance={
            "generator": "manufactured",
            "kind": spec.kind,
            "seed": spec.seed,
            "coefficients": [c for _, c in spec.truth_terms()],
            "derivative_mode": spec.derivative_mode,
            "richness": list(spec.richness) if spec.richness else None,
            "lhs_quantity": _lhs_quantity(preset),
            "lhs_semantics": "declared right-hand side evaluated "
                             "analytically; fields do not solve a PDE",
        })

    # exact derivative channels for the regression matrix
    exact_derivs: dict[tuple[str, tuple[int, ...]], np.ndarray] = {}
    for inp in preset.inputs:
        if inp.max_deriv == 0:
            continue
        for ch in independent_components(inp, dim):
            if ch in constants:
                for axes in _axis_combos(dim, inp.max_deriv):
                    exact_derivs[(ch, axes)] = np.zeros(
                        (spec.times,) + shape)
                continue
            f = analytic[ch]
            for axes in _axis_combos(dim, inp.max_deriv):
                df = f.derivative(axes)
                exact_derivs[(ch, axes)] = np.stack(
                    [df.evaluate(coords, t) for t in snap_times])
    if spec.derivative_mode == "analytic":
        ds.derivatives.update(exact_derivs)

    _store_exact_lhs(ds, preset, spec, exact_derivs)
    return ds


def _lhs_quantity(preset: CasePreset) -> str:
    return "tau" if preset.name == "giesekus3d" else "u"


def _store_exact_lhs(ds: GridDataset, preset: CasePreset,
                     spec: ManufacturedSpec, exact_derivs: dict) -> None:
    """Contract the true equation analytically and store it per target
    channel."""
    dim = preset.spatial_dim
    trailing = (spec.times,) + spec.shape
    samples: dict[tuple[str, int], np.ndarray] = {}
    for inp in preset.inputs:
        names = component_names(inp, dim)
        for d in range(inp.max_deriv + 1):
            arr = np.empty((dim,) * (inp.base_order + d) + trailing)
            for comp, ch in names.items():
                if d == 0:
                    arr[comp] = ds.fields[ch]
                else:
                    for axes in np.ndindex(*(dim,) * d):
                        arr[comp + axes] = exact_derivs[
                            (ch, tuple(sorted(axes)))]
            samples[(inp.name, d)] = arr

    order = preset.target_order
    lhs = np.zeros((dim,) * order + trailing)
    for term, coeff in spec.truth_terms():
        lhs = lhs + coeff * contract_candidate(term, samples, dim, trailing)

    target = _lhs_quantity(preset)
    names = component_names(
        next(i for i in preset.inputs if i.name == target), dim)
    for comp in sorted(set(tuple(sorted(c)) if ds.quantities[target].symmetric
                           else c for c in names)):
        ds.time_derivatives[names[comp]] = np.ascontiguousarray(lhs[comp])
