"""Benchmark case presets: inputs, library specs, ground truths, defaults.

Four setups of increasing complexity:
  burgers2d     2D vector equation, velocity only
  convection2d  2D vector equation with pressure, temperature, gravity
  ns3d          3D vector equation with pressure
  giesekus3d    3D symmetric order-2 tensor equation (steady)
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from ctsr.library import InputTensorSpec, LibraryEntry, LibrarySpec, build_tensor_entries
from ctsr.terms import CandidateTerm, canonicalize, factor_shape, labeled_term

U2 = ("u", "v")
U3 = ("u", "v", "w")


def _canon(shapes, labels) -> CandidateTerm:
    return canonicalize(labeled_term(tuple(shapes), labels))


# factor shapes used by the ground-truth equations (i=0, j=1, k=2)
_u1 = factor_shape("u", 1)
_du = factor_shape("u", 1, 1)
_d2u = factor_shape("u", 1, 2)
_dp = factor_shape("p", 0, 1)
_theta = factor_shape("theta", 0)
_g = factor_shape("g", 1)
_tau = factor_shape("tau", 2, 0, symmetric_base=True)
_dtau = factor_shape("tau", 2, 1, symmetric_base=True)

CONVECTION = _canon((_u1, _du), [1, 0, 1])          # u_j du_i/dx_j
DIFFUSION = _canon((_d2u,), [0, 1, 1])              # d2u_i/dx_j dx_j
PRESSURE_GRAD = _canon((_dp,), [0])                 # dp/dx_i
BUOYANCY = _canon((_g, _theta), [0])                # g_i theta

TAU = _canon((_tau,), [0, 1])                       # tau_ij
TAU_ADVECTION = _canon((_u1, _dtau), [2, 0, 1, 2])  # u_k dtau_ij/dx_k
TAU_GRADU_RIGHT = _canon((_tau, _du), [0, 2, 1, 2])  # tau_ik du_j/dx_k
TAU_GRADU_LEFT = _canon((_tau, _du), [2, 1, 0, 2])   # tau_kj du_i/dx_k
TAU_TAU = _canon((_tau, _tau), [0, 2, 2, 1])         # tau_ik tau_kj

GIESEKUS_ETA_P = 0.0043
GIESEKUS_LAMBDA_1 = 0.008
GIESEKUS_ALPHA = 0.5
GIESEKUS_QUAD = GIESEKUS_ALPHA * GIESEKUS_LAMBDA_1 / GIESEKUS_ETA_P  # ~0.930


@dataclass(frozen=True)
class CasePreset:
    name: str
    spatial_dim: int
    target_order: int
    inputs: tuple[InputTensorSpec, ...]
    P: int
    truth: tuple[tuple[CandidateTerm, float], ...]
    d_tol: float
    lhs: tuple  # ("time_derivative", quantity) | ("shear_rate", scale)
    reported_tensor_count: int  # candidate counts reported in prior work
    reported_scalar_count: int

    def library_spec(self, mode: str = "tensor") -> LibrarySpec:
        return LibrarySpec(self.inputs, self.P, self.target_order, mode,
                           self.spatial_dim)


LAMBDA_DEFAULT = 1e-5
N_TRAIN_DEFAULT = 25
N_STRIDGE_DEFAULT = 10


CASES: dict[str, CasePreset] = {}


def _register(preset: CasePreset):
    CASES[preset.name] = preset
    return preset


BURGERS2D = _register(CasePreset(
    name="burgers2d",
    spatial_dim=2,
    target_order=1,
    inputs=(InputTensorSpec("u", 1, max_deriv=2, component_names=U3),),
    P=2,
    truth=((CONVECTION, -1.0), (DIFFUSION, 0.1)),
    d_tol=0.001,
    lhs=("time_derivative", "u"),
    reported_tensor_count=17,
    reported_scalar_count=77,
))

CONVECTION2D = _register(CasePreset(
    name="convection2d",
    spatial_dim=2,
    target_order=1,
    inputs=(
        InputTensorSpec("u", 1, max_deriv=2, component_names=U3),
        InputTensorSpec("p", 0, max_deriv=2),
        InputTensorSpec("theta", 0, max_deriv=2),
        InputTensorSpec("g", 1, max_deriv=0, component_names=("gx", "gy"),
                        max_multiplicity=1),
    ),
    P=2,
    truth=((CONVECTION, -1.0), (DIFFUSION, 0.00071),
           (PRESSURE_GRAD, -1.0), (BUOYANCY, -0.71)),
    d_tol=0.01,
    lhs=("time_derivative", "u"),
    reported_tensor_count=74,
    reported_scalar_count=374,
))

NS3D = _register(CasePreset(
    name="ns3d",
    spatial_dim=3,
    target_order=1,
    inputs=(
        InputTensorSpec("u", 1, max_deriv=2, component_names=U3),
        InputTensorSpec("p", 0, max_deriv=2),
    ),
    P=2,
    truth=((CONVECTION, -1.0), (DIFFUSION, 0.005), (PRESSURE_GRAD, -1.0)),
    d_tol=0.01,
    lhs=("time_derivative", "u"),
    reported_tensor_count=34,
    reported_scalar_count=734,
))

GIESEKUS3D = _register(CasePreset(
    name="giesekus3d",
    spatial_dim=3,
    target_order=2,
    inputs=(
        InputTensorSpec("u", 1, max_deriv=1, component_names=U3,
                        excluded_standalone_derivatives=(1,)),
        InputTensorSpec("tau", 2, max_deriv=1, symmetric_base=True),
    ),
    P=2,
    truth=((TAU, 1.0),
           (TAU_ADVECTION, GIESEKUS_LAMBDA_1),
           (TAU_GRADU_RIGHT, -GIESEKUS_LAMBDA_1),
           (TAU_GRADU_LEFT, -GIESEKUS_LAMBDA_1),
           (TAU_TAU, GIESEKUS_QUAD)),
    d_tol=1.2,
    lhs=("shear_rate", GIESEKUS_ETA_P),
    reported_tensor_count=115,
    reported_scalar_count=1530,
))


@lru_cache(maxsize=None)
def case_tensor_entries(name: str) -> tuple[LibraryEntry, ...]:
    return tuple(build_tensor_entries(CASES[name].library_spec("tensor")))


def case_tensor_library(name: str) -> tuple[CandidateTerm, ...]:
    return tuple(e.term for e in case_tensor_entries(name))
