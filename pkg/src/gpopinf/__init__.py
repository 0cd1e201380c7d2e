"""Gradient-structure-preserving operator inference for reduced-order models.

Learns reduced operators ``D_r`` from snapshot data of full-order systems
``y' = D grad H(y)`` so that the reduced model keeps the conservative
(skew ``D_r``) or dissipative (negative semi-definite ``D_r``) structure.
"""

from .errors import (
    ConfigError,
    DeflationWarning,
    FormatError,
    GPOpInfError,
    InsufficientDataError,
    InvalidDimensionError,
    NumericalError,
    ParameterWarning,
    StructureError,
)
from .fom import (
    FomSpec,
    allen_cahn_1d_fom,
    allen_cahn_2d_fom,
    build_fom,
    eval_energy,
    eval_gradient,
    generic_fom,
    generic_fom_from_files,
    kdv_fom,
    wave_fom,
)
from .integrators import PicardConfig, TimeGrid, avf_step, implicit_midpoint_linear, integrate
from .data import (
    SnapshotSet,
    collect_snapshots,
    concat_parametric,
    derivative_snapshots,
    read_matrix,
    write_matrix,
)
from .pod import ReducedBasis, basis_from_modes, pod_basis, pod_basis_block2, project_set
from .opinf import (
    BarrierConfig,
    InferredOperator,
    infer,
    infer_conservative_gp,
    infer_conservative_p,
    infer_conservative_v,
    infer_dissipative,
)
from .rom import RomSpec, assemble_gp_rom, assemble_spg_rom, simulate_rom
from .metrics import (
    ErrorReport,
    approx_error,
    energy_series,
    grad_projection_error,
    optimization_error,
    projection_error,
)

__version__ = "0.1.0"
