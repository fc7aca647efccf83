from .design import ScalePlan, ball_design, flow_design, sample_ball
from .estimators import (
    ExponentReport,
    chirp_path,
    estimate_C_exponents,
    estimate_local,
    estimate_pc,
    estimate_pc_path,
    estimate_pointwise,
    oscillation,
    pc_target,
)
from .deterministic import deterministic_exponents, deterministic_pc, pc_moment_check
from .kolmogorov import KolmogorovReport, kolmogorov_harness

__all__ = [
    'ScalePlan', 'ball_design', 'flow_design', 'sample_ball',
    'ExponentReport', 'chirp_path', 'estimate_C_exponents', 'estimate_local', 'estimate_pc',
    'estimate_pc_path', 'estimate_pointwise', 'oscillation', 'pc_target',
    'deterministic_exponents', 'deterministic_pc', 'pc_moment_check',
    'KolmogorovReport', 'kolmogorov_harness',
]
