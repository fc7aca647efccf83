from .flow import (
    ElementaryFlow,
    SimpleFlow,
    fbm_cov,
    flow_from_json,
    projected_cov,
    projected_sets,
    projected_values,
    theta,
    theta_inverse,
)

__all__ = [
    'ElementaryFlow', 'SimpleFlow', 'fbm_cov', 'flow_from_json', 'projected_cov',
    'projected_sets', 'projected_values', 'theta', 'theta_inverse',
]
