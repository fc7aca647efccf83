from .models import (
    CovModel,
    build_cov_matrix,
    cov,
    increment_var,
    variance_of_cset,
)
from .sampling import (
    PSDFactor,
    SamplePath,
    closure_family,
    closure_sets,
    delta_increment,
    psd_factorize,
    sample_paths,
)
from .unbounded import UnboundedReport, demo_unbounded, growth_table

__all__ = [
    'CovModel', 'build_cov_matrix', 'cov', 'increment_var', 'variance_of_cset',
    'PSDFactor', 'SamplePath', 'closure_family', 'closure_sets', 'delta_increment',
    'psd_factorize', 'sample_paths',
    'UnboundedReport', 'demo_unbounded', 'growth_table',
]
