from .config import RunConfig, build_config
from .run_log import RunLogger, RunRecord

__all__ = ['RunConfig', 'build_config', 'RunLogger', 'RunRecord']
