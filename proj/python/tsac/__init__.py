"""Task-specific action correction: multi-task SAC with a corrective policy.

The compiled extension lives inside this package when installed via pip; in a
plain CMake build it sits next to the package on PYTHONPATH instead.
"""

try:
    from ._tsac import *  # noqa: F401,F403
    from ._tsac import __doc__ as _ext_doc
except ImportError:
    from _tsac import *  # noqa: F401,F403
    from _tsac import __doc__ as _ext_doc

__all__ = [
    "Algo",
    "CorrectionFn",
    "CmdpSuite",
    "TaskSpec",
    "Trainer",
    "EvalResult",
    "ConfigError",
    "TrainingError",
    "SimulationError",
    "correct",
    "sparse_reward",
    "smooth",
    "run_experiment",
]
