from .config_io import load_experiment, parse_experiment
from .problems import Problem, build_env, load_problems
from .runner import aggregate, curves_frame, emit_curves, load_records, records_frame, run_experiment
from .seeds import cell_seed
from .suites import blocker_sweep, directional_holds, directional_suite

__all__ = [
    "load_experiment", "parse_experiment", "Problem", "build_env", "load_problems", "run_experiment",
    "aggregate", "curves_frame", "records_frame", "emit_curves", "load_records", "cell_seed",
    "directional_suite", "directional_holds", "blocker_sweep",
]
