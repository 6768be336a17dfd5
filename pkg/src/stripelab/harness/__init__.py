"""Configuration, study orchestration and the command line."""
from .config import ConfigError, StudyConfig, TorusConfig, load_config, parse_list
from .study import (BaselineError, BaselineRow, StudyResult, StudyRow, reference_energy, run_baseline_torus,
                    run_gamma_study, write_rows_csv)
