"""AltGDmin and AltMin for noisy low-rank column-wise sensing."""

from .altmin import run_altmin, update_u_full_ls
from .errors import ConfigurationError, QRBreakdownError, RankDeficientError, SolverError
from .gdmin import SolverConfig, SolverState, gd_step, gradient_u, run, update_b
from .init import InitConfig, InitResult, expected_x0, spectral_init, truncated_second_moment
from .metrics import ErrorSummary, frob_error, sd2
from .model import (GroundTruth, IncoherenceReport, ProblemInstance, generate_ground_truth,
                    incoherence, load_instance, measure, nsr, save_instance)
from .report import IterationRecord, RunReport

__version__ = "0.1.0"
