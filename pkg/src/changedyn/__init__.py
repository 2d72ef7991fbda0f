"""Online Bayesian detection of gradual change with change-dynamic
particle filters, plus change-point and BOCD baselines."""

from .baselines import (BocdState, ChangePointBaselineConfig, NormalGammaModel,
                        ZeroMeanGammaModel, bocd_detect, bocd_init, bocd_odds, bocd_step)
from .data import (SeizureSpec, Stream, SyntheticSpec, fit_ar, generate_mean_drift,
                   generate_seizure_surrogate, preprocess_eeg, read_csv_stream)
from .detect import AlarmRecord, ThresholdPolicy, detect_step, shiryaev_statistic, threshold_value
from .filter import DegenerateLikelihoodError, ParticleSet, init, step
from .harness import ExperimentConfig, MetricsReport, run_experiment, run_sweep
from .kernels import BACKEND, available_backends
from .model import (InvalidConfigError, InvalidInputError, ModelConfig, PhiVector, StateSpec,
                    ThetaVector)
from .predict import PredictiveSummary, predict_one_step

__version__ = "0.1.0"
