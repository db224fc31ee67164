"""Locally private online change point detection.

Randomization channels with exact privacy accounting, streaming binned
estimators over prefix sums, CUSUM detectors with their threshold schedules,
and a reproducible Monte Carlo harness.
"""

from ._kernels import USING_NUMBA
from .detection import (CusumReport, DetectionResult, SnrCheck,
                        ThresholdParams, cusum_nonprivate, cusum_private,
                        cusum_univariate, detect_nonprivate, detect_private,
                        detect_univariate, m1_truncation_floor, prefix_sums,
                        run_detector, snr_check, threshold_nonprivate,
                        threshold_private, threshold_univariate)
from .estimation import (BinPartition, PrefixState, build_partition,
                         estimate_c_min, estimate_nonprivate,
                         estimate_private, push_private, push_raw)
from .privacy import (PrivacyParams, PrivateObservation, RawObservation,
                      RegressionChannel, UnivariateChannel,
                      audit_privacy_loss, audit_privacy_loss_batch,
                      clamp_response, laplace_from_uniform,
                      laplace_mean_tail_bound, privatize_regression,
                      privatize_regression_batch, privatize_univariate,
                      privatize_univariate_batch, sample_laplace,
                      zero_noise_source)
from .simulation import (Constant, DetectorConfig, Metrics, RadialBump,
                         RegressionScenario, RunOutcome, ScalingFit,
                         UnivariateScenario, bernoulli_sum_tail_bound,
                         cone_bump, fit_scaling, generate_regression_stream,
                         generate_univariate_stream,
                         lower_bound_regression_instance,
                         lower_bound_univariate_instance, rng_for, run_one,
                         run_replications, summarize)

__version__ = "0.1.0"
