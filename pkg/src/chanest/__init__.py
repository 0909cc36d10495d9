"""Channel-estimation laboratory.

A simulator for conditionally Gaussian channels with random angular
power spectra, the matching MMSE estimator hierarchy (genie, gridded,
structured, fast), a learned convolutional estimator with hand-derived
gradients, maximum-likelihood and sparse-recovery baselines, and a
reproducible Monte Carlo benchmark harness.
"""

from .baselines import (build_dictionary, genie_omp_estimate, ml_circulant_estimate,
                        ml_full, omp_mmv)
from .channel import (AngularSpectrum, CovarianceModel, ObservationBatch,
                      ScenarioPrior, adaptive_update, circulant_approx,
                      covariance_ula, covariance_ura, draw_batch,
                      draw_scenario_batches, laplace_density, sample_scenario,
                      transformed_spectrum)
from .estimators import (FeKernel, FilterBank, build_fe_kernel, build_filter_bank,
                         fast_estimate, filter_offset, fit_structured_weights,
                         genie_filter, gridded_estimate, structured_bank_from_dense,
                         structured_estimate)
from .harness import (ExperimentConfig, ResultRecord, TrainingBudget, box_stats,
                      emit_csv, matched_filter_rate, read_csv_records, run_mse_sweep,
                      run_rate_sweep, run_training_repeats)
from .learning import (CnnParams, TrainingConfig, TrainState, adam_step, cnn_estimate,
                       cnn_forward, hierarchical_train, init_from_fe, load_model,
                       loss_and_gradient, save_bank, save_model, train)
from .numerics import (TransformQ, apply_transform, circular_convolution, dft_matrix,
                       hermitian_eig)

__version__ = "0.1.0"
