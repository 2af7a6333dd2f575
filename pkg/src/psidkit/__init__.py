"""Preferential subspace identification with optimal filtering and smoothing of a secondary signal."""

from .errors import *  # noqa: F401,F403
from .evaluation import align_models, compare_parameters, eigenvalue_error, shifted_decode, shifted_psid_baseline
from .filtering import NOT_OBSERVABLE, learn_filter_gain, psid_with_filtering, recover_kf, reduced_rank_regression
from .kalman import (
    ideal_decode, ideal_filtering_model, kalman_filter, kalman_predict, rts_smooth, time_varying_filter,
    two_filter_smooth,
)
from .lssm import (
    Dims, FilteringModel, PredictorModel, StochasticModel, apply_similarity, backward_stochastic_form,
    covariances_from_stochastic, solve_dare, solve_lyapunov, stochastic_from_covariances, to_predictor_form,
)
from .metrics import normalized_error, r2_score
from .modelio import model_load, model_save
from .simulation import GenConfig, generate_random_model, simulate
from .smoothing import SmoothingModel, psid_smoothing_alt, psid_with_smoothing, smooth_decode
from .subspace import build_hankel, psid_identify

__version__ = "0.1.0"
