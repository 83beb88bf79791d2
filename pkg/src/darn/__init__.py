"""Deep autoregressive networks with binary stochastic layers, trained by minimum description length."""
from .data_io import Checkpoint, Dataset, binarize, load_binary_csv, load_checkpoint, load_idx, save_checkpoint, write_pgm
from .evaluation import LikelihoodEstimate, dataset_eval, exact_log_likelihood, importance_sampling_ll
from .model import (Architecture, ModelParams, Representation, StochasticLayerSpec, encoder_log_prob, init_params,
                    joint_log_prob, layer_cond_log_prob, prior_log_prob, visible_log_prob, zero_params)
from .objective import DescriptionLength, description_length_terms, free_energy_exact, free_energy_mc
from .sampler import count_multiplications, make_rng, sample_decoder, sample_encoder
from .training import (TrainConfig, backward, exact_free_energy_grad, finite_diff_grad, rmsprop_step, train)

__all__ = [name for name in dir() if not name.startswith("_")]
