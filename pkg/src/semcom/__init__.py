"""semcom: multi-task semantic communications simulator.

A learned encoder compresses images into short latent vectors that are
power normalized, transmitted over AWGN/Rayleigh channels and reflected
off a sensing target; three decoders (classification, reconstruction,
presence detection) train jointly under a weighted loss, on a minimal
reverse-mode autodiff engine with compiled hot kernels. An FGSM attack
harness probes the trained chain under a perturbation-to-signal budget.
"""

from .attack import AttackParams, evaluate_attack, fgsm, gaussian_perturb, psr_to_epsilon
from .backend import BACKEND
from .channel import ChannelParams, equalize, normalize_power, transmit
from .data import Dataset, load_cifar10, subset, synth_dataset
from .gradcheck import grad_check, grad_check_fn
from .model import Model, load_model, save_model
from .models import (ModelConfig, audit_structure, build_encoder,
                     build_reconstruction_decoder, build_semantic_decoder,
                     build_sensing_decoder, compression_ratio)
from .sensing import SensingScenario, energy_detector_accuracy, make_sensing_batch, simulate_reflection
from .tape import Parameter, Tape, Var, backward
from .training import (LossBreakdown, MetricsRecord, ModelBundle,
                       MultiTaskWeights, TrainConfig, build_bundle, evaluate,
                       load_bundle, save_bundle, train, train_step)

__version__ = "0.1.0"
