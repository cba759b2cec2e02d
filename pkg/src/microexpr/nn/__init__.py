"""Minimal differentiable-network toolkit: NHWC conv/pool/dense layers with
hand-written backward passes, an LSTM stack with backpropagation through time,
softmax/cross-entropy, ADAM, an early-stopping trainer, finite-difference
gradient checking, and a binary checkpoint format.

Everything is 64-bit floats on plain numpy arrays; desk-scale sizes keep
gradient checks meaningful and runs deterministic.
"""

from .layers import Conv2D, Dense, Flatten, LayerStack, MaxPool2D, Parameter, ReLU
from .losses import cross_entropy_from_logits, softmax_predict
from .recurrent import LSTMCell, LSTMStack, lstm_step
from .optim import Adam
from .training import FitResult, TrainConfig, fit
from .gradcheck import GradCheckReport, grad_check
from .checkpoint import load_checkpoint, save_checkpoint, CheckpointError

__all__ = [
    "Adam", "CheckpointError", "Conv2D", "Dense", "FitResult", "Flatten",
    "GradCheckReport", "LSTMCell", "LSTMStack", "LayerStack", "MaxPool2D",
    "Parameter", "ReLU", "TrainConfig", "cross_entropy_from_logits", "fit",
    "grad_check", "load_checkpoint", "lstm_step", "save_checkpoint",
    "softmax_predict",
]
