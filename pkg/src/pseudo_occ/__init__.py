"""Autoencoder one-class anomaly detection with learned pseudo anomalies.

A main autoencoder F is trained on normal data. Some iterations replace its
input with a pseudo anomaly: the normal batch plus noise from a second
autoencoder G, which is rewarded for noise that is large yet still
reconstructable by F. At test time only F is used and the reconstruction
error is the anomaly score.
"""

from .kernels import BACKEND
from .models import AeConfig, DataRange, generic_config, kddcup_config
from .trainer import PseudoMode, TrainConfig, TrainedModel, train

__all__ = ["BACKEND", "AeConfig", "DataRange", "PseudoMode", "TrainConfig", "TrainedModel",
           "generic_config", "kddcup_config", "train"]
__version__ = "0.1.0"
