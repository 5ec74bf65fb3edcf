"""Cross-modality metric learning with spectral-aware softmax losses.

Pure-numpy implementation: loss kernels with hand-derived gradients, a small
MLP encoder with manual backprop, an asynchronous two-step trainer, a
retrieval evaluator, and an experiment CLI.
"""

from .core import (
    Batch,
    Dataset,
    IdentityPrototypeMatrix,
    LossResult,
    Modality,
    ModalityPrototypeMatrix,
    Sample,
    rewrite_labels,
    rewrite_labels_batch,
)
from .losses import (
    CombinedLossConfig,
    am_softmax_loss,
    ast_loss,
    circle_loss,
    combined_loss,
    sas_f_loss,
    sas_w_loss,
    sas_w_loss_weight_masked,
    softmax_ce,
    theta_derivative_probe,
)

__all__ = [
    "Batch",
    "Dataset",
    "IdentityPrototypeMatrix",
    "LossResult",
    "Modality",
    "ModalityPrototypeMatrix",
    "Sample",
    "rewrite_labels",
    "rewrite_labels_batch",
    "CombinedLossConfig",
    "am_softmax_loss",
    "ast_loss",
    "circle_loss",
    "combined_loss",
    "sas_f_loss",
    "sas_w_loss",
    "sas_w_loss_weight_masked",
    "softmax_ce",
    "theta_derivative_probe",
]

__version__ = "0.1.0"
