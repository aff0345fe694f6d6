"""faderlab: attribute-controllable symbolic melody generation.

A frozen sequence VAE models 4-bar monophonic melodies; small
conditional diffusion models (and baseline controllers) steer its
latent space toward target values of four musical attributes. The
package covers the data pipeline, training, evaluation, a CLI, and an
HTTP service for the fader UI.
"""

__version__ = "0.1.0"

from .attributes import ATTRIBUTE_NAMES, AttributeStats, AttributeVector, measure
from .dataset import Dataset, load as load_dataset, save as save_dataset
from .tokens import (
    NOTE_HOLD,
    NOTE_OFF,
    SEQ_LEN,
    VOCAB_SIZE,
    NoteEvent,
    detokenize,
    tokenize,
    validate_tokens,
)

__all__ = [
    "ATTRIBUTE_NAMES",
    "AttributeStats",
    "AttributeVector",
    "Dataset",
    "NOTE_HOLD",
    "NOTE_OFF",
    "NoteEvent",
    "SEQ_LEN",
    "VOCAB_SIZE",
    "detokenize",
    "load_dataset",
    "measure",
    "save_dataset",
    "tokenize",
    "validate_tokens",
    "__version__",
]
