from atoms.tasks.digits import add_noise, check_classes, render_digit, synth_digits
from atoms.tasks.fourier import FourierBatch, band_frequencies, gen_fourier_batch, stream_spec
from atoms.tasks.signal_model import SignalForward, SignalModel
from atoms.tasks.vae import (
    DigitVae,
    ElboParts,
    VaeOutput,
    gaussian_kl,
    patchify,
    reconstruction_loss,
    unpatchify,
    vae_forward,
)

__all__ = [
    "DigitVae",
    "ElboParts",
    "FourierBatch",
    "SignalForward",
    "SignalModel",
    "VaeOutput",
    "add_noise",
    "band_frequencies",
    "check_classes",
    "gaussian_kl",
    "gen_fourier_batch",
    "patchify",
    "reconstruction_loss",
    "render_digit",
    "stream_spec",
    "synth_digits",
    "unpatchify",
    "vae_forward",
]
