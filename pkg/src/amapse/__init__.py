"""Speech enhancement with a jointly estimated Wiener mask and posterior variance."""

from .dsp import ComplexSpectrogram, StftConfig, Waveform, istft, magnitude, phase, recombine, stft
from .statmodel import (
    GaussianPosterior,
    MaskPair,
    VariancePair,
    amap_gain,
    apply_mask,
    rician_pdf,
    verify_mmse_error,
    wiener_from_variances,
)

__version__ = "0.1.0"
