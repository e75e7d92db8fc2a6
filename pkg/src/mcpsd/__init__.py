"""Fast power spectrum estimation from multicoset sub-Nyquist samples."""

__version__ = "0.1.0"

from .fastpsd import (  # noqa: E402
    AutocorrEstimate,
    PowerSpectrum,
    Window,
    autocorr_to_psd,
    estimate_autocorr,
    predict_mse,
)
from .multicoset import (  # noqa: E402
    MulticosetPattern,
    sample,
    search_pattern,
    validate_pattern,
    zero_fill,
)
from .siggen import BandSpec, NyquistSignal, SignalKind, SignalSpec, generate  # noqa: E402

__all__ = [
    "__version__",
    "AutocorrEstimate",
    "PowerSpectrum",
    "Window",
    "autocorr_to_psd",
    "estimate_autocorr",
    "predict_mse",
    "MulticosetPattern",
    "sample",
    "search_pattern",
    "validate_pattern",
    "zero_fill",
    "BandSpec",
    "NyquistSignal",
    "SignalKind",
    "SignalSpec",
    "generate",
]
