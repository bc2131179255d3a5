"""Sound reconstruction by delayed Wilson-Cowan evolution in time-frequency-chirpiness space."""

from .pipeline import ConfigError, Diagnostics, PipelineConfig, run_pipeline
from .signal_io import TimeDomainSignal, generate_chirp, read_wav, write_wav

__all__ = [
    "ConfigError",
    "Diagnostics",
    "PipelineConfig",
    "run_pipeline",
    "TimeDomainSignal",
    "generate_chirp",
    "read_wav",
    "write_wav",
]
__version__ = "0.1.0"
