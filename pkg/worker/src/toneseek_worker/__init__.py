"""Reference external-reward worker for toneseek engines."""

from .serve import PROTOCOL_VERSION, AqaScorer, SpectralScorer, main, serve

__version__ = "0.1.0"

__all__ = ["PROTOCOL_VERSION", "AqaScorer", "SpectralScorer", "main", "serve", "__version__"]
