"""Multi-rank Z-Model interface-instability mini-app with traced communication."""
from .fft import FftCommConfig
from .mesh import ConfigError, SurfaceMesh
from .transport import spawn_ranks

__version__ = "0.1.0"

__all__ = ["ConfigError", "FftCommConfig", "SurfaceMesh", "spawn_ranks", "__version__"]
