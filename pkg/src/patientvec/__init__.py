"""Dense patient representations learned by predicting billing codes from CUIs."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
