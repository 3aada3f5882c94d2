"""Spin-noise simulations of a charged quantum dot in a birefringent micropillar cavity."""
__version__ = "0.1.0"

from .params import DeviceParams, power_to_alpha, power_to_flux  # noqa: E402
from .kernels import BACKEND  # noqa: E402

__all__ = ["__version__", "DeviceParams", "power_to_alpha", "power_to_flux", "BACKEND"]
