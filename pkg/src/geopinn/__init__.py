"""Physics-informed networks on mapped reference domains.

A PDE posed on a curved or deformed domain is solved on a simple reference
domain (unit interval or square) by composing the network with a map of
that domain and transforming the derivatives in the loss accordingly.
"""
__version__ = "0.1.0"

from . import autodiff, geometry, network, optimize, pinn, pullback  # noqa: E402,F401
