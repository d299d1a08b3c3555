"""Matrix-free multilevel solver for incompressible FSI in the ALE frame.

Submodules are imported lazily so the command-line entry point can set
thread environment variables before numpy loads.
"""

from __future__ import annotations

import importlib

__version__ = "0.1.0"

_SUBMODULES = ("mesh", "spaces", "operators", "materials", "forms",
               "krylov", "multigrid", "extension", "stepper", "bench",
               "vtk_io", "verify", "cli")

__all__ = list(_SUBMODULES) + ["__version__"]


def __getattr__(name: str):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(__all__)
