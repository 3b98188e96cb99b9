"""Harvested-power modeling and passive gain optimization for a piezoelectric
vibration energy harvester mounted on a single-mode structure under Gaussian
white-noise excitation.

Subpackages:

* ``model``     parameters and open/closed-loop state-space construction
* ``lyapunov``  stationary covariance and mean power via the Lyapunov equation
* ``spectral``  frequency-domain (Parseval) power evaluation
* ``sim``       seeded Monte Carlo simulation and losslessness audits
* ``optimize``  gain sweeps and simplex maximization
* ``cli``       JSON-config command-line front end
"""

from .model import (
    ControlGains,
    HarvesterParams,
    PhysicalParams,
    StateSpaceModel,
    build_closed_loop,
    build_open_loop,
    dimensional_power,
    is_hurwitz,
    nondimensionalize,
    validate_gains,
)

__all__ = [
    "ControlGains",
    "HarvesterParams",
    "PhysicalParams",
    "StateSpaceModel",
    "build_closed_loop",
    "build_open_loop",
    "dimensional_power",
    "is_hurwitz",
    "nondimensionalize",
    "validate_gains",
]

__version__ = "0.1.0"
