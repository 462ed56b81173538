"""hheat: sub-Riemannian geometry of the Heisenberg group and a stochastic
exit-time engine for short-time heat content asymptotics."""

from . import catalog, chart, driver, errors, group, heat, oracles, surface  # noqa: F401

__version__ = "0.1.0"
