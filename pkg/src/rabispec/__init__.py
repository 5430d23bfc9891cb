"""Driven two-level system coupled to a tank-circuit readout.

Modules: ``params`` (parameter types and units), ``bloch`` (time-domain
simulation), ``rwa`` (slow-envelope transfer functions), ``readout`` (tank
observables), ``lockin`` (software demodulation), ``fit`` (rate extraction),
``sweep`` (grid evaluation), ``validate`` (acceptance suite) and ``cli``.
"""

__version__ = "0.1.0"
