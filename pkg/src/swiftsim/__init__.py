"""Simulation and optimisation toolkit for a fast wavelength-switching transmitter.

Modules: ``signal`` (waveforms, AWG model), ``device`` (SOA and tunable-laser
models), ``metrics``, ``pso`` (swarm optimiser and SOA drive problem),
``preemph`` (laser pre-emphasis regression), ``system`` (gated two-laser
simulation, scaling models) and ``cli``.
"""

__version__ = "0.1.0"
