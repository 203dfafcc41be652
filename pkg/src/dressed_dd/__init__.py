"""Pulse-level simulation of dressed-state dynamical decoupling and the
dressed-basis two-qubit phase gate on swap-coupled transmons.

Modules
-------
qops
    Operator algebra (Pauli, ladder, dressed basis, rotations).
model
    Hamiltonians in the common rotating frame.
noise
    Quasi-static and 1/f frequency noise with per-trajectory seeding.
schedule
    Piecewise-constant control schedules and protocol builders.
evolve
    Unitary and Lindblad propagation, channels, trajectory averaging.
analysis
    Ramsey and RB fits, dephasing-time arithmetic, error budgets.
tomo
    State and process tomography in the Pauli basis.
rb
    Randomized benchmarking gate sets, sequences and simulation.
config, runner, output, cli
    Scenario files, experiment dispatch, result files and the command line.
"""

from .model import GHz, MHz

__version__ = "0.1.0"

__all__ = ["MHz", "GHz", "__version__"]
