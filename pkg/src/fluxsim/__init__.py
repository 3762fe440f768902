"""Monte-Carlo simulator for gate operations on coupled superconducting flux qubits.

The package models two data qubits coupled through a tunable coupler qubit and
read in/out of two storage resonators, evolving under piecewise-defined control
schedules, 1/f flux noise synthesized from random-telegraph fluctuators, and
spontaneous qubit decay.  It provides gate compilation with spin-echo
refocusing, stochastic trajectory propagation with a low-rank correction
expansion for decay, process tomography with a worst-case error metric, and
experiment drivers exposed through a command-line interface.
"""

__version__ = "0.1.0"

from . import hilbert, model

__all__ = ["hilbert", "model", "__version__"]
