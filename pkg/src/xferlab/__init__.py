"""Quantum state transfer through thermal bosonic channels.

Modules
-------
hilbert    : truncated Fock spaces, states, fidelities
toynet     : two nodes exchanging a qubit through a single thermal mode
cascade    : cascaded-network amplitude/moment dynamics and pulse shaping
thermch    : thermal Gaussian (beam-splitter) channel as an exact Kraus map
bosoncode  : binomial bosonic codes and recovery against thermal noise
cli        : command-line experiment runner emitting CSV data sets
"""

__version__ = "0.1.0"
