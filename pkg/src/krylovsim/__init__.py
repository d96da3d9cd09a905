"""Block Krylov complexity and optimal-control synthesis cost for analog qubit simulators."""
__version__ = "0.1.0"
