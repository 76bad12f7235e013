"""Training and export side of the fault-injection simulator.

This package is intentionally independent of the simulator package: the
two sides share only file formats (NNFI containers, IDX datasets, CSV
reports) and the simulator's command-line interface. The golden traces
written here are produced by this package's own integer reference
implementation; bit-exact agreement with the simulator engine is checked
through ``nnfi validate``.
"""

__version__ = "0.1.0"
