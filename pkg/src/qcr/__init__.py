"""qcr: checkpoint and restore for dynamic quantum circuits.

Checkpoints are classical records (measurement transcripts, counters,
parameters, decoder state); restoration rebuilds quantum state by replaying
the circuit with recorded outcomes pinned.
"""
from __future__ import annotations

__version__ = "0.1.0"
