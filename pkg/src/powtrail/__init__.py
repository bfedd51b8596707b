"""Sybil-resistant anonymous vehicle trajectories.

Roadside units issue threshold-signed, time-stamped location tags; vehicles
chain them into anonymous trajectories, paying a hashcash toll between
units.  An event manager groups suspicious trajectories with an exclusion
test and removes maximum cliques so every physical vehicle counts once.
"""

__version__ = "0.1.0"

from powtrail import crypto, detection, hashcash, protocol, sim  # noqa: F401
