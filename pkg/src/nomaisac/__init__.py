"""NOMA-based integrated sensing and communication (ISAC) toolkit.

Link-level models of NOMA-empowered and NOMA-inspired downlink ISAC,
pure-NOMA and semi-NOMA uplink ISAC, and their orthogonal baselines,
together with the optimizers used to trace sensing-versus-communication
tradeoff regions.
"""

__version__ = "0.1.0"
