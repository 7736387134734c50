"""Delay guarantees for links protected by channel-based authentication.

Modules: :mod:`specfun` (special functions), :mod:`channel` (geometry and
Rice SIMO statistics), :mod:`pla` (threshold authentication), :mod:`attacks`
(scheduling under Sybil and disassociation attacks), :mod:`snc` (Mellin-domain
delay bounds), :mod:`sim` (frame-level simulation) and :mod:`cli`.
"""

from . import attacks, channel, pla, sim, snc, specfun

__all__ = ["attacks", "channel", "pla", "sim", "snc", "specfun"]
__version__ = "0.1.0"
