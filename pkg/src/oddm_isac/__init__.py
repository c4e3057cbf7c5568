"""ODDM hybrid-beamforming THz sensing and communication simulator."""

__version__ = "0.1.0"
