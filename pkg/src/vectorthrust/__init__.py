"""Thrust allocation and locomotion planning for a quadruped with a vectorable rotor in every link."""

__version__ = "0.1.0"
