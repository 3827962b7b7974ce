"""Optical DNP of 13C by NV centres at low field: spin models, Lindblad
dynamics, sweep engine, measurement arithmetic and a batch CLI."""

__version__ = "0.1.0"
