"""Frequency-domain model and particle simulator for microfluidic molecular
communication channels with graphene bioFET receivers."""

__version__ = "0.1.0"
