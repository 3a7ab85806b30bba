"""Surrogate estimation of optimal J2-perturbed multiple-impulse rendezvous transfers."""

__version__ = "0.1.0"
