"""Evolving foraging bots controlled by leaky integrate-and-fire spiking networks."""

__version__ = "0.1.0"
