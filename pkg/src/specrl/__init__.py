"""Spectral-representation reinforcement learning toolkit."""
