"""Seeded random streams and random fields.

Every random draw derives from one 64-bit seed.  Stream ``i`` is numpy's
PCG64 generator seeded with ``SeedSequence(entropy=seed, spawn_key=(i,))``,
so ensemble member ``i`` sees the same numbers regardless of how many other
members exist or in which order workers run them.
"""
from __future__ import annotations

import numpy as np

from .spectral import SpectralField

__all__ = ["stream", "random_field", "rough_field"]


def stream(seed, index=0):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))))


def random_field(grid, rng, amplitude=1.0, n_modes=8, decay=2.0):
    """Gaussian coefficients on modes ``<= n_modes`` per axis with ``|m|^-decay`` weights, L2 norm ``amplitude``."""
    n = min(n_modes, grid.N)
    c = np.zeros(grid.field_shape)
    idx = np.indices((n,) * grid.d) + 1
    weight = np.sqrt(np.sum(idx**2, axis=0)) ** (-decay)
    sl = (slice(None),) + (slice(0, n),) * grid.d
    c[sl] = rng.standard_normal((grid.k,) + (n,) * grid.d) * weight[None]
    norm = np.sqrt(np.sum(c**2))
    return SpectralField(grid, c * (amplitude / norm))


def rough_field(grid, exponent=1.1, amplitude=1.0):
    """Coefficients ``prod_i m_i^-exponent`` in every component (barely L2 for exponent near 1/2+)."""
    idx = np.indices(grid.shape) + 1
    c = np.prod(idx.astype(float) ** (-exponent), axis=0)
    return SpectralField(grid, amplitude * np.broadcast_to(c, grid.field_shape))
