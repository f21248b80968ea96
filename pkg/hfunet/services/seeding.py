"""Stable sub-seed derivation so all randomness funnels through one seed."""

import hashlib

import numpy as np

_SEED_MASK = (1 << 63) - 1


def derive_seed(seed: int, *components: str | int) -> int:
    """Derive a sub-seed by hashing the root seed with component names.

    Args:
        seed: Root seed from the experiment configuration
        *components: Component path, e.g. ("phantom", 3) or ("train", "patches", epoch)

    Returns:
        Non-negative 63-bit integer, stable across processes and platforms
    """
    key = ":".join([str(seed), *(str(c) for c in components)]).encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "little") & _SEED_MASK


def numpy_rng(seed: int, *components: str | int) -> np.random.Generator:
    """Create a numpy generator for a named component."""
    return np.random.default_rng(derive_seed(seed, *components))
