"""Hash-derived sub-seeds so results never depend on scheduling."""

import hashlib
import os

import numpy as np

THREADS_ENV = "UNIQ_AUDIT_THREADS"


def derive_seed(seed, *keys):
    """Return a 64-bit seed derived from ``seed`` and any number of keys."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode())
    for key in keys:
        h.update(b"\x1f")
        h.update(str(key).encode())
    return int.from_bytes(h.digest(), "little")


def derived_rng(seed, *keys):
    return np.random.default_rng(derive_seed(seed, *keys))


def thread_count():
    """Worker cap from the environment; defaults to 1."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)
