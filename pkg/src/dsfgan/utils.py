"""Seeding, digests and input validation helpers."""

from __future__ import annotations

import hashlib
import json
import zlib
from numbers import Integral, Real

import numpy as np

from .exceptions import ConfigError


def _key(part):
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def substream(seed, *names):
    """Independent generator for the named sub-stream of ``seed``.

    ``substream(7, "fold", 2, "sample", 0)`` always yields the same stream and
    never overlaps with another name path.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(n) for n in names))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed, *names):
    """Integer seed for a named sub-stream (for estimators taking ``random_state``)."""
    return int(substream(seed, *names).integers(0, 2**31 - 1))


def check_random_state(random_state):
    """Return a Generator; accepts None, an int, or an existing Generator."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None:
        return np.random.default_rng()
    if isinstance(random_state, Integral):
        return np.random.default_rng(int(random_state))
    raise ConfigError(f"cannot build a random generator from {random_state!r}")


def array_digest(arrays):
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a, dtype=np.float64)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def json_digest(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()


def check_positive_int(value, name, minimum=1):
    if not isinstance(value, Integral) or isinstance(value, bool) or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_non_negative(value, name):
    if not isinstance(value, Real) or isinstance(value, bool) or not np.isfinite(value) or value < 0:
        raise ConfigError(f"{name} must be a finite non-negative number, got {value!r}")
    return float(value)


def check_positive(value, name):
    if not isinstance(value, Real) or isinstance(value, bool) or not np.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be a finite positive number, got {value!r}")
    return float(value)


def check_2d(X, name="X", width=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if width is not None and X.shape[1] != width:
        raise ValueError(f"{name} must have {width} columns, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return X
