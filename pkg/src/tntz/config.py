"""Process-wide defaults."""

import os

SEED_ENV_VAR = "TNTZ_SEED"


def default_seed() -> int:
    """Default RNG seed: 0, unless overridden by the TNTZ_SEED variable.

    Every function that accepts a ``seed`` argument falls back to this
    when the caller passes ``None``.
    """
    return int(os.environ.get(SEED_ENV_VAR, "0"))


def resolve_seed(seed) -> int:
    return default_seed() if seed is None else int(seed)
