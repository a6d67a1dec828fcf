"""Deterministic counter-based randomness.

All randomness in this package flows through two primitives built on the
Philox counter-based bit generator: a single uniform draw addressed by a
(round, level, slot) counter, and a substream generator derived from a root
seed plus integer key parts.  Because streams are addressed rather than
consumed sequentially, results are identical no matter how the surrounding
loops are ordered or parallelized.
"""

import numpy as np


def _as_u64(value) -> int:
    # wrap negatives / large ints into the uint64 ring
    return int(value) & 0xFFFFFFFFFFFFFFFF


def swap_uniform(seed: int, round_i: int, level_j: int, slot_l: int) -> float:
    """One uniform [0, 1) draw from the stream keyed by (round, level, slot).

    The same (seed, i, j, l) always yields the same value, independent of
    any other draws made elsewhere.
    """
    bg = np.random.Philox(
        key=_as_u64(seed),
        counter=[_as_u64(round_i), _as_u64(level_j), _as_u64(slot_l), 0],
    )
    return float(np.random.Generator(bg).random())


def substream(seed: int, *key_parts: int) -> np.random.Generator:
    """A Generator derived deterministically from seed and integer key parts.

    Used for samplers and for the per-(size, replicate, variant) experiment
    cells; distinct key tuples give statistically independent streams.
    """
    entropy = [_as_u64(seed)] + [_as_u64(p) for p in key_parts]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *key_parts: int) -> int:
    """Collapse (seed, key parts) into a single 64-bit seed."""
    entropy = [_as_u64(seed)] + [_as_u64(p) for p in key_parts]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])
