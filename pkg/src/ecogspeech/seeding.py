"""Per-stage seed derivation.

All randomness in a run flows from one integer seed. A stage seed is the
first 8 bytes of ``sha256("<seed>/<name1>/<name2>...")`` read as a
big-endian unsigned integer, so any stage can be rerun on its own.
"""

import hashlib


def derive_seed(seed, *names):
    key = "/".join([str(int(seed))] + [str(n) for n in names])
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big")
