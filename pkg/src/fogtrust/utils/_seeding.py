import numpy as np


def derive_seed(seed: int, *keys: int | str) -> int:
    """
    Derive an independent 32-bit seed from a root seed and a path of keys.

    String keys are folded to integers through their UTF-8 bytes, so
    ``derive_seed(1, "train", 3)`` is stable across processes and platforms.

    :param seed: root seed
    :param keys: path identifying the consumer (e.g. "workload", stream index)
    :return: a seed for ``numpy.random.default_rng``
    """
    entropy = [seed, *(_fold(k) for k in keys)]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def make_rng(seed: int, *keys: int | str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))


def _fold(key: int | str) -> int:
    match key:
        case int():
            return key
        case str():
            return int.from_bytes(key.encode("utf-8"), "little")
        case _:
            raise TypeError(f"Expected int or str seed key, got {type(key)}")
