import numpy as np
import pytest

from sasoftmax.core import IdentityPrototypeMatrix, ModalityPrototypeMatrix, rewrite_labels_batch


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_instance(seed, b=6, d=4, n=3):
    """Random embeddings, prototype heads and rewritten labels for loss tests."""
    r = np.random.default_rng(seed)
    x = r.normal(size=(b, d))
    w_mod = ModalityPrototypeMatrix(r.normal(size=(d, 2 * n)))
    w_id = IdentityPrototypeMatrix(r.normal(size=(d, n)))
    ids = r.integers(0, n, size=b)
    mods = r.integers(0, 2, size=b)
    y_w, y_f = rewrite_labels_batch(ids, mods, n)
    return x, w_mod, w_id, ids, mods, y_w, y_f
