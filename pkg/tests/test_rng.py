import numpy as np

from ffcnet.rng import derive_rng


def test_same_path_same_stream():
    a = derive_rng(42, "init", "stem.conv").standard_normal(8)
    b = derive_rng(42, "init", "stem.conv").standard_normal(8)
    assert np.array_equal(a, b)


def test_different_names_decorrelate():
    a = derive_rng(42, "init", "stem.conv").standard_normal(1000)
    b = derive_rng(42, "init", "head.linear").standard_normal(1000)
    assert not np.array_equal(a, b)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.1


def test_different_seeds_decorrelate():
    a = derive_rng(1, "psm", 0, 5).standard_normal(1000)
    b = derive_rng(2, "psm", 0, 5).standard_normal(1000)
    assert not np.array_equal(a, b)


def test_integer_path_elements():
    a = derive_rng(7, "augment", 3, 11).random()
    b = derive_rng(7, "augment", 3, 11).random()
    c = derive_rng(7, "augment", 3, 12).random()
    assert a == b
    assert a != c


def test_large_seed_accepted():
    r = derive_rng(2**63 + 17, "split", "class_0")
    assert 0.0 <= r.random() < 1.0
