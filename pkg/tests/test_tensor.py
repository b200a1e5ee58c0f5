import numpy as np
import pytest

from spmix.errors import UsageError
from spmix.tensor import Rng, as_batch, fnv1a64, matvec, resolve_dtype, splitmix_next


def _splitmix64_reference(seed, count):
    # straight-line integer version of the published algorithm
    mask = (1 << 64) - 1
    state, out = seed, []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        out.append(z ^ (z >> 31))
    return out


def test_splitmix_known_first_output():
    assert int(Rng(0).next_u64(1)[0]) == 0xE220A8397B1DCDAF


@pytest.mark.parametrize("seed", [0, 1, 42, 2**64 - 1])
def test_splitmix_matches_integer_reference(seed):
    r = Rng(seed)
    got = list(r.next_u64(5)) + list(r.next_u64(3))
    assert [int(v) for v in got] == _splitmix64_reference(seed, 8)


def test_fnv1a_vectors():
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_same_seed_same_draws():
    a, b = Rng(1), Rng(1)
    assert splitmix_next(a) == splitmix_next(b)
    assert splitmix_next(a) == splitmix_next(b)


def test_different_seeds_differ():
    assert splitmix_next(Rng(1)) != splitmix_next(Rng(2))


def test_uniform_mean():
    u = Rng(7).random(100_000)
    assert abs(u.mean() - 0.5) < 0.01
    assert u.min() >= 0.0 and u.max() < 1.0


def test_normal_moments():
    z = Rng(3).normal(200_000)
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1) < 0.01


def test_permutation_and_integers():
    p = Rng(5).permutation(100)
    assert sorted(p.tolist()) == list(range(100))
    k = Rng(5).integers(7, 10_000)
    assert k.min() == 0 and k.max() == 6


def test_spawn_is_independent_of_parent_progress():
    a = Rng(9)
    child1 = a.spawn("x").random(3)
    a.random(10)
    assert np.array_equal(a.spawn("x").random(3), child1)
    assert not np.array_equal(a.spawn("y").random(3), child1)


def test_matvec_examples():
    assert np.array_equal(matvec(np.eye(3), np.array([1.0, 2, 3])), [1, 2, 3])
    assert np.array_equal(matvec(np.zeros((2, 2)), np.array([5.0, 7])), [0, 0])
    assert np.array_equal(matvec(np.array([[1.0, 2], [3, 4]]), np.array([1.0, 1])), [3, 7])


@pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-6), (np.float64, 1e-12)])
def test_matvec_linear(dtype, tol, rng):
    M = rng.normal(size=(6, 6)).astype(dtype)
    u, v = rng.normal(size=6).astype(dtype), rng.normal(size=6).astype(dtype)
    a, b = dtype(0.7), dtype(-1.3)
    lhs = matvec(M, a * u + b * v)
    rhs = a * matvec(M, u) + b * matvec(M, v)
    assert np.abs(lhs - rhs).max() <= tol * np.abs(rhs).max() * 10


def test_matvec_shape_error():
    with pytest.raises(UsageError):
        matvec(np.eye(3), np.ones(2))


def test_resolve_dtype():
    assert resolve_dtype("float32") == np.float32
    assert resolve_dtype("64") == np.float64
    with pytest.raises(UsageError):
        resolve_dtype("float16")


def test_as_batch():
    assert as_batch([[1, 2]], 2, np.float64).dtype == np.float64
    with pytest.raises(UsageError):
        as_batch(np.ones(3), 3, np.float64)
