from collections import Counter

from lsreopt.rng import Stream, stream_key


def test_same_path_same_draws():
    a = Stream(42, "demand", 3)
    b = Stream(42, "demand", 3)
    assert [a.next_raw() for _ in range(10)] == [b.next_raw() for _ in range(10)]


def test_streams_are_independent_of_draw_order():
    s1 = Stream(7, "alpha")
    _ = [s1.uniform() for _ in range(100)]
    first = Stream(7, "beta").uniform()
    fresh = Stream(7, "beta").uniform()
    assert first == fresh


def test_different_paths_differ():
    assert stream_key(1, "a") != stream_key(1, "b")
    assert stream_key(1, "a", 0) != stream_key(1, "a", 1)
    assert stream_key(1, "a") != stream_key(2, "a")


def test_uniform_range_and_mean():
    s = Stream(3, "u")
    xs = [s.uniform(2.0, 5.0) for _ in range(20000)]
    assert all(2.0 <= x < 5.0 for x in xs)
    mean = sum(xs) / len(xs)
    assert abs(mean - 3.5) < 0.05


def test_randint_bounds_and_coverage():
    s = Stream(9, "ints")
    counts = Counter(s.randint(0, 4) for _ in range(5000))
    assert set(counts) == {0, 1, 2, 3, 4}
    assert min(counts.values()) > 800


def test_choice_and_shuffle_deterministic():
    s1, s2 = Stream(1, "pick"), Stream(1, "pick")
    seq = list(range(20))
    assert [s1.choice(seq) for _ in range(50)] == [s2.choice(seq) for _ in range(50)]
    a = Stream(4, "mix").shuffle(list(range(30)))
    b = Stream(4, "mix").shuffle(list(range(30)))
    assert a == b and sorted(a) == list(range(30))


def test_known_values_are_stable():
    # frozen draws guard against accidental algorithm changes
    s = Stream(123, "stability")
    assert [s.next_raw() for _ in range(3)] == [
        18405081895061564439,
        9155938920158048160,
        18130781806389676471,
    ]
