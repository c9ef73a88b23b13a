import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmaccess.rm_core import (
    Layer,
    RmPair,
    capacity,
    extract_layer,
    generate_sequence,
    generate_sequence_quaternary_oracle,
    gf2_rank,
    id_to_layers,
    id_to_pair,
    inner_product,
    layers_to_id,
    nested_compose,
    pair_to_id,
    sequences_from_layers,
    walsh_row,
)


def brute_chips(P, b):
    """Independent oracle: loop over indices, read bits with string formatting."""
    m = len(b)
    out = []
    for j in range(2**m):
        a = [int(ch) for ch in format(j, f"0{m}b")]
        e = sum(b[i] * a[i] for i in range(m))
        e += sum(P[i][k] * a[i] * a[k] for i in range(m) for k in range(i + 1, m))
        out.append(-1 if e % 2 else 1)
    return out


def brute_pair(user_id, m):
    """Hand-rolled version of the mapping rule for cross-checking."""
    bits = [int(ch) for ch in format(user_id, f"0{m * (m - 1) // 2}b")]
    P = [[0] * m for _ in range(m)]
    it = iter(bits)
    for i in range(m):
        for k in range(i + 1, m):
            P[i][k] = P[k][i] = next(it)
    b = [sum(P[i][i + 1 :]) % 2 for i in range(m - 1)]
    b.append(sum(b) % 2)
    return P, b


class TestMapping:
    def test_zero_id(self):
        pair = id_to_pair(0, 3)
        assert not pair.P.any() and not pair.b.any()

    def test_id7_m3(self):
        pair = id_to_pair(7, 3)
        assert pair.P.tolist() == [[0, 1, 1], [1, 0, 1], [1, 1, 0]]
        assert pair.b.tolist() == [0, 1, 1]

    def test_max_id_m8_even_weight(self):
        pair = id_to_pair(2**28 - 1, 8)
        assert pair.b.sum() % 2 == 0
        P, b = brute_pair(2**28 - 1, 8)
        assert pair.b.tolist() == b

    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_roundtrip_exhaustive(self, m):
        for d in range(capacity(m)):
            pair = id_to_pair(d, m)
            P, b = brute_pair(d, m)
            assert pair.P.tolist() == P and pair.b.tolist() == b
            assert pair_to_id(pair) == d

    @pytest.mark.parametrize("m", range(5, 11))
    def test_roundtrip_random(self, m):
        rng = np.random.default_rng(m)
        for d in rng.integers(0, capacity(m), size=2000):
            d = int(d)
            pair = id_to_pair(d, m)
            assert pair_to_id(pair) == d
            assert pair.b.sum() % 2 == 0

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            id_to_pair(8, 3)
        with pytest.raises(ValueError):
            id_to_pair(-1, 3)
        with pytest.raises(ValueError):
            id_to_pair(0, 1)

    def test_flipped_b1_rejected(self):
        pair = id_to_pair(12345, 6)
        b = pair.b.copy()
        b[-1] ^= 1
        with pytest.raises(ValueError, match="b_1"):
            pair_to_id(RmPair(pair.P, b))

    def test_asymmetric_rejected(self):
        P = np.zeros((3, 3), dtype=np.uint8)
        P[0, 1] = 1
        with pytest.raises(ValueError, match="symmetric"):
            RmPair(P, np.zeros(3)).validate()

    def test_diagonal_rejected(self):
        P = np.eye(3, dtype=np.uint8)
        with pytest.raises(ValueError, match="diagonal"):
            RmPair(P, np.zeros(3)).validate()

    def test_non_binary_rejected(self):
        P = np.zeros((3, 3))
        P[0, 1] = P[1, 0] = 2
        with pytest.raises(ValueError, match="binary"):
            RmPair(P, np.zeros(3)).validate()

    def test_layer_indices_concatenate(self):
        rng = np.random.default_rng(1)
        for m in range(2, 11):
            for d in rng.integers(0, capacity(m), size=50):
                layers = id_to_layers(int(d), m)
                assert layers_to_id(layers) == d
                pair = id_to_pair(int(d), m)
                for s, w in zip(range(m, 1, -1), layers):
                    assert extract_layer(pair, s).index == w

    @settings(max_examples=200, deadline=None)
    @given(st.integers(3, 10), st.data())
    def test_equal_top_layer_gives_equal_b_m(self, m, data):
        low_bits = (m - 1) * (m - 2) // 2
        top = data.draw(st.integers(0, 2 ** (m - 1) - 1))
        lo1 = data.draw(st.integers(0, 2**low_bits - 1))
        lo2 = data.draw(st.integers(0, 2**low_bits - 1))
        p1 = id_to_pair((top << low_bits) | lo1, m)
        p2 = id_to_pair((top << low_bits) | lo2, m)
        assert extract_layer(p1, m) == extract_layer(p2, m)
        assert p1.b[0] == p2.b[0]


class TestSequences:
    def test_m2_zero(self):
        assert generate_sequence(id_to_pair(0, 2)).tolist() == [1, 1, 1, 1]

    def test_m2_one(self):
        pair = RmPair([[0, 1], [1, 0]], [1, 1])
        assert generate_sequence(pair).tolist() == [1, -1, -1, -1]

    def test_id7_m3(self):
        assert generate_sequence(id_to_pair(7, 3)).tolist() == [1, -1, -1, -1, 1, 1, 1, -1]

    @pytest.mark.parametrize("m", [2, 3, 4, 5])
    def test_matches_brute_force(self, m):
        ids = range(capacity(m)) if m <= 4 else np.random.default_rng(0).integers(0, capacity(m), 200)
        for d in ids:
            P, b = brute_pair(int(d), m)
            assert generate_sequence(id_to_pair(int(d), m)).tolist() == brute_chips(P, b)

    def test_first_chip_is_one(self):
        rng = np.random.default_rng(3)
        for m in range(2, 11):
            for d in rng.integers(0, capacity(m), 20):
                assert generate_sequence(id_to_pair(int(d), m))[0] == 1

    def test_quaternary_oracle_examples(self):
        np.testing.assert_allclose(generate_sequence_quaternary_oracle(id_to_pair(0, 2)), [0.5] * 4)
        pair = RmPair([[0, 1], [1, 0]], [1, 1])
        np.testing.assert_allclose(generate_sequence_quaternary_oracle(pair), [0.5, -0.5, -0.5, -0.5])

    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_quaternary_oracle_exhaustive(self, m):
        for d in range(capacity(m)):
            pair = id_to_pair(d, m)
            q = generate_sequence_quaternary_oracle(pair)
            assert np.all(q.imag == 0)
            np.testing.assert_allclose(q.real, generate_sequence(pair) / np.sqrt(2.0**m), atol=1e-15)

    def test_batched_layers_match_direct(self):
        rng = np.random.default_rng(5)
        for m in range(2, 11):
            ids = [int(d) for d in rng.integers(0, capacity(m), 30)]
            batch = sequences_from_layers([id_to_layers(d, m) for d in ids])
            for d, row in zip(ids, batch):
                assert np.array_equal(row, generate_sequence(id_to_pair(d, m)))


class TestLayers:
    def test_extract_layer_id7(self):
        pair = id_to_pair(7, 3)
        assert extract_layer(pair, 3) == Layer(3, [1, 1], 0)
        assert extract_layer(pair, 2) == Layer(2, [1], 1)

    def test_extract_top_layer_is_first_row(self):
        pair = id_to_pair(0xBEEF, 7)
        assert extract_layer(pair, 7).alpha.tolist() == pair.P[0, 1:].tolist()

    def test_extract_layer_range(self):
        with pytest.raises(ValueError):
            extract_layer(id_to_pair(1, 3), 1)
        with pytest.raises(ValueError):
            extract_layer(id_to_pair(1, 3), 4)

    def test_layer_parity_enforced(self):
        with pytest.raises(ValueError):
            Layer(3, [1, 0], 0)

    def test_walsh_row_zero(self):
        assert walsh_row(Layer(4, [0, 0, 0], 0)).tolist() == [1] * 8

    def test_walsh_row_s2(self):
        assert walsh_row(Layer(2, [1], 1)).tolist() == [-1, 1]

    @pytest.mark.parametrize("s", [2, 3, 4, 5])
    def test_walsh_row_two_forms(self, s):
        # (-1)^(alpha . not a) equals (-1)^b_s (-1)^(alpha . a)
        for w in range(2 ** (s - 1)):
            layer = Layer.from_index(s, w)
            alt = []
            for j in range(2 ** (s - 1)):
                a = [int(ch) for ch in format(j, f"0{s - 1}b")]
                alt.append((-1) ** (layer.b_s + int(np.dot(layer.alpha, a))))
            assert walsh_row(layer).tolist() == alt


class TestNested:
    def test_compose_example(self):
        out = nested_compose(np.array([1, -1]), np.array([-1, 1]))
        assert out.tolist() == generate_sequence(id_to_pair(1, 2)).tolist() == [1, -1, -1, -1]

    def test_compose_all_ones_repeats(self):
        half = np.array([1, -1, 1, 1])
        assert nested_compose(half, np.ones(4)).tolist() == [1, -1, 1, 1] * 2

    def test_compose_length_mismatch(self):
        with pytest.raises(ValueError):
            nested_compose(np.ones(4), np.ones(2))

    @pytest.mark.parametrize("m", range(2, 11))
    def test_theorem_recursion(self, m):
        rng = np.random.default_rng(100 + m)
        for d in rng.integers(0, capacity(m), 100):
            pair = id_to_pair(int(d), m)
            c = np.array([1, -1 if pair.b[-1] else 1])
            for s in range(2, m + 1):
                c = nested_compose(c, walsh_row(extract_layer(pair, s)))
                # the order-s sub-pair is the lower-right block
                sub = RmPair(pair.P[m - s :, m - s :], pair.b[m - s :])
                assert np.array_equal(c, generate_sequence(sub))
            assert np.array_equal(c, generate_sequence(pair))


class TestInnerProducts:
    def test_self(self):
        c = generate_sequence(id_to_pair(77, 5))
        assert inner_product(c, c) == 32

    def test_id0_vs_id7(self):
        c0 = generate_sequence(id_to_pair(0, 3))
        c7 = generate_sequence(id_to_pair(7, 3))
        assert inner_product(c0, c7) == 0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            inner_product(np.ones(4), np.ones(8))

    @pytest.mark.parametrize("m", [3, 4])
    def test_rank_law(self, m):
        seqs = {d: generate_sequence(id_to_pair(d, m)) for d in range(capacity(m))}
        for d1, d2 in itertools.combinations(range(capacity(m)), 2):
            diff = id_to_pair(d1, m).P ^ id_to_pair(d2, m).P
            r = gf2_rank(diff)
            assert r % 2 == 0
            chi = abs(inner_product(seqs[d1], seqs[d2]))
            assert chi in (0, 2 ** (m - r // 2))

    def test_gf2_rank(self):
        assert gf2_rank([[1, 1], [1, 1]]) == 1
        assert gf2_rank(np.eye(5)) == 5
        assert gf2_rank([[0, 1, 1], [1, 0, 1], [1, 1, 0]]) == 2
