import numpy as np

from nearpg import rng


class TestDerivation:
    def test_same_keys_same_seed(self):
        assert rng.derive_seed(7, 1, 2) == rng.derive_seed(7, 1, 2)

    def test_keys_separate_streams(self):
        seeds = {rng.derive_seed(7, tag) for tag in range(12)}
        assert len(seeds) == 12

    def test_large_seed_accepted(self):
        assert 0 <= rng.derive_seed(2 ** 64 - 1) < 2 ** 64


class TestNormalRows:
    def test_rows_independent_of_request_window(self):
        full = rng.normal_rows(5, 0, 3 * rng.CHUNK_ROWS, (2,))
        part = rng.normal_rows(5, rng.CHUNK_ROWS - 3, 10, (2,))
        np.testing.assert_array_equal(part, full[rng.CHUNK_ROWS - 3: rng.CHUNK_ROWS + 7])

    def test_single_row_matches_batch(self):
        full = rng.normal_rows(9, 0, 100, (3, 2))
        np.testing.assert_array_equal(rng.normal_rows(9, 42, 1, (3, 2))[0], full[42])

    def test_zero_count(self):
        assert rng.normal_rows(1, 10, 0, (2,)).shape == (0, 2)


def test_unit_vectors_have_unit_norm():
    v = rng.unit_vectors(3, 0, 500, 7)
    np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0, rtol=1e-14)
