import numpy as np
import pytest

from tntz import (
    ChecksumError,
    CPMatrix,
    MagicError,
    SizeError,
    TTMatrix,
    full,
    load,
    random_blended,
    random_cp,
    random_tt,
    random_tucker,
    save,
)
from tntz.serialization import read_dense, read_header, write_dense


def assert_bit_exact(a, b):
    assert type(a) is type(b)
    if hasattr(a, "nodes"):
        assert a.batch_size == b.batch_size
        for na, nb in zip(a.nodes, b.nodes):
            assert na.kind == nb.kind
            assert np.array_equal(na.core, nb.core)
            assert (na.factor is None) == (nb.factor is None)
            if na.factor is not None:
                assert np.array_equal(na.factor, nb.factor)
    elif hasattr(a, "cores"):
        for ca, cb in zip(a.cores, b.cores):
            assert np.array_equal(ca, cb)
    else:
        for fa, fb in zip(a.factors, b.factors):
            assert np.array_equal(fa, fb)


FIXTURES = [
    lambda: random_tt((3, 4, 5), (2, 3), seed=0),
    lambda: random_cp((4, 4), 3, seed=1),
    lambda: random_tucker((5, 4, 6), (2, 3, 2), (2, 2), seed=2),
    lambda: random_blended((3, 4, 3, 2), seed=3),
    lambda: random_tt((3, 4), 2, seed=4, batch_size=6),
    lambda: random_cp((3, 5), 2, seed=5, batch_size=2),
]


class TestContainerRoundTrip:
    @pytest.mark.parametrize("make", FIXTURES)
    def test_tensor_round_trip_bit_exact(self, make, tmp_path):
        t = make()
        path = tmp_path / "t.tntz"
        save(t, path)
        assert_bit_exact(t, load(path))

    def test_batched_round_trip_preserves_batch(self, tmp_path):
        t = random_tt((3, 4), 2, seed=7, batch_size=5)
        path = tmp_path / "b.tntz"
        save(t, path)
        back = load(path)
        assert back.batch_size == 5
        assert np.array_equal(full(t), full(back))

    def test_tt_matrix_round_trip(self, tmp_path):
        rng = np.random.default_rng(8)
        cores = [rng.standard_normal((1, 2, 3, 4)), rng.standard_normal((4, 3, 2, 1))]
        a = TTMatrix(cores, (2, 3), (3, 2))
        path = tmp_path / "m.tntz"
        save(a, path)
        assert_bit_exact(a, load(path))

    def test_cp_matrix_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        c = CPMatrix([rng.standard_normal((2, 3, 4)), rng.standard_normal((3, 2, 4))],
                     (2, 3), (3, 2))
        path = tmp_path / "c.tntz"
        save(c, path)
        assert_bit_exact(c, load(path))


class TestContainerErrors:
    def _saved(self, tmp_path):
        path = tmp_path / "x.tntz"
        save(random_tt((3, 4), 2, seed=10), path)
        return path

    def test_bad_magic(self, tmp_path):
        path = self._saved(tmp_path)
        data = bytearray(path.read_bytes())
        data[:5] = b"NOPE!"
        path.write_bytes(bytes(data))
        with pytest.raises(MagicError):
            load(path)

    def test_truncated_payload_is_size_error(self, tmp_path):
        path = self._saved(tmp_path)
        data = path.read_bytes()
        path.write_bytes(data[:-16])
        with pytest.raises(SizeError):
            load(path)

    def test_corrupted_payload_is_checksum_error(self, tmp_path):
        path = self._saved(tmp_path)
        data = bytearray(path.read_bytes())
        data[-8:] = b"\x00" * 8  # same length, different bytes
        path.write_bytes(bytes(data))
        with pytest.raises(ChecksumError):
            load(path)

    def test_header_reports_fields(self, tmp_path):
        path = self._saved(tmp_path)
        header = read_header(path)
        assert header["kind"] == "tensor"
        assert header["num_modes"] == 2
        assert header["rank_chain"] == [1, 2, 1]
        assert header["physical_shape"] == [3, 4]


class TestDenseFiles:
    def test_round_trip(self, tmp_path):
        x = np.random.default_rng(11).standard_normal((3, 4, 5))
        path = tmp_path / "x.raw"
        write_dense(x, path)
        assert np.array_equal(read_dense(path, (3, 4, 5)), x)

    def test_length_mismatch(self, tmp_path):
        path = tmp_path / "y.raw"
        write_dense(np.ones(10), path)
        with pytest.raises(SizeError):
            read_dense(path, (3, 4))
