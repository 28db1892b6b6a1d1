import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from localprop.attention import attention_mask
from localprop.io import FeatureStore, FormatError, dumps, loads, read_store, synth_generate, write_store


@st.composite
def stores(draw):
    w, h, d = draw(st.integers(1, 3)), draw(st.integers(1, 3)), draw(st.integers(1, 4))
    n_classes = draw(st.integers(1, 3))
    names = draw(st.lists(st.text(max_size=6), min_size=n_classes, max_size=n_classes))
    floats = st.floats(-1e6, 1e6, width=32, allow_nan=False)
    blocks = [draw(hnp.arrays(np.float32, (draw(st.integers(0, 3)), w, h, d), elements=floats))
              for _ in range(n_classes)]
    return FeatureStore(names, blocks)


class TestFormat:
    @settings(max_examples=50, deadline=None)
    @given(stores())
    def test_round_trip(self, store):
        assert loads(dumps(store)) == store

    def test_file_round_trip(self, tmp_path, small_store):
        path = tmp_path / "s.lpf"
        write_store(small_store, path)
        back = read_store(path)
        assert back == small_store
        for a, b in zip(back.tensors, small_store.tensors):
            assert a.tobytes() == b.tobytes()

    def test_layout(self):
        store = FeatureStore(["ab"], [np.arange(4, dtype=np.float32).reshape(1, 2, 1, 2)])
        buf = dumps(store)
        assert buf[:4] == b"LPF1"
        assert struct.unpack("<5i", buf[4:24]) == (1, 2, 1, 2, 1)
        assert struct.unpack("<i", buf[24:28]) == (2,)
        assert buf[28:30] == b"ab"
        assert struct.unpack("<i", buf[30:34]) == (1,)
        assert np.frombuffer(buf[34:], "<f4").tolist() == [0, 1, 2, 3]

    def test_truncated(self, small_store):
        buf = dumps(small_store)
        for cut in (2, 10, 30, len(buf) - 1):
            with pytest.raises(FormatError) as info:
                loads(buf[:cut])
            assert info.value.offset is not None

    def test_bad_magic(self, small_store):
        with pytest.raises(FormatError) as info:
            loads(b"XXXX" + dumps(small_store)[4:])
        assert info.value.offset == 0

    def test_bad_version(self, small_store):
        buf = bytearray(dumps(small_store))
        buf[4:8] = struct.pack("<i", 2)
        with pytest.raises(FormatError, match="version"):
            loads(bytes(buf))

    def test_trailing_bytes(self, small_store):
        with pytest.raises(FormatError, match="trailing"):
            loads(dumps(small_store) + b"\0")

    def test_empty_class_list(self):
        with pytest.raises(FormatError):
            FeatureStore([], [])

    def test_shape_mismatch(self):
        with pytest.raises(FormatError):
            FeatureStore(["a", "b"], [np.zeros((1, 2, 2, 3)), np.zeros((1, 2, 2, 4))])

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            read_store(tmp_path / "nope.lpf")


class TestSynth:
    def test_deterministic(self):
        a = synth_generate(3, 4, 3, 3, 8, 0.5, 0.4, seed=7)
        b = synth_generate(3, 4, 3, 3, 8, 0.5, 0.4, seed=7)
        assert dumps(a) == dumps(b)
        assert dumps(a) != dumps(synth_generate(3, 4, 3, 3, 8, 0.5, 0.4, seed=8))

    def test_shape(self):
        store = synth_generate(3, 4, 2, 5, 8, 0.5, 0.4)
        assert store.shape == (2, 5, 8) and store.counts == [4, 4, 4]

    def test_no_clutter_keeps_everything(self):
        store = synth_generate(3, 4, 3, 3, 8, 0.0, 0.0)
        for c in range(3):
            for i in range(4):
                t = store.tensor(c, i)
                np.testing.assert_allclose(np.linalg.norm(t.positions(), axis=1), 1.0, atol=1e-6)
                assert attention_mask(t.positions(), 0.3).all()

    def test_clutter_is_removed(self):
        store = synth_generate(3, 4, 4, 4, 8, 0.5, 0.6)
        for c in range(3):
            for i in range(4):
                t = store.tensor(c, i)
                norms = np.linalg.norm(t.positions(), axis=1)
                mask = attention_mask(t.positions(), 0.3)
                assert mask.sum() == 8
                np.testing.assert_allclose(norms[~mask], 0.25, atol=1e-6)

    def test_noise_free_images_lie_on_class_plane(self):
        store = synth_generate(2, 5, 2, 2, 12, 0.0, 0.0, local_spread=0.0)
        for c in range(2):
            rows = store.tensors[c].reshape(-1, 12).astype(np.float64)
            # direction plus a 2-d offset: rows span at most 3 dimensions
            assert np.linalg.matrix_rank(rows, tol=1e-5) <= 3

    @pytest.mark.parametrize("kwargs", [dict(d=3), dict(clutter_fraction=1.0), dict(clutter_fraction=-0.1),
                                        dict(noise=-1.0), dict(classes=0)])
    def test_invalid(self, kwargs):
        args = dict(classes=2, images_per_class=2, w=2, h=2, d=8, clutter_fraction=0.5, noise=0.1)
        args.update(kwargs)
        with pytest.raises(ValueError):
            synth_generate(**args)
