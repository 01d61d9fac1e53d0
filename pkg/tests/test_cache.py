import numpy as np
import pytest

from iitnet.cache import MAGIC, CacheFormatError, cache_name, read_cache, read_cache_dir, write_cache
from iitnet.ingest import EpochArray


def _array():
    rng = np.random.default_rng(0)
    return EpochArray(rng.normal(size=(4, 30)).astype(np.float32), np.array([0, 2, 3, 4], dtype=np.uint8),
                      np.array([0, 1, 5, 6]), "SC400", "SC4001E0-PSG", 1.0)


def test_round_trip(tmp_path):
    arr = _array()
    path = write_cache(tmp_path / cache_name(arr, "ab" * 32), arr, "ab" * 32)
    back = read_cache(path)
    np.testing.assert_array_equal(back.samples, arr.samples)
    np.testing.assert_array_equal(back.labels, arr.labels)
    np.testing.assert_array_equal(back.positions, arr.positions)
    assert (back.subject_id, back.recording_id, back.sample_rate) == ("SC400", "SC4001E0-PSG", 1.0)
    assert path.read_bytes()[:4] == MAGIC
    assert [a.recording_id for a in read_cache_dir(tmp_path)] == ["SC4001E0-PSG"]


def test_corruption_detected(tmp_path):
    path = write_cache(tmp_path / "x.iitc", _array())
    raw = path.read_bytes()
    (tmp_path / "short.iitc").write_bytes(raw[:-4])
    with pytest.raises(CacheFormatError):
        read_cache(tmp_path / "short.iitc")
    (tmp_path / "magic.iitc").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(CacheFormatError):
        read_cache(tmp_path / "magic.iitc")
    (tmp_path / "ver.iitc").write_bytes(raw[:4] + b"\x09" + raw[5:])
    with pytest.raises(CacheFormatError, match="version"):
        read_cache(tmp_path / "ver.iitc")
