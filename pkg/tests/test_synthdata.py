import gzip

import numpy as np
import pytest

from sgan.rng import Rng
from sgan.synthdata import (IDXFormatError, MixtureSpec, load_idx, make_ring_mixture, normalize_pixels,
                            sample_real, write_idx)


def test_ring_geometry():
    spec = make_ring_mixture(8, radius=2.0, std=0.02)
    assert spec.k == 8
    assert np.allclose(np.linalg.norm(spec.centers, axis=1), 2.0)
    assert np.array_equal(spec.centers[2], [0.0, 2.0])
    assert np.allclose(spec.weights, 1 / 8)


def test_mixture_validation():
    with pytest.raises(ValueError):
        MixtureSpec(np.zeros((2, 2)), 0.0, np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        MixtureSpec(np.zeros((2, 2)), 0.1, np.array([0.7, 0.7]))
    spec = make_ring_mixture()
    back = MixtureSpec.from_dict(spec.to_dict())
    assert np.array_equal(back.centers, spec.centers) and back.std == spec.std


def test_samples_stay_near_their_mode():
    spec = make_ring_mixture()
    pts, modes = sample_real(spec, 20_000, Rng(0), return_modes=True)
    resid = pts - spec.centers[modes]
    assert abs(resid.std() - spec.std) < 2e-4
    assert np.allclose(np.bincount(modes, minlength=8) / 20_000, 1 / 8, atol=0.01)


def test_normalize_pixels_endpoints():
    assert np.allclose(normalize_pixels([0, 255, 127.5]), [-1.0, 1.0, 0.0])


@pytest.mark.parametrize("compress", [False, True])
def test_idx_roundtrip(tmp_path, compress):
    imgs = (np.arange(3 * 4 * 5) % 256).astype(np.uint8).reshape(3, 4, 5)
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    write_idx(imgs, ip, labels=[1, 2, 3], labels_path=lp, compress=compress)
    ds = load_idx(ip, lp)
    assert len(ds) == 3 and ds.images.shape == (3, 20)
    assert np.allclose(ds.images, normalize_pixels(imgs.reshape(3, 20)))
    assert ds.labels.tolist() == [1, 2, 3]
    assert ds.meta["rows"] == 4


def test_idx_bad_magic(tmp_path):
    p = tmp_path / "x.idx"
    write_idx(np.zeros((1, 2, 2), np.uint8), p)
    with pytest.raises(IDXFormatError, match="magic"):
        load_idx(tmp_path / "x.idx", labels_path=p)


def test_idx_truncated(tmp_path):
    p = tmp_path / "x.idx"
    write_idx(np.zeros((2, 3, 3), np.uint8), p)
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(IDXFormatError, match="truncated"):
        load_idx(p)
    p.write_bytes(b"\x00\x00")
    with pytest.raises(IDXFormatError, match="header"):
        load_idx(p)


def test_idx_count_mismatch(tmp_path):
    ip, lp = tmp_path / "i", tmp_path / "l"
    write_idx(np.zeros((2, 2, 2), np.uint8), ip, labels=[0, 1, 2], labels_path=lp)
    with pytest.raises(IDXFormatError, match="count mismatch"):
        load_idx(ip, lp)


def test_gzip_detected_by_content(tmp_path):
    imgs = np.full((1, 2, 2), 255, np.uint8)
    raw = tmp_path / "raw"
    write_idx(imgs, raw)
    gz = tmp_path / "no_suffix"
    gz.write_bytes(gzip.compress(raw.read_bytes()))
    assert np.array_equal(load_idx(gz).images, load_idx(raw).images)


def test_dataset_subset_and_sample(tmp_path):
    ip = tmp_path / "i"
    write_idx(np.arange(10, dtype=np.uint8).repeat(4).reshape(10, 2, 2), ip)
    ds = load_idx(ip).subset(4)
    assert len(ds) == 4
    batch = ds.sample(50, Rng(0))
    assert batch.shape == (50, 4)
    assert set(np.unique(batch[:, 0])) <= set(ds.images[:, 0])
