import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import demosaic_loop
from orbit_llie.errors import ContractError, DataError
from orbit_llie.imaging import (
    BayerImage,
    ImagePair,
    ManifestEntry,
    augment,
    center_crop,
    decode_netpbm,
    demosaic_bilinear,
    encode_netpbm,
    load_pairs,
    mosaic,
    read_image,
    read_manifest,
    rgb_to_gray,
    save_float,
    write_image,
    write_manifest,
)

# (i*4 + j)^2 on a 4x4 RGGB tile, 8-bit.
SQUARES = (np.arange(16).reshape(4, 4) ** 2).astype(np.uint16)


def test_demosaic_constant():
    rgb = demosaic_bilinear(BayerImage(np.full((6, 8), 1000, dtype=np.uint16), 12))
    np.testing.assert_array_equal(rgb, np.full((6, 8, 3), 1000 / 4095))


def test_demosaic_hand_values():
    rgb = demosaic_bilinear(BayerImage(SQUARES, 8)) * 255
    # blue site (1,1)
    np.testing.assert_array_equal(rgb[1, 1], [42.0, 33.5, 25.0])
    # green site on a blue row (1,2)
    np.testing.assert_array_equal(rgb[1, 2], [52.0, 36.0, 37.0])
    # green site on a red row (2,1)
    np.testing.assert_array_equal(rgb[2, 1], [82.0, 81.0, 97.0])
    # red site (2,2)
    np.testing.assert_array_equal(rgb[2, 2], [100.0, 108.5, 117.0])
    # reflective border at the red corner
    np.testing.assert_array_equal(rgb[0, 0], [0.0, 8.5, 25.0])


def test_demosaic_odd_dims_rejected():
    with pytest.raises(ContractError):
        BayerImage(np.zeros((5, 4), dtype=np.uint16))


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    h=st.sampled_from([4, 6, 10]),
    w=st.sampled_from([4, 8, 12]),
    offset=st.sampled_from([(0, 0), (0, 1), (1, 0), (1, 1)]),
)
def test_demosaic_matches_loop_oracle(seed, h, w, offset):
    vals = np.random.default_rng(seed).integers(0, 4096, size=(h, w)).astype(np.uint16)
    got = demosaic_bilinear(BayerImage(vals, 12, offset))
    ref = demosaic_loop(vals, 4095, offset)
    assert np.array_equal(got[1:-1, 1:-1], ref[1:-1, 1:-1])


def test_demosaic_border_equals_reflected_interior():
    vals = np.random.default_rng(3).integers(0, 256, size=(6, 6)).astype(np.uint16)
    padded = np.pad(vals, 2, mode="reflect")
    big = demosaic_loop(padded, 255)  # pad=2 keeps RGGB parity
    assert np.array_equal(demosaic_bilinear(BayerImage(vals, 8)), big[2:-2, 2:-2])


def test_mosaic_examples():
    const = mosaic(np.full((4, 4, 3), 0.5), bit_depth=8)
    assert np.all(const.values == 128)
    red = np.zeros((4, 4, 3))
    red[..., 0] = 1.0
    m = mosaic(red, bit_depth=8)
    assert np.all(m.values[::2, ::2] == 255)
    m.values[::2, ::2] = 0
    assert not m.values.any()


def test_mosaic_demosaic_constant_round_trip():
    b = BayerImage(np.full((8, 8), 777, dtype=np.uint16), 10)
    again = mosaic(demosaic_bilinear(b), bit_depth=10)
    assert np.array_equal(again.values, b.values)


def test_demosaic_of_smooth_mosaic():
    yy, xx = np.mgrid[0:32, 0:32] / 31.0
    img = np.stack([0.2 + 0.6 * xx, 0.5 * yy + 0.3 * xx, 0.9 - 0.7 * yy], axis=-1)
    back = demosaic_bilinear(mosaic(img, 16))
    assert np.abs(back - img)[1:-1, 1:-1].max() <= 1 / 255


def test_rgb_to_gray_examples():
    assert rgb_to_gray(np.zeros(3)) == 0.0
    assert rgb_to_gray(np.ones(3)) == 1.0
    assert rgb_to_gray(np.array([0.3, 0.6, 0.9])) == pytest.approx(0.6, abs=1e-15)


def test_center_crop():
    img = np.arange(36).reshape(6, 6)
    assert center_crop(img, 6) is not None and np.array_equal(center_crop(img, 6), img)
    np.testing.assert_array_equal(center_crop(img, 4), img[1:5, 1:5])
    # odd remainder: (7 - 4) // 2 = 1 row on top, 2 at the bottom
    tall = np.arange(7 * 5).reshape(7, 5)
    np.testing.assert_array_equal(center_crop(tall, (4, 2)), tall[1:5, 1:3])
    with pytest.raises(ContractError):
        center_crop(img, 7)


def _pair(rng=np.random.default_rng(0)):
    return ImagePair(rng.random((5, 5)), rng.random((5, 5)))


@pytest.mark.parametrize("op", ["rot180", "flip_h", "flip_v"])
def test_involutions(op):
    p = _pair()
    q = augment(augment(p, op), op)
    assert np.array_equal(q.low, p.low) and np.array_equal(q.high, p.high)


def test_dihedral_relations():
    p = _pair()
    hv = augment(augment(p, "flip_h"), "flip_v")
    assert np.array_equal(hv.low, augment(p, "rot180").low)
    r = p
    for _ in range(4):
        r = augment(r, "rot90")
    assert np.array_equal(r.high, p.high)
    assert np.array_equal(augment(augment(p, "rot90"), "rot270").low, p.low)


def test_rot90_moves_marked_corner():
    img = np.zeros((4, 6))
    img[0, 5] = 1.0  # top-right
    rot = augment(ImagePair(img, img.copy()), "rot90")
    # counter-clockwise: top-right goes to top-left, shape transposes
    assert rot.low.shape == (6, 4)
    assert rot.low[0, 0] == 1.0 and rot.high[0, 0] == 1.0


def test_augment_same_on_both():
    p = _pair()
    q = augment(p, "rot90")
    assert np.array_equal(q.low, np.rot90(p.low)) and np.array_equal(q.high, np.rot90(p.high))


def test_pgm_16bit_round_trip(tmp_path):
    vals = np.random.default_rng(1).integers(0, 65536, size=(7, 9)).astype(np.uint16)
    path = tmp_path / "a.pgm"
    write_image(path, vals, 65535)
    back, maxval = read_image(path)
    assert maxval == 65535 and np.array_equal(back, vals)
    blob = path.read_bytes()
    assert encode_netpbm(*decode_netpbm(blob)) == blob


def test_maxval_drives_bit_depth():
    vals = np.array([[0, 200], [255, 17]], dtype=np.uint16)
    assert len(encode_netpbm(vals, 255)) == len(b"P5\n2 2\n255\n") + 4
    assert len(encode_netpbm(vals, 1023)) == len(b"P5\n2 2\n1023\n") + 8


def test_ppm_round_trip_with_comment():
    vals = np.random.default_rng(2).integers(0, 256, size=(3, 4, 3)).astype(np.uint16)
    blob = encode_netpbm(vals, 255).replace(b"P6\n", b"P6\n# a comment\n", 1)
    back, maxval = decode_netpbm(blob)
    assert maxval == 255 and np.array_equal(back, vals)


@pytest.mark.parametrize("blob", [b"P2\n2 2\n255\n" + b"\0" * 4, b"XX", b"P5\n2 2\n255\n\0"])
def test_rejects_malformed(blob):
    with pytest.raises(DataError):
        decode_netpbm(blob)


def test_manifest_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    save_float(tmp_path / "l.pgm", rng.random((4, 4)) * 0.2)
    save_float(tmp_path / "h.pgm", rng.random((4, 4)))
    write_manifest(tmp_path / "m.tsv", [ManifestEntry("l.pgm", "h.pgm", 3, "156us")])
    entries = read_manifest(tmp_path / "m.tsv")
    assert entries == [ManifestEntry("l.pgm", "h.pgm", 3, "156us")]
    pairs = load_pairs(tmp_path / "m.tsv")
    assert pairs[0].stratum == 3 and pairs[0].low.shape == (4, 4)


def test_manifest_rejects_bad_tag(tmp_path):
    (tmp_path / "m.tsv").write_text("a\tb\t0\t999us\n")
    with pytest.raises(DataError):
        read_manifest(tmp_path / "m.tsv")


def test_value_range_preserved():
    vals = np.random.default_rng(5).integers(0, 65536, size=(8, 8)).astype(np.uint16)
    rgb = demosaic_bilinear(BayerImage(vals))
    assert rgb.min() >= 0.0 and rgb.max() <= 1.0
    g = rgb_to_gray(rgb)
    assert g.min() >= 0.0 and g.max() <= 1.0
