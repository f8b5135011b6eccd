from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavsem import codec
from uavsem.codec import (
    GRID,
    ManifestError,
    Profile,
    ProfileError,
    ReceptionState,
    channel_split,
    complete_missing,
    decode,
    encode,
    export_blocks,
    export_reception,
    import_external_blocks,
    import_reception,
    zigzag,
)
from uavsem.imageio import to_unit
from uavsem.metrics import psnr

from .oracles import JPEG_ZIGZAG_8, dct_matrix

# measured on the bundled test image and frozen
FROZEN_PSNR = {Profile(48, 24): 20.45010130324084, Profile(128, 24): 21.444316431007636}


def roundtrip_psnr(x, profile):
    y = decode(ReceptionState.from_blocks(encode(x, profile)))
    return psnr(to_unit(x), to_unit(y))


# -- transform and layout --


def test_dct_matches_cosine_definition(rng):
    a = rng.standard_normal((16, 16, 3))
    m = dct_matrix(16)
    ref = np.stack([m @ a[..., c] @ m.T for c in range(3)], axis=-1)
    np.testing.assert_allclose(codec.dct2(a), ref, atol=1e-12)


def test_transform_roundtrip_on_random_tiles(rng):
    for _ in range(50):
        tile = rng.uniform(-1, 1, (64, 64, 3))
        assert np.max(np.abs(codec.idct2(codec.dct2(tile)) - tile)) <= 1e-9


def test_zigzag_matches_jpeg_table():
    assert [r * 8 + c for r, c in zigzag(8, 64)] == JPEG_ZIGZAG_8


def test_zigzag_too_many():
    with pytest.raises(ProfileError):
        zigzag(4, 17)


def test_channel_split():
    assert channel_split(48) == (16, 16, 16)
    assert channel_split(128) == (43, 43, 42)  # R, G, B: G first, then R
    assert channel_split(25) == (8, 9, 8)
    assert sum(channel_split(24)) == 24


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 300), st.booleans())
def test_gather_scatter_inverse(total, skip_dc):
    rng = np.random.default_rng(total)
    coeffs = rng.standard_normal((32, 32, 3))
    vec = codec.gather(coeffs, total, skip_dc)
    assert vec.shape == (total,)
    back = codec.scatter(vec, coeffs.shape, skip_dc)
    np.testing.assert_array_equal(codec.gather(back, total, skip_dc), vec)
    if skip_dc:
        assert np.all(back[0, 0] == 0)


@pytest.mark.parametrize("profile", [Profile(48, 24), Profile(128, 24)])
def test_texture_basis_orthonormal(profile, rng):
    basis = codec.texture_basis(256, profile)
    v = {(r, c): rng.standard_normal(profile.r_t) for r in range(GRID) for c in range(GRID)}
    img = basis.synthesise(v)
    back = basis.analyse(img)
    for k in v:
        np.testing.assert_allclose(back[k], v[k], atol=1e-12)
    # isometry, and no energy in the structure coefficients
    assert np.sum(img**2) == pytest.approx(sum(np.sum(a**2) for a in v.values()), rel=1e-12)
    np.testing.assert_allclose(codec.gather(codec.dct2(img), profile.r_s), 0.0, atol=1e-12)


def test_texture_blocks_stay_local(rng):
    basis = codec.texture_basis(256, Profile())
    img = basis.synthesise({(1, 2): rng.standard_normal(24)})
    inside = np.sum(img[codec.tile_slices((256, 256), 1, 2)] ** 2)
    assert inside / np.sum(img**2) > 0.98


def test_aliased_tile_positions_skipped():
    # structure (16 per channel) holds full-image (4, 0) and (0, 4): tile (1, 0) and (0, 1) are skipped
    pos = codec.texture_positions(256, Profile(48, 24))
    for r, c in pos:
        cells = set(zip(r.tolist(), c.tolist()))
        assert (0, 1) not in cells and (1, 0) not in cells and (0, 0) not in cells
        assert len(cells) == 8


def test_tiles_cover_image_exactly():
    cover = np.zeros((256, 256), dtype=int)
    for r in range(GRID):
        for c in range(GRID):
            cover[codec.tile_slices((256, 256), r, c)] += 1
    assert np.all(cover == 1)


# -- encode / decode --


def test_profile_total_and_ratio():
    p = Profile(128, 24)
    assert p.total == 512
    assert p.total / (3 * 256 * 256) == pytest.approx(0.0026, abs=5e-5)
    assert Profile().total <= 512


def test_constant_image():
    x = np.full((256, 256, 3), 0.5)
    b = encode(x, Profile(128, 24))
    for v in b.textures.values():
        np.testing.assert_allclose(v, 0.0, atol=1e-12)
    r, g, bb = np.split(b.structure, np.cumsum(channel_split(128))[:-1])
    for ch in (r, g, bb):
        assert ch[0] == pytest.approx(0.5 * 256)
        np.testing.assert_allclose(ch[1:], 0.0, atol=1e-12)


@pytest.mark.parametrize("profile", list(FROZEN_PSNR))
def test_frozen_regression_psnr(test_image, profile):
    assert roundtrip_psnr(test_image, profile) == pytest.approx(FROZEN_PSNR[profile], abs=0.01)


def test_quality_floor(test_image):
    assert roundtrip_psnr(test_image, Profile(128, 24)) >= 20.0


def test_encode_deterministic(test_image):
    assert encode(test_image) == encode(test_image)


def test_blocks_are_float32_exact(test_image):
    b = encode(test_image)
    for v in [b.structure, *b.textures.values()]:
        np.testing.assert_array_equal(v.astype(np.float32).astype(float), v)


def test_structure_fallback_is_worse(test_image):
    b = encode(test_image)
    rx = ReceptionState.from_blocks(b)
    full = psnr(to_unit(test_image), to_unit(decode(rx)))
    rx.structure = None
    assert rx.structure_lost
    assert psnr(to_unit(test_image), to_unit(decode(rx))) < full


def test_all_zero_blocks_decode_mid_gray():
    p = Profile()
    rx = ReceptionState(np.zeros(p.r_s), {(r, c): np.zeros(p.r_t) for r in range(4) for c in range(4)}, p)
    assert np.all(decode(rx) == 0.0)


def test_decode_requires_completion():
    rx = ReceptionState.empty(Profile())
    with pytest.raises(ValueError):
        decode(rx)


def test_decode_clamps(rng):
    p = Profile()
    rx = ReceptionState(100 * rng.standard_normal(p.r_s), {(r, c): np.zeros(p.r_t) for r in range(4) for c in range(4)}, p)
    y = decode(rx)
    assert y.min() >= -1 and y.max() <= 1


@pytest.mark.parametrize(
    "profile, shape",
    [
        (Profile(48, 3 * 4096), (256, 256, 3)),
        (Profile(3 * 65536 + 3, 24), (256, 256, 3)),
        (Profile(0, 24), (256, 256, 3)),
        (Profile(48, 24), (250, 250, 3)),
    ],
)
def test_profile_errors(profile, shape):
    with pytest.raises(ProfileError):
        encode(np.zeros(shape), profile)


# -- completion --


def _rx(test_image, missing=(), structure=True):
    rx = ReceptionState.from_blocks(encode(test_image))
    for k in missing:
        rx.textures[k] = None
    if not structure:
        rx.structure = None
    return rx


@pytest.mark.parametrize("mode", codec.COMPLETION_MODES)
def test_completion_identity(test_image, mode):
    rx = _rx(test_image)
    out = complete_missing(rx, mode)
    assert out.missing_textures == []
    for k, v in rx.textures.items():
        np.testing.assert_array_equal(out.textures[k], v)


@pytest.mark.parametrize("mode", ["conditional", "neighbor_mean"])
def test_all_missing_equals_zero_fill(test_image, mode):
    rx = _rx(test_image, missing=list(ReceptionState.empty(Profile()).textures))
    a = complete_missing(rx, mode)
    b = complete_missing(rx, "zero_fill")
    for k in a.textures:
        np.testing.assert_array_equal(a.textures[k], b.textures[k])
        assert not np.any(a.textures[k])


def test_missing_distinct_from_zero():
    rx = ReceptionState.empty(Profile())
    assert rx.structure_lost
    assert len(rx.missing_textures) == 16
    rx.textures[(0, 0)] = np.zeros(24)
    assert (0, 0) not in rx.missing_textures


def test_neighbor_mean_two_neighbours(rng):
    p = Profile()
    rx = ReceptionState.empty(p)
    u, v = rng.standard_normal(24), rng.standard_normal(24)
    rx.textures[(0, 1)] = u
    rx.textures[(1, 0)] = v
    out = complete_missing(rx, "neighbor_mean")
    np.testing.assert_allclose(out.textures[(0, 0)], 0.25 * (u + v), rtol=1e-15)


def test_conditional_fills_anchored_tiles(test_image):
    rx = _rx(test_image, missing=[(1, 1), (2, 2)])
    out = complete_missing(rx, "conditional")
    assert out.missing_textures == []
    assert np.any(out.textures[(1, 1)]) and np.any(out.textures[(2, 2)])
    again = complete_missing(rx, "conditional")
    np.testing.assert_array_equal(out.textures[(1, 1)], again.textures[(1, 1)])


def test_conditional_scale_is_linear(test_image):
    rx = _rx(test_image, missing=[(1, 2)])
    a = complete_missing(rx, "conditional", scale=1.0).textures[(1, 2)]
    b = complete_missing(rx, "conditional", scale=0.5).textures[(1, 2)]
    np.testing.assert_allclose(b, 0.5 * a, rtol=1e-12)


def _unclamped(rx):
    shape = tuple(rx.image_shape)
    return codec.structure_image(rx.structure, shape) + codec.texture_basis(shape[0], rx.profile).synthesise(
        rx.textures, shape[2]
    )


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(5.0, 30.0))
def test_superset_monotone_before_clamp(test_image, seed, snr_db):
    # blocks are coordinates in one orthonormal system, so each delivered block
    # whose noise energy is below its signal energy strictly lowers the error
    rng = np.random.default_rng(seed)
    b = encode(test_image)
    noisy = {}
    for bid in range(17):
        v = b.block(bid)
        noisy[bid] = v + np.sqrt(np.mean(v**2)) * rng.standard_normal(v.size) * 10 ** (-snr_db / 20)
    big = rng.random(17) < 0.7
    small = big & (rng.random(17) < 0.6)
    errs = []
    for mask in (small, big):
        rx = ReceptionState.empty(Profile(), test_image.shape)
        if mask[0]:
            rx.structure = noisy[0]
        for bid in np.flatnonzero(mask[1:]) + 1:
            rx.textures[divmod(int(bid) - 1, GRID)] = noisy[bid]
        errs.append(np.sum((test_image - _unclamped(complete_missing(rx, "zero_fill"))) ** 2))
    assert errs[1] <= errs[0] * (1 + 1e-12)


def test_unknown_mode():
    with pytest.raises(ValueError):
        complete_missing(ReceptionState.empty(Profile()), "magic")


def test_harmonic_fill_reproduces_linear_ramp():
    # a linear ramp in x is harmonic, so filling a hole must reproduce it
    ramp = np.tile(np.linspace(-1, 1, 32), (32, 1))[..., None]
    mask = np.zeros((32, 32), dtype=bool)
    mask[8:20, 10:24] = True
    known = ramp.copy()
    known[mask] = 0.0
    np.testing.assert_allclose(codec.harmonic_fill(known, mask), ramp, atol=1e-10)


# -- block exchange --


def test_export_import_roundtrip(tmp_path, test_image):
    b = encode(test_image)
    export_blocks(b, tmp_path)
    assert import_external_blocks(tmp_path) == b
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["grid"] == 4 and m["endianness"] == "little"
    assert m["byte_lengths"]["tex_3_3.bin"] == 4 * 24


def test_reception_roundtrip_keeps_missing(tmp_path, test_image):
    rx = _rx(test_image, missing=[(2, 3)], structure=False)
    export_reception(rx, tmp_path)
    back = import_reception(tmp_path)
    assert back.structure_lost
    assert back.missing_textures == [(2, 3)]
    np.testing.assert_array_equal(back.textures[(0, 0)], rx.textures[(0, 0)])
    with pytest.raises(ManifestError):
        import_external_blocks(tmp_path)


def _edit_manifest(path, fn):
    m = json.loads((path / "manifest.json").read_text())
    fn(m)
    (path / "manifest.json").write_text(json.dumps(m))


def test_length_mismatch(tmp_path, test_image):
    export_blocks(encode(test_image), tmp_path)
    (tmp_path / "tex_1_1.bin").write_bytes(np.zeros(23, "<f4").tobytes())
    _edit_manifest(tmp_path, lambda m: m["byte_lengths"].__setitem__("tex_1_1.bin", 92))
    with pytest.raises(ManifestError, match="does not match"):
        import_external_blocks(tmp_path)


def test_byte_count_disagrees_with_manifest(tmp_path, test_image):
    export_blocks(encode(test_image), tmp_path)
    (tmp_path / "structure.bin").write_bytes(b"\0" * 8)
    with pytest.raises(ManifestError):
        import_external_blocks(tmp_path)


def test_grid_index_out_of_range(tmp_path, test_image):
    export_blocks(encode(test_image), tmp_path)
    (tmp_path / "tex_4_0.bin").write_bytes(np.zeros(24, "<f4").tobytes())
    _edit_manifest(tmp_path, lambda m: m["byte_lengths"].__setitem__("tex_4_0.bin", 96))
    with pytest.raises(ManifestError, match="grid index"):
        import_external_blocks(tmp_path)


@pytest.mark.parametrize(
    "edit",
    [
        lambda m: m.pop("r_t"),
        lambda m: m.__setitem__("grid", 8),
        lambda m: m.__setitem__("endianness", "big"),
        lambda m: m["byte_lengths"].__setitem__("weird.bin", 4),
    ],
)
def test_malformed_manifest(tmp_path, test_image, edit):
    export_blocks(encode(test_image), tmp_path)
    _edit_manifest(tmp_path, edit)
    with pytest.raises(ManifestError):
        import_external_blocks(tmp_path)


def test_unreadable_manifest(tmp_path):
    (tmp_path / "manifest.json").write_text("{not json")
    with pytest.raises(ManifestError):
        import_reception(tmp_path)
