import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stllc.errors import (
    CorruptHeaderError,
    InvalidRoiError,
    InvalidSequenceError,
    ManifestError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)
from stllc.sequence_io import (
    HEADER_SIZE,
    ManifestEntry,
    Roi,
    ScalarSequence,
    decode_sequence,
    encode_sequence,
    extract_roi,
    read_manifest,
    read_sequence,
    resize_sequence,
    synth_generate,
    synth_square_position,
    write_manifest,
    write_sequence,
)

sequences = arrays(
    np.uint16,
    st.tuples(st.integers(1, 4), st.integers(1, 6), st.integers(1, 6)),
)


def test_one_pixel_file_layout(tmp_path):
    path = tmp_path / "one.dvs"
    write_sequence(ScalarSequence(np.full((1, 1, 1), 7)), path)
    data = path.read_bytes()
    assert len(data) == 22
    assert data[:4] == b"DVS1"
    assert data[4:20] == bytes([1, 0, 0, 0] + [1, 0, 0, 0] * 3)
    assert data[20:] == b"\x07\x00"


@settings(max_examples=50, deadline=None)
@given(sequences)
def test_round_trip(samples):
    seq = ScalarSequence(samples)
    data = encode_sequence(seq)
    assert len(data) == HEADER_SIZE + 2 * samples.size
    back = decode_sequence(data)
    assert back == seq
    assert encode_sequence(back) == data


def test_file_round_trip_and_determinism(tmp_path, rng):
    seq = ScalarSequence(rng.integers(0, 65536, size=(3, 5, 4)))
    a, b = tmp_path / "a.dvs", tmp_path / "b.dvs"
    write_sequence(seq, a)
    write_sequence(seq, b)
    assert a.read_bytes() == b.read_bytes()
    assert read_sequence(a) == seq


def test_bad_magic():
    data = bytearray(encode_sequence(ScalarSequence(np.ones((1, 2, 2)))))
    data[0:4] = b"XXXX"
    with pytest.raises(CorruptHeaderError) as exc:
        decode_sequence(bytes(data))
    assert exc.value.offset == 0


def test_truncated_payload():
    two = encode_sequence(ScalarSequence(np.ones((2, 3, 3))))
    with pytest.raises(TruncatedPayloadError):
        decode_sequence(two[: HEADER_SIZE + 18])


def test_short_header_and_trailing_bytes():
    data = encode_sequence(ScalarSequence(np.ones((1, 2, 2))))
    with pytest.raises(CorruptHeaderError):
        decode_sequence(data[:10])
    with pytest.raises(CorruptHeaderError):
        decode_sequence(data + b"\x00\x00")


def test_unknown_version():
    data = bytearray(encode_sequence(ScalarSequence(np.ones((1, 1, 1)))))
    data[4] = 2
    with pytest.raises(UnsupportedVersionError):
        decode_sequence(bytes(data))


def test_zero_dimension_in_header():
    data = bytearray(encode_sequence(ScalarSequence(np.ones((1, 1, 1)))))
    data[8:12] = b"\x00\x00\x00\x00"
    with pytest.raises(CorruptHeaderError) as exc:
        decode_sequence(bytes(data[:HEADER_SIZE]))
    assert exc.value.offset == 8


@pytest.mark.parametrize("shape", [(0, 2, 2), (1, 0, 2), (1, 2, 0), (2, 2)])
def test_invalid_shapes_rejected(shape, tmp_path):
    with pytest.raises(InvalidSequenceError):
        write_sequence(np.zeros(shape, dtype=np.uint16), tmp_path / "x.dvs")


def test_out_of_range_samples_rejected():
    with pytest.raises(InvalidSequenceError):
        ScalarSequence(np.full((1, 1, 1), 70000))
    with pytest.raises(InvalidSequenceError):
        ScalarSequence(np.full((1, 1, 1), np.nan))


def test_samples_are_read_only():
    seq = ScalarSequence(np.zeros((1, 2, 2)))
    with pytest.raises(ValueError):
        seq.samples[0, 0, 0] = 1


def test_roi_all_zero_falls_back_to_full_frame():
    assert extract_roi(ScalarSequence(np.zeros((3, 6, 9)))) == Roi(0, 0, 9, 6)


def test_roi_single_pixel():
    s = np.zeros((4, 10, 12), dtype=np.uint16)
    s[:, 5, 3] = 9
    assert extract_roi(ScalarSequence(s)) == Roi(3, 5, 1, 1)


def test_roi_two_pixels():
    s = np.zeros((2, 8, 16), dtype=np.uint16)
    s[0, 2, 2] = 1
    s[1, 4, 10] = 1
    assert extract_roi(ScalarSequence(s)) == Roi(2, 2, 9, 3)


@settings(max_examples=50, deadline=None)
@given(sequences)
def test_roi_idempotent(samples):
    seq = ScalarSequence(samples)
    roi = extract_roi(seq)
    crop = ScalarSequence(samples[:, roi.y0:roi.y0 + roi.h, roi.x0:roi.x0 + roi.w])
    assert extract_roi(crop) == Roi(0, 0, crop.width, crop.height)


@pytest.mark.parametrize("roi", [Roi(-1, 0, 2, 2), Roi(0, 0, 0, 2), Roi(3, 0, 2, 2), Roi(0, 1, 2, 4)])
def test_invalid_roi(roi):
    with pytest.raises(InvalidRoiError):
        resize_sequence(ScalarSequence(np.zeros((1, 4, 4))), roi, 2, 2)


def test_resize_constant():
    seq = ScalarSequence(np.full((2, 5, 7), 321))
    out = resize_sequence(seq, Roi(1, 1, 5, 3), 13, 11)
    assert out.samples.shape == (2, 11, 13)
    assert np.all(out.samples == 321)


def test_resize_identity(rng):
    seq = ScalarSequence(rng.integers(0, 5000, size=(2, 6, 9)))
    assert resize_sequence(seq, Roi(0, 0, 9, 6), 9, 6) == seq


def test_resize_two_by_two_to_one():
    seq = ScalarSequence(np.array([[[0, 100], [0, 100]]]))
    assert resize_sequence(seq, Roi(0, 0, 2, 2), 1, 1).samples[0, 0, 0] == 50


@settings(max_examples=50, deadline=None)
@given(sequences, st.integers(1, 9), st.integers(1, 9))
def test_resize_stays_in_range(samples, w, h):
    seq = ScalarSequence(samples)
    out = resize_sequence(seq, Roi(0, 0, seq.width, seq.height), w, h).samples
    assert out.min() >= samples.min() and out.max() <= samples.max()


def test_manifest_round_trip(tmp_path):
    entries = [ManifestEntry(tmp_path / "a.dvs", "wave", "s1"),
               ManifestEntry(tmp_path / "sub" / "b.dvs", "clap", "s2")]
    write_manifest(entries, tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines()[1] == "a.dvs,wave,s1"
    assert read_manifest(tmp_path / "m.csv") == entries


@pytest.mark.parametrize("text", [
    "file,label,subject\na,b,c\n",
    "path,label,subject\na,b\n",
    "path,label,subject\na,,c\n",
])
def test_bad_manifest(tmp_path, text):
    (tmp_path / "m.csv").write_text(text)
    with pytest.raises(ManifestError):
        read_manifest(tmp_path / "m.csv")


def test_synth_determinism_and_shape():
    a = synth_generate("down", 5)
    assert a == synth_generate("down", 5)
    assert (a.num_frames, a.height, a.width) == (20, 48, 64)


@pytest.mark.parametrize("cls,axis,sign", [("up", 0, -1), ("down", 0, 1), ("left", 1, -1)])
def test_synth_motion(cls, axis, sign):
    for seed in range(5):
        pos = np.array(synth_square_position(synth_generate(cls, seed)))
        steps = np.diff(pos[:, axis])
        assert np.all(steps == sign)
        assert np.all(np.diff(pos[:, 1 - axis]) == 0)


def test_synth_seeds_vary_start():
    starts = {synth_square_position(synth_generate("up", s))[0] for s in range(10)}
    assert len(starts) > 1


def test_synth_background_is_zero():
    s = synth_generate("left", 3).samples
    assert np.count_nonzero(s[0]) == 144


def test_synth_unknown_class():
    with pytest.raises(ValueError):
        synth_generate("right", 0)
