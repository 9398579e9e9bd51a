import numpy as np
import pytest

import oracles
from producescan.datasets import (
    CANONICAL_CLASSES,
    DatasetManifest,
    LabeledImage,
    class_hue_centers,
    decode_ppm,
    encode_ppm,
    hue_jitter_degrees,
    load_dataset,
    mean_hue_degrees,
    read_ppm,
    resize_nearest,
    split_dataset,
    synth_generate,
    synth_image,
    to_model_input,
    write_ppm,
)
from producescan.errors import InvalidArgumentError, ParseError, UnsupportedFormatError
from producescan.rng import SplitMix64
from producescan.tensor import Tensor


class TestPpmCodec:
    def test_single_red_pixel(self, tmp_path):
        path = tmp_path / "px.ppm"
        path.write_bytes(b"P6\n1 1\n255\n" + bytes([255, 0, 0]))
        image = read_ppm(path)
        np.testing.assert_allclose(image.data, [[[1.0, 0.0, 0.0]]], atol=1e-7)

    def test_round_trip_identity_on_quantized_image(self, tmp_path):
        gen = SplitMix64(31)
        quantized = (gen.floats(6 * 5 * 3) * 255).round() / 255.0
        image = Tensor(quantized.reshape(6, 5, 3).astype(np.float32))
        path = tmp_path / "rt.ppm"
        write_ppm(image, path)
        back = read_ppm(path)
        np.testing.assert_array_equal(back.data, image.data)

    def test_encode_decode_bytes_stable(self):
        image = Tensor(np.linspace(0, 1, 2 * 2 * 3, dtype=np.float32).reshape(2, 2, 3))
        blob = encode_ppm(image)
        assert encode_ppm(decode_ppm(blob)) == blob

    def test_ascii_p3_unsupported(self, tmp_path):
        path = tmp_path / "ascii.ppm"
        path.write_bytes(b"P3\n1 1\n255\n255 0 0\n")
        with pytest.raises(UnsupportedFormatError, match="P3"):
            read_ppm(path)

    def test_bad_magic_is_parse_error_with_offset(self, tmp_path):
        path = tmp_path / "junk.ppm"
        path.write_bytes(b"JUNKDATA")
        with pytest.raises(ParseError, match="offset 0"):
            read_ppm(path)

    def test_truncated_pixels_reports_offset(self, tmp_path):
        path = tmp_path / "short.ppm"
        path.write_bytes(b"P6\n2 2\n255\n" + bytes(5))
        with pytest.raises(ParseError, match="truncated"):
            read_ppm(path)

    def test_wide_maxval_unsupported(self, tmp_path):
        path = tmp_path / "wide.ppm"
        path.write_bytes(b"P6\n1 1\n65535\n" + bytes(6))
        with pytest.raises(UnsupportedFormatError, match="maxval"):
            read_ppm(path)

    def test_header_comments_allowed(self):
        blob = b"P6\n# camera frame\n2 1\n# widthxheight above\n255\n" + bytes(6)
        image = decode_ppm(blob)
        assert image.shape == (1, 2, 3)


class TestResize:
    def test_identity(self):
        rng = np.random.default_rng(2)
        image = Tensor(rng.uniform(0, 1, size=(5, 7, 3)).astype(np.float32))
        out = resize_nearest(image, 5, 7)
        np.testing.assert_array_equal(out.data, image.data)

    def test_2x2_to_4x4_replicates_blocks(self):
        image = Tensor(np.array(
            [[[0.0] * 3, [0.25] * 3], [[0.5] * 3, [0.75] * 3]], dtype=np.float32))
        out = resize_nearest(image, 4, 4)
        for i in range(4):
            for j in range(4):
                np.testing.assert_array_equal(out.data[i, j], image.data[i // 2, j // 2])

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        image = rng.uniform(0, 1, size=(5, 3, 3)).astype(np.float32)
        out = resize_nearest(Tensor(image), 7, 8)
        for i in range(7):
            for j in range(8):
                np.testing.assert_array_equal(
                    out.data[i, j], image[(i * 5) // 7, (j * 3) // 8])

    def test_to_model_input_range(self):
        image = Tensor(np.zeros((4, 4, 3), dtype=np.float32))
        out = to_model_input(image, 2, 2)
        np.testing.assert_array_equal(out.data, np.full((2, 2, 3), -1.0, dtype=np.float32))
        bright = Tensor(np.ones((4, 4, 3), dtype=np.float32))
        np.testing.assert_array_equal(to_model_input(bright, 2, 2).data,
                                      np.ones((2, 2, 3), dtype=np.float32))


class TestLabeledImage:
    def test_rejects_out_of_range_values(self):
        with pytest.raises(InvalidArgumentError, match=r"\[0, 1\]"):
            LabeledImage(Tensor(np.full((2, 2, 3), 1.5, dtype=np.float32)), 0, "x")

    def test_rejects_single_channel(self):
        with pytest.raises(InvalidArgumentError):
            LabeledImage(Tensor(np.zeros((2, 2, 1), dtype=np.float32)), 0, "x")


class TestLoadAndSplit:
    def build_tree(self, root, classes=("kiwi", "apple"), per_class=3):
        for name in classes:
            (root / name).mkdir(parents=True)
            for i in range(per_class):
                image = Tensor(np.full((2, 2, 3), i / 4, dtype=np.float32))
                write_ppm(image, root / name / f"{i:04d}.ppm")

    def test_classes_sorted_and_counted(self, tmp_path):
        self.build_tree(tmp_path)
        manifest, images = load_dataset(tmp_path)
        assert manifest.class_names == ["apple", "kiwi"]
        assert len(images) == 6
        assert [li.class_index for li in images] == [0, 0, 0, 1, 1, 1]

    def test_reload_deterministic(self, tmp_path):
        self.build_tree(tmp_path)
        first = load_dataset(tmp_path)
        second = load_dataset(tmp_path)
        assert first[0].files == second[0].files
        for a, b in zip(first[1], second[1]):
            np.testing.assert_array_equal(a.image.data, b.image.data)

    def test_empty_class_dir_warns_and_excludes(self, tmp_path):
        self.build_tree(tmp_path)
        (tmp_path / "empty").mkdir()
        with pytest.warns(UserWarning, match="empty"):
            manifest, _ = load_dataset(tmp_path)
        assert "empty" not in manifest.class_names

    def test_split_10_items_fraction_02(self, tmp_path):
        self.build_tree(tmp_path, per_class=10)
        manifest, _ = load_dataset(tmp_path)
        split = split_dataset(manifest, 0.2, seed=1)
        for name in split.class_names:
            tests = [f for f in split.files[name] if split.splits[f] == "test"]
            assert len(tests) == 2
            assert len(split.files[name]) - len(tests) == 8

    def test_same_seed_same_split(self, tmp_path):
        self.build_tree(tmp_path, per_class=8)
        manifest, _ = load_dataset(tmp_path)
        assert split_dataset(manifest, 0.25, 9).splits == split_dataset(manifest, 0.25, 9).splits

    def test_union_of_splits_is_everything(self, tmp_path):
        self.build_tree(tmp_path, per_class=7)
        manifest, _ = load_dataset(tmp_path)
        split = split_dataset(manifest, 0.3, 2)
        assigned = {p for p, _ in split.split_files("train")} | {
            p for p, _ in split.split_files("test")}
        everything = {f for name in manifest.class_names for f in manifest.files[name]}
        assert assigned == everything

    def test_class_too_small_errors_with_name(self, tmp_path):
        self.build_tree(tmp_path, classes=("lonely",), per_class=1)
        manifest, _ = load_dataset(tmp_path)
        with pytest.raises(InvalidArgumentError, match="lonely"):
            split_dataset(manifest, 0.5, 0)

    def test_fraction_bounds(self, tmp_path):
        self.build_tree(tmp_path)
        manifest, _ = load_dataset(tmp_path)
        for bad in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(InvalidArgumentError):
                split_dataset(manifest, bad, 0)

    def test_manifest_json_round_trip(self, tmp_path):
        self.build_tree(tmp_path, per_class=4)
        manifest, _ = load_dataset(tmp_path)
        split = split_dataset(manifest, 0.25, 11)
        back = DatasetManifest.from_json(split.to_json())
        assert back.class_names == split.class_names
        assert back.files == split.files
        assert back.splits == split.splits
        assert back.seed == 11


class TestSynth:
    def test_same_seed_identical_files(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        synth_generate(("apple", "kiwi"), 3, 16, 7, a)
        synth_generate(("apple", "kiwi"), 3, 16, 7, b)
        for rel in ("apple/0000.ppm", "apple/0002.ppm", "kiwi/0001.ppm"):
            assert (a / rel).read_bytes() == (b / rel).read_bytes()

    def test_different_seed_differs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        synth_generate(("apple", "kiwi"), 1, 16, 7, a)
        synth_generate(("apple", "kiwi"), 1, 16, 8, b)
        assert (a / "apple/0000.ppm").read_bytes() != (b / "apple/0000.ppm").read_bytes()

    def test_hue_oracle_100_percent_on_10x50(self, tmp_path):
        manifest = synth_generate(CANONICAL_CLASSES, 50, 32, 42, tmp_path)
        _, images = load_dataset(tmp_path)
        assert len(images) == 500
        correct = sum(
            oracles.hue_centroid_classify(li.image, 10) == li.class_index
            for li in images
        )
        assert correct == 500

    def test_per_class_30_smoke(self, tmp_path):
        manifest = synth_generate(("apple", "kiwi", "pear"), 30, 16, 1, tmp_path)
        assert all(len(files) == 30 for files in manifest.files.values())

    def test_loaded_tensors_in_bounds(self, tmp_path):
        synth_generate(("apple", "kiwi"), 2, 16, 3, tmp_path)
        _, images = load_dataset(tmp_path)
        for li in images:
            assert li.image.data.min() >= 0.0
            assert li.image.data.max() <= 1.0
            assert li.image.shape[2] == 3

    def test_hue_separation_guarantee(self):
        for k in range(2, 11):
            spacing = 360.0 / k
            jitter = hue_jitter_degrees(k)
            assert spacing - 2 * jitter >= 1.8 * k - 1e-9
            assert jitter <= 10.0

    def test_hue_centers_evenly_spaced(self):
        centers = class_hue_centers(10)
        assert centers[0] == 0.0
        diffs = {round(b - a, 9) for a, b in zip(centers, centers[1:])}
        assert diffs == {36.0}

    def test_mean_hue_tracks_class_center(self):
        gen = SplitMix64(1)
        image = synth_image(2, 10, 32, gen)  # center hue 72 degrees
        hue = mean_hue_degrees(image)
        assert abs(hue - 72.0) < 15.0
