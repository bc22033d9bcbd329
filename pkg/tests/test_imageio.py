"""Image IO, manifests, and the synthetic dataset generator."""

import io

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from proxkit.errors import DataError
from proxkit.imageio import (
    DatasetManifest,
    GrayImage,
    ManifestEntry,
    generate_synthetic,
    load_image,
    load_manifest,
    write_manifest,
    write_pgm,
)


def _pgm_bytes(width, height, raster, maxval=255, header_extra=""):
    head = f"P5{header_extra}\n{width} {height}\n{maxval}\n".encode("ascii")
    return head + bytes(raster)


class TestPgm:
    def test_parse_extremal_values(self, tmp_path):
        """A 2x2 raster with 0, 255, 128, 64 maps to v/255 exactly."""
        p = tmp_path / "a.pgm"
        p.write_bytes(_pgm_bytes(2, 2, [0, 255, 128, 64]))
        img = load_image(p)
        assert (img.width, img.height) == (2, 2)
        assert_allclose(
            img.pixels,
            np.array([[0.0, 1.0], [128.0 / 255.0, 64.0 / 255.0]]),
            rtol=0,
            atol=0,
        )

    def test_header_comments_and_whitespace(self, tmp_path):
        # Comment lines may appear between any header tokens.
        data = b"P5\n# made by hand\n2 # width done\n1\n255\n" + bytes([10, 20])
        p = tmp_path / "c.pgm"
        p.write_bytes(data)
        img = load_image(p)
        assert (img.width, img.height) == (2, 1)
        assert_allclose(img.pixels[0], [10 / 255.0, 20 / 255.0])

    def test_maxval_over_255_rejected(self, tmp_path):
        p = tmp_path / "deep.pgm"
        p.write_bytes(_pgm_bytes(1, 1, [0, 0], maxval=65535))
        with pytest.raises(DataError, match="bit depth"):
            load_image(p)

    def test_truncated_raster_rejected(self, tmp_path):
        p = tmp_path / "short.pgm"
        p.write_bytes(_pgm_bytes(3, 3, [1, 2, 3]))
        with pytest.raises(DataError, match="truncated"):
            load_image(p)

    def test_truncated_header_rejected(self, tmp_path):
        p = tmp_path / "head.pgm"
        p.write_bytes(b"P5\n4 4")
        with pytest.raises(DataError, match="truncated"):
            load_image(p)

    def test_scaling_matches_direct_division(self, tmp_path, rng):
        raster = rng.integers(0, 256, size=30, dtype=np.uint8)
        p = tmp_path / "r.pgm"
        p.write_bytes(_pgm_bytes(6, 5, raster.tolist()))
        img = load_image(p)
        assert_array_equal(img.pixels, raster.reshape(5, 6) / 255.0)

    def test_write_load_round_trip(self, tmp_path, rng):
        """Intensities on the 1/255 grid survive a write/load cycle exactly."""
        quantized = rng.integers(0, 256, size=(7, 5)) / 255.0
        img = GrayImage.from_array(quantized)
        p = tmp_path / "rt.pgm"
        write_pgm(img, p)
        again = load_image(p)
        assert_array_equal(again.pixels, img.pixels)
        # Writing the same image twice gives identical bytes.
        p2 = tmp_path / "rt2.pgm"
        write_pgm(img, p2)
        assert p.read_bytes() == p2.read_bytes()


class TestPng:
    def test_gray_png(self, tmp_path, rng):
        from PIL import Image

        arr = rng.integers(0, 256, size=(6, 4), dtype=np.uint8)
        p = tmp_path / "g.png"
        Image.fromarray(arr, mode="L").save(p)
        img = load_image(p)
        assert_array_equal(img.pixels, arr / 255.0)

    def test_rgb_png_luma(self, tmp_path):
        from PIL import Image

        rgb = np.zeros((2, 2, 3), dtype=np.uint8)
        rgb[0, 0] = (255, 0, 0)
        rgb[0, 1] = (0, 255, 0)
        rgb[1, 0] = (0, 0, 255)
        rgb[1, 1] = (255, 255, 255)
        p = tmp_path / "c.png"
        Image.fromarray(rgb, mode="RGB").save(p)
        img = load_image(p)
        assert_allclose(
            img.pixels, np.array([[0.299, 0.587], [0.114, 1.0]]), atol=1e-12
        )

    def test_16bit_png_rejected(self, tmp_path):
        from PIL import Image

        arr = np.zeros((4, 4), dtype=np.uint16)
        p = tmp_path / "deep.png"
        Image.fromarray(arr).save(p)
        with pytest.raises(DataError, match="bit depth"):
            load_image(p)

    def test_rgba_png_rejected(self, tmp_path):
        from PIL import Image

        p = tmp_path / "a.png"
        Image.new("RGBA", (4, 4), (1, 2, 3, 4)).save(p)
        with pytest.raises(DataError, match="unsupported PNG mode"):
            load_image(p)


def test_unknown_format_rejected(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"GIF89a not really an image")
    with pytest.raises(DataError, match="unknown format"):
        load_image(p)


def test_missing_file_rejected(tmp_path):
    with pytest.raises(DataError, match="unreadable"):
        load_image(tmp_path / "nope.pgm")


def test_gray_image_validation():
    with pytest.raises(ValueError, match="outside"):
        GrayImage.from_array(np.array([[0.0, 1.5]]))
    with pytest.raises(DataError, match="at least 1x1"):
        GrayImage(width=0, height=2, pixels=np.zeros((2, 0)))


class TestManifest:
    def _write(self, tmp_path, text):
        p = tmp_path / "manifest.tsv"
        p.write_text(text, encoding="utf-8")
        return p

    def test_round_trip(self, tmp_path):
        entries = [
            ManifestEntry("a/x.pgm", "cat", "train"),
            ManifestEntry("a/y.pgm", "cat", "test"),
            ManifestEntry("b/z.pgm", "dog", "train"),
        ]
        m = DatasetManifest(entries=entries, root=tmp_path)
        p = tmp_path / "manifest.tsv"
        write_manifest(m, p)
        back = load_manifest(p)
        assert back.entries == entries
        assert back.root == tmp_path
        assert back.labels() == ["cat", "dog"]
        assert [e.path for e in back.train_entries()] == ["a/x.pgm", "b/z.pgm"]
        assert [e.path for e in back.test_entries()] == ["a/y.pgm"]
        assert back.resolve(entries[0]) == tmp_path / "a/x.pgm"

    def test_comments_and_blank_lines_skipped(self, tmp_path):
        p = self._write(
            tmp_path,
            "# header comment\n\na.pgm\tcat\ttrain\n   \nb.pgm\tcat\ttest\n",
        )
        m = load_manifest(p)
        assert len(m.entries) == 2

    def test_malformed_line_rejected(self, tmp_path):
        p = self._write(tmp_path, "a.pgm\tcat\n")
        with pytest.raises(DataError, match="malformed"):
            load_manifest(p)

    def test_bad_split_rejected(self, tmp_path):
        p = self._write(tmp_path, "a.pgm\tcat\tvalidation\n")
        with pytest.raises(DataError, match="split"):
            load_manifest(p)

    def test_duplicate_path_rejected(self, tmp_path):
        p = self._write(tmp_path, "a.pgm\tcat\ttrain\na.pgm\tdog\ttrain\n")
        with pytest.raises(DataError, match="duplicate"):
            load_manifest(p)

    def test_test_label_needs_train_entry(self, tmp_path):
        p = self._write(tmp_path, "a.pgm\tcat\ttrain\nb.pgm\tdog\ttest\n")
        with pytest.raises(DataError, match="no train entry"):
            load_manifest(p)

    def test_empty_manifest_warns(self, tmp_path):
        p = self._write(tmp_path, "# nothing here\n")
        with pytest.warns(UserWarning, match="no entries"):
            load_manifest(p)


class TestSynthetic:
    def test_determinism(self, tmp_path):
        """Same arguments produce byte-identical datasets."""
        a = tmp_path / "a"
        b = tmp_path / "b"
        ma = generate_synthetic(a, classes=2, per_class=2, side=32, seed=9)
        mb = generate_synthetic(b, classes=2, per_class=2, side=32, seed=9)
        assert [e.path for e in ma.entries] == [e.path for e in mb.entries]
        for e in ma.entries:
            assert (a / e.path).read_bytes() == (b / e.path).read_bytes()
        assert (a / "manifest.tsv").read_text() == (b / "manifest.tsv").read_text()

    def test_split_counts_and_loadability(self, small_dataset):
        m = small_dataset
        assert len(m.labels()) == 3
        per_label_train = {
            lab: sum(1 for e in m.train_entries() if e.label == lab)
            for lab in m.labels()
        }
        per_label_test = {
            lab: sum(1 for e in m.test_entries() if e.label == lab)
            for lab in m.labels()
        }
        assert all(v == 5 for v in per_label_train.values())
        assert all(v == 1 for v in per_label_test.values())
        img = load_image(m.resolve(m.entries[0]))
        assert (img.width, img.height) == (48, 48)
        assert 0.0 <= img.pixels.min() and img.pixels.max() <= 1.0

    def test_manifest_file_written(self, small_dataset):
        loaded = load_manifest(small_dataset.root / "manifest.tsv")
        assert loaded.entries == small_dataset.entries

    def test_argument_validation(self, tmp_path):
        with pytest.raises(ValueError):
            generate_synthetic(tmp_path, classes=1, per_class=4, side=64, seed=0)
        with pytest.raises(ValueError):
            generate_synthetic(tmp_path, classes=2, per_class=1, side=64, seed=0)
        with pytest.raises(ValueError):
            generate_synthetic(tmp_path, classes=2, per_class=4, side=16, seed=0)

    def test_more_than_four_classes_reuse_families(self, tmp_path):
        m = generate_synthetic(tmp_path / "many", classes=5, per_class=2, side=32, seed=1)
        assert len(m.labels()) == 5
        assert "grating1" in m.labels()
