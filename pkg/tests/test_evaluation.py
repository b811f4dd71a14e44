import csv
import io

import numpy as np
import pytest

from patchguard import ConfigError, ValidationError, Verdict, score
from patchguard.dataset import (
    LABEL_NEGATIVE,
    LABEL_POSITIVE,
    LabeledSample,
    PatchSpec,
    PlacementRecord,
    SolidColor,
    apply_patch,
)
from patchguard.detector import DetectionResult
from patchguard.evaluation import (
    LayerScanEntry,
    LayerScanReport,
    histogram_csv,
    histogram_overlap,
    layer_scan,
    metrics_from_counts,
    recommend_layer,
)
from patchguard.images import save_image
from patchguard.synth import box_filter_bundle, clean_image


def result(sid, perturbed):
    return DetectionResult(
        verdict=Verdict.PERTURBED if perturbed else Verdict.CLEAN,
        indicator=1.0 if perturbed else 0.0,
        theta=0.5,
        margin=0.5 if perturbed else -0.5,
        layer="conv1",
        source_id=sid,
    )


def label(sid, positive, source="noise"):
    if positive:
        return LabeledSample(sid, sid, LABEL_POSITIVE, source, PlacementRecord(0, 0, 2))
    return LabeledSample(sid, sid, LABEL_NEGATIVE)


class TestScore:
    def test_all_correct_balanced(self):
        labels = [label(f"s{i}", i < 5) for i in range(10)]
        results = [result(f"s{i}", i < 5) for i in range(10)]
        report = score(results, labels)
        assert report.precision == report.recall == report.fscore == 1.0
        assert (report.tp, report.fp, report.tn, report.fn) == (5, 0, 5, 0)

    def test_always_clean_detector_degenerates(self):
        labels = [label(f"s{i}", i < 5) for i in range(10)]
        results = [result(f"s{i}", False) for i in range(10)]
        report = score(results, labels)
        assert report.recall == 0.0
        assert report.precision == 0.0
        assert report.degenerate_precision
        assert not report.degenerate_recall

    def test_headline_arithmetic_regime(self):
        # perfect recall with ~5% false alarms lands near F = 0.9756
        report = metrics_from_counts(tp=100, fp=5, tn=95, fn=0)
        assert abs(report.precision - 0.9524) < 1e-4
        assert report.recall == 1.0
        assert abs(report.fscore - 0.9756) < 1e-4

    def test_counts_partition_samples(self):
        labels = [label(f"s{i}", i % 3 == 0) for i in range(20)]
        results = [result(f"s{i}", i % 2 == 0) for i in range(20)]
        report = score(results, labels)
        assert report.tp + report.fp + report.tn + report.fn == report.n_total == 20

    def test_fscore_between_precision_and_recall(self):
        report = metrics_from_counts(tp=30, fp=20, tn=40, fn=10)
        lo, hi = sorted([report.precision, report.recall])
        assert lo <= report.fscore <= hi

    def test_per_source_breakdown(self):
        labels = [
            label("a", True, "noise"),
            label("b", True, "noise"),
            label("c", True, "file:p.png"),
            label("d", False),
        ]
        results = [result("a", True), result("b", False), result("c", True), result("d", False)]
        report = score(results, labels)
        assert report.per_source["noise"].tp == 1
        assert report.per_source["noise"].fn == 1
        assert report.per_source["file:p.png"].recall == 1.0

    def test_id_mismatch_lists_offenders(self):
        labels = [label("a", True), label("b", False)]
        results = [result("a", True), result("z", False)]
        with pytest.raises(ValidationError, match="z"):
            score(results, labels)

    def test_duplicate_labels_rejected(self):
        labels = [label("a", False), label("a", False)]
        with pytest.raises(ValidationError, match="a"):
            score([result("a", False)], labels)


class TestHistogramOverlap:
    def test_identical_populations_overlap_one(self, rng):
        vals = rng.standard_normal(200)
        _, _, _, overlap = histogram_overlap(vals, vals.copy())
        assert overlap == pytest.approx(1.0)

    def test_disjoint_supports_overlap_zero(self, rng):
        a = rng.uniform(0.0, 1.0, 100)
        b = rng.uniform(10.0, 11.0, 100)
        assert histogram_overlap(a, b)[3] == 0.0

    def test_overlap_in_unit_interval(self, rng):
        a = rng.standard_normal(150)
        b = rng.standard_normal(150) + 0.5
        overlap = histogram_overlap(a, b)[3]
        assert 0.0 <= overlap <= 1.0

    def test_constant_identical_populations(self):
        assert histogram_overlap([2.0] * 10, [2.0] * 10)[3] == pytest.approx(1.0)

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            histogram_overlap([], [1.0])


class TestLayerScan:
    @pytest.fixture(scope="class")
    @staticmethod
    def corpus(tmp_path_factory):
        root = tmp_path_factory.mktemp("scan")
        clean_dir = root / "clean"
        bright_dir = root / "bright"
        dim_dir = root / "dim"
        for d in (clean_dir, bright_dir, dim_dir):
            d.mkdir()
        bright = PatchSpec(content=SolidColor((255, 255, 255)))
        dim = PatchSpec(content=SolidColor((110, 110, 110)))
        for i in range(24):
            sid = f"img{i:02d}"
            img = clean_image(31, sid, size=32, base_range=(80, 120))
            save_image(img, clean_dir / f"{sid}.png")
            save_image(apply_patch(img, bright, sid)[0], bright_dir / f"{sid}.png")
            save_image(apply_patch(img, dim, sid)[0], dim_dir / f"{sid}.png")
        return clean_dir, bright_dir, dim_dir

    def list_pngs(self, d):
        return sorted(str(p) for p in d.glob("*.png"))

    def test_identical_sets_overlap_one_everywhere(self, corpus):
        clean_dir, _, _ = corpus
        bundle = box_filter_bundle(n_convs=2, size=32)
        paths = self.list_pngs(clean_dir)
        report = layer_scan(paths, paths, bundle, ["conv1", "conv2"])
        for entry in report.entries:
            assert entry.overlap == pytest.approx(1.0)

    def test_bright_patch_separates_better_than_dim(self, corpus):
        clean_dir, bright_dir, dim_dir = corpus
        bundle = box_filter_bundle(n_convs=1, size=32)
        clean = self.list_pngs(clean_dir)
        bright_overlap = layer_scan(
            clean, self.list_pngs(bright_dir), bundle, ["conv1"]
        ).entries[0].overlap
        dim_overlap = layer_scan(
            clean, self.list_pngs(dim_dir), bundle, ["conv1"]
        ).entries[0].overlap
        assert bright_overlap < dim_overlap

    def test_empty_set_rejected(self, corpus):
        clean_dir, _, _ = corpus
        bundle = box_filter_bundle(n_convs=1, size=32)
        with pytest.raises(ConfigError):
            layer_scan([], self.list_pngs(clean_dir), bundle, ["conv1"])


def entry(layer, overlap, n_bins=4):
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    counts = np.ones(n_bins, dtype=np.int64)
    return LayerScanEntry(
        layer=layer,
        clean_values=[0.5],
        perturbed_values=[0.5],
        bin_edges=edges,
        clean_counts=counts,
        perturbed_counts=counts,
        overlap=overlap,
    )


class TestRecommendLayer:
    def test_single_layer(self):
        assert recommend_layer(LayerScanReport([entry("conv1", 0.3)])) == "conv1"

    def test_tie_breaks_shallowest(self):
        report = LayerScanReport(
            [entry("conv1", 0.1), entry("conv2", 0.1), entry("conv3", 0.4)]
        )
        assert recommend_layer(report) == "conv1"

    def test_relabeling_invariance(self):
        overlaps = [0.5, 0.2, 0.9]
        a = LayerScanReport([entry(f"c{i}", o) for i, o in enumerate(overlaps)])
        b = LayerScanReport([entry(f"layer_{i}", o) for i, o in enumerate(overlaps)])
        assert recommend_layer(a) == "c1"
        assert recommend_layer(b) == "layer_1"


class TestHistogramExport:
    def make_report(self, rng):
        entries = []
        for layer in ("conv1", "conv2"):
            clean = rng.standard_normal(60)
            pert = rng.standard_normal(60) + 12.0  # gap leaves empty middle bins
            edges, c, p, overlap = histogram_overlap(clean, pert)
            entries.append(
                LayerScanEntry(layer, list(clean), list(pert), edges, c, p, overlap)
            )
        return LayerScanReport(entries)

    def test_row_count_is_layers_times_bins(self, rng):
        report = self.make_report(rng)
        rows = list(csv.DictReader(io.StringIO(histogram_csv(report))))
        want = sum(len(e.bin_edges) - 1 for e in report.entries)
        assert len(rows) == want

    def test_zero_count_bins_still_emitted(self, rng):
        report = self.make_report(rng)
        rows = list(csv.DictReader(io.StringIO(histogram_csv(report))))
        assert any(
            int(r["clean_count"]) == 0 and int(r["perturbed_count"]) == 0 for r in rows
        )

    def test_counts_match_independent_recount(self, rng):
        report = self.make_report(rng)
        rows = list(csv.DictReader(io.StringIO(histogram_csv(report))))
        for e in report.entries:
            layer_rows = [r for r in rows if r["layer"] == e.layer]
            for i, row in enumerate(layer_rows):
                lo, hi = float(row["bin_lo"]), float(row["bin_hi"])
                last = i == len(layer_rows) - 1
                recount = sum(
                    1
                    for v in e.clean_values
                    if lo <= v < hi or (last and v == hi)
                )
                assert int(row["clean_count"]) == recount
