"""Scoring of detection runs (precision/recall/F-score with per-source
breakdown) and layer-scan histograms quantifying how well clean and perturbed
indicator distributions separate at each candidate detection layer."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .attention import indicator_at_layer
from .bundle import WeightBundle, atomic_write_bytes, preprocess_image
from .dataset import LABEL_POSITIVE
from .detector import Verdict
from .errors import ConfigError, ValidationError
from .images import load_image


@dataclass(frozen=True)
class SourceBreakdown:
    tp: int
    fn: int

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    fscore: float
    degenerate_precision: bool
    degenerate_recall: bool
    per_source: dict  # provenance descriptor -> SourceBreakdown
    n_total: int

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "fscore": self.fscore,
            "degenerate_precision": self.degenerate_precision,
            "degenerate_recall": self.degenerate_recall,
            "per_source": {
                k: {"tp": v.tp, "fn": v.fn, "recall": v.recall}
                for k, v in sorted(self.per_source.items())
            },
            "n_total": self.n_total,
        }


def metrics_from_counts(tp: int, fp: int, tn: int, fn: int, per_source=None) -> EvalReport:
    """Precision/recall/F from raw confusion counts; zero denominators give
    0.0 with an explicit degenerate flag instead of NaN."""
    degenerate_p = tp + fp == 0
    degenerate_r = tp + fn == 0
    precision = 0.0 if degenerate_p else tp / (tp + fp)
    recall = 0.0 if degenerate_r else tp / (tp + fn)
    fscore = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return EvalReport(
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        precision=precision,
        recall=recall,
        fscore=fscore,
        degenerate_precision=degenerate_p,
        degenerate_recall=degenerate_r,
        per_source=dict(per_source or {}),
        n_total=tp + fp + tn + fn,
    )


def score(results, labels) -> EvalReport:
    """Confusion-matrix scoring with Positive = Perturbed, aligned by
    source_id; id mismatches and duplicates are rejected naming offenders."""
    results = list(results)
    labels = list(labels)
    by_id = {}
    for r in results:
        if r.source_id in by_id:
            raise ValidationError(f"duplicate result source_id {r.source_id!r}")
        by_id[r.source_id] = r
    label_ids = [s.source_id for s in labels]
    if len(set(label_ids)) != len(label_ids):
        dupes = sorted({i for i in label_ids if label_ids.count(i) > 1})
        raise ValidationError(f"duplicate label source_ids: {dupes}")
    missing = sorted(set(label_ids) - set(by_id))
    extra = sorted(set(by_id) - set(label_ids))
    if missing or extra:
        raise ValidationError(
            f"result/label id mismatch; missing results for {missing}, "
            f"unlabeled results {extra}"
        )

    tp = fp = tn = fn = 0
    per_source_counts: dict = {}
    for s in labels:
        flagged = by_id[s.source_id].verdict == Verdict.PERTURBED
        if s.label == LABEL_POSITIVE:
            t, f = per_source_counts.get(s.source, (0, 0))
            if flagged:
                tp += 1
                per_source_counts[s.source] = (t + 1, f)
            else:
                fn += 1
                per_source_counts[s.source] = (t, f + 1)
        else:
            if flagged:
                fp += 1
            else:
                tn += 1
    per_source = {k: SourceBreakdown(tp=t, fn=f) for k, (t, f) in per_source_counts.items()}
    return metrics_from_counts(tp, fp, tn, fn, per_source)


# ---------------------------------------------------------------------------
# Layer scan


@dataclass(frozen=True)
class LayerScanEntry:
    layer: str
    clean_values: list
    perturbed_values: list
    bin_edges: np.ndarray
    clean_counts: np.ndarray
    perturbed_counts: np.ndarray
    overlap: float


@dataclass(frozen=True)
class LayerScanReport:
    entries: list  # of LayerScanEntry, in scanned order


def _shared_bin_edges(pooled: np.ndarray, min_bins: int = 16, max_bins: int = 256):
    """Freedman-Diaconis binning on the pooled sample, clamped to [16, 256]
    bins, covering the joint min/max range."""
    lo = float(pooled.min())
    hi = float(pooled.max())
    if hi <= lo:
        lo, hi = lo - 0.5, lo + 0.5
        return np.linspace(lo, hi, min_bins + 1)
    q75, q25 = np.percentile(pooled, [75, 25])
    iqr = q75 - q25
    width = 2.0 * iqr / (len(pooled) ** (1.0 / 3.0)) if iqr > 0 else 0.0
    if width > 0:
        bins = int(np.ceil((hi - lo) / width))
    else:
        bins = min_bins
    bins = max(min_bins, min(max_bins, bins))
    return np.linspace(lo, hi, bins + 1)


def histogram_overlap(clean_values, perturbed_values):
    """Shared-bin histograms plus the normalized overlap coefficient
    sum_bins min(freq_clean, freq_perturbed), in [0, 1]."""
    clean = np.asarray(clean_values, dtype=np.float64)
    pert = np.asarray(perturbed_values, dtype=np.float64)
    if clean.size == 0 or pert.size == 0:
        raise ConfigError("histogram overlap needs non-empty populations")
    edges = _shared_bin_edges(np.concatenate([clean, pert]))
    c_counts, _ = np.histogram(clean, bins=edges)
    p_counts, _ = np.histogram(pert, bins=edges)
    overlap = float(
        np.minimum(c_counts / clean.size, p_counts / pert.size).sum()
    )
    return edges, c_counts, p_counts, overlap


def _indicators_for(paths, bundle, layer, tap):
    values = []
    for path in paths:
        tensor = preprocess_image(load_image(path), bundle.preprocess)
        values.append(indicator_at_layer(tensor, bundle, layer, tap))
    return values


def layer_scan(
    clean_paths, perturbed_paths, bundle: WeightBundle, layers, tap="post"
) -> LayerScanReport:
    """Collect both indicator populations per candidate layer and quantify
    their separation with the histogram overlap coefficient."""
    clean_paths = list(clean_paths)
    perturbed_paths = list(perturbed_paths)
    if not clean_paths or not perturbed_paths:
        raise ConfigError("layer scan needs non-empty clean and perturbed sets")
    layers = list(layers)
    if not layers:
        raise ConfigError("layer scan needs at least one layer")
    entries = []
    for layer in layers:
        clean_vals = _indicators_for(clean_paths, bundle, layer, tap)
        pert_vals = _indicators_for(perturbed_paths, bundle, layer, tap)
        edges, c_counts, p_counts, overlap = histogram_overlap(clean_vals, pert_vals)
        entries.append(
            LayerScanEntry(
                layer=str(layer),
                clean_values=clean_vals,
                perturbed_values=pert_vals,
                bin_edges=edges,
                clean_counts=c_counts,
                perturbed_counts=p_counts,
                overlap=overlap,
            )
        )
    return LayerScanReport(entries=entries)


def recommend_layer(report: LayerScanReport) -> str:
    """Layer with minimum overlap; ties go to the shallowest scanned layer."""
    if not report.entries:
        raise ConfigError("empty layer-scan report")
    best = report.entries[0]
    for entry in report.entries[1:]:
        if entry.overlap < best.overlap:
            best = entry
    return best.layer


def histogram_csv(report: LayerScanReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["layer", "bin_lo", "bin_hi", "clean_count", "perturbed_count"])
    for entry in report.entries:
        edges = entry.bin_edges
        for i in range(len(edges) - 1):
            writer.writerow(
                [
                    entry.layer,
                    repr(float(edges[i])),
                    repr(float(edges[i + 1])),
                    int(entry.clean_counts[i]),
                    int(entry.perturbed_counts[i]),
                ]
            )
    return buf.getvalue()


def export_histogram(report: LayerScanReport, path) -> None:
    atomic_write_bytes(histogram_csv(report).encode("utf-8"), path)
