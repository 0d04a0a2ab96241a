"""Dataset reports and the canonical manifest export.

Reports are pure folds over included sessions. The manifest is a JSONL
file (one session per line, stable ordering) plus a summary; re-exporting
an unchanged dataset is byte-identical except for the summary timestamp.
The CLI report path also renders the report data as PNG figures next to
the delimited output.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from .blobs import BlobStore
from .domain import (
    PromptId,
    SessionRecord,
    prompt_key,
    rfc3339,
    utc_now,
)
from .errors import DanglingBlobRef, IoFailure
from .evaluation import RatingAggregate, RubricRating
from .transcription import rainbow_quality

SCHEMA_VERSION = "1"
AGE_BIN_EDGES = list(range(0, 100, 10))  # 0-9 ... 80-89, then 90+
NO_RESPONSE_BUCKET = "NoResponse"


def included_records(records: Iterable[SessionRecord]) -> list[SessionRecord]:
    return [
        r for r in records
        if r.inclusion is not None and r.inclusion.included
    ]


def age_bin_label(age: int) -> str:
    top = AGE_BIN_EDGES[-1]
    if age >= top:
        return f"{top}+"
    low = (age // 10) * 10
    return f"{low}-{low + 9}"


@dataclass(frozen=True)
class DemographicReport:
    n_total: int
    by_race: dict[str, int]
    by_age_bin: dict[str, int]
    by_gender_identity: dict[str, int]
    by_location: dict[str, int]

    def breakdowns(self) -> dict[str, dict[str, int]]:
        return {
            "race": self.by_race,
            "age_bin": self.by_age_bin,
            "gender_identity": self.by_gender_identity,
            "recording_location": self.by_location,
        }

    def to_dict(self) -> dict[str, Any]:
        return {"n_total": self.n_total, **{k: v for k, v in self.breakdowns().items()}}


def demographic_report(records: Iterable[SessionRecord]) -> DemographicReport:
    """Counts over included sessions; every breakdown sums to n_total."""
    race: dict[str, int] = {}
    age: dict[str, int] = {}
    gender: dict[str, int] = {}
    location: dict[str, int] = {}
    n = 0
    for record in included_records(records):
        profile = record.profile
        if profile is None:
            continue
        n += 1
        race[profile.race or NO_RESPONSE_BUCKET] = race.get(profile.race or NO_RESPONSE_BUCKET, 0) + 1
        bin_label = age_bin_label(profile.age)
        age[bin_label] = age.get(bin_label, 0) + 1
        g = profile.gender_identity or NO_RESPONSE_BUCKET
        gender[g] = gender.get(g, 0) + 1
        loc = profile.recording_location.value
        location[loc] = location.get(loc, 0) + 1

    def ordered(d: dict[str, int]) -> dict[str, int]:
        return dict(sorted(d.items()))

    def ordered_bins(d: dict[str, int]) -> dict[str, int]:
        labels = [age_bin_label(edge) for edge in AGE_BIN_EDGES]
        return {label: d[label] for label in labels if label in d}

    return DemographicReport(
        n_total=n,
        by_race=ordered(race),
        by_age_bin=ordered_bins(age),
        by_gender_identity=ordered(gender),
        by_location=ordered(location),
    )


def condition_prevalence(records: Iterable[SessionRecord]) -> list[tuple[str, int]]:
    """Health-history tag counts across included sessions, descending count,
    ties alphabetical."""
    counts: dict[str, int] = {}
    for record in included_records(records):
        if record.profile is None:
            continue
        for tag in record.profile.health_history:
            counts[tag] = counts.get(tag, 0) + 1
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


# --- manifest -----------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestTotals:
    n_included: int
    n_excluded: int
    total_audio_hours: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_included": self.n_included,
            "n_excluded": self.n_excluded,
            "total_audio_hours": self.total_audio_hours,
        }


@dataclass(frozen=True)
class DatasetManifest:
    schema_version: str
    created_at: datetime
    sessions: tuple[SessionRecord, ...]
    asr_quality_wer: dict[str, Optional[float]]  # session_id -> reading-passage WER
    totals: ManifestTotals


RAINBOW_KEY = prompt_key(PromptId.P4_PHONATION, 2)


def _session_wer(record: SessionRecord) -> Optional[float]:
    if RAINBOW_KEY in record.transcripts:
        return rainbow_quality(record).wer
    return None


def build_manifest(
    records: Sequence[SessionRecord],
    created_at: Optional[datetime] = None,
) -> DatasetManifest:
    ordered = tuple(sorted(records, key=lambda r: r.session_id))
    included = included_records(ordered)
    total_seconds = sum(
        sample.duration_s for r in included for sample in r.audio.values()
    )
    decided = [r for r in ordered if r.inclusion is not None]
    totals = ManifestTotals(
        n_included=len(included),
        n_excluded=len(decided) - len(included),
        total_audio_hours=round(total_seconds / 3600.0, 6),
    )
    return DatasetManifest(
        schema_version=SCHEMA_VERSION,
        created_at=created_at or utc_now(),
        sessions=ordered,
        asr_quality_wer={r.session_id: _session_wer(r) for r in ordered},
        totals=totals,
    )


def verify_blob_refs(records: Iterable[SessionRecord], blobs: BlobStore) -> None:
    for record in records:
        for sample in record.audio.values():
            if not blobs.verify(sample.checksum):
                raise DanglingBlobRef(sample.checksum)


def export_manifest(
    records: Sequence[SessionRecord],
    blobs: Optional[BlobStore],
    destination: Path | str,
    created_at: Optional[datetime] = None,
) -> DatasetManifest:
    """Write manifest.jsonl + summary.json + sessions.csv under destination.

    Blob references are verified first when a blob store is supplied; a
    missing or corrupt blob aborts the export naming the checksum.
    """
    manifest = build_manifest(records, created_at=created_at)
    if blobs is not None:
        verify_blob_refs(manifest.sessions, blobs)
    dest = Path(destination)
    try:
        dest.mkdir(parents=True, exist_ok=True)
        lines = []
        for record in manifest.sessions:
            row = record.to_dict()
            row["asr_quality_wer"] = manifest.asr_quality_wer[record.session_id]
            lines.append(json.dumps(row, sort_keys=True, separators=(",", ":")))
        (dest / "manifest.jsonl").write_text("\n".join(lines) + ("\n" if lines else ""))
        summary = {
            "schema_version": manifest.schema_version,
            "created_at": rfc3339(manifest.created_at),
            "totals": manifest.totals.to_dict(),
            "weight_unit": "lb",
            "n_sessions": len(manifest.sessions),
        }
        (dest / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        _write_sessions_csv(dest / "sessions.csv", manifest)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return manifest


def _write_sessions_csv(path: Path, manifest: DatasetManifest) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "session_id", "cohort", "included", "rules_fired", "n_audio",
            "audio_seconds", "recording_location", "age_bin", "asr_quality_wer",
        ])
        for record in manifest.sessions:
            inclusion = record.inclusion
            writer.writerow([
                record.session_id,
                record.cohort.value,
                "" if inclusion is None else str(inclusion.included).lower(),
                "" if inclusion is None else "|".join(sorted(r.value for r in inclusion.rules_fired)),
                len(record.audio),
                round(sum(s.duration_s for s in record.audio.values()), 3),
                record.profile.recording_location.value if record.profile else "",
                age_bin_label(record.profile.age) if record.profile else "",
                manifest.asr_quality_wer[record.session_id] if
                manifest.asr_quality_wer[record.session_id] is not None else "",
            ])


def import_manifest(path: Path | str) -> tuple[list[SessionRecord], dict[str, Optional[float]]]:
    """Parse manifest.jsonl back into records; inverse of export_manifest."""
    records: list[SessionRecord] = []
    wers: dict[str, Optional[float]] = {}
    manifest_path = Path(path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.jsonl"
    for line in manifest_path.read_text().splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        wers[row["session_id"]] = row.pop("asr_quality_wer", None)
        records.append(SessionRecord.from_dict(row))
    return records, wers


# --- delimited report output + figures --------------------------------------------------

def write_report_csvs(
    out_dir: Path | str,
    demographics: DemographicReport,
    conditions: list[tuple[str, int]],
    rating_aggregate: Optional[RatingAggregate] = None,
) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    demo_path = out / "demographics.csv"
    with open(demo_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["breakdown", "bucket", "count"])
        for name, counts in demographics.breakdowns().items():
            for bucket, count in counts.items():
                writer.writerow([name, bucket, count])
        writer.writerow(["total", "n", demographics.n_total])
    paths.append(demo_path)

    cond_path = out / "condition_prevalence.csv"
    with open(cond_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["condition", "count"])
        writer.writerows(conditions)
    paths.append(cond_path)

    if rating_aggregate is not None:
        ratings_path = out / "rating_aggregate.csv"
        with open(ratings_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            agg = rating_aggregate.to_dict()
            for key in ("n", "mean", "median", "std_dev", "pct_gt2", "pct_eq5"):
                writer.writerow([key, agg[key]])
            for rating, count in agg["histogram"].items():
                writer.writerow([f"count_rating_{rating}", count])
        paths.append(ratings_path)
    return paths


def render_report_figures(
    out_dir: Path | str,
    demographics: DemographicReport,
    conditions: list[tuple[str, int]],
    rating_aggregate: Optional[RatingAggregate] = None,
) -> list[Path]:
    """Render the report data as PNG files next to the CSVs."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    fig, axes = plt.subplots(2, 2, figsize=(11, 8))
    panels = [
        ("Race", demographics.by_race),
        ("Age", demographics.by_age_bin),
        ("Gender identity", demographics.by_gender_identity),
        ("Recording location", demographics.by_location),
    ]
    for ax, (title, counts) in zip(axes.flat, panels):
        labels = list(counts)
        ax.bar(range(len(labels)), list(counts.values()), color="#4878a8")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
        ax.set_title(f"{title} (n={demographics.n_total})")
        ax.set_ylabel("sessions")
    fig.tight_layout()
    demo_png = out / "demographics.png"
    fig.savefig(demo_png, dpi=120)
    plt.close(fig)
    paths.append(demo_png)

    if conditions:
        fig, ax = plt.subplots(figsize=(8, max(2.5, 0.35 * len(conditions))))
        names = [c for c, _ in conditions][::-1]
        values = [v for _, v in conditions][::-1]
        ax.barh(range(len(names)), values, color="#4878a8")
        ax.set_yticks(range(len(names)))
        ax.set_yticklabels(names, fontsize=8)
        ax.set_xlabel("sessions reporting the condition")
        ax.set_title("Health condition occurrences")
        fig.tight_layout()
        cond_png = out / "condition_prevalence.png"
        fig.savefig(cond_png, dpi=120)
        plt.close(fig)
        paths.append(cond_png)

    if rating_aggregate is not None:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.bar(range(1, 6), rating_aggregate.histogram, color="#4878a8")
        ax.set_xticks(range(1, 6))
        ax.set_xlabel("rubric rating")
        ax.set_ylabel("sessions")
        ax.set_title(
            f"Rating distribution (n={rating_aggregate.n}, "
            f"mean={rating_aggregate.mean:.2f})"
        )
        fig.tight_layout()
        ratings_png = out / "rating_distribution.png"
        fig.savefig(ratings_png, dpi=120)
        plt.close(fig)
        paths.append(ratings_png)
    return paths
