"""Corpus rendering, batch feature extraction, and manifest I/O.

Positive pairs are rendered once and their per-band FFT states cached, so
the cross-paired negatives reuse them instead of re-filtering; a corpus of
P positives and 2kP negatives costs P renders and P filter passes.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioClip, Origin, load_wav, save_wav
from .liveness import extract_liveness_features
from .similarity import (
    BandCorrelator,
    DEFAULT_ESSENTIAL_CONFIG,
    DEFAULT_MAX_LAG_MS,
    EssentialBandConfig,
    essential_bands,
    third_octave_bands,
)
from .attack_detect import DEFAULT_ESSENTIAL_BAND
from .synth import (
    CorpusPlan,
    SpeakerCorpusPlan,
    corpus_rows,
    stage_scenario,
)


@dataclass
class _CacheEntry:
    c_state: list
    d_state: list
    refs: int
    stamp: int


class _StateCache:
    """Refcounted per-positive band-FFT states with a hard size cap.

    Entries whose references are exhausted are dropped immediately; if the
    cap is hit while references are still pending (the cyclic cross-pairing
    wraps around the last rounds), the oldest entry is evicted and
    re-rendered on the next miss.
    """

    def __init__(self, plan: CorpusPlan, correlator: BandCorrelator,
                 max_entries: int):
        self.plan = plan
        self.correlator = correlator
        self.max_entries = max_entries
        self.entries: dict[tuple[int, int], _CacheEntry] = {}
        self.initial_refs = 2 + 2 * plan.crossings_per_positive
        self._stamp = 0
        self.renders = 0

    def _render(self, key: tuple[int, int]) -> _CacheEntry:
        out = stage_scenario(self.plan.positive_scenario(*key))
        self.renders += 1
        self._stamp += 1
        return _CacheEntry(
            self.correlator.clip_state(out.verifier_side_clip.samples),
            self.correlator.clip_state(out.drone_side_clip.samples),
            self.initial_refs, self._stamp)

    def take(self, key: tuple[int, int], side: str) -> list:
        entry = self.entries.get(key)
        if entry is None:
            entry = self._render(key)
            self.entries[key] = entry
            if len(self.entries) > self.max_entries:
                victim = min(
                    (k for k in self.entries if k != key),
                    key=lambda k: (self.entries[k].refs > 0,
                                   self.entries[k].stamp))
                del self.entries[victim]
        entry.refs -= 1
        state = entry.c_state if side == "c" else entry.d_state
        if entry.refs <= 0:
            del self.entries[key]
        return state


def _rows_features(plan: CorpusPlan, rows, bands, max_lag_ms: float
                   ) -> np.ndarray:
    """Band feature vectors for a slice of corpus rows, rendering the
    referenced positives on demand."""
    sample_rate = plan.positive_scenario(0, 0).sample_rate_hz
    correlator = BandCorrelator(bands, sample_rate, max_lag_ms)
    n_samples = int(round(plan.duration_s * sample_rate))
    cache = _StateCache(plan, correlator, max_entries=3 * plan.n_drones + 4)
    X = np.empty((len(rows), len(bands)))
    for r, row in enumerate(rows):
        state_c = cache.take(row.c_ref, "c")
        state_d = cache.take(row.d_ref, "d")
        X[r] = correlator.scores_from_states(state_c, state_d, n_samples)
    return X


def _corpus_worker(args) -> np.ndarray:
    plan, lo, hi, bands, max_lag_ms = args
    return _rows_features(plan, corpus_rows(plan)[lo:hi], bands, max_lag_ms)


def corpus_similarity_features(
        plan: CorpusPlan,
        band_config: EssentialBandConfig = DEFAULT_ESSENTIAL_CONFIG,
        max_lag_ms: float = DEFAULT_MAX_LAG_MS,
        bands=None,
        n_workers: int | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[str]]:
    """Band feature vectors for every corpus row, rendered in memory.

    Returns (X, labels, groups, pair_ids); groups name the d-side drone for
    leave-one-drone-out validation. Rows are independent, so the work is
    split across n_workers processes (chunked on pair-index rounds; the
    per-worker render cache re-renders the few boundary positives). Results
    do not depend on the worker count.
    """
    if bands is None:
        bands = essential_bands(band_config)
    rows = corpus_rows(plan)
    if n_workers is None:
        n_workers = min(os.cpu_count() or 1, 4)

    rows_per_round = len(rows) // plan.pairs_per_drone
    rounds_per_chunk = max(1, -(-plan.pairs_per_drone // n_workers))
    cuts = list(range(0, len(rows), rounds_per_chunk * rows_per_round)) + [len(rows)]
    chunks = [(plan, lo, hi, tuple(bands), max_lag_ms)
              for lo, hi in zip(cuts[:-1], cuts[1:]) if hi > lo]

    if n_workers <= 1 or len(chunks) <= 1:
        parts = [_corpus_worker(chunk) for chunk in chunks]
    else:
        import multiprocessing
        with multiprocessing.get_context("fork").Pool(len(chunks)) as pool:
            parts = pool.map(_corpus_worker, chunks)

    X = np.vstack(parts)
    labels = np.array([row.label for row in rows], dtype=int)
    groups = np.array([row.group for row in rows], dtype=object)
    pair_ids = [row.pair_id for row in rows]
    return X, labels, groups, pair_ids


def _speaker_row(item) -> tuple[np.ndarray, int, int, str]:
    row_id, spec = item
    out = stage_scenario(spec)
    feats = extract_liveness_features(out.verifier_side_clip,
                                      DEFAULT_ESSENTIAL_BAND)
    truth = out.ground_truth
    return (feats.as_array(),
            1 if truth.speaker_present else 0,
            1 if truth.speaker_content == "drone_noise" else 0,
            truth.speaker_profile or "")


def speaker_corpus_features(plan: SpeakerCorpusPlan,
                            n_workers: int | None = None
                            ) -> tuple[np.ndarray, dict]:
    """Liveness feature vectors for every speaker-study scenario.

    Returns (X, meta) where meta holds presence labels, content labels
    (drone-noise == 1, only meaningful where a speaker is present), and the
    speaker profile per row for leave-one-profile-out evaluation.
    """
    scenarios = plan.scenarios()
    if n_workers is None:
        n_workers = min(os.cpu_count() or 1, 4)
    if n_workers <= 1 or len(scenarios) < 8:
        rows = [_speaker_row(item) for item in scenarios]
    else:
        import multiprocessing
        with multiprocessing.get_context("fork").Pool(n_workers) as pool:
            rows = pool.map(_speaker_row, scenarios, chunksize=8)
    return np.array([r[0] for r in rows]), {
        "presence": np.array([r[1] for r in rows]),
        "content": np.array([r[2] for r in rows]),
        "profile": np.array([r[3] for r in rows], dtype=object),
        "ids": [row_id for row_id, _ in scenarios],
    }


# --- disk corpus -------------------------------------------------------------

def write_jsonl(path, records) -> None:
    """Atomic JSONL write (temp file + rename)."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent)
    try:
        with os.fdopen(fd, "w") as fh:
            for record in records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def generate_corpus(plan: CorpusPlan | SpeakerCorpusPlan, out_dir
                    ) -> Path:
    """Render a corpus to WAV files plus a JSONL manifest; returns the
    manifest path. Regeneration from the same plan is bit-identical."""
    out_dir = Path(out_dir)
    audio_dir = out_dir / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)

    records = []
    if isinstance(plan, CorpusPlan):
        paths: dict[tuple[int, int], tuple[str, str]] = {}
        for i in range(plan.pairs_per_drone):
            for a in range(plan.n_drones):
                spec = plan.positive_scenario(a, i)
                out = stage_scenario(spec)
                c_rel = f"audio/d{a}_p{i}_c.wav"
                d_rel = f"audio/d{a}_p{i}_d.wav"
                save_wav(out.verifier_side_clip, out_dir / c_rel)
                save_wav(out.drone_side_clip, out_dir / d_rel)
                paths[(a, i)] = (c_rel, d_rel)
        for row in corpus_rows(plan):
            if row.label == 1:
                spec = plan.positive_scenario(*row.c_ref)
                record = {
                    "pair_id": row.pair_id,
                    "label": 1,
                    "clip_c": paths[row.c_ref][0],
                    "clip_d": paths[row.d_ref][1],
                    "group": row.group,
                    "seed": spec.seed,
                    "scenario": spec.to_dict(),
                }
            else:
                record = {
                    "pair_id": row.pair_id,
                    "label": 0,
                    "clip_c": paths[row.c_ref][0],
                    "clip_d": paths[row.d_ref][1],
                    "group": row.group,
                    "crossed_from": [f"pos_d{row.c_ref[0]}_p{row.c_ref[1]}",
                                     f"pos_d{row.d_ref[0]}_p{row.d_ref[1]}"],
                }
            records.append(record)
    else:
        for row_id, spec in plan.scenarios():
            out = stage_scenario(spec)
            c_rel = f"audio/{row_id}_c.wav"
            d_rel = f"audio/{row_id}_d.wav"
            save_wav(out.verifier_side_clip, out_dir / c_rel)
            save_wav(out.drone_side_clip, out_dir / d_rel)
            records.append({
                "pair_id": row_id,
                "label": 1 if not out.ground_truth.is_attack else 0,
                "clip_c": c_rel,
                "clip_d": d_rel,
                "group": out.ground_truth.speaker_profile or "none",
                "seed": spec.seed,
                "scenario": spec.to_dict(),
                "ground_truth": out.ground_truth.to_dict(),
            })

    manifest = out_dir / "manifest.jsonl"
    write_jsonl(manifest, records)
    return manifest


def _clip_cache_load(base: Path, rel: str,
                     cache: dict, cap: int = 64) -> AudioClip:
    clip = cache.get(rel)
    if clip is None:
        clip = load_wav(base / rel, Origin.UNKNOWN)
        if len(cache) >= cap:
            cache.pop(next(iter(cache)))
        cache[rel] = clip
    return clip


def extract_similarity_records(manifest_path, band_mode: str = "essential_m",
                               band_config: EssentialBandConfig = DEFAULT_ESSENTIAL_CONFIG,
                               max_lag_ms: float = DEFAULT_MAX_LAG_MS) -> list[dict]:
    """Band features for every pair in a manifest (JSONL records)."""
    base = Path(manifest_path).parent
    rows = read_jsonl(manifest_path)
    clip_cache: dict[str, AudioClip] = {}
    correlator = None
    records = []
    for row in rows:
        c = _clip_cache_load(base, row["clip_c"], clip_cache)
        d = _clip_cache_load(base, row["clip_d"], clip_cache)
        if correlator is None:
            if band_mode == "third_octave_32":
                bands = third_octave_bands(c.sample_rate_hz)
            elif band_mode == "essential_m":
                bands = essential_bands(band_config)
            else:
                raise ValueError(f"unknown band mode {band_mode!r}")
            correlator = BandCorrelator(bands, c.sample_rate_hz, max_lag_ms)
        vec = correlator.features(c, d)
        records.append({
            "kind": "similarity",
            "bands": [[b.low_hz, b.high_hz] for b in vec.bands],
            "scores": [float(s) for s in vec.scores],
            "label": int(row["label"]),
            "pair_id": row["pair_id"],
            "group": row.get("group", ""),
        })
    return records


def extract_liveness_records(manifest_path, task: str = "liveness") -> list[dict]:
    """Liveness features of the verifier-side clips in a manifest.

    task "liveness": label 1 when a loudspeaker is present.
    task "content": rows with a speaker only; label 1 when it plays drone
    noise (groups carry the speaker profile for LOSO).
    """
    base = Path(manifest_path).parent
    records = []
    for row in read_jsonl(manifest_path):
        truth = row.get("ground_truth")
        if truth is None:
            raise ValueError(
                f"{row.get('pair_id')}: manifest row lacks ground_truth; "
                "liveness extraction needs a speaker-study corpus")
        present = bool(truth["speaker_present"])
        if task == "liveness":
            label = 1 if present else 0
        elif task == "content":
            if not present:
                continue
            label = 1 if truth["speaker_content"] == "drone_noise" else 0
        else:
            raise ValueError(f"unknown task {task!r}")
        clip = load_wav(base / row["clip_c"], Origin.VERIFIER_SIDE)
        feats = extract_liveness_features(clip, DEFAULT_ESSENTIAL_BAND)
        records.append({
            "kind": ("liveness" if task == "liveness"
                     else "loudspeaker_content"),
            "scores": [float(v) for v in feats.as_array()],
            "label": label,
            "pair_id": row["pair_id"],
            "group": truth.get("speaker_profile") or "none",
        })
    return records
