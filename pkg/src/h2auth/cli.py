"""Operator CLI: corpus generation, feature extraction, training,
evaluation, session simulation, and attack campaigns.

All configuration comes from JSON files plus flag overrides; every file a
command reads must carry its own seeds, so reports are reproducible
byte-for-byte. Exit codes: 0 success, 1 pipeline failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .attack_detect import GateConfig, Overall
from .classify import (
    FeatureKind,
    cross_validate,
    decision_scores,
    evaluate,
    load_model,
    save_model,
    train_knn,
    train_linear_svm,
)
from .errors import H2AuthError
from .protocol import (
    Decision,
    DecisionPipeline,
    Endpoint,
    SessionConfig,
    Side,
    run_session,
)
from .similarity import EssentialBandConfig
from .synth import (
    AttackKind,
    AttackSpec,
    CorpusPlan,
    Environment,
    ScenarioSpec,
    ScenarioWorld,
    SpeakerCorpusPlan,
    stage_scenario,
)

SCHEMA_VERSION = 1


class UsageError(Exception):
    """Bad flags or unparseable/invalid config schema (exit 2)."""


def _data_dir() -> Path:
    return Path(os.environ.get("H2AUTH_DATA_DIR", "."))


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: not valid JSON ({exc})") from exc


def _config_hash(payload) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_report(path: Path, payload: dict) -> None:
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    _atomic_write_text(path, json.dumps(payload, indent=1, sort_keys=True))


def _plan_from_json(data: dict):
    data = dict(data)
    task = data.pop("task", "similarity")
    try:
        if task == "similarity":
            if "environments" in data:
                data["environments"] = tuple(
                    Environment(e) for e in data["environments"])
            return CorpusPlan(**data)
        if task == "speaker_study":
            for key in ("levels_db", "profiles"):
                if key in data:
                    data[key] = tuple(data[key])
            return SpeakerCorpusPlan(**data)
    except TypeError as exc:
        raise UsageError(f"bad plan field: {exc}") from exc
    raise UsageError(f"unknown plan task {task!r}")


def _gate_from_args(args) -> GateConfig:
    if getattr(args, "gate_config", None):
        return GateConfig.from_dict(_load_json(args.gate_config))
    return GateConfig()


def _band_config_from_args(args) -> EssentialBandConfig:
    return EssentialBandConfig(args.band_low_hz, args.band_high_hz,
                               args.m_parts)


# --- subcommands -------------------------------------------------------------

def cmd_synth(args) -> int:
    plan_data = _load_json(args.plan)
    if args.seed is not None:
        plan_data["seed"] = args.seed
    plan = _plan_from_json(plan_data)
    out_dir = Path(args.out) if args.out else _data_dir() / "corpus"
    manifest = corpus_mod.generate_corpus(plan, out_dir)
    n_rows = len(corpus_mod.read_jsonl(manifest))
    _write_report(out_dir / "synth_report.json", {
        "manifest": str(manifest),
        "rows": n_rows,
        "plan": plan_data,
        "config_hash": _config_hash(plan_data),
    })
    print(f"wrote {n_rows} manifest rows to {manifest}")
    return 0


def cmd_extract(args) -> int:
    manifest = Path(args.manifest)
    if not manifest.exists():
        manifest = _data_dir() / args.manifest
    if not manifest.exists():
        raise UsageError(f"manifest not found: {args.manifest}")
    if args.features == "similarity":
        records = corpus_mod.extract_similarity_records(
            manifest,
            band_mode=args.band_mode,
            band_config=_band_config_from_args(args),
            max_lag_ms=args.max_lag_ms)
    else:
        records = corpus_mod.extract_liveness_records(manifest,
                                                      task=args.features)
    corpus_mod.write_jsonl(args.out, records)
    print(f"wrote {len(records)} feature records to {args.out}")
    return 0


def _load_features(path) -> tuple[np.ndarray, np.ndarray, np.ndarray, str]:
    rows = corpus_mod.read_jsonl(path)
    if not rows:
        raise UsageError(f"{path}: empty feature file")
    kind = rows[0].get("kind", "similarity")
    X = np.array([r["scores"] for r in rows], dtype=np.float64)
    y = np.array([r["label"] for r in rows], dtype=int)
    groups = np.array([r.get("group", "") for r in rows], dtype=object)
    return X, y, groups, kind


_KIND_MAP = {
    "similarity": FeatureKind.SIMILARITY,
    "liveness": FeatureKind.LOUDSPEAKER_PRESENCE,
    "loudspeaker_content": FeatureKind.LOUDSPEAKER_CONTENT,
}


def cmd_train(args) -> int:
    X, y, _, kind = _load_features(args.features)
    feature_kind = _KIND_MAP.get(kind)
    if feature_kind is None:
        raise UsageError(f"unknown feature kind {kind!r}")
    if args.model_kind == "svm":
        model = train_linear_svm(X, y, c=args.c, epochs=args.epochs,
                                 seed=args.seed, feature_kind=feature_kind)
    else:
        raise UsageError("only svm models can be saved; knn is a reference "
                         "classifier (use eval --classifier knn)")
    save_model(model, args.out)
    print(f"trained {args.model_kind} on {len(y)} rows -> {args.out}")
    return 0


def _roc_table(report) -> str:
    lines = ["threshold      FAR      TPR",
             "-----------  -------  -------"]
    points = report.roc_points
    step = max(1, len(points) // 20)
    for far, tpr, thr in points[::step]:
        lines.append(f"{thr:11.4g}  {far:7.4f}  {tpr:7.4f}")
    return "\n".join(lines)


def cmd_eval(args) -> int:
    X, y, groups, _ = _load_features(args.features)
    payload: dict = {"features": str(args.features), "mode": args.mode,
                     "seed": args.seed,
                     "config_hash": _config_hash({"mode": args.mode,
                                                  "c": args.c,
                                                  "epochs": args.epochs,
                                                  "seed": args.seed})}
    if args.mode == "holdout":
        if not args.model:
            raise UsageError("--model is required for holdout evaluation")
        model = load_model(args.model)
        report = evaluate(decision_scores(model, X), y,
                          threshold=model.threshold)
        payload["report"] = report.to_dict()
        table = _roc_table(report)
    else:
        if args.mode.startswith("kfold"):
            folds = int(args.mode.split(":")[1]) if ":" in args.mode else 10
            cv = cross_validate(X, y, folds=folds, mode="stratified",
                                seed=args.seed, c=args.c, epochs=args.epochs)
        elif args.mode == "loso":
            cv = cross_validate(X, y, mode="leave_one_group_out",
                                groups=groups, seed=args.seed, c=args.c,
                                epochs=args.epochs)
        else:
            raise UsageError(f"unknown mode {args.mode!r}")
        payload["report"] = cv.to_dict()
        table = _roc_table(cv.fold_reports[0])
        print(f"mean EER {cv.mean_eer:.4f} (std {cv.std_eer:.4f}), "
              f"mean AUC {cv.mean_auc:.4f}")

    out = Path(args.out)
    _write_report(out, payload)
    _atomic_write_text(out.with_suffix(".roc.txt"), table + "\n")
    print(table)
    print(f"report -> {out}")
    return 0


def _pipeline_from_args(args, gate: GateConfig) -> DecisionPipeline:
    similarity = load_model(args.similarity_model)
    liveness = load_model(args.liveness_model) if args.liveness_model else None
    content = load_model(args.content_model) if args.content_model else None
    return DecisionPipeline(similarity_model=similarity, gate=gate,
                            liveness_model=liveness, content_model=content)


def cmd_session(args) -> int:
    scenario = ScenarioSpec.from_dict(_load_json(args.scenario))
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    session_data = _load_json(args.session_config) if args.session_config else {}
    gate = _gate_from_args(args)
    cfg = SessionConfig(
        shared_key=bytes.fromhex(session_data.get("shared_key_hex", "00" * 16)),
        record_duration_s=session_data.get("record_duration_s",
                                           scenario.duration_s),
        max_attempts=(args.attempts if args.attempts is not None
                      else session_data.get("max_attempts", 3)),
        gate=gate,
        similarity_model_ref=args.similarity_model,
        liveness_model_ref=args.liveness_model,
        content_model_ref=args.content_model,
    )
    pipeline = _pipeline_from_args(args, gate)
    drone = Endpoint(Side.DRONE, cfg, pipeline)
    verifier = Endpoint(Side.VERIFIER, cfg, pipeline)
    transcript = run_session(drone, verifier, cfg, ScenarioWorld(scenario))
    out = Path(args.out)
    payload = json.loads(transcript.to_json())
    payload["timings"] = transcript.timings
    _write_report(out, {"transcript": payload,
                        "scenario_hash": _config_hash(scenario.to_dict())})
    print(f"drone={transcript.drone_decision.value} "
          f"verifier={transcript.verifier_decision.value} "
          f"attempts={transcript.attempts_used} "
          f"decision_time={transcript.timings['decision_s']:.3f}s")
    return 0


def cmd_attack_campaign(args) -> int:
    grid = _load_json(args.grid)
    gate = _gate_from_args(args)
    pipeline = _pipeline_from_args(args, gate)
    base_scenario = ScenarioSpec.from_dict(grid["base_scenario"])
    sessions = int(grid.get("sessions_per_cell", 200))
    seed0 = int(grid.get("seed", 0))
    results = []
    for cell in grid["cells"]:
        kind = AttackKind(cell["attack"])
        level = float(cell.get("level_db", 0.0))
        attack = AttackSpec(kind=kind, level_db=level,
                            content=cell.get("content", "drone_noise"),
                            speaker_profile=cell.get("speaker_profile",
                                                     "reference"))
        env_level = cell.get("env_level_db")
        sim_only_accepts = 0
        gated_accepts = 0
        level_gate_rejects = 0
        for s in range(sessions):
            seed = int(np.random.SeedSequence(
                [seed0, hash(kind.value) & 0xFFFF, int(level * 10), s]
            ).generate_state(1, dtype=np.uint64)[0])
            spec = replace(base_scenario, attack=attack, seed=seed,
                           env_level_db=env_level)
            out = stage_scenario(spec)
            gated = pipeline.decide(out.verifier_side_clip,
                                    out.drone_side_clip, Side.VERIFIER)
            sim_only_accepts += int(gated.similar)
            gated_accepts += int(gated.decision is Decision.ACCEPT)
            level_gate_rejects += int(
                gated.verdict.overall is Overall.ATTACK_SUSPECTED)
        results.append({
            "attack": kind.value,
            "level_db": level,
            "env_level_db": env_level,
            "sessions": sessions,
            "similarity_only_acceptance": sim_only_accepts / sessions,
            "gated_acceptance": gated_accepts / sessions,
            "gate_flag_rate": level_gate_rejects / sessions,
        })
        print(f"{kind.value:16s} {level:6.1f} dB  "
              f"sim-only {sim_only_accepts / sessions:5.3f}  "
              f"gated {gated_accepts / sessions:5.3f}")

    _write_report(Path(args.out), {
        "grid": grid,
        "config_hash": _config_hash(grid),
        "results": results,
    })
    print(f"campaign report -> {args.out}")
    return 0


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="h2auth",
        description="Drone noise mutual-authentication pipeline tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--plan", required=True, help="corpus plan JSON")
    p.add_argument("--out", help="output directory "
                                 "(default $H2AUTH_DATA_DIR/corpus)")
    p.add_argument("--seed", type=int, help="override the plan seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="extract feature vectors")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", default="similarity",
                   choices=["similarity", "liveness", "content"])
    p.add_argument("--band-mode", default="essential_m",
                   choices=["essential_m", "third_octave_32"])
    p.add_argument("--band-low-hz", type=float, default=300.0)
    p.add_argument("--band-high-hz", type=float, default=500.0)
    p.add_argument("--m-parts", type=int, default=5)
    p.add_argument("--max-lag-ms", type=float, default=50.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train a classifier")
    p.add_argument("--features", required=True)
    p.add_argument("--model-kind", default="svm", choices=["svm"])
    p.add_argument("--c", type=float, default=5.0)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate features/models")
    p.add_argument("--features", required=True)
    p.add_argument("--mode", default="kfold:10",
                   help="holdout | kfold:N | loso")
    p.add_argument("--model", help="model file (holdout mode)")
    p.add_argument("--c", type=float, default=5.0)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("session", help="simulate one authentication session")
    p.add_argument("--scenario", required=True, help="scenario JSON")
    p.add_argument("--session-config", help="session config JSON")
    p.add_argument("--gate-config", help="gate config JSON")
    p.add_argument("--similarity-model", required=True)
    p.add_argument("--liveness-model")
    p.add_argument("--content-model")
    p.add_argument("--attempts", type=int, help="override max attempts")
    p.add_argument("--seed", type=int, help="override scenario seed")
    p.add_argument("--out", required=True, help="transcript JSON path")
    p.set_defaults(func=cmd_session)

    p = sub.add_parser("attack-campaign",
                       help="sweep attacks, report acceptance rates")
    p.add_argument("--grid", required=True, help="campaign grid JSON")
    p.add_argument("--gate-config")
    p.add_argument("--similarity-model", required=True)
    p.add_argument("--liveness-model")
    p.add_argument("--content-model")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attack_campaign)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except H2AuthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
