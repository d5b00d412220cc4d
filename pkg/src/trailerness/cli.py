"""Command-line pipeline: synth, labels, train, predict, fuse, eval, grid.

Every stage is a pure function of its inputs, idempotent, and individually
re-runnable. Each run writes a machine-readable stage log (config echo plus
SHA-256 of the inputs) next to its outputs. Options can come from a JSON
config file (``--config``); explicit flags override config values.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import evaluation, features, fusion, hashmatch, model, plots
from .errors import InvalidInputError, MissingArtifactError, TrailernessError

DEFAULT_TAU = 10
DEFAULT_SEEDS = [0, 1, 2, 3, 4]


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _sha256_path(path: Path) -> str:
    path = Path(path)
    if path.is_dir():
        digest = hashlib.sha256()
        for p in sorted(path.rglob("*")):
            if p.is_file():
                digest.update(p.name.encode())
                digest.update(bytes.fromhex(_sha256_file(p)))
        return digest.hexdigest()
    return _sha256_file(path)


def _write_stage_log(out_dir: Path, stage: str, config: dict, inputs, outputs) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "stage": stage,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "config": config,
        "inputs": {str(p): _sha256_path(Path(p)) for p in inputs},
        "outputs": sorted(str(p) for p in outputs),
    }
    path = out_dir / f"stage_log_{stage}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise InvalidInputError(f"config {path} must hold a JSON object")
    return doc


def _pick(args, config: dict, key: str, default):
    """Flag value if given, else config-file value, else default."""
    val = getattr(args, key, None)
    if val is not None:
        return val
    if key in config:
        return config[key]
    return default


def _stream_config(args, config: dict, default_alpha: float = 0.95) -> model.StreamConfig:
    d_k = _pick(args, config, "d_k", 128)
    return model.StreamConfig(
        d_k=d_k,
        n_heads=_pick(args, config, "n_heads", 4),
        n_blocks=_pick(args, config, "n_blocks", 1),
        mlp_hidden=_pick(args, config, "mlp_hidden", None),
        alpha=_pick(args, config, "alpha", default_alpha),
        gamma=_pick(args, config, "gamma", 1.0),
        learning_rate=_pick(args, config, "learning_rate", 1e-4),
        n_epochs=_pick(args, config, "n_epochs", 200),
        seed=_pick(args, config, "seed", 0),
        early_stopping_patience=_pick(args, config, "early_stopping_patience", None),
        use_positional_encoding=_pick(args, config, "use_positional_encoding", True),
        decision_threshold=_pick(args, config, "threshold", 0.5),
        l2_normalize=bool(_pick(args, config, "l2_normalize", False)),
    )


def _canonical_streams(streams) -> tuple[str, ...]:
    seen = []
    for s in streams:
        if s not in features.STREAMS:
            raise InvalidInputError(f"unknown stream {s!r}")
        if s not in seen:
            seen.append(s)
    return tuple(sorted(seen, key=features.STREAMS.index))


def subset_tag(streams) -> str:
    return "+".join(_canonical_streams(streams))


def _gold_labels(ep: features.EpisodeRecord, labels_dir) -> np.ndarray:
    path = Path(labels_dir) / f"{ep.id}.jsonl" if labels_dir else ep.labels_path
    if not Path(path).exists():
        raise MissingArtifactError(
            f"{ep.id}: no frame labels at {path}; run the labels stage first"
        )
    return hashmatch.read_label_runs(path)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg_file = _load_config_file(args.config)
    out = Path(args.out)
    synth = features.SynthConfig(
        n_frames=_pick(args, cfg_file, "n_frames", 1920),
        n_shots=_pick(args, cfg_file, "n_shots", 12),
        trailer_fraction=_pick(args, cfg_file, "trailer_fraction", 0.2),
        signal_strength=_pick(args, cfg_file, "signal_strength", 1.0),
        noise_rate=_pick(args, cfg_file, "noise_rate", 0.0),
        d_visual=_pick(args, cfg_file, "d_visual", 16),
        d_text=_pick(args, cfg_file, "d_text", 12),
        frame_height=_pick(args, cfg_file, "frame_height", 64),
        frame_width=_pick(args, cfg_file, "frame_width", 64),
    )
    episodes = _pick(args, cfg_file, "episodes", 63)
    seed = _pick(args, cfg_file, "seed", 0)
    write_frames = not args.no_frames
    manifest_path = features.build_dataset(
        out, synth, episodes=episodes, seed=seed, write_frames=write_frames
    )
    echo = {
        "synth": synth.__dict__,
        "episodes": episodes,
        "seed": seed,
        "write_frames": write_frames,
    }
    _write_stage_log(out, "synth", echo, [], [manifest_path])
    print(f"wrote {manifest_path}")
    return 0


# ---------------------------------------------------------------------------
# labels
# ---------------------------------------------------------------------------


def cmd_labels(args) -> int:
    cfg_file = _load_config_file(args.config)
    manifest = features.load_manifest(args.manifest)
    tau = int(_pick(args, cfg_file, "tau", DEFAULT_TAU))
    exact = bool(args.exact)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    outputs = []
    inputs = [manifest.path]
    for ep in manifest.episodes_in(args.split):
        if ep.frames_dir is None or not ep.frames_dir.exists():
            raise MissingArtifactError(
                f"{ep.id}: no frame archive; run the synth stage with frames enabled"
            )
        if ep.trailer_dir is None or not ep.trailer_dir.exists():
            raise MissingArtifactError(
                f"{ep.id}: no trailer archive; run the synth stage with frames enabled"
            )
        ep_hashes = hashmatch.hash_frames_dir(ep.frames_dir)
        tr_hashes = hashmatch.hash_frames_dir(ep.trailer_dir)
        if exact:
            table = hashmatch.min_distance_table(ep_hashes, tr_hashes)
        else:
            table = hashmatch.min_distance_table_mih(ep_hashes, tr_hashes, tau)
        labels = hashmatch.label_frames(table, tau)
        dest = out / f"{ep.id}.jsonl"
        hashmatch.write_label_runs(dest, labels)
        outputs.append(dest)
        inputs += [ep.frames_dir, ep.trailer_dir]
    _write_stage_log(
        out, "labels", {"tau": tau, "exact": exact, "split": args.split}, inputs, outputs
    )
    print(f"labeled {len(outputs)} episodes -> {out}")
    return 0


# ---------------------------------------------------------------------------
# train / predict
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg_file = _load_config_file(args.config)
    manifest = features.load_manifest(args.manifest)
    kind = _pick(args, cfg_file, "model", "transformer")
    config = _stream_config(args, cfg_file, default_alpha=0.98 if kind == "mlp" else 0.95)
    out = Path(args.out)
    stream = features.stream_key(args.modality, args.scale)
    stream_dir = out / stream
    stream_dir.mkdir(parents=True, exist_ok=True)

    trained, history = model.train_stream(
        manifest, args.modality, args.scale, config,
        model_kind=kind, labels_dir=args.labels,
    )
    ckpt = stream_dir / f"seed{config.seed}.ckpt"
    model.save_model(
        ckpt, trained, meta={"modality": args.modality, "scale": args.scale, "stream": stream}
    )
    hist_path = stream_dir / f"seed{config.seed}_history.csv"
    model.save_history_csv(hist_path, history)

    inputs = [manifest.path]
    for ep in manifest.episodes_in("train") + manifest.episodes_in("val"):
        inputs.append(ep.feature_paths[stream])
    _write_stage_log(
        stream_dir,
        f"train_seed{config.seed}",
        {"stream": stream, "model": kind, "labels_dir": str(args.labels), **config.__dict__},
        inputs,
        [ckpt, hist_path],
    )
    print(f"trained {stream} (seed {config.seed}) -> {ckpt}")
    return 0


def cmd_predict(args) -> int:
    manifest = features.load_manifest(args.manifest)
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.exists():
        raise MissingArtifactError(f"no checkpoint at {ckpt_path}; run the train stage first")
    trained, meta = model.load_model(ckpt_path)
    modality, scale = meta["modality"], meta["scale"]
    stream = features.stream_key(modality, scale)
    seed = trained.config.seed
    out = Path(args.out) / stream / f"seed{seed}"
    out.mkdir(parents=True, exist_ok=True)

    inputs_ = model.load_stream_inputs(
        manifest, args.split, modality, scale,
        trained.config.l2_normalize, with_labels=False,
    )
    outputs = []
    for ex in inputs_:
        scores = trained.forward(ex.x)
        track = fusion.upsample_to_frames(scores, ex.bounds, ex.frame_count, (stream,))
        dest = out / f"{ex.episode_id}.trk"
        fusion.save_track(dest, track)
        outputs.append(dest)
    _write_stage_log(
        out,
        "predict",
        {"stream": stream, "seed": seed, "split": args.split},
        [manifest.path, ckpt_path],
        outputs,
    )
    print(f"predicted {len(outputs)} episodes -> {out}")
    return 0


# ---------------------------------------------------------------------------
# fuse / eval
# ---------------------------------------------------------------------------


def _load_pred_track(pred_root: Path, stream: str, seed: int, ep_id: str) -> fusion.FrameScoreTrack:
    path = pred_root / stream / f"seed{seed}" / f"{ep_id}.trk"
    if not path.exists():
        raise MissingArtifactError(
            f"no prediction for {stream} seed {seed} episode {ep_id}; run the predict stage first"
        )
    return fusion.load_track(path)


def cmd_fuse(args) -> int:
    cfg_file = _load_config_file(args.config)
    manifest = features.load_manifest(args.manifest)
    streams = _canonical_streams(_pick(args, cfg_file, "streams", list(features.STREAMS)))
    seeds = _pick(args, cfg_file, "seeds", DEFAULT_SEEDS)
    pred_root = Path(args.pred)
    tag = subset_tag(streams)
    out = Path(args.out) / tag
    outputs = []
    for seed in seeds:
        seed_dir = out / f"seed{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        for ep in manifest.episodes_in(args.split):
            tracks = [_load_pred_track(pred_root, s, seed, ep.id) for s in streams]
            fused = fusion.fuse(tracks)
            dest = seed_dir / f"{ep.id}.trk"
            fusion.save_track(dest, fused)
            outputs.append(dest)
    _write_stage_log(
        out,
        "fuse",
        {"streams": list(streams), "seeds": list(seeds), "split": args.split},
        [manifest.path, pred_root],
        outputs,
    )
    print(f"fused {tag} -> {out}")
    return 0


def _eval_tracks(
    manifest: features.Manifest,
    tracks_dir: Path,
    split: str,
    threshold: float,
    labels_dir=None,
    plots_dir: Path | None = None,
) -> evaluation.EvalReport:
    seed_dirs = sorted(
        tracks_dir.glob("seed*"), key=lambda p: int(p.name.removeprefix("seed"))
    )
    if not seed_dirs:
        raise MissingArtifactError(
            f"no seed directories under {tracks_dir}; run the fuse stage first"
        )
    episodes = manifest.episodes_in(split)
    triples, confusions, seeds = [], [], []
    mean_scores: dict[str, np.ndarray] = {}
    gold_by_ep: dict[str, np.ndarray] = {}
    for seed_dir in seed_dirs:
        seeds.append(int(seed_dir.name.removeprefix("seed")))
        preds, golds = [], []
        for ep in episodes:
            path = seed_dir / f"{ep.id}.trk"
            if not path.exists():
                raise MissingArtifactError(
                    f"no track for {ep.id} in {seed_dir}; run the fuse stage first"
                )
            track = fusion.load_track(path)
            gold = _gold_labels(ep, labels_dir)
            if track.frame_count != gold.size:
                raise InvalidInputError(
                    f"{ep.id}: track has {track.frame_count} frames, labels {gold.size}"
                )
            preds.append(evaluation.binarize(track.scores, threshold))
            golds.append(gold)
            gold_by_ep[ep.id] = gold
            if ep.id in mean_scores:
                mean_scores[ep.id] = mean_scores[ep.id] + track.scores
            else:
                mean_scores[ep.id] = track.scores.copy()
        pred_cat, gold_cat = np.concatenate(preds), np.concatenate(golds)
        triples.append(evaluation.prf1(pred_cat, gold_cat))
        confusions.append(evaluation.confusion_counts(pred_cat, gold_cat))
    report = evaluation.multi_seed_report(triples, seeds=seeds, confusions=confusions)
    if plots_dir is not None:
        plots_dir.mkdir(parents=True, exist_ok=True)
        for ep_id, total in mean_scores.items():
            scores = total / len(seed_dirs)
            gold = gold_by_ep[ep_id]
            (plots_dir / f"{ep_id}.txt").write_text(
                plots.ascii_timeline(scores, gold), encoding="utf-8"
            )
            (plots_dir / f"{ep_id}.svg").write_text(
                plots.svg_timeline(scores, gold), encoding="utf-8"
            )
    return report


def cmd_eval(args) -> int:
    cfg_file = _load_config_file(args.config)
    manifest = features.load_manifest(args.manifest)
    threshold = float(_pick(args, cfg_file, "threshold", 0.5))
    tracks_dir = Path(args.tracks)
    report = _eval_tracks(
        manifest,
        tracks_dir,
        args.split,
        threshold,
        labels_dir=args.labels,
        plots_dir=Path(args.plots) if args.plots else None,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.save(out)
    _write_stage_log(
        out.parent,
        f"eval_{tracks_dir.name}",
        {"threshold": threshold, "split": args.split, "tracks": str(tracks_dir)},
        [manifest.path, tracks_dir],
        [out],
    )
    print(f"report -> {out}")
    print(json.dumps(report.mean, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------


def all_stream_subsets() -> list[tuple[str, ...]]:
    """The 15 nonempty stream subsets: 4 singles, 6 pairs, 4 triples, 1 quad."""
    subsets = []
    for k in range(1, len(features.STREAMS) + 1):
        subsets.extend(itertools.combinations(features.STREAMS, k))
    return subsets


def cmd_grid(args) -> int:
    cfg_file = _load_config_file(args.config)
    manifest = features.load_manifest(args.manifest)
    seeds = list(_pick(args, cfg_file, "seeds", DEFAULT_SEEDS))
    base = _stream_config(args, cfg_file)
    per_stream = cfg_file.get("per_stream", {})
    for stream, overrides in per_stream.items():
        if stream not in features.STREAMS:
            raise InvalidInputError(f"per_stream config names unknown stream {stream!r}")
        unknown = set(overrides) - set(base.__dict__)
        if unknown:
            raise InvalidInputError(f"per_stream config for {stream}: unknown {unknown}")
    out = Path(args.out)
    pred_root = out / "predictions"
    models_dir = out / "models"
    threshold = base.decision_threshold

    for stream in features.STREAMS:
        modality, scale = features.split_stream_key(stream)
        for seed in seeds:
            config = model.StreamConfig(
                **{**base.__dict__, **per_stream.get(stream, {}), "seed": seed}
            )
            trained, history = model.train_stream(
                manifest, modality, scale, config, labels_dir=args.labels
            )
            sdir = models_dir / stream
            sdir.mkdir(parents=True, exist_ok=True)
            model.save_model(
                sdir / f"seed{seed}.ckpt",
                trained,
                meta={"modality": modality, "scale": scale, "stream": stream},
            )
            model.save_history_csv(sdir / f"seed{seed}_history.csv", history)
            inputs_ = model.load_stream_inputs(
                manifest, "test", modality, scale, config.l2_normalize, with_labels=False
            )
            seed_dir = pred_root / stream / f"seed{seed}"
            seed_dir.mkdir(parents=True, exist_ok=True)
            for ex in inputs_:
                track = fusion.upsample_to_frames(
                    trained.forward(ex.x), ex.bounds, ex.frame_count, (stream,)
                )
                fusion.save_track(seed_dir / f"{ex.episode_id}.trk", track)

    report_dir = out / "reports"
    report_dir.mkdir(parents=True, exist_ok=True)
    summary = {}
    for subset in all_stream_subsets():
        tag = subset_tag(subset)
        fused_dir = out / "fused" / tag
        for seed in seeds:
            seed_dir = fused_dir / f"seed{seed}"
            seed_dir.mkdir(parents=True, exist_ok=True)
            for ep in manifest.episodes_in("test"):
                tracks = [_load_pred_track(pred_root, s, seed, ep.id) for s in subset]
                fusion.save_track(seed_dir / f"{ep.id}.trk", fusion.fuse(tracks))
        report = _eval_tracks(
            manifest,
            fused_dir,
            "test",
            threshold,
            labels_dir=args.labels,
            plots_dir=out / "plots" / tag,
        )
        report.save(report_dir / f"{tag}.json")
        summary[tag] = report.mean
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_stage_log(
        out,
        "grid",
        {"seeds": seeds, "threshold": threshold, "per_stream": per_stream, **base.__dict__},
        [manifest.path],
        [report_dir / f"{subset_tag(s)}.json" for s in all_stream_subsets()],
    )
    print(f"grid complete: {len(summary)} reports -> {report_dir}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_stream_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d-k", dest="d_k", type=int)
    p.add_argument("--heads", dest="n_heads", type=int)
    p.add_argument("--blocks", dest="n_blocks", type=int)
    p.add_argument("--mlp-hidden", dest="mlp_hidden", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--epochs", dest="n_epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--early-stopping-patience", dest="early_stopping_patience", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--l2-normalize", dest="l2_normalize", action="store_const", const=True)
    p.add_argument("--no-positional-encoding", dest="use_positional_encoding",
                   action="store_const", const=False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trailerness",
        description="Trailer-moment labeling and scoring pipeline on pre-extracted features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset with planted ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--episodes", type=int)
    p.add_argument("--frames", dest="n_frames", type=int)
    p.add_argument("--shots", dest="n_shots", type=int)
    p.add_argument("--trailer-fraction", dest="trailer_fraction", type=float)
    p.add_argument("--signal-strength", dest="signal_strength", type=float)
    p.add_argument("--noise-rate", dest="noise_rate", type=float)
    p.add_argument("--d-visual", dest="d_visual", type=int)
    p.add_argument("--d-text", dest="d_text", type=int)
    p.add_argument("--frame-height", dest="frame_height", type=int)
    p.add_argument("--frame-width", dest="frame_width", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-frames", action="store_true", help="skip frame/trailer archives")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("labels", help="generate editor labels by hash matching")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--tau", type=int)
    p.add_argument("--exact", action="store_true", help="use the exhaustive search")
    p.add_argument("--split", default="all")
    p.set_defaults(func=cmd_labels)

    p = sub.add_parser("train", help="train one stream scorer")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--modality", required=True, choices=features.MODALITIES)
    p.add_argument("--scale", required=True, choices=features.SCALES)
    p.add_argument("--model", choices=("transformer", "mlp"))
    p.add_argument("--labels", help="directory of label files overriding the manifest")
    _add_stream_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score episodes with a trained checkpoint")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("fuse", help="fuse per-stream frame tracks by averaging")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred", required=True, help="root directory written by predict")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--streams", nargs="+", choices=features.STREAMS)
    p.add_argument("--seeds", nargs="+", type=int)
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="score fused tracks against editor labels")
    p.add_argument("--manifest", required=True)
    p.add_argument("--tracks", required=True, help="subset directory written by fuse")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--config")
    p.add_argument("--labels", help="directory of label files overriding the manifest")
    p.add_argument("--threshold", type=float)
    p.add_argument("--plots", help="directory for per-episode timeline plots")
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid", help="train, fuse, and evaluate every stream subset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--labels", help="directory of label files overriding the manifest")
    p.add_argument("--seeds", nargs="+", type=int)
    _add_stream_config_flags(p)
    p.set_defaults(func=cmd_grid)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrailernessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
