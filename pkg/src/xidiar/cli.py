"""Command-line entry point: ``xidiar <verb> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import DiarizationError


def _geometry(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("geometry is max_len,overlap,min_len")
    return tuple(float(p) for p in parts)


def cmd_run(args) -> int:
    from .corpus import run_directory
    from .pipeline import RunConfig

    base = RunConfig.load(args.config).__dict__ if args.config else {}
    base = dict(base)
    overrides = {
        "corpus_dir": args.corpus,
        "models_dir": args.models,
        "output_dir": args.output,
        "profiles": args.profiles,
        "engine": args.engine,
        "profile": args.profile,
        "ahc_threshold": args.threshold,
        "kaldi_threshold": args.kaldi_threshold,
        "seed": args.seed,
        "workers": args.workers,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    config = RunConfig.from_dict(base)
    results = run_directory(config)
    for r in results:
        print(f"{r.uri}\t{r.decision.label}\t{r.final.engine.value}\t{len(r.final.hypothesis)} turns")
    scores = Path(config.output_dir) / "scores.txt"
    if scores.exists():
        print(scores.read_text(), end="")
    return 0


def cmd_score(args) -> int:
    from .formats import read_rttm, read_uem
    from .scoring import score_files

    refs = read_rttm(args.ref)
    hyps = read_rttm(args.hyp)
    uems = read_uem(args.uem) if args.uem else None
    report = score_files(refs, hyps, uems)
    print(report.to_json() if args.json else report.to_table(), end="")
    return 0


def cmd_segment(args) -> int:
    from .formats import format_segments, read_sad, read_track
    from .segmentation import KALDI_GEOMETRY, SD_GEOMETRY, kaldi_segments, segment_conversation

    sad = read_sad(args.sad, args.uri)
    if args.kaldi:
        segs = kaldi_segments(sad, args.geometry or KALDI_GEOMETRY)
    else:
        track = read_track(args.scd) if args.scd else None
        segs = segment_conversation(sad, track, args.threshold, args.min_duration, args.geometry or SD_GEOMETRY)
    sys.stdout.write(format_segments(segs))
    return 0


def cmd_cluster(args) -> int:
    from .clustering import ahc, cosine_distance_matrix, k_medoids
    from .formats import read_matrix
    from .plda import PldaModel, plda_distance_matrix

    x = read_matrix(args.embeddings)
    if args.plda:
        model = PldaModel.from_json(Path(args.plda).read_text())
        dist = plda_distance_matrix(model, x, shift=args.method == "kmedoids")
    else:
        dist = cosine_distance_matrix(x)
    if args.method == "ahc":
        if args.threshold is None:
            raise DiarizationError("ahc needs --threshold", stage="clustering")
        assign = ahc(dist, args.threshold, args.k_min, args.k_max)
    else:
        if args.k is None:
            raise DiarizationError("kmedoids needs --k", stage="clustering")
        assign = k_medoids(dist, args.k)
    sys.stdout.write("".join(f"{l}\n" for l in assign.labels))
    return 0


def cmd_reseg(args) -> int:
    from .features import FeatureKind, FeatureMatrix
    from .formats import format_rttm, read_matrix, read_rttm, read_sad
    from .resegmentation import resegment

    hyps = read_rttm(args.hyp)
    uri = args.uri or (next(iter(hyps)) if len(hyps) == 1 else None)
    if uri is None or uri not in hyps:
        raise DiarizationError("hypothesis RTTM must hold exactly one uri, or pass --uri", stage="resegmentation")
    feats = FeatureMatrix(read_matrix(args.feats), args.frame_shift, kind=FeatureKind.LFCC_CMN)
    sad = read_sad(args.sad, uri)
    out = resegment(feats, hyps[uri], sad, seed=args.seed)
    sys.stdout.write(format_rttm(out))
    return 0


def cmd_classify_domain(args) -> int:
    from .domain import classify_domain
    from .formats import read_matrix, read_mlp

    s1, s2 = read_mlp(args.stage1), read_mlp(args.stage2)
    rows = read_matrix(args.vectors)
    out = []
    for x in rows:
        d = classify_domain(s1, s2, x, args.threshold)
        out.append({"label": d.label, "stage1_prob": d.stage1_prob, "stage2_posteriors": d.stage2_posteriors})
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_gen_synth(args) -> int:
    from .corpus import write_synthetic_corpus

    cdir, mdir = write_synthetic_corpus(
        args.out, args.conversations, args.speakers, args.duration, args.separation, args.seed, args.domain
    )
    print(f"corpus: {cdir}\nmodels: {mdir}")
    return 0


def cmd_serve(args) -> int:
    try:
        import uvicorn
    except ImportError:
        print("serving needs uvicorn: pip install 'artifact[serve]'", file=sys.stderr)
        return 1
    uvicorn.run("xidiar.service:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xidiar", description="Domain-aware speaker diarization with xi-vectors.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="full pipeline over a corpus directory")
    r.add_argument("--config", help="JSON run configuration")
    r.add_argument("--corpus")
    r.add_argument("--models")
    r.add_argument("-o", "--output")
    r.add_argument("--profiles", help="profile registry JSON")
    r.add_argument("--engine", choices=["combine", "sd", "kaldi"])
    r.add_argument("--profile", help="force a domain profile, skipping the classifier")
    r.add_argument("--threshold", type=float, help="override the profile's AHC threshold")
    r.add_argument("--kaldi-threshold", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--workers", type=int)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("score", help="DER/JER of hypothesis RTTM against reference RTTM")
    s.add_argument("--ref", required=True)
    s.add_argument("--hyp", required=True)
    s.add_argument("--uem")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_score)

    g = sub.add_parser("segment", help="subsegments from SAD (and a change track)")
    g.add_argument("--sad", required=True)
    g.add_argument("--uri")
    g.add_argument("--scd", help="change-score track matrix")
    g.add_argument("--threshold", type=float, default=0.5)
    g.add_argument("--min-duration", type=float, default=0.5)
    g.add_argument("--geometry", type=_geometry, help="max_len,overlap,min_len")
    g.add_argument("--kaldi", action="store_true", help="uniform segmentation without change cutting")
    g.set_defaults(func=cmd_segment)

    c = sub.add_parser("cluster", help="cluster an embedding matrix; prints one label per row")
    c.add_argument("--embeddings", required=True)
    c.add_argument("--method", choices=["ahc", "kmedoids"], default="ahc")
    c.add_argument("--plda", help="PLDA model JSON; uses -LLR distances instead of cosine")
    c.add_argument("--threshold", type=float)
    c.add_argument("--k-min", type=int, default=1)
    c.add_argument("--k-max", type=int)
    c.add_argument("--k", type=int)
    c.set_defaults(func=cmd_cluster)

    rs = sub.add_parser("reseg", help="GMM resegmentation of a hypothesis")
    rs.add_argument("--feats", required=True)
    rs.add_argument("--hyp", required=True)
    rs.add_argument("--sad", required=True)
    rs.add_argument("--uri")
    rs.add_argument("--frame-shift", type=float, default=0.01)
    rs.add_argument("--seed", type=int, default=0)
    rs.set_defaults(func=cmd_reseg)

    d = sub.add_parser("classify-domain", help="two-stage domain decision per vector row")
    d.add_argument("--stage1", required=True)
    d.add_argument("--stage2", required=True)
    d.add_argument("--vectors", required=True)
    d.add_argument("--threshold", type=float, default=0.6)
    d.set_defaults(func=cmd_classify_domain)

    y = sub.add_parser("gen-synth", help="write a synthetic corpus and model directory")
    y.add_argument("-o", "--out", required=True)
    y.add_argument("--conversations", type=int, default=2)
    y.add_argument("--speakers", type=int, default=3)
    y.add_argument("--duration", type=float, default=300.0)
    y.add_argument("--separation", type=float, default=6.0)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--domain", default="SLX", help="domain the fixture classifiers route to")
    y.set_defaults(func=cmd_gen_synth)

    v = sub.add_parser("serve", help="HTTP service")
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--port", type=int, default=8000)
    v.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    logging.captureWarnings(True)
    try:
        return args.func(args)
    except DiarizationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
