"""Command-line front end: detect, infer, mitigate, synth and eval."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Sequence

from . import __version__
from .activity import ActivityParams
from .detect import DetectionParams, format_report
from .displacement import FlowParams
from .evaluate import DEFAULT_KS, EvalReport, evaluate_clip, mean_curves, pool_scores
from .frames import FrameSequence, ManifestError, load_manifest, read_raster, save_sequence
from .infer import (KeyboardLayout, LayoutError, RankedDictionary, bundled_dictionary, default_layout,
                    extended_layout, find_known_string)
from .mitigate import KINDS, SKIP, MitigationConfig, apply_mitigation, format_drop_log
from .motion import dump_csv
from .pipeline import Analysis, PipelineConfig, analyze, format_bursts, format_vectors, infer_words
from .preprocess import (DEFAULT_DIFF_THRESHOLD, DifferencingMasks, FaceBox, Hand, SidecarFaceboxes,
                         SidecarMasks, StaticFacebox)
from .synth import (Distractor, ScenarioError, SynthScenario, generate, load_truth, random_words,
                    read_keylog, write_clip)

log = logging.getLogger("vidkeys")

TIMELINE = "timeline.txt"
EVENTS = "events.txt"
BURSTS = "bursts.txt"
VECTORS = "vectors.txt"
KNOWN = "known.txt"
REPORT = "report.txt"
DROPPED = "dropped.txt"
KEPT = "kept.txt"
EVAL_REPORT = "eval_report.csv"

DEFAULT_MITIGATIONS = (MitigationConfig.blur(), MitigationConfig.pixelate(), MitigationConfig.skip())
SESSION_DISTRACTORS = ("mouse-reach@0.3+4:right", "one-hand-scroll@0.6+4:right", "idle@0.8+3:left")


# ---- argument groups -------------------------------------------------------

def _add_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("manifest", help="frame manifest (fps=, resolution=, one frame path per line)")
    seg = p.add_mutually_exclusive_group(required=True)
    seg.add_argument("--masks", metavar="MANIFEST", help="manifest of per-frame body masks")
    seg.add_argument("--background", metavar="IMAGE", help="empty-scene reference for differencing")
    p.add_argument("--diff-threshold", type=float, default=DEFAULT_DIFF_THRESHOLD,
                   help="gray-level threshold used with --background (default %(default)s)")
    face = p.add_mutually_exclusive_group(required=True)
    face.add_argument("--faceboxes", metavar="FILE", help="face box sidecar: 'frame j k a b' lines")
    face.add_argument("--facebox", type=int, nargs=4, metavar=("J", "K", "A", "B"),
                      help="static face box annotated on the first frame")


def _add_params(p: argparse.ArgumentParser) -> None:
    d, a, f = DetectionParams(), ActivityParams(), FlowParams()
    g = p.add_argument_group("detection")
    g.add_argument("--phi-a", type=float, default=d.phi_a)
    g.add_argument("--phi-b", type=float, default=d.phi_b)
    g.add_argument("--phi-c", type=float, default=d.phi_c)
    g = p.add_argument_group("activity")
    g.add_argument("--no-activity", action="store_true", help="accept every detected event")
    g.add_argument("--max-rate", type=float, default=a.max_rate)
    g.add_argument("--min-rate", type=float, default=a.min_rate)
    g.add_argument("--location-threshold", type=float, default=a.location_threshold,
                   help="pixels at 1080 rows, scaled to the frame height (default %(default)s)")
    g.add_argument("--exclusive-run", type=int, default=a.exclusive_run)
    g.add_argument("--exclusive-window", type=float, default=a.exclusive_window_s, help="seconds")
    g = p.add_argument_group("displacement")
    g.add_argument("--canny-low", type=float, default=f.canny_low)
    g.add_argument("--canny-high", type=float, default=f.canny_high)
    g.add_argument("--epsilon", type=float, default=f.epsilon, help="direction dead zone in px")
    g.add_argument("--lk-window", type=int, default=f.window)
    g.add_argument("--lk-levels", type=int, default=f.levels)
    g.add_argument("--fb-threshold", type=float, default=f.fb_threshold,
                   help="forward-backward tracking tolerance in px; 0 disables the check")
    g.add_argument("--burst-gap", type=float, default=1.0, help="seconds of silence that end a word")


def _add_dictionary(p: argparse.ArgumentParser, multiple: bool = False) -> None:
    if multiple:
        p.add_argument("--dictionary", action="append", metavar="4k|65k|FILE",
                       help="ranked word list; repeat for several (default 4k)")
    else:
        p.add_argument("--dictionary", default="4k", metavar="4k|65k|FILE",
                       help="ranked word list (default %(default)s)")
    p.add_argument("--layout", default="letters", metavar="letters|extended|FILE",
                   help="keyboard layout (default %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vidkeys", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect keystrokes and label typing activity")
    _add_inputs(p)
    _add_params(p)
    p.add_argument("--dump-dssim", action="store_true", help="also write dssim_left.csv / dssim_right.csv")
    p.add_argument("--out", default=".", help="output directory (default: current)")

    p = sub.add_parser("infer", help="predict typed words from a frame sequence")
    _add_inputs(p)
    _add_params(p)
    _add_dictionary(p)
    p.add_argument("--top-k", type=int, default=200, help="candidates kept per word (default %(default)s)")
    p.add_argument("--known-string", action="append", default=[], metavar="TEXT",
                   help="also locate where TEXT may have been typed; repeatable")
    p.add_argument("--out", default=".")

    p = sub.add_parser("mitigate", help="blur, pixelate or drop frames around keystrokes")
    p.add_argument("manifest")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--z", type=float, help="strength for blur (default 0.20) or pixelate (default 0.07)")
    p.add_argument("--f", type=int, help="frames dropped each side of a keystroke (default 5)")
    p.add_argument("--keylog", help="keystroke frames: 'frame [key hand]' lines (default: truth keylog)")
    p.add_argument("--truth", metavar="DIR", help="synthetic clip directory, enables the effectiveness score")
    p.add_argument("--eval-k", type=int, default=50, help="recovery rank used for effectiveness")
    p.add_argument("--dictionary", default="4k", metavar="4k|65k|FILE")
    p.add_argument("--no-quality", action="store_true", help="skip the SSIM quality measurement")
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="render a synthetic typing clip with ground truth")
    p.add_argument("--scenario", help="key=value scenario file; other flags override it")
    p.add_argument("--words", help="words to type, comma or space separated")
    p.add_argument("--random-words", type=int, metavar="N", help="type N random words from the 4k list")
    p.add_argument("--seed", type=int)
    p.add_argument("--rate", type=float)
    p.add_argument("--style", choices=("hunt-peck", "hybrid", "touch"))
    p.add_argument("--camera-jitter", type=float)
    p.add_argument("--posture-drift", type=float)
    p.add_argument("--distractor", action="append", metavar="KIND@START+DUR[:HAND]",
                   help="kind is mouse-reach, one-hand-scroll or idle; repeatable")
    p.add_argument("--fps", type=float)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--layout", metavar="letters|extended|FILE")
    p.add_argument("--gray", action="store_true", help="write grayscale frames")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score the attack and the mitigations on synthetic clips")
    p.add_argument("--synth-dir", action="append", metavar="DIR",
                   help="evaluate an existing synth output; repeatable (otherwise clips are generated)")
    p.add_argument("--clips", type=int, default=3)
    p.add_argument("--words", type=int, default=20, help="words per generated clip")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--style", choices=("hunt-peck", "hybrid", "touch"), default="hybrid")
    p.add_argument("--distractors", action="store_true",
                   help="add a mouse reach, a one-hand scroll and an idle spell to each generated clip")
    p.add_argument("--mitigations", action="store_true", help="also score blur, pixelate and skip at defaults")
    p.add_argument("--k", type=int, action="append", help="recovery ranks (default 1 5 10 25 50 100 200)")
    _add_dictionary(p, multiple=True)
    _add_params(p)
    p.add_argument("--out", default=".")
    return parser


# ---- config builders -------------------------------------------------------

def pipeline_config(args: argparse.Namespace, top_k: int | None = None) -> PipelineConfig:
    return PipelineConfig(
        detection=DetectionParams(args.phi_a, args.phi_b, args.phi_c),
        activity=ActivityParams(max_rate=args.max_rate, min_rate=args.min_rate,
                                location_threshold=args.location_threshold,
                                exclusive_run=args.exclusive_run, exclusive_window_s=args.exclusive_window),
        flow=FlowParams(canny_low=args.canny_low, canny_high=args.canny_high, window=args.lk_window,
                        levels=args.lk_levels, epsilon=args.epsilon,
                        fb_threshold=args.fb_threshold if args.fb_threshold else None),
        use_activity=not args.no_activity,
        burst_gap_s=args.burst_gap,
        top_k=top_k,
    )


def resolve_layout(name: str) -> KeyboardLayout:
    if name == "letters":
        return default_layout()
    if name == "extended":
        return extended_layout()
    return KeyboardLayout.from_file(name)


def resolve_dictionary(name: str) -> RankedDictionary:
    if name in ("4k", "65k"):
        return bundled_dictionary(name)
    path = Path(name)
    if not path.is_file():
        raise FileNotFoundError(f"dictionary not found: {path}")
    return RankedDictionary.from_file(path)


def _providers(args: argparse.Namespace):
    if args.masks:
        masks = SidecarMasks(args.masks)
    else:
        masks = DifferencingMasks(read_raster(args.background), args.diff_threshold)
    faces = SidecarFaceboxes(args.faceboxes) if args.faceboxes else StaticFacebox(FaceBox(*args.facebox))
    return masks, faces


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _report_flags(analysis: Analysis) -> None:
    for flag in analysis.timeline.flags:
        log.warning("%s", flag)


# ---- commands --------------------------------------------------------------

def cmd_detect(args: argparse.Namespace) -> int:
    seq = load_manifest(args.manifest)
    masks, faces = _providers(args)
    analysis = analyze(seq, masks, faces, pipeline_config(args))
    _report_flags(analysis)
    out = Path(args.out)
    _write(out, EVENTS, format_report(analysis.events))
    _write(out, TIMELINE, analysis.timeline.format())
    if args.dump_dssim:
        for h in Hand:
            _write(out, f"dssim_{h.value}.csv", dump_csv(analysis.dssim[h].values))
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    if args.top_k < 1:
        raise ValueError("--top-k must be >= 1")
    layout = resolve_layout(args.layout)
    dictionary = resolve_dictionary(args.dictionary)
    seq = load_manifest(args.manifest)
    masks, faces = _providers(args)
    config = pipeline_config(args, args.top_k)
    analysis = analyze(seq, masks, faces, config)
    _report_flags(analysis)
    bursts = infer_words(analysis, dictionary, layout, config)
    out = Path(args.out)
    _write(out, TIMELINE, analysis.timeline.format())
    _write(out, BURSTS, format_bursts(bursts))
    _write(out, VECTORS, format_vectors(bursts))
    if args.known_string:
        lines = []
        events = analysis.typing_events()
        vectors = [v for b in bursts for v in b.vectors]
        known_layout = layout if args.layout != "letters" else extended_layout()
        for target in args.known_string:
            for a, b in find_known_string(target, events, vectors, known_layout):
                lines.append(f"{target} {a} {b}\n")
        _write(out, KNOWN, "".join(lines))
    return 0


def mitigation_config(kind: str, z: float | None, f: int | None) -> MitigationConfig:
    if kind == SKIP:
        if z is not None:
            raise ValueError("--z does not apply to frame skipping")
        return MitigationConfig.skip(5 if f is None else f)
    if f is not None:
        raise ValueError(f"--f does not apply to {kind}")
    make = MitigationConfig.blur if kind == "blur" else MitigationConfig.pixelate
    return make() if z is None else make(z)


def _recovery_at(frames: FrameSequence, truth, dictionary: RankedDictionary, k: int,
                 frame_map: Sequence[int] | None = None) -> float:
    res = evaluate_clip(frames, truth, {"d": dictionary}, ks=(k,), frame_map=frame_map)
    return res.recovery["d"][k]


def cmd_mitigate(args: argparse.Namespace) -> int:
    config = mitigation_config(args.kind, args.z, args.f)
    seq = load_manifest(args.manifest)
    truth = load_truth(args.truth) if args.truth else None
    if args.keylog:
        keys = [f for f, _, _ in read_keylog(args.keylog)]
    elif truth is not None:
        keys = truth.keystroke_frames()
    else:
        raise ValueError("--keylog is required without --truth")
    res = apply_mitigation(seq, keys, config, measure_quality=not args.no_quality)
    report = res.report
    if truth is not None:
        dictionary = resolve_dictionary(args.dictionary)
        before = _recovery_at(seq, truth, dictionary, args.eval_k)
        after = _recovery_at(res.sequence, truth, dictionary, args.eval_k, res.kept)
        report = report.with_effectiveness(100.0 * (before - after))
    out = Path(args.out)
    save_sequence(res.sequence, out)
    _write(out, REPORT, report.format())
    _write(out, KEPT, "".join(f"{i}\n" for i in res.kept))
    if config.kind == SKIP:
        _write(out, DROPPED, format_drop_log(res.dropped))
    return 0


def scenario_from_args(args: argparse.Namespace) -> SynthScenario:
    sc = SynthScenario.from_file(args.scenario) if args.scenario else SynthScenario()
    over = {}
    for name, field_name in (("seed", "seed"), ("rate", "rate"), ("style", "typing_style"),
                             ("camera_jitter", "camera_jitter"), ("posture_drift", "posture_drift"),
                             ("fps", "fps"), ("width", "width"), ("height", "height"), ("layout", "layout")):
        value = getattr(args, name)
        if value is not None:
            over[field_name] = value
    if args.words and args.random_words:
        raise ValueError("use either --words or --random-words")
    if args.words:
        over["words"] = tuple(w for w in args.words.replace(",", " ").split() if w)
    elif args.random_words:
        seed = over.get("seed", sc.seed)
        over["words"] = tuple(random_words(bundled_dictionary("4k").words, args.random_words, seed))
    if args.distractor:
        over["distractors"] = tuple(Distractor.parse(t) for t in args.distractor)
    if args.gray:
        over["color"] = False
    sc = SynthScenario(**{**_scenario_fields(sc), **over})
    if not sc.words:
        raise ScenarioError("no words to type; give --words, --random-words or a scenario file")
    return sc


def _scenario_fields(sc: SynthScenario) -> dict:
    return {f.name: getattr(sc, f.name) for f in fields(sc)}


def cmd_synth(args: argparse.Namespace) -> int:
    sc = scenario_from_args(args)
    write_clip(generate(sc), args.out)
    return 0


def eval_scenarios(clips: int, words: int, seed: int, style: str = "hybrid",
                   distractors: bool = False) -> list[SynthScenario]:
    """Seeded clean (or distracted) clips of random 4k words."""
    pool = bundled_dictionary("4k").words
    out = []
    for n in range(clips):
        s = seed + n
        ds = ()
        if distractors:
            # distractor starts are given as fractions of a nominal clip length
            nominal = words * 2.6 + 2
            ds = tuple(_scaled(Distractor.parse(t), nominal) for t in SESSION_DISTRACTORS)
        out.append(SynthScenario(words=tuple(random_words(pool, words, s)), typing_style=style,
                                 distractors=ds, seed=s))
    return out


def _scaled(d: Distractor, length_s: float) -> Distractor:
    return Distractor(d.kind, round(d.start_s * length_s, 2), d.duration_s, d.hand)


def run_eval(clip_inputs, dictionaries: dict[str, RankedDictionary], config: PipelineConfig,
             ks: Sequence[int], mitigations: bool) -> EvalReport:
    """``clip_inputs`` yields (frames, truth) pairs."""
    det, act, curves, mit = [], [], {name: [] for name in dictionaries}, {}
    clips = 0
    first = next(iter(dictionaries))
    for frames, truth in clip_inputs:
        clips += 1
        res = evaluate_clip(frames, truth, dictionaries, config=config, ks=ks)
        det.append(res.detection)
        act.append(res.activity)
        for name, curve in res.recovery.items():
            curves[name].append(curve)
        if mitigations:
            k = 50 if 50 in ks else max(ks)
            for mc in DEFAULT_MITIGATIONS:
                m = apply_mitigation(frames, truth.keystroke_frames(), mc, measure_quality=False)
                after = evaluate_clip(m.sequence, truth, {first: dictionaries[first]}, config=config,
                                      ks=(k,), frame_map=m.kept)
                mit.setdefault((mc.kind, mc.strength), []).append((res.recovery[first][k],
                                                                   after.recovery[first][k]))
    if not clips:
        raise ValueError("no clips to evaluate")
    report = EvalReport(pool_scores(det), pool_scores(act),
                        {name: mean_curves(c) for name, c in curves.items()}, clips=clips)
    for (kind, strength), pairs in mit.items():
        report.mitigation.append((kind, strength, sum(a for a, _ in pairs) / len(pairs),
                                  sum(b for _, b in pairs) / len(pairs)))
    return report


def _loaded_clips(dirs: Sequence[str]):
    for d in dirs:
        yield load_manifest(Path(d) / "manifest.txt"), load_truth(d)


def _generated_clips(scenarios: Sequence[SynthScenario]):
    for sc in scenarios:
        log.info("generating clip seed=%d", sc.seed)
        clip = generate(sc)
        yield clip.frames, clip.truth


def cmd_eval(args: argparse.Namespace) -> int:
    names = args.dictionary or ["4k"]
    dictionaries = {n: resolve_dictionary(n) for n in names}
    ks = tuple(sorted(set(args.k))) if args.k else DEFAULT_KS
    config = pipeline_config(args, max(ks))
    if args.synth_dir:
        clips = _loaded_clips(args.synth_dir)
    else:
        if args.clips < 1 or args.words < 1:
            raise ValueError("--clips and --words must be >= 1")
        clips = _generated_clips(eval_scenarios(args.clips, args.words, args.seed, args.style, args.distractors))
    report = run_eval(clips, dictionaries, config, ks, args.mitigations)
    _write(Path(args.out), EVAL_REPORT, report.format())
    return 0


COMMANDS = {"detect": cmd_detect, "infer": cmd_infer, "mitigate": cmd_mitigate, "synth": cmd_synth,
            "eval": cmd_eval}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ManifestError, ScenarioError, LayoutError, FileNotFoundError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"vidkeys {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
