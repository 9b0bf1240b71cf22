import pytest

from vidkeys.preprocess import ArrayMasks, SidecarFaceboxes
from vidkeys.synth import SynthScenario, generate


def providers(clip):
    masks = ArrayMasks(clip.truth.masks)
    faces = SidecarFaceboxes(boxes={i: b for i, b in enumerate(clip.truth.faceboxes, start=1)})
    return masks, faces


@pytest.fixture(scope="session")
def small_clip():
    return generate(SynthScenario(words=("park", "story", "worth"), seed=3))


@pytest.fixture(scope="session")
def small_analysis(small_clip):
    from vidkeys.pipeline import analyze
    return analyze(small_clip.frames, *providers(small_clip))


def pair_context(f1, f2, params=None):
    """Flow context for two rendered (gray, mask, facebox) frames, indexed 1 and 2."""
    from vidkeys.displacement import FlowContext, FlowParams
    from vidkeys.preprocess import Hand, build_series, remove_background

    imgs = [f1[0], f2[0]]
    masks = [f1[1], f2[1]]
    removed = [remove_background(i, m) for i, m in zip(imgs, masks)]
    left, right = build_series(removed, [f1[2], f2[2]])
    return FlowContext({1: removed[0], 2: removed[1]}, {1: imgs[0], 2: imgs[1]}, {1: masks[0], 2: masks[1]},
                       {Hand.LEFT: left, Hand.RIGHT: right}, params or FlowParams())


_VERDICTS: dict[int, tuple[str, bool, str]] = {}


def record(n: int, name: str, ok: bool, detail: str = "") -> None:
    """Remember an acceptance verdict and print it; the summary repeats every line."""
    _VERDICTS[n] = (name, bool(ok), detail)
    print(f"criterion {n} {name}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        name, ok, detail = _VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d} {name}: {'PASS' if ok else 'FAIL'}  {detail}")
