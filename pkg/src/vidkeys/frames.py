"""Frame data model, manifest ingestion and colorimetric grayscale."""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import cv2
import numpy as np

# Rec. 709 luma
LUMA_R, LUMA_G, LUMA_B = 0.2126, 0.7152, 0.0722


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Frame:
    """One raster of the video, rows x columns (x 3 for RGB), uint8.

    ``index`` is the 1-based ordinal of the frame in its sequence.
    """

    pixels: np.ndarray
    index: int = 1

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.dtype != np.uint8:
            raise TypeError(f"frame pixels must be uint8, got {px.dtype}")
        if px.ndim not in (2, 3) or (px.ndim == 3 and px.shape[2] != 3):
            raise ValueError(f"unsupported frame shape {px.shape}")
        if px.size == 0:
            raise ValueError("empty frame")
        if self.index < 1:
            raise ValueError("frame index must be >= 1")
        if px.flags.writeable:
            px = px.copy()
            px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    @property
    def is_gray(self) -> bool:
        return self.pixels.ndim == 2


@dataclass(frozen=True)
class FrameSequence:
    frames: tuple[Frame, ...]
    fps: float

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("empty frame sequence")
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        shape = frames[0].pixels.shape
        prev = 0
        for f in frames:
            if f.pixels.shape != shape:
                raise ValueError(
                    f"frame size mismatch: frame {f.index} is {f.pixels.shape}, expected {shape}")
            if f.index <= prev:
                raise ValueError("frame indices must be strictly increasing")
            prev = f.index
        object.__setattr__(self, "frames", frames)

    @classmethod
    def from_arrays(cls, arrays: Iterable[np.ndarray], fps: float) -> "FrameSequence":
        return cls(tuple(Frame(a, i) for i, a in enumerate(arrays, start=1)), fps)

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, i: int) -> Frame:
        return self.frames[i]

    def __iter__(self):
        return iter(self.frames)

    @property
    def length(self) -> int:
        return len(self.frames)

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    def arrays(self) -> list[np.ndarray]:
        return [f.pixels for f in self.frames]

    def gray(self) -> "FrameSequence":
        return FrameSequence(tuple(to_grayscale(f) for f in self.frames), self.fps)


def gray_array(pixels: np.ndarray) -> np.ndarray:
    """Rec. 709 luma of an RGB uint8 array; 2-D input is returned as is."""
    if pixels.ndim == 2:
        return pixels
    rgb = pixels.astype(np.float64)
    y = LUMA_R * rgb[..., 0] + LUMA_G * rgb[..., 1] + LUMA_B * rgb[..., 2]
    return np.clip(np.floor(y + 0.5), 0, 255).astype(np.uint8)


def to_grayscale(frame: Frame) -> Frame:
    if frame.is_gray:
        return frame
    return Frame(gray_array(frame.pixels), frame.index)


def read_raster(path: str | os.PathLike) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise ManifestError(f"missing or unreadable frame file: {path}")
    if img.dtype != np.uint8:
        raise ManifestError(f"frame file is not 8-bit: {path}")
    if img.ndim == 3:
        if img.shape[2] == 4:
            img = img[..., :3]
        img = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
    return img


def write_raster(path: str | os.PathLike, pixels: np.ndarray) -> None:
    img = pixels if pixels.ndim == 2 else cv2.cvtColor(pixels, cv2.COLOR_RGB2BGR)
    if not cv2.imwrite(str(path), img):
        raise OSError(f"could not write {path}")


def parse_manifest(path: str | os.PathLike) -> tuple[float, tuple[int, int], list[Path]]:
    """Return (fps, (width, height), frame paths) without decoding frames."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    lines = [ln.strip() for ln in path.read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if len(lines) < 2:
        raise ManifestError(f"empty manifest: {path}")
    key, _, val = lines[0].partition("=")
    if key.strip() != "fps":
        raise ManifestError("manifest line 1 must be fps=<int>")
    try:
        fps = float(val)
    except ValueError:
        raise ManifestError(f"bad fps value {val!r}") from None
    if not fps > 0:
        raise ManifestError(f"fps must be positive, got {val}")
    key, _, val = lines[1].partition("=")
    if key.strip() != "resolution":
        raise ManifestError("manifest line 2 must be resolution=<width>x<height>")
    try:
        w, h = (int(v) for v in val.lower().split("x"))
    except ValueError:
        raise ManifestError(f"bad resolution value {val!r}") from None
    entries = lines[2:]
    if not entries:
        raise ManifestError(f"empty manifest: no frames listed in {path}")
    base = path.parent
    return fps, (w, h), [(base / e) if not os.path.isabs(e) else Path(e) for e in entries]


def load_manifest(path: str | os.PathLike) -> FrameSequence:
    fps, (w, h), paths = parse_manifest(path)
    frames = []
    for i, p in enumerate(paths, start=1):
        if not p.is_file():
            raise ManifestError(f"missing frame file: {p}")
        px = read_raster(p)
        if px.shape[:2] != (h, w):
            raise ManifestError(
                f"frame size mismatch: {p.name} is {px.shape[1]}x{px.shape[0]}, expected {w}x{h}")
        if frames and px.ndim != frames[0].pixels.ndim:
            raise ManifestError(f"channel count mismatch in {p.name}")
        frames.append(Frame(px, i))
    return FrameSequence(tuple(frames), fps)


def write_manifest(path: str | os.PathLike, frame_files: Sequence[str], fps: float,
                   size: tuple[int, int]) -> Path:
    path = Path(path)
    fps_txt = str(int(fps)) if float(fps).is_integer() else repr(float(fps))
    lines = [f"fps={fps_txt}", f"resolution={size[0]}x{size[1]}", *frame_files]
    path.write_text("\n".join(lines) + "\n")
    return path


def save_sequence(seq: FrameSequence, out_dir: str | os.PathLike, stem: str = "frame",
                  manifest_name: str = "manifest.txt") -> Path:
    """Write every frame as PNG plus a manifest listing them; return the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for n, f in enumerate(seq.frames, start=1):
        name = f"{stem}_{n:05d}.png"
        write_raster(out_dir / name, f.pixels)
        names.append(name)
    return write_manifest(out_dir / manifest_name, names, seq.fps, (seq.width, seq.height))
