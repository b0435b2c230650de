"""Raw frame I/O: Y4M streams and directories of images.

Y4M covers C420 (and its jpeg/mpeg2/paldv siting variants, all read with the
same plane layout) plus Cmono.  A directory input is read as lexicographic
8-bit images; color images convert to YCbCr with box-averaged 4:2:0 chroma.
The directory writer emits grayscale PNGs of the luma plane, so a read/write
round trip is bit-exact for luma.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from .motion import Frame


class FormatError(RuntimeError):
    pass


_IMAGE_SUFFIXES = {".png", ".pgm", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}
_C420_TAGS = {"420", "420jpeg", "420mpeg2", "420paldv"}


def _parse_y4m_header(line: bytes) -> dict:
    parts = line.decode("ascii", "replace").strip().split(" ")
    if parts[0] != "YUV4MPEG2":
        raise FormatError("not a YUV4MPEG2 stream")
    fields = {"C": "420"}
    for tok in parts[1:]:
        if not tok:
            continue
        fields[tok[0]] = tok[1:]
    if "W" not in fields or "H" not in fields:
        raise FormatError("Y4M header missing dimensions")
    return fields


def read_y4m(path) -> tuple[list[Frame], dict]:
    """Read every frame of a Y4M file; returns (frames, header fields)."""
    path = Path(path)
    data = path.read_bytes()
    eol = data.find(b"\n")
    if eol < 0:
        raise FormatError(f"{path}: truncated header")
    fields = _parse_y4m_header(data[:eol])
    w = int(fields["W"])
    h = int(fields["H"])
    colorspace = fields.get("C", "420")
    if colorspace in _C420_TAGS:
        mono = False
        if w % 2 or h % 2:
            raise FormatError(f"{path}: C420 needs even dimensions, got {w}x{h}")
        frame_size = w * h + 2 * (w // 2) * (h // 2)
    elif colorspace == "mono":
        mono = True
        frame_size = w * h
    else:
        raise FormatError(f"{path}: unsupported colorspace C{colorspace}")

    frames: list[Frame] = []
    pos = eol + 1
    index = 0
    while pos < len(data):
        marker_end = data.find(b"\n", pos)
        if marker_end < 0:
            raise FormatError(f"{path}: truncated frame marker")
        if not data[pos:marker_end].startswith(b"FRAME"):
            raise FormatError(f"{path}: bad frame marker at byte {pos}")
        pos = marker_end + 1
        if pos + frame_size > len(data):
            raise FormatError(f"{path}: truncated frame {index}")
        raw = np.frombuffer(data, dtype=np.uint8, count=frame_size, offset=pos)
        pos += frame_size
        y = raw[: w * h].reshape(h, w).copy()
        if mono:
            frames.append(Frame(index=index, luma=y))
        else:
            cw, ch = w // 2, h // 2
            u = raw[w * h : w * h + cw * ch].reshape(ch, cw).copy()
            v = raw[w * h + cw * ch :].reshape(ch, cw).copy()
            frames.append(Frame(index=index, luma=y, chroma_u=u, chroma_v=v))
        index += 1
    return frames, fields


def write_y4m(frames, path, fps: tuple[int, int] = (30, 1)) -> None:
    """Write frames as Y4M (C420 when chroma is present on the first frame)."""
    path = Path(path)
    frames = list(frames)
    with path.open("wb") as fh:
        if not frames:
            fh.write(b"YUV4MPEG2 W0 H0 F%d:%d Ip A1:1 Cmono\n" % fps)
            return
        first = frames[0]
        w, h = first.width, first.height
        mono = not first.has_chroma
        tag = b"Cmono" if mono else b"C420"
        if not mono and (w % 2 or h % 2):
            raise FormatError(f"C420 output needs even dimensions, got {w}x{h}")
        fh.write(b"YUV4MPEG2 W%d H%d F%d:%d Ip A1:1 %s\n" % (w, h, fps[0], fps[1], tag))
        for fr in frames:
            if (fr.width, fr.height) != (w, h):
                raise FormatError(
                    f"frame {fr.index}: dimensions {fr.width}x{fr.height} differ from {w}x{h}"
                )
            if fr.has_chroma == mono:
                raise FormatError(f"frame {fr.index}: inconsistent chroma presence")
            fh.write(b"FRAME\n")
            fh.write(fr.luma.tobytes())
            if not mono:
                fh.write(fr.chroma_u.tobytes())
                fh.write(fr.chroma_v.tobytes())


def _load_image(path: Path, index: int) -> Frame:
    img = Image.open(path)
    if img.mode in ("L", "I;16", "P", "1"):
        y = np.asarray(img.convert("L"), dtype=np.uint8)
        return Frame(index=index, luma=y)
    ycc = np.asarray(img.convert("YCbCr"), dtype=np.uint8)
    y = ycc[:, :, 0].copy()
    h, w = y.shape
    if h % 2 or w % 2:
        # odd-sized color images lose the trailing row/column of chroma
        h2, w2 = (h // 2) * 2, (w // 2) * 2
    else:
        h2, w2 = h, w
    cb = ycc[:h2, :w2, 1].astype(np.uint16)
    cr = ycc[:h2, :w2, 2].astype(np.uint16)
    u = ((cb[0::2, 0::2] + cb[0::2, 1::2] + cb[1::2, 0::2] + cb[1::2, 1::2] + 2) // 4).astype(
        np.uint8
    )
    v = ((cr[0::2, 0::2] + cr[0::2, 1::2] + cr[1::2, 0::2] + cr[1::2, 1::2] + 2) // 4).astype(
        np.uint8
    )
    if h % 2 or w % 2:
        return Frame(index=index, luma=y[: (h // 2) * 2, : (w // 2) * 2].copy(), chroma_u=u, chroma_v=v)
    return Frame(index=index, luma=y, chroma_u=u, chroma_v=v)


def read_frames(path):
    """Frame list from a Y4M file or a directory of images, in order."""
    path = Path(path)
    if path.is_dir():
        names = sorted(p for p in path.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)
        frames = [_load_image(p, i) for i, p in enumerate(names)]
        dims = {(f.width, f.height) for f in frames}
        if len(dims) > 1:
            raise FormatError(f"{path}: mixed frame dimensions {sorted(dims)}")
        return frames
    if path.suffix.lower() == ".y4m":
        frames, _fields = read_y4m(path)
        return frames
    raise FormatError(f"{path}: expected a .y4m file or an image directory")


def write_frames(frames, path, fps: tuple[int, int] = (30, 1)) -> None:
    """Write frames to a Y4M file or a directory of grayscale PNGs."""
    path = Path(path)
    if path.suffix.lower() == ".y4m":
        path.parent.mkdir(parents=True, exist_ok=True)
        write_y4m(frames, path, fps=fps)
        return
    path.mkdir(parents=True, exist_ok=True)
    for fr in frames:
        Image.fromarray(fr.luma, mode="L").save(path / f"frame_{fr.index:06d}.png")


class FrameWriter:
    """Streaming frame sink for a Y4M file or an image directory."""

    def __init__(self, path, fps: tuple[int, int] = (30, 1)):
        self.path = Path(path)
        self.fps = fps
        self._y4m = self.path.suffix.lower() == ".y4m"
        self._fh = None
        self._mono = None
        self._dims = None
        if self._y4m:
            self.path.parent.mkdir(parents=True, exist_ok=True)
        else:
            self.path.mkdir(parents=True, exist_ok=True)

    def write(self, frame: Frame) -> None:
        if not self._y4m:
            Image.fromarray(frame.luma, mode="L").save(
                self.path / f"frame_{frame.index:06d}.png"
            )
            return
        if self._fh is None:
            self._mono = not frame.has_chroma
            self._dims = (frame.width, frame.height)
            w, h = self._dims
            if not self._mono and (w % 2 or h % 2):
                raise FormatError(f"C420 output needs even dimensions, got {w}x{h}")
            self._fh = self.path.open("wb")
            tag = b"Cmono" if self._mono else b"C420"
            self._fh.write(
                b"YUV4MPEG2 W%d H%d F%d:%d Ip A1:1 %s\n"
                % (w, h, self.fps[0], self.fps[1], tag)
            )
        if (frame.width, frame.height) != self._dims:
            raise FormatError(f"frame {frame.index}: dimension change mid-stream")
        if frame.has_chroma == self._mono:
            raise FormatError(f"frame {frame.index}: inconsistent chroma presence")
        self._fh.write(b"FRAME\n")
        self._fh.write(frame.luma.tobytes())
        if not self._mono:
            self._fh.write(frame.chroma_u.tobytes())
            self._fh.write(frame.chroma_v.tobytes())

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None
        elif self._y4m and not self.path.exists():
            # an empty stream still produces a valid container
            write_y4m([], self.path, fps=self.fps)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


_GT_LINE = re.compile(r"^\s*(\S+)\s+(\S+)\s+(\S+)\s*$")


def write_ground_truth(angles, path) -> None:
    """One line per frame: yaw pitch roll in radians, 17 significant digits."""
    path = Path(path)
    lines = [
        " ".join(format(float(v), ".17g") for v in triple) for triple in angles
    ]
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def read_ground_truth(path) -> np.ndarray:
    path = Path(path)
    rows = []
    for ln in path.read_text(encoding="ascii").splitlines():
        if not ln.strip():
            continue
        m = _GT_LINE.match(ln)
        if not m:
            raise FormatError(f"{path}: bad ground-truth line {ln!r}")
        rows.append([float(m.group(i)) for i in (1, 2, 3)])
    return np.array(rows, dtype=np.float64)
