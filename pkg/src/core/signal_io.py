"""
Reading and writing signals and traces.

File formats (see docs/SPEC_FORMATS.md):

- ``.pnps`` signals: magic ``PNPS``, u32 LE height, u32 LE width (1 for a
  flat signal), then height*width float64 LE values in row-major order.
- PGM export of grid signals: 8-bit binary ``P5`` with values in [0, 1]
  mapped linearly onto 0..255 and clipped.
- Trace CSV: header ``iter,residual,snr_db,budget,wall_ns``.
"""

import io
import struct
from typing import List

import numpy as np
from PIL import Image

from .errors import InvalidSignalError, SignalFormatError
from .signal import IterateTrace, Signal, TraceRecord
from ..utils.file_utils import atomic_write_bytes, atomic_write_text

PNPS_MAGIC = b"PNPS"
_HEADER = struct.Struct("<4sII")

TRACE_HEADER = "iter,residual,snr_db,budget,wall_ns"


def format_float(value: float) -> str:
    """Print a float with 17 significant digits (round-trips float64)."""
    return f"{value:.17g}"


def encode_signal(signal: Signal) -> bytes:
    """Encode a signal as .pnps bytes.

    Args:
        signal: Flat signal, or grid signal at least two columns wide.

    Returns:
        Header followed by the float64 LE values.

    Raises:
        SignalFormatError: For an h x 1 grid, whose width of 1 would decode as
            a flat signal.
    """
    if signal.is_grid:
        height, width = signal.shape
        if width == 1:
            raise SignalFormatError(
                f"cannot encode a {height}x1 grid: width 1 is reserved for flat signals"
            )
    else:
        height, width = signal.size, 1
    payload = signal.values.astype("<f8", copy=False).tobytes(order="C")
    return _HEADER.pack(PNPS_MAGIC, height, width) + payload


def decode_signal(data: bytes) -> Signal:
    """Decode .pnps bytes. A width of 1 decodes as a flat signal."""
    if len(data) < _HEADER.size:
        raise SignalFormatError("file too short for a PNPS header")
    magic, height, width = _HEADER.unpack_from(data)
    if magic != PNPS_MAGIC:
        raise SignalFormatError(f"bad magic bytes {magic!r}")
    count = height * width
    expected = _HEADER.size + 8 * count
    if count == 0 or len(data) != expected:
        raise SignalFormatError(
            f"expected {expected} bytes for a {height}x{width} signal, got {len(data)}"
        )
    values = np.frombuffer(data, dtype="<f8", count=count, offset=_HEADER.size)
    try:
        if width == 1:
            return Signal(values.astype(np.float64), (height,))
        return Signal(values.astype(np.float64), (height, width))
    except InvalidSignalError as e:
        raise SignalFormatError(str(e)) from e


def write_signal(path: str, signal: Signal) -> None:
    """Write a signal to a .pnps file atomically.

    Args:
        path: Destination file path.
        signal: The signal to store.
    """
    atomic_write_bytes(path, encode_signal(signal))


def read_signal(path: str) -> Signal:
    """Read a .pnps file written by write_signal.

    Raises:
        SignalFormatError: If the file is not a valid .pnps signal.
    """
    with open(path, "rb") as f:
        return decode_signal(f.read())


def export_pgm(path: str, signal: Signal) -> None:
    """Export a grid signal as an 8-bit binary PGM image."""
    if not signal.is_grid:
        raise InvalidSignalError("PGM export needs a grid signal")
    clipped = np.clip(signal.as_array(), 0.0, 1.0)
    pixels = np.rint(clipped * 255.0).astype(np.uint8)
    buffer = io.BytesIO()
    Image.fromarray(pixels).save(buffer, format="PPM")
    atomic_write_bytes(path, buffer.getvalue())


def read_pgm(path: str) -> Signal:
    """Read an 8-bit PGM image as a grid signal with values in [0, 1]."""
    try:
        with Image.open(path) as image:
            pixels = np.asarray(image.convert("L"), dtype=np.float64)
    except OSError as e:
        raise SignalFormatError(f"cannot read image {path}: {e}") from e
    return Signal.grid(pixels / 255.0)


def format_trace(trace: IterateTrace) -> str:
    """Render a trace as CSV text, one row per iteration.

    Args:
        trace: The trace to render.

    Returns:
        CSV text with TRACE_HEADER and 17-digit floats, newline terminated.
    """
    lines = [TRACE_HEADER]
    for record in trace.records:
        lines.append(
            ",".join(
                [
                    str(record.iter_index),
                    format_float(record.fixed_point_residual),
                    format_float(record.snr_db),
                    format_float(record.budget_consumed),
                    str(record.wall_ns),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def write_trace(path: str, trace: IterateTrace) -> None:
    """Write format_trace(trace) to path atomically."""
    atomic_write_text(path, format_trace(trace))


def parse_trace(text: str) -> IterateTrace:
    """Parse CSV text produced by format_trace.

    Args:
        text: The CSV content, header first.

    Returns:
        The trace, with records in file order.

    Raises:
        SignalFormatError: On a missing header or a malformed row.
    """
    lines = [line.strip() for line in text.strip().split("\n")]
    if not lines or lines[0] != TRACE_HEADER:
        raise SignalFormatError("missing trace header")
    trace = IterateTrace()
    for number, line in enumerate(lines[1:], start=2):
        fields: List[str] = line.split(",")
        if len(fields) != 5:
            raise SignalFormatError(f"line {number}: expected 5 fields")
        try:
            trace.append(
                TraceRecord(
                    iter_index=int(fields[0]),
                    fixed_point_residual=float(fields[1]),
                    snr_db=float(fields[2]),
                    budget_consumed=float(fields[3]),
                    wall_ns=int(fields[4]),
                )
            )
        except ValueError as e:
            raise SignalFormatError(f"line {number}: {e}") from e
    return trace


def read_trace(path: str) -> IterateTrace:
    with open(path, "r", encoding="utf-8") as f:
        return parse_trace(f.read())
