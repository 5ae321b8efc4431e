"""
File utilities for PnPKit.

Output files (traces, summaries, signals, configs) are written atomically: the
content goes to a temporary file in the destination directory, is flushed and
fsynced, and is then renamed over the target. A crashed or interrupted run
never leaves a half-written CSV behind.
"""

import os
import tempfile


def ensure_directory(path: str) -> str:
    """Create a directory (and parents) if needed and return its path."""
    os.makedirs(path, exist_ok=True)
    return path


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Write bytes to path using an atomic rename.

    Args:
        path: Destination file path. Its directory must already exist.
        data: The full file content.
    """
    directory = os.path.dirname(os.path.abspath(path))
    prefix = "." + os.path.basename(path) + "_"
    temp_fd, temp_path = tempfile.mkstemp(dir=directory, prefix=prefix)

    try:
        with os.fdopen(temp_fd, "wb") as temp_file:
            temp_file.write(data)
            temp_file.flush()
            os.fsync(temp_file.fileno())
        os.replace(temp_path, path)
    except BaseException:
        # Clean up temp file if something went wrong
        try:
            os.remove(temp_path)
        except OSError:
            pass
        raise


def atomic_write_text(path: str, text: str) -> None:
    """Write UTF-8 text to path using an atomic rename.

    Newlines are written as-is ("\\n"), independent of the platform.
    """
    atomic_write_bytes(path, text.encode("utf-8"))
