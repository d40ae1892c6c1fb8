"""Little-endian binary record helpers with offset-aware error reporting."""
import os
import struct
import tempfile

import numpy as np

from .errors import FormatError


class Writer:
    def __init__(self):
        self.buf = bytearray()

    def raw(self, data: bytes):
        self.buf += data

    def u8(self, v):
        self.buf += struct.pack("<B", v)

    def u16(self, v):
        self.buf += struct.pack("<H", v)

    def u32(self, v):
        self.buf += struct.pack("<I", v)

    def u64(self, v):
        self.buf += struct.pack("<Q", v)

    def f64(self, v):
        self.buf += struct.pack("<d", v)

    def text(self, s: str):
        data = s.encode("utf-8")
        self.u16(len(data))
        self.buf += data

    def floats(self, arr):
        self.buf += np.ascontiguousarray(arr, dtype="<f8").tobytes()


class Reader:
    def __init__(self, data: bytes, what="file"):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n, field="data"):
        end = self.pos + n
        if end > len(self.data):
            raise FormatError(
                f"truncated {self.what}: {field} needs {n} bytes, only {len(self.data) - self.pos} remain",
                offset=self.pos,
            )
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def magic(self, expected: bytes):
        got = self.take(len(expected), "magic")
        if got != expected:
            raise FormatError(f"bad magic {got!r}, expected {expected!r}", offset=0)

    def version(self, supported):
        at = self.pos
        v = self.u32("version")
        if v not in supported:
            raise FormatError(f"unsupported format version {v}", offset=at)
        return v

    def u8(self, field="u8"):
        return self.take(1, field)[0]

    def u16(self, field="u16"):
        return struct.unpack("<H", self.take(2, field))[0]

    def u32(self, field="u32"):
        return struct.unpack("<I", self.take(4, field))[0]

    def u64(self, field="u64"):
        return struct.unpack("<Q", self.take(8, field))[0]

    def f64(self, field="f64"):
        return struct.unpack("<d", self.take(8, field))[0]

    def text(self, field="text"):
        n = self.u16(field)
        return self.take(n, field).decode("utf-8")

    def floats(self, count, field="floats"):
        raw = self.take(8 * count, field)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)

    def expect_end(self):
        if self.pos != len(self.data):
            raise FormatError(f"{len(self.data) - self.pos} trailing bytes in {self.what}", offset=self.pos)


def write_atomic(path, data: bytes):
    """Write via a temporary file in the same directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
