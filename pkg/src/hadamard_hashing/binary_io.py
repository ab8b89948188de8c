"""
Little-endian container codec shared by the HCCB, HCFS, HCLS, HCMD and
HCBC file formats: 4-byte ASCII magic, u32 version, then format-specific
header fields and a raw payload.
"""
import logging
import os
import struct

import numpy as np

from .exceptions import BadMagicError, TruncatedFileError, UnsupportedVersionError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class BinaryReader:
    """Cursor over the bytes of one file; every read is bounds-checked."""

    def __init__(self, data: bytes, path=None):
        self.data = data
        self.path = path
        self.offset = 0

    @classmethod
    def from_path(cls, path):
        with open(path, 'rb') as fh:
            data = fh.read()
        logger.debug("Read %d bytes from %s", len(data), path)
        return cls(data, path)

    @property
    def remaining(self) -> int:
        return len(self.data) - self.offset

    def take(self, n: int, what: str) -> bytes:
        if n > self.remaining:
            raise TruncatedFileError(
                f"truncated while reading {what}: need {n} bytes, {self.remaining} left", self.path
            )
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        fmt = '<' + fmt
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def array(self, dtype, count: int, what: str) -> np.ndarray:
        dtype = np.dtype(dtype).newbyteorder('<')
        raw = self.take(dtype.itemsize * int(count), what)
        return np.frombuffer(raw, dtype=dtype).astype(dtype.newbyteorder('='))

    def expect_header(self, magic: bytes, version: int = FORMAT_VERSION):
        found = self.take(4, 'magic') if self.remaining >= 4 else None
        if found is None:
            raise TruncatedFileError("file shorter than its magic number", self.path)
        if found != magic:
            raise BadMagicError(f"expected magic {magic!r}, found {found!r}", self.path)
        (found_version,) = self.unpack('I', 'version')
        if found_version != version:
            raise UnsupportedVersionError(
                f"{magic.decode()} version {found_version} is not supported (expected {version})", self.path
            )

    def expect_end(self):
        if self.remaining:
            logger.warning("%s: ignoring %d trailing bytes", self.path, self.remaining)


def header(magic: bytes, fmt: str = '', *fields, version: int = FORMAT_VERSION) -> bytes:
    return magic + struct.pack('<I' + fmt, version, *fields)


def le_bytes(values: np.ndarray, dtype) -> bytes:
    return np.ascontiguousarray(values, dtype=np.dtype(dtype).newbyteorder('<')).tobytes()


def write_atomic(path, chunks):
    """Write byte chunks to ``path`` through a temporary file so readers never see partial output."""
    path = os.fspath(path)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, 'wb') as fh:
        for chunk in chunks:
            fh.write(chunk)
    os.replace(tmp_path, path)
    logger.debug("Wrote %s", path)
