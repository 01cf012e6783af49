"""Little-endian section framing and the 64-bit trailing checksum."""
import hashlib
import struct

from .errors import ModelFormatError


def checksum(data):
    """8-byte BLAKE2b digest of ``data``."""
    return hashlib.blake2b(data, digest_size=8).digest()


def pack_section(payload):
    return struct.pack("<Q", len(payload)) + payload


def unpack_sections(data, offset, count):
    """Split ``count`` length-prefixed sections starting at ``offset``."""
    out = []
    for i in range(count):
        if offset + 8 > len(data):
            raise ModelFormatError(f"section {i} header truncated at byte {offset}")
        (n,) = struct.unpack_from("<Q", data, offset)
        offset += 8
        if offset + n > len(data):
            raise ModelFormatError(f"section {i} truncated at byte {offset}")
        out.append(memoryview(data)[offset:offset + n])
        offset += n
    return out, offset
