"""
JSON helpers shared by every larclab file format.

Bit order everywhere: coordinate x_1 is bit 0 of the packed integer, i.e. the
least-significant bit of the first byte of the hex encoding. Rationals are
written with ``str(Fraction)`` ("3/2", "1", "-1/4").
"""

import json
import logging
import os
from fractions import Fraction
from typing import IO, Any, Dict, Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

Rational = Union[Fraction, int]


def nbytes_for(n: int) -> int:
    return max(1, (n + 7) // 8)


def bits_to_hex(bits: int, n: int) -> str:
    """Little-endian hex of an n-bit packed vector."""
    return bits.to_bytes(nbytes_for(n), 'little').hex()


def hex_to_bits(text: str, n: int) -> int:
    bits = int.from_bytes(bytes.fromhex(text), 'little')
    if bits >> n:
        raise ValueError(f"hex {text!r} has bits beyond position {n - 1}")
    return bits


def bitset_to_hex(mask: np.ndarray) -> str:
    """Hex of a boolean table indexed by points of the cube (point x is bit x)."""
    return np.packbits(np.asarray(mask, dtype=np.uint8), bitorder='little').tobytes().hex()


def hex_to_bitset(text: str, size: int) -> np.ndarray:
    raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
    bits = np.unpackbits(raw, bitorder='little')
    if bits.size < size:
        raise ValueError(f"bitset hex too short: {bits.size} < {size}")
    if bits[size:].any():
        raise ValueError("bitset hex has bits beyond the table size")
    return bits[:size].astype(bool)


def fraction_to_str(value: Rational) -> str:
    return str(Fraction(value))


def parse_fraction(text: Union[str, int, float, Fraction]) -> Fraction:
    """Parse "p/q", an integer or a decimal literal into an exact Fraction."""
    if isinstance(text, Fraction):
        return text
    if isinstance(text, (int, float)):
        return Fraction(text)
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as e:
        raise ValueError(f"not a rational: {text!r}") from e


def _default(obj: Any):
    if isinstance(obj, Fraction):
        return fraction_to_str(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, 'to_json'):
        return obj.to_json()
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def dumps(obj: Any) -> str:
    """Canonical JSON text: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, default=_default, sort_keys=True, indent=2) + '\n'


def dump_json(obj: Any, path: Optional[str] = None, stream: Optional[IO[str]] = None) -> str:
    text = dumps(obj)
    if path:
        tmp_path = f"{path}.tmp"
        with open(tmp_path, 'w') as f:
            f.write(text)
        os.replace(tmp_path, path)
        logger.debug(f"Wrote {path}")
    elif stream is not None:
        stream.write(text)
    return text


def load_json(path: str) -> Dict[str, Any]:
    with open(path, 'r') as f:
        return json.load(f)


class JsonLinesWriter:
    """Streams one compact JSON object per line, flushing each record."""

    def __init__(self, stream: IO[str]):
        self.stream = stream
        self.count = 0

    def write(self, record: Dict[str, Any]):
        self.stream.write(json.dumps(record, default=_default, sort_keys=True, separators=(',', ':')) + '\n')
        self.stream.flush()
        self.count += 1


def read_json_lines(path: str):
    with open(path, 'r') as f:
        for line_number, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                # a truncated final line is expected after an interrupted search
                logger.warning(f"{path}:{line_number}: skipping unreadable record ({e})")
