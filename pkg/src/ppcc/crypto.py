"""Additively homomorphic encryption backends.

``group`` is ElGamal with the message in the exponent over secp256k1
(prime order, ~128-bit security). A ciphertext of m is (rG, rH + mG) for
public key H = xG; adding ciphertexts adds messages, multiplying by a
plaintext scalar multiplies the message. Decryption recovers mG and looks
it up in a table of small multiples of G, so only messages up to
``max_plain`` decrypt.

``mock`` keeps the plaintext in the clear next to a key tag and a random
nonce. It is only meant for exercising the protocol quickly.
"""

from __future__ import annotations

import secrets
import struct
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

from coincurve import PrivateKey, PublicKey

from .errors import CryptoError, UndecodableError

Ciphertext = bytes

# secp256k1 group order and field prime
CURVE_ORDER = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
FIELD_PRIME = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFC2F

_POINT_LEN = 33
_INFINITY = bytes(_POINT_LEN)


@dataclass(frozen=True)
class KeyPair:
    backend: str
    public_key: bytes
    secret_key: bytes = field(repr=False)

    def serialize(self) -> bytes:
        name = self.backend.encode()
        return b"".join(struct.pack(">H", len(x)) + x
                        for x in (name, self.public_key, self.secret_key))

    @classmethod
    def deserialize(cls, data: bytes) -> "KeyPair":
        parts, off = [], 0
        for _ in range(3):
            if off + 2 > len(data):
                raise CryptoError("truncated key pair")
            (size,) = struct.unpack_from(">H", data, off)
            off += 2
            if off + size > len(data):
                raise CryptoError("truncated key pair")
            parts.append(data[off:off + size])
            off += size
        if off != len(data):
            raise CryptoError("trailing bytes after key pair")
        return cls(parts[0].decode(), parts[1], parts[2])


class Backend:
    """Interface shared by all backends.

    Sums and products must stay within ``max_plain`` for decryption to
    work; keeping them there is the caller's job.
    """

    name: str
    ciphertext_len: int
    max_plain: int

    def keygen(self) -> KeyPair:
        raise NotImplementedError

    def validate_public_key(self, pk: bytes) -> None:
        raise NotImplementedError

    def encrypt(self, pk: bytes, m: int) -> Ciphertext:
        raise NotImplementedError

    def add(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        raise NotImplementedError

    def add_plain(self, ct: Ciphertext, k: int) -> Ciphertext:
        raise NotImplementedError

    def scalar_mul(self, ct: Ciphertext, k: int) -> Ciphertext:
        raise NotImplementedError

    def decrypt_small(self, sk: bytes, ct: Ciphertext) -> int:
        raise NotImplementedError

    def zero_like(self, ct: Ciphertext) -> Ciphertext:
        """A deterministic encryption of 0 compatible with ``ct``."""
        raise NotImplementedError

    def check(self, ct: Ciphertext) -> None:
        if len(ct) != self.ciphertext_len:
            raise CryptoError(
                f"{self.name} ciphertext must be {self.ciphertext_len} bytes, got {len(ct)}")

    def _check_plain(self, m: int) -> None:
        if not 0 <= m <= self.max_plain:
            raise CryptoError(f"message {m} outside [0, {self.max_plain}]")

    def dot_product(self, cts: Sequence[Ciphertext], plains: Sequence[int]) -> Ciphertext:
        """Encryption of sum(plains[i] * m_i); zero coefficients are skipped."""
        if len(cts) != len(plains):
            raise CryptoError(f"length mismatch: {len(cts)} ciphertexts, {len(plains)} plains")
        if not cts:
            raise CryptoError("empty dot product")
        acc = None
        for ct, k in zip(cts, plains):
            if k == 0:
                continue
            term = self.scalar_mul(ct, k)
            acc = term if acc is None else self.add(acc, term)
        return self.zero_like(cts[0]) if acc is None else acc


# group backend

_G = PrivateKey((1).to_bytes(32, "big")).public_key


def _scalar(k: int) -> bytes:
    return (k % CURVE_ORDER).to_bytes(32, "big")


def _mul(p: Optional[PublicKey], k: int) -> Optional[PublicKey]:
    k %= CURVE_ORDER
    if p is None or k == 0:
        return None
    return p.multiply(k.to_bytes(32, "big"))


def _sum(points) -> Optional[PublicKey]:
    pts = [p for p in points if p is not None]
    if not pts:
        return None
    if len(pts) == 1:
        return pts[0]
    try:
        return PublicKey.combine_keys(pts)
    except ValueError:
        pass
    # some partial sum hit the point at infinity; add one by one
    acc = None
    for p in pts:
        if acc is None:
            acc = p
            continue
        try:
            acc = PublicKey.combine_keys([acc, p])
        except ValueError:
            acc = None
    return acc


def _encode_point(p: Optional[PublicKey]) -> bytes:
    return _INFINITY if p is None else p.format(compressed=True)


@lru_cache(maxsize=4096)
def _decode_point(raw: bytes) -> Optional[PublicKey]:
    if raw == _INFINITY:
        return None
    try:
        return PublicKey(raw)
    except (ValueError, TypeError) as exc:
        raise CryptoError("invalid group element") from exc


def _split(ct: Ciphertext):
    return _decode_point(ct[:_POINT_LEN]), _decode_point(ct[_POINT_LEN:])


def _join(a, b) -> Ciphertext:
    return _encode_point(a) + _encode_point(b)


class _MultiplesOfG:
    """Shared table of i*G for i = 1..size, grown on demand."""

    def __init__(self):
        self.points: list[PublicKey] = []
        self.index: dict[bytes, int] = {}
        self.lock = threading.Lock()

    def ensure(self, size: int) -> None:
        if len(self.points) >= size:
            return
        with self.lock:
            p = self.points[-1] if self.points else None
            while len(self.points) < size:
                p = _G if p is None else PublicKey.combine_keys([p, _G])
                self.points.append(p)
                self.index[p.format(compressed=True)] = len(self.points)


_TABLE = _MultiplesOfG()

DEFAULT_MAX_PLAIN = 1 << 16


class GroupBackend(Backend):
    name = "group"
    ciphertext_len = 2 * _POINT_LEN

    def __init__(self, max_plain: int = DEFAULT_MAX_PLAIN):
        if max_plain < 1:
            raise ValueError("max_plain must be positive")
        self.max_plain = max_plain
        self._table_ready = False

    def _g_mul(self, m: int) -> Optional[PublicKey]:
        if m == 0:
            return None
        if m <= len(_TABLE.points):
            return _TABLE.points[m - 1]
        return _mul(_G, m)

    def keygen(self) -> KeyPair:
        x = secrets.randbelow(CURVE_ORDER - 1) + 1
        sk = x.to_bytes(32, "big")
        return KeyPair(self.name, PrivateKey(sk).public_key.format(compressed=True), sk)

    def validate_public_key(self, pk: bytes) -> None:
        if len(pk) != _POINT_LEN or _decode_point(pk) is None:
            raise CryptoError("public key is not a group element")

    def encrypt(self, pk: bytes, m: int) -> Ciphertext:
        self._check_plain(m)
        h = _decode_point(pk)
        if h is None:
            raise CryptoError("public key is the identity")
        r = secrets.randbelow(CURVE_ORDER - 1) + 1
        a = PrivateKey(r.to_bytes(32, "big")).public_key
        b = _sum([h.multiply(r.to_bytes(32, "big")), self._g_mul(m)])
        return _join(a, b)

    def add(self, x: Ciphertext, y: Ciphertext) -> Ciphertext:
        self.check(x)
        self.check(y)
        (a1, b1), (a2, b2) = _split(x), _split(y)
        return _join(_sum([a1, a2]), _sum([b1, b2]))

    def add_plain(self, ct: Ciphertext, k: int) -> Ciphertext:
        self.check(ct)
        a, b = _split(ct)
        return _join(a, _sum([b, self._g_mul(k) if k >= 0 else _mul(_G, k)]))

    def scalar_mul(self, ct: Ciphertext, k: int) -> Ciphertext:
        self.check(ct)
        a, b = _split(ct)
        return _join(_mul(a, k), _mul(b, k))

    def zero_like(self, ct: Ciphertext) -> Ciphertext:
        return bytes(self.ciphertext_len)

    def dot_product(self, cts: Sequence[Ciphertext], plains: Sequence[int]) -> Ciphertext:
        # Bucket terms by coefficient: one multiplication per distinct
        # coefficient instead of one per term.
        if len(cts) != len(plains):
            raise CryptoError(f"length mismatch: {len(cts)} ciphertexts, {len(plains)} plains")
        if not cts:
            raise CryptoError("empty dot product")
        buckets: dict[int, tuple[list, list]] = {}
        for ct, k in zip(cts, plains):
            self.check(ct)
            if k % CURVE_ORDER == 0:
                continue
            a, b = _split(ct)
            slot = buckets.setdefault(k, ([], []))
            slot[0].append(a)
            slot[1].append(b)
        firsts, seconds = [], []
        for k, (aa, bb) in buckets.items():
            firsts.append(_mul(_sum(aa), k))
            seconds.append(_mul(_sum(bb), k))
        return _join(_sum(firsts), _sum(seconds))

    def decrypt_small(self, sk: bytes, ct: Ciphertext) -> int:
        self.check(ct)
        if not self._table_ready:
            _TABLE.ensure(self.max_plain)
            self._table_ready = True
        a, b = _split(ct)
        x = int.from_bytes(sk, "big")
        m_g = _sum([b, _mul(a, CURVE_ORDER - x)])
        if m_g is None:
            return 0
        m = _TABLE.index.get(m_g.format(compressed=True))
        if m is None or m > self.max_plain:
            raise UndecodableError(f"plaintext is not in [0, {self.max_plain}]")
        return m


# mock backend

_MASK = (1 << 64) - 1


class MockBackend(Backend):
    """Ciphertext = key tag (8) | plaintext (8) | random nonce (8)."""

    name = "mock"
    ciphertext_len = 24

    def __init__(self, max_plain: int = (1 << 63) - 1):
        self.max_plain = max_plain

    def keygen(self) -> KeyPair:
        tag = secrets.token_bytes(8)
        return KeyPair(self.name, tag, tag)

    def validate_public_key(self, pk: bytes) -> None:
        if len(pk) != 8:
            raise CryptoError("mock public key must be 8 bytes")

    @staticmethod
    def _pack(tag: bytes, m: int) -> Ciphertext:
        return tag + struct.pack(">Q", m & _MASK) + secrets.token_bytes(8)

    def _unpack(self, ct: Ciphertext):
        self.check(ct)
        return ct[:8], struct.unpack(">Q", ct[8:16])[0]

    def encrypt(self, pk: bytes, m: int) -> Ciphertext:
        self.validate_public_key(pk)
        self._check_plain(m)
        return self._pack(pk, m)

    def add(self, x: Ciphertext, y: Ciphertext) -> Ciphertext:
        (t1, m1), (t2, m2) = self._unpack(x), self._unpack(y)
        if t1 != t2:
            raise CryptoError("ciphertexts under different keys")
        return self._pack(t1, m1 + m2)

    def add_plain(self, ct: Ciphertext, k: int) -> Ciphertext:
        tag, m = self._unpack(ct)
        return self._pack(tag, m + k)

    def scalar_mul(self, ct: Ciphertext, k: int) -> Ciphertext:
        tag, m = self._unpack(ct)
        return self._pack(tag, m * k)

    def zero_like(self, ct: Ciphertext) -> Ciphertext:
        return ct[:8] + bytes(16)

    def decrypt_small(self, sk: bytes, ct: Ciphertext) -> int:
        tag, m = self._unpack(ct)
        if tag != sk:
            raise CryptoError("ciphertext was made under another key")
        if m > self.max_plain:
            raise UndecodableError(f"plaintext is not in [0, {self.max_plain}]")
        return m


BACKENDS = {"group": GroupBackend, "mock": MockBackend}


def get_backend(name: str, **kwargs) -> Backend:
    try:
        cls = BACKENDS[name]
    except KeyError:
        raise CryptoError(f"unknown backend {name!r}") from None
    return cls(**kwargs)
