"""Client and server halves of the private conformance check.

The client walks the wavelet matrix one bit row at a time. For each row it
sends its two interval endpoints as encrypted one-hot vectors of length
2M; the slot is ``bit * M + index`` so the server's dot product with the
concatenated ``zero_rank[r] + one_srank[r]`` row selects the right table
without learning the bit. Every reply is shifted by a fresh offset R drawn
by the server, so the client only ever sees positions modulo M shifted by
an unknown R. The server removes the previous R by cyclically rotating
each half of the rank row before the dot product.

One R is shared by both endpoints. That lets the client test emptiness
with ``(g - f) mod M == 0`` and leaks the interval width, but never its
position.

A log move is signalled with the ``undo`` flag on the next request (or on
FIN after the last character). The server then restores the R that was in
force when the character started and charges the mismatch budget.
"""

from __future__ import annotations

import random
import secrets
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

from .alignment import Alignment, LogMove, Move, Sync
from .crypto import Backend, Ciphertext, KeyPair
from .errors import BudgetExhausted, ProtocolError
from .index import FmIndex
from .model.text import Alphabet, RunsText


def required_max_plain(size: int) -> int:
    """Decryption bound the client must support for index size M.

    Replies are at most (M - 1) + (M - 1); the bound keeps the wider
    2M + M margin.
    """
    return 3 * size


class IndexServer:
    """Index data shared read-only by every session."""

    def __init__(self, index: FmIndex):
        self.index = index
        self.size = index.length + 1
        self.width = index.width
        self.alphabet = index.alphabet
        self.ranks01 = [index.wm.ranks01(r) for r in range(self.width)]

    def session(self, backend: Backend, public_key: bytes, budget: Optional[int] = None,
                rng=None, keep_history: bool = False) -> "ServerSession":
        return ServerSession(self, backend, public_key, budget, rng, keep_history)


def server_init(text: RunsText | FmIndex) -> tuple[IndexServer, int]:
    index = text if isinstance(text, FmIndex) else FmIndex.build(text)
    server = IndexServer(index)
    return server, server.size


def derotate(row: Sequence[int], size: int, offset: int) -> list[int]:
    """Shift each half of ``row`` so slot j reads entry (j - offset) mod M."""
    if offset == 0:
        return list(row)
    lo, hi = row[:size], row[size:]
    return (lo[-offset:] + lo[:-offset]) + (hi[-offset:] + hi[:-offset])


class ServerSession:
    def __init__(self, server: IndexServer, backend: Backend, public_key: bytes,
                 budget: Optional[int] = None, rng=None, keep_history: bool = False):
        if budget is not None and budget < 0:
            raise ValueError("budget must be >= 0 or None")
        backend.validate_public_key(public_key)
        self.server = server
        self.backend = backend
        self.public_key = public_key
        self.budget_remaining = budget
        self.rng = rng if rng is not None else secrets.SystemRandom()
        self.R_f = self.R_g = 0
        self.old_R_f = self.old_R_g = 0
        self.undos = 0
        self.next_row = 0
        self.finished = False
        self.aborted = False
        # test hook: (row, offset removed, offset added) per reply
        self.history: Optional[list[tuple[int, int, int]]] = [] if keep_history else None

    @property
    def size(self) -> int:
        return self.server.size

    def _undo(self) -> None:
        self.R_f, self.R_g = self.old_R_f, self.old_R_g
        if self.budget_remaining is not None:
            if self.budget_remaining == 0:
                self.aborted = True
                raise BudgetExhausted("mismatch budget exhausted")
            self.budget_remaining -= 1
        self.undos += 1

    def plf(self, r: int, undo: bool, vf: Sequence[Ciphertext],
            vg: Sequence[Ciphertext]) -> tuple[Ciphertext, Ciphertext]:
        """One partial LF step over wavelet matrix row ``r``."""
        if self.aborted or self.finished:
            raise ProtocolError("session is closed")
        if r != self.next_row:
            self.aborted = True
            raise ProtocolError(f"expected row {self.next_row}, got {r}")
        if undo and r != 0:
            self.aborted = True
            raise ProtocolError("undo is only allowed at a character boundary")
        m = self.size
        if len(vf) != 2 * m or len(vg) != 2 * m:
            self.aborted = True
            raise ProtocolError(f"vectors must hold {2 * m} ciphertexts")
        if undo:
            self._undo()
        if r == 0:
            self.old_R_f, self.old_R_g = self.R_f, self.R_g

        row = self.server.ranks01[r]
        derot_f = derotate(row, m, self.R_f)
        derot_g = derot_f if self.R_g == self.R_f else derotate(row, m, self.R_g)
        fresh = self.rng.randrange(m)
        be, pk = self.backend, self.public_key
        ct_f = be.add(be.dot_product(vf, derot_f), be.encrypt(pk, fresh))
        ct_g = be.add(be.dot_product(vg, derot_g), be.encrypt(pk, fresh))
        if self.history is not None:
            self.history.append((r, self.R_f, fresh))
        self.R_f = self.R_g = fresh
        self.next_row = (r + 1) % self.server.width
        return ct_f, ct_g

    def fin(self, undo: bool) -> int:
        """Close the trace; returns the number of undos charged."""
        if self.aborted or self.finished:
            raise ProtocolError("session is closed")
        if self.next_row != 0:
            self.aborted = True
            raise ProtocolError("trace ended in the middle of a character")
        if undo:
            self._undo()
        self.finished = True
        return self.undos


def server_plf(sess: ServerSession, r: int, undo: bool, vf, vg):
    return sess.plf(r, undo, vf, vg)


def pack(index_obf: int, bit: int, size: int, pk: bytes, backend: Backend) -> list[Ciphertext]:
    """Encrypted one-hot vector of length 2M, hot at ``bit * M + index_obf``."""
    if not 0 <= index_obf < size:
        raise ValueError(f"index {index_obf} outside [0, {size})")
    if bit not in (0, 1):
        raise ValueError("bit must be 0 or 1")
    hot = bit * size + index_obf
    return [backend.encrypt(pk, 1 if i == hot else 0) for i in range(2 * size)]


def emptiness_check(f_obf: int, g_obf: int, size: int) -> bool:
    """True iff the interval is empty; both ends must carry the same offset."""
    return (g_obf - f_obf) % size == 0


class Channel(Protocol):
    def plf(self, r: int, undo: bool, vf: Sequence[Ciphertext],
            vg: Sequence[Ciphertext]) -> tuple[Ciphertext, Ciphertext]: ...

    def fin(self, undo: bool) -> int: ...


class LocalChannel:
    """Direct calls into a ServerSession, optionally recording a transcript."""

    def __init__(self, session: ServerSession, record: bool = False):
        self.session = session
        self.transcript: Optional[list] = [] if record else None

    def plf(self, r, undo, vf, vg):
        if self.transcript is not None:
            self.transcript.append(("PLF_REQ", r, bool(undo), tuple(vf), tuple(vg)))
        reply = self.session.plf(r, undo, vf, vg)
        if self.transcript is not None:
            self.transcript.append(("PLF_RESP", *reply))
        return reply

    def fin(self, undo):
        if self.transcript is not None:
            self.transcript.append(("FIN", bool(undo)))
        return self.session.fin(undo)


@dataclass(frozen=True)
class SessionConfig:
    size: int
    width: int
    alphabet: Alphabet
    budget: Optional[int]
    backend: str
    ciphertext_len: int
    public_key: bytes

    def __post_init__(self):
        if self.size < 2:
            raise ProtocolError("index size must be at least 2")
        if self.budget is not None and self.budget < 0:
            raise ProtocolError("budget must be non-negative")
        if self.width != self.alphabet.width:
            raise ProtocolError("width does not match the alphabet")


class ClientSession:
    def __init__(self, backend: Backend, keypair: KeyPair, config: SessionConfig,
                 channel: Channel):
        if keypair.backend != backend.name or config.backend != backend.name:
            raise ProtocolError("backend mismatch")
        if backend.max_plain < required_max_plain(config.size):
            raise ProtocolError(
                f"backend decrypts up to {backend.max_plain}, "
                f"index needs {required_max_plain(config.size)}")
        self.backend = backend
        self.keypair = keypair
        self.config = config
        self.channel = channel
        self.size = config.size
        self.f_obf, self.g_obf = 0, config.size - 1
        self.saved_f, self.saved_g = self.f_obf, self.g_obf
        self.undo = False
        # raw decrypted replies (row, f, g), for transcript comparisons
        self.decrypted: list[tuple[int, int, int]] = []
        self.used = False

    def _step(self, r: int, bit: int) -> None:
        pk, be, m = self.keypair.public_key, self.backend, self.size
        vf = pack(self.f_obf, bit, m, pk, be)
        vg = pack(self.g_obf, bit, m, pk, be)
        undo = self.undo and r == 0
        ct_f, ct_g = self.channel.plf(r, undo, vf, vg)
        if undo:
            self.undo = False
        raw_f = be.decrypt_small(self.keypair.secret_key, ct_f)
        raw_g = be.decrypt_small(self.keypair.secret_key, ct_g)
        self.decrypted.append((r, raw_f, raw_g))
        self.f_obf, self.g_obf = raw_f % m, raw_g % m

    def check(self, trace: Sequence[str]) -> Alignment:
        if self.used:
            raise ProtocolError("a session checks a single trace")
        self.used = True
        alphabet = self.config.alphabet
        query = alphabet.encode_seq(trace) + [alphabet.separator_code]
        # the very first request is unshifted: true (0, |T|), R = 0
        self.f_obf, self.g_obf = 0, self.size - 1
        moves: list[Move] = []
        for c in reversed(query):
            self.saved_f, self.saved_g = self.f_obf, self.g_obf
            for r in range(self.config.width):
                self._step(r, (c >> r) & 1)
            label = alphabet.symbols[c]
            if emptiness_check(self.f_obf, self.g_obf, self.size):
                self.f_obf, self.g_obf = self.saved_f, self.saved_g
                self.undo = True
                moves.append(LogMove(label))
            else:
                moves.append(Sync(label))
        self.channel.fin(self.undo)
        self.undo = False
        moves.reverse()
        return Alignment(tuple(moves))


def client_check(sess: ClientSession, trace: Sequence[str]) -> Alignment:
    return sess.check(trace)


def local_session(server: IndexServer, backend: Backend, budget: Optional[int] = None,
                  rng=None, keypair: Optional[KeyPair] = None, record: bool = False,
                  keep_history: bool = False) -> tuple[ClientSession, ServerSession, LocalChannel]:
    """Wire a client to a server session in-process."""
    keypair = keypair or backend.keygen()
    ssess = server.session(backend, keypair.public_key, budget, rng, keep_history)
    channel = LocalChannel(ssess, record)
    config = SessionConfig(server.size, server.width, server.alphabet, budget,
                           backend.name, backend.ciphertext_len, keypair.public_key)
    return ClientSession(backend, keypair, config, channel), ssess, channel


def seeded_rng(seed: int) -> random.Random:
    return random.Random(seed)
