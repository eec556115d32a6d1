"""Framed binary transport over TCP.

Frame layout: 4-byte big-endian length (type byte + payload), 1-byte
message type, payload. Integers inside payloads are big-endian too.

Session: HELLO -> INIT_ACK, then PLF_REQ -> PLF_RESP per wavelet row,
FIN -> FIN_ACK once the trace is done, BYE to close. Any failure on the
server side is answered with ABORT and the connection is closed.
"""

from __future__ import annotations

import logging
import os
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Sequence

from .crypto import Backend, KeyPair, get_backend
from .errors import (BudgetExhausted, CryptoError, PPCCError, ProtocolError,
                     TransportError)
from .model.text import Alphabet
from .protocol import ClientSession, IndexServer, SessionConfig, required_max_plain

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
MAX_FRAME = 64 * 1024 * 1024
UNLIMITED = 0xFFFFFFFF
LISTEN_ENV = "PPCC_LISTEN_ADDR"


class MsgType(IntEnum):
    HELLO = 1
    INIT_ACK = 2
    PLF_REQ = 3
    PLF_RESP = 4
    ABORT = 5
    BYE = 6
    FIN = 7
    FIN_ACK = 8


class AbortReason(IntEnum):
    BUDGET = 1
    PROTOCOL = 2
    VERSION = 3
    BACKEND = 4
    CAPACITY = 5
    INTERNAL = 6


@dataclass(frozen=True)
class Hello:
    version: int
    backend: str
    max_plain: int
    public_key: bytes


@dataclass(frozen=True)
class InitAck:
    size: int
    width: int
    symbols: tuple[str, ...]
    ciphertext_len: int
    budget: Optional[int]


@dataclass(frozen=True)
class PlfReq:
    row: int
    undo: bool
    vf: tuple[bytes, ...]
    vg: tuple[bytes, ...]


@dataclass(frozen=True)
class PlfResp:
    ct_f: bytes
    ct_g: bytes


@dataclass(frozen=True)
class Abort:
    reason: AbortReason
    message: str


@dataclass(frozen=True)
class Bye:
    pass


@dataclass(frozen=True)
class Fin:
    undo: bool


@dataclass(frozen=True)
class FinAck:
    undos: int


class FrameError(ProtocolError):
    pass


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.off = data, 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise FrameError("truncated payload")
        out = self.data[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(">" + fmt, self.take(struct.calcsize(">" + fmt)))

    def done(self) -> None:
        if self.off != len(self.data):
            raise FrameError("trailing bytes in payload")


def _str(s: str, width: str = "B") -> bytes:
    raw = s.encode("utf-8")
    return struct.pack(">" + width, len(raw)) + raw


def _cts(vec: Sequence[bytes], ct_len: int) -> bytes:
    for ct in vec:
        if len(ct) != ct_len:
            raise FrameError("ciphertexts must share one length")
    return b"".join(vec)


def _payload(msg) -> tuple[MsgType, bytes]:
    if isinstance(msg, Hello):
        return MsgType.HELLO, (struct.pack(">B", msg.version) + _str(msg.backend)
                               + struct.pack(">QI", msg.max_plain, len(msg.public_key))
                               + msg.public_key)
    if isinstance(msg, InitAck):
        body = struct.pack(">IBI", msg.size, msg.width, len(msg.symbols))
        body += b"".join(_str(s, "H") for s in msg.symbols)
        budget = UNLIMITED if msg.budget is None else msg.budget
        return MsgType.INIT_ACK, body + struct.pack(">HI", msg.ciphertext_len, budget)
    if isinstance(msg, PlfReq):
        if len(msg.vf) != len(msg.vg) or not msg.vf:
            raise FrameError("PLF_REQ vectors must be non-empty and equally long")
        ct_len = len(msg.vf[0])
        return MsgType.PLF_REQ, (struct.pack(">BBIH", msg.row, int(msg.undo), len(msg.vf), ct_len)
                                 + _cts(msg.vf, ct_len) + _cts(msg.vg, ct_len))
    if isinstance(msg, PlfResp):
        if len(msg.ct_f) != len(msg.ct_g):
            raise FrameError("PLF_RESP ciphertexts must share one length")
        return MsgType.PLF_RESP, struct.pack(">H", len(msg.ct_f)) + msg.ct_f + msg.ct_g
    if isinstance(msg, Abort):
        return MsgType.ABORT, struct.pack(">B", int(msg.reason)) + _str(msg.message, "H")
    if isinstance(msg, Bye):
        return MsgType.BYE, b""
    if isinstance(msg, Fin):
        return MsgType.FIN, struct.pack(">B", int(msg.undo))
    if isinstance(msg, FinAck):
        return MsgType.FIN_ACK, struct.pack(">I", msg.undos)
    raise FrameError(f"cannot encode {type(msg).__name__}")


def encode_frame(msg) -> bytes:
    kind, payload = _payload(msg)
    return struct.pack(">IB", len(payload) + 1, kind) + payload


def _decode_payload(kind: int, payload: bytes):
    rd = _Reader(payload)
    try:
        kind = MsgType(kind)
    except ValueError:
        raise FrameError(f"unknown message type {kind}") from None
    if kind == MsgType.HELLO:
        (version,) = rd.unpack("B")
        (n,) = rd.unpack("B")
        backend = rd.take(n).decode("utf-8", "replace")
        max_plain, pk_len = rd.unpack("QI")
        msg = Hello(version, backend, max_plain, rd.take(pk_len))
    elif kind == MsgType.INIT_ACK:
        size, width, count = rd.unpack("IBI")
        symbols = []
        for _ in range(count):
            (n,) = rd.unpack("H")
            symbols.append(rd.take(n).decode("utf-8"))
        ct_len, budget = rd.unpack("HI")
        msg = InitAck(size, width, tuple(symbols), ct_len,
                      None if budget == UNLIMITED else budget)
    elif kind == MsgType.PLF_REQ:
        row, undo, count, ct_len = rd.unpack("BBIH")
        if ct_len == 0:
            raise FrameError("zero ciphertext length")
        vf = tuple(rd.take(ct_len) for _ in range(count))
        vg = tuple(rd.take(ct_len) for _ in range(count))
        msg = PlfReq(row, bool(undo), vf, vg)
    elif kind == MsgType.PLF_RESP:
        (ct_len,) = rd.unpack("H")
        msg = PlfResp(rd.take(ct_len), rd.take(ct_len))
    elif kind == MsgType.ABORT:
        code, n = rd.unpack("BH")
        try:
            reason = AbortReason(code)
        except ValueError:
            reason = AbortReason.INTERNAL
        msg = Abort(reason, rd.take(n).decode("utf-8", "replace"))
    elif kind == MsgType.BYE:
        msg = Bye()
    elif kind == MsgType.FIN:
        (undo,) = rd.unpack("B")
        msg = Fin(bool(undo))
    else:
        (undos,) = rd.unpack("I")
        msg = FinAck(undos)
    rd.done()
    return msg


def decode_frame(data: bytes, max_frame: int = MAX_FRAME):
    """Decode exactly one frame."""
    if len(data) < 5:
        raise FrameError("truncated frame header")
    (length,) = struct.unpack_from(">I", data, 0)
    if length > max_frame:
        raise FrameError(f"frame of {length} bytes exceeds limit {max_frame}")
    if length < 1:
        raise FrameError("frame without a type byte")
    if len(data) != 4 + length:
        raise FrameError("frame length does not match data")
    return _decode_payload(data[4], data[5:])


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks, got = [], 0
    while got < n:
        try:
            chunk = sock.recv(min(n - got, 1 << 20))
        except OSError as exc:
            raise TransportError(f"receive failed: {exc}") from exc
        if not chunk:
            raise TransportError("connection closed by peer")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket, max_frame: int = MAX_FRAME):
    header = _recv_exact(sock, 4)
    (length,) = struct.unpack(">I", header)
    if length > max_frame:
        raise FrameError(f"frame of {length} bytes exceeds limit {max_frame}")
    if length < 1:
        raise FrameError("frame without a type byte")
    body = _recv_exact(sock, length)
    return _decode_payload(body[0], body[1:])


def write_frame(sock: socket.socket, msg) -> None:
    try:
        sock.sendall(encode_frame(msg))
    except OSError as exc:
        raise TransportError(f"send failed: {exc}") from exc


def parse_addr(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"address must be host:port, got {addr!r}")
    return host.strip("[]") or "127.0.0.1", int(port)


# server


@dataclass
class ServerConfig:
    budget: Optional[int] = 4
    backends: tuple[str, ...] = ("group", "mock")
    max_frame: int = MAX_FRAME
    seed: Optional[int] = None  # seeds R draws; tests only


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        srv: PPCCServer = self.server  # type: ignore[assignment]
        sock = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        try:
            srv.run_session(sock)
        except TransportError as exc:
            log.info("connection dropped: %s", exc)
        except ProtocolError as exc:
            srv._abort(sock, AbortReason.PROTOCOL, str(exc))
        except Exception:  # never let one session take the server down
            log.exception("session failed")
            srv._abort(sock, AbortReason.INTERNAL, "internal server error")


class PPCCServer(socketserver.ThreadingMixIn, socketserver.TCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, addr: tuple[str, int], index_server: IndexServer, config: ServerConfig):
        self.index_server = index_server
        self.config = config
        self._seed_lock = threading.Lock()
        self._sessions = 0
        self.session_log: list = []  # ServerSession objects, kept when seeded
        super().__init__(addr, _Handler)

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def _rng(self):
        if self.config.seed is None:
            return None
        import random
        with self._seed_lock:
            self._sessions += 1
            return random.Random(self.config.seed * 1_000_003 + self._sessions)

    def run_session(self, sock: socket.socket) -> None:
        cfg, ix = self.config, self.index_server
        hello = read_frame(sock, cfg.max_frame)
        if not isinstance(hello, Hello):
            return self._abort(sock, AbortReason.PROTOCOL, "expected HELLO")
        if hello.version != PROTOCOL_VERSION:
            return self._abort(sock, AbortReason.VERSION,
                               f"protocol version {hello.version} != {PROTOCOL_VERSION}")
        if hello.backend not in cfg.backends:
            return self._abort(sock, AbortReason.BACKEND,
                               f"unknown or disabled backend {hello.backend!r}")
        need = required_max_plain(ix.size)
        if hello.max_plain < need:
            return self._abort(sock, AbortReason.CAPACITY,
                               f"client decrypts up to {hello.max_plain}, index needs {need}")
        backend = get_backend(hello.backend, max_plain=need)
        try:
            session = ix.session(backend, hello.public_key, cfg.budget, self._rng(),
                                 keep_history=cfg.seed is not None)
        except CryptoError as exc:
            return self._abort(sock, AbortReason.PROTOCOL, str(exc))
        if cfg.seed is not None:
            self.session_log.append(session)
        write_frame(sock, InitAck(ix.size, ix.width, ix.alphabet.symbols,
                                  backend.ciphertext_len, cfg.budget))
        while True:
            try:
                msg = read_frame(sock, cfg.max_frame)
            except FrameError as exc:
                return self._abort(sock, AbortReason.PROTOCOL, str(exc))
            try:
                if isinstance(msg, PlfReq):
                    ct_f, ct_g = session.plf(msg.row, msg.undo, msg.vf, msg.vg)
                    write_frame(sock, PlfResp(ct_f, ct_g))
                elif isinstance(msg, Fin):
                    write_frame(sock, FinAck(session.fin(msg.undo)))
                elif isinstance(msg, Bye):
                    return None
                else:
                    return self._abort(sock, AbortReason.PROTOCOL,
                                       f"unexpected {type(msg).__name__}")
            except BudgetExhausted as exc:
                return self._abort(sock, AbortReason.BUDGET, str(exc))
            except (ProtocolError, CryptoError) as exc:
                return self._abort(sock, AbortReason.PROTOCOL, str(exc))

    @staticmethod
    def _abort(sock, reason: AbortReason, message: str) -> None:
        log.info("abort: %s", message)
        try:
            write_frame(sock, Abort(reason, message))
        except TransportError:
            pass


def start_server(addr: str, index_server: IndexServer,
                 config: Optional[ServerConfig] = None) -> PPCCServer:
    """Bind and serve in a background thread; port 0 picks a free port."""
    server = PPCCServer(parse_addr(addr), index_server, config or ServerConfig())
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


def serve(addr: Optional[str], index_server: IndexServer,
          config: Optional[ServerConfig] = None) -> None:
    """Serve until interrupted. ``$PPCC_LISTEN_ADDR`` overrides ``addr``."""
    addr = os.environ.get(LISTEN_ENV) or addr or "127.0.0.1:7707"
    with PPCCServer(parse_addr(addr), index_server, config or ServerConfig()) as server:
        log.info("serving %d-symbol index on %s", index_server.size - 1, server.address)
        server.serve_forever()


# client


class RemoteChannel:
    def __init__(self, sock: socket.socket, max_frame: int = MAX_FRAME):
        self.sock = sock
        self.max_frame = max_frame
        self.transcript: Optional[list] = None

    def _call(self, msg):
        write_frame(self.sock, msg)
        reply = read_frame(self.sock, self.max_frame)
        if self.transcript is not None:
            self.transcript.append((msg, reply))
        if isinstance(reply, Abort):
            if reply.reason == AbortReason.BUDGET:
                raise BudgetExhausted(reply.message)
            raise ProtocolError(f"server aborted: {reply.message}")
        return reply

    def plf(self, r, undo, vf, vg):
        reply = self._call(PlfReq(r, bool(undo), tuple(vf), tuple(vg)))
        if not isinstance(reply, PlfResp):
            raise ProtocolError(f"expected PLF_RESP, got {type(reply).__name__}")
        return reply.ct_f, reply.ct_g

    def fin(self, undo):
        reply = self._call(Fin(bool(undo)))
        if not isinstance(reply, FinAck):
            raise ProtocolError(f"expected FIN_ACK, got {type(reply).__name__}")
        return reply.undos


class RemoteSession(ClientSession):
    """A ClientSession bound to a socket; use as a context manager."""

    def __init__(self, sock, backend, keypair, config, channel):
        super().__init__(backend, keypair, config, channel)
        self.sock = sock

    def close(self) -> None:
        try:
            write_frame(self.sock, Bye())
        except TransportError:
            pass
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def connect(addr: str, backend: Backend | str = "group", keypair: Optional[KeyPair] = None,
            timeout: Optional[float] = 60.0, version: int = PROTOCOL_VERSION,
            max_frame: int = MAX_FRAME) -> RemoteSession:
    """Open a session: HELLO / INIT_ACK handshake, then ready to check."""
    if isinstance(backend, str):
        backend = get_backend(backend)
    keypair = keypair or backend.keygen()
    host, port = parse_addr(addr)
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise TransportError(f"cannot connect to {addr}: {exc}") from exc
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    try:
        write_frame(sock, Hello(version, backend.name, backend.max_plain, keypair.public_key))
        ack = read_frame(sock, max_frame)
        if isinstance(ack, Abort):
            raise ProtocolError(f"server rejected session: {ack.message}")
        if not isinstance(ack, InitAck):
            raise ProtocolError(f"expected INIT_ACK, got {type(ack).__name__}")
        if ack.ciphertext_len != backend.ciphertext_len:
            raise ProtocolError("ciphertext length mismatch")
        config = SessionConfig(ack.size, ack.width, Alphabet(ack.symbols), ack.budget,
                               backend.name, ack.ciphertext_len, keypair.public_key)
        return RemoteSession(sock, backend, keypair, config, RemoteChannel(sock, max_frame))
    except (PPCCError, ValueError):
        sock.close()
        raise
