"""Minimal WebSocket (RFC 6455) framing for the gateway's browser clients.

Covers exactly what the teleop UI needs: the HTTP upgrade handshake, text
frames, ping/pong and close.  Server-to-client frames are unmasked,
client-to-server frames are unmasked per the RFC.  Continuation frames are
reassembled; binary frames are rejected.
"""

from __future__ import annotations

import base64
import hashlib
import socket

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_CONT = 0x0
OP_TEXT = 0x1
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


class HandshakeError(ValueError):
    pass


def accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + _GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def read_http_request(sock: socket.socket, first: bytes = b"") -> dict[str, str]:
    """Read an upgrade request; returns lower-cased headers."""
    data = bytearray(first)
    while b"\r\n\r\n" not in data:
        chunk = sock.recv(4096)
        if not chunk:
            raise HandshakeError("connection closed during handshake")
        data.extend(chunk)
        if len(data) > 65536:
            raise HandshakeError("oversized handshake request")
    head = bytes(data).split(b"\r\n\r\n", 1)[0].decode("latin-1")
    lines = head.split("\r\n")
    headers: dict[str, str] = {"_request": lines[0]}
    for line in lines[1:]:
        if ":" in line:
            name, value = line.split(":", 1)
            headers[name.strip().lower()] = value.strip()
    return headers


def perform_handshake(sock: socket.socket, first: bytes = b"") -> None:
    headers = read_http_request(sock, first)
    key = headers.get("sec-websocket-key")
    if key is None or "websocket" not in headers.get("upgrade", "").lower():
        raise HandshakeError("not a websocket upgrade request")
    response = (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {accept_key(key)}\r\n"
        "\r\n"
    )
    sock.sendall(response.encode("ascii"))


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("socket closed mid-frame")
        buf.extend(chunk)
    return bytes(buf)


def encode_frame(payload: bytes, opcode: int = OP_TEXT, mask: bool = False) -> bytes:
    head = bytearray([0x80 | opcode])
    n = len(payload)
    mask_bit = 0x80 if mask else 0x00
    if n < 126:
        head.append(mask_bit | n)
    elif n < 1 << 16:
        head.append(mask_bit | 126)
        head.extend(n.to_bytes(2, "big"))
    else:
        head.append(mask_bit | 127)
        head.extend(n.to_bytes(8, "big"))
    if mask:
        key = b"\x00\x11\x22\x33"  # deterministic masking is RFC-legal for tests
        head.extend(key)
        payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    return bytes(head) + payload


def read_frame(sock: socket.socket) -> tuple[int, bool, bytes]:
    """Read one frame; returns (opcode, fin, unmasked payload)."""
    b0, b1 = _recv_exact(sock, 2)
    fin = bool(b0 & 0x80)
    opcode = b0 & 0x0F
    masked = bool(b1 & 0x80)
    n = b1 & 0x7F
    if n == 126:
        n = int.from_bytes(_recv_exact(sock, 2), "big")
    elif n == 127:
        n = int.from_bytes(_recv_exact(sock, 8), "big")
    key = _recv_exact(sock, 4) if masked else None
    payload = _recv_exact(sock, n) if n else b""
    if key:
        payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    return opcode, fin, payload


class WebSocketTransport:
    """One text message per protocol message."""

    def __init__(self, sock: socket.socket) -> None:
        self.sock = sock

    def send_message(self, text: str) -> None:
        self.sock.sendall(encode_frame(text.encode("utf-8"), OP_TEXT))

    def recv_message(self) -> str | None:
        parts: list[bytes] = []
        while True:
            try:
                opcode, fin, payload = read_frame(self.sock)
            except (ConnectionError, OSError):
                return None
            if opcode == OP_CLOSE:
                try:
                    self.sock.sendall(encode_frame(payload, OP_CLOSE))
                except OSError:
                    pass
                return None
            if opcode == OP_PING:
                self.sock.sendall(encode_frame(payload, OP_PONG))
                continue
            if opcode == OP_PONG:
                continue
            if opcode in (OP_TEXT, OP_CONT):
                parts.append(payload)
                if fin:
                    return b"".join(parts).decode("utf-8")
                continue
            return None  # binary or reserved: drop the connection

    def close(self) -> None:
        try:
            self.sock.sendall(encode_frame(b"", OP_CLOSE))
        except OSError:
            pass
        self.sock.close()


class LineTransport:
    """Newline-delimited messages over a raw socket (the CLI-facing mode)."""

    def __init__(self, sock: socket.socket) -> None:
        self.sock = sock
        self._buf = bytearray()

    def send_message(self, text: str) -> None:
        self.sock.sendall(text.encode("utf-8") + b"\n")

    def recv_message(self) -> str | None:
        while b"\n" not in self._buf:
            try:
                chunk = self.sock.recv(65536)
            except OSError:
                return None
            if not chunk:
                return None
            self._buf.extend(chunk)
        line, _, rest = bytes(self._buf).partition(b"\n")
        self._buf = bytearray(rest)
        return line.decode("utf-8")

    def close(self) -> None:
        self.sock.close()
