"""Length-prefixed TCP protocol for oblivious inference ("FCNP" frames).

Frame: magic "FCNP" | u8 version | u8 msg_type | u64 LE payload length |
payload.  One InferRequest (params digest, ciphertext count, ciphertexts)
yields one InferResponse (ciphertext count, ciphertexts) or an Error frame
with a UTF-8 message.  The server side holds the model, the public
parameters, and the public evaluation keys; no decryption path exists in
the serving code, so request plaintexts are unrecoverable there by
construction.

Clients encrypt one input tensor per plaintext lane and send all lanes in
a single request (ciphertext headers carry their lane); the response holds
the output grid for every lane in the same order.
"""

from __future__ import annotations

import socket
import socketserver
import struct
import threading

import numpy as np

from . import engine, fv
from .encode import FixedPointConfig
from .fv import Ciphertext, EncryptionParams, EvalKeys

FRAME_MAGIC = b"FCNP"
PROTOCOL_VERSION = 1
MSG_INFER_REQUEST = 0x01
MSG_INFER_RESPONSE = 0x02
MSG_ERROR = 0x03

DEFAULT_PAYLOAD_CAP = 2 << 30  # full-image requests run to hundreds of MB
_HEADER = struct.Struct("<4sBBQ")


class ProtocolError(RuntimeError):
    pass


def pack_frame(msg_type: int, payload: bytes) -> bytes:
    return _HEADER.pack(FRAME_MAGIC, PROTOCOL_VERSION, msg_type, len(payload)) + payload


def _read_exact(sock: socket.socket, count: int) -> bytes:
    chunks = []
    got = 0
    while got < count:
        part = sock.recv(min(1 << 20, count - got))
        if not part:
            raise ProtocolError("connection dropped mid-frame")
        chunks.append(part)
        got += len(part)
    return b"".join(chunks)


def read_frame(sock: socket.socket, payload_cap: int = DEFAULT_PAYLOAD_CAP) -> tuple[int, bytes]:
    head = _read_exact(sock, _HEADER.size)
    magic, version, msg_type, length = _HEADER.unpack(head)
    if magic != FRAME_MAGIC:
        raise ProtocolError("bad frame magic")
    if version != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    if length > payload_cap:
        raise ProtocolError(f"payload of {length} bytes exceeds cap {payload_cap}")
    return msg_type, _read_exact(sock, int(length))


def pack_infer_request(digest: bytes, ct_blobs: list[bytes]) -> bytes:
    if len(digest) != 32:
        raise ProtocolError("params digest must be 32 bytes")
    return digest + struct.pack("<I", len(ct_blobs)) + b"".join(ct_blobs)


def split_ciphertexts(payload: bytes, offset: int, count: int, params: EncryptionParams) -> list[bytes]:
    stride = 8 * fv.ciphertext_num_words(params)
    end = offset + count * stride
    if end != len(payload):
        raise ProtocolError(
            f"payload size {len(payload)} does not match {count} ciphertexts"
        )
    return [payload[offset + i * stride : offset + (i + 1) * stride] for i in range(count)]


class InferenceServer:
    """Threaded TCP server evaluating the model over request ciphertexts.

    Owns: network spec, parameters, fixed-point config, evaluation keys.
    Never owns or accepts secret-key material.
    """

    def __init__(
        self,
        net: engine.NetworkSpec,
        params: EncryptionParams,
        cfg: FixedPointConfig,
        eval_keys: EvalKeys,
        digest: bytes,
        host: str = "127.0.0.1",
        port: int = 0,
        payload_cap: int = DEFAULT_PAYLOAD_CAP,
        workers: int = 1,
    ):
        self.net = net
        self.params = params
        self.cfg = cfg
        self.eval_keys = eval_keys
        self.digest = digest
        self.payload_cap = payload_cap
        self.workers = workers
        self.last_counter: engine.HopCounter | None = None
        outer = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                try:
                    msg_type, payload = read_frame(self.request, outer.payload_cap)
                except ProtocolError as e:
                    try:
                        self.request.sendall(pack_frame(MSG_ERROR, str(e).encode()))
                    except OSError:
                        pass
                    return
                try:
                    if msg_type != MSG_INFER_REQUEST:
                        raise ProtocolError(f"unexpected message type {msg_type:#x}")
                    response = outer._run_inference(payload)
                    self.request.sendall(pack_frame(MSG_INFER_RESPONSE, response))
                except (ProtocolError, ValueError, RuntimeError) as e:
                    self.request.sendall(pack_frame(MSG_ERROR, str(e).encode()))

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server((host, port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def _run_inference(self, payload: bytes) -> bytes:
        if len(payload) < 36:
            raise ProtocolError("truncated inference request")
        digest, (count,) = payload[:32], struct.unpack("<I", payload[32:36])
        if digest != self.digest:
            raise ProtocolError("params digest mismatch: client and server disagree")
        blobs = split_ciphertexts(payload, 36, count, self.params)
        cts = [fv.ciphertext_from_bytes(b, self.params) for b in blobs]

        by_lane: dict[int, list[Ciphertext]] = {}
        for ct in cts:
            by_lane.setdefault(ct.lane, []).append(ct)
        expected = int(np.prod(self.net.input_shape))
        out_blobs: list[bytes] = []
        counter = None
        out_factor = 1
        for lane in sorted(by_lane):
            grid = by_lane[lane]
            if len(grid) != expected:
                raise ProtocolError(
                    f"lane {lane} carries {len(grid)} ciphertexts, expected {expected}"
                )
            tensor = engine.CipherTensor(
                self.net.input_shape, grid, grid[0].scale_exponent, 1
            )
            out, counter = engine.eval_encrypted(
                self.net, tensor, self.eval_keys, self.cfg, workers=self.workers
            )
            out_factor = out.scale_factor
            out_blobs.extend(fv.ciphertext_to_bytes(ct) for ct in out.cts)
        self.last_counter = counter
        # ciphertext headers carry the power-of-two scale; the residual
        # integer pooling divisor is public metadata and rides here
        return (
            struct.pack("<IQ", len(out_blobs), out_factor) + b"".join(out_blobs)
        )

    def serve_in_thread(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def shutdown(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


def request_inference(
    host: str,
    port: int,
    digest: bytes,
    ct_blobs: list[bytes],
    params: EncryptionParams,
    payload_cap: int = DEFAULT_PAYLOAD_CAP,
    timeout: float = 600.0,
) -> tuple[list[bytes], int]:
    """Send one InferRequest; return (response ciphertext blobs, scale factor)."""
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.sendall(pack_frame(MSG_INFER_REQUEST, pack_infer_request(digest, ct_blobs)))
        msg_type, payload = read_frame(sock, payload_cap)
    if msg_type == MSG_ERROR:
        raise ProtocolError(f"server error: {payload.decode(errors='replace')}")
    if msg_type != MSG_INFER_RESPONSE:
        raise ProtocolError(f"unexpected response type {msg_type:#x}")
    if len(payload) < 12:
        raise ProtocolError("truncated inference response")
    count, factor = struct.unpack("<IQ", payload[:12])
    return split_ciphertexts(payload, 12, count, params), int(factor)
