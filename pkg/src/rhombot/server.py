"""Wire transports for the planning session.

The canonical protocol is a bidirectional TCP socket carrying
length-delimited JSON messages: each message is the payload byte length in
ASCII decimal, a newline, then the JSON bytes. Responses echo the request
id; frame broadcasts (no id) go to connections that subscribed.

An HTTP gateway adapts the same messages for browsers: POST /api/msg with
a protocol message returns the response, GET /api/frames is a server-sent
event stream of frame broadcasts, everything else serves the UI assets.
"""

from __future__ import annotations

import json
import mimetypes
import os
import queue
import socket
import socketserver
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .session import Session

MAX_MESSAGE_BYTES = 16 * 1024 * 1024


class SessionHub:
    """One shared session plus its subscriber registry; requests are
    serialized by a single lock (arrival order)."""

    def __init__(self):
        self.session = Session()
        self._lock = threading.Lock()
        self._subscribers: dict[int, "queue.Queue[dict]"] = {}
        self._next_sub = 1

    def dispatch(self, msg: dict) -> tuple[dict, list[dict]]:
        with self._lock:
            response, broadcasts = self.session.handle(msg)
            if broadcasts:
                for q in list(self._subscribers.values()):
                    for b in broadcasts:
                        q.put(b)
            return response, broadcasts

    def subscribe(self) -> tuple[int, "queue.Queue[dict]"]:
        with self._lock:
            sub_id = self._next_sub
            self._next_sub += 1
            q: "queue.Queue[dict]" = queue.Queue()
            self._subscribers[sub_id] = q
            return sub_id, q

    def unsubscribe(self, sub_id: int):
        with self._lock:
            self._subscribers.pop(sub_id, None)


def encode_message(msg: dict) -> bytes:
    payload = json.dumps(msg, separators=(",", ":")).encode("utf-8")
    return str(len(payload)).encode("ascii") + b"\n" + payload


def read_message(rfile) -> dict | None:
    """Read one length-delimited message; None on a clean EOF."""
    header = rfile.readline(32)
    if not header:
        return None
    try:
        length = int(header.strip())
    except ValueError:
        raise ValueError(f"bad length header {header!r}") from None
    if not (0 <= length <= MAX_MESSAGE_BYTES):
        raise ValueError(f"message length {length} out of range")
    payload = rfile.read(length)
    if len(payload) != length:
        return None
    return json.loads(payload.decode("utf-8"))


class _TCPHandler(socketserver.StreamRequestHandler):
    def handle(self):
        hub: SessionHub = self.server.hub  # type: ignore[attr-defined]
        write_lock = threading.Lock()
        sub_id = None
        stop = threading.Event()

        def pump(q: "queue.Queue[dict]"):
            while not stop.is_set():
                try:
                    b = q.get(timeout=0.2)
                except queue.Empty:
                    continue
                try:
                    with write_lock:
                        self.wfile.write(encode_message(b))
                        self.wfile.flush()
                except OSError:
                    return

        pump_thread = None
        try:
            while True:
                try:
                    msg = read_message(self.rfile)
                except ValueError:
                    break
                if msg is None:
                    break
                response, _broadcasts = hub.dispatch(msg)
                if (
                    msg.get("kind") == "subscribe_frames"
                    and response.get("ok")
                    and sub_id is None
                ):
                    sub_id, q = hub.subscribe()
                    pump_thread = threading.Thread(
                        target=pump, args=(q,), daemon=True
                    )
                    pump_thread.start()
                with write_lock:
                    self.wfile.write(encode_message(response))
                    self.wfile.flush()
        finally:
            stop.set()
            if sub_id is not None:
                hub.unsubscribe(sub_id)
            if pump_thread is not None:
                pump_thread.join(timeout=1.0)


class SessionTCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], hub: SessionHub | None = None):
        super().__init__(address, _TCPHandler)
        self.hub = hub or SessionHub()


def _gateway_handler(hub: SessionHub, ui_dir: str | None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            pass

        def _send_json(self, obj: dict, status: int = 200):
            body = json.dumps(obj).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):
            if self.path != "/api/msg":
                self._send_json({"error": "not found"}, 404)
                return
            length = int(self.headers.get("Content-Length", "0"))
            if length > MAX_MESSAGE_BYTES:
                self._send_json({"error": "message too large"}, 413)
                return
            try:
                msg = json.loads(self.rfile.read(length).decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                self._send_json({"error": "invalid JSON"}, 400)
                return
            response, _broadcasts = hub.dispatch(msg)
            self._send_json(response)

        def do_GET(self):
            if self.path == "/api/frames":
                self._stream_frames()
                return
            self._serve_static()

        def _stream_frames(self):
            sub_id, q = hub.subscribe()
            try:
                self.send_response(200)
                self.send_header("Content-Type", "text/event-stream")
                self.send_header("Cache-Control", "no-cache")
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(b": connected\n\n")
                self.wfile.flush()
                while True:
                    try:
                        b = q.get(timeout=1.0)
                    except queue.Empty:
                        self.wfile.write(b": keepalive\n\n")
                        self.wfile.flush()
                        continue
                    data = json.dumps(b, separators=(",", ":"))
                    self.wfile.write(f"data: {data}\n\n".encode("utf-8"))
                    self.wfile.flush()
            except OSError:
                pass
            finally:
                hub.unsubscribe(sub_id)

        def _serve_static(self):
            if ui_dir is None:
                self._send_json({"error": "no UI assets configured"}, 404)
                return
            path = self.path.split("?", 1)[0]
            if path in ("", "/"):
                path = "/index.html"
            full = os.path.realpath(os.path.join(ui_dir, path.lstrip("/")))
            root = os.path.realpath(ui_dir)
            if not full.startswith(root + os.sep) and full != root:
                self._send_json({"error": "forbidden"}, 403)
                return
            if not os.path.isfile(full):
                self._send_json({"error": "not found"}, 404)
                return
            ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
            with open(full, "rb") as fh:
                body = fh.read()
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

    return Handler


class SessionHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(
        self,
        address: tuple[str, int],
        hub: SessionHub,
        ui_dir: str | None = None,
    ):
        super().__init__(address, _gateway_handler(hub, ui_dir))
        self.hub = hub


class SessionClient:
    """Blocking TCP client speaking the length-delimited protocol."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.rfile = self.sock.makefile("rb")
        self._next_id = 1

    def request(self, kind: str, payload: dict | None = None) -> dict:
        msg = {"v": 1, "id": self._next_id, "kind": kind, "payload": payload or {}}
        self._next_id += 1
        self.sock.sendall(encode_message(msg))
        while True:
            response = read_message(self.rfile)
            if response is None:
                raise ConnectionError("server closed the connection")
            if response.get("kind") == "frame":
                continue  # interleaved broadcast
            return response

    def read_broadcast(self) -> dict | None:
        return read_message(self.rfile)

    def close(self):
        try:
            self.rfile.close()
        finally:
            self.sock.close()
