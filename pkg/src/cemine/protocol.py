"""Client side of the external model wire protocol.

Adapters are separate processes speaking newline-delimited JSON over a byte
stream, either the child's stdio or a TCP connection.  One JSON object per
line, UTF-8, empty lines ignored; responses may arrive out of order and are
matched to requests by id.  Requests are pipelined up to a window size so a
slow adapter still sees batches.  Timeouts raise a retryable error; every
malformed response raises a protocol error naming the offending id.
"""

from __future__ import annotations

import json
import select
import shlex
import socket
import subprocess
import time
from typing import Callable, Sequence

from .tagger import LABELS

DEFAULT_TIMEOUT = 30.0
DEFAULT_WINDOW = 32

_TAG_SET = set(LABELS)


class ProtocolError(RuntimeError):
    """Adapter broke the wire contract (bad JSON, bad id, bad payload)."""


class RetryableProtocolError(ProtocolError):
    """Transient failure (timeout); the caller may retry the batch."""


class _LineReader:
    """Incremental reader turning a read_some(timeout) callable into lines."""

    def __init__(self, read_some: Callable[[float], bytes]):
        self._read_some = read_some
        self._buffer = bytearray()
        self._eof = False

    def readline(self, timeout: float) -> str | None:
        """One decoded line without the newline; None on EOF."""
        deadline = time.monotonic() + timeout
        while True:
            newline = self._buffer.find(b"\n")
            if newline >= 0:
                raw = bytes(self._buffer[:newline])
                del self._buffer[:newline + 1]
                return raw.decode("utf-8", errors="replace").rstrip("\r")
            if self._eof:
                if self._buffer:
                    raw = bytes(self._buffer)
                    self._buffer.clear()
                    return raw.decode("utf-8", errors="replace").rstrip("\r")
                return None
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise RetryableProtocolError(
                    f"timed out after {timeout:.1f}s waiting for adapter output"
                )
            chunk = self._read_some(remaining)
            if chunk == b"":
                self._eof = True
            else:
                self._buffer.extend(chunk)


class SubprocessTransport:
    """Adapter as a child process; requests on stdin, responses on stdout."""

    def __init__(self, command: Sequence[str]):
        self.proc = subprocess.Popen(
            list(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
        )
        fd = self.proc.stdout.fileno()

        def read_some(timeout: float) -> bytes:
            ready, _, _ = select.select([fd], [], [], timeout)
            if not ready:
                raise RetryableProtocolError(
                    f"timed out after {timeout:.1f}s waiting for adapter output"
                )
            return self.proc.stdout.read1(65536)

        self.reader = _LineReader(read_some)

    def send_line(self, line: str) -> None:
        try:
            self.proc.stdin.write(line.encode("utf-8") + b"\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise ProtocolError(f"adapter process closed its stdin: {exc}") from exc

    def readline(self, timeout: float) -> str | None:
        return self.reader.readline(timeout)

    def close(self) -> None:
        if self.proc.stdin and not self.proc.stdin.closed:
            try:
                self.proc.stdin.close()
            except OSError:
                pass  # child already gone; flushing into a dead pipe
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()


class TcpTransport:
    """Adapter behind a TCP address."""

    def __init__(self, host: str, port: int, connect_timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=connect_timeout)

        def read_some(timeout: float) -> bytes:
            self.sock.settimeout(timeout)
            try:
                return self.sock.recv(65536)
            except socket.timeout as exc:
                raise RetryableProtocolError(
                    f"timed out after {timeout:.1f}s waiting for adapter output"
                ) from exc

        self.reader = _LineReader(read_some)

    def send_line(self, line: str) -> None:
        try:
            self.sock.sendall(line.encode("utf-8") + b"\n")
        except OSError as exc:
            raise ProtocolError(f"adapter connection failed: {exc}") from exc

    def readline(self, timeout: float) -> str | None:
        return self.reader.readline(timeout)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class AdapterClient:
    """Batched request/response exchange with id matching and validation."""

    def __init__(self, transport, timeout: float = DEFAULT_TIMEOUT,
                 window: int = DEFAULT_WINDOW):
        if window < 1:
            raise ValueError("window must be at least 1")
        self.transport = transport
        self.timeout = timeout
        self.window = window
        self._next_id = 0

    def close(self) -> None:
        self.transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def exchange(self, requests: Sequence[dict]) -> list[dict]:
        """Send requests (windowed), return responses aligned to inputs.

        Each request dict is sent with a fresh "id"; responses are matched
        back by that id regardless of arrival order.
        """
        results: list[dict | None] = [None] * len(requests)
        for begin in range(0, len(requests), self.window):
            chunk = list(enumerate(requests))[begin:begin + self.window]
            pending: dict[str, int] = {}
            for index, req in chunk:
                rid = f"q{self._next_id}"
                self._next_id += 1
                payload = dict(req)
                payload["id"] = rid
                pending[rid] = index
                self.transport.send_line(
                    json.dumps(payload, ensure_ascii=True, separators=(",", ":"))
                )
            while pending:
                line = self.transport.readline(self.timeout)
                if line is None:
                    raise ProtocolError(
                        f"adapter closed the stream with {len(pending)} "
                        "responses outstanding"
                    )
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ProtocolError(f"adapter sent invalid JSON: {exc}") from exc
                if not isinstance(obj, dict):
                    raise ProtocolError("adapter response is not a JSON object")
                rid = obj.get("id")
                if rid not in pending:
                    raise ProtocolError(f"adapter response has unknown id {rid!r}")
                results[pending.pop(rid)] = obj
        return [r for r in results if r is not None]

    def tag_batch(self, token_lists: Sequence[Sequence[str]]) -> list[tuple[str, ...]]:
        """Tag sequences for each token list, validated against the contract."""
        for tokens in token_lists:
            if not tokens:
                raise ProtocolError("cannot tag an empty token list")
        requests = [{"task": "tag", "tokens": list(t)} for t in token_lists]
        out: list[tuple[str, ...]] = []
        for tokens, resp in zip(token_lists, self.exchange(requests)):
            rid = resp.get("id")
            if "error" in resp:
                raise ProtocolError(f"adapter error for id {rid!r}: {resp['error']}")
            tags = resp.get("tags")
            if not isinstance(tags, list):
                raise ProtocolError(f"response {rid!r} has no tags array")
            if len(tags) != len(tokens):
                raise ProtocolError(
                    f"response {rid!r}: {len(tags)} tags for {len(tokens)} tokens"
                )
            bad = [t for t in tags if t not in _TAG_SET]
            if bad:
                raise ProtocolError(f"response {rid!r}: unknown tag {bad[0]!r}")
            out.append(tuple(tags))
        return out

    def classify_batch(
        self, token_lists: Sequence[Sequence[str]],
    ) -> list[tuple[str, float]]:
        """(label, probability) per input under the classify task variant."""
        requests = [{"task": "classify", "tokens": list(t)} for t in token_lists]
        out: list[tuple[str, float]] = []
        for resp in self.exchange(requests):
            rid = resp.get("id")
            if "error" in resp:
                raise ProtocolError(f"adapter error for id {rid!r}: {resp['error']}")
            label = resp.get("label")
            prob = resp.get("probability")
            if label not in ("adas", "non-adas"):
                raise ProtocolError(f"response {rid!r}: unknown label {label!r}")
            if not isinstance(prob, (int, float)) or not 0.0 <= prob <= 1.0:
                raise ProtocolError(f"response {rid!r}: bad probability {prob!r}")
            out.append((label, float(prob)))
        return out


def open_adapter(endpoint: str, timeout: float = DEFAULT_TIMEOUT,
                 window: int = DEFAULT_WINDOW) -> AdapterClient:
    """Connect to an adapter endpoint.

    "tcp:HOST:PORT" dials a TCP adapter; anything else is treated as a shell
    command line to spawn as a child process.
    """
    if endpoint.startswith("tcp:"):
        rest = endpoint[len("tcp:"):]
        host, _, port = rest.rpartition(":")
        if not host or not port.isdigit():
            raise ProtocolError(f"bad TCP endpoint {endpoint!r}; want tcp:HOST:PORT")
        transport = TcpTransport(host, int(port))
    else:
        command = shlex.split(endpoint)
        if not command:
            raise ProtocolError("empty adapter command")
        transport = SubprocessTransport(command)
    return AdapterClient(transport, timeout=timeout, window=window)


def external_tag(client: AdapterClient,
                 token_lists: Sequence[Sequence[str]]) -> list[tuple[str, ...]]:
    """Batch tag via an adapter; validation per the wire contract."""
    return client.tag_batch(token_lists)


def external_classify(client: AdapterClient,
                      token_lists: Sequence[Sequence[str]]) -> list[tuple[str, float]]:
    return client.classify_batch(token_lists)
