"""Minimal wire-protocol client for scoring adapters from the outside.

Spawns an adapter command and exchanges one request per line over its
stdio, matching responses by id. Sequential and timeout-guarded; this
is a measurement tool, not a throughput client, so it deliberately keeps
no pipelining state.
"""

from __future__ import annotations

import json
import select
import subprocess
from typing import Sequence

DEFAULT_TIMEOUT = 120.0


class WireError(RuntimeError):
    """Adapter under test closed the stream or answered garbage."""


class WireClient:
    def __init__(self, command: Sequence[str],
                 timeout: float = DEFAULT_TIMEOUT):
        self.command = list(command)
        self.timeout = timeout
        self.proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, encoding="utf-8", bufsize=1)
        self._counter = 0

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
        return False

    def _readline(self) -> str:
        stream = self.proc.stdout
        ready, _, _ = select.select([stream], [], [], self.timeout)
        if not ready:
            raise WireError(
                f"adapter made no reply within {self.timeout:.0f}s")
        line = stream.readline()
        if line == "":
            raise WireError("adapter closed the stream")
        return line

    def request(self, payload: dict) -> dict:
        self._counter += 1
        rid = f"w{self._counter}"
        message = dict(payload, id=rid)
        self.proc.stdin.write(json.dumps(message) + "\n")
        self.proc.stdin.flush()
        while True:
            line = self._readline()
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise WireError(f"invalid JSON from adapter: {exc}") from exc
            if not isinstance(obj, dict):
                raise WireError(f"non-object reply: {obj!r}")
            if obj.get("id") != rid:
                raise WireError(f"reply for unknown id {obj.get('id')!r}")
            return obj

    def tag(self, tokens: Sequence[str]) -> tuple[str, ...]:
        obj = self.request({"task": "tag", "tokens": list(tokens)})
        if "error" in obj:
            raise WireError(f"adapter error: {obj['error']}")
        tags = obj.get("tags")
        if not isinstance(tags, list) or len(tags) != len(tokens):
            raise WireError(f"bad tags for {len(tokens)} tokens: {tags!r}")
        return tuple(tags)

    def close(self) -> None:
        try:
            if self.proc.stdin:
                self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()
