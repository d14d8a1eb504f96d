"""Wire-protocol server: newline-delimited JSON over stdio or one TCP
connection.

One JSON object per line in, one per line out. Requests carry an id, a
task ("tag" or "classify"), and a token list; responses echo the id and
carry either a result or an error string. Blank lines are ignored; a
line that does not parse gets an error response with a null id, and any
per-request failure answers that request alone instead of killing the
stream. Replies are written in request order.
"""

from __future__ import annotations

import json
import logging
import socket
from typing import IO, Iterable

from .model import Bundle
from .training import classify_tokens, predict_tags

logger = logging.getLogger(__name__)


def _validated_tokens(obj: dict) -> list[str]:
    tokens = obj.get("tokens")
    if not isinstance(tokens, list) or not tokens:
        raise ValueError("request needs a non-empty tokens array")
    if not all(isinstance(t, str) and t for t in tokens):
        raise ValueError("tokens must be non-empty strings")
    return tokens


def handle_request(line: str, bundle: Bundle) -> str | None:
    """One response line for one request line; None for blank input."""
    if not line.strip():
        return None
    compact = {"ensure_ascii": True, "separators": (",", ":")}
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        return json.dumps({"id": None, "error": f"invalid JSON: {exc}"},
                          **compact)
    if not isinstance(obj, dict):
        return json.dumps(
            {"id": None, "error": "request is not a JSON object"}, **compact)
    rid = obj.get("id")
    try:
        task = obj.get("task")
        if task == "tag":
            tags = predict_tags(bundle, _validated_tokens(obj))
            return json.dumps({"id": rid, "tags": list(tags)}, **compact)
        if task == "classify":
            probability, flag = classify_tokens(bundle,
                                                _validated_tokens(obj))
            return json.dumps(
                {"id": rid, "label": "adas" if flag else "non-adas",
                 "probability": probability}, **compact)
        raise ValueError(f"unknown task {task!r}")
    except Exception as exc:  # per-request failure, keep serving
        return json.dumps({"id": rid, "error": str(exc)}, **compact)


def serve_lines(lines: Iterable[str], out: IO[str], bundle: Bundle) -> int:
    served = 0
    for line in lines:
        response = handle_request(line, bundle)
        if response is None:
            continue
        out.write(response + "\n")
        out.flush()
        served += 1
    return served


def serve_stdio(bundle: Bundle) -> int:
    import sys

    served = serve_lines(sys.stdin, sys.stdout, bundle)
    logger.info("served %d requests on stdio", served)
    return 0


def serve_tcp(bundle: Bundle, host: str, port: int) -> int:
    with socket.create_server((host, port)) as server:
        logger.info("listening on %s:%d", host, port)
        conn, peer = server.accept()
        logger.info("connection from %s", peer)
        with conn, conn.makefile("r", encoding="utf-8") as reader, \
                conn.makefile("w", encoding="utf-8") as writer:
            served = serve_lines(reader, writer, bundle)
    logger.info("served %d requests on tcp", served)
    return 0
