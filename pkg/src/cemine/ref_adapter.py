"""Reference adapter process serving the external model wire protocol.

Wraps a saved CRF tagger model (and optionally a saved linear classifier)
behind the newline-delimited JSON protocol so the pipeline's adapter path
can be exercised without any external framework.  Runs over stdio by
default or serves a single TCP connection with --tcp HOST:PORT.

    python3 -m cemine.ref_adapter --tagger-model model.json

Malformed requests get an error response carrying the request id when one
was recoverable; the loop keeps serving afterwards.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys

from .classifier import LinearClassifier, load_classifier, predict
from .tagger import CrfModel, load_tagger, viterbi


def handle_request(line: str, tagger: CrfModel | None,
                   classifier: LinearClassifier | None) -> str | None:
    """Response line for one request line; None when the line is ignorable."""
    if not line.strip():
        return None
    rid = None
    try:
        obj = json.loads(line)
        if not isinstance(obj, dict):
            raise ValueError("request is not a JSON object")
        rid = obj.get("id")
        task = obj.get("task")
        tokens = obj.get("tokens")
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise ValueError("tokens must be an array of strings")
        if task == "tag":
            if tagger is None:
                raise ValueError("no tagger model loaded")
            if not tokens:
                raise ValueError("cannot tag an empty token list")
            tags = list(viterbi(tagger, tokens))
            return json.dumps({"id": rid, "tags": tags},
                              ensure_ascii=True, separators=(",", ":"))
        if task == "classify":
            if classifier is None:
                raise ValueError("no classifier model loaded")
            prob, label = predict(classifier, " ".join(tokens))
            return json.dumps(
                {"id": rid, "label": "adas" if label else "non-adas",
                 "probability": prob},
                ensure_ascii=True, separators=(",", ":"))
        raise ValueError(f"unknown task {task!r}")
    except Exception as exc:
        return json.dumps({"id": rid, "error": str(exc)},
                          ensure_ascii=True, separators=(",", ":"))


def serve_lines(read_line, write_line, tagger, classifier) -> None:
    while True:
        line = read_line()
        if line is None:
            return
        response = handle_request(line, tagger, classifier)
        if response is not None:
            write_line(response)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cemine-ref-adapter",
        description="Serve a saved tagger/classifier over the wire protocol.",
    )
    parser.add_argument("--tagger-model", help="saved CRF tagger model file")
    parser.add_argument("--classifier-model", help="saved linear classifier file")
    parser.add_argument("--tcp", metavar="HOST:PORT",
                        help="serve one TCP connection instead of stdio")
    args = parser.parse_args(argv)
    if not args.tagger_model and not args.classifier_model:
        parser.error("need --tagger-model and/or --classifier-model")

    try:
        tagger = load_tagger(args.tagger_model) if args.tagger_model else None
        classifier = (load_classifier(args.classifier_model)
                      if args.classifier_model else None)
    except (OSError, ValueError) as exc:
        print(f"model load failure: {exc}", file=sys.stderr)
        return 1

    if args.tcp:
        host, _, port = args.tcp.rpartition(":")
        if not host or not port.isdigit():
            parser.error(f"bad --tcp address {args.tcp!r}; want HOST:PORT")
        server = socket.create_server((host, int(port)))
        print(f"listening on {host}:{port}", file=sys.stderr)
        conn, _ = server.accept()
        with conn, conn.makefile("rw", encoding="utf-8", newline="\n") as stream:
            def read_line():
                raw = stream.readline()
                return raw.rstrip("\n") if raw else None

            def write_line(text: str):
                stream.write(text + "\n")
                stream.flush()

            serve_lines(read_line, write_line, tagger, classifier)
        server.close()
        return 0

    stdin = sys.stdin
    stdout = sys.stdout

    def read_line():
        raw = stdin.readline()
        return raw.rstrip("\n") if raw else None

    def write_line(text: str):
        stdout.write(text + "\n")
        stdout.flush()

    serve_lines(read_line, write_line, tagger, classifier)
    return 0


if __name__ == "__main__":
    sys.exit(main())
