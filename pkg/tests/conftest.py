"""Shared fixtures: repo-root cwd, parsed fixture data, a CLI runner, and a
local HTTP stub that answers chat requests from the scripted tables."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"


@pytest.fixture(autouse=True)
def _repo_root_cwd(monkeypatch):
    # Fixture configs use repo-relative paths.
    monkeypatch.chdir(ROOT)


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def dictionary():
    from instrument_extractor.normalizer import load_dictionary

    return load_dictionary(FIXTURES / "dictionary.json")


@pytest.fixture(scope="session")
def corpus_docs():
    from instrument_extractor.doc_model import load_document

    return {
        doc.doc_id: doc
        for doc in (load_document(p) for p in sorted((FIXTURES / "corpus").glob("*.json")))
    }


@pytest.fixture
def run_cli(capsys):
    from instrument_extractor.cli import main

    def run(argv: list[str]) -> tuple[int, str, str]:
        code = main(argv)
        captured = capsys.readouterr()
        return code, captured.out, captured.err

    return run


class _ChatHandler(BaseHTTPRequestHandler):
    def do_POST(self):  # noqa: N802 - http.server API
        import fixture_defs

        if self.path != "/chat/completions":
            self.send_error(404)
            return
        length = int(self.headers.get("Content-Length", "0"))
        payload = json.loads(self.rfile.read(length))
        messages = {m["role"]: m["content"] for m in payload["messages"]}
        text = fixture_defs.scripted_reply(messages.get("system", ""), messages["user"])
        # No "usage" key: the client falls back to its own token counts, so a
        # recorded transcript replays with identical accounting.
        body = json.dumps({"choices": [{"message": {"content": text}}]}).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):  # silence request logging
        pass


@pytest.fixture
def chat_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _ChatHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}"
    finally:
        server.shutdown()
        thread.join()
