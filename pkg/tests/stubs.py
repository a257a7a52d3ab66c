"""In-process HTTP stand-ins for the chat and embedding endpoints."""
from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

INPUT_RE = re.compile(r"^Input: (.*)$", re.MULTILINE)


class ScriptedChat:
    """Answers by looking up the prompt's ``Input:`` line in a script."""

    def __init__(self, answers: dict, default: str = "I do not know.", echo: bool = False):
        self.answers = answers
        self.default = default
        self.echo = echo
        self.prompts: list[str] = []
        self.lock = threading.Lock()

    def __call__(self, body: dict) -> dict:
        prompt = body["prompt"]
        with self.lock:
            self.prompts.append(prompt)
        if self.echo:
            return {"text": prompt}
        m = INPUT_RE.search(prompt)
        question = m.group(1) if m else ""
        return {"text": self.answers.get(question, self.default)}


class StubServer:
    """Serves ``/chat`` (and optionally ``/embed``) from python callables on 127.0.0.1."""

    def __init__(self, chat=None, embed=None):
        routes = {"/chat": chat, "/embed": embed}

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                fn = routes.get(self.path)
                if fn is None:
                    self.send_response(404)
                    self.end_headers()
                    return
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                payload = json.dumps(fn(body)).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.httpd.server_address[1]}"
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()
