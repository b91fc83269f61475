"""Shared fixtures: an in-process HTTP server that mimics the data API."""

import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import urlparse

import pytest


class _Handler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def do_GET(self):
        path = urlparse(self.path).path
        self.server.hits[path] = self.server.hits.get(path, 0) + 1
        route = self.server.routes.get(path)
        if route is None:
            self.send_response(404)
            self.end_headers()
            return
        status, body = route() if callable(route) else route
        self.send_response(status)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class MockApi:
    """Local stand-in for the remote catalog: month listings + file blobs."""

    def __init__(self):
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self.server.routes = {}
        self.server.hits = {}
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()
        self.base = f"http://127.0.0.1:{self.server.server_address[1]}"

    def close(self):
        self.server.shutdown()
        self.server.server_close()

    def hits(self, path):
        return self.server.hits.get(path, 0)

    def add_file(self, name, content, md5=None):
        data = content.encode()
        path = f"/files/{name}"
        self.server.routes[path] = (200, data)
        return {
            "name": name,
            "size": len(data),
            "md5": md5 if md5 is not None else hashlib.md5(data).hexdigest(),
            "url": self.base + path,
        }

    def add_month(self, product, site, month, files):
        path = f"/data/{product}/{site}/{month}"
        body = json.dumps({"data": {"files": files}}).encode()
        self.server.routes[path] = (200, body)


@pytest.fixture()
def api():
    server = MockApi()
    yield server
    server.close()
