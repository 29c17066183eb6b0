"""Clients for the external anomaly-model endpoint, plus a keyword stub.

Endpoint contract: ``POST <host>/detect_anomaly`` with a plain-text body
``"<description>,<certificate id>"``; status 200 with body ``Anomaly`` flags
the certificate, anything else does not.
"""

from __future__ import annotations

from typing import Callable

import httpx
from fastapi import FastAPI, Request
from fastapi.responses import PlainTextResponse

from .registry import ANOMALY_PATH, ModelResponse


class HttpModelClient:
    def __init__(self, client: httpx.Client | None = None, timeout: float = 5.0):
        self._client = client or httpx.Client(timeout=timeout)

    def send(self, host: str, path: str, body: str) -> ModelResponse:
        url = host.rstrip("/") + path
        resp = self._client.post(url, content=body.encode("utf-8"), headers={"content-type": "text/plain"})
        return ModelResponse(resp.status_code, resp.text)


class CallableModelClient:
    """Adapts ``fn(body) -> (status, text)`` to the model client protocol."""

    def __init__(self, fn: Callable[[str], tuple[int, str]]):
        self.fn = fn
        self.requests: list[tuple[str, str, str]] = []

    def send(self, host: str, path: str, body: str) -> ModelResponse:
        self.requests.append((host, path, body))
        status, text = self.fn(body)
        return ModelResponse(status, text)


def keyword_verdict(body: str, keyword: str) -> str:
    description = body.rsplit(",", 1)[0]
    return "Anomaly" if keyword.lower() in description.lower() else "Normal"


def create_stub_app(keyword: str = "suspicious", status: int = 200):
    """FastAPI app answering ``Anomaly`` iff the description contains ``keyword``."""
    app = FastAPI(title="anomaly-model-stub")
    app.state.requests = []

    @app.post(ANOMALY_PATH)
    async def detect(request: Request):
        body = (await request.body()).decode("utf-8")
        app.state.requests.append(body)
        if status != 200:
            return PlainTextResponse("error", status_code=status)
        return PlainTextResponse(keyword_verdict(body, keyword))

    return app
