"""Thin transport used by the CLI.

Requests go either to a remote service (base URL) or straight into an
in-process ASGI app, so every CLI command exercises the same endpoint
code and pydantic validation regardless of deployment.
"""

from __future__ import annotations

import asyncio

import httpx

from .errors import DataError, UsageError


class ServiceClient:
    def __init__(self, server: str | None = None):
        self.server = server.rstrip("/") if server else None
        self._app = None
        if self.server is None:
            from .service.app import create_app
            self._app = create_app()

    def get(self, path: str) -> dict:
        return self._request("GET", path, None)

    def post(self, path: str, payload: dict) -> dict:
        return self._request("POST", path, payload)

    def _request(self, method: str, path: str, payload: dict | None) -> dict:
        if self.server is not None:
            response = httpx.request(method, self.server + path, json=payload, timeout=None)
        else:
            response = asyncio.run(self._asgi_request(method, path, payload))
        return _unwrap(response)

    async def _asgi_request(self, method: str, path: str, payload: dict | None) -> httpx.Response:
        transport = httpx.ASGITransport(app=self._app)
        async with httpx.AsyncClient(transport=transport, base_url="http://dynloss",
                                     timeout=None) as client:
            return await client.request(method, path, json=payload)


def _unwrap(response: httpx.Response) -> dict:
    if response.status_code < 400:
        return response.json()
    try:
        body = response.json()
    except ValueError:
        body = {"detail": response.text}
    detail = body.get("detail", body)
    message = detail if isinstance(detail, str) else _validation_message(detail)
    kind = body.get("kind")
    if kind == "data":
        raise DataError(message)
    raise UsageError(message)


def _validation_message(detail) -> str:
    # FastAPI request-validation errors arrive as a list of field issues
    if isinstance(detail, list):
        parts = []
        for item in detail:
            loc = ".".join(str(x) for x in item.get("loc", []) if x != "body")
            parts.append(f"{loc}: {item.get('msg', 'invalid')}")
        return "; ".join(parts) or "invalid request"
    return str(detail)
