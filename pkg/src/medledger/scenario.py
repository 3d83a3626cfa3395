"""Replay a JSON-lines script of API calls against an in-process service.

Each line is ``{"step": n, "actorKey": k, "method": m, "path": p, "body": b}``.
``actorKey`` may be the literal string ``"admin"`` (resolved to the configured
admin key) or a placeholder.  Placeholders of the form ``${N.field.path}``
anywhere in ``actorKey``, ``path`` or ``body`` are substituted from step N's
response, so scripts can onboard identities and then act as them.

With ``fixedClock: true`` in the config, replaying the same script yields an
identical receipts summary byte for byte.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Any

from .canonical import canonical_json

_PLACEHOLDER = re.compile(r"\$\{(\d+)((?:\.[A-Za-z0-9_]+)*)\}")


def _resolve_path(value: Any, dotted: str) -> Any:
    for piece in dotted.strip(".").split("."):
        if not piece:
            continue
        if isinstance(value, list):
            value = value[int(piece)]
        else:
            value = value[piece]
    return value


def _substitute(value: Any, responses: dict[int, Any]) -> Any:
    if isinstance(value, str):
        def repl(match: re.Match) -> str:
            resolved = _resolve_path(responses[int(match.group(1))], match.group(2))
            return str(resolved)

        full = _PLACEHOLDER.fullmatch(value)
        if full:  # preserve non-string types for exact references
            return _resolve_path(responses[int(full.group(1))], full.group(2))
        return _PLACEHOLDER.sub(repl, value)
    if isinstance(value, list):
        return [_substitute(v, responses) for v in value]
    if isinstance(value, dict):
        return {k: _substitute(v, responses) for k, v in value.items()}
    return value


def run_scenario(core, script_path: str | Path, out_path: str | Path | None = None, echo=print) -> list[dict]:
    from fastapi.testclient import TestClient

    from .api import create_app

    client = TestClient(create_app(core), raise_server_exceptions=False)
    responses: dict[int, Any] = {}
    summary: list[dict] = []

    with open(script_path, "r", encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]

    for entry in lines:
        step = entry["step"]
        actor = _substitute(entry.get("actorKey", ""), responses)
        if actor == "admin":
            actor = core.config.admin_api_key
        path = _substitute(entry["path"], responses)
        body = _substitute(entry.get("body"), responses)
        method = entry["method"].upper()
        kwargs = {"headers": {"Authorization": f"Bearer {actor}"}}
        if body is not None and method in ("POST", "PUT", "PATCH", "DELETE"):
            kwargs["json"] = body
        response = client.request(method, path, **kwargs)
        try:
            payload = response.json()
        except ValueError:
            payload = None
        responses[step] = payload
        row = {"step": step, "method": method, "path": path, "status": response.status_code, "body": payload}
        summary.append(row)
        echo(f"step {step:>3}  {method:<6} {path:<52} -> {response.status_code}")

    if out_path:
        with open(out_path, "wb") as fh:
            for row in summary:
                fh.write(canonical_json(row) + b"\n")
    return summary
