"""Regenerate the protocol golden files by capturing live mock responses.

Run from the repository root after a deliberate wire-format change:

    python tests/goldens/regenerate.py

Each case records the exact request bytes sent and the exact status/body
received; the test suite replays them byte-for-byte. Cases marked
``mock_only`` depend on scripted-fixture semantics (seed domains, rescore
chains) and are excluded from cross-implementation conformance runs.
"""

from __future__ import annotations

import json
from pathlib import Path

import requests

from artifact.backend import MockServer, ScriptedFixture, canonical_json

HERE = Path(__file__).parent
PROTOCOL_DIR = HERE / "protocol"


def detect_req(**kwargs) -> bytes:
    doc = {"protocol_version": "1", "mode": "local", "score_threshold": 0.05}
    doc.update(kwargs)
    return canonical_json(doc)


def inpaint_req(**kwargs) -> bytes:
    doc = {
        "protocol_version": "1",
        "prompt": "hand",
        "seed": 0,
        "box": [10.0, 10.0, 50.0, 40.0],
        "params": {"guidance_scale": 8.0, "strength": 0.99, "steps": 30, "n_seeds": 20},
    }
    doc.update(kwargs)
    return canonical_json(doc)


CASES = [
    {
        "name": "detect_basic",
        "method": "POST",
        "path": "/detect",
        "request": detect_req(image_ref="img-1"),
        "round_trip": True,
        "schema": "detect_response",
    },
    {
        "name": "detect_high_threshold",
        "method": "POST",
        "path": "/detect",
        "request": detect_req(image_ref="img-1", score_threshold=0.9),
        "round_trip": True,
        "schema": "detect_response",
        "mock_only": True,  # asserts the scripted scores fall below 0.9
    },
    {
        "name": "detect_global_mode",
        "method": "POST",
        "path": "/detect",
        "request": detect_req(image_ref="img-1", mode="global"),
        "round_trip": True,
        "schema": "detect_response",
    },
    {
        "name": "detect_default_threshold",
        "method": "POST",
        "path": "/detect",
        "request": canonical_json({"image_ref": "img-1", "mode": "local"}),
        "round_trip": False,
        "schema": "detect_response",
    },
    {
        "name": "detect_unknown_image",
        "method": "POST",
        "path": "/detect",
        "request": detect_req(image_ref="img-does-not-exist"),
        "schema": "error",
        "expected_code": "unknown_image",
    },
    {
        "name": "detect_bad_mode",
        "method": "POST",
        "path": "/detect",
        "request": canonical_json(
            {"protocol_version": "1", "image_ref": "img-1", "mode": "sideways"}
        ),
        "schema": "error",
        "expected_code": "invalid_request",
    },
    {
        "name": "detect_missing_image_ref",
        "method": "POST",
        "path": "/detect",
        "request": canonical_json({"protocol_version": "1", "mode": "local"}),
        "schema": "error",
        "expected_code": "invalid_request",
    },
    {
        "name": "detect_unsupported_protocol",
        "method": "POST",
        "path": "/detect",
        "request": canonical_json(
            {"protocol_version": "99", "image_ref": "img-1", "mode": "local"}
        ),
        "schema": "error",
        "expected_code": "unsupported_protocol",
    },
    {
        "name": "detect_child_ref_halved",
        "method": "POST",
        "path": "/detect",
        # seed 0 has factor 0.5: the hand box rescores 0.8 -> 0.4
        "request": detect_req(image_ref="img-1|10.0,10.0,50.0,40.0;0"),
        "round_trip": True,
        "schema": "detect_response",
        "mock_only": True,
    },
    {
        "name": "inpaint_basic",
        "method": "POST",
        "path": "/inpaint",
        "request": inpaint_req(image_ref="img-1", seed=3),
        "round_trip": True,
        "schema": "inpaint_response",
    },
    {
        "name": "inpaint_negative_prompt",
        "method": "POST",
        "path": "/inpaint",
        "request": inpaint_req(image_ref="img-1", seed=1, negative_prompt="weird hand"),
        "round_trip": True,
        "schema": "inpaint_response",
    },
    {
        "name": "inpaint_bad_seed",
        "method": "POST",
        "path": "/inpaint",
        "request": inpaint_req(image_ref="img-1", seed=-1),
        "schema": "error",
        "expected_code": "bad_seed",
        "mock_only": True,  # the seed domain is a fixture property
    },
    {
        "name": "inpaint_unknown_image",
        "method": "POST",
        "path": "/inpaint",
        "request": inpaint_req(image_ref="img-does-not-exist"),
        "schema": "error",
        "expected_code": "unknown_image",
    },
    {
        "name": "inpaint_malformed_box",
        "method": "POST",
        "path": "/inpaint",
        "request": canonical_json(
            {
                "protocol_version": "1",
                "image_ref": "img-1",
                "prompt": "hand",
                "seed": 0,
                "box": [10.0, 10.0, 50.0],
            }
        ),
        "schema": "error",
        "expected_code": "invalid_box",
    },
    {
        "name": "malformed_json",
        "method": "POST",
        "path": "/detect",
        "request": b'{"image_ref": "img-1", mode: ',
        "schema": "error",
        "expected_code": "invalid_request",
    },
    {
        "name": "healthz",
        "method": "GET",
        "path": "/healthz",
        "schema": "text",
    },
    {
        "name": "unknown_endpoint",
        "method": "POST",
        "path": "/no-such-endpoint",
        "request": canonical_json({}),
        "schema": "error",
        "expected_code": "not_found",
    },
]


def main() -> None:
    fixture = ScriptedFixture.from_file(HERE / "fixture.json")
    PROTOCOL_DIR.mkdir(exist_ok=True)
    with MockServer(fixture) as server:
        for case in CASES:
            url = server.base_url + case["path"]
            if case["method"] == "GET":
                resp = requests.get(url, timeout=10)
            else:
                resp = requests.post(
                    url,
                    data=case["request"],
                    headers={"Content-Type": "application/json"},
                    timeout=10,
                )
            doc = {
                "name": case["name"],
                "method": case["method"],
                "path": case["path"],
                "schema": case["schema"],
                "round_trip": case.get("round_trip", False),
                "mock_only": case.get("mock_only", False),
                "expected_status": resp.status_code,
                "expected_body": resp.content.decode("utf-8"),
            }
            if "request" in case:
                doc["request"] = case["request"].decode("utf-8")
            if "expected_code" in case:
                doc["expected_code"] = case["expected_code"]
            out = PROTOCOL_DIR / f"{case['name']}.json"
            out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            print(f"wrote {out} ({resp.status_code})")


if __name__ == "__main__":
    main()
