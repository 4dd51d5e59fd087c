import base64
import io
import json

import numpy as np
import pytest

from sd_inpaint_adapter.model import AdapterConfig, make_inpainter
from sd_inpaint_adapter.pbm import load_pbm, save_pbm
from sd_inpaint_adapter.protocol import RequestError, parse_request, serve


def encode_line(px, rects, n=2, seed=0, rid=1, **extra):
    obj = {
        "id": rid,
        "pattern": base64.b64encode(save_pbm(px)).decode(),
        "mask": rects,
        "num_variations": n,
        "seed": seed,
    }
    obj.update(extra)
    return json.dumps(obj)


RECTS = [{"x0": 4, "y0": 4, "x1": 12, "y1": 12}]


def test_parse_request_roundtrip():
    px = np.eye(16, dtype=np.uint8)
    req = parse_request(encode_line(px, RECTS, n=3, seed=9, rid=7))
    assert req["id"] == 7 and req["n"] == 3 and req["seed"] == 9
    np.testing.assert_array_equal(req["pixels"], px)
    assert req["rects"] == RECTS


def test_unknown_fields_ignored():
    px = np.eye(8, dtype=np.uint8)
    req = parse_request(encode_line(px, [{"x0": 0, "y0": 0, "x1": 8, "y1": 8}], future="x"))
    assert req["id"] == 1


@pytest.mark.parametrize(
    "mutate",
    [
        lambda o: o.pop("id"),
        lambda o: o.update(id="1"),
        lambda o: o.update(num_variations=0),
        lambda o: o.update(num_variations=True),
        lambda o: o.update(mask=[]),
        lambda o: o.update(mask=[{"x0": 0, "y0": 0, "x1": 99, "y1": 2}]),
        lambda o: o.update(pattern="!!!"),
        lambda o: o.update(seed="0"),
    ],
)
def test_bad_requests_rejected(mutate):
    px = np.eye(8, dtype=np.uint8)
    obj = json.loads(encode_line(px, [{"x0": 0, "y0": 0, "x1": 4, "y1": 4}]))
    mutate(obj)
    with pytest.raises(RequestError):
        parse_request(json.dumps(obj))


def run_serve(lines):
    model = make_inpainter(AdapterConfig(model="synthetic"))
    out = io.StringIO()
    serve(model, stdin=io.StringIO("".join(l + "\n" for l in lines)), stdout=out)
    return out.getvalue().splitlines()


def test_serve_handshake_and_reply():
    px = np.eye(16, dtype=np.uint8)
    lines = run_serve([encode_line(px, RECTS, n=2, seed=1, rid=42)])
    hs = json.loads(lines[0])
    assert hs == {"protocol": "patternforge-backend", "version": 1, "name": "sd-inpaint-adapter"}
    reply = json.loads(lines[1])
    assert reply["id"] == 42 and len(reply["variations"]) == 2
    for payload in reply["variations"]:
        v, pitch = load_pbm(base64.b64decode(payload))
        assert v.shape == px.shape and pitch == 1
        np.testing.assert_array_equal(v[:4, :4], px[:4, :4])


def test_serve_error_reply_keeps_loop_alive():
    px = np.eye(16, dtype=np.uint8)
    lines = run_serve(["{not json", encode_line(px, RECTS, rid=5)])
    assert json.loads(lines[1])["id"] == -1
    assert "error" in json.loads(lines[1])
    assert json.loads(lines[2])["id"] == 5


def test_serve_preserves_pitch():
    px = np.eye(8, dtype=np.uint8)
    obj = {
        "id": 1,
        "pattern": base64.b64encode(save_pbm(px, pitch_nm=6)).decode(),
        "mask": [{"x0": 0, "y0": 0, "x1": 8, "y1": 8}],
        "num_variations": 1,
        "seed": 0,
    }
    lines = run_serve([json.dumps(obj)])
    payload = json.loads(lines[1])["variations"][0]
    _, pitch = load_pbm(base64.b64decode(payload))
    assert pitch == 6
