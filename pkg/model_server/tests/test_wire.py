"""Wire protocol behavior: decoding, routing, and error mapping."""

import base64
import json
import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from model_server import build_server, decode_predict_body, predict_local
from model_server.server import _BadRequest

SIM_ID = "resnet18-sim"


def encode_tensor(img):
    h, w, c = img.shape
    data = base64.b64encode(np.ascontiguousarray(img, dtype="<f8").tobytes())
    return {"w": w, "h": h, "c": c, "data_b64": data.decode("ascii")}


def as_body(payload) -> bytes:
    return json.dumps(payload).encode("ascii")


def test_decode_roundtrips_bitwise():
    img = np.random.default_rng(0).random((5, 7, 3))
    out = decode_predict_body(as_body(encode_tensor(img)))
    assert out.shape == (5, 7, 3)
    assert np.array_equal(out, img)


@pytest.mark.parametrize(
    "raw, fragment",
    [
        (b"}{", "not valid JSON"),
        (as_body([1, 2, 3]), "JSON object"),
        (as_body({"h": 4, "c": 3, "data_b64": "AA=="}), "missing field 'w'"),
        (as_body({"w": True, "h": 4, "c": 3, "data_b64": "AA=="}), "'w' must be an integer"),
        (as_body({"w": "4", "h": 4, "c": 3, "data_b64": "AA=="}), "'w' must be an integer"),
        (as_body({"w": 0, "h": 4, "c": 3, "data_b64": "AA=="}), "'w' must be positive"),
        (as_body({"w": 4, "h": 4, "c": 3}), "missing field 'data_b64'"),
        (as_body({"w": 4, "h": 4, "c": 3, "data_b64": 9}), "'data_b64' must be a string"),
        (as_body({"w": 4, "h": 4, "c": 3, "data_b64": "!!not base64!!"}), "not valid base64"),
        (as_body({"w": 4, "h": 4, "c": 3, "data_b64": "AAAA"}), "dimensions require"),
        (as_body({"w": 2, "h": 2, "c": 2, "data_b64": base64.b64encode(b"\x00" * 64).decode()}),
         "unsupported channel count"),
    ],
)
def test_decode_rejects_malformed_bodies(raw, fragment):
    with pytest.raises(_BadRequest, match=fragment):
        decode_predict_body(raw)


def test_decode_rejects_non_finite_values():
    img = np.zeros((3, 3, 3))
    img[1, 1, 1] = np.inf
    with pytest.raises(_BadRequest, match="non-finite"):
        decode_predict_body(as_body(encode_tensor(img)))


def test_healthz_reports_contract_and_metadata(sim_server, http):
    body = http.get(sim_server + "/healthz").json()
    assert body["status"] == "ok"
    assert body["num_classes"] == 1000
    assert body["model"] == SIM_ID
    assert body["weights"] == "simulated"
    pre = body["preprocessing"]
    assert pre["resize_size"] == 256
    assert pre["crop_size"] == 224


def test_unknown_routes_are_404(sim_server, http):
    assert http.get(sim_server + "/predict").status_code == 404
    assert http.get(sim_server + "/nope").status_code == 404
    assert http.post(sim_server + "/healthz", json={}).status_code == 404


def test_keep_alive_survives_an_unrouted_post_with_a_body(sim_server, http):
    # the 404 reply must drain the request body, or the unread bytes get
    # parsed as the next request on the reused connection
    img = np.random.default_rng(10).random((64, 64, 3))
    assert http.post(sim_server + "/nowhere", json=encode_tensor(img)).status_code == 404
    follow_up = http.post(sim_server + "/predict", json=encode_tensor(img))
    assert follow_up.status_code == 200
    assert follow_up.json()["label"] == predict_local(SIM_ID, img)


def test_served_prediction_matches_local_and_repeats(sim_server, http):
    img = np.random.default_rng(11).random((64, 64, 3))
    first = http.post(sim_server + "/predict", json=encode_tensor(img)).json()
    second = http.post(sim_server + "/predict", json=encode_tensor(img)).json()
    assert isinstance(first["label"], int)
    assert first == second
    assert first["label"] == predict_local(SIM_ID, img)


def test_served_grayscale_accepted(sim_server, http):
    gray = np.random.default_rng(12).random((64, 64, 1))
    resp = http.post(sim_server + "/predict", json=encode_tensor(gray))
    assert resp.status_code == 200
    assert resp.json()["label"] == predict_local(SIM_ID, gray)


def test_served_malformed_requests_are_400(sim_server, http):
    bad = [
        http.post(sim_server + "/predict", data=b"not json"),
        http.post(sim_server + "/predict", data=b""),
        http.post(sim_server + "/predict", json={"w": 8, "h": 8, "c": 3, "data_b64": "AA=="}),
        http.post(sim_server + "/predict",
                  json={"w": 8, "h": 8, "c": 5,
                        "data_b64": base64.b64encode(b"\x00" * (8 * 8 * 5 * 8)).decode()}),
    ]
    for resp in bad:
        assert resp.status_code == 400
        assert "error" in resp.json()


def test_inference_failure_maps_to_500(http):
    class Boom:
        num_classes = 1000

        def metadata(self):
            return {"model": "boom"}

        def predict(self, img):
            raise RuntimeError("kaput")

    server = build_server(Boom())
    threading.Thread(target=server.serve_forever, daemon=True).start()
    try:
        url = f"http://127.0.0.1:{server.server_address[1]}/predict"
        img = np.zeros((4, 4, 3))
        resp = http.post(url, json=encode_tensor(img))
        assert resp.status_code == 500
        assert "inference failed" in resp.json()["error"]
    finally:
        server.shutdown()
        server.server_close()


def test_parallel_requests_agree(sim_server):
    # one payload hammered from eight threads; read-only inference must
    # give every caller the same label with no 500s
    import requests

    img = np.random.default_rng(13).random((64, 64, 3))
    payload = encode_tensor(img)

    def post(_):
        with requests.Session() as s:
            resp = s.post(sim_server + "/predict", json=payload)
            return resp.status_code, resp.json()["label"]

    with ThreadPoolExecutor(max_workers=8) as pool:
        outcomes = list(pool.map(post, range(8)))
    assert len(set(outcomes)) == 1
    assert outcomes[0][0] == 200
