"""Shared fixtures: one loaded simulated model and one live server."""

import threading

import pytest
import requests

from model_server import build_server, load_model

SIM_ID = "resnet18-sim"


@pytest.fixture(scope="session")
def sim_model():
    return load_model(SIM_ID)


@pytest.fixture(scope="session")
def sim_server(sim_model):
    server = build_server(sim_model)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    server.server_close()


@pytest.fixture(scope="session")
def http():
    with requests.Session() as session:
        yield session
