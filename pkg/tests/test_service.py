import base64
import json
import threading

import numpy as np
import pytest
import requests

from producescan.datasets import encode_ppm, synth_image
from producescan.errors import InvalidArgumentError
from producescan.kiosk import default_catalog, save_catalog
from producescan.models import build_micro_mobilenet, save_model
from producescan.rng import SplitMix64
from producescan.service import KioskServer, ServiceConfig, serve, session_view
from producescan.tensor import Tensor

CLASSES = ("apple", "banana", "kiwi", "pear")


@pytest.fixture(scope="module")
def server(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc")
    model = build_micro_mobilenet(len(CLASSES), 42, class_names=CLASSES)
    save_model(model, root / "model.json")
    save_catalog(default_catalog(CLASSES), root / "catalog.json")
    captures = root / "captures"
    captures.mkdir()
    config = ServiceConfig(
        model_path=str(root / "model.json"),
        catalog_path=str(root / "catalog.json"),
        port=0,
        labels_path=str(root / "labels.jsonl"),
        captures_dir=str(captures),
    )
    kiosk_server = serve(config)
    yield kiosk_server
    kiosk_server.stop()


@pytest.fixture()
def api(server):
    base = server.url

    class Api:
        def get(self, path):
            return requests.get(base + path, timeout=5)

        def post(self, path, body=None, raw=None):
            if raw is not None:
                return requests.post(base + path, data=raw, timeout=5)
            return requests.post(base + path, json=body or {}, timeout=5)

        def reset(self):
            self.post("/api/session/cancel")

        def image_b64(self, class_index=1):
            image = synth_image(class_index, len(CLASSES), 24, SplitMix64(3))
            return base64.b64encode(encode_ppm(image)).decode("ascii")

        def drive_to_presenting(self):
            payload = {"weight_g": 200.0, "image_b64": self.image_b64()}
            for _ in range(3):
                self.post("/api/scale", payload)
            for _ in range(200):
                state = self.get("/api/session").json()["state"]
                if state == "presenting":
                    return
            raise AssertionError("never reached presenting")

    api = Api()
    api.reset()
    return api


class TestReadEndpoints:
    def test_session_starts_idle(self, api):
        doc = api.get("/api/session").json()
        assert doc["state"] == "idle"
        assert doc["candidates"] == []
        assert doc["label"] is None

    def test_catalog_lists_products_with_frequent_flag(self, api):
        docs = api.get("/api/catalog").json()
        assert [d["name"] for d in docs] == list(CLASSES)
        assert any(d["frequent"] for d in docs)
        assert all(set(d) == {"class_id", "name", "price_per_kg", "frequent"}
                   for d in docs)

    def test_search_ranked(self, api):
        docs = api.get("/api/search?q=pe").json()
        assert [d["name"] for d in docs] == ["pear"]

    def test_search_empty_query_gives_frequent(self, api):
        docs = api.get("/api/search?q=").json()
        assert docs == [d for d in api.get("/api/catalog").json() if d["frequent"]]

    def test_unknown_route_404(self, api):
        assert api.get("/api/nope").status_code == 404


class TestScaleFlow:
    def test_light_weight_stays_idle(self, api):
        response = api.post("/api/scale", {"weight_g": 10.0})
        assert response.status_code == 202
        assert api.get("/api/session").json()["state"] == "idle"

    def test_happy_path_produces_exactly_one_label(self, api, server):
        before = len(api.get("/api/labels").json())
        api.drive_to_presenting()
        doc = api.get("/api/session").json()
        assert len(doc["candidates"]) > 0
        choice = doc["candidates"][0]["class_id"]
        assert api.post("/api/session/select", {"class_id": choice}).status_code == 200
        printed = api.post("/api/session/print")
        assert printed.status_code == 200
        label = printed.json()
        assert label["class_id"] == choice
        assert label["total_price"].count(".") == 1
        journal = api.get("/api/labels").json()
        assert len(journal) == before + 1
        assert journal[-1] == label
        api.reset()

    def test_removal_returns_to_idle(self, api):
        api.drive_to_presenting()
        api.post("/api/scale", {"weight_g": 0.0})
        assert api.get("/api/session").json()["state"] == "idle"

    def test_negative_weight_rejected(self, api):
        response = api.post("/api/scale", {"weight_g": -5.0})
        assert response.status_code == 400

    def test_missing_weight_rejected(self, api):
        assert api.post("/api/scale", {}).status_code == 400

    def test_bad_image_payload_rejected_without_mutation(self, api):
        before = api.get("/api/session").json()
        response = api.post("/api/scale", {"weight_g": 300.0, "image_b64": "!!!"})
        assert response.status_code == 400
        assert api.get("/api/session").json() == before


class TestTransitionErrors:
    def test_print_without_select_is_409_no_selection(self, api):
        api.drive_to_presenting()
        response = api.post("/api/session/print")
        assert response.status_code == 409
        doc = response.json()
        assert doc["code"] == "no_selection"
        assert doc["message"]
        api.reset()

    def test_rejected_print_mutates_nothing(self, api):
        api.drive_to_presenting()
        before = api.get("/api/session").json()
        labels_before = api.get("/api/labels").json()
        assert api.post("/api/session/print").status_code == 409
        assert api.get("/api/session").json() == before
        assert api.get("/api/labels").json() == labels_before
        api.reset()

    def test_select_in_idle_is_409(self, api):
        response = api.post("/api/session/select", {"class_id": 1})
        assert response.status_code == 409
        assert response.json()["code"] == "invalid_transition"

    def test_select_unknown_product_is_409(self, api):
        api.drive_to_presenting()
        response = api.post("/api/session/select", {"class_id": 999})
        assert response.status_code == 409
        assert response.json()["code"] == "unknown_product"
        api.reset()

    def test_cancel_in_idle_is_200(self, api):
        assert api.post("/api/session/cancel").status_code == 200

    def test_malformed_json_body_is_400(self, api):
        response = api.post("/api/scale", raw=b"{not json")
        assert response.status_code == 400


class TestConcurrency:
    def test_concurrent_prints_exactly_one_wins(self, api):
        api.drive_to_presenting()
        doc = api.get("/api/session").json()
        api.post("/api/session/select", {"class_id": doc["candidates"][0]["class_id"]})
        labels_before = len(api.get("/api/labels").json())

        results = []
        barrier = threading.Barrier(2)

        def fire():
            barrier.wait()
            results.append(api.post("/api/session/print").status_code)

        threads = [threading.Thread(target=fire) for _ in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(results) == [200, 409]
        assert len(api.get("/api/labels").json()) == labels_before + 1
        api.reset()

    def test_reads_respond_while_classifying(self, api):
        api.post("/api/scale", {"weight_g": 500.0, "image_b64": api.image_b64()})
        doc = api.get("/api/session").json()
        assert doc["state"] in ("weighing", "classifying", "presenting")
        api.reset()


class TestViewSerialization:
    def test_byte_identical_for_identical_sessions(self, api):
        first = api.get("/api/session")
        second = api.get("/api/session")
        assert first.content == second.content

    def test_field_order_stable(self, api):
        keys = list(api.get("/api/session").json().keys())
        assert keys == ["session_id", "state", "weight_g", "candidates",
                        "selected_class_id", "label", "error_note"]


class TestJournalPersistence:
    def test_labels_survive_restart(self, tmp_path):
        model = build_micro_mobilenet(len(CLASSES), 42, class_names=CLASSES)
        save_model(model, tmp_path / "model.json")
        save_catalog(default_catalog(CLASSES), tmp_path / "catalog.json")
        (tmp_path / "captures").mkdir()
        config = ServiceConfig(str(tmp_path / "model.json"), str(tmp_path / "catalog.json"),
                               0, str(tmp_path / "labels.jsonl"), str(tmp_path / "captures"))
        first = serve(config)
        try:
            base = first.url
            image = synth_image(0, len(CLASSES), 24, SplitMix64(5))
            payload = {"weight_g": 150.0,
                       "image_b64": base64.b64encode(encode_ppm(image)).decode("ascii")}
            for _ in range(3):
                requests.post(base + "/api/scale", json=payload, timeout=5)
            for _ in range(200):
                if requests.get(base + "/api/session", timeout=5).json()["state"] == "presenting":
                    break
            requests.post(base + "/api/session/select", json={"class_id": 0}, timeout=5)
            assert requests.post(base + "/api/session/print", timeout=5).status_code == 200
        finally:
            first.stop()
        second = serve(config)
        try:
            labels = requests.get(second.url + "/api/labels", timeout=5).json()
            assert len(labels) == 1
        finally:
            second.stop()


class TestCaptureDirectory:
    def test_scale_without_image_consumes_capture_files(self, tmp_path):
        model = build_micro_mobilenet(len(CLASSES), 42, class_names=CLASSES)
        save_model(model, tmp_path / "model.json")
        save_catalog(default_catalog(CLASSES), tmp_path / "catalog.json")
        captures = tmp_path / "captures"
        captures.mkdir()
        from producescan.datasets import write_ppm
        write_ppm(synth_image(2, len(CLASSES), 24, SplitMix64(9)), captures / "0000.ppm")
        config = ServiceConfig(str(tmp_path / "model.json"), str(tmp_path / "catalog.json"),
                               0, str(tmp_path / "labels.jsonl"), str(captures))
        kiosk_server = serve(config)
        try:
            base = kiosk_server.url
            for _ in range(3):
                requests.post(base + "/api/scale", json={"weight_g": 300.0}, timeout=5)
            state = None
            for _ in range(200):
                state = requests.get(base + "/api/session", timeout=5).json()["state"]
                if state == "presenting":
                    break
            assert state == "presenting"
        finally:
            kiosk_server.stop()

    def test_empty_capture_dir_reports_error_note(self, tmp_path):
        model = build_micro_mobilenet(len(CLASSES), 42, class_names=CLASSES)
        save_model(model, tmp_path / "model.json")
        save_catalog(default_catalog(CLASSES), tmp_path / "catalog.json")
        (tmp_path / "captures").mkdir()
        config = ServiceConfig(str(tmp_path / "model.json"), str(tmp_path / "catalog.json"),
                               0, str(tmp_path / "labels.jsonl"), str(tmp_path / "captures"))
        kiosk_server = serve(config)
        try:
            base = kiosk_server.url
            for _ in range(3):
                requests.post(base + "/api/scale", json={"weight_g": 300.0}, timeout=5)
            doc = None
            for _ in range(200):
                doc = requests.get(base + "/api/session", timeout=5).json()
                if doc["state"] == "weighing" and doc["error_note"]:
                    break
            assert doc["state"] == "weighing"
            assert "image" in doc["error_note"]
        finally:
            kiosk_server.stop()


class TestConfigValidation:
    def test_errors_name_the_field(self, tmp_path):
        good_model = tmp_path / "model.json"
        save_model(build_micro_mobilenet(2, 1), good_model)
        good_catalog = tmp_path / "catalog.json"
        save_catalog(default_catalog(("a", "b")), good_catalog)
        captures = tmp_path / "captures"
        captures.mkdir()

        cases = [
            (ServiceConfig("missing.json", str(good_catalog), 0,
                           str(tmp_path / "l.jsonl"), str(captures)), "model_path"),
            (ServiceConfig(str(good_model), "missing.json", 0,
                           str(tmp_path / "l.jsonl"), str(captures)), "catalog_path"),
            (ServiceConfig(str(good_model), str(good_catalog), -1,
                           str(tmp_path / "l.jsonl"), str(captures)), "port"),
            (ServiceConfig(str(good_model), str(good_catalog), 0,
                           str(tmp_path / "no/such/l.jsonl"), str(captures)), "labels_path"),
            (ServiceConfig(str(good_model), str(good_catalog), 0,
                           str(tmp_path / "l.jsonl"), str(tmp_path / "nope")), "captures_dir"),
        ]
        for config, field in cases:
            with pytest.raises(InvalidArgumentError, match=field):
                KioskServer(config)


def test_session_view_shape():
    from producescan.kiosk import KioskSession
    view = session_view(KioskSession())
    assert view["state"] == "idle"
    assert json.dumps(view)  # serializable
