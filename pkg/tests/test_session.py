import math
import threading

import pytest

from rhombot.server import (
    SessionClient,
    SessionTCPServer,
    encode_message,
    read_message,
)
from rhombot.session import Session, replay

deg = math.radians

TRIANGLE_OP = {
    "new_con": ["M2", 3, "M3", 1],
    "new_discon": ["M1", 2, "M3", 0],
    "pre_morph": [
        {"module": "M1", "theta_deg": 120.0, "order": 0},
        {"module": "M2", "theta_deg": 120.0, "order": 1},
        {"module": "M3", "theta_deg": 120.0, "order": 2},
    ],
    "post_morph": [
        {"module": "M1", "theta_deg": 90.0, "order": 0},
        {"module": "M2", "theta_deg": 90.0, "order": 1},
        {"module": "M3", "theta_deg": 90.0, "order": 2},
    ],
}


def msg(i, kind, payload=None):
    return {"v": 1, "id": i, "kind": kind, "payload": payload or {}}


class TestSessionMessages:
    def test_load_then_get_state(self, scenario_text):
        s = Session()
        resp, frames = s.handle(msg(1, "load", {"scenario": scenario_text("triangle.yaml")}))
        assert resp["ok"] and resp["payload"]["modules"] == 3
        resp, _ = s.handle(msg(2, "get_state"))
        assert resp["ok"]
        state = resp["payload"]
        assert state["version"] == 1
        assert len(state["modules"]) == 3
        assert state["modules"][0]["footprint"]

    def test_requires_load_first(self):
        s = Session()
        resp, _ = s.handle(msg(1, "get_state"))
        assert not resp["ok"]
        assert resp["error"]["code"] == "out_of_order"

    def test_response_echoes_id(self, scenario_text):
        s = Session()
        resp, _ = s.handle(msg(77, "load", {"scenario": scenario_text("triangle.yaml")}))
        assert resp["id"] == 77

    def test_unknown_kind(self, scenario_text):
        s = Session()
        resp, _ = s.handle(msg(1, "warp"))
        assert not resp["ok"] and resp["error"]["code"] == "bad_request"

    def test_propose_does_not_mutate(self, scenario_text):
        s = Session()
        s.handle(msg(1, "load", {"scenario": scenario_text("triangle.yaml")}))
        before = s.state_snapshot()
        resp, frames = s.handle(msg(2, "propose", {"version": 1, "op": TRIANGLE_OP}))
        assert resp["ok"] and resp["payload"]["accepted"]
        assert resp["payload"]["report"]["passed"]
        assert frames == []
        assert s.state_snapshot() == before
        assert s.version == 1

    def test_propose_version_conflict(self, scenario_text):
        s = Session()
        s.handle(msg(1, "load", {"scenario": scenario_text("triangle.yaml")}))
        resp, _ = s.handle(msg(2, "propose", {"version": 99, "op": TRIANGLE_OP}))
        assert not resp["ok"]
        assert resp["error"]["code"] == "conflict"
        assert resp["error"]["details"]["current_version"] == 1

    def test_commit_applies_proposal_exactly(self, scenario_text):
        s = Session()
        s.handle(msg(1, "load", {"scenario": scenario_text("triangle.yaml")}))
        resp, _ = s.handle(msg(2, "propose", {"version": 1, "op": TRIANGLE_OP}))
        preview = resp["payload"]["preview"]
        op_id = resp["payload"]["op_id"]
        resp, frames = s.handle(msg(3, "commit", {"op_id": op_id}))
        assert resp["ok"] and resp["payload"]["version"] == 2
        assert len(frames) > 0
        state = s.state_snapshot()
        preview["version"] = state["version"]  # preview was taken pre-commit
        assert state == preview

    def test_commit_without_propose_conflicts(self, scenario_text):
        s = Session()
        s.handle(msg(1, "load", {"scenario": scenario_text("triangle.yaml")}))
        resp, _ = s.handle(msg(2, "commit", {"op_id": 12}))
        assert not resp["ok"] and resp["error"]["code"] == "conflict"

    def test_version_increments_once_per_commit_and_undo(self, scenario_text):
        s = Session()
        s.handle(msg(1, "load", {"scenario": scenario_text("triangle.yaml")}))
        resp, _ = s.handle(msg(2, "propose", {"version": 1, "op": TRIANGLE_OP}))
        op_id = resp["payload"]["op_id"]
        s.handle(msg(3, "commit", {"op_id": op_id}))
        assert s.version == 2
        s.handle(msg(4, "undo"))
        assert s.version == 3

    def test_undo_restores_previous_tree(self, scenario_text):
        s = Session()
        s.handle(msg(1, "load", {"scenario": scenario_text("triangle.yaml")}))
        before = s.state_snapshot()
        resp, _ = s.handle(msg(2, "propose", {"version": 1, "op": TRIANGLE_OP}))
        s.handle(msg(3, "commit", {"op_id": resp["payload"]["op_id"]}))
        s.handle(msg(4, "undo"))
        after = s.state_snapshot()
        before["version"] = after["version"]
        assert after == before

    def test_set_theta_bumps_version(self, scenario_text):
        s = Session()
        s.handle(msg(1, "load", {"scenario": scenario_text("triangle.yaml")}))
        resp, frames = s.handle(
            msg(2, "set_theta", {"module": "M1", "theta_deg": 100.0})
        )
        assert resp["ok"] and s.version == 2
        assert s.tree.modules["M1"].theta == pytest.approx(deg(100))

    def test_undo_history_bounded(self, scenario_text):
        s = Session()
        s.handle(msg(1, "load", {"scenario": scenario_text("triangle.yaml")}))
        for i in range(70):
            s.handle(
                msg(2 + i, "set_theta", {"module": "M1", "theta_deg": 90.0 + (i % 9)})
            )
        assert len(s.history) == 64
        for i in range(64):
            resp, _ = s.handle(msg(100 + i, "undo"))
            assert resp["ok"]
        resp, _ = s.handle(msg(999, "undo"))
        assert not resp["ok"]

    def test_failed_propose_reports_inline(self, scenario_text):
        s = Session()
        s.handle(msg(1, "load", {"scenario": scenario_text("triangle.yaml")}))
        bad = dict(TRIANGLE_OP)
        bad["pre_morph"] = [
            {"module": "M1", "theta_deg": 119.0, "order": 0},
            {"module": "M2", "theta_deg": 119.0, "order": 1},
            {"module": "M3", "theta_deg": 119.0, "order": 2},
        ]
        resp, _ = s.handle(msg(2, "propose", {"version": 1, "op": bad}))
        assert resp["ok"]
        assert not resp["payload"]["accepted"]
        assert not resp["payload"]["report"]["passed"]

    def test_plan_helper(self, scenario_text):
        s = Session()
        s.handle(msg(1, "load", {"scenario": scenario_text("triangle.yaml")}))
        resp, _ = s.handle(
            msg(2, "plan", {"new_con": ["M2", 3, "M3", 1],
                            "morphing": ["M1", "M2", "M3"]})
        )
        assert resp["ok"]
        for mid, theta in resp["payload"]["thetas_deg"].items():
            assert theta == pytest.approx(120.0, abs=1e-6)


class TestReplayDeterminism:
    def test_fifty_message_log(self, scenario_text):
        s = Session()
        i = 0

        def send(kind, payload=None):
            nonlocal i
            i += 1
            return s.handle(msg(i, kind, payload))

        send("load", {"scenario": scenario_text("triangle.yaml")})
        send("get_state")
        for theta in (95.0, 100.0, 105.0, 110.0, 100.0, 90.0):
            send("set_theta", {"module": "M1", "theta_deg": theta})
            send("get_state")
        resp, _ = send("propose", {"version": s.version, "op": TRIANGLE_OP})
        send("commit", {"op_id": resp["payload"]["op_id"]})
        send("get_state")
        send("undo")
        for theta in (92.0, 94.0, 96.0, 98.0):
            send("set_theta", {"module": "M2", "theta_deg": theta})
            send("get_state")
        resp, _ = send("propose", {"version": s.version, "op": TRIANGLE_OP})
        send("commit", {"op_id": resp["payload"]["op_id"]})
        for _ in range(50 - i):
            send("get_state")
        assert len(s.log) == 50

        fresh = replay(list(s.log))
        assert fresh.state_snapshot() == s.state_snapshot()
        assert fresh.version == s.version


class TestTransport:
    def test_framing_round_trip(self):
        message = {"v": 1, "id": 3, "kind": "get_state", "payload": {}}
        raw = encode_message(message)

        class _Buf:
            def __init__(self, data):
                self.data = data
                self.pos = 0

            def readline(self, n):
                end = self.data.index(b"\n", self.pos) + 1
                chunk = self.data[self.pos : end]
                self.pos = end
                return chunk

            def read(self, n):
                chunk = self.data[self.pos : self.pos + n]
                self.pos += n
                return chunk

        assert read_message(_Buf(raw)) == message

    def test_tcp_end_to_end(self, scenario_text):
        server = SessionTCPServer(("127.0.0.1", 0))
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            host, port = server.server_address
            client = SessionClient(host, port)
            resp = client.request("load", {"scenario": scenario_text("triangle.yaml")})
            assert resp["ok"]
            resp = client.request("subscribe_frames")
            assert resp["ok"]
            resp = client.request("propose", {"version": 1, "op": TRIANGLE_OP})
            op_id = resp["payload"]["op_id"]
            # a second client sees the same session state
            other = SessionClient(host, port)
            state = other.request("get_state")["payload"]
            assert state["version"] == 1
            # stale propose from the second client after the first commits
            commit = client.request("commit", {"op_id": op_id})
            assert commit["ok"] and commit["payload"]["version"] == 2
            stale = other.request("propose", {"version": 1, "op": TRIANGLE_OP})
            assert not stale["ok"] and stale["error"]["code"] == "conflict"
            assert stale["error"]["details"]["current_version"] == 2
            # the subscriber got frame broadcasts
            frame = client.read_broadcast()
            assert frame["kind"] == "frame"
            assert "modules" in frame and "events" in frame
            client.close()
            other.close()
        finally:
            server.shutdown()
            server.server_close()
