"""Driving the planning session the way the browser planner does.

A session holds one loaded configuration; `propose` dry-runs a pivot and
returns the docking report plus a preview, `commit` applies it atomically,
`undo` walks back. The exchange below is the exact message protocol the
service speaks over TCP and the HTTP gateway.
"""

import json
import math
import os

from rhombot.session import Session

HERE = os.path.dirname(__file__)
deg = math.radians

session = Session()
next_id = 0


def send(kind, payload=None, show=False):
    global next_id
    next_id += 1
    msg = {"v": 1, "id": next_id, "kind": kind, "payload": payload or {}}
    response, frames = session.handle(msg)
    if show:
        print(f">>> {json.dumps(msg)[:100]}")
        print(f"<<< {json.dumps(response)[:140]} (+{len(frames)} frames)")
    return response, frames


with open(os.path.join(HERE, "..", "scenarios", "triangle.yaml")) as fh:
    send("load", {"scenario": fh.read()}, show=True)

state, _ = send("get_state")
print("modules:", [m["id"] for m in state["payload"]["modules"]],
      "version:", state["payload"]["version"])

# ask the server for alignment targets, then propose the pivot
plan, _ = send("plan", {"new_con": ["M2", 3, "M3", 1],
                        "morphing": ["M1", "M2", "M3"]})
targets = plan["payload"]["thetas_deg"]
print("planned targets:", {m: round(v, 6) for m, v in targets.items()})

op = {
    "new_con": ["M2", 3, "M3", 1],
    "new_discon": ["M1", 2, "M3", 0],
    "pre_morph": [
        {"module": m, "theta_deg": targets[m], "order": i}
        for i, m in enumerate(("M1", "M2", "M3"))
    ],
    "post_morph": [
        {"module": m, "theta_deg": 90.0, "order": i}
        for i, m in enumerate(("M1", "M2", "M3"))
    ],
}
proposal, _ = send("propose", {"version": state["payload"]["version"], "op": op})
print("proposal accepted:", proposal["payload"]["accepted"],
      "report:", proposal["payload"]["report"])

# a stale propose (wrong version) is refused with the current version
stale, _ = send("propose", {"version": 0, "op": op})
print("stale propose ->", stale["error"]["code"],
      "current:", stale["error"]["details"]["current_version"])

committed, frames = send("commit", {"op_id": proposal["payload"]["op_id"]})
print(f"committed at version {committed['payload']['version']}, "
      f"{len(frames)} animation frames streamed")

state, _ = send("get_state")
conns = state["payload"]["connections"]
print("connections now:", conns)

send("undo", show=True)
state, _ = send("get_state")
print("after undo, connections:", state["payload"]["connections"])
print(f"message log holds {len(session.log)} requests; replaying it would "
      f"reproduce this exact state")
