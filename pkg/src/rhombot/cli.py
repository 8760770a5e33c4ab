"""Command-line entry point.

Subcommands: validate, simulate, fk, loop-solve, torque, render, evaluate,
serve. Exit codes are a stable contract: 0 success, 1 usage, 2 validation,
3 partial execution, 4 internal error. RHOMBOT_OUT_DIR sets the default
output root, RHOMBOT_LISTEN the default service address.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

from .actuation import (
    ActuationParams,
    actuation_torque,
    can_disconnect_single_sided,
    resisting_torque,
)
from .engine import run_script
from .kinematics import edge_transform
from .render_svg import export_frames, tree_svg
from .scenario_io import (
    EngineDefaults,
    ScenarioError,
    ktree_to_scenario,
    parse_frames,
    parse_measurements,
    parse_scenario,
    parse_script,
    scenario_to_ktree,
    serialize_scenario,
    ChainSpec,
    evaluate_rmse,
)
from .topology import Connection, TopologyError, check_invariants
from .loops import solve_loop
from .engine import loop_spec_for_connection

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_PARTIAL = 3
EXIT_INTERNAL = 4


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _out_dir(args) -> str:
    if args.out:
        return args.out
    root = os.environ.get("RHOMBOT_OUT_DIR", ".")
    return os.path.join(root, "rhombot_out")


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _load_scenario(path: str):
    doc = parse_scenario(_read(path))
    tree = scenario_to_ktree(doc)
    return doc, tree


def _apply_overrides(defaults: EngineDefaults, args) -> EngineDefaults:
    kwargs = {}
    for field_name, arg_name in (
        ("pos_tol", "pos_tol"),
        ("ang_tol_deg", "ang_tol_deg"),
        ("morph_rate", "rate"),
        ("dt", "dt"),
        ("clearance", "clearance"),
    ):
        value = getattr(args, arg_name, None)
        if value is not None:
            kwargs[field_name] = value
    if not kwargs:
        return defaults
    from dataclasses import replace

    return replace(defaults, **kwargs)


def cmd_validate(args) -> int:
    try:
        doc = parse_scenario(_read(args.scenario))
        tree = scenario_to_ktree(doc)
    except (ScenarioError, TopologyError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    problems = check_invariants(
        tree, doc.defaults.pos_tol, math.radians(doc.defaults.ang_tol_deg)
    )
    if problems:
        for p in problems:
            print(f"invalid: {p}", file=sys.stderr)
        return EXIT_VALIDATION
    print(
        f"ok: {len(tree.modules)} modules, "
        f"{len(tree.parent)} tree edges, {len(tree.loops)} loop edges"
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    doc, tree = _load_scenario(args.scenario)
    ops = parse_script(_read(args.script))
    defaults = _apply_overrides(doc.defaults, args)
    result = run_script(tree, ops, defaults.config())
    out = _out_dir(args)
    os.makedirs(out, exist_ok=True)
    params = {mid: st.params for mid, st in result.tree.modules.items()}
    if result.frames:
        export_frames(
            result.frames, out, params, root=result.tree.root,
            svg=not args.no_svg, stride=args.svg_stride,
        )
    final = ktree_to_scenario(result.tree, defaults)
    with open(os.path.join(out, "final_scenario.yaml"), "w", encoding="utf-8") as fh:
        fh.write(serialize_scenario(final))
    for i, report in enumerate(result.reports):
        print(
            f"op {i}: docking {report.pos_offset:.6f} m "
            f"{math.degrees(report.ang_offset):.4f} deg "
            f"{'pass' if report.passed else 'FAIL'}"
        )
    if not result.ok:
        print(result.error, file=sys.stderr)
        print(f"failed_op_index={result.failed_index}", file=sys.stderr)
        return EXIT_PARTIAL
    print(f"ok: {result.completed} ops, {len(result.frames)} frames -> {out}")
    return EXIT_OK


def cmd_fk(args) -> int:
    _doc, tree = _load_scenario(args.scenario)
    try:
        ks = [int(k) for k in args.interfaces.split(",")] if args.interfaces else []
    except ValueError:
        raise _UsageError(f"bad interface list {args.interfaces!r}") from None
    for k in ks:
        if k not in (1, 2, 3):
            raise _UsageError(f"interface index must be 1..3, got {k}")
    docked = {}
    for child, (pid, pedge) in tree.parent.items():
        docked[(pid, pedge)] = child
    pose = tree.root_pose
    current = tree.root
    for i, k in enumerate(ks):
        pose = pose.compose(edge_transform(tree.modules[current], k))
        if i + 1 < len(ks):
            nxt = docked.get((current, k))
            if nxt is None:
                print(
                    f"invalid: no module docked on {current}.E{k} to continue",
                    file=sys.stderr,
                )
                return EXIT_VALIDATION
            current = nxt
    print(f"{math.degrees(pose.yaw):.6f} {pose.x:.6f} {pose.y:.6f}")
    return EXIT_OK


def cmd_loop_solve(args) -> int:
    doc, tree = _load_scenario(args.scenario)
    parts = args.connect.split(",")
    if len(parts) != 4:
        raise _UsageError("--connect wants MODULE,EDGE,MODULE,EDGE")
    try:
        con = Connection(parts[0], int(parts[1]), parts[2], int(parts[3]))
    except ValueError:
        raise _UsageError(f"bad --connect value {args.connect!r}") from None
    free = set(args.free.split(",")) if args.free else set()
    for mid in free | {con.module_a, con.module_b}:
        if mid not in tree.modules:
            print(f"invalid: unknown module {mid!r}", file=sys.stderr)
            return EXIT_VALIDATION
    spec = loop_spec_for_connection(tree, con)
    result = solve_loop(spec, free, equalize=args.equalize)
    for mid in sorted(result.thetas):
        print(f"{mid} {math.degrees(result.thetas[mid]):.6f}")
    print(f"residual {result.residual_norm:.3e}")
    if not result.feasible:
        print("infeasible: no in-limit closure found", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_torque(args) -> int:
    try:
        thetas = [float(t) for t in args.theta.split(",")]
    except ValueError:
        raise _UsageError(f"bad theta list {args.theta!r}") from None
    p = ActuationParams()
    if args.torque_kg_cm is not None or args.fe is not None:
        from dataclasses import replace
        from .actuation import KG_CM_TO_NM

        kwargs = {}
        if args.torque_kg_cm is not None:
            kwargs["T"] = args.torque_kg_cm * KG_CM_TO_NM
        if args.fe is not None:
            kwargs["Fe"] = args.fe
        p = replace(p, **kwargs)
    a = args.a
    print(f"{'theta_deg':>10} {'M_d_Nm':>10} {'M_f_Nm':>10} {'single_sided':>12}")
    for theta_deg in thetas:
        theta = math.radians(theta_deg)
        if not (0.0 < theta < math.pi):
            print(f"invalid: theta {theta_deg} outside (0, 180)", file=sys.stderr)
            return EXIT_VALIDATION
        md = actuation_torque(p, a, theta)
        mf = resisting_torque(p, a)
        feasible = can_disconnect_single_sided(p, a, theta)
        print(
            f"{theta_deg:>10.2f} {md:>10.4f} {mf:>10.4f} "
            f"{'yes' if feasible else 'no':>12}"
        )
    return EXIT_OK


def cmd_render(args) -> int:
    doc, tree = _load_scenario(args.scenario)
    out = _out_dir(args)
    os.makedirs(out, exist_ok=True)
    if args.trajectory:
        frames = parse_frames(_read(args.trajectory))
        if not frames:
            print("invalid: empty trajectory", file=sys.stderr)
            return EXIT_VALIDATION
        params = {mid: st.params for mid, st in tree.modules.items()}
        written = export_frames(
            frames, out, params, root=tree.root, svg=True, stride=args.svg_stride
        )
        print(f"ok: {len(written)} files -> {out}")
        return EXIT_OK
    path = os.path.join(out, "scenario.svg")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(tree_svg(tree))
    print(f"ok: {path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    _doc, tree = _load_scenario(args.scenario)
    # the scenario must be a serial chain; walk root -> leaf
    order = [tree.root]
    while True:
        children = tree.children(order[-1])
        if not children:
            break
        if len(children) > 1:
            print(
                f"invalid: module {order[-1]} has {len(children)} children; "
                "evaluation needs a serial chain",
                file=sys.stderr,
            )
            return EXIT_VALIDATION
        order.append(children[0])
    interfaces = tuple(tree.parent[child][1] for child in order[1:])
    chain = ChainSpec(interfaces, tree.modules[tree.root].params)
    try:
        series = parse_measurements(_read(args.measurements), chain.params)
        if series.rows and len(series.rows[0].thetas) != chain.length:
            print(
                f"invalid: measurements carry {len(series.rows[0].thetas)} thetas, "
                f"chain has {chain.length} modules",
                file=sys.stderr,
            )
            return EXIT_VALIDATION
        rmse_x, rmse_y = evaluate_rmse(series, chain)
    except ScenarioError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"{rmse_x:.6f} {rmse_y:.6f}")
    return EXIT_OK


def _parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        raise _UsageError(f"address {text!r} must be HOST:PORT")
    try:
        return host, int(port)
    except ValueError:
        raise _UsageError(f"bad port in {text!r}") from None


def cmd_serve(args) -> int:
    import threading

    from .server import SessionHTTPServer, SessionTCPServer, SessionHub

    listen = args.listen or os.environ.get("RHOMBOT_LISTEN", "127.0.0.1:7401")
    host, port = _parse_address(listen)
    hub = SessionHub()
    if args.scenario:
        response, _frames = hub.dispatch(
            {
                "v": 1,
                "id": 0,
                "kind": "load",
                "payload": {"scenario": _read(args.scenario)},
            }
        )
        if not response.get("ok"):
            print(f"invalid: {response['error']['message']}", file=sys.stderr)
            return EXIT_VALIDATION
    tcp = SessionTCPServer((host, port), hub)
    print(f"session protocol on {host}:{tcp.server_address[1]}", flush=True)
    servers = [tcp]
    if args.http:
        hhost, hport = _parse_address(args.http)
        ui_dir = args.ui_dir or os.environ.get("RHOMBOT_UI_DIR")
        http_server = SessionHTTPServer((hhost, hport), hub, ui_dir)
        servers.append(http_server)
        print(f"http gateway on {hhost}:{http_server.server_address[1]}"
              + (f" serving {ui_dir}" if ui_dir else ""), flush=True)
    threads = [
        threading.Thread(target=s.serve_forever, daemon=True) for s in servers
    ]
    for t in threads:
        t.start()
    try:
        threads[0].join()
    except KeyboardInterrupt:
        for s in servers:
            s.shutdown()
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="rhombot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="run a reconfiguration script")
    p.add_argument("scenario")
    p.add_argument("script")
    p.add_argument("--out", help="output directory")
    p.add_argument("--no-svg", action="store_true", help="skip SVG rendering")
    p.add_argument("--svg-stride", type=int, default=1, help="render every Nth frame")
    p.add_argument("--dt", type=float)
    p.add_argument("--rate", type=float, help="morph rate, rad/s")
    p.add_argument("--pos-tol", type=float, dest="pos_tol")
    p.add_argument("--ang-tol-deg", type=float, dest="ang_tol_deg")
    p.add_argument("--clearance", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fk", help="forward kinematics over an interface sequence")
    p.add_argument("scenario")
    p.add_argument("--interfaces", default="", help="comma list, e.g. 2,2")
    p.set_defaults(func=cmd_fk)

    p = sub.add_parser("loop-solve", help="solve sigmas closing a new connection")
    p.add_argument("scenario")
    p.add_argument("--connect", required=True, help="MODULE,EDGE,MODULE,EDGE")
    p.add_argument("--free", default="", help="comma list of free module ids")
    p.add_argument("--equalize", action="store_true",
                   help="tie all free modules to one folding angle")
    p.set_defaults(func=cmd_loop_solve)

    p = sub.add_parser("torque", help="drive vs resisting torque table")
    p.add_argument("--theta", required=True, help="comma list of angles, deg")
    p.add_argument("--a", type=float, default=0.14, help="half side length, m")
    p.add_argument("--torque-kg-cm", type=float, dest="torque_kg_cm",
                   help="servo torque override, kg*cm")
    p.add_argument("--fe", type=float, help="holding force override, N")
    p.set_defaults(func=cmd_torque)

    p = sub.add_parser("render", help="render a scenario or trajectory to SVG")
    p.add_argument("scenario")
    p.add_argument("--trajectory", help="trajectory.jsonl to render")
    p.add_argument("--out", help="output directory")
    p.add_argument("--svg-stride", type=int, default=1)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("evaluate", help="measured-vs-predicted tip RMSE")
    p.add_argument("scenario", help="serial-chain scenario")
    p.add_argument("measurements", help="CSV: label,theta_0..,x_mm,y_mm")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="start the planning session service")
    p.add_argument("--listen", help="HOST:PORT for the session protocol")
    p.add_argument("--http", help="HOST:PORT for the browser gateway")
    p.add_argument("--ui-dir", help="static assets directory for the planner UI")
    p.add_argument("--scenario", help="scenario to preload")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ScenarioError, TopologyError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - contract: internal errors exit 4
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
