import math
import os

import numpy as np
import pytest

from rhombot.engine import EngineConfig, MorphTarget, execute_morph
from rhombot.kinematics import ModuleParams
from rhombot.scenario_io import PoseDecl
from rhombot.render_svg import export_frames, frame_svg, tree_svg
from rhombot.scenario_io import (
    ChainSpec,
    EngineDefaults,
    MeasurementRow,
    MeasurementSeries,
    ModuleDecl,
    ScenarioDoc,
    ScenarioError,
    evaluate_rmse,
    derive_poses,
    ktree_to_scenario,
    parse_frames,
    parse_measurements,
    parse_scenario,
    parse_script,
    predict_tip,
    scenario_to_ktree,
    serialize_frames,
    serialize_scenario,
    serialize_script,
)
from rhombot.topology import Connection, check_invariants

deg = math.radians

MINIMAL = """
version: 1
root: M0
root_pose: {yaw_deg: 0.0, x: 0.0, y: 0.0}
modules:
  - id: M0
    theta_deg: 90.0
"""


class TestScenarioParsing:
    def test_minimal_round_trip(self):
        doc = parse_scenario(MINIMAL)
        assert doc.root == "M0"
        assert parse_scenario(serialize_scenario(doc)) == doc

    def test_checked_in_corpus_round_trips(self, scenario_text):
        names = ["triangle.yaml", "square.yaml", "chain4.yaml", "mu.yaml",
                 "f_target.yaml"]
        for name in names:
            doc = parse_scenario(scenario_text(name))
            assert parse_scenario(serialize_scenario(doc)) == doc, name

    def test_generated_corpus_round_trips(self):
        rng = np.random.default_rng(31)
        for i in range(8):
            n = int(rng.integers(1, 6))
            modules = tuple(
                ModuleDecl(f"M{j}", float(rng.uniform(50, 130))) for j in range(n)
            )
            connections = tuple(
                Connection(f"M{j}", 2, f"M{j+1}", 0) for j in range(n - 1)
            )
            doc = ScenarioDoc(
                1, "M0",
                PoseDecl(
                    float(rng.uniform(-180, 180)),
                    float(rng.uniform(-1, 1)),
                    float(rng.uniform(-1, 1)),
                ),
                modules, connections,
                EngineDefaults(pos_tol=float(rng.uniform(0.001, 0.01))),
            )
            assert parse_scenario(serialize_scenario(doc)) == doc

    def test_unknown_field_rejected_with_path(self):
        text = MINIMAL + "\nbogus: 1\n"
        with pytest.raises(ScenarioError) as err:
            parse_scenario(text)
        assert "bogus" in str(err.value)

    def test_unknown_module_field_rejected(self):
        text = MINIMAL.replace("theta_deg: 90.0", "theta_deg: 90.0\n    color: red")
        with pytest.raises(ScenarioError) as err:
            parse_scenario(text)
        assert "modules[0]" in str(err.value)

    def test_theta_out_of_limits_names_module(self):
        text = MINIMAL.replace("theta_deg: 90.0", "theta_deg: 150.0")
        with pytest.raises(ScenarioError) as err:
            parse_scenario(text)
        assert "M0" in str(err.value) and "150" in str(err.value)

    def test_duplicate_id_rejected(self):
        text = MINIMAL + "  - id: M0\n    theta_deg: 90.0\n"
        with pytest.raises(ScenarioError) as err:
            parse_scenario(text)
        assert "duplicate" in str(err.value)

    def test_dangling_connection_rejected(self):
        text = MINIMAL + "connections:\n  - [M0, 1, MX, 0]\n"
        with pytest.raises(ScenarioError) as err:
            parse_scenario(text)
        assert "MX" in str(err.value)

    def test_syntax_error_carries_location(self):
        with pytest.raises(ScenarioError) as err:
            parse_scenario("version: 1\nroot: [unclosed")
        assert "line" in str(err.value)

    def test_square_counts(self, scenario_text):
        doc = parse_scenario(scenario_text("square.yaml"))
        assert len(doc.modules) == 4
        assert len(doc.connections) == 4

    def test_pose_derivation_matches_tree(self, scenario_text):
        doc = parse_scenario(scenario_text("square.yaml"))
        poses = derive_poses(doc)
        tree = scenario_to_ktree(doc)
        world = tree.world_poses()
        assert math.hypot(
            world["M0"].x - poses["M0"].x, world["M0"].y - poses["M0"].y
        ) < 1e-12

    def test_tree_round_trip_via_scenario(self, scenario_text):
        tree = scenario_to_ktree(parse_scenario(scenario_text("mu.yaml")))
        doc = ktree_to_scenario(tree)
        tree2 = scenario_to_ktree(doc)
        assert tree2.parent == tree.parent
        assert tree2.loops == tree.loops
        assert check_invariants(tree2) == []


class TestScriptParsing:
    def test_round_trip(self, scenario_text):
        ops = parse_script(scenario_text("mu_to_f.yaml"))
        assert len(ops) == 4
        assert parse_script(serialize_script(ops)) == ops

    def test_unknown_op_field(self):
        text = "version: 1\nops:\n- new_con: [A,1,B,2]\n  new_discon: [A,2,B,3]\n  speed: 4\n"
        with pytest.raises(ScenarioError) as err:
            parse_script(text)
        assert "speed" in str(err.value)


class TestTrajectories:
    def _frames(self, scenario_text):
        doc = parse_scenario(scenario_text("triangle.yaml"))
        tree = scenario_to_ktree(doc)
        _, frames = execute_morph(
            tree, [MorphTarget("M1", deg(100), 0)], EngineConfig(dt=0.1)
        )
        return frames

    def test_round_trip_exact(self, scenario_text):
        frames = self._frames(scenario_text)
        back = parse_frames(serialize_frames(frames))
        assert back == frames

    def test_export_writes_trajectory_and_svg(self, scenario_text, tmp_path):
        frames = self._frames(scenario_text)
        params = {mid: ModuleParams() for mid in frames[0].sigmas}
        written = export_frames(frames, str(tmp_path), params, root="M1")
        assert os.path.join(str(tmp_path), "trajectory.jsonl") in written
        svgs = [w for w in written if w.endswith(".svg")]
        assert len(svgs) == len(frames)

    def test_svg_deterministic(self, scenario_text):
        frames = self._frames(scenario_text)
        params = {mid: ModuleParams() for mid in frames[0].sigmas}
        a = frame_svg(frames[-1], params, root="M1")
        b = frame_svg(frames[-1], params, root="M1")
        assert a == b
        assert "<svg" in a and "polygon" in a and "E0" in a

    def test_single_frame_svg_has_one_rhombus_per_module(self, scenario_text):
        doc = parse_scenario(scenario_text("triangle.yaml"))
        tree = scenario_to_ktree(doc)
        svg = tree_svg(tree)
        assert svg.count("<polygon") == 3


class TestMeasurements:
    CSV = (
        "label,theta_0,theta_1,x_mm,y_mm\n"
        "c1,90,90,0,560\n"
        "c2,100,80,12.5,540\n"
    )

    def test_parse_converts_units(self):
        series = parse_measurements(self.CSV)
        assert series.rows[0].thetas == pytest.approx((deg(90), deg(90)))
        assert series.rows[1].x == pytest.approx(0.0125)
        assert series.rows[0].y == pytest.approx(0.56)

    def test_bad_header(self):
        with pytest.raises(ScenarioError):
            parse_measurements("a,b,c\n1,2,3\n")

    def test_theta_out_of_limits(self):
        bad = "label,theta_0,x_mm,y_mm\nr,150,0,0\n"
        with pytest.raises(ScenarioError):
            parse_measurements(bad)

    def test_arity_mismatch(self):
        series = parse_measurements(self.CSV)
        chain = ChainSpec(interfaces=(2, 2))  # 3 modules, rows carry 2 thetas
        with pytest.raises(ScenarioError):
            evaluate_rmse(series, chain)


class TestRmse:
    def chain(self):
        return ChainSpec(interfaces=(2,))

    def test_exact_measurements_zero_rmse(self):
        chain = self.chain()
        rows = []
        for t0, t1 in ((90, 90), (100, 70), (120, 60)):
            x, y = predict_tip(chain, (deg(t0), deg(t1)))
            rows.append(MeasurementRow("r", (deg(t0), deg(t1)), x, y))
        rmse = evaluate_rmse(MeasurementSeries(tuple(rows)), chain)
        assert rmse == pytest.approx((0.0, 0.0), abs=1e-12)

    def test_constant_offset(self):
        chain = self.chain()
        rows = []
        for t0, t1 in ((90, 90), (100, 70), (120, 60)):
            x, y = predict_tip(chain, (deg(t0), deg(t1)))
            rows.append(MeasurementRow("r", (deg(t0), deg(t1)), x + 0.003, y + 0.004))
        rmse = evaluate_rmse(MeasurementSeries(tuple(rows)), chain)
        assert rmse == pytest.approx((0.003, 0.004), abs=1e-12)

    def test_row_permutation_invariant(self):
        chain = self.chain()
        rng = np.random.default_rng(8)
        rows = []
        for _ in range(50):
            t = tuple(rng.uniform(deg(45), deg(135), 2))
            x, y = predict_tip(chain, t)
            rows.append(
                MeasurementRow("r", t, x + rng.normal(0, 0.01), y + rng.normal(0, 0.01))
            )
        base = evaluate_rmse(MeasurementSeries(tuple(rows)), chain)
        mixed = evaluate_rmse(
            MeasurementSeries(tuple(rng.permutation(np.array(rows, dtype=object)))),
            chain,
        )
        assert mixed == pytest.approx(base)

    def test_seeded_noise_recovers_sigma(self):
        chain = ChainSpec(interfaces=(2, 2, 1))
        rng = np.random.default_rng(1234)
        sx, sy = 0.00477, 0.01496
        rows = []
        for _ in range(10_000):
            t = tuple(rng.uniform(deg(45), deg(135), 4))
            x, y = predict_tip(chain, t)
            rows.append(
                MeasurementRow("r", t, x + rng.normal(0, sx), y + rng.normal(0, sy))
            )
        rmse_x, rmse_y = evaluate_rmse(MeasurementSeries(tuple(rows)), chain)
        assert abs(rmse_x - sx) / sx < 0.05
        assert abs(rmse_y - sy) / sy < 0.05

    def test_tip_is_far_corner(self):
        # at 90/90 stacked through E2 the tip sits at (+a, 2*0.28)
        chain = self.chain()
        x, y = predict_tip(chain, (deg(90), deg(90)))
        assert (x, y) == pytest.approx((0.14, 0.56), abs=1e-12)
