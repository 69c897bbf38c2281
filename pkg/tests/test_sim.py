import json

import numpy as np
import pytest

from depthplan import sim as S
from depthplan import world as W
from depthplan.complete import CompleterSpec
from depthplan.frames import Intrinsics
from depthplan.plan import PlannerConfig
from depthplan.sparsify import SparsifyConfig


def small_cfg(mode=S.MODE_GROUND_TRUTH, **over):
    defaults = dict(
        mode=mode,
        intrinsics=Intrinsics.default().scaled(80, 60),
        sparsify=SparsifyConfig(p=0.25, r_max=5.0),
        completer=CompleterSpec(kind="idw") if mode == S.MODE_AUGMENTED else None,
        planner=PlannerConfig(local_rrt_budget=1500, seed=1),
        plan_rate=2.5,
        seed=7,
    )
    defaults.update(over)
    return S.ExperimentConfig(**defaults)


def empty_room(x=12.0, y=4.0, z=3.0):
    return W.Scene((0.0, 0.0, 0.0), (x, y, z))


class TestRunEpisode:
    def test_immediate_success(self):
        scene = empty_room()
        cfg = small_cfg()
        rec = S.run_episode(scene, [2, 2, 1], [2.1, 2, 1], cfg)
        assert rec.success
        assert rec.sim_time == 0.0
        assert rec.path_length == pytest.approx(0.1, abs=1e-9)

    def test_straight_run_ground_truth(self):
        scene = empty_room()
        cfg = small_cfg()
        rec = S.run_episode(scene, [1.5, 2.0, 1.0], [9.5, 2.0, 1.0], cfg,
                            episode_seed=3)
        assert rec.success, rec.failure_reason
        assert rec.relative_length <= 1.3
        assert rec.sim_time <= 1.3 * 8.0 / cfg.planner.v_max
        # success invariant: final sample within epsilon of the goal
        assert np.linalg.norm(rec.samples[-1] - rec.goal) <= cfg.epsilon + 1e-9
        # path length recomputable from the logged samples
        assert rec.path_length == pytest.approx(
            S.path_length_of(rec.samples, rec.goal))

    def test_sparse_starved_sensor_fails(self):
        # almost no retained pixels and a tiny range: the conservative
        # planner can never clear the corridor to the far goal
        scene = empty_room()
        cfg = small_cfg(mode=S.MODE_SPARSE,
                        sparsify=SparsifyConfig(p=0.02, r_max=1.5),
                        timeout=15.0)
        rec = S.run_episode(scene, [1.5, 2.0, 1.0], [10.5, 2.0, 1.0], cfg,
                            episode_seed=5)
        assert not rec.success
        assert rec.failure_reason in (S.FAIL_TIMEOUT, S.FAIL_STUCK)

    def test_episode_determinism(self):
        scene, wps = W.generate_cylinder_forest(
            seed=4, bounds=((0, 0, 0), (8, 6, 3)), n_cylinders=4, n_boxes=0,
            waypoint_count=2, clearance_m=0.7)
        cfg = small_cfg(timeout=10.0)
        a = S.run_episode(scene, wps.points[0], wps.points[1], cfg, 11)
        b = S.run_episode(scene, wps.points[0], wps.points[1], cfg, 11)
        assert json.dumps(a.to_dict(), sort_keys=True) == \
            json.dumps(b.to_dict(), sort_keys=True)

    def test_conservatism_logged_clearance(self):
        scene, wps = W.generate_cylinder_forest(
            seed=2, bounds=((0, 0, 0), (8, 6, 3)), n_cylinders=5, n_boxes=0,
            waypoint_count=2, clearance_m=0.7, min_separation=3.0)
        cfg = small_cfg(timeout=20.0)
        rec = S.run_episode(scene, wps.points[0], wps.points[1], cfg, 9)
        slack = cfg.planner.collision_radius - cfg.voxel_size * np.sqrt(3)
        clear = W.clearance(scene, rec.samples)
        assert np.all(clear >= slack - 1e-9)


class TestMonotoneInformation:
    @pytest.mark.slow
    def test_gt_success_rate_dominates_sparse(self):
        # over 20 seeded runs of one pair, mean success with full depth is
        # at least the sparse sensor's
        scene, wps = W.generate_cylinder_forest(
            seed=5, bounds=((0, 0, 0), (10, 8, 3)), n_cylinders=8,
            radius_range=(0.3, 0.5), n_boxes=0, waypoint_count=2,
            clearance_m=0.7, min_separation=4.0)
        start, goal = wps.points[0], wps.points[1]
        wins = {S.MODE_GROUND_TRUTH: 0, S.MODE_SPARSE: 0}
        for mode in wins:
            for seed in range(20):
                cfg = small_cfg(mode=mode, seed=seed, timeout=25.0)
                rec = S.run_episode(scene, start, goal, cfg, episode_seed=seed)
                wins[mode] += int(rec.success)
        assert wins[S.MODE_GROUND_TRUTH] >= wins[S.MODE_SPARSE]


class TestRunMatrix:
    def test_pair_counting(self):
        assert len(S.waypoint_pairs(4, ordered=False)) == 6
        assert len(S.waypoint_pairs(4, ordered=True)) == 12

    def test_matrix_runs_and_aggregates(self):
        scene = empty_room(8.0, 6.0, 3.0)
        wps = W.WaypointSet(np.array([[1.5, 1.5, 1.0], [6.5, 4.5, 1.0],
                                      [1.5, 4.5, 1.0]]), clearance=0.7)
        cfg = small_cfg(timeout=15.0)
        rep = S.run_matrix(scene, wps, cfg, ordered=False)
        assert rep.n_runs == 3
        assert rep.n_success >= 2
        agg = rep.means_over()
        assert agg["n"] == rep.n_success
        # aggregates recomputable from records
        lengths = [r.path_length for r in rep.records if r.success]
        assert agg["path_length"] == pytest.approx(np.mean(lengths))


class TestEmitReport:
    def _tiny_report(self):
        rec = S.RunRecord(pair=(0, 1), start=np.zeros(3), goal=np.ones(3),
                          success=True, sim_time=1.0, path_length=2.0,
                          relative_length=1.15, failure_reason=None,
                          sample_times=np.array([0.0, 1.0]),
                          samples=np.array([[0, 0, 0], [1, 1, 1.0]]))
        return S.Report(mode=S.MODE_GROUND_TRUTH, config_digest="abc",
                        records=[rec])

    def test_empty_report_csv_header_only(self, tmp_path):
        rep = S.Report(mode=S.MODE_SPARSE, config_digest="x")
        paths = S.emit_report(rep, tmp_path)
        lines = paths["csv"].read_text().strip().splitlines()
        assert len(lines) == 1
        assert lines[0].startswith("mode,")

    def test_rows_and_json_consistency(self, tmp_path):
        rep = self._tiny_report()
        rep.records.append(S.RunRecord(
            pair=(1, 0), start=np.ones(3), goal=np.zeros(3), success=False,
            sim_time=40.0, path_length=3.0, relative_length=1.7,
            failure_reason="timeout", sample_times=np.array([0.0]),
            samples=np.zeros((1, 3))))
        rep.records.append(S.RunRecord(
            pair=(0, 2), start=np.zeros(3), goal=np.array([2, 0, 0.0]),
            success=True, sim_time=2.0, path_length=2.2,
            relative_length=1.1, failure_reason=None,
            sample_times=np.array([0.0]), samples=np.zeros((1, 3))))
        paths = S.emit_report(rep, tmp_path)
        lines = paths["csv"].read_text().strip().splitlines()
        assert len(lines) == 4
        doc = json.loads(paths["json"].read_text())
        agg = doc["reports"][0]["aggregates"]
        recs = doc["reports"][0]["records"]
        succ = [r for r in recs if r["success"]]
        assert agg["n_success"] == len(succ)
        assert agg["path_length"] == pytest.approx(
            np.mean([r["path_length"] for r in succ]))

    def test_svg_polyline_per_trajectory(self, tmp_path):
        rep = self._tiny_report()
        scene = empty_room()
        paths = S.emit_report(rep, tmp_path, scene)
        svg = paths["svg"].read_text()
        assert svg.count("<polyline") == 1
        assert svg.startswith("<svg")

    def test_round_trip_report(self, tmp_path):
        rep = self._tiny_report()
        paths = S.emit_report(rep, tmp_path)
        doc = json.loads(paths["json"].read_text())
        back = S.Report.from_dict(doc["reports"][0])
        assert back.mode == rep.mode
        assert back.n_success == rep.n_success
        assert np.allclose(back.records[0].samples, rep.records[0].samples)

    def test_common_success_stats(self):
        a = self._tiny_report()
        b = self._tiny_report()
        b.mode = S.MODE_SPARSE
        b.records[0].success = False
        stats = S.common_success_stats({a.mode: a, b.mode: b})
        assert stats["common_pairs"] == []
        b.records[0].success = True
        stats = S.common_success_stats({a.mode: a, b.mode: b})
        assert stats["common_pairs"] == [(0, 1)]
        assert stats["per_mode"][S.MODE_SPARSE]["n"] == 1
