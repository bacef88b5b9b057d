import json

import numpy as np
import pytest

from gramprune.cli import main
from gramprune.formats import write_manifest
from gramprune.maskplan import MaskPlan, build_plan

from helpers import toy_chain_manifest, write_layer_features


@pytest.fixture()
def workspace(tmp_path):
    manifest = toy_chain_manifest(widths=(8, 12, 16), spatial=8)
    mpath = tmp_path / "manifest.json"
    write_manifest(manifest, mpath)
    feat = tmp_path / "features"
    feat.mkdir()
    write_layer_features(feat, manifest, bs=8, spatial=4, seed=0)
    cfg = tmp_path / "budget.json"
    cfg.write_text(json.dumps({"skip_layers": [], "metric": "channels",
                               "global_keep": 0.75, "band": 0.15}))
    return manifest, mpath, feat, cfg, tmp_path


COMMON = ["--kernel", "linear", "--tol", "1e-7", "--max-iter", "600",
          "--temperature", "1e-3"]


class TestPruneLayer:
    def test_achievable_budget_exit_zero(self, workspace):
        _, mpath, feat, _, tmp = workspace
        out = tmp / "out"
        rc = main(["prune-layer", "--features", str(feat), "--manifest",
                   str(mpath), "--layer", "conv2", "--out", str(out),
                   "--keep", "0.5", "--band", "0.25", "--metric", "channels",
                   *COMMON])
        assert rc == 0
        assert (out / "conv2.result.json").exists()
        trace = (out / "conv2.trace.csv").read_text().splitlines()
        assert trace[0] == "iteration,objective,survivors"
        assert len(trace) > 2

    def test_missing_feature_file_exit_one(self, workspace, capsys):
        _, mpath, feat, _, tmp = workspace
        (feat / "conv2.in.fmap").unlink()
        rc = main(["prune-layer", "--features", str(feat), "--manifest",
                   str(mpath), "--layer", "conv2", "--out", str(tmp / "o"),
                   *COMMON])
        assert rc == 1
        assert "conv2.in.fmap" in capsys.readouterr().err

    def test_impossible_granularity_exit_two(self, tmp_path):
        manifest = toy_chain_manifest(widths=(4, 4), spatial=8)
        mpath = tmp_path / "m.json"
        write_manifest(manifest, mpath)
        feat = tmp_path / "f"
        feat.mkdir()
        write_layer_features(feat, manifest, bs=6, spatial=4, seed=1)
        rc = main(["prune-layer", "--features", str(feat), "--manifest",
                   str(mpath), "--layer", "conv2", "--out",
                   str(tmp_path / "o"), "--keep", "0.01", "--band", "0.005",
                   "--metric", "channels", *COMMON])
        assert rc == 2

    def test_unknown_layer_exit_one(self, workspace):
        _, mpath, feat, _, tmp = workspace
        rc = main(["prune-layer", "--features", str(feat), "--manifest",
                   str(mpath), "--layer", "nope", "--out", str(tmp / "o")])
        assert rc == 1


class TestPruneModel:
    def run_model(self, workspace, out_name, extra=()):
        _, mpath, feat, cfg, tmp = workspace
        out = tmp / out_name
        rc = main(["prune-model", "--features", str(feat), "--manifest",
                   str(mpath), "--out", str(out), "--budget-config", str(cfg),
                   *COMMON, *extra])
        return rc, out

    def test_writes_plan_and_reports(self, workspace):
        rc, out = self.run_model(workspace, "run1")
        assert rc == 0
        plan = MaskPlan.loads((out / "maskplan.json").read_text())
        assert set(plan.masks) == {"conv1", "conv2", "conv3", "fc"}
        report = (out / "report.csv").read_text().splitlines()
        assert report[0].startswith("layer_id,orig_params,kept_params,orig_flops,"
                                    "kept_flops,retained_fraction,lambda_star,"
                                    "iterations,feasible")
        assert (out / "report.txt").read_text().count("↓") == 2
        assert (out / "results.json").exists()

    def test_deterministic_across_runs_and_jobs(self, workspace):
        rc1, out1 = self.run_model(workspace, "run_a", ["--jobs", "1"])
        rc2, out2 = self.run_model(workspace, "run_b", ["--jobs", "4"])
        rc3, out3 = self.run_model(workspace, "run_c", ["--jobs", "1"])
        assert rc1 == rc2 == rc3 == 0
        plans = [(p / "maskplan.json").read_bytes() for p in (out1, out2, out3)]
        assert plans[0] == plans[1] == plans[2]
        reports = [(p / "report.csv").read_bytes() for p in (out1, out2, out3)]
        assert reports[0] == reports[1] == reports[2]

    def test_missing_features_no_partial_plan(self, workspace):
        _, mpath, feat, cfg, tmp = workspace
        (feat / "conv3.out.fmap").unlink()
        out = tmp / "broken"
        rc = main(["prune-model", "--features", str(feat), "--manifest",
                   str(mpath), "--out", str(out), "--budget-config", str(cfg),
                   *COMMON])
        assert rc == 1
        assert not (out / "maskplan.json").exists()

    def test_global_keep_one_is_identity(self, workspace):
        _, mpath, feat, _, tmp = workspace
        cfg = tmp / "keepall.json"
        cfg.write_text(json.dumps({"skip_layers": ["conv1", "conv2", "conv3"]}))
        out = tmp / "identity"
        rc = main(["prune-model", "--features", str(feat), "--manifest",
                   str(mpath), "--out", str(out), "--budget-config", str(cfg),
                   *COMMON])
        assert rc == 0
        plan = MaskPlan.loads((out / "maskplan.json").read_text())
        for mask in plan.masks.values():
            assert mask.out_keep.all()
        text = (out / "report.txt").read_text()
        assert "0.0%" in text


class TestReport:
    def test_identity_plan_zero_percent(self, workspace, tmp_path, capsys):
        manifest, mpath, _, _, _ = workspace
        selections = {l.id: np.ones(l.out_channels, bool)
                      for l in manifest.layers if l.prunable}
        plan = build_plan(manifest, selections)
        ppath = tmp_path / "plan.json"
        ppath.write_text(plan.dumps())
        rc = main(["report", "--manifest", str(mpath), "--plan", str(ppath),
                   "--csv", str(tmp_path / "r.csv")])
        assert rc == 0
        text = capsys.readouterr().out
        assert "0.0%" in text
        assert (tmp_path / "r.csv").read_text().splitlines()[0].startswith("layer_id")

    def test_report_matches_recomputed_totals(self, workspace, capsys):
        rc, out = TestPruneModel().run_model(workspace, "for_report")
        assert rc == 0
        _, mpath, _, _, _ = workspace
        rc = main(["report", "--manifest", str(mpath), "--plan",
                   str(out / "maskplan.json"), "--results",
                   str(out / "results.json")])
        assert rc == 0
        report_txt = (out / "report.txt").read_text()
        cli_txt = capsys.readouterr().out
        for line in report_txt.splitlines():
            if line.startswith(("params:", "flops:")):
                assert line in cli_txt

    def test_malformed_plan_exit_one(self, workspace, tmp_path):
        _, mpath, _, _, _ = workspace
        bad = tmp_path / "bad.json"
        bad.write_text("{\"v\": 99}")
        rc = main(["report", "--manifest", str(mpath), "--plan", str(bad)])
        assert rc == 1
