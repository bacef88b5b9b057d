import numpy as np
import pytest

from gramprune.budget import model_totals
from gramprune.exceptions import EmptyMaskError, MaskConsistencyError
from gramprune.maskplan import (
    MaskPlan,
    build_plan,
    plan_inception,
    plan_residual,
    plan_sequential,
)
from gramprune.models import resnet56_cifar

from helpers import (
    toy_chain_manifest,
    toy_inception_manifest,
    toy_projection_manifest,
    toy_residual_manifest,
)


def flags(n, keep):
    out = np.zeros(n, dtype=bool)
    out[list(keep)] = True
    return out


class TestSequential:
    def test_in_keep_follows_predecessor(self):
        manifest = toy_chain_manifest(widths=(4, 6, 8))
        plan = plan_sequential(manifest, {"conv1": flags(4, [0, 2])})
        assert list(np.flatnonzero(plan.masks["conv2"].in_keep)) == [0, 2]
        assert plan.masks["conv2"].out_keep.all()

    def test_all_keep_identity_plan(self):
        manifest = toy_chain_manifest()
        selections = {l.id: np.ones(l.out_channels, bool)
                      for l in manifest.layers if l.prunable}
        plan = plan_sequential(manifest, selections)
        for mask in plan.masks.values():
            assert mask.out_keep.all() and mask.in_keep.all()

    def test_zero_selection_rejected(self):
        manifest = toy_chain_manifest()
        with pytest.raises(EmptyMaskError):
            plan_sequential(manifest, {"conv1": np.zeros(8, bool)})

    def test_unknown_layer_rejected(self):
        manifest = toy_chain_manifest()
        with pytest.raises(MaskConsistencyError):
            build_plan(manifest, {"ghost": np.ones(3, bool)})

    def test_wrong_length_rejected(self):
        manifest = toy_chain_manifest()
        with pytest.raises(ValueError):
            build_plan(manifest, {"conv1": np.ones(5, bool)})


class TestResidual:
    def test_projection_shortcut_matches_final_conv(self):
        manifest = toy_projection_manifest()
        keep = flags(16, [1, 3])
        plan = plan_residual(manifest, {"conv2": keep})
        assert np.array_equal(plan.masks["proj"].out_keep, keep)
        assert np.array_equal(plan.masks["add"].out_keep, keep)
        assert np.array_equal(plan.masks["fc"].in_keep, keep)
        assert any("proj" in n for n in plan.notes)

    def test_identity_shortcut_forces_block_input_set(self):
        manifest = toy_residual_manifest(n_blocks=2, width=16)
        selections = {
            "b1_conv1": flags(16, range(8)),
            "b1_conv2": flags(16, [1, 3, 5]),
            "b2_conv1": flags(16, range(4)),
            "b2_conv2": flags(16, [0, 2]),
        }
        plan = plan_residual(manifest, selections)
        # stem is unpruned and feeds every identity shortcut, so block outputs
        # keep all 16 channels; inner convs keep their own selections
        assert plan.masks["b1_conv2"].out_keep.all()
        assert plan.masks["b2_conv2"].out_keep.all()
        assert plan.masks["b1_add"].out_keep.all()
        assert list(np.flatnonzero(plan.masks["b1_conv1"].out_keep)) == list(range(8))
        assert any("overridden" in n for n in plan.notes)

    def test_chain_of_blocks_junction_invariants(self):
        manifest = toy_residual_manifest(n_blocks=3, width=8)
        rng = np.random.default_rng(0)
        selections = {}
        for l in manifest.layers:
            if l.prunable:
                f = rng.random(l.out_channels) > 0.5
                f[0] = True
                selections[l.id] = f
        plan = plan_residual(manifest, selections)
        for l in manifest.layers:
            if l.kind == "add-junction":
                masks = [plan.masks[p].out_keep for p in l.predecessors]
                for m in masks[1:]:
                    assert np.array_equal(masks[0], m)

    def test_resnet56_full_plan_consistent(self):
        manifest = resnet56_cifar()
        rng = np.random.default_rng(1)
        selections = {}
        for l in manifest.layers:
            if l.prunable:
                f = rng.random(l.out_channels) > 0.4
                f[0] = True
                selections[l.id] = f
        plan = build_plan(manifest, selections)
        totals = model_totals(manifest, plan)
        assert totals["params"] < model_totals(manifest)["params"]
        for l in manifest.layers:
            assert plan.masks[l.id].out_keep.any()


class TestInception:
    def test_concat_order_and_downstream_in_keep(self):
        manifest = toy_inception_manifest()
        plan = plan_inception(manifest, {
            "br1": flags(8, [0, 1, 2]),
            "br2": flags(8, [3, 4, 5, 6, 7]),
        })
        cat = plan.masks["cat"]
        expected = np.concatenate([flags(8, [0, 1, 2]), flags(8, [3, 4, 5, 6, 7])])
        assert np.array_equal(cat.in_keep, expected)
        assert np.array_equal(cat.out_keep, expected)
        assert np.array_equal(plan.masks["head"].in_keep, expected)

    def test_all_kept_branch_segment_true(self):
        manifest = toy_inception_manifest()
        plan = plan_inception(manifest, {"br2": flags(8, [0])})
        cat = plan.masks["cat"].out_keep
        assert cat[:8].all()
        assert list(np.flatnonzero(cat[8:])) == [0]


class TestPlanMechanics:
    def test_idempotent(self):
        manifest = toy_residual_manifest(n_blocks=2, width=8)
        rng = np.random.default_rng(2)
        selections = {}
        for l in manifest.layers:
            if l.prunable:
                f = rng.random(l.out_channels) > 0.5
                f[0] = True
                selections[l.id] = f
        plan1 = build_plan(manifest, selections)
        replay = {l.id: plan1.masks[l.id].out_keep
                  for l in manifest.layers if l.prunable}
        plan2 = build_plan(manifest, replay)
        for lid in plan1.masks:
            assert np.array_equal(plan1.masks[lid].out_keep,
                                  plan2.masks[lid].out_keep)
            assert np.array_equal(plan1.masks[lid].in_keep,
                                  plan2.masks[lid].in_keep)
        assert not any("overridden" in n for n in plan2.notes)

    def test_serialization_round_trip(self):
        manifest = toy_chain_manifest()
        plan = build_plan(manifest, {"conv1": flags(8, [0, 5])})
        back = MaskPlan.loads(plan.dumps())
        assert back.dumps() == plan.dumps()

    def test_malformed_plan_rejected(self):
        with pytest.raises(MaskConsistencyError):
            MaskPlan.loads("{\"v\": 2}")
        with pytest.raises(MaskConsistencyError):
            MaskPlan.loads("not json")

    def test_nonprunable_selection_ignored_with_note(self):
        manifest = toy_chain_manifest()
        plan = build_plan(manifest, {"fc": flags(4, [0])})
        assert plan.masks["fc"].out_keep.all()
        assert any("not prunable" in n for n in plan.notes)

    def test_totals_well_defined_after_planning(self):
        manifest = toy_inception_manifest()
        plan = plan_inception(manifest, {"br1": flags(8, [0, 1])})
        totals = model_totals(manifest, plan)
        assert totals["params"] > 0 and totals["flops"] > 0
