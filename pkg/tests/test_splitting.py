from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossfit.errors import PlanError, UnsupportedError
from crossfit.splitting import (
    GroupSplit,
    SplitPlan,
    custom_plan,
    make_dcdr_plan,
    make_full_sample_plan,
    make_plan,
    make_plugin_plan,
    make_single_cf_plan,
    validate_plan,
)


class TestPluginPlan:
    def test_equal_split(self):
        plan = make_plugin_plan(10, 5, seed=3)
        assert [g.eval_idx.size for g in plan.groups] == [2] * 5
        assert [g.gamma_idx.size for g in plan.groups] == [8] * 5

    def test_remainder(self):
        plan = make_plugin_plan(7, 3, seed=0)
        assert sorted(g.eval_idx.size for g in plan.groups) == [2, 2, 3]

    @pytest.mark.parametrize("n,L", [(3, 4), (10, 1), (5, 0)])
    def test_invalid(self, n, L):
        with pytest.raises(PlanError):
            make_plugin_plan(n, L)

    def test_deterministic(self):
        a = make_plugin_plan(50, 4, seed=9).to_dict()
        assert a == make_plugin_plan(50, 4, seed=9).to_dict()
        assert a != make_plugin_plan(50, 4, seed=10).to_dict()

    def test_identity_order(self):
        plan = make_plugin_plan(6, 3, shuffle=False)
        assert [g.eval_idx.tolist() for g in plan.groups] == [[0, 1], [2, 3], [4, 5]]

    def test_indices_read_only(self):
        plan = make_plugin_plan(6, 2)
        with pytest.raises(ValueError):
            plan.groups[0].eval_idx[0] = 3


class TestDcdrPlan:
    def test_rotation_identity_shuffle(self):
        plan = make_dcdr_plan(6, 3, shuffle=False)
        got = [(g.eval_idx.tolist(), g.gamma_idx.tolist(), g.alpha_idx.tolist()) for g in plan.groups]
        assert got == [
            ([0, 1], [2, 3], [4, 5]),
            ([2, 3], [4, 5], [0, 1]),
            ([4, 5], [0, 1], [2, 3]),
        ]

    def test_sizes(self):
        plan = make_dcdr_plan(9, 3, seed=1)
        for g in plan.groups:
            assert g.eval_idx.size == g.gamma_idx.size == g.alpha_idx.size == 3

    def test_needs_three_groups(self):
        with pytest.raises(PlanError):
            make_dcdr_plan(6, 2)

    @pytest.mark.parametrize("L", [3, 4, 5, 7])
    def test_valid(self, L):
        diag = validate_plan(make_dcdr_plan(101, L, seed=L))
        assert diag.ok, diag

    def test_even_L_split_of_rest(self):
        plan = make_dcdr_plan(8, 4, shuffle=False)
        g = plan.groups[0]
        assert g.gamma_idx.tolist() == [2, 3, 4, 5]
        assert g.alpha_idx.tolist() == [6, 7]


class TestValidate:
    def test_plugin_valid(self):
        assert validate_plan(make_plugin_plan(20, 4)).ok

    def test_single_cf_roles(self):
        plan = make_single_cf_plan(20, 4)
        assert validate_plan(plan).ok
        for g in plan.groups:
            assert np.array_equal(g.alpha_idx, g.gamma_idx)

    def test_overlap_detected(self):
        plan = custom_plan(4, [([0, 1], [1, 2, 3])], "plugin")
        d = validate_plan(plan)
        assert not d.disjoint and not d.ok

    def test_custom_non_partition(self):
        plan = custom_plan(6, [([0, 1], [2, 3], [4, 5])], "dcdr")
        d = validate_plan(plan)
        assert d.disjoint and not d.coverage

    def test_dcdr_alpha_overlap(self):
        plan = custom_plan(6, [([0, 1], [2, 3], [3, 4, 5])], "dcdr")
        assert not validate_plan(plan).disjoint

    def test_size_floor(self):
        plan = custom_plan(20, [([0], list(range(1, 20)))], "plugin")
        d = validate_plan(plan, c=0.25)
        assert not d.size_ok and d.size_floor == 5

    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(3, 300), L=st.integers(3, 8), seed=st.integers(0, 10_000))
    def test_generated_plans_are_valid(self, n, L, seed):
        if L > n:
            return
        for plan in (make_plugin_plan(n, L, seed), make_single_cf_plan(n, L, seed),
                     make_dcdr_plan(n, L, seed)):
            d = validate_plan(plan)
            assert d.disjoint and d.coverage and d.roles_ok
            ev = np.sort(np.concatenate([g.eval_idx for g in plan.groups]))
            assert np.array_equal(ev, np.arange(n))


class TestMisc:
    def test_full_sample(self):
        plan = make_full_sample_plan(4)
        assert plan.L == 1 and plan.custom
        assert plan.groups[0].gamma_idx.tolist() == [0, 1, 2, 3]

    def test_roundtrip(self):
        plan = make_dcdr_plan(12, 3, seed=4)
        back = SplitPlan.from_dict(plan.to_dict())
        assert back.to_dict() == plan.to_dict()

    def test_custom_out_of_range(self):
        with pytest.raises(PlanError):
            custom_plan(3, [([0], [5])], "plugin")

    def test_unknown_kind(self):
        with pytest.raises(PlanError):
            SplitPlan(3, (GroupSplit([0], [1]),), "three_way")

    def test_repeated_splits_stub(self):
        with pytest.raises(UnsupportedError):
            make_plan("dcdr", 30, 3, n_splits=5)

    @pytest.mark.parametrize("kind", ["plugin", "single_cf_dr", "dcdr"])
    def test_make_plan(self, kind):
        assert make_plan(kind, 30, 3).kind == kind
