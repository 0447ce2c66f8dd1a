import numpy as np
import pytest

from tailprune import (
    InfeasibleError,
    Method,
    ScoreKind,
    SelectorSpec,
    SgsConfig,
    select,
    sgs_select,
    stratified_select,
    sweep_k,
)

GEOM_SPECS = [
    SelectorSpec(Method.FLRBF),
    SelectorSpec(Method.HERDING),
    SelectorSpec(Method.KCENTER),
]
ALL_SPECS = GEOM_SPECS + [SelectorSpec(Method.TOPK, ScoreKind.CENTER_DIST)]


class TestConfig:
    def test_k_range(self):
        with pytest.raises(ValueError):
            SgsConfig(-0.1, 10, GEOM_SPECS[0])
        with pytest.raises(ValueError):
            SgsConfig(1.5, 10, GEOM_SPECS[0])

    def test_budget_positive(self):
        with pytest.raises(ValueError):
            SgsConfig(0.5, 0, GEOM_SPECS[0])


class TestEndpoints:
    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.name)
    def test_k_zero_is_pure_global(self, longtail, spec):
        sel = sgs_select(longtail, SgsConfig(0.0, 30, spec))
        pure = select(longtail, 30, spec)
        np.testing.assert_array_equal(sel.indices, pure.indices)

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.name)
    def test_k_one_is_stratified_when_quotas_fit(self, longtail, spec):
        # B = C*b and every class holds at least b samples, so the seeding
        # phase alone fills the budget and matches a stratified run
        C = longtail.num_classes
        b = int(longtail.class_counts.min())  # 5
        sel = sgs_select(longtail, SgsConfig(1.0, C * b, spec))
        strat = stratified_select(longtail, np.full(C, b), spec)
        np.testing.assert_array_equal(sel.indices, strat.indices)


class TestBudgetAndFloor:
    @pytest.mark.parametrize("spec", GEOM_SPECS, ids=lambda s: s.name)
    @pytest.mark.parametrize("k", [0.0, 0.3, 0.5, 0.8, 1.0])
    def test_exact_budget(self, longtail, spec, k):
        sel = sgs_select(longtail, SgsConfig(k, 41, spec))
        assert sel.size == 41
        assert abs(sel.weights.sum() - 1.0) <= 1e-9
        np.testing.assert_allclose(sel.weights, 1.0 / 41)

    @pytest.mark.parametrize("spec", GEOM_SPECS, ids=lambda s: s.name)
    def test_per_class_floor_guarantee(self, longtail, spec):
        B, C = 40, longtail.num_classes
        k = 0.6
        b = int(k * B / C)  # 4
        sel = sgs_select(longtail, SgsConfig(k, B, spec))
        floors = np.minimum(b, longtail.class_counts)
        assert np.all(sel.per_class_counts >= floors)

    def test_seed_quota_formula(self, longtail):
        # k=0.5, B=42, C=5: seeding quota floor(21/5) = 4 per class
        sel = sgs_select(longtail, SgsConfig(0.5, 42, GEOM_SPECS[2]))
        assert np.all(sel.per_class_counts >= np.minimum(4, longtail.class_counts))

    def test_budget_equal_to_dataset(self, longtail):
        sel = sgs_select(longtail, SgsConfig(0.5, longtail.n, GEOM_SPECS[1]))
        np.testing.assert_array_equal(sel.indices, np.arange(longtail.n))

    def test_budget_above_dataset_infeasible(self, longtail):
        with pytest.raises(InfeasibleError):
            sgs_select(longtail, SgsConfig(0.5, longtail.n + 1, GEOM_SPECS[0]))

    def test_infeasible_is_a_value_error(self, longtail):
        with pytest.raises(ValueError):
            sgs_select(longtail, SgsConfig(0.5, longtail.n + 1, GEOM_SPECS[0]))


class TestBookkeeping:
    def test_method_name_and_fields(self, longtail):
        sel = sgs_select(longtail, SgsConfig(0.4, 30, GEOM_SPECS[0], seed=7))
        assert sel.method == "sgs+flrbf"
        assert sel.k_ratio == 0.4
        assert sel.seed_used == 7
        assert sel.budget == 30

    def test_k_monotone_tail_share(self, longtail):
        # more seeding can only help the smallest class's representation
        spec = SelectorSpec(Method.TOPK, ScoreKind.CENTER_DIST)
        tail = longtail.num_classes - 1
        counts = [
            sgs_select(longtail, SgsConfig(k, 35, spec)).per_class_counts[tail]
            for k in (0.0, 0.5, 1.0)
        ]
        assert counts[0] <= counts[1] <= counts[2]


class TestSweep:
    def test_rows_and_order(self, longtail):
        calls = []

        def fake_eval(ds, sel):
            calls.append(sel)
            return 0.5, 0.25

        rows = sweep_k(longtail, [20, 30], [0.0, 1.0], fake_eval, GEOM_SPECS[2],
                       seed=3)
        assert [(r.budget, r.k) for r in rows] == [
            (20, 0.0), (20, 1.0), (30, 0.0), (30, 1.0)]
        assert all(r.oa == 0.5 and r.macc == 0.25 and r.seed == 3 for r in rows)
        assert len(calls) == 4
        assert all(c.size == c.budget for c in calls)

    def test_rows_delegate_to_sgs(self, longtail):
        seen = {}

        def fake_eval(ds, sel):
            seen[(sel.budget, sel.k_ratio)] = sel.indices
            return 0.0, 0.0

        spec = GEOM_SPECS[1]
        sweep_k(longtail, [24], [0.0], fake_eval, spec)
        direct = sgs_select(longtail, SgsConfig(0.0, 24, spec))
        np.testing.assert_array_equal(seen[(24, 0.0)], direct.indices)

    def test_empty_grid_rejected(self, longtail):
        with pytest.raises(ValueError):
            sweep_k(longtail, [], [0.5], lambda d, s: (0, 0), GEOM_SPECS[0])
        with pytest.raises(ValueError):
            sweep_k(longtail, [20], [], lambda d, s: (0, 0), GEOM_SPECS[0])
