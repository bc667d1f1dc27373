import numpy as np
import pytest

from predopt.core import InfeasibleError
from predopt.data import Split
from predopt.evaluation import (CurvePoint, LearningCurve, TrueSolutionCache, aggregate, config_digest,
                                evaluate_split, format_curve, format_mean_curves, format_report,
                                mse_vs_regret_trace, parse_curve)
from predopt.knapsack import KnapsackData, KnapsackExactOracle, knapsack_instance
from predopt.model import LinearModel

THREE = KnapsackData((5, 4, 3), 7)


def one_feature_split(targets):
    # feature == value, so weights [1] and bias 0 predict perfectly
    y = np.asarray(targets, dtype=float)
    return Split("test", np.arange(len(y)), y[:, :, None], y)


def test_perfect_model_has_zero_regret():
    split = one_feature_split([[10.0, 7.0, 4.0], [1.0, 9.0, 3.0]])
    insts = [knapsack_instance(THREE, id=i) for i in range(2)]
    res = evaluate_split(LinearModel([1.0], 0.0), split, insts, KnapsackExactOracle())
    assert res.total == 0.0 and not res.partial and len(res.per_instance) == 2


def test_three_item_split_regret_and_cache():
    y = np.array([[10.0, 7.0, 4.0]])
    X = np.array([[[10.0], [2.0], [4.0]]])
    split = Split("test", np.arange(1), X, y)
    cache = TrueSolutionCache("knap-exact")
    res = evaluate_split(LinearModel([1.0], 0.0), split, [knapsack_instance(THREE)], KnapsackExactOracle(), cache)
    assert res.total == 1.0 and res.mean == 1.0
    assert cache[0].assignment.tolist() == [0.0, 1.0, 1.0]


def test_empty_split_is_vacuous():
    split = Split("test", np.arange(0), np.zeros((0, 3, 1)), np.zeros((0, 3)))
    res = evaluate_split(LinearModel([1.0], 0.0), split, [], KnapsackExactOracle())
    assert res.vacuous and res.total == 0.0 and res.mean == 0.0


def test_failed_instances_are_flagged():
    class Failing(KnapsackExactOracle):
        def solve(self, instance, coeffs, hint=None):
            if instance.id == 1:
                raise InfeasibleError("boom")
            return super().solve(instance, coeffs, hint)

    split = one_feature_split([[10.0, 7.0, 4.0], [1.0, 9.0, 3.0]])
    insts = [knapsack_instance(THREE, id=i) for i in range(2)]
    res = evaluate_split(LinearModel([1.0], 0.0), split, insts, Failing())
    assert res.partial and res.failed[0][0] == 1 and len(res.per_instance) == 1


def curve(seed, finals, digest="abc", regime="spo"):
    c = LearningCurve(metadata={"seed": seed, "regime": regime, "config_digest": digest})
    for e, t in enumerate(finals):
        c.append(CurvePoint(e, float(e), float(e), 1.0 / (e + 1), 0.5, t))
    return c


def test_aggregate_mean_and_sample_sd():
    report = aggregate([curve(0, [5.0, 2.0]), curve(1, [6.0, 4.0])], "regime")
    row = report.row("spo")
    assert row.mean == 3.0
    assert row.sd == pytest.approx(2 ** 0.5, abs=1e-3)
    assert row.mean_curve["test_regret"].tolist() == [5.5, 3.0]
    assert format_report(report).splitlines()[1].startswith("spo,2,0 1,3.0,")
    assert len(format_mean_curves(report).splitlines()) == 3


def test_aggregate_rejects_mixed_configs_and_single_seeds():
    with pytest.raises(ValueError, match="mixes"):
        aggregate([curve(0, [1.0]), curve(1, [1.0], digest="other")], "regime")
    with pytest.raises(ValueError, match="at least 2"):
        aggregate([curve(0, [1.0])], "regime")


def test_selected_epoch_is_what_gets_aggregated():
    a, b = curve(0, [5.0, 2.0]), curve(1, [6.0, 4.0])
    a.metadata["selected_test_regret"] = 5.0
    assert aggregate([a, b], "regime").row("spo").finals == [5.0, 4.0]


def test_curve_text_round_trip():
    c = curve(3, [2.5, 1 / 3])
    c.points.append(CurvePoint(2, 3.0, 3.0, 0.1, None, None))
    back = parse_curve(format_curve(c))
    assert back.points == c.points and back.metadata == c.metadata
    no_timing = format_curve(c, include_timing=False)
    assert "solver_s" not in no_timing and "wall_s" not in no_timing
    with pytest.raises(ValueError):
        parse_curve("epoch,loss\n")


def test_curve_append_checks_monotonicity():
    c = curve(0, [1.0, 1.0])
    with pytest.raises(ValueError):
        c.append(CurvePoint(1, 5.0, 5.0, 0.0))
    with pytest.raises(ValueError):
        c.append(CurvePoint(5, 0.0, 5.0, 0.0))


def test_trace_and_digest():
    epochs, mse, reg = mse_vs_regret_trace(curve(0, [1.0, 2.0, 3.0]))
    assert epochs.tolist() == [0, 1, 2] and reg.tolist() == [0.5, 0.5, 0.5]
    with pytest.raises(ValueError):
        mse_vs_regret_trace(LearningCurve())
    assert config_digest({"a": 1, "seed": 1}) == config_digest({"a": 1, "seed": 2}) != config_digest({"a": 2})
