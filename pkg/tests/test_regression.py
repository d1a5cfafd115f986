"""The lambda-hat curve against the committed baseline, and its fittable part."""

import json
import math
from pathlib import Path

from conftest import CURVE_SEED
from slowpoints import exponent as ex

BASELINE = json.loads((Path(__file__).parent / "data" / "lambda_baseline.json").read_text())


def test_curve_matches_baseline(acceptance_curve):
    curve, _ = acceptance_curve
    assert tuple(BASELINE["seed"]) == CURVE_SEED
    got = {e.theta: e for e in curve.entries}
    assert sorted(got) == [b["theta"] for b in BASELINE["entries"]]
    for b in BASELINE["entries"]:
        e = got[b["theta"]]
        assert abs(e.lambda_hat - b["lambda_hat"]) <= 0.5 * b["se"], b["theta"]
        assert math.isclose(e.se, b["se"], rel_tol=0.05)
    refused = {repr(t): {repr(k): h for k, h in r["hits"].items()}
               for t, r in curve.refusals.items()}
    assert refused == BASELINE["refused"]


def test_fitted_part_of_curve_has_expected_shape(acceptance_curve):
    # supplementary, not an acceptance criterion: same checks restricted to
    # the thresholds that plain Monte Carlo can fit at this budget
    curve, _ = acceptance_curve
    th, lam, se = curve.thetas, curve.lambdas, curve.ses
    assert len(th) >= 3
    for i in range(len(th) - 1):
        assert lam[i] - lam[i + 1] > 2 * math.hypot(se[i], se[i + 1])
    assert curve.monotone_ok and curve.convex_ok
    rep = ex.asymptotic_check(curve, large_min=th[-3])
    assert rep.large_slope < 0
    assert 1.0 < curve.theta_c_hat < 1.4
