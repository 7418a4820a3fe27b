"""Mutual-information analytics: digamma, KSG estimator, branch study."""

import math

import mpmath
import numpy as np
import pytest

from edpc.ifr import (MIEstimate, branch_mi, digamma, gaussian_self_test,
                      ifr_ratio, ksg_mi, run_ifr_study, study_csv, study_trend)
from edpc.model import ModelConfig
from edpc.nn import make_rng

EULER_GAMMA = 0.5772156649015328606


# -- digamma -----------------------------------------------------------------

def test_digamma_known_constants():
    assert abs(digamma(1.0) + EULER_GAMMA) < 1e-12
    assert abs(digamma(2.0) - (1.0 - EULER_GAMMA)) < 1e-12
    assert abs(digamma(0.5) + 2.0 * math.log(2.0) + EULER_GAMMA) < 1e-12


def test_digamma_against_high_precision_oracle():
    rng = np.random.default_rng(0)
    xs = np.concatenate([rng.uniform(1e-3, 1.0, 60), rng.uniform(1.0, 100.0, 60)])
    for x in xs:
        assert abs(digamma(float(x)) - float(mpmath.digamma(float(x)))) < 1e-10


def test_digamma_recurrence_property():
    rng = np.random.default_rng(1)
    for x in rng.uniform(0.01, 50.0, 100):
        assert abs(digamma(x + 1.0) - digamma(x) - 1.0 / x) < 1e-12


def test_digamma_rejects_nonpositive():
    with pytest.raises(ValueError):
        digamma(0.0)
    with pytest.raises(ValueError):
        digamma(-3.0)


def test_digamma_vectorized():
    out = digamma(np.array([1.0, 2.0]))
    assert out.shape == (2,)
    assert abs(out[0] + EULER_GAMMA) < 1e-12


# -- KSG estimator ------------------------------------------------------------

def _correlated_gaussians(n, rho, seed):
    rng = make_rng(seed)
    z = rng.standard_normal((n, 1))
    y = rho * z + math.sqrt(1.0 - rho * rho) * rng.standard_normal((n, 1))
    return z, y


def test_ksg_independent_gaussians_near_zero():
    rng = make_rng(100)
    est = ksg_mi(rng.standard_normal((2000, 1)), rng.standard_normal((2000, 1)), 5)
    assert abs(est.value) < 0.05
    assert est.n_samples == 2000 and est.neighbors == 5


def test_ksg_correlated_gaussians_match_analytic():
    z, y = _correlated_gaussians(5000, 0.9, seed=0)
    est = ksg_mi(z, y, 5)
    analytic = -0.5 * math.log(1.0 - 0.81)
    assert abs(est.value - analytic) < 0.08
    assert not est.flagged


def test_ksg_degenerate_identity_flagged():
    rng = make_rng(2)
    z = rng.standard_normal((1500, 2))
    est = ksg_mi(z, z.copy(), 5)
    assert est.value > 2.0  # grows with n; clearly degenerate
    smaller = ksg_mi(z[:400], z[:400].copy(), 5)
    assert est.value > smaller.value


def test_ksg_symmetry():
    z, y = _correlated_gaussians(1200, 0.7, seed=3)
    a = ksg_mi(z, y, 4)
    b = ksg_mi(y, z, 4)
    assert abs(a.value - b.value) < 1e-9


def test_ksg_monotone_transform_invariance():
    z, y = _correlated_gaussians(2000, 0.8, seed=4)
    base = ksg_mi(z, y, 5)
    scaled = ksg_mi(2.0 * z + 1.0, y, 5)
    assert abs(base.value - scaled.value) < 0.05


def test_ksg_consistency_over_n():
    analytic = -0.5 * math.log(1.0 - 0.81)
    medians = []
    for n in (500, 2000, 8000):
        errs = []
        for seed in range(10):
            z, y = _correlated_gaussians(n, 0.9, seed=1000 + seed)
            errs.append(abs(ksg_mi(z, y, 5, jitter_seed=seed).value - analytic))
        medians.append(float(np.median(errs)))
    assert medians[0] > medians[1] > medians[2]


def test_ksg_validates_inputs():
    rng = make_rng(5)
    with pytest.raises(ValueError):
        ksg_mi(rng.standard_normal((10, 1)), rng.standard_normal((12, 1)), 3)
    with pytest.raises(ValueError):
        ksg_mi(rng.standard_normal((5, 1)), rng.standard_normal((5, 1)), 5)
    with pytest.raises(ValueError):
        ksg_mi(np.full((50, 1), np.nan), rng.standard_normal((50, 1)), 3)


def test_ksg_handles_duplicate_points():
    # heavy ties: jitter keeps counts well defined, estimate finite
    rng = make_rng(6)
    z = np.round(rng.standard_normal((800, 1)), 1)
    y = np.round(z + 0.1 * rng.standard_normal((800, 1)), 1)
    est = ksg_mi(z, y, 4)
    assert np.isfinite(est.value)


# -- ratio --------------------------------------------------------------------

def test_ifr_ratio_arithmetic():
    a = MIEstimate(0.8, 5, 1000)
    b = MIEstimate(0.5, 5, 1000)
    assert abs(ifr_ratio(a, b) - 1.6) < 1e-12
    assert ifr_ratio(a, a) == 1.0


def test_ifr_ratio_guards():
    a = MIEstimate(0.8, 5, 1000)
    with pytest.raises(ValueError):
        ifr_ratio(a, MIEstimate(0.0, 5, 1000))
    with pytest.raises(ValueError):
        ifr_ratio(a, MIEstimate(-0.2, 5, 1000))
    with pytest.raises(ValueError):
        ifr_ratio(a, MIEstimate(0.5, 3, 1000))  # different k not comparable


# -- branch study ----------------------------------------------------------------

STUDY_CFG = ModelConfig(context_len=8, embed_dim=4, hidden_local=32, hidden_global=64,
                        lte_ratio=4, branches=2, lanes=32, seed=0)


def _probe_text(n=120_000):
    import pydoc
    parts = [pydoc.render_doc(m, renderer=pydoc.plaintext)
             for m in ("json", "os", "re", "logging", "collections")]
    data = ("\n".join(parts) * 4).encode()
    return data[:n]


def test_branch_mi_finite_and_positive():
    probe = _probe_text()
    e1 = branch_mi(STUDY_CFG, 1, probe, n_samples=600, warmup_steps=150)
    e2 = branch_mi(STUDY_CFG, 2, probe, n_samples=600, warmup_steps=150)
    assert np.isfinite(e1.value) and np.isfinite(e2.value)
    assert e1.value > 0 and e2.value > 0
    assert e1.n_samples == e2.n_samples == 600
    r = ifr_ratio(e1, e2)
    assert np.isfinite(r) and r > 0


def test_branch_mi_needs_enough_probe_data():
    with pytest.raises(ValueError):
        branch_mi(STUDY_CFG, 2, b"tooshort", n_samples=500, warmup_steps=100)


def test_study_rows_and_csv_shape():
    probe = _probe_text()
    rows = run_ifr_study(STUDY_CFG, probe, seeds=[0, 1], n_samples=400,
                         warmup_steps=100)
    assert len(rows) == 2
    csv = study_csv(rows)
    lines = csv.strip().split("\n")
    assert lines[0] == "seed,i1,i2,i3,ifr_1_2,ifr_1_3,ifr_2_3"
    assert len(lines) == 3
    assert all(len(line.split(",")) == 7 for line in lines[1:])
    trend = study_trend(rows)
    assert set(trend) >= {"median_i1", "median_i2", "median_i3",
                          "mi_decreases_with_branches"}


def test_study_deterministic_for_fixed_seed():
    probe = _probe_text(60_000)
    r1 = run_ifr_study(STUDY_CFG, probe, seeds=[7], n_samples=300, warmup_steps=80)
    r2 = run_ifr_study(STUDY_CFG, probe, seeds=[7], n_samples=300, warmup_steps=80)
    assert r1 == r2


def test_gaussian_self_test_passes():
    result = gaussian_self_test(n=3000, seed=1)
    assert result["abs_error"] <= 0.08
    assert abs(result["independent_estimate"]) < 0.05
