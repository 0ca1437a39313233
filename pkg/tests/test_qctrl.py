import numpy as np
import pytest

from fgvc.errors import (DegenerateFit, MissingAlignmentAnchor,
                         NonInvertibleSurrogate)
from fgvc.qctrl import (ControlConfig, RpSample, anchor_timesteps, control_gop,
                        fit_power_law, predict_target_rate, refine,
                        reuse_history, select_timestep, sparse_sample)


def samples_from(rs, ps, ts=None):
    ts = ts or list(range(len(rs), 0, -1))
    return [RpSample(R=r, P=p, t=t) for r, p, t in zip(rs, ps, ts)]


# -- fitting -------------------------------------------------------------------

def test_fit_exact_power_law():
    rs = np.array([0.1, 0.3, 0.7, 1.2, 2.0])
    ps = 2.0 * rs ** 0.5
    fit = fit_power_law(samples_from(rs, ps))
    assert fit.alpha == pytest.approx(2.0, abs=1e-8)
    assert fit.beta == pytest.approx(0.5, abs=1e-8)
    assert fit.fit_r2 == pytest.approx(1.0, abs=1e-10)


def test_fit_two_points_interpolates():
    rs = np.array([0.2, 0.8])
    ps = np.array([0.5, 0.9])
    fit = fit_power_law(samples_from(rs, ps))
    for r, p in zip(rs, ps):
        assert fit.predict(r) == pytest.approx(p, rel=1e-10)


def test_fit_degenerate_cases():
    with pytest.raises(DegenerateFit):
        fit_power_law(samples_from([0.5], [0.5]))
    with pytest.raises(DegenerateFit):
        fit_power_law(samples_from([0.5, 0.5, 0.5], [0.4, 0.5, 0.6]))
    with pytest.raises(DegenerateFit):
        fit_power_law(samples_from([0.5, 1.0], [0.0, 0.5]))


def test_fit_beats_linear_and_log_on_power_data():
    rng = np.random.default_rng(0)
    wins = 0
    for trial in range(10):
        rs = np.sort(rng.uniform(0.02, 3.0, 8))
        alpha, beta = rng.uniform(0.5, 1.5), rng.uniform(0.1, 0.5)
        ps = alpha * rs ** beta * np.exp(rng.normal(0, 0.01, 8))
        fit = fit_power_law(samples_from(rs, ps))

        def r2_of(pred):
            ss_res = float(((ps - pred) ** 2).sum())
            ss_tot = float(((ps - ps.mean()) ** 2).sum())
            return 1 - ss_res / ss_tot

        lin = np.polyfit(rs, ps, 1)
        logf = np.polyfit(np.log(rs), ps, 1)
        if fit.fit_r2 >= r2_of(np.polyval(lin, rs)) and \
           fit.fit_r2 >= r2_of(np.polyval(logf, np.log(rs))):
            wins += 1
    assert wins >= 8


def test_fit_scale_consistency():
    rng = np.random.default_rng(5)
    rs = np.sort(rng.uniform(0.05, 2.0, 6))
    ps = 1.4 * rs ** 0.35 * np.exp(rng.normal(0, 0.05, 6))
    base = fit_power_law(samples_from(rs, ps))
    c = 3.7
    scaled = fit_power_law(samples_from(rs * c, ps))
    assert scaled.beta == pytest.approx(base.beta, abs=1e-8)
    assert scaled.alpha == pytest.approx(base.alpha * c ** (-base.beta), rel=1e-8)
    assert scaled.fit_r2 == pytest.approx(base.fit_r2, abs=1e-8)


# -- inversion and selection -----------------------------------------------------

def test_predict_target_rate():
    from fgvc.qctrl import SurrogateParams
    p = SurrogateParams(alpha=2.0, beta=0.5, fit_r2=1.0)
    assert predict_target_rate(p, 2.0) == pytest.approx(1.0)
    assert predict_target_rate(SurrogateParams(3.0, -0.7, 1.0), 3.0) == \
        pytest.approx(1.0)
    with pytest.raises(NonInvertibleSurrogate):
        predict_target_rate(SurrogateParams(2.0, 0.0, 1.0), 1.0)
    # inverse composition on random parameters
    rng = np.random.default_rng(1)
    for _ in range(20):
        sp = SurrogateParams(alpha=float(rng.uniform(0.2, 3)),
                             beta=float(rng.uniform(0.05, 2)), fit_r2=1.0)
        p_tar = float(rng.uniform(0.2, 3))
        r = predict_target_rate(sp, p_tar)
        assert sp.alpha * r ** sp.beta == pytest.approx(p_tar, rel=1e-10)


def test_select_timestep_rules():
    table = {10: 0.1, 8: 0.2, 6: 0.3, 4: 0.4}
    assert select_timestep(table, 0.05) == 10   # below min rate: largest t
    assert select_timestep(table, 0.3) == 6     # exact hit
    assert select_timestep(table, 0.25) == 8    # midway: larger t wins
    assert select_timestep(table, 9.0) == 4


def test_anchor_timesteps_uniform():
    table = {t: 1.0 / t for t in range(1, 32)}
    anchors = anchor_timesteps(table, 4)
    assert len(anchors) == 4
    assert anchors[0] == 1 and anchors[-1] == 31
    small = anchor_timesteps({5: 1.0, 6: 0.5}, 4)
    assert small == [5, 6]


# -- refinement loop ----------------------------------------------------------------

class SyntheticCodec:
    """Monotone rate-quality law P = alpha * R^beta over a timestep grid."""

    def __init__(self, alpha=0.97, beta=0.08, T=64, noise=0.0, seed=0):
        self.alpha = alpha
        self.beta = beta
        self.rate_table = {t: 2.0 ** (-t / 8.0) for t in range(1, T)}
        self.rng = np.random.default_rng(seed)
        self.noise = noise
        self.decodes = 0

    def measure(self, t):
        self.decodes += 1
        r = self.rate_table[t]
        p = self.alpha * r ** self.beta
        if self.noise:
            p *= float(np.exp(self.rng.normal(0, self.noise)))
        return RpSample(R=r, P=min(p, 1.0), t=t)


def test_sparse_sample_anchor_bookkeeping():
    codec = SyntheticCodec()
    phi = sparse_sample(codec.measure, codec.rate_table, 4)
    assert len(phi) == 4
    for s in phi:
        assert s.R == codec.rate_table[s.t]
    rates = [s.R for s in sorted(phi, key=lambda s: s.t)]
    assert all(a > b for a, b in zip(rates, rates[1:]))  # R decreasing in t


def test_refine_converges_on_anchor_hit():
    codec = SyntheticCodec()
    phi = sparse_sample(codec.measure, codec.rate_table, 4)
    cfg = ControlConfig(p_target=phi[1].P, M=4, eps=0.005)
    res = refine(codec.measure, codec.rate_table, phi, cfg,
                 measured={s.t: s for s in phi})
    assert res.converged
    assert res.refine_decodes == 0
    assert res.achieved.t == phi[1].t


def test_refine_converges_fast_on_smooth_codec():
    codec = SyntheticCodec()
    phi = sparse_sample(codec.measure, codec.rate_table, 4)
    target = 0.9
    cfg = ControlConfig(p_target=target, M=4, eps=0.005)
    res = refine(codec.measure, codec.rate_table, phi, cfg,
                 measured={s.t: s for s in phi})
    assert res.converged
    assert res.refine_decodes <= 3
    assert abs(res.achieved.P - target) <= 0.005


def test_refine_never_decodes_twice():
    codec = SyntheticCodec(noise=0.01, seed=3)
    phi = sparse_sample(codec.measure, codec.rate_table, 4)
    cfg = ControlConfig(p_target=0.88, M=4, eps=1e-9, max_iters=10)
    res = refine(codec.measure, codec.rate_table, phi, cfg,
                 measured={s.t: s for s in phi})
    assert codec.decodes <= 4 + cfg.max_iters
    ts = [row["t"] for row in res.trace]
    fresh = [t for i, t in enumerate(ts) if t not in ts[:i]]
    assert res.refine_decodes == len(set(fresh) - {s.t for s in phi})


def test_refine_best_so_far_guarantee():
    codec = SyntheticCodec(noise=0.02, seed=7)
    phi = sparse_sample(codec.measure, codec.rate_table, 4)
    cfg = ControlConfig(p_target=0.9, M=4, eps=1e-12, max_iters=6)
    res = refine(codec.measure, codec.rate_table, phi, cfg,
                 measured={s.t: s for s in phi})
    evaluated = {s.t: s for s in phi}
    evaluated.update({row["t"]: RpSample(row["R"], row["P"], row["t"])
                      for row in res.trace})
    best_gap = min(abs(s.P - cfg.p_target) for s in evaluated.values())
    assert abs(res.achieved.P - cfg.p_target) == pytest.approx(best_gap)


# -- history reuse ---------------------------------------------------------------------

def test_reuse_identity_scaling():
    phi = samples_from([0.1, 0.2, 0.4], [0.7, 0.8, 0.9], ts=[30, 20, 10])
    alignment = RpSample(R=0.2, P=0.8, t=20)
    out = reuse_history(phi, alignment)
    assert len(out) == 3
    by_t = {s.t: s for s in out}
    assert by_t[30].R == pytest.approx(0.1) and by_t[30].P == pytest.approx(0.7)
    assert by_t[20] == alignment


def test_reuse_rate_doubling():
    phi = samples_from([0.1, 0.2], [0.7, 0.8], ts=[20, 10])
    alignment = RpSample(R=0.4, P=0.8, t=10)
    out = reuse_history(phi, alignment)
    by_t = {s.t: s for s in out}
    assert by_t[20].R == pytest.approx(0.2)
    assert by_t[20].P == pytest.approx(0.7)


def test_reuse_missing_anchor():
    phi = samples_from([0.1, 0.2], [0.7, 0.8], ts=[20, 10])
    with pytest.raises(MissingAlignmentAnchor):
        reuse_history(phi, RpSample(R=0.4, P=0.8, t=5))


def test_control_gop_warm_start_uses_fewer_decodes():
    cold = SyntheticCodec(seed=1)
    cfg = ControlConfig(p_target=0.9, M=4, eps=0.005)
    res_cold = control_gop(cold.measure, cold.rate_table, cfg)
    assert res_cold.converged

    warm = SyntheticCodec(alpha=0.975, seed=2)  # mild drift
    res_warm = control_gop(warm.measure, warm.rate_table, cfg, res_cold.phi)
    assert res_warm.converged
    assert res_warm.align_decodes == 1
    assert warm.decodes <= cold.decodes
    assert warm.decodes <= 3
