"""Calibration scans that freeze the constants the experiments assert.

The theorem-check experiments read every constant (contraction times,
additive drift constants, envelope exponents, window parameters) from
their configuration; this module measures them once, on calibration
samples drawn from a seed offset disjoint from the assertion samples,
and writes them into a complete configuration.
"""

from __future__ import annotations

import math

import numpy as np

from . import averaging as av
from . import lattice as lat
from . import liecore as lc
from . import orbits as orb
from . import weights as wt

CAL_SEED_OFFSET = 99991


def _cal_rng(seed, salt):
    return np.random.default_rng((int(seed) + CAL_SEED_OFFSET, salt))


def calibrate_model(model_tag, seed=1234, delta_star=0.5, delta_0=0.1,
                    eps_scan=(0.025, 0.05, 0.1), verbose=False):
    """Measure the full calibration block for one model.

    Returns (calibration dict, height dict): the constants are
    reproducible functions of the seed.
    """
    from .experiments import cusp_point, height_to_scale

    model = lc.model_group(model_tag)
    a = lc.default_flow(model)
    chart = lc.horospherical_chart(a)
    spec = lc.QuadratureSpec(order=48, samples=2048,
                             seed=(seed + CAL_SEED_OFFSET) % 2 ** 31)

    def log(msg):
        if verbose:
            print(f"[calibrate {model_tag}] {msg}")

    # contraction region of the adjoint flow
    adj = wt.adjoint_rep(model)
    t_adj = wt.find_contraction_time(
        adj, a, chart, delta_0, 0.5, sphere_samples=60,
        seed=seed + CAL_SEED_OFFSET, t_max=30.0, spec=spec)
    log(f"adjoint contraction t = {t_adj.t}")

    # contraction of the height channels at delta_star, target c/2 = 1/4
    t_height = 0.0
    for rep in wt.height_channel_reps(model):
        res = wt.find_contraction_time(
            rep, a, chart, delta_star, 0.25, sphere_samples=60,
            seed=seed + CAL_SEED_OFFSET + 1, t_max=30.0, spec=spec)
        t_height = max(t_height, res.t)
    log(f"height-channel contraction t_c = {t_height}")

    # eps scan.  C_* is tied to eps by the h >= 2 floor, and with the
    # exact covolume normalization (c_k = 1) the product eps C_*^{1/delta}
    # is fixed, so the candidates give the same height function; the scan
    # picks the smallest measured additive constant (ties -> largest eps).
    hcfg0 = lat.default_height_config(model, delta_star=delta_star)
    rng = _cal_rng(seed, 7)
    targets = np.exp(rng.uniform(math.log(2.0), math.log(1e4), size=24))
    points = [cusp_point(model, max(height_to_scale(model, hcfg0, h), 1.05),
                         shear=rng.uniform(-0.5, 0.5)) for h in targets]
    qspec = lc.QuadratureSpec(order=32, samples=1024,
                              seed=(seed + CAL_SEED_OFFSET + 2) % 2 ** 31)
    chosen = None
    for eps in eps_scan:
        hcfg = lat.default_height_config(model, eps=eps, delta_star=delta_star)
        excess = 0.0
        err3 = 0.0
        for x in points:
            lhs, rhs_c, _ = lat.height_margulis_check(
                x, hcfg, a, chart, t_height, qspec, c=0.5)
            excess = max(excess, lhs.mean - rhs_c)
            err3 = max(err3, 3.0 * lhs.error)
        B_t = 1.3 * max(excess, 0.0) + err3 + 0.05
        log(f"eps={eps}: max excess {excess:.4f} -> B_t {B_t:.4f}")
        if chosen is None or B_t < chosen[2] - 1e-9:
            chosen = (eps, hcfg.C_star, B_t)
    eps, C_star, B_t = chosen
    hcfg = lat.default_height_config(model, eps=eps, delta_star=delta_star)

    # sanity: h >= 2 on the calibration sample
    h_min = min(lat.height(x, hcfg) for x in points)
    assert h_min >= 2.0, f"height floor violated: {h_min}"

    # injectivity envelope fit
    from .experiments import _fit_envelope

    rng = _cal_rng(seed, 8)
    targets = np.exp(rng.uniform(math.log(2.0), math.log(1e3), size=120))
    data = []
    for h_t in targets:
        x = cusp_point(model, max(height_to_scale(model, hcfg, h_t), 1.05),
                       shear=rng.uniform(-0.5, 0.5))
        data.append((lat.height(x, hcfg), lat.injectivity_proxy(x).value))
    m_fit, C2 = _fit_envelope(data)
    log(f"envelope: inj^-1 <= {C2:.4g} h^{m_fit:.3f}")

    # metric-comparison constant: chart norm versus measured displacement
    sigma0 = 1.0
    rng = _cal_rng(seed, 9)
    for _ in range(40):
        x = cusp_point(model, float(rng.uniform(1.05, 2.0)),
                       shear=float(rng.uniform(-0.5, 0.5)))
        x = lat.reduce_point(x)
        inj = lat.injectivity_proxy(x).value
        w = rng.normal(size=(model.n, model.n))
        w -= np.trace(w) / model.n * np.eye(model.n)
        blocks = [0.2 * inj * w / max(np.linalg.norm(w), 1e-12)]
        while len(blocks) < model.factors:
            blocks.append(np.zeros((model.n, model.n)))
        v = lc.LieVector(model, tuple(blocks))
        moved = lat.LatticePoint(lc.exp_map(v) * x.rep)
        d = min(lat.riemannian_upper_bound(b1 @ np.linalg.inv(b2))
                for b1, b2 in [(moved.rep.blocks[0], x.rep.blocks[0])])
        ratio = max(d / lc.norm(v), lc.norm(v) / max(d, 1e-300))
        sigma0 = max(sigma0, ratio)
    sigma0 *= 1.02
    log(f"sigma0 = {sigma0:.4f}")

    cal = {
        "delta_0_scan": delta_0,
        "delta_1_scan": 0.8,
        "t_adjoint": t_adj.t,
        "t_c": t_height,
        "B_t": B_t,
        "C2": C2,
        "m": m_fit,
        "sigma0": sigma0,
        "Q": 4.0,
        "lambda": 1.0,
    }
    height = {
        "delta_star": delta_star, "q": [1.0] * hcfg.rank, "c": [1.0] * hcfg.rank,
        "eps": eps, "C_star": C_star, "delta_one_scan": 0.8, "cocompact": False,
    }

    if model_tag == "SL2xSL2":
        _calibrate_orbit_constants(cal, height, model, a, chart, hcfg, seed, log)
    else:
        cal.update({"delta_F": min(delta_0 / 2.0, 1.0 / 6.0), "t_F": t_height,
                    "E_1": 1.0, "C9": 1.0, "kappa": 6.0, "eps_h": 1e-2})
    return cal, height


def _calibrate_orbit_constants(cal, height, model, a, chart, hcfg, seed, log):
    kappa = max(6.0, math.ceil(cal["m"]), 3.0)
    delta_F = min(cal["delta_0_scan"] / 2.0, 1.0 / kappa)
    eps_h = 1e-2
    wcfg = orb.WindowConfig(eps_h=eps_h, kappa=kappa)
    rep = wt.restriction_rep(model)
    spec = lc.QuadratureSpec(samples=1024,
                             seed=(seed + CAL_SEED_OFFSET + 3) % 2 ** 31)
    res = wt.find_contraction_time(
        rep, a, chart, delta_F, 0.375, sphere_samples=60,
        seed=seed + CAL_SEED_OFFSET + 4, t_max=30.0, spec=spec,
        subspace=rep.v_s_coords)
    t_F = max(res.t, cal["t_c"])
    log(f"t_F = {t_F}")

    # additive constant for the orbit Margulis function, fitted at q = 1
    Y1 = orb.make_diagonal_orbit(1)
    lam = 1.0
    from .experiments import _sheet_sample_points

    rng = _cal_rng(seed, 11)
    pts = _sheet_sample_points(Y1, hcfg, wcfg, 12, rng)
    fspec = lc.QuadratureSpec(rule="qmc", samples=256,
                              seed=(seed + CAL_SEED_OFFSET + 5) % 2 ** 31)

    def F(p):
        return orb.margulis_F(p, Y1, wcfg, hcfg, delta_F, lam=lam).value

    obs = av.Observable(F, "F-cal")
    excess = 0.0
    err3 = 0.0
    for x in pts:
        est = av.apply_operator(obs, x, a, chart, 2.0, t_F, fspec)
        excess = max(excess, est.mean - 0.75 * F(x))
        err3 = max(err3, 3.0 * est.error)
    E_1 = (1.3 * max(excess, 0.0) + err3) / Y1.volume + 0.05
    log(f"E_1 = {E_1:.4f}")

    C9 = min(cal["sigma0"] ** (-delta_F),
             lam * orb.MIN_ORBIT_VOLUME * eps_h ** (1.0 / kappa))
    cal.update({"delta_F": delta_F, "kappa": kappa, "eps_h": eps_h,
                "t_F": t_F, "E_1": E_1, "C9": C9})
