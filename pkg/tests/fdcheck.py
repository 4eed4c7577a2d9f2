"""Finite-difference gradient oracle shared by the net tests and the
acceptance suite.

The check is only valid away from ReLU kinks and the |L_d| kink, so toy
construction asserts a preactivation margin before differencing; fixtures
are seeded to satisfy it.
"""

import numpy as np

from modpipe.net import (
    NetworkConfig,
    all_keys,
    add_grads,
    critic_backward,
    critic_from_h,
    encode_batch,
    encoder_backward,
    heads_backward,
    heads_from_h,
    init_params,
    theta_d_keys,
)
from modpipe.train import masked_bce

FD_STEP = 1e-4


def make_toy(
    n: int = 50,
    input_dim: int = 16,
    d_model: int = 4,
    head_hidden: int = 8,
    critic_hidden=(8, 8),
    dropout: float = 0.1,
    seed: int = 0,
    critic_scale: float = 40.0,
):
    """Dense toy batch, params, labels, and fixed dropout masks.

    The critic weights are scaled up from their init so the mean gap that
    L_d takes the absolute value of sits well away from zero.
    """
    cfg = NetworkConfig(
        input_dim=input_dim,
        d_model=d_model,
        head_hidden=head_hidden,
        dropout=dropout,
        critic_hidden=tuple(critic_hidden),
        seed=seed,
    )
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(101,)))
    params = init_params(cfg)
    for key in theta_d_keys(cfg):
        params[key] = params[key] * critic_scale
    # Zero-init biases park preactivations exactly on the ReLU kink (a dead
    # critic layer outputs exactly its bias); jitter them so the evaluation
    # point is generic and the margin assertion below is meaningful.
    for key in params:
        if key.startswith("b"):
            params[key] = params[key] + rng.normal(0.0, 0.05, size=params[key].shape)

    def batch(rows):
        X = rng.normal(size=(rows, input_dim))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        return X

    Xs = batch(n)
    Xt = batch(n) + 0.3  # shifted target domain
    Y = (rng.random((8, n)) < 0.5).astype(np.float64)
    W = (rng.random((8, n)) < 0.8).astype(np.float64)
    W[:, 0] = 1.0  # at least one fully labeled sample
    masks = None
    if dropout > 0.0:
        mask_rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(102,)))
        masks = (mask_rng.random((8, n, head_hidden)) >= dropout).astype(np.float64)
    harden_toy(cfg, params, Xs, Xt, masks)
    return cfg, params, Xs, Xt, Y, W, masks


def harden_toy(cfg, params, Xs, Xt, masks, target: float = 5e-4, rounds: int = 60):
    """Push every ReLU preactivation at least `target` away from zero by
    nudging unit biases; finite differences with step 1e-4 are then exact to
    rounding on the piecewise-linear parts.  Mutates params in place."""
    for _ in range(rounds):
        moved = False
        for X in (Xs, Xt):
            enc = encode_batch(X, params, cfg)
            bad = np.any(np.abs(enc.Hpre) < target, axis=0)
            if bad.any():
                params["bz"][bad] += 3.0 * target
                moved = True
        enc_s = encode_batch(Xs, params, cfg)
        heads = heads_from_h(enc_s.H, params, cfg, masks)
        a1 = np.abs(heads.A1)
        if masks is not None:
            a1 = np.where(masks > 0, a1, np.inf)
        bad = np.any(a1 < target, axis=1)
        if bad.any():
            params["bh1"][bad] += 3.0 * target
            moved = True
        for X in (Xs, Xt):
            enc = encode_batch(X, params, cfg)
            crit = critic_from_h(enc.H, params, cfg)
            for i, pre in enumerate(crit.pre[:-1]):
                bad = np.any(np.abs(pre) < target, axis=0)
                if bad.any():
                    params[f"bd{i}"][bad] += 3.0 * target
                    moved = True
        if not moved:
            return
    raise AssertionError("could not clear ReLU kinks from the toy batch")


def kink_margin(cfg, params, Xs, Xt, masks) -> float:
    """Smallest |preactivation| over every ReLU the losses pass through,
    ignoring head units a dropout mask already zeroes."""
    margins = []
    for X in (Xs, Xt):
        enc = encode_batch(X, params, cfg)
        margins.append(np.min(np.abs(enc.Hpre)))
        crit = critic_from_h(enc.H, params, cfg)
        for pre in crit.pre[:-1]:
            margins.append(np.min(np.abs(pre)))
    enc_s = encode_batch(Xs, params, cfg)
    heads = heads_from_h(enc_s.H, params, cfg, masks)
    a1 = np.abs(heads.A1)
    if masks is not None:
        a1 = np.where(masks > 0, a1, np.inf)
    margins.append(np.min(a1))
    return float(min(margins))


def loss_lc(params, cfg, Xs, Y, W, masks) -> float:
    enc = encode_batch(Xs, params, cfg)
    heads = heads_from_h(enc.H, params, cfg, masks)
    return masked_bce(heads.P, Y, W)


def mean_gap(params, cfg, Xs, Xt) -> float:
    Hs = encode_batch(Xs, params, cfg).H
    Ht = encode_batch(Xt, params, cfg).H
    return float(critic_from_h(Hs, params, cfg).out.mean() - critic_from_h(Ht, params, cfg).out.mean())


def loss_combined(params, cfg, Xs, Xt, Y, W, masks, lam: float) -> float:
    return loss_lc(params, cfg, Xs, Y, W, masks) + lam * abs(mean_gap(params, cfg, Xs, Xt))


def grad_lc(params, cfg, Xs, Y, W, masks) -> dict:
    """Analytic gradient of the masked BCE w.r.t. every θ_z and θ_c entry."""
    enc = encode_batch(Xs, params, cfg)
    heads = heads_from_h(enc.H, params, cfg, masks)
    head_grads, dH = heads_backward(heads, enc.H, Y, W, params, cfg)
    grads = dict(head_grads)
    add_grads(grads, encoder_backward(enc, dH, params))
    return grads


def grad_combined(params, cfg, Xs, Xt, Y, W, masks, lam: float) -> dict:
    """Analytic gradient of L_c + λ·L_d w.r.t. every parameter, θ_d included."""
    enc_s = encode_batch(Xs, params, cfg)
    enc_t = encode_batch(Xt, params, cfg)
    heads = heads_from_h(enc_s.H, params, cfg, masks)
    head_grads, dH = heads_backward(heads, enc_s.H, Y, W, params, cfg)

    cs = critic_from_h(enc_s.H, params, cfg)
    ct = critic_from_h(enc_t.H, params, cfg)
    sign = 1.0 if float(cs.out.mean() - ct.out.mean()) >= 0.0 else -1.0
    ns, nt = cs.out.size, ct.out.size
    gd_s, dHs = critic_backward(cs, np.full(ns, sign / ns), params, cfg, need_dh=True)
    gd_t, dHt = critic_backward(ct, np.full(nt, -sign / nt), params, cfg, need_dh=True)

    grads = dict(head_grads)
    add_grads(grads, encoder_backward(enc_s, dH + lam * dHs, params))
    add_grads(grads, encoder_backward(enc_t, lam * dHt, params))
    for key in theta_d_keys(cfg):
        grads[key] = lam * (gd_s[key] + gd_t[key])
    return grads


def fd_gradient(loss_fn, params, key, flat_index, step: float = FD_STEP) -> float:
    arr = params[key]
    orig = arr.flat[flat_index]
    arr.flat[flat_index] = orig + step
    up = loss_fn()
    arr.flat[flat_index] = orig - step
    down = loss_fn()
    arr.flat[flat_index] = orig
    return (up - down) / (2.0 * step)


def compare_all(loss_fn, params, analytic, keys, rel_tol: float = 1e-4, floor: float = 1e-4):
    """Check every coordinate of the named parameter groups against central
    finite differences.  Returns (checked count, worst relative error)."""
    checked = 0
    worst = 0.0
    for key in keys:
        grad = analytic[key]
        dense = grad.to_dense() if hasattr(grad, "to_dense") else np.asarray(grad)
        for idx in range(dense.size):
            est = fd_gradient(loss_fn, params, key, idx)
            got = dense.flat[idx]
            err = abs(got - est) / max(abs(got), abs(est), floor)
            worst = max(worst, err)
            assert err <= rel_tol, f"{key}[{idx}]: analytic {got!r} vs fd {est!r} (rel err {err:.2e})"
            checked += 1
    return checked, worst
