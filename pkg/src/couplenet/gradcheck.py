"""Finite-difference verification of every backward pass, runnable from
the CLI. Each suite perturbs inputs with central differences and reports
the worst relative error against the analytic gradient."""

import time

import numpy as np

from .coupling import CouplingConfig, couple, couple_backward, normalize_branch, \
    normalize_branch_backward
from .heads import HeadConfig
from .model import CoupleNetModel, ModelDims
from .nn import ConvParams, conv2d, conv2d_backward, relu, relu_backward, \
    smooth_l1, softmax_cross_entropy
from .proposals import RoITarget
from .roi import RoI, psroi_pool_avg, psroi_pool_avg_backward, roi_pool_max, \
    roi_pool_max_backward
from .train import multitask_loss

FD_STEP = 1e-5


def _fd(f, x, h=FD_STEP):
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        g.flat[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def _rel(analytic, numeric, floor=1e-9):
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_conv(rng):
    x = rng.normal(size=(1, 2, 6, 6))
    p = ConvParams(rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3), 1, 1)
    cot = rng.normal(size=conv2d(x, p).shape)
    gx, gw, gb = conv2d_backward(x, p, cot)
    return max(
        _rel(gx, _fd(lambda v: np.sum(conv2d(v, p) * cot), x)),
        _rel(gw, _fd(lambda v: np.sum(conv2d(x, ConvParams(v, p.bias, 1, 1)) * cot),
                     p.weight)),
        _rel(gb, _fd(lambda v: np.sum(conv2d(x, ConvParams(p.weight, v, 1, 1)) * cot),
                     p.bias)))


def check_relu(rng):
    x = rng.normal(size=(1, 2, 5, 5))
    x[np.abs(x) < 1e-3] = 0.5
    cot = rng.normal(size=x.shape)
    return _rel(relu_backward(x, cot), _fd(lambda v: np.sum(relu(v) * cot), x))


def check_losses(rng):
    logits = rng.normal(size=5)
    _, g = softmax_cross_entropy(logits, 2)
    err = _rel(g, _fd(lambda v: softmax_cross_entropy(v, 2)[0], logits))
    target = rng.normal(size=6)
    pred = target + rng.normal(size=6)
    x = np.abs(pred - target)
    pred[np.abs(x - 1.0) < 1e-3] += 0.01
    _, g2 = smooth_l1(pred, target)
    return max(err, _rel(g2, _fd(lambda v: smooth_l1(v, target)[0], pred)))


def check_roi_max(rng):
    f = rng.normal(size=(1, 2, 7, 8))
    roi = RoI(0, 0.6, 1.1, 7.4, 6.2)
    cot = rng.normal(size=(1, 2, 3, 3))
    _, arg = roi_pool_max(f, roi, 3, 3, 1.0)
    g = roi_pool_max_backward(arg, cot, f.shape)

    def loss(v):
        pooled, _ = roi_pool_max(v, roi, 3, 3, 1.0)
        return np.sum(pooled * cot)

    return _rel(g, _fd(loss, f))


def check_psroi(rng):
    k, nc = 3, 2
    sm = rng.normal(size=(1, k * k * nc, 8, 8))
    roi = RoI(0, 0.4, 0.9, 7.6, 7.1)
    cot = rng.normal(size=(1, nc, k, k))
    pooled = psroi_pool_avg(sm, roi, k, nc, 1.0)
    g = psroi_pool_avg_backward(pooled, cot, sm.shape)
    return _rel(g, _fd(lambda v: np.sum(psroi_pool_avg(v, roi, k, nc, 1.0).values * cot),
                       sm))


def check_normalize(rng):
    worst = 0.0
    for mode in ("none", "l2", "learned_scale"):
        v = rng.normal(size=5)
        scale = rng.normal(size=5)
        cot = rng.normal(size=5)
        g, _, _ = normalize_branch_backward(v, mode, cot, scale)
        worst = max(worst, _rel(g, _fd(
            lambda x: np.dot(normalize_branch(x, mode, scale, np.zeros(5)), cot), v)))
    return worst


def check_couple(rng):
    worst = 0.0
    for strategy in ("sum", "prod", "max"):
        a, b = rng.normal(size=6), rng.normal(size=6)
        b[np.abs(a - b) < 1e-3] += 0.01
        cot = rng.normal(size=6)
        gl, gg = couple_backward(a, b, strategy, cot)
        worst = max(worst,
                    _rel(gl, _fd(lambda v: np.dot(couple(v, b, strategy), cot), a)),
                    _rel(gg, _fd(lambda v: np.dot(couple(a, v, strategy), cot), b)))
    return worst


def check_end_to_end(rng, corrupt=False):
    # spatial_scale matches the stride-4 backbone so image-coordinate RoIs
    # land inside the feature map (out-of-map RoIs pool to all-zero bins,
    # putting ReLU pre-activations exactly on the kink where finite
    # differences are undefined).
    config = HeadConfig(k=3, num_classes=2, spatial_scale=0.25,
                        coupling=CouplingConfig())
    dims = ModelDims(in_channels=1, c1=3, c2=4, c3=5, reduce_d=6, hidden=5)
    model = CoupleNetModel(config, dims, seed=77)
    image = rng.uniform(size=(1, 1, 24, 24))
    rois = [RoI(0, 2.0, 3.0, 14.5, 17.0), RoI(0, 8.0, 6.0, 22.0, 21.0)]
    targets = [RoITarget(1, np.array([0.05, -0.08, 0.1, -0.12]), 0),
               RoITarget(0, None, None)]

    def total_loss():
        return multitask_loss(model.forward(image, rois), targets).loss

    outputs, bb_cache, head_cache = model.forward_with_cache(image, rois)
    res = multitask_loss(outputs, targets)
    grads = model.backward(bb_cache, head_cache, res.grad_cls, res.grad_bbox)
    if corrupt:  # test hook: a broken gradient must be flagged
        grads["head.global_cls_conv.bias"] = grads["head.global_cls_conv.bias"] + 0.1

    params = model.param_dict()
    probe_rng = np.random.default_rng(5)
    worst = 0.0
    for name, p in params.items():
        for flat in probe_rng.choice(p.size, size=min(p.size, 4), replace=False):
            orig = p.flat[flat]
            p.flat[flat] = orig + FD_STEP
            up = total_loss()
            p.flat[flat] = orig - FD_STEP
            down = total_loss()
            p.flat[flat] = orig
            numeric = (up - down) / (2 * FD_STEP)
            analytic = grads[name].flat[flat]
            worst = max(worst, abs(analytic - numeric) /
                        max(abs(analytic), abs(numeric), 1e-6))
    return worst


SUITES = (
    ("conv", check_conv, 1e-6),
    ("relu", check_relu, 1e-6),
    ("losses", check_losses, 1e-6),
    ("roi_max", check_roi_max, 1e-6),
    ("psroi", check_psroi, 1e-6),
    ("normalize", check_normalize, 1e-6),
    ("couple", check_couple, 1e-6),
    ("end_to_end", check_end_to_end, 1e-4),
)


def run_gradcheck(scope=None, seed=2024, corrupt=False):
    """Run all (or scope-filtered) suites; returns a list of result dicts."""
    results = []
    for name, fn, tol in SUITES:
        if scope and scope not in name:
            continue
        rng = np.random.default_rng(seed)
        start = time.perf_counter()
        kwargs = {"corrupt": corrupt} if name == "end_to_end" else {}
        err = fn(rng, **kwargs)
        results.append({"suite": name, "max_rel_err": err, "tolerance": tol,
                        "passed": err < tol,
                        "seconds": time.perf_counter() - start})
    return results
