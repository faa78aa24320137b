"""Finite-difference gradient checks for every differentiable operation.

All checks run at 64-bit on small configurations. Inputs are sampled away
from the non-smooth points of the graph (integer bilinear offsets, top-k
score ties, |x| kinks at 0), and large parameter tensors are checked on a
seeded coordinate subsample to keep the whole suite fast.
"""

from __future__ import annotations

import torch

from .data import DegradationSpec
from .degradation import (DegradationEncoder, KernelGenerators, Router,
                          filter_and_sum, topk_softmax)
from .fusion import Doft, ModelConfig, ResidualGroup, deform_conv
from .losses import (contrastive_loss, degradation_loss, extract_features,
                     reconstruction_loss)
from .training import grad_check, make_batch

TOLERANCE = 1e-3
_H = 1e-5


def check_encoder():
    torch.manual_seed(0)
    enc = DegradationEncoder(c_map=4, c_code=8).double()
    d_up = torch.rand(1, 1, 8, 8, dtype=torch.float64, requires_grad=True)
    proj = torch.randn(8, dtype=torch.float64)

    def fn():
        _, code = enc(d_up)
        return (code[0] * proj).sum()

    inputs = [d_up] + list(enc.parameters())
    return grad_check(fn, inputs, h=_H, max_coords_per_tensor=60)


def check_router():
    torch.manual_seed(1)
    router = Router(g=4, k=3).double()
    # well-separated scores keep the top-k selection stable under perturbation
    with torch.no_grad():
        router.head.bias.copy_(torch.tensor([0.8, 0.4, -0.2, -0.6], dtype=torch.float64))
    d_up = torch.rand(1, 1, 8, 8, dtype=torch.float64, requires_grad=True)
    proj = torch.tensor([1.0, 2.0, 3.0], dtype=torch.float64)

    def fn():
        _, weights = router(d_up)
        return (weights[0] * proj).sum()

    inputs = [d_up] + list(router.parameters())
    return grad_check(fn, inputs, h=_H, max_coords_per_tensor=60)


def check_generators():
    torch.manual_seed(2)
    gens = KernelGenerators(c_code=8, g=4).double()
    code = torch.randn(1, 8, dtype=torch.float64, requires_grad=True)
    scores = torch.tensor([[0.9, 0.1, 0.5, -0.3]], dtype=torch.float64)
    indices, weights = topk_softmax(scores, 3)
    slot = 1
    side = gens.sides[int(indices[0, slot])]
    proj = torch.randn(side, side, dtype=torch.float64)

    def fn():
        k = gens.generate(int(indices[0, slot]), code, weights[:, slot])
        return (k[0] * proj).sum()

    inputs = [code] + list(gens.parameters())
    return grad_check(fn, inputs, h=_H, max_coords_per_tensor=60)


def check_filter_and_sum():
    torch.manual_seed(3)
    d_hr = torch.rand(8, 8, dtype=torch.float64, requires_grad=True)
    k3 = torch.rand(3, 3, dtype=torch.float64, requires_grad=True)
    k5 = torch.rand(5, 5, dtype=torch.float64, requires_grad=True)
    proj = torch.randn(8, 8, dtype=torch.float64)

    def fn():
        return (filter_and_sum([(0, k3), (1, k5)], d_hr) * proj).sum()

    return grad_check(fn, [d_hr, k3, k5], h=_H)


def check_deform_conv():
    torch.manual_seed(4)
    feat = torch.rand(1, 4, 8, 8, dtype=torch.float64, requires_grad=True)
    # offsets bounded away from integers: bilinear interp has kinks there
    offsets = (0.15 + 0.3 * torch.rand(1, 18, 8, 8, dtype=torch.float64)).requires_grad_()
    modulation = (0.2 + 0.6 * torch.rand(1, 9, 8, 8, dtype=torch.float64)).requires_grad_()
    weights = torch.randn(1, 9, 4, 4, dtype=torch.float64, requires_grad=True)
    proj = torch.randn(1, 4, 8, 8, dtype=torch.float64)

    def fn():
        return (deform_conv(feat, offsets, modulation, weights) * proj).sum()

    return grad_check(fn, [feat, offsets, modulation, weights], h=_H,
                      max_coords_per_tensor=80)


def check_residual_group():
    torch.manual_seed(5)
    rg = ResidualGroup(4).double()
    x = torch.rand(1, 4, 8, 8, dtype=torch.float64, requires_grad=True)
    proj = torch.randn(1, 4, 8, 8, dtype=torch.float64)

    def fn():
        return (rg(x) * proj).sum()

    inputs = [x] + list(rg.parameters())
    return grad_check(fn, inputs, h=_H, max_coords_per_tensor=60)


def check_doft():
    torch.manual_seed(6)
    doft = Doft(c_feat=4, c_dmap=4, c_code=8, mlp_hidden=8).double()
    with torch.no_grad():  # non-zero offsets, away from bilinear kinks
        doft.offset_head.bias.uniform_(0.15, 0.45)
    dmap = torch.rand(1, 4, 8, 8, dtype=torch.float64)
    code = torch.randn(1, 8, dtype=torch.float64, requires_grad=True)
    f_d = torch.rand(1, 4, 8, 8, dtype=torch.float64, requires_grad=True)
    f_r = torch.rand(1, 4, 8, 8, dtype=torch.float64, requires_grad=True)
    proj = torch.randn(1, 4, 8, 8, dtype=torch.float64)

    def fn():
        new_fd, _ = doft(dmap, code, f_d, f_r)
        return (new_fd * proj).sum()

    inputs = [code, f_d, f_r] + list(doft.parameters())
    return grad_check(fn, inputs, h=_H, max_coords_per_tensor=40)


def check_losses():
    torch.manual_seed(7)
    gt = torch.rand(1, 1, 8, 8, dtype=torch.float64)
    pred = (gt + 0.2 + 0.3 * torch.rand_like(gt)).requires_grad_()
    mask = torch.rand(1, 1, 8, 8) > 0.3
    d_up = torch.rand(1, 1, 8, 8, dtype=torch.float64)
    d_d = (d_up + 0.1 + 0.2 * torch.rand_like(d_up)).requires_grad_()

    def rec():
        return reconstruction_loss(gt, pred, mask)

    def deg():
        return degradation_loss(d_up, d_d)

    def cont():
        return contrastive_loss(extract_features(d_up), extract_features(d_d),
                                extract_features(pred))

    worst = grad_check(rec, [pred], h=_H)
    worst = max(worst, grad_check(deg, [d_d], h=_H))
    worst = max(worst, grad_check(cont, [d_d, pred], h=_H))
    return worst


def check_end_to_end():
    """Composed model + training objective. The objective stops gradients in
    two places (the prediction entering the re-degradation branch; the encoder
    code and router weights entering the contrastive anchor), so those slots
    are frozen to captured constants here: the finite-difference oracle then
    measures exactly the function autograd differentiates."""
    torch.manual_seed(8)
    from .fusion import DepthSRNet
    from .losses import total_loss
    cfg = ModelConfig(c_feat=4, c_dmap=4, c_code=8, t_doft=2, s=2)
    model = DepthSRNet(cfg).double()
    with torch.no_grad():
        # stable routing margins and non-degenerate head
        model.router.head.bias.copy_(torch.tensor([0.8, 0.4, -0.2, -0.6]).double())
        model.head_outer.weight.normal_(0, 0.05)
        model.doft.offset_head.bias.uniform_(0.15, 0.45)
    spec = DegradationSpec(scale_factor=2)
    lr, rgb, gt, mask = make_batch([0], 8, 2, spec, dtype=torch.float64)
    with torch.no_grad():
        ref = model(lr, rgb)
    d_hr_c = ref["d_hr"].clone()
    code_c = ref["code"].clone()
    weights_c = ref["weights"].clone()

    def reblur(sets):
        return torch.stack([filter_and_sum(k, d_hr_c[b, 0])
                            for b, k in enumerate(sets)]).unsqueeze(1)

    def fn():
        out = model(lr, rgb)
        d_d = reblur(model.kernel_sets(out["code"], out["indices"],
                                       out["weights"]))
        d_d_c = reblur(model.kernel_sets(code_c, out["indices"], weights_c))
        l_rec = reconstruction_loss(gt, out["d_hr"], mask)
        l_deg = degradation_loss(out["d_up"], d_d)
        l_cont = contrastive_loss(extract_features(out["d_up"]),
                                  extract_features(d_d_c),
                                  extract_features(d_hr_c))
        return total_loss(l_rec, l_deg, l_cont)

    return grad_check(fn, list(model.parameters()), h=_H,
                      max_coords_per_tensor=20)


SUITE = [
    ("encode_degradation", check_encoder),
    ("route", check_router),
    ("generate_kernel", check_generators),
    ("filter_and_sum", check_filter_and_sum),
    ("deform_conv", check_deform_conv),
    ("residual_group", check_residual_group),
    ("doft_step", check_doft),
    ("losses", check_losses),
    ("end_to_end_total_loss", check_end_to_end),
]


def run_suite(verbose: bool = False):
    """Run every check; returns list of (name, max_rel_err, passed)."""
    results = []
    for name, fn in SUITE:
        err = fn()
        ok = err < TOLERANCE
        results.append((name, err, ok))
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'} {name}: max rel err {err:.2e}")
    return results
