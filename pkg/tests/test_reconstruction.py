import numpy as np
import pytest
import torch
import torch.nn.functional as F

from vidue.blocks import backward_warp
from vidue.config import model_preset
from vidue.model import build_model
from vidue.motion import MotionBundle
from vidue.reconstruction import (
    InterRefiner,
    IntraRefiner,
    ReconEncoder,
    ReconstructionNet,
    TimestepRefine,
    progressive_step,
    refine_inter,
    refine_intra,
)
from vidue.training import mae_loss


def zero_bundle(b, t, s, h, w):
    return MotionBundle(
        o_start=torch.zeros(b, t, 2, h, w),
        o_end=torch.zeros(b, t, 2, h, w),
        m=torch.zeros(b, t, 1, h, w),
        n=torch.zeros(b, s * t, 2, h, w),
    )


def random_bundle(b, t, s, h, w, scale=1.0):
    o1 = torch.randn(b, t, 2, h, w) * scale
    o2 = torch.randn(b, t, 2, h, w) * scale
    from vidue.motion import intra_motion_map

    return MotionBundle(
        o_start=o1, o_end=o2, m=intra_motion_map(o1, o2),
        n=torch.randn(b, s * t, 2, h, w) * scale,
    )


class TestEncoder:
    def test_paper_widths_and_scales(self):
        enc = ReconEncoder(window=4)
        feats = enc(torch.rand(1, 12, 64, 64))
        shapes = [tuple(f.shape) for f in feats]
        assert shapes == [
            (1, 64, 64, 64),
            (1, 128, 32, 32),
            (1, 256, 16, 16),
            (1, 256, 8, 8),
        ]

    def test_block_counts(self):
        enc = ReconEncoder(window=4)
        assert len(enc.stage1[2]) == 3
        for stage in (enc.stage2, enc.stage3, enc.stage4):
            assert len(stage[2]) == 6

    def test_reduced_width_ledger(self):
        enc = ReconEncoder(window=2, widths=(8, 16, 32, 32))
        feats = enc(torch.rand(2, 6, 32, 32))
        assert [f.shape[1] for f in feats] == [8, 16, 32, 32]
        assert [f.shape[-1] for f in feats] == [32, 16, 8, 4]

    def test_indivisible_rejected(self):
        enc = ReconEncoder(window=2, widths=(8, 16, 32, 32))
        with pytest.raises(ValueError):
            enc(torch.rand(1, 6, 20, 20))


class TestIntraRefiner:
    def test_zero_conv_zero_maps_give_half(self):
        ref = IntraRefiner(window=2, channels=4)
        torch.nn.init.zeros_(ref.conv.weight)
        torch.nn.init.zeros_(ref.conv.bias)
        out = refine_intra(torch.zeros(1, 2, 8, 8), torch.rand(1, 4, 8, 8), ref)
        torch.testing.assert_close(out, torch.full_like(out, 0.5))

    def test_zero_conv_large_maps_saturate(self):
        ref = IntraRefiner(window=2, channels=4)
        torch.nn.init.zeros_(ref.conv.weight)
        torch.nn.init.zeros_(ref.conv.bias)
        out = refine_intra(torch.full((1, 2, 8, 8), 50.0), torch.rand(1, 4, 8, 8), ref)
        assert (out > 0.999).all()

    def test_matches_literal_composition(self):
        torch.manual_seed(0)
        ref = IntraRefiner(window=3, channels=5)
        m = torch.randn(2, 3, 6, 6)
        g = torch.randn(2, 5, 6, 6)
        expected = torch.sigmoid(ref.conv(torch.cat([m, g], dim=1)) + m)
        torch.testing.assert_close(ref(m, g), expected)

    def test_output_in_unit_interval(self):
        torch.manual_seed(1)
        ref = IntraRefiner(window=2, channels=3)
        out = ref(torch.randn(1, 2, 8, 8) * 3, torch.randn(1, 3, 8, 8))
        assert (out > 0).all() and (out < 1).all()

    def test_size_mismatch(self):
        ref = IntraRefiner(window=2, channels=3)
        with pytest.raises(ValueError):
            ref(torch.zeros(1, 2, 8, 8), torch.zeros(1, 3, 4, 4))


def identity_conv_(conv):
    torch.nn.init.zeros_(conv.weight)
    torch.nn.init.zeros_(conv.bias)
    k = conv.kernel_size[0] // 2
    with torch.no_grad():
        for c in range(conv.out_channels):
            conv.weight[c, c, k, k] = 1.0


class TestInterRefiner:
    def test_closed_gate_with_identity_conv_passes_flows_through(self):
        torch.manual_seed(2)
        ref = InterRefiner(embed_dim=4, window=2, shutter=2)
        identity_conv_(ref.conv)
        n = torch.randn(1, 8, 8, 8)
        gate = torch.zeros(1, 2, 8, 8)
        out = refine_inter(n, gate, torch.randn(1, 4), ref)
        torch.testing.assert_close(out, n)

    def test_open_gate_uses_adapted_flows_only(self):
        torch.manual_seed(3)
        ref = InterRefiner(embed_dim=4, window=2, shutter=2)
        identity_conv_(ref.conv)
        n = torch.randn(1, 8, 8, 8)
        u = torch.randn(1, 4)
        gate = torch.ones(1, 2, 8, 8)
        out = ref(n, gate, u)
        torch.testing.assert_close(out, ref.adapt(n, u))

    def test_matches_literal_blend(self):
        torch.manual_seed(4)
        ref = InterRefiner(embed_dim=4, window=2, shutter=3)
        n = torch.randn(2, 12, 6, 6)
        u = torch.randn(2, 4)
        gate = torch.rand(2, 2, 6, 6)
        est = ref.adapt(n, u).view(2, 6, 2, 6, 6)
        gk = gate.repeat_interleave(3, dim=1).unsqueeze(2)
        expected = ref.conv(
            (est * gk + n.view(2, 6, 2, 6, 6) * (1 - gk)).reshape(2, 12, 6, 6)
        )
        torch.testing.assert_close(ref(n, gate, u), expected)

    def test_gate_broadcast_frame_to_children(self):
        # Frame f's gate must cover timestamps f*shutter .. f*shutter+S-1.
        torch.manual_seed(5)
        ref = InterRefiner(embed_dim=4, window=2, shutter=2)
        identity_conv_(ref.conv)
        n = torch.randn(1, 8, 4, 4)
        u = torch.randn(1, 4)
        gate = torch.zeros(1, 2, 4, 4)
        gate[:, 0] = 1.0  # only frame 0 re-estimated
        out = ref(n, gate, u).view(1, 4, 2, 4, 4)
        est = ref.adapt(n, u).view(1, 4, 2, 4, 4)
        raw = n.view(1, 4, 2, 4, 4)
        torch.testing.assert_close(out[:, 0:2], est[:, 0:2])
        torch.testing.assert_close(out[:, 2:4], raw[:, 2:4])

    def test_shape_mismatch(self):
        ref = InterRefiner(embed_dim=4, window=2, shutter=2)
        with pytest.raises(ValueError):
            ref(torch.zeros(1, 6, 4, 4), torch.zeros(1, 2, 4, 4), torch.zeros(1, 4))
        with pytest.raises(ValueError):
            ref(torch.zeros(1, 8, 4, 4), torch.zeros(1, 3, 4, 4), torch.zeros(1, 4))


class TestProgressiveStep:
    def test_zero_back_conv_and_zero_prev_give_zero(self):
        ref = TimestepRefine(channels=4, width=8)
        torch.nn.init.zeros_(ref.back.weight)
        torch.nn.init.zeros_(ref.back.bias)
        g = torch.randn(1, 4, 8, 8)
        flows = torch.randn(1, 6, 2, 8, 8)
        out = progressive_step(g, flows, None, ref)
        torch.testing.assert_close(out, torch.zeros(1, 18, 8, 8))

    def test_zero_flows_reduce_to_refine_plus_upsample(self):
        torch.manual_seed(6)
        ref = TimestepRefine(channels=3, width=8)
        g = torch.randn(2, 3, 8, 8)
        k = 4
        prev = torch.randn(2, k * 3, 4, 4)
        flows = torch.zeros(2, k, 2, 8, 8)
        out = progressive_step(g, flows, prev, ref)
        single = ref(g)
        expected = single.repeat(1, k, 1, 1) + F.interpolate(
            prev, size=(8, 8), mode="bilinear", align_corners=False
        )
        torch.testing.assert_close(out, expected)

    def test_matches_per_timestamp_loop_oracle(self):
        # S=2, T=1 micro-instance evaluated against an explicit loop.
        torch.manual_seed(7)
        ref = TimestepRefine(channels=4, width=8)
        g = torch.randn(1, 4, 8, 8)
        flows = torch.randn(1, 2, 2, 8, 8)
        prev = torch.randn(1, 6, 4, 4)
        out = progressive_step(g, flows, prev, ref)
        pieces = [ref(backward_warp(g, flows[:, k])) for k in range(2)]
        expected = torch.cat(pieces, dim=1) + F.interpolate(
            prev, size=(8, 8), mode="bilinear", align_corners=False
        )
        torch.testing.assert_close(out, expected)

    def test_channel_contract_enforced(self):
        ref = TimestepRefine(channels=4, width=8)
        g = torch.randn(1, 4, 8, 8)
        flows = torch.randn(1, 2, 2, 8, 8)
        with pytest.raises(ValueError):
            progressive_step(g, flows, torch.randn(1, 9, 4, 4), ref)


class TestReconstructionNet:
    def make_net(self, **kw):
        args = dict(
            window=2, shutter=2, embed_dim=8, widths=(4, 8, 8, 8), refine_width=4
        )
        args.update(kw)
        return ReconstructionNet(**args)

    def test_output_shape_contract(self):
        for s, t in ((8, 4), (16, 4)):
            net = ReconstructionNet(
                window=t, shutter=s, embed_dim=8, widths=(4, 8, 8, 8), refine_width=4
            )
            y = torch.rand(1, t * 3, 16, 16)
            u = torch.randn(1, 8)
            bundle = zero_bundle(1, t, s, 16, 16)
            out = net(y, u, bundle)
            assert out.shape == (1, s * t, 3, 16, 16)

    def test_zero_heads_give_zero_output(self):
        net = self.make_net()
        for stage in (net.stage1, net.stage2, net.stage3):
            torch.nn.init.zeros_(stage.refine.back.weight)
            torch.nn.init.zeros_(stage.refine.back.bias)
        torch.nn.init.zeros_(net.head.weight)
        torch.nn.init.zeros_(net.head.bias)
        y = torch.rand(1, 6, 16, 16)
        out = net(y, torch.randn(1, 8), random_bundle(1, 2, 2, 16, 16))
        torch.testing.assert_close(out, torch.zeros_like(out))

    def test_one_adamax_step_decreases_mae(self):
        torch.manual_seed(8)
        net = self.make_net()
        y = torch.rand(2, 6, 16, 16)
        u = torch.randn(2, 8)
        bundle = random_bundle(2, 2, 2, 16, 16, scale=0.5)
        target = torch.rand(2, 4, 3, 16, 16)
        opt = torch.optim.Adamax(net.parameters(), lr=1e-4)
        loss0 = mae_loss(net(y, u, bundle), target)
        opt.zero_grad()
        loss0.backward()
        opt.step()
        with torch.no_grad():
            loss1 = mae_loss(net(y, u, bundle), target)
        assert float(loss1) < float(loss0)

    def test_motion_maps_feed_the_decoder(self):
        torch.manual_seed(9)
        net = self.make_net().eval()
        y = torch.rand(1, 6, 16, 16)
        u = torch.randn(1, 8)
        with torch.no_grad():
            out0 = net(y, u, zero_bundle(1, 2, 2, 16, 16))
            out1 = net(y, u, random_bundle(1, 2, 2, 16, 16))
        assert not torch.allclose(out0, out1)


class TestAblationVariants:
    def spec_for(self, **kw):
        return model_preset(
            "micro", recon_widths=(4, 8, 8, 8), intra_width=2, inter_width=2,
            refine_width=4, embed_dim=16, extractor_width=4, **kw
        )

    def param_names(self, model):
        return {n for n, _ in model.named_parameters()}

    def test_all_variants_run(self):
        y = torch.rand(1, 2, 3, 16, 16)
        for kw in (
            dict(),
            dict(adapt_mode="se"),
            dict(adapt_mode="plain", exposure_mode="agnostic"),
            dict(use_intra=False),
            dict(use_inter=False),
            dict(use_refine=False),
            dict(use_intra=False, use_inter=False, use_refine=False,
                 adapt_mode="plain", exposure_mode="agnostic"),
        ):
            model = build_model(self.spec_for(**kw))
            out = model(y)
            assert out.shape == (1, 8, 3, 16, 16)
            assert torch.isfinite(out).all()

    def test_flags_change_only_named_component(self):
        base = self.param_names(build_model(self.spec_for()))
        no_refine = self.param_names(build_model(self.spec_for(use_refine=False)))
        gone = {n for n in base - no_refine}
        assert gone and all("refiner" in n for n in gone)
        assert no_refine <= base

        no_intra = self.param_names(build_model(self.spec_for(use_intra=False)))
        assert all("analyzer.intra" in n or "analyzer.inter" in n for n in base - no_intra)

        no_inter = self.param_names(build_model(self.spec_for(use_inter=False)))
        assert all("analyzer.inter" in n for n in base - no_inter)

    def test_se_variant_swaps_only_adapters(self):
        base = self.param_names(build_model(self.spec_for()))
        se = self.param_names(build_model(self.spec_for(adapt_mode="se")))
        changed = base.symmetric_difference(se)
        assert changed and all(".adapt." in n or ".econv." in n for n in changed)


class TestEndToEndGradients:
    def test_micro_model_finite_difference_probe(self):
        # 8x8, S=2, T=2 micro model at double precision: analytic gradients of
        # the MAE loss match central differences on a 10-parameter probe.
        torch.manual_seed(10)
        spec = model_preset(
            "micro", shutter=2, window=2, embed_dim=8, extractor_width=4,
            recon_widths=(4, 4, 8, 8), intra_width=2, inter_width=2, refine_width=4,
        )
        model = build_model(spec).double().eval()
        y = torch.rand(1, 2, 3, 8, 8, dtype=torch.double)
        target = torch.rand(1, 4, 3, 8, 8, dtype=torch.double)

        def loss_fn():
            return mae_loss(model(y), target)

        loss = loss_fn()
        loss.backward()
        rng = np.random.default_rng(0)
        # probe the trainable stages (the extractor is frozen during joint
        # training) and skip entries whose gradient is below FD resolution
        named = [
            (n, p) for n, p in model.named_parameters()
            if not n.startswith("extractor.")
            and p.grad is not None
            and p.grad.abs().max() > 1e-6
        ]
        picks = rng.choice(len(named), size=10, replace=False)
        for idx in picks:
            name, p = named[int(idx)]
            flat = p.detach().view(-1)
            gflat = p.grad.view(-1)
            j = int(p.grad.abs().view(-1).argmax())
            eps = 1e-6
            orig = flat[j].item()
            with torch.no_grad():
                flat[j] = orig + eps
                hi = float(loss_fn())
                flat[j] = orig - eps
                lo = float(loss_fn())
                flat[j] = orig
            fd = (hi - lo) / (2 * eps)
            analytic = float(gflat[j])
            denom = max(abs(fd), abs(analytic), 1e-8)
            assert abs(fd - analytic) / denom < 1e-3, (name, fd, analytic)
