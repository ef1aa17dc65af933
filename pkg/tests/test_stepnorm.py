"""Per-time-step batch norm: equivalence at one step, per-step statistics."""

import pytest
import torch

from rfcnet.errors import ShapeMismatch
from rfcnet.layers import StepBatchNorm2d, make_norm, set_time_step


def test_make_norm_dispatch():
    assert isinstance(make_norm(4, steps=1), torch.nn.BatchNorm2d)
    assert isinstance(make_norm(4, steps=5), StepBatchNorm2d)
    assert isinstance(make_norm(4, dims=3, steps=1), torch.nn.BatchNorm3d)
    with pytest.raises(ShapeMismatch):
        make_norm(4, dims=3, steps=5)


def test_matches_batchnorm_when_single_step():
    torch.manual_seed(0)
    step_norm = StepBatchNorm2d(4, steps=1)
    plain = torch.nn.BatchNorm2d(4)
    x = torch.randn(3, 4, 6, 6)
    for _ in range(3):  # train both, compare running stats afterwards
        a = step_norm(x)
        b = plain(x)
        assert torch.allclose(a, b, atol=1e-6)
    assert torch.allclose(step_norm.running_mean[0], plain.running_mean, atol=1e-6)
    assert torch.allclose(step_norm.running_var[0], plain.running_var, atol=1e-6)
    step_norm.eval()
    plain.eval()
    assert torch.allclose(step_norm(x), plain(x), atol=1e-6)


def test_each_step_tracks_its_own_statistics():
    norm = StepBatchNorm2d(2, steps=3)
    norm.train()
    shifted = [torch.randn(8, 2, 4, 4) + offset for offset in (0.0, 5.0, -5.0)]
    for _ in range(60):
        for t, x in enumerate(shifted):
            norm.current_step = t
            norm(x)
    means = norm.running_mean.mean(dim=1)
    assert means[0] == pytest.approx(0.0, abs=0.3)
    assert means[1] == pytest.approx(5.0, abs=0.3)
    assert means[2] == pytest.approx(-5.0, abs=0.3)
    assert norm.num_batches_tracked.tolist() == [60, 60, 60]

    # eval normalizes each step by its own statistics
    norm.eval()
    outs = []
    for t, x in enumerate(shifted):
        norm.current_step = t
        outs.append(norm(x).mean().item())
    for value in outs:
        assert value == pytest.approx(0.0, abs=0.3)


def test_steps_beyond_range_clamp_to_last():
    norm = StepBatchNorm2d(2, steps=2).eval()
    x = torch.randn(1, 2, 4, 4)
    norm.current_step = 1
    expected = norm(x)
    norm.current_step = 99
    assert torch.equal(norm(x), expected)


def test_set_time_step_reaches_nested_norms():
    net = torch.nn.Sequential(StepBatchNorm2d(2, steps=4),
                              torch.nn.Sequential(StepBatchNorm2d(2, steps=4)))
    set_time_step(net, 3)
    assert net[0].current_step == 3
    assert net[1][0].current_step == 3


def test_affine_parameters_are_shared_across_steps():
    norm = StepBatchNorm2d(4, steps=5)
    params = dict(norm.named_parameters())
    assert set(params) == {"weight", "bias"}
    assert params["weight"].shape == (4,)


def test_recurrent_net_eval_matches_train_statistics():
    """The regression that motivated per-step statistics: after training on a
    fixed batch, eval-mode outputs must track train-mode ones closely."""
    from rfcnet.models import ModelSpec, build, forward_sequence
    from rfcnet.training import sequence_loss
    torch.manual_seed(0)
    spec = ModelSpec("t", "rfcd", layers_per_db=1, growth=3,
                     first_conv_features=4, fm_kind="ff",
                     hidden_kernel_sizes=(3, 3, 3, 3, 3))
    net = build(spec, seed=0)
    frames = torch.rand(2, 5, 1, 32, 32)
    labels = torch.randint(0, 14, (2, 32, 32))
    opt = torch.optim.Adam(net.parameters(), lr=1e-3)
    for _ in range(30):
        net.train()
        opt.zero_grad()
        sequence_loss(forward_sequence(net, frames), labels).backward()
        opt.step()
    # freeze parameters and let the per-step statistics settle on the final
    # distribution; eval-mode outputs must then track train-mode ones
    net.train()
    with torch.no_grad():
        for _ in range(60):
            forward_sequence(net, frames)
        train_scores = forward_sequence(net, frames)
    net.eval()
    with torch.no_grad():
        eval_scores = forward_sequence(net, frames)
    gap = (train_scores - eval_scores).abs().max().item()
    scale = train_scores.abs().max().item()
    assert gap <= 0.05 * scale
