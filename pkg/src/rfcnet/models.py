"""Model zoo: single-frame and temporal segmentation networks.

Families:

* fcd    - single-frame fully convolutional DenseNet (depth d: d dense blocks
           down, a bottleneck block, d blocks up, skip connections, 1x1
           classifier). Evaluated on the last frame of a clip.
* rfcd   - the same topology with every dense block recurrent: a filter
           module after each Dense Unit, per-block hidden kernel sizes.
* rm_gf  - non-hierarchical recurrent baseline: the fcd_s body with one
           encoder-decoder filter applied to the last dense block's new
           features just before the classifier.
* tm_3d  - non-recurrent spatio-temporal baseline: every 3x3 conv becomes
           3x3x3 with temporal same padding; pooling/upsampling are spatial
           only and the last frame's scores are used.
* tm_st  - non-recurrent baseline consuming the whole clip stacked along the
           channel axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .errors import BadSpec, ShapeMismatch, WrongSequenceLength
from .filters import RecurrentDenseBlock, make_filter_module, round_half_up
from .layers import (ConvLSTMCell, DenseBlock, StepBatchNorm2d, TransitionDown,
                     TransitionUp)

FAMILIES = ("fcd", "rfcd", "rm_gf", "tm_3d", "tm_st")
TEMPORAL_FAMILIES = ("rfcd", "rm_gf", "tm_3d", "tm_st")

DEFAULT_HIDDEN_KERNELS = (9, 5, 3, 5, 9)


@dataclass(frozen=True)
class ModelSpec:
    """Declarative architecture description; build() turns it into a module."""

    name: str
    family: str
    depth: int = 2
    layers_per_db: int = 7
    growth: int = 8
    first_conv_features: int = 48
    fm_kind: str | None = None
    alpha_ed: float | None = None
    hidden_kernel_sizes: tuple[int, ...] | None = None
    gf_alpha: float = 0.625
    gf_hidden_kernel: int = 9
    n_classes: int = 14
    sequence_length: int = 5
    in_channels: int = 1
    dropout: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise BadSpec(f"unknown family {self.family!r}")
        n_blocks = 2 * self.depth + 1
        if self.family == "rfcd":
            if self.fm_kind not in ("ff", "res", "ed", "identity"):
                raise BadSpec(f"rfcd needs fm_kind ff|res|ed, got {self.fm_kind!r}")
            if self.fm_kind == "ed" and self.alpha_ed is None:
                raise BadSpec("fm_kind 'ed' needs alpha_ed")
            if self.hidden_kernel_sizes is not None:
                object.__setattr__(self, "hidden_kernel_sizes",
                                   tuple(self.hidden_kernel_sizes))
            kernels = self.hidden_kernel_sizes
            if kernels is None:
                if self.depth != 2:
                    raise BadSpec("hidden_kernel_sizes required when depth != 2")
                object.__setattr__(self, "hidden_kernel_sizes", DEFAULT_HIDDEN_KERNELS)
            elif len(kernels) != n_blocks:
                raise BadSpec(
                    f"hidden_kernel_sizes has {len(kernels)} entries, "
                    f"depth {self.depth} needs {n_blocks}")
        else:
            if self.fm_kind is not None or self.alpha_ed is not None:
                raise BadSpec(f"fm fields are only valid for rfcd, not {self.family}")
            if self.hidden_kernel_sizes is not None:
                raise BadSpec("hidden_kernel_sizes is only valid for rfcd")

    @property
    def is_temporal(self) -> bool:
        return self.family in TEMPORAL_FAMILIES


def stack_channel_plan(spec: ModelSpec) -> dict:
    """Channel bookkeeping for the assembly (and for tests to cross-check)."""
    growth_total = spec.layers_per_db * spec.growth
    skips = []
    c = spec.first_conv_features
    for _ in range(spec.depth):
        c = c + growth_total
        skips.append(c)
    bottleneck_in = skips[-1]
    up_ins = []
    for i in range(spec.depth):
        up_ins.append(skips[spec.depth - 1 - i] + growth_total)
    classifier_in = up_ins[-1] + growth_total
    return {
        "skips": skips,
        "bottleneck_in": bottleneck_in,
        "up_ins": up_ins,
        "classifier_in": classifier_in,
        "new_per_block": growth_total,
    }


class SegmentationNet(nn.Module):
    """2-D assembly shared by fcd, rfcd, rm_gf and tm_st.

    step() carries explicit recurrent state (None for the feedforward
    families); forward() is single-shot and only valid for those.
    """

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        self.recurrent = spec.family == "rfcd"
        in_channels = spec.in_channels
        if spec.family == "tm_st":
            in_channels = spec.in_channels * spec.sequence_length
        plan = stack_channel_plan(spec)
        self.plan = plan
        # Recurrent families push every frame through the body, so all norms
        # track per-step statistics; single-pass families keep plain ones.
        norm_steps = spec.sequence_length if spec.family in ("rfcd", "rm_gf") else 1

        self.first_conv = nn.Conv2d(in_channels, spec.first_conv_features, 3, padding=1)

        def make_block(block_index: int, c_in: int):
            if self.recurrent:
                return RecurrentDenseBlock(
                    c_in, spec.layers_per_db, spec.growth, spec.fm_kind,
                    hidden_kernel=spec.hidden_kernel_sizes[block_index],
                    alpha=spec.alpha_ed, dropout=spec.dropout,
                    norm_steps=norm_steps)
            return DenseBlock(c_in, spec.layers_per_db, spec.growth,
                              dropout=spec.dropout, norm_steps=norm_steps)

        c = spec.first_conv_features
        down, trans_down = [], []
        for i in range(spec.depth):
            down.append(make_block(i, c))
            c = plan["skips"][i]
            trans_down.append(TransitionDown(c, dropout=spec.dropout,
                                             norm_steps=norm_steps))
        self.down_blocks = nn.ModuleList(down)
        self.trans_down = nn.ModuleList(trans_down)

        self.bottleneck = make_block(spec.depth, plan["bottleneck_in"])

        new = plan["new_per_block"]
        ups, up_blocks = [], []
        for i in range(spec.depth):
            ups.append(TransitionUp(new))
            up_blocks.append(make_block(spec.depth + 1 + i, plan["up_ins"][i]))
        self.trans_up = nn.ModuleList(ups)
        self.up_blocks = nn.ModuleList(up_blocks)

        if spec.family == "rm_gf":
            self.global_filter = make_filter_module(
                "ed", new, hidden_kernel=spec.gf_hidden_kernel, alpha=spec.gf_alpha,
                norm_steps=norm_steps)
        else:
            self.global_filter = None

        self.classifier = nn.Conv2d(plan["classifier_in"], spec.n_classes, 1)
        self._step_norms = [m for m in self.modules()
                            if isinstance(m, StepBatchNorm2d)]

    def _run_block(self, block, x, state):
        if self.recurrent:
            stack, new, state = block(x, state)
        else:
            stack, new = block(x)
        return stack, new, state

    def step(self, x: torch.Tensor, state=None):
        """One frame through the network; returns (scores, new state)."""
        if x.shape[-2] % (1 << self.spec.depth) or x.shape[-1] % (1 << self.spec.depth):
            raise ShapeMismatch(
                f"spatial size {tuple(x.shape[-2:])} must be divisible by "
                f"{1 << self.spec.depth}")
        n_blocks = 2 * self.spec.depth + 1
        if state is None:
            state = {"blocks": [None] * n_blocks, "gf": None, "t": 0}
        t = state.get("t", 0)
        for norm in self._step_norms:
            norm.current_step = t
        block_states = state["blocks"]
        new_block_states = []

        out = self.first_conv(x)
        skips = []
        for i, (block, td) in enumerate(zip(self.down_blocks, self.trans_down)):
            stack, _, s = self._run_block(block, out, block_states[i])
            new_block_states.append(s)
            skips.append(stack)
            out = td(stack)

        _, new, s = self._run_block(self.bottleneck, out, block_states[self.spec.depth])
        new_block_states.append(s)

        gf_state = state["gf"]
        block_in = None
        for i, (tu, block) in enumerate(zip(self.trans_up, self.up_blocks)):
            up = tu(new)
            block_in = torch.cat([skips[self.spec.depth - 1 - i], up], dim=1)
            _, new, s = self._run_block(block, block_in,
                                        block_states[self.spec.depth + 1 + i])
            new_block_states.append(s)

        if self.global_filter is not None:
            new, gf_state = self.global_filter(new, gf_state)
        scores = self.classifier(torch.cat([block_in, new], dim=1))
        return scores, {"blocks": new_block_states, "gf": gf_state, "t": t + 1}

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        scores, _ = self.step(x)
        return scores


class SpatioTemporalNet(nn.Module):
    """3-D conv variant of the fcd assembly, consuming a whole clip at once."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        plan = stack_channel_plan(spec)
        self.plan = plan

        self.first_conv = nn.Conv3d(spec.in_channels, spec.first_conv_features,
                                    3, padding=1)
        c = spec.first_conv_features
        down, trans_down = [], []
        for i in range(spec.depth):
            down.append(DenseBlock(c, spec.layers_per_db, spec.growth,
                                   dropout=spec.dropout, dims=3))
            c = plan["skips"][i]
            trans_down.append(TransitionDown(c, dropout=spec.dropout, dims=3))
        self.down_blocks = nn.ModuleList(down)
        self.trans_down = nn.ModuleList(trans_down)
        self.bottleneck = DenseBlock(plan["bottleneck_in"], spec.layers_per_db,
                                     spec.growth, dropout=spec.dropout, dims=3)
        new = plan["new_per_block"]
        self.trans_up = nn.ModuleList(
            [TransitionUp(new, dims=3) for _ in range(spec.depth)])
        self.up_blocks = nn.ModuleList([
            DenseBlock(plan["up_ins"][i], spec.layers_per_db, spec.growth,
                       dropout=spec.dropout, dims=3)
            for i in range(spec.depth)
        ])
        self.classifier = nn.Conv3d(plan["classifier_in"], spec.n_classes, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x: (B, C, T, H, W) -> per-frame scores (B, n_classes, T, H, W)."""
        out = self.first_conv(x)
        skips = []
        for block, td in zip(self.down_blocks, self.trans_down):
            stack, _ = block(out)
            skips.append(stack)
            out = td(stack)
        _, new = self.bottleneck(out)
        block_in = None
        for i, (tu, block) in enumerate(zip(self.trans_up, self.up_blocks)):
            up = tu(new)
            block_in = torch.cat([skips[self.spec.depth - 1 - i], up], dim=1)
            _, new = block(block_in)
        return self.classifier(torch.cat([block_in, new], dim=1))


def _init_weights(net: nn.Module) -> None:
    for m in net.modules():
        if isinstance(m, (nn.Conv2d, nn.Conv3d, nn.ConvTranspose2d, nn.ConvTranspose3d)):
            nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
    # ConvLSTM cells own their init (orthogonal hidden kernels, forget bias 1).
    for m in net.modules():
        if isinstance(m, ConvLSTMCell):
            m.reset_parameters()


def build(spec: ModelSpec, seed: int | None = None) -> nn.Module:
    """Assemble a network; identical (spec, seed) gives identical parameters."""
    if seed is not None:
        torch.manual_seed(seed)
    if spec.family == "tm_3d":
        net = SpatioTemporalNet(spec)
    else:
        net = SegmentationNet(spec)
    _init_weights(net)
    return net


def forward_sequence(net: nn.Module, frames: torch.Tensor) -> torch.Tensor:
    """Run a clip (B, T, C, H, W) and return scores for the last frame.

    Recurrent families consume frames in order from a zero initial state;
    tm_3d and tm_st consume the whole clip at once; fcd sees only the last
    frame (any T >= 1 is accepted for it).
    """
    spec = net.spec
    if frames.dim() != 5:
        raise ShapeMismatch(f"expected (B, T, C, H, W), got {tuple(frames.shape)}")
    t = frames.shape[1]
    if spec.is_temporal and t != spec.sequence_length:
        raise WrongSequenceLength(
            f"{spec.family} expects clips of length {spec.sequence_length}, got {t}")
    if t < 1:
        raise WrongSequenceLength("empty clip")

    if spec.family == "fcd":
        return net(frames[:, -1])
    if spec.family in ("rfcd", "rm_gf"):
        state = None
        scores = None
        for i in range(t):
            scores, state = net.step(frames[:, i], state)
        return scores
    if spec.family == "tm_st":
        b, t, c, h, w = frames.shape
        return net(frames.reshape(b, t * c, h, w))
    if spec.family == "tm_3d":
        scores = net(frames.permute(0, 2, 1, 3, 4))
        return scores[:, :, -1]
    raise BadSpec(f"unknown family {spec.family}")


@dataclass(frozen=True)
class ParamCountReport:
    total: int
    groups: dict[str, int]


def _group_of(name: str) -> str:
    if ".filters." in name or name.startswith("global_filter"):
        return "filter_modules"
    if name.startswith("classifier"):
        return "classifier"
    if name.startswith(("trans_up", "up_blocks")):
        return "upsampling"
    return "feature_extractor"


def count_params(net: nn.Module) -> ParamCountReport:
    """Exact trainable-parameter totals, grouped by architectural role."""
    groups = {"feature_extractor": 0, "filter_modules": 0, "upsampling": 0,
              "classifier": 0}
    total = 0
    for name, p in net.named_parameters():
        groups[_group_of(name)] += p.numel()
        total += p.numel()
    return ParamCountReport(total=total, groups=groups)


def conv_lstm_param_count(c_in: int, c_hidden: int, k_input: int, k_hidden: int) -> int:
    """Closed form for one cell: 4*(C_in*C_h*k_e^2 + C_h^2*k_h^2 + C_h)."""
    return 4 * (c_in * c_hidden * k_input ** 2
                + c_hidden ** 2 * k_hidden ** 2
                + c_hidden)


def rm_gf_hidden_channels(spec: ModelSpec) -> int:
    """Cell width of the global filter (alpha times the filtered width)."""
    return round_half_up(spec.gf_alpha * spec.layers_per_db * spec.growth)


def transfer_shared_weights(dst: nn.Module, src: nn.Module) -> list[str]:
    """Copy every parameter/buffer of *src* whose name also exists in *dst*.

    Initializes the non-recurrent part of a recurrent net from its
    feedforward twin of identical widths (or back). Per-step norm statistics
    are broadcast from single-step ones; in the reverse direction the first
    step's statistics are taken. Returns the copied names.
    """
    dst_state = dst.state_dict()
    copied = []
    with torch.no_grad():
        for name, value in src.state_dict().items():
            if name not in dst_state:
                continue
            target = dst_state[name]
            if target.shape == value.shape:
                target.copy_(value)
            elif target.dim() == value.dim() + 1 and target.shape[1:] == value.shape:
                target.copy_(value.unsqueeze(0).expand_as(target))
            elif value.dim() == target.dim() + 1 and value.shape[1:] == target.shape:
                target.copy_(value[0])
            else:
                raise ShapeMismatch(
                    f"{name}: cannot map {tuple(value.shape)} onto "
                    f"{tuple(target.shape)}")
            copied.append(name)
    return copied
