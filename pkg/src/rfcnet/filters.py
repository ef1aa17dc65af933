"""Temporal filter modules and the recurrent dense block.

A filter module replaces the crude per-frame feature map produced by a Dense
Unit with a temporally filtered one of identical shape, using a ConvLSTM as
the recurrent core. Three variants with increasing capacity:

* "ff": pre-activation (norm, ReLU) followed by a single ConvLSTM whose cell
  width equals the unfiltered channel count.
* "res": the "ff" branch plus a residual skip from the raw unfiltered input,
  keeping a direct information and gradient path.
* "ed": an encoder-decoder pair; the ConvLSTM cell width is a multiple
  alpha of the channel count and a Dense Unit decodes back to the original
  width.

A stateless "identity" kind exists purely for reduction tests (it turns a
recurrent block back into a feedforward one) and is rejected by the
training entry points.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .errors import BadAlpha, ShapeMismatch, StateCountMismatch
from .layers import ConvLSTMCell, ConvLSTMState, DenseUnit, make_norm

FILTER_KINDS = ("ff", "res", "ed", "identity")


def round_half_up(x: float) -> int:
    """round(0.5) == 1; needed for fractional cell-width multipliers."""
    import math
    return int(math.floor(x + 0.5))


class FilterModuleFF(nn.Module):
    """Norm -> ReLU -> ConvLSTM with cell width equal to the input width."""

    kind = "ff"

    def __init__(self, channels: int, hidden_kernel: int = 3, input_kernel: int = 3,
                 norm_steps: int = 1):
        super().__init__()
        self.channels = channels
        self.norm = make_norm(channels, steps=norm_steps)
        self.relu = nn.ReLU(inplace=False)
        self.cell = ConvLSTMCell(channels, channels, input_kernel=input_kernel,
                                 hidden_kernel=hidden_kernel)

    def forward(self, x: torch.Tensor,
                state: ConvLSTMState | None = None) -> tuple[torch.Tensor, ConvLSTMState]:
        if x.shape[1] != self.channels:
            raise ShapeMismatch(f"filter expected {self.channels} channels, got {x.shape[1]}")
        return self.cell(self.relu(self.norm(x)), state)


class FilterModuleRes(nn.Module):
    """Residual variant: output = input + ff-branch(input).

    The skip starts at the raw unfiltered features (before pre-activation),
    so zeroing the recurrent branch reduces the filter to the identity.
    """

    kind = "res"

    def __init__(self, channels: int, hidden_kernel: int = 3, input_kernel: int = 3,
                 norm_steps: int = 1):
        super().__init__()
        self.channels = channels
        self.branch = FilterModuleFF(channels, hidden_kernel=hidden_kernel,
                                     input_kernel=input_kernel, norm_steps=norm_steps)

    def forward(self, x: torch.Tensor,
                state: ConvLSTMState | None = None) -> tuple[torch.Tensor, ConvLSTMState]:
        filtered, new_state = self.branch(x, state)
        return x + filtered, new_state


class FilterModuleED(nn.Module):
    """Encoder-decoder variant: the cell width is alpha * channels and a
    Dense Unit decodes the hidden state back to the input width."""

    kind = "ed"

    def __init__(self, channels: int, alpha: float, hidden_kernel: int = 3,
                 input_kernel: int = 3, norm_steps: int = 1):
        super().__init__()
        hidden = round_half_up(alpha * channels)
        if hidden < 1:
            raise BadAlpha(f"alpha={alpha} with {channels} channels gives "
                           f"{hidden} cell channels")
        self.channels = channels
        self.hidden_channels = hidden
        self.alpha = alpha
        self.norm = make_norm(channels, steps=norm_steps)
        self.relu = nn.ReLU(inplace=False)
        self.cell = ConvLSTMCell(channels, hidden, input_kernel=input_kernel,
                                 hidden_kernel=hidden_kernel)
        self.decoder = DenseUnit(hidden, channels, norm_steps=norm_steps)

    def forward(self, x: torch.Tensor,
                state: ConvLSTMState | None = None) -> tuple[torch.Tensor, ConvLSTMState]:
        if x.shape[1] != self.channels:
            raise ShapeMismatch(f"filter expected {self.channels} channels, got {x.shape[1]}")
        h, new_state = self.cell(self.relu(self.norm(x)), state)
        return self.decoder(h), new_state


class IdentityFilter(nn.Module):
    """Stateless pass-through; test-only reduction hook, refused in training."""

    kind = "identity"

    def __init__(self, channels: int, **_unused):
        super().__init__()
        self.channels = channels

    def forward(self, x: torch.Tensor, state=None):
        return x, None


def make_filter_module(kind: str, channels: int, hidden_kernel: int = 3,
                       alpha: float | None = None, input_kernel: int = 3,
                       norm_steps: int = 1) -> nn.Module:
    if kind == "ff":
        return FilterModuleFF(channels, hidden_kernel, input_kernel, norm_steps)
    if kind == "res":
        return FilterModuleRes(channels, hidden_kernel, input_kernel, norm_steps)
    if kind == "ed":
        if alpha is None:
            raise BadAlpha("encoder-decoder filter needs an alpha multiplier")
        return FilterModuleED(channels, alpha, hidden_kernel, input_kernel, norm_steps)
    if kind == "identity":
        return IdentityFilter(channels)
    raise ValueError(f"unknown filter kind {kind!r}, expected one of {FILTER_KINDS}")


class RecurrentDenseBlock(nn.Module):
    """Dense block with one filter module after each Dense Unit.

    The filtered feature (not the raw one) joins the feature stack, so every
    later unit consumes already-filtered features and the filtering is
    hierarchical. Each filter only ever sees the *growth* new channels of
    its unit, never the whole stack.
    """

    def __init__(self, in_channels: int, n_layers: int, growth: int, fm_kind: str,
                 hidden_kernel: int = 3, alpha: float | None = None,
                 dropout: float = 0.0, norm_steps: int = 1):
        super().__init__()
        self.in_channels = in_channels
        self.n_layers = n_layers
        self.growth = growth
        self.fm_kind = fm_kind
        self.units = nn.ModuleList([
            DenseUnit(in_channels + l * growth, growth, dropout=dropout,
                      norm_steps=norm_steps)
            for l in range(n_layers)
        ])
        self.filters = nn.ModuleList([
            make_filter_module(fm_kind, growth, hidden_kernel=hidden_kernel,
                               alpha=alpha, norm_steps=norm_steps)
            for _ in range(n_layers)
        ])

    @property
    def out_channels(self) -> int:
        return self.in_channels + self.n_layers * self.growth

    def forward(self, x: torch.Tensor, states: list | None = None
                ) -> tuple[torch.Tensor, torch.Tensor, list]:
        if x.shape[1] != self.in_channels:
            raise ShapeMismatch(f"RecurrentDenseBlock expected {self.in_channels} "
                                f"channels, got {x.shape[1]}")
        if states is None:
            states = [None] * self.n_layers
        if len(states) != self.n_layers:
            raise StateCountMismatch(f"{len(states)} states for {self.n_layers} units")
        stack = x
        new = []
        new_states = []
        for unit, fm, state in zip(self.units, self.filters, states):
            raw = unit(stack)
            filtered, new_state = fm(raw, state)
            new.append(filtered)
            new_states.append(new_state)
            stack = torch.cat([stack, filtered], dim=1)
        return stack, torch.cat(new, dim=1), new_states
