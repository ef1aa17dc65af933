"""Differentiable building blocks: Dense Units/Blocks, transitions, ConvLSTM.

Dense Units use pre-activation ordering (norm, ReLU, 3x3 conv) and emit a
fixed number of new feature maps from the concatenated feature stack. The
2-D and 3-D variants share one implementation; 3-D is used by the
spatio-temporal baseline with temporal "same" padding and spatial-only
pooling/upsampling.
"""

from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ShapeMismatch

_CONV = {2: nn.Conv2d, 3: nn.Conv3d}
_BN = {2: nn.BatchNorm2d, 3: nn.BatchNorm3d}
_DROPOUT = {2: nn.Dropout2d, 3: nn.Dropout3d}


def _check_channels(x: torch.Tensor, expected: int, who: str) -> None:
    if x.shape[1] != expected:
        raise ShapeMismatch(f"{who} expected {expected} input channels, got {x.shape[1]}")


class StepBatchNorm2d(nn.Module):
    """Batch norm with affine parameters shared across time steps but running
    statistics tracked per step.

    Modules applied recurrently see a different activation distribution at
    every frame; a single running-statistics set is their blend and makes
    eval-mode outputs diverge badly from train-mode ones. Per-step statistics
    restore the match while keeping the parameter count time-independent.
    The active step is set by the owning network before each frame.
    """

    def __init__(self, channels: int, steps: int, eps: float = 1e-5,
                 momentum: float = 0.1):
        super().__init__()
        self.channels = channels
        self.steps = steps
        self.eps = eps
        self.momentum = momentum
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.register_buffer("running_mean", torch.zeros(steps, channels))
        self.register_buffer("running_var", torch.ones(steps, channels))
        self.register_buffer("num_batches_tracked",
                             torch.zeros(steps, dtype=torch.long))
        self.current_step = 0

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_channels(x, self.channels, "StepBatchNorm2d")
        k = min(self.current_step, self.steps - 1)
        if self.training and self.running_mean is not None:
            self.num_batches_tracked[k] += 1
        mean = self.running_mean[k] if self.running_mean is not None else None
        var = self.running_var[k] if self.running_var is not None else None
        return F.batch_norm(x, mean, var, self.weight, self.bias,
                            self.training or mean is None, self.momentum, self.eps)

    def extra_repr(self) -> str:
        return f"{self.channels}, steps={self.steps}"


def make_norm(channels: int, dims: int = 2, steps: int = 1) -> nn.Module:
    """Plain batch norm for single-pass nets, per-step statistics otherwise."""
    if steps > 1:
        if dims != 2:
            raise ShapeMismatch("per-step norm statistics are 2-D only")
        return StepBatchNorm2d(channels, steps)
    return _BN[dims](channels)


def set_time_step(module: nn.Module, t: int) -> None:
    for m in module.modules():
        if isinstance(m, StepBatchNorm2d):
            m.current_step = t


class DenseUnit(nn.Module):
    """Pre-activation unit producing exactly *growth* new channels.

    norm="none" bypasses normalization (test hook; also used as the decoder
    of the encoder-decoder filter where the cell output is already bounded).
    """

    def __init__(self, in_channels: int, growth: int, dropout: float = 0.0,
                 norm: str = "batch", dims: int = 2, norm_steps: int = 1):
        super().__init__()
        if growth <= 0:
            raise ShapeMismatch(f"growth must be positive, got {growth}")
        self.in_channels = in_channels
        self.growth = growth
        self.norm = make_norm(in_channels, dims, norm_steps) if norm == "batch" else None
        self.relu = nn.ReLU(inplace=False)
        self.conv = _CONV[dims](in_channels, growth, kernel_size=3, padding=1)
        self.dropout = _DROPOUT[dims](dropout) if dropout > 0 else None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_channels(x, self.in_channels, "DenseUnit")
        out = x if self.norm is None else self.norm(x)
        out = self.conv(self.relu(out))
        if self.dropout is not None:
            out = self.dropout(out)
        return out


class DenseBlock(nn.Module):
    """L chained Dense Units, each consuming the concatenation of the block
    input and all previously produced features.

    forward returns (stack, new_features): the stack is input plus all new
    features; upsampling transitions consume only the new features.
    """

    def __init__(self, in_channels: int, n_layers: int, growth: int,
                 dropout: float = 0.0, dims: int = 2, norm_steps: int = 1):
        super().__init__()
        self.in_channels = in_channels
        self.n_layers = n_layers
        self.growth = growth
        self.units = nn.ModuleList([
            DenseUnit(in_channels + l * growth, growth, dropout=dropout, dims=dims,
                      norm_steps=norm_steps)
            for l in range(n_layers)
        ])

    @property
    def out_channels(self) -> int:
        return self.in_channels + self.n_layers * self.growth

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        _check_channels(x, self.in_channels, "DenseBlock")
        stack = x
        new = []
        for unit in self.units:
            feature = unit(stack)
            new.append(feature)
            stack = torch.cat([stack, feature], dim=1)
        return stack, torch.cat(new, dim=1)


class TransitionDown(nn.Module):
    """Pre-activation 1x1 conv followed by 2x2 max pooling (spatial only)."""

    def __init__(self, channels: int, dropout: float = 0.0, dims: int = 2,
                 norm_steps: int = 1):
        super().__init__()
        self.channels = channels
        self.norm = make_norm(channels, dims, norm_steps)
        self.relu = nn.ReLU(inplace=False)
        self.conv = _CONV[dims](channels, channels, kernel_size=1)
        self.dropout = _DROPOUT[dims](dropout) if dropout > 0 else None
        self.pool = nn.MaxPool2d(2) if dims == 2 else nn.MaxPool3d((1, 2, 2))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_channels(x, self.channels, "TransitionDown")
        out = self.conv(self.relu(self.norm(x)))
        if self.dropout is not None:
            out = self.dropout(out)
        return self.pool(out)


class TransitionUp(nn.Module):
    """3x3 stride-2 transposed conv doubling the spatial resolution."""

    def __init__(self, channels: int, dims: int = 2):
        super().__init__()
        self.channels = channels
        if dims == 2:
            self.deconv = nn.ConvTranspose2d(channels, channels, kernel_size=3,
                                             stride=2, padding=1, output_padding=1)
        else:
            self.deconv = nn.ConvTranspose3d(channels, channels, kernel_size=3,
                                             stride=(1, 2, 2), padding=1,
                                             output_padding=(0, 1, 1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_channels(x, self.channels, "TransitionUp")
        return self.deconv(x)


class ConvLSTMState(NamedTuple):
    """Recurrent memory of one cell: cell tensor c and hidden tensor h."""

    c: torch.Tensor
    h: torch.Tensor


class ConvLSTMCell(nn.Module):
    """Convolutional LSTM cell with separate input and hidden kernel sizes.

    Gates i, f, o and the candidate all use "same" padding; input-to-state
    kernels are 3x3, state-to-state kernels are hidden_kernel x hidden_kernel.
    Parameter count is 4*(C_in*C_h*k_e^2 + C_h^2*k_h^2 + C_h).
    """

    def __init__(self, in_channels: int, hidden_channels: int,
                 input_kernel: int = 3, hidden_kernel: int = 3):
        super().__init__()
        if hidden_kernel % 2 == 0 or input_kernel % 2 == 0:
            raise ShapeMismatch("ConvLSTM kernels must be odd for same padding")
        self.in_channels = in_channels
        self.hidden_channels = hidden_channels
        self.conv_input = nn.Conv2d(in_channels, 4 * hidden_channels, input_kernel,
                                    padding=input_kernel // 2, bias=True)
        self.conv_hidden = nn.Conv2d(hidden_channels, 4 * hidden_channels, hidden_kernel,
                                     padding=hidden_kernel // 2, bias=False)
        self.reset_parameters()

    def reset_parameters(self) -> None:
        nn.init.kaiming_normal_(self.conv_input.weight, nonlinearity="relu")
        nn.init.orthogonal_(self.conv_hidden.weight)
        nn.init.zeros_(self.conv_input.bias)
        # Forget gate bias starts at 1 so early training does not wipe memory.
        ch = self.hidden_channels
        with torch.no_grad():
            self.conv_input.bias[ch:2 * ch].fill_(1.0)

    def zero_state(self, reference: torch.Tensor) -> ConvLSTMState:
        b, _, h, w = reference.shape
        zeros = reference.new_zeros(b, self.hidden_channels, h, w)
        return ConvLSTMState(c=zeros, h=zeros.clone())

    def forward(self, x: torch.Tensor,
                state: ConvLSTMState | None = None) -> tuple[torch.Tensor, ConvLSTMState]:
        _check_channels(x, self.in_channels, "ConvLSTMCell")
        if state is None:
            state = self.zero_state(x)
        if state.h.shape[-2:] != x.shape[-2:]:
            raise ShapeMismatch(
                f"state spatial size {tuple(state.h.shape[-2:])} does not match "
                f"input {tuple(x.shape[-2:])}")
        gates = self.conv_input(x) + self.conv_hidden(state.h)
        i, f, o, g = gates.chunk(4, dim=1)
        i = torch.sigmoid(i)
        f = torch.sigmoid(f)
        o = torch.sigmoid(o)
        c = f * state.c + i * torch.tanh(g)
        h = o * torch.tanh(c)
        return h, ConvLSTMState(c=c, h=h)

    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
