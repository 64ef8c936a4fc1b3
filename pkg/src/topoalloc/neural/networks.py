"""Actor and critic networks for the learned repair operator.

Both take a ``(batch, q, 4)`` state. FCN variants flatten it row by row to
``q * 4`` inputs; CNN variants read it as 4 channels of length ``q``. The
critic repeats the actor's layers except for the last one, which emits a
single value.
"""
from __future__ import annotations

import torch
from torch import nn

from ..errors import MaskError

STATE_ROWS = 100
STATE_ATTRS = 4

# tag -> layer recipe; the last width is replaced by 1 for the critic
ARCHITECTURES: dict[str, tuple] = {
    "FCN-1": ("fcn", (400, 64, 64, 100)),
    "FCN-2": ("fcn", (400, 64, 64, 64, 100)),
    "FCN-3": ("fcn", (400, 96, 64, 100)),
    "CNN-1": ("cnn", (4, 4, 4), (176, 256, 100)),
    "CNN-2": ("cnn", (4, 8, 4), (176, 256, 100)),
    "CNN-3": ("cnn", (4, 16, 8), (352, 256, 100)),
}

CONV1 = dict(kernel_size=10, stride=1, padding=0)
CONV2 = dict(kernel_size=5, stride=2, padding=0)


def conv_lengths(q: int = STATE_ROWS) -> tuple[int, int]:
    first = (q - CONV1["kernel_size"]) // CONV1["stride"] + 1
    second = (first - CONV2["kernel_size"]) // CONV2["stride"] + 1
    return first, second


def _build(tag: str, out: int) -> nn.Sequential:
    if tag not in ARCHITECTURES:
        raise KeyError(f"unknown architecture {tag!r}; choose from {sorted(ARCHITECTURES)}")
    kind, *recipe = ARCHITECTURES[tag]
    layers: list[nn.Module] = []
    if kind == "fcn":
        widths = list(recipe[0])
        widths[-1] = out
        layers.append(nn.Flatten())
        for i, (a, b) in enumerate(zip(widths, widths[1:])):
            if i:
                layers.append(nn.Tanh())
            layers.append(nn.Linear(a, b))
    else:
        (cin, c1, c2), dense = recipe
        layers += [
            nn.Conv1d(cin, c1, **CONV1),
            nn.Tanh(),
            nn.Conv1d(c1, c2, **CONV2),
            nn.Flatten(),
            nn.Linear(dense[0], dense[1]),
            nn.Linear(dense[1], out),
        ]
    return nn.Sequential(*layers)


class PolicyNetwork(nn.Module):
    def __init__(self, arch: str = "CNN-3", q: int = STATE_ROWS):
        super().__init__()
        if q != STATE_ROWS:
            raise ValueError(f"the architectures are sized for q={STATE_ROWS}")
        self.arch = arch
        self.kind = ARCHITECTURES[arch][0]
        self.q = q
        self.actor = _build(arch, q)
        self.critic = _build(arch, 1)
        with torch.no_grad():
            head = self.actor[-1]
            head.weight.mul_(0.01)
            head.bias.zero_()

    def _prepare(self, state: torch.Tensor) -> torch.Tensor:
        if state.dim() == 2:
            state = state.unsqueeze(0)
        if self.kind == "cnn":
            state = state.transpose(1, 2)
        return state

    def logits(self, state: torch.Tensor) -> torch.Tensor:
        return self.actor(self._prepare(state))

    def value(self, state: torch.Tensor) -> torch.Tensor:
        return self.critic(self._prepare(state)).squeeze(-1)

    def masked_logits(self, state: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        logits = self.logits(state)
        mask = mask.reshape(logits.shape).bool()
        if not mask.any(dim=-1).all():
            raise MaskError("every action is masked")
        return logits.masked_fill(~mask, torch.finfo(logits.dtype).min)

    def forward(self, state, mask):
        return torch.softmax(self.masked_logits(state, mask), dim=-1)


def policy_forward(net: PolicyNetwork, state, mask) -> torch.Tensor:
    """Action probabilities with illegal positions driven to zero."""
    dtype = next(net.parameters()).dtype
    state = torch.as_tensor(state, dtype=dtype)
    mask = torch.as_tensor(mask, dtype=torch.bool)
    with torch.no_grad():
        return net(state, mask)


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
