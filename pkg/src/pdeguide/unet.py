"""Noise-prediction network: a 3-level convolutional encoder-decoder.

Each level carries two residual blocks (GroupNorm, SiLU, 3x3 conv, twice,
with the timestep embedding added as a per-channel bias in between).
Downsampling is a stride-2 conv, upsampling is nearest-neighbour x2 followed
by a conv, and encoder activations are concatenated into the decoder.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

ARCH_NAME = "unet3"


def _groups(ch: int, max_groups: int) -> int:
    g = min(max_groups, ch)
    while ch % g:
        g -= 1
    return g


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal features of integer timesteps, shape (batch, dim)."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / half)
    args = t.float()[:, None] * freqs[None]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


class ResBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, t_dim: int, groups: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(c_in, groups), c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.temb = nn.Linear(t_dim, c_out)
        self.norm2 = nn.GroupNorm(_groups(c_out, groups), c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, x, temb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.temb(temb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class Denoiser(nn.Module):
    """epsilon_theta(u_t, t) for single-channel fields whose sides are divisible by 4."""

    def __init__(self, base_channels: int = 64, groups: int = 8):
        super().__init__()
        C = int(base_channels)
        if C < 2:
            raise ValueError("base_channels must be at least 2")
        self.base_channels = C
        self.groups = groups
        t_dim = 4 * C
        self.time_mlp = nn.Sequential(nn.Linear(C, t_dim), nn.SiLU(), nn.Linear(t_dim, t_dim))
        self.inc = nn.Conv2d(1, C, 3, padding=1)

        def pair(a, b):
            return nn.ModuleList([ResBlock(a, b, t_dim, groups), ResBlock(b, b, t_dim, groups)])

        self.enc1 = pair(C, C)
        self.down1 = nn.Conv2d(C, 2 * C, 3, stride=2, padding=1)
        self.enc2 = pair(2 * C, 2 * C)
        self.down2 = nn.Conv2d(2 * C, 4 * C, 3, stride=2, padding=1)
        self.mid = pair(4 * C, 4 * C)
        self.up2 = nn.Conv2d(4 * C, 2 * C, 3, padding=1)
        self.dec2 = pair(4 * C, 2 * C)
        self.up1 = nn.Conv2d(2 * C, C, 3, padding=1)
        self.dec1 = pair(2 * C, C)
        self.out = nn.Sequential(nn.GroupNorm(_groups(C, groups), C), nn.SiLU(),
                                 nn.Conv2d(C, 1, 3, padding=1))
        self.n_params = sum(p.numel() for p in self.parameters())

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] % 4 or x.shape[-2] % 4:
            raise ValueError(f"field sides must be divisible by 4, got {tuple(x.shape[-2:])}")
        temb = self.time_mlp(timestep_embedding(t, self.base_channels))
        h = self.inc(x)
        for blk in self.enc1:
            h = blk(h, temb)
        skip1 = h
        h = self.down1(h)
        for blk in self.enc2:
            h = blk(h, temb)
        skip2 = h
        h = self.down2(h)
        for blk in self.mid:
            h = blk(h, temb)
        h = self.up2(F.interpolate(h, scale_factor=2, mode="nearest"))
        h = torch.cat([h, skip2], dim=1)
        for blk in self.dec2:
            h = blk(h, temb)
        h = self.up1(F.interpolate(h, scale_factor=2, mode="nearest"))
        h = torch.cat([h, skip1], dim=1)
        for blk in self.dec1:
            h = blk(h, temb)
        return self.out(h)

    def descriptor(self) -> dict:
        return {
            "arch": ARCH_NAME,
            "base_channels": self.base_channels,
            "groups": self.groups,
            "levels": 3,
            "blocks_per_level": 2,
            "norm": "group",
            "activation": "silu",
            "down": "strided_conv",
            "up": "nearest_conv",
            "time_embedding": "sinusoidal_mlp",
            "n_params": self.n_params,
        }

    @classmethod
    def from_descriptor(cls, d: dict) -> "Denoiser":
        if d.get("arch") != ARCH_NAME:
            raise ValueError(f"unsupported architecture {d.get('arch')!r}")
        return cls(int(d["base_channels"]), int(d.get("groups", 8)))
