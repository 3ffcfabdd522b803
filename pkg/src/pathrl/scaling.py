"""Token-budgeted, patch-aligned resize planning."""

from __future__ import annotations

from dataclasses import dataclass
from math import isqrt

PATCH_SIZE = 28
ROI_MAX_TOKENS = 256
WSI_MAX_TOKENS = 1024


@dataclass(frozen=True)
class ResizePlan:
    height: int
    width: int
    out_height: int
    out_width: int
    patch: int
    max_tokens: int

    @property
    def tokens(self) -> int:
        return token_count(self.out_height, self.out_width, self.patch)

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "out_height": self.out_height,
            "out_width": self.out_width,
            "patch": self.patch,
            "max_tokens": self.max_tokens,
            "tokens": self.tokens,
        }


def token_count(out_height: int, out_width: int, patch: int) -> int:
    if out_height % patch or out_width % patch:
        raise ValueError(f"{out_height}x{out_width} is not aligned to patch {patch}")
    return (out_height // patch) * (out_width // patch)


def plan_resize(height: int, width: int, max_tokens: int = ROI_MAX_TOKENS,
                patch: int = PATCH_SIZE) -> ResizePlan:
    """Plan output dimensions that are multiples of ``patch`` and fit the budget.

    One isotropic scale ``s = min(1, sqrt(M P^2 / (H W)))`` is applied and each
    side is floored to a patch multiple (at least one patch). If the one-patch
    minimum pushes the count over budget, the larger side is shrunk a patch at
    a time, height first on ties.
    """
    for name, v in (("height", height), ("width", width), ("max_tokens", max_tokens), ("patch", patch)):
        if int(v) != v or v < 1:
            raise ValueError(f"{name} must be a positive integer, got {v}")

    # floor(H*s/P) == floor(sqrt(M*H/W)) when s < 1, and H//P otherwise;
    # isqrt(floor(x)) == floor(sqrt(x)) keeps this exact.
    kh = max(1, min(height // patch, isqrt(max_tokens * height // width)))
    kw = max(1, min(width // patch, isqrt(max_tokens * width // height)))
    # same as shrinking one patch at a time, but jumps straight to the stop point
    while kh * kw > max_tokens:
        if kh >= kw:
            kh = max(max_tokens // kw, kw - 1)
        else:
            kw = max(max_tokens // kh, kh - 1)
    return ResizePlan(height, width, kh * patch, kw * patch, patch, max_tokens)
