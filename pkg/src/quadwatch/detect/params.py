from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass(frozen=True)
class DetectParams:
    """Tunables for the moving-object detector.

    ``lk_min_eig`` is compared against the smallest eigenvalue of the window's
    gradient matrix after dividing by window area and 255**2.
    """

    diff_threshold: int = 25
    mask_dilation_radius: int = 2
    fast_threshold: int = 20
    max_features_per_roi: int = 50
    lk_window: int = 21
    lk_levels: int = 3
    lk_max_iters: int = 30
    lk_epsilon: float = 0.01
    lk_min_eig: float = 1e-4
    lk_max_residual: float = 20.0
    motion_threshold: float = 6.0
    min_features: int = 3
    motion_normalize: bool = False

    def __post_init__(self):
        if self.lk_window % 2 != 1 or self.lk_window < 5:
            raise ValueError(f"lk_window must be odd and >= 5, got {self.lk_window}")
        if self.lk_levels < 1 or self.lk_max_iters < 1:
            raise ValueError("lk_levels and lk_max_iters must be >= 1")
        if self.mask_dilation_radius < 0:
            raise ValueError("mask_dilation_radius must be >= 0")
        for name in ("diff_threshold", "fast_threshold", "max_features_per_roi", "lk_epsilon",
                     "lk_min_eig", "lk_max_residual", "motion_threshold", "min_features"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]
