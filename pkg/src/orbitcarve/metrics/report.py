from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path


@dataclass
class EvalReport:
    chamfer_mean: float | None = None
    chamfer_rms: float | None = None
    chamfer_a_to_b: tuple[float, float] | None = None
    chamfer_b_to_a: tuple[float, float] | None = None
    normal_consistency: float | None = None
    iou_per_view: list[float] = field(default_factory=list)
    iou_mean: float | None = None
    iou_empty_views: list[int] = field(default_factory=list)
    clip_score: float | None = None
    samples: int = 0
    seed: int = 0

    def validate(self) -> None:
        if self.chamfer_mean is not None and not (self.chamfer_mean >= 0 and self.chamfer_rms >= 0):
            raise ValueError("chamfer must be non-negative")
        if any(not 0.0 <= v <= 1.0 for v in self.iou_per_view):
            raise ValueError("IoU outside [0, 1]")
        if self.clip_score is not None and not -1.0 <= self.clip_score <= 1.0:
            raise ValueError("clip score outside [-1, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, path) -> None:
        self.validate()
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")

    def table(self) -> str:
        rows = [
            ("chamfer mean", self.chamfer_mean),
            ("chamfer rms", self.chamfer_rms),
            ("normal consistency", self.normal_consistency),
            ("silhouette IoU (mean)", self.iou_mean),
            ("clip score", self.clip_score),
            ("samples", self.samples),
            ("seed", self.seed),
        ]
        width = max(len(r[0]) for r in rows)
        lines = []
        for name, value in rows:
            if value is None:
                continue
            text = f"{value:.6f}" if isinstance(value, float) else str(value)
            lines.append(f"{name:<{width}}  {text}")
        return "\n".join(lines)
