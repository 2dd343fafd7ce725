"""Run reports: the JSON artifact each training run leaves behind."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .errors import ContractError


@dataclass
class RunReport:
    config_digest: str
    seed: int
    source_epochs: list[dict] = field(default_factory=list)
    adaptation_epochs: list[dict] = field(default_factory=list)
    final_accuracy: float | None = None
    baseline_accuracy: float | None = None
    wall_seconds: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        data = json.loads(text)
        return cls(**data)

    def validate(self, source_epochs: int | None = None,
                 adaptation_epochs: int | None = None) -> None:
        if source_epochs is not None and len(self.source_epochs) != source_epochs:
            raise ContractError(f"report has {len(self.source_epochs)} source epochs, "
                                f"config says {source_epochs}")
        if adaptation_epochs is not None and len(self.adaptation_epochs) != adaptation_epochs:
            raise ContractError(f"report has {len(self.adaptation_epochs)} adaptation "
                                f"epochs, config says {adaptation_epochs}")
        for value in (self.final_accuracy, self.baseline_accuracy):
            if value is not None and not 0.0 <= value <= 1.0:
                raise ContractError(f"accuracy {value} outside [0, 1]")
        for row in self.source_epochs:
            acc = row.get("accuracy")
            if acc is not None and not 0.0 <= acc <= 1.0:
                raise ContractError(f"source epoch accuracy {acc} outside [0, 1]")
        for row in self.adaptation_epochs:
            acc = row.get("target_accuracy")
            if acc is not None and not 0.0 <= acc <= 1.0:
                raise ContractError(f"adaptation epoch accuracy {acc} outside [0, 1]")
