"""Dataclass configuration for the model and training loop."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict, fields


@dataclass
class TrainConfig:
    """Model dimensions, optimizer schedule, and ablation switches.

    Defaults reproduce the reference training protocol: loss weight 6,
    2 reasoning iterations, SGD at 0.001 decayed by 0.6 every 10 epochs,
    minibatch 4, 40 epochs.
    """

    # loss / schedule
    lam: float = 6.0
    lr0: float = 0.001
    decay: float = 0.6
    decay_every: int = 10
    batch_size: int = 4
    epochs: int = 40
    momentum: float = 0.9

    # model dimensions
    T: int = 2          # reasoning iterations
    D: int = 64         # shared embedding dimension
    F: int = 16         # raw instance feature length
    A: int = 4          # number of action classes

    seed: int = 0

    # ablation switches
    use_intra: bool = True
    use_inter: bool = True
    use_intra_attention: bool = True
    use_interactiveness_weight: bool = True
    homogeneous_mode: str = "off"   # off | intra | inter
    intra_mean_divide: bool = False

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if not (0 < self.decay <= 1):
            raise ValueError("decay must be in (0, 1]")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.homogeneous_mode not in ("off", "intra", "inter"):
            raise ValueError(f"unknown homogeneous_mode {self.homogeneous_mode!r}")

    @property
    def variant(self) -> str:
        """Short tag naming the ablation variant this config selects."""
        if self.homogeneous_mode != "off":
            return f"homogeneous-{self.homogeneous_mode}"
        if not self.use_intra and not self.use_inter:
            return "baseline"
        if self.use_intra and not self.use_inter:
            return "intra-only"
        if self.use_inter and not self.use_intra:
            return "inter-only"
        if not self.use_intra_attention or not self.use_interactiveness_weight:
            return "no-attention"
        return "full"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def parse_config_file(path) -> TrainConfig:
    """Read `key = value` lines (# comments, blank lines allowed)."""
    values: dict = {}
    types = {f.name: f.type for f in fields(TrainConfig)}
    defaults = TrainConfig()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in types:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            current = getattr(defaults, key)
            if isinstance(current, bool):
                if val.lower() not in _BOOL:
                    raise ValueError(f"{path}:{lineno}: bad boolean {val!r}")
                values[key] = _BOOL[val.lower()]
            elif isinstance(current, int):
                values[key] = int(val)
            elif isinstance(current, float):
                values[key] = float(val)
            else:
                values[key] = val
    return TrainConfig(**values)
