"""Scenario configuration and its flat ``key = value`` file format.

Example::

    seed = 7
    group_count = 1
    users_per_group = 10
    pseudonyms_per_user = 3
    slots = 5
    modulus_bits = 64
    test_mode = true
    reading_model = uniform:0:2000
    tariff = cycle:80,80,120,200
    adversary = forge_signature slots=1,3 count=2
    on_reject = skip

``adversary`` may repeat.  Reading models are ``constant:<wh>``,
``uniform:<lo>:<hi>`` or ``trace:<csv path>`` (columns user_id, slot,
value_wh).  Tariffs are ``flat:<price>``, ``cycle:<p0>,<p1>,...`` (slot t
pays entry ``t mod len``) or ``file:<csv path>``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import rng as rngmod
from .billing import TariffSchedule, load_tariff

ADVERSARY_KINDS = ("forge_signature", "unregistered_pseudonym", "tamper_block", "replay_message")
ON_REJECT = ("skip", "halt")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AdversaryConfig:
    kind: str
    slots: tuple[int, ...]
    count: int = 1
    group: int = 0

    def __post_init__(self):
        if self.kind not in ADVERSARY_KINDS:
            raise ConfigError(f"unknown adversary kind {self.kind!r}")
        if self.count < 1:
            raise ConfigError("adversary count must be positive")
        if any(s < 0 for s in self.slots):
            raise ConfigError("adversary slots must be non-negative")

    @classmethod
    def parse(cls, text: str) -> AdversaryConfig:
        kind, *opts = text.split()
        kwargs: dict = {}
        for opt in opts:
            key, sep, value = opt.partition("=")
            if not sep:
                raise ConfigError(f"bad adversary option {opt!r}")
            if key == "slots":
                kwargs["slots"] = tuple(int(s) for s in value.split(",") if s)
            elif key in ("count", "group"):
                kwargs[key] = int(value)
            else:
                raise ConfigError(f"unknown adversary option {key!r}")
        kwargs.setdefault("slots", ())
        return cls(kind, **kwargs)

    def format(self) -> str:
        slots = ",".join(str(s) for s in self.slots)
        return f"{self.kind} slots={slots} count={self.count} group={self.group}"


class ReadingModel:
    """Ground-truth consumption per (group, user, slot)."""

    def __init__(self, spec: str, seed: int):
        self.spec = spec
        self.seed = seed
        kind, _, rest = spec.partition(":")
        self.kind = kind
        if kind == "constant":
            self.value = int(rest)
            if self.value < 0:
                raise ConfigError("constant reading must be non-negative")
        elif kind == "uniform":
            lo, hi = (int(x) for x in rest.split(":"))
            if not 0 <= lo <= hi:
                raise ConfigError("uniform reading bounds need 0 <= lo <= hi")
            self.lo, self.hi = lo, hi
        elif kind == "trace":
            self.trace: dict[tuple[str, int], int] = {}
            with open(rest, newline="") as fh:
                reader = csv.DictReader(fh)
                if reader.fieldnames != ["user_id", "slot", "value_wh"]:
                    raise ConfigError("trace columns must be user_id,slot,value_wh")
                for row in reader:
                    self.trace[(row["user_id"], int(row["slot"]))] = int(row["value_wh"])
        else:
            raise ConfigError(f"unknown reading model {spec!r}")

    def __call__(self, group_id: str, user_id: str, slot: int) -> int:
        if self.kind == "constant":
            return self.value
        if self.kind == "uniform":
            return rngmod.fork(self.seed, "reading", group_id, user_id, slot).randint(self.lo, self.hi)
        try:
            return self.trace[(user_id, slot)]
        except KeyError:
            raise ConfigError(f"trace has no reading for {user_id} slot {slot}") from None


def build_tariff(spec: str, slots: int) -> TariffSchedule:
    kind, _, rest = spec.partition(":")
    if kind == "flat":
        return TariffSchedule({t: int(rest) for t in range(slots)})
    if kind == "cycle":
        prices = [int(p) for p in rest.split(",")]
        if not prices:
            raise ConfigError("cycle tariff needs at least one price")
        return TariffSchedule({t: prices[t % len(prices)] for t in range(slots)})
    if kind == "file":
        return load_tariff(rest)
    raise ConfigError(f"unknown tariff {spec!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    group_count: int = 1
    users_per_group: int = 10
    pseudonyms_per_user: int = 3
    slots: int = 5
    target_fpr: float = 0.01
    modulus_bits: int = 512
    test_mode: bool = False
    reading_model: str = "uniform:0:2000"
    tariff: str = "cycle:80,80,120,200"
    adversaries: tuple[AdversaryConfig, ...] = field(default_factory=tuple)
    on_reject: str = "skip"
    fpr_trials: int = 10000
    full_verifiers: int = 2

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("group_count", "users_per_group", "slots", "fpr_trials", "full_verifiers"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.pseudonyms_per_user < 1:
            raise ConfigError("pseudonyms_per_user must be >= 1")
        if not 0.0 < self.target_fpr < 1.0:
            raise ConfigError("target_fpr must lie in (0, 1)")
        if self.on_reject not in ON_REJECT:
            raise ConfigError(f"on_reject must be one of {ON_REJECT}")
        for adv in self.adversaries:
            if adv.group >= max(self.group_count, 1):
                raise ConfigError(f"adversary targets missing group {adv.group}")

    def reading(self) -> ReadingModel:
        return ReadingModel(self.reading_model, self.seed)

    def tariff_schedule(self) -> TariffSchedule:
        return build_tariff(self.tariff, self.slots)

    def format(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "adversaries":
                lines += [f"adversary = {a.format()}" for a in value]
            elif isinstance(value, bool):
                lines.append(f"{f.name} = {str(value).lower()}")
            else:
                lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def parse_config(text: str, seed: int | None = None) -> ScenarioConfig:
    """Parse the flat key-value format; ``seed`` overrides the file's seed."""
    types = {f.name: f.type for f in fields(ScenarioConfig)}
    values: dict = {}
    adversaries: list[AdversaryConfig] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        if key == "adversary":
            adversaries.append(AdversaryConfig.parse(value))
            continue
        if key not in types or key == "adversaries":
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        kind = types[key]
        try:
            if kind == "int":
                values[key] = int(value)
            elif kind == "float":
                values[key] = float(value)
            elif kind == "bool":
                values[key] = _BOOL[value.lower()]
            else:
                values[key] = value
        except (ValueError, KeyError):
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
    if seed is not None:
        values["seed"] = seed
    if "seed" not in values:
        raise ConfigError("seed is mandatory")
    return ScenarioConfig(adversaries=tuple(adversaries), **values)


def load_config(path: str | Path, seed: int | None = None) -> ScenarioConfig:
    return parse_config(Path(path).read_text(), seed=seed)
