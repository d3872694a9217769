"""Checkpoint trigger policies, failure specs, and the failure-response mapping."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..checkpoint_store import CLASSES
from ..errors import ConfigError

ON_FAILURE = ("rollback", "restart", "reschedule")


@dataclass(frozen=True)
class Policy:
    """When to cut checkpoints and how to react to a failure.

    Triggers: ``iteration`` (every driver iteration), ``region`` (every
    region start and ``ckpt`` marker), ``every_k_shots``, ``convergence``
    (fires when ``|E_k - E_{k-1}| < tol``) and ``on_event`` (checkpoint at the
    failure point itself when it is checkpointable).
    """
    iteration: bool = False
    region: bool = False
    every_k_shots: int | None = None
    convergence: float | None = None
    on_event: bool = False
    on_failure: str = "rollback"
    checkpoint_class_default: str = "classicalized"

    def __post_init__(self):
        if not self.triggers:
            raise ConfigError("policy needs at least one trigger")
        if self.every_k_shots is not None and self.every_k_shots < 1:
            raise ConfigError(f"shots:K requires K >= 1, got {self.every_k_shots}")
        if self.convergence is not None and not (self.convergence > 0 and math.isfinite(self.convergence)):
            raise ConfigError(f"conv:TOL requires a positive tolerance, got {self.convergence}")
        if self.on_failure not in ON_FAILURE:
            raise ConfigError(f"on_failure must be one of {ON_FAILURE}")
        if self.checkpoint_class_default not in CLASSES:
            raise ConfigError(f"unknown checkpoint class {self.checkpoint_class_default!r}")

    @property
    def triggers(self) -> list[str]:
        out = []
        if self.iteration:
            out.append("iter")
        if self.region:
            out.append("region")
        if self.every_k_shots is not None:
            out.append(f"shots:{self.every_k_shots}")
        if self.convergence is not None:
            out.append(f"conv:{self.convergence!r}")
        if self.on_event:
            out.append("event")
        return out

    @property
    def spec(self) -> str:
        return ",".join(self.triggers)

    @classmethod
    def parse(cls, spec: str, on_failure: str = "rollback",
              checkpoint_class_default: str = "classicalized") -> "Policy":
        kw: dict = {}
        for raw in spec.split(","):
            tok = raw.strip()
            if not tok:
                continue
            name, _, arg = tok.partition(":")
            if name == "iter" and not arg:
                kw["iteration"] = True
            elif name == "region" and not arg:
                kw["region"] = True
            elif name == "event" and not arg:
                kw["on_event"] = True
            elif name == "shots":
                try:
                    kw["every_k_shots"] = int(arg)
                except ValueError:
                    raise ConfigError(f"bad shot count in {tok!r}") from None
            elif name == "conv":
                try:
                    kw["convergence"] = float(arg)
                except ValueError:
                    raise ConfigError(f"bad tolerance in {tok!r}") from None
            else:
                raise ConfigError(f"unknown policy trigger {tok!r}")
        return cls(on_failure=on_failure, checkpoint_class_default=checkpoint_class_default, **kw)


# -- failure specs -----------------------------------------------------------

@dataclass(frozen=True)
class KillAtOp:
    """Terminate just before op ``op`` of region ``region`` executes in shot ``shot``."""
    region: int
    op: int
    shot: int = 0

    def matches(self, point: tuple) -> bool:
        return point == ("op", self.region, self.op, self.shot)

    @property
    def spec(self) -> str:
        return f"op:{self.region}:{self.op}@{self.shot}"


@dataclass(frozen=True)
class KillAtShot:
    """Terminate before shot ``shot`` starts (``shot`` shots are complete)."""
    shot: int

    def matches(self, point: tuple) -> bool:
        return point == ("shot", self.shot)

    @property
    def spec(self) -> str:
        return f"shot:{self.shot}"


@dataclass(frozen=True)
class KillAtIteration:
    """Terminate right after iteration ``iteration`` (and its checkpoint) completes."""
    iteration: int

    def matches(self, point: tuple) -> bool:
        return point == ("iter", self.iteration)

    @property
    def spec(self) -> str:
        return f"iter:{self.iteration}"


@dataclass(frozen=True)
class BackendUnavailable:
    """The backend is down for iterations (or shots) ``first..last`` inclusive.

    Detected when the first affected unit is about to start.
    """
    first: int
    last: int

    def __post_init__(self):
        if self.first > self.last or self.first < 0:
            raise ConfigError(f"bad backend outage range {self.first}-{self.last}")

    def matches(self, point: tuple) -> bool:
        return point[0] in ("iter_start", "shot") and point[1] == self.first

    @property
    def spec(self) -> str:
        return f"backend:{self.first}-{self.last}"


FailureSpec = KillAtOp | KillAtShot | KillAtIteration | BackendUnavailable


def parse_failure(spec: str) -> FailureSpec:
    """Parse ``op:R:I[@S]``, ``shot:K``, ``iter:I`` or ``backend:A-B``."""
    kind, _, rest = spec.strip().partition(":")
    try:
        if kind == "op":
            where, _, shot = rest.partition("@")
            region, op = where.split(":")
            return KillAtOp(int(region), int(op), int(shot) if shot else 0)
        if kind == "shot":
            return KillAtShot(int(rest))
        if kind == "iter":
            return KillAtIteration(int(rest))
        if kind == "backend":
            a, _, b = rest.partition("-")
            return BackendUnavailable(int(a), int(b) if b else int(a))
    except ValueError:
        raise ConfigError(f"malformed failure spec {spec!r}") from None
    raise ConfigError(f"unknown failure spec {spec!r}")


# -- failure response --------------------------------------------------------

@dataclass(frozen=True)
class FailureAction:
    kind: str  # rollback | restart | reschedule
    checkpoint_id: str | None
    fallback: bool = False
    calibration_update: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"action": self.kind, "checkpoint_id": self.checkpoint_id, "fallback": self.fallback,
                "calibration_update": dict(self.calibration_update)}


def on_failure(event: dict, policy: Policy, latest_id: str | None) -> FailureAction:
    """Map a failure event to a recovery action; pure and deterministic.

    ``event`` is informational (kind/position) and only feeds the backend tag.
    """
    kind = policy.on_failure
    if kind == "restart":
        return FailureAction("restart", None)
    if latest_id is None:
        return FailureAction("restart", None, fallback=True)
    if kind == "reschedule":
        tag = f"sim-reschedule-{latest_id[:12]}"
        if event.get("kind"):
            tag += f"-{event['kind']}"
        return FailureAction("reschedule", latest_id, calibration_update={"backend_tag": tag})
    return FailureAction("rollback", latest_id)
