"""Pipeline construction and validation for the two acquisition layouts.

The classic chain routes the camera through a dedicated capture card:

    Sensor -> Buffer(camera FPGA) -> Link(camera interface)
           -> FrameGrabber -> Link(PCIe) -> HostMemory -> Processor

The direct chain puts the host bus right behind the camera FPGA:

    Sensor -> Buffer(camera FPGA) -> Link(PCIe) -> HostMemory -> Processor

copy_count() counts the stages where a full frame is materialized in a
memory (camera buffer, grabber, host RAM): 3 hops classic, 2 direct.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from random import Random
from typing import Optional, Union

from .linkmodel import (
    CameraSpec,
    InvalidSpecError,
    Link,
    camera_from_dict,
    camera_to_dict,
    link_from_dict,
    link_to_dict,
)
from .timing import DeadlineSpec, deadlines_from_dict, deadlines_to_dict

STORE_AND_FORWARD = "store_and_forward"
CUT_THROUGH = "cut_through"

DEFAULT_BUFFER_CAPACITY = 64 * 1024 * 1024  # 64 MiB, holds any in-envelope frame


@dataclass(frozen=True)
class ProcessingModel:
    """Per-frame compute time: fixed, or a seeded random distribution."""

    distribution: str = "fixed"  # "fixed" | "uniform" | "normal"
    fixed_ns: int = 0
    low_ns: int = 0
    high_ns: int = 0
    mean_ns: float = 0.0
    sigma_ns: float = 0.0

    def __post_init__(self):
        if self.distribution == "fixed":
            if self.fixed_ns < 0:
                raise InvalidSpecError("fixed processing time must be >= 0")
        elif self.distribution == "uniform":
            if not 0 <= self.low_ns <= self.high_ns:
                raise InvalidSpecError("uniform processing time needs 0 <= low <= high")
        elif self.distribution == "normal":
            if self.sigma_ns < 0 or self.mean_ns < 0:
                raise InvalidSpecError("normal processing time needs mean, sigma >= 0")
        else:
            raise InvalidSpecError(f"unknown processing distribution {self.distribution!r}")

    @classmethod
    def fixed(cls, ns: int) -> "ProcessingModel":
        return cls(distribution="fixed", fixed_ns=ns)

    @classmethod
    def uniform(cls, low_ns: int, high_ns: int) -> "ProcessingModel":
        return cls(distribution="uniform", low_ns=low_ns, high_ns=high_ns)

    @classmethod
    def normal(cls, mean_ns: float, sigma_ns: float) -> "ProcessingModel":
        return cls(distribution="normal", mean_ns=mean_ns, sigma_ns=sigma_ns)

    def draw(self, rng: Random) -> int:
        if self.distribution == "fixed":
            return self.fixed_ns
        if self.distribution == "uniform":
            return rng.randint(self.low_ns, self.high_ns)
        # normal, clamped at zero
        return max(0, round(rng.gauss(self.mean_ns, self.sigma_ns)))


# --- Stage kinds -----------------------------------------------------------


@dataclass(frozen=True)
class Sensor:
    fixed_latency_ns: int = 0

    kind = "sensor"

    def __post_init__(self):
        if self.fixed_latency_ns < 0:
            raise InvalidSpecError("fixed_latency_ns must be >= 0")


@dataclass(frozen=True)
class BufferStage:
    """A frame memory with a forwarding discipline.

    Store-and-forward holds the whole frame before sending it on;
    cut-through starts forwarding fixed_latency_ns after the first byte
    arrives and buffers only the rate-mismatch residue.
    """

    capacity_bytes: int
    forwarding: str = STORE_AND_FORWARD
    fixed_latency_ns: int = 0

    kind = "buffer"

    def __post_init__(self):
        if self.capacity_bytes <= 0:
            raise InvalidSpecError("buffer capacity must be positive")
        if self.forwarding not in (STORE_AND_FORWARD, CUT_THROUGH):
            raise InvalidSpecError(f"unknown forwarding mode {self.forwarding!r}")
        if self.fixed_latency_ns < 0:
            raise InvalidSpecError("fixed_latency_ns must be >= 0")


@dataclass(frozen=True)
class LinkStage:
    link: Link

    kind = "link"


@dataclass(frozen=True)
class FrameGrabber:
    """Capture card buffer; always store-and-forward by construction."""

    capacity_bytes: int
    fixed_latency_ns: int = 0

    kind = "frame_grabber"

    def __post_init__(self):
        if self.capacity_bytes <= 0:
            raise InvalidSpecError("frame grabber capacity must be positive")
        if self.fixed_latency_ns < 0:
            raise InvalidSpecError("fixed_latency_ns must be >= 0")

    @property
    def forwarding(self) -> str:
        return STORE_AND_FORWARD


@dataclass(frozen=True)
class HostMemory:
    """Infinite sink; holds frames until the next stage picks them up."""

    fixed_latency_ns: int = 0

    kind = "host_memory"

    def __post_init__(self):
        if self.fixed_latency_ns < 0:
            raise InvalidSpecError("fixed_latency_ns must be >= 0")


@dataclass(frozen=True)
class Processor:
    """Single-server consumer; service time = fixed latency + drawn compute."""

    processing: ProcessingModel = field(default_factory=ProcessingModel)
    fixed_latency_ns: int = 0

    kind = "processor"

    def __post_init__(self):
        if self.fixed_latency_ns < 0:
            raise InvalidSpecError("fixed_latency_ns must be >= 0")


Stage = Union[Sensor, BufferStage, LinkStage, FrameGrabber, HostMemory, Processor]

# Stages that can hold a complete frame and feed a downstream link.
EMITTER_KINDS = (Sensor, BufferStage, FrameGrabber)
# Stages where a full frame is materialized in a memory.
COPY_KINDS = (BufferStage, FrameGrabber, HostMemory)


@dataclass(frozen=True)
class Topology:
    name: str
    stages: tuple
    camera: CameraSpec
    deadlines: DeadlineSpec = field(default_factory=DeadlineSpec)


@dataclass(frozen=True)
class Violation:
    stage_index: Optional[int]
    rule: str
    detail: str = ""


def validate(t: Topology) -> list[Violation]:
    """Structural rule check; an empty list means the topology is runnable."""
    v: list[Violation] = []
    stages = t.stages
    if not stages:
        return [Violation(None, "chain is non-empty")]
    if not isinstance(stages[0], Sensor):
        v.append(Violation(0, "first stage is Sensor", f"found {stages[0].kind}"))
    if not isinstance(stages[-1], Processor):
        v.append(Violation(len(stages) - 1, "last stage is Processor", f"found {stages[-1].kind}"))
    if not any(isinstance(s, LinkStage) for s in stages):
        v.append(Violation(None, "at least one LinkStage present"))
    for i, s in enumerate(stages):
        if isinstance(s, Sensor) and i != 0:
            v.append(Violation(i, "Sensor only at the head"))
        if isinstance(s, Processor) and i != len(stages) - 1:
            v.append(Violation(i, "Processor only at the tail"))
        if isinstance(s, LinkStage) and (i == 0 or not isinstance(stages[i - 1], EMITTER_KINDS)):
            prev = stages[i - 1].kind if i > 0 else "nothing"
            v.append(
                Violation(i, "LinkStage preceded by an emitting stage", f"preceded by {prev}")
            )
    return v


def copy_count(t: Topology) -> int:
    """Number of full-frame memory hops along the chain."""
    return sum(1 for s in t.stages if isinstance(s, COPY_KINDS))


def build_classic(
    cam: CameraSpec,
    ci: Link,
    pcie: Link,
    grabber_capacity_bytes: int,
    *,
    name: str = "classic",
    camera_buffer_capacity_bytes: int = DEFAULT_BUFFER_CAPACITY,
    camera_buffer_forwarding: str = STORE_AND_FORWARD,
    sensor_latency_ns: int = 0,
    grabber_latency_ns: int = 0,
    host_latency_ns: int = 0,
    processing: Optional[ProcessingModel] = None,
    processor_latency_ns: int = 0,
    deadlines: Optional[DeadlineSpec] = None,
) -> Topology:
    """Camera -> camera-interface -> frame grabber -> host bus -> host."""
    stages = (
        Sensor(fixed_latency_ns=sensor_latency_ns),
        BufferStage(
            capacity_bytes=camera_buffer_capacity_bytes,
            forwarding=camera_buffer_forwarding,
        ),
        LinkStage(link=ci),
        FrameGrabber(capacity_bytes=grabber_capacity_bytes, fixed_latency_ns=grabber_latency_ns),
        LinkStage(link=pcie),
        HostMemory(fixed_latency_ns=host_latency_ns),
        Processor(processing=processing or ProcessingModel(), fixed_latency_ns=processor_latency_ns),
    )
    return Topology(name=name, stages=stages, camera=cam, deadlines=deadlines or DeadlineSpec())


def build_direct(
    cam: CameraSpec,
    pcie: Link,
    *,
    name: str = "direct",
    camera_buffer_capacity_bytes: int = DEFAULT_BUFFER_CAPACITY,
    camera_buffer_forwarding: str = CUT_THROUGH,
    sensor_latency_ns: int = 0,
    host_latency_ns: int = 0,
    processing: Optional[ProcessingModel] = None,
    processor_latency_ns: int = 0,
    deadlines: Optional[DeadlineSpec] = None,
) -> Topology:
    """Camera streams straight onto the host bus; no grabber, no CI hop.

    The camera buffer defaults to cut-through here (streaming DMA),
    versus store-and-forward in the classic chain where a full frame is
    assembled before the camera-interface transfer.
    """
    stages = (
        Sensor(fixed_latency_ns=sensor_latency_ns),
        BufferStage(
            capacity_bytes=camera_buffer_capacity_bytes,
            forwarding=camera_buffer_forwarding,
        ),
        LinkStage(link=pcie),
        HostMemory(fixed_latency_ns=host_latency_ns),
        Processor(processing=processing or ProcessingModel(), fixed_latency_ns=processor_latency_ns),
    )
    return Topology(name=name, stages=stages, camera=cam, deadlines=deadlines or DeadlineSpec())


# --- Serialization ---------------------------------------------------------


def processing_to_dict(p: ProcessingModel) -> dict:
    if p.distribution == "fixed":
        return {"distribution": "fixed", "fixed_ns": p.fixed_ns}
    if p.distribution == "uniform":
        return {"distribution": "uniform", "low_ns": p.low_ns, "high_ns": p.high_ns}
    return {"distribution": "normal", "mean_ns": p.mean_ns, "sigma_ns": p.sigma_ns}


def processing_from_dict(d: dict) -> ProcessingModel:
    dist = d.get("distribution", "fixed")
    if dist == "fixed":
        return ProcessingModel.fixed(d.get("fixed_ns", 0))
    if dist == "uniform":
        return ProcessingModel.uniform(d["low_ns"], d["high_ns"])
    if dist == "normal":
        return ProcessingModel.normal(d["mean_ns"], d["sigma_ns"])
    raise InvalidSpecError(f"unknown processing distribution {dist!r}")


def stage_to_dict(s: Stage) -> dict:
    if isinstance(s, Sensor):
        return {"kind": s.kind, "fixed_latency_ns": s.fixed_latency_ns}
    if isinstance(s, BufferStage):
        return {
            "kind": s.kind,
            "capacity_bytes": s.capacity_bytes,
            "forwarding": s.forwarding,
            "fixed_latency_ns": s.fixed_latency_ns,
        }
    if isinstance(s, LinkStage):
        return {"kind": s.kind, "link": link_to_dict(s.link)}
    if isinstance(s, FrameGrabber):
        return {
            "kind": s.kind,
            "capacity_bytes": s.capacity_bytes,
            "fixed_latency_ns": s.fixed_latency_ns,
        }
    if isinstance(s, HostMemory):
        return {"kind": s.kind, "fixed_latency_ns": s.fixed_latency_ns}
    if isinstance(s, Processor):
        return {
            "kind": s.kind,
            "processing": processing_to_dict(s.processing),
            "fixed_latency_ns": s.fixed_latency_ns,
        }
    raise InvalidSpecError(f"unknown stage type {type(s).__name__}")


def stage_from_dict(d: dict) -> Stage:
    kind = d.get("kind")
    if kind == "sensor":
        return Sensor(fixed_latency_ns=d.get("fixed_latency_ns", 0))
    if kind == "buffer":
        return BufferStage(
            capacity_bytes=d["capacity_bytes"],
            forwarding=d.get("forwarding", STORE_AND_FORWARD),
            fixed_latency_ns=d.get("fixed_latency_ns", 0),
        )
    if kind == "link":
        return LinkStage(link=link_from_dict(d["link"]))
    if kind == "frame_grabber":
        return FrameGrabber(
            capacity_bytes=d["capacity_bytes"],
            fixed_latency_ns=d.get("fixed_latency_ns", 0),
        )
    if kind == "host_memory":
        return HostMemory(fixed_latency_ns=d.get("fixed_latency_ns", 0))
    if kind == "processor":
        return Processor(
            processing=processing_from_dict(d.get("processing", {})),
            fixed_latency_ns=d.get("fixed_latency_ns", 0),
        )
    raise InvalidSpecError(f"unknown stage kind {kind!r}")


def topology_to_dict(t: Topology) -> dict:
    return {
        "name": t.name,
        "camera": camera_to_dict(t.camera),
        "deadlines": deadlines_to_dict(t.deadlines),
        "stages": [stage_to_dict(s) for s in t.stages],
    }


def topology_from_dict(d: dict) -> Topology:
    return Topology(
        name=d["name"],
        stages=tuple(stage_from_dict(s) for s in d["stages"]),
        camera=camera_from_dict(d["camera"]),
        deadlines=deadlines_from_dict(d.get("deadlines", {})),
    )


def topology_digest(t: Topology) -> str:
    """Stable content hash of the canonical topology serialization."""
    blob = json.dumps(topology_to_dict(t), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
