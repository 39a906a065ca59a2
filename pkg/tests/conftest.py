"""Shared randomized-case generators for property and acceptance tests."""

import warnings
from random import Random

import pytest

from acqsim import (
    CameraSpec,
    CameraLinkIf,
    ClockModel,
    CoaXPressIf,
    DeadlineSpec,
    EnvelopeWarning,
    GigEVisionIf,
    PCIeLink,
    ProcessingModel,
    SimConfig,
    USB3If,
    build_classic,
    build_direct,
)
from acqsim.simcore import DROP_NEWEST, DROP_OLDEST
from acqsim.topology import (
    CUT_THROUGH,
    STORE_AND_FORWARD,
    BufferStage,
    Topology,
)


def make_camera(rng: Random) -> CameraSpec:
    """Small, fast-to-simulate cameras; envelope warnings suppressed."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EnvelopeWarning)
        return CameraSpec(
            resolution_pixels=rng.randint(1_000, 50_000),
            bit_depth=rng.choice([8, 10, 12, 16]),
            frame_rate=rng.choice([1e5, 2e5, 5e5, 1e6]),
        )


def make_link(rng: Random):
    kind = rng.randrange(5)
    eff = rng.choice([1.0, 0.9, 0.75])
    length = rng.choice([0.0, 10.0, 300.0])
    if kind == 0:
        return PCIeLink(
            generation=rng.randint(1, 5),
            lanes=rng.choice([1, 2, 4, 8, 16]),
            cable_length_m=length,
            protocol_efficiency=eff,
        )
    if kind == 1:
        return CameraLinkIf(config=rng.choice(["base", "medium", "full"]), cable_length_m=length)
    if kind == 2:
        return CoaXPressIf(
            speed_grade=rng.choice(["cxp2", "cxp6", "cxp12"]),
            links=rng.randint(1, 4),
            cable_length_m=length,
        )
    if kind == 3:
        return GigEVisionIf(rate_preset=rng.choice(["1g", "10g"]), cable_length_m=length)
    return USB3If(cable_length_m=length, protocol_efficiency=eff)


def make_processing(rng: Random) -> ProcessingModel:
    pick = rng.randrange(3)
    if pick == 0:
        return ProcessingModel.fixed(rng.randint(0, 50_000))
    if pick == 1:
        lo = rng.randint(0, 10_000)
        return ProcessingModel.uniform(lo, lo + rng.randint(0, 20_000))
    return ProcessingModel.normal(rng.uniform(0, 20_000), rng.uniform(0, 5_000))


def make_topology(rng: Random, generous_capacity: bool = False) -> Topology:
    """A random valid classic or direct pipeline, sometimes drop-prone."""
    cam = make_camera(rng)
    frame = cam.frame_size_bytes
    if generous_capacity:
        cap = 64 * 1024 * 1024
    else:
        # Tight capacities force overflow and eviction paths.
        cap = rng.choice([max(1, frame // 2), frame, 2 * frame, 8 * frame, 64 * 1024 * 1024])
    deadlines = DeadlineSpec(
        safety_ns=rng.choice([100_000, 10_000_000]),
        control_ns=20_000_000,
        timestamp_rms_ns=50.0,
    )
    kwargs = dict(
        camera_buffer_capacity_bytes=max(cap, frame),
        camera_buffer_forwarding=rng.choice([STORE_AND_FORWARD, CUT_THROUGH]),
        sensor_latency_ns=rng.randint(0, 1_000),
        host_latency_ns=rng.randint(0, 1_000),
        processing=make_processing(rng),
        processor_latency_ns=rng.randint(0, 1_000),
        deadlines=deadlines,
    )
    if rng.random() < 0.5:
        return build_direct(cam, make_link(rng), name=f"rand-direct-{rng.randrange(10**6)}", **kwargs)
    return build_classic(
        cam,
        make_link(rng),
        make_link(rng),
        cap,
        name=f"rand-classic-{rng.randrange(10**6)}",
        grabber_latency_ns=rng.randint(0, 1_000),
        **kwargs,
    )


def make_config(rng: Random) -> SimConfig:
    clock = ClockModel(
        offset_ns=rng.choice([0.0, 25.0, -25.0]),
        drift_ppm=rng.choice([0.0, 10.0]),
        jitter_sigma_ns=rng.choice([0.0, 5.0, 20.0]),
    )
    policy = rng.choice([DROP_NEWEST, DROP_OLDEST])
    if rng.random() < 0.25:
        return SimConfig(
            seed=rng.getrandbits(32),
            duration_ns=rng.randint(0, 200_000),
            drop_policy=policy,
            clock=clock,
        )
    return SimConfig(
        seed=rng.getrandbits(32),
        n_frames=rng.randint(0, 8),
        drop_policy=policy,
        clock=clock,
    )


def insertable_buffer(rng: Random) -> BufferStage:
    return BufferStage(
        capacity_bytes=64 * 1024 * 1024,
        forwarding=rng.choice([STORE_AND_FORWARD, CUT_THROUGH]),
        fixed_latency_ns=rng.randint(0, 2_000),
    )


def insert_stage(topo: Topology, stage, position: int) -> Topology:
    stages = topo.stages[:position] + (stage,) + topo.stages[position:]
    return Topology(name=topo.name + "+ins", stages=stages, camera=topo.camera, deadlines=topo.deadlines)


@pytest.fixture(scope="session")
def run_pool():
    """1000 randomized (topology, config, report) cases, shared by suites."""
    from acqsim import run

    rng = Random(20260810)
    pool = []
    for _ in range(1000):
        topo = make_topology(rng)
        cfg = make_config(rng)
        pool.append((topo, cfg, run(topo, cfg)))
    return pool
