"""Executable counterexamples and reference runs, as schedules.

Each scenario builder returns a ScenarioRun: a schedule (self-contained,
replayable from text), the monitor expectations for the chosen variant, and
an ordered list of trace markers that tie the run to the numbered events of
the analysis it reproduces.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

from .byzantine import (
    crash,
    send_commit,
    send_prepare,
    send_round_change,
    silent,
)
from .chain import Block, Transaction, hash_block, make_genesis
from .monitors import run_monitors
from .network import World
from .schedule import (
    MsgDirective,
    PoolEntry,
    Schedule,
    SimConfig,
    default_validators,
)


@dataclass
class ScenarioRun:
    name: str
    schedule: Schedule
    golden: tuple[str, ...] = ()

    @property
    def variant(self) -> str:
        return self.schedule.config.variant_name


def _pool_tx(v: str, tag: bytes = b"") -> Transaction:
    return Transaction(f"client-{v}", 0, tag or f"tx-{v}".encode())


def _proposal(validators, h: int, r: int, proposer: str, txs) -> Block:
    genesis = make_genesis(validators)
    return Block(h, hash_block(genesis.block), proposer, r, tuple(txs))


def scenario_safety_attack(variant: str = "ibft", n: int = 4, seed: int = 0) -> ScenarioRun:
    """Wrong-size commit seals split the honest validators: one finalises B
    while the rest unlock, round-change, and finalise a different B'.

    Scripted at n=4: v0 is the lone well-served honest validator, v3 is
    Byzantine, v1/v2 receive the malformed seals.
    """
    if n != 4:
        raise ValueError("the safety attack is scripted for n=4")
    validators = default_validators(n)
    t_a, t_b = _pool_tx("v1", b"T"), _pool_tx("v2", b"T-prime")
    block_a = _proposal(validators, 1, 0, "v1", [t_a])
    block_b = _proposal(validators, 1, 1, "v2", [t_b])
    d_a, d_b = hash_block(block_a), hash_block(block_b)

    config = SimConfig(
        variant_name=variant,
        validators=validators,
        byzantine=frozenset({"v3"}),
        gst=10_000,
        delta=1,
        t0=1024,
        seed=seed,
        max_ticks=40,
    )
    sched = Schedule(
        config,
        pools=[PoolEntry("v1", t_a), PoolEntry("v2", t_b)],
        msg_directives=[
            MsgDirective(action="drop", kind="commit", src=("v0",), dst=("v1", "v2")),
            MsgDirective(action="drop", kind="finalised-block", src=("v0",), dst=("v1", "v2", "v3")),
        ],
        byz_directives=[
            silent("v3", 0),
            send_prepare("v3", 1, 1, 0, d_a),
            send_commit("v3", 2, 1, 0, d_a, to="v0"),
            send_commit("v3", 2, 1, 0, d_a, to="v1,v2", seal_len=64),
            send_round_change("v3", 3, 1, 1),
            send_prepare("v3", 5, 1, 1, d_b),
            send_commit("v3", 6, 1, 1, d_b),
        ],
    )
    expectations = {
        "ibft": [("ibfp_safety", "violated"), ("persistence_i", "violated")],
        "ibft-m1": [("ibfp_safety", "holds"), ("persistence_i", "holds")],
    }[variant]
    sched.expectations = list(expectations)

    sa, sb = hash_block(block_a).hex()[:12], hash_block(block_b).hex()[:12]
    golden = {
        "ibft": (
            # 1: the round-0 proposer proposes B
            f"node=v1 send kind=preprepare h=1 r=0 d={sa}",
            # 2: every validator (v3 by script) prepares B
            f"node=v0 send kind=prepare h=1 r=0 d={sa}",
            f"node=v2 send kind=prepare h=1 r=0 d={sa}",
            f"node=v3 byz-send kind=prepare h=1 r=0 d={sa}",
            # 3: the honest validators lock on B and commit
            f"node=v0 lock h=1 r=0 d={sa}",
            f"node=v1 lock h=1 r=0 d={sa}",
            f"node=v2 lock h=1 r=0 d={sa}",
            # 4: well-formed Byzantine commit to v0 only
            f"node=v3 byz-send kind=commit h=1 r=0 d={sa} seal_len=65 to=v0",
            # 5: wrong-size commit seals to the other honest validators
            f"node=v3 byz-send kind=commit h=1 r=0 d={sa} seal_len=64 to=v1,v2",
            # 6: v0 finalises B; v1/v2 unlock and round-change
            f"node=v0 finalise h=1 r=0 d={sa}",
            "node=v1 unlock h=1",
            "node=v1 send kind=round-change h=1 r=1",
            "node=v2 unlock h=1",
            "node=v2 send kind=round-change h=1 r=1",
            # 7: Byzantine round-change joins in
            "node=v3 byz-send kind=round-change h=1 r=1",
            # 8: quorum of round-changes starts round 1
            "node=v1 guard gc=fpgc7 h=1 r=1",
            "node=v2 guard gc=fpgc7 h=1 r=1",
            # 9: the round-1 proposer proposes a different block B'
            f"node=v2 send kind=preprepare h=1 r=1 d={sb}",
            # 10: remaining validators prepare B'
            f"node=v1 send kind=prepare h=1 r=1 d={sb}",
            f"node=v3 byz-send kind=prepare h=1 r=1 d={sb}",
            # 11: they lock on B'
            f"node=v1 lock h=1 r=1 d={sb}",
            f"node=v2 lock h=1 r=1 d={sb}",
            # 12: and finalise B', conflicting with v0's B
            f"node=v1 finalise h=1 r=1 d={sb}",
            f"node=v2 finalise h=1 r=1 d={sb}",
        ),
        "ibft-m1": (
            f"node=v0 lock h=1 r=0 d={sa}",
            f"node=v3 byz-send kind=commit h=1 r=0 d={sa} seal_len=64 to=v1,v2",
            f"node=v0 finalise h=1 r=0 d={sa}",
            # the malformed seals are refused by the commit-quorum guard
            "node=v1 pm2-reject from=v3",
            "node=v2 pm2-reject from=v3",
        ),
    }[variant]
    return ScenarioRun("safety-attack", sched, golden)


def scenario_partition_persistence(
    variant: str = "ibft", n: int = 4, t: int = 1, seed: int = 0
) -> ScenarioRun:
    """Pre-GST partition: v1..v3 finalise height 1 among themselves while v0
    receives nothing; the Byzantine validator then fail-stops. Without a
    resync mechanism v0 misses the block forever; with periodic sync it
    catches up within delta of the first post-GST sync tick."""
    if n != 4 or t != 1:
        raise ValueError("the partition counterexample is scripted for n=4, t=1")
    validators = default_validators(n)
    config = SimConfig(
        variant_name=variant,
        validators=validators,
        byzantine=frozenset({"v3"}),
        gst=10,
        delta=1,
        t0=16,
        seed=seed,
        max_ticks=60 if variant == "ibft" else 12,
        sync_interval=5,
    )
    sched = Schedule(
        config,
        pools=[PoolEntry("v1", _pool_tx("v1", b"T-W"))],
        msg_directives=[
            MsgDirective(action="drop", src=("v1",), dst=("v0",), before=10),
            MsgDirective(action="drop", src=("v2",), dst=("v0",), before=10),
            MsgDirective(action="drop", src=("v3",), dst=("v0",), before=10),
        ],
        byz_directives=[crash("v3", 4)],
    )
    expectations = {
        "ibft": [
            ("persistence_ii", "violated"),
            ("persistence_i", "holds"),
            ("ibfp_safety", "holds"),
        ],
        "ibft-m1": [("persistence_ii", "holds"), ("ibfp_safety", "holds")],
    }[variant]
    sched.expectations = list(expectations)
    golden = {
        "ibft": (
            "node=v1 finalise h=1 r=0",
            "node=v1 drop kind=finalised-block h=1",
            "node=v3 crash",
        ),
        "ibft-m1": (
            "node=v1 finalise h=1 r=0",
            "node=v3 crash",
            "t=10 node=v0 sync-request h=1",
            "t=10 node=v1 sync-reply kind=finalised-block h=1",
            "t=11 node=v0 append h=1",
        ),
    }[variant]
    return ScenarioRun("partition-persistence", sched, golden)


def _lock_split_case1(variant: str, n: int, seed: int) -> ScenarioRun:
    """One fail-stop fault is enough to freeze the protocol: the minority V
    locks on the round-0 block, the rest lock on the round-1 block after the
    faulty validator prepares and stops, and no class can reach a quorum."""
    validators = default_validators(n)
    if n == 7:
        v_side, w_side, faulty = ("v0", "v5"), ("v1", "v2", "v3", "v4", "v6"), "v6"
    elif n == 4:
        v_side, w_side, faulty = ("v0",), ("v1", "v2", "v3"), "v3"
    else:
        raise ValueError("lock-split case 1 is scripted for n in {4, 7}")
    config = SimConfig(
        variant_name=variant,
        validators=validators,
        byzantine=frozenset(),
        gst=24,
        delta=1,
        t0=16,
        seed=seed,
        max_ticks=40,
        allow_honest_crash=True,
    )
    sched = Schedule(
        config,
        pools=[PoolEntry("v1", _pool_tx("v1")), PoolEntry("v2", _pool_tx("v2"))],
        msg_directives=[
            MsgDirective(action="drop", kind="prepare", h=1, r=0, dst=w_side, before=24),
        ],
        byz_directives=[crash(faulty, 19)],
    )
    sched.expectations = [
        ("lock_split_deadlock", "violated"),
        ("ibfp_safety", "holds"),
        ("persistence_i", "holds"),
    ]
    b0 = _proposal(validators, 1, 0, "v1", [_pool_tx("v1")])
    b1 = _proposal(validators, 1, 1, "v2", [_pool_tx("v2")])
    s0, s1 = hash_block(b0).hex()[:12], hash_block(b1).hex()[:12]
    golden = (
        f"node=v1 send kind=preprepare h=1 r=0 d={s0}",
        f"node={v_side[0]} lock h=1 r=0 d={s0}",
        f"node={v_side[0]} guard gc=fpgc6 h=1 r=0",
        f"node=v2 send kind=preprepare h=1 r=1 d={s1}",
        f"node={v_side[0]} send kind=round-change h=1 r=2",
        f"node={faulty} send kind=prepare h=1 r=1 d={s1}",
        f"node={faulty} crash",
        f"node=v1 lock h=1 r=1 d={s1}",
        f"node=v2 lock h=1 r=1 d={s1}",
    )
    name = "liveness-case1" if variant == "ibft" else "liveness-case3-m1"
    return ScenarioRun(name, sched, golden)


def scenario_liveness_case1(variant: str = "ibft", n: int = 7, seed: int = 0) -> ScenarioRun:
    return _lock_split_case1(variant, n, seed)


def scenario_liveness_case2(variant: str = "ibft", n: int = 6, seed: int = 0) -> ScenarioRun:
    """The n=6 pathology (quorum(6)=3): three disjoint lock classes of sizes
    2/1/2 across rounds 0..2, again with a single fail-stop fault."""
    if n != 6 or variant != "ibft":
        raise ValueError("lock-split case 2 is the base-variant n=6 pathology")
    validators = default_validators(n)
    # V = {v0, v1} locks round 0; Z = {v5} locks round 1; W = {v2, v3, v4}
    # holds the round-1/2 proposers and the faulty validator v4.
    config = SimConfig(
        variant_name=variant,
        validators=validators,
        byzantine=frozenset(),
        gst=56,
        delta=1,
        t0=16,
        seed=seed,
        max_ticks=64,
        allow_honest_crash=True,
    )
    sched = Schedule(
        config,
        pools=[
            PoolEntry("v1", _pool_tx("v1")),
            PoolEntry("v2", _pool_tx("v2")),
            PoolEntry("v3", _pool_tx("v3")),
        ],
        msg_directives=[
            MsgDirective(
                action="drop", kind="prepare", h=1, r=0, dst=("v2", "v3", "v4", "v5"), before=56
            ),
            MsgDirective(action="drop", kind="prepare", h=1, r=1, dst=("v2", "v3", "v4"), before=56),
        ],
        byz_directives=[crash("v4", 51)],
    )
    sched.expectations = [
        ("lock_split_deadlock", "violated"),
        ("ibfp_safety", "holds"),
        ("persistence_i", "holds"),
    ]
    b0 = _proposal(validators, 1, 0, "v1", [_pool_tx("v1")])
    b1 = _proposal(validators, 1, 1, "v2", [_pool_tx("v2")])
    b2 = _proposal(validators, 1, 2, "v3", [_pool_tx("v3")])
    s0, s1, s2 = (hash_block(b).hex()[:12] for b in (b0, b1, b2))
    golden = (
        f"node=v1 send kind=preprepare h=1 r=0 d={s0}",
        f"node=v0 lock h=1 r=0 d={s0}",
        f"node=v1 lock h=1 r=0 d={s0}",
        f"node=v2 send kind=preprepare h=1 r=1 d={s1}",
        f"node=v5 lock h=1 r=1 d={s1}",
        f"node=v3 send kind=preprepare h=1 r=2 d={s2}",
        "node=v4 crash",
        f"node=v2 lock h=1 r=2 d={s2}",
        f"node=v3 lock h=1 r=2 d={s2}",
    )
    return ScenarioRun("liveness-case2", sched, golden)


def scenario_liveness_case3_m1(n: int = 4, seed: int = 0) -> ScenarioRun:
    """Case 1 with the hardened variant's quorum: locks are permanent, so the
    split is terminal by construction."""
    return _lock_split_case1("ibft-m1", n, seed)


def scenario_happy_path(variant: str = "ibft", n: int = 4, seed: int = 0) -> ScenarioRun:
    validators = default_validators(n)
    config = SimConfig(
        variant_name=variant,
        validators=validators,
        gst=0,
        delta=1,
        t0=64,
        seed=seed,
        max_ticks=30,
        stop_condition="height:1",
    )
    sched = Schedule(config, pools=[PoolEntry(v, _pool_tx(v)) for v in validators])
    sched.expectations = [
        ("weak_liveness", "holds"),
        ("ibfp_safety", "holds"),
        ("persistence_i", "holds"),
    ]
    golden = ("node=v1 send kind=preprepare h=1 r=0", "finalise h=1 r=0")
    return ScenarioRun("happy-path", sched, golden)


def scenario_weak_liveness(variant: str = "ibft-m1", n: int = 4, seed: int = 0) -> ScenarioRun:
    """Up to f(n) validators fail-stop at once; with an honest round-0
    proposer the remaining ones still finalise height 1 in round 0."""
    from .quorum import max_byzantine

    validators = default_validators(n)
    f = max_byzantine(n)
    crashed = validators[-f:] if f else ()
    config = SimConfig(
        variant_name=variant,
        validators=validators,
        byzantine=frozenset(crashed),
        gst=0,
        delta=1,
        t0=64,
        seed=seed,
        max_ticks=20,
        stop_condition="height:1",
    )
    sched = Schedule(
        config,
        pools=[PoolEntry(v, _pool_tx(v)) for v in validators],
        byz_directives=[crash(c, 0) for c in crashed],
    )
    sched.expectations = [("weak_liveness", "holds"), ("ibfp_safety", "holds")]
    golden = ("node=v1 send kind=preprepare h=1 r=0", "finalise h=1 r=0")
    return ScenarioRun("weak-liveness", sched, golden)


SCENARIOS: dict[str, Callable[..., ScenarioRun]] = {
    "safety-attack": scenario_safety_attack,
    "partition-persistence": scenario_partition_persistence,
    "liveness-case1": scenario_liveness_case1,
    "liveness-case2": scenario_liveness_case2,
    "liveness-case3-m1": lambda variant="ibft-m1", n=4, seed=0: scenario_liveness_case3_m1(n, seed),
    "happy-path": scenario_happy_path,
    "weak-liveness": scenario_weak_liveness,
}


def build_scenario(name: str, variant: Optional[str] = None, n: Optional[int] = None, seed: int = 0) -> ScenarioRun:
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}")
    kwargs = {"seed": seed}
    if variant is not None:
        kwargs["variant"] = variant
    if n is not None:
        kwargs["n"] = n
    return SCENARIOS[name](**kwargs)


def run_scenario(run: ScenarioRun, record_trace: bool = True) -> World:
    world = World(run.schedule, record_trace=record_trace)
    world.run()
    return world


def assert_golden(trace: list[str], patterns) -> Optional[str]:
    """First pattern that does not occur in order, or None when all match."""
    idx = 0
    for pattern in patterns:
        while idx < len(trace) and pattern not in trace[idx]:
            idx += 1
        if idx == len(trace):
            return pattern
        idx += 1
    return None


def verdict_report(world: World) -> dict[str, str]:
    return {v.property: v.outcome for v in run_monitors(world)}
