"""Runtime monitors: safety, persistence (i)/(ii), lock-split deadlock.

Monitors inspect a finished world. A `violated` verdict always carries
concrete evidence; `inconclusive` means the run ended before the property
could be decided at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass

from .chain import FinalisedBlock, hash_block, is_valid_finalisation_proof, validator_set
from .network import World

HOLDS = "holds"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class MonitorVerdict:
    property: str
    outcome: str
    evidence: str = ""

    def line(self) -> str:
        ev = f" evidence={self.evidence}" if self.evidence else ""
        return f"property={self.property} outcome={self.outcome}{ev}"


def _valid_fbs_by_height(world: World) -> dict[int, dict[bytes, FinalisedBlock]]:
    """Validate every finalised block that ever appeared, level by level.

    A block at height h counts as valid when its proof meets the variant's
    quorum against the static validator set and its parent is a valid block
    at h-1 (the genesis anchors the recursion).
    """
    validators = world.config.validators
    genesis = world.nodes[world.node_order[0]].genesis
    valid: dict[int, dict[bytes, FinalisedBlock]] = {0: {hash_block(genesis.block): genesis}}
    by_height: dict[int, list[FinalisedBlock]] = {}
    for _, _, fb in world.created_fbs:
        by_height.setdefault(fb.block.height, []).append(fb)
    for h in sorted(by_height):
        if h < 1:
            continue
        parents = valid.get(h - 1, {})
        for fb in by_height[h]:
            if fb.block.parent_digest not in parents:
                continue
            if fb.block.height != h:
                continue
            if not is_valid_finalisation_proof(fb, validators, world.variant):
                continue
            valid.setdefault(h, {})[hash_block(fb.block)] = fb
    return valid


def check_ibfp_safety(world: World) -> MonitorVerdict:
    """Violated iff two valid finalised blocks for one height contain
    different blocks."""
    valid = _valid_fbs_by_height(world)
    for h in sorted(k for k in valid if k >= 1):
        digests = sorted(d.hex()[:12] for d in valid[h])
        if len(digests) > 1:
            return MonitorVerdict(
                "ibfp_safety", VIOLATED, f"h={h} blocks={','.join(digests)}"
            )
    return MonitorVerdict("ibfp_safety", HOLDS)


def _honest_chains(world: World):
    for nid in world.config.validators + world.config.extra_nodes:
        if nid in world.config.byzantine:
            continue
        yield nid, world.nodes[nid].chain


def check_persistence_i(world: World) -> MonitorVerdict:
    """Violated iff two honest ledgers disagree at some position."""
    chains = list(_honest_chains(world))
    max_len = max(len(c) for _, c in chains)
    for h in range(1, max_len):
        seen: dict[bytes, str] = {}
        for nid, chain in chains:
            if len(chain) <= h:
                continue
            d = hash_block(chain[h].block)
            for other_d, other_nid in seen.items():
                if other_d != d:
                    idx = _first_divergent_tx(chain[h].block, world.nodes[other_nid].chain[h].block)
                    return MonitorVerdict(
                        "persistence_i",
                        VIOLATED,
                        f"position=({h},{idx}) {nid}={d.hex()[:12]} {other_nid}={other_d.hex()[:12]}",
                    )
            seen[d] = nid
    return MonitorVerdict("persistence_i", HOLDS)


def _first_divergent_tx(a, b) -> int:
    for i, (ta, tb) in enumerate(zip(a.transactions, b.transactions)):
        if ta != tb:
            return i
    return min(len(a.transactions), len(b.transactions))


def check_persistence_ii(world: World) -> MonitorVerdict:
    """Violated iff an honest node permanently misses a block another honest
    node holds: post-GST, nothing in flight can deliver it, and no validator
    still on that height can assemble a finalisation threshold."""
    chains = list(_honest_chains(world))
    shortest_id, shortest = min(chains, key=lambda item: (len(item[1]), item[0]))
    longest_id, longest = max(chains, key=lambda item: (len(item[1]), item[0]))
    if len(shortest) >= len(longest):
        return MonitorVerdict("persistence_ii", HOLDS)
    missing_h = len(shortest)
    evidence = f"node={shortest_id} missing_h={missing_h} holder={longest_id}"
    if world.now < world.config.gst:
        return MonitorVerdict("persistence_ii", INCONCLUSIVE, evidence + " pre-gst")
    for entry in world._heap:
        if entry[3] != "deliver":
            continue
        env = entry[4]
        if env.recipient == shortest_id and env.msg.kind == "finalised-block":
            if env.msg.fb.block.height == missing_h:
                return MonitorVerdict("persistence_ii", INCONCLUSIVE, evidence + " in-flight")
    if world.variant.periodic_sync:
        return MonitorVerdict("persistence_ii", INCONCLUSIVE, evidence + " sync-pending")
    if world.stop_reason == "quiescent":
        return MonitorVerdict("persistence_ii", VIOLATED, evidence)
    # Not quiescent: certify only when no validator still running the missing
    # instance can ever collect a finalisation threshold of commits.
    in_instance = [
        nid
        for nid, _ in chains
        if nid in world.config.validators
        and not world.nodes[nid].crashed
        and world.nodes[nid].next_height == missing_h
    ]
    live_byz = sum(
        1 for b in world.config.byzantine if b in world.nodes and not world.nodes[b].crashed
    )
    threshold = world.variant.quorum_fn(world.config.n)
    if len(in_instance) + live_byz < threshold:
        return MonitorVerdict("persistence_ii", VIOLATED, evidence)
    return MonitorVerdict("persistence_ii", INCONCLUSIVE, evidence)


def check_lock_split_deadlock(world: World) -> MonitorVerdict:
    """Certify a terminal lock split: every lock class, even helped by all
    live Byzantine validators and all unlocked honest ones, stays below the
    finalisation threshold, and no unlock path exists."""
    live_honest = [
        nid
        for nid in world.config.validators
        if nid not in world.config.byzantine and not world.nodes[nid].crashed
    ]
    if not live_honest:
        return MonitorVerdict("lock_split_deadlock", INCONCLUSIVE, "no live honest validators")
    h_star = min(world.nodes[nid].next_height for nid in live_honest)
    if any(fb.block.height == h_star for _, _, fb in world.created_fbs):
        return MonitorVerdict("lock_split_deadlock", HOLDS, f"finalisation exists for h={h_star}")
    classes: dict[bytes, list[str]] = {}
    unlocked: list[str] = []
    for nid in live_honest:
        node = world.nodes[nid]
        inst = node.instance
        if inst is None or inst.h != h_star:
            continue
        if inst.locked_digest is None:
            unlocked.append(nid)
        else:
            classes.setdefault(inst.locked_digest, []).append(nid)
    if not classes:
        return MonitorVerdict("lock_split_deadlock", HOLDS, f"no locks held for h={h_star}")
    live_byz = sum(
        1 for b in world.config.byzantine if b in world.nodes and not world.nodes[b].crashed
    )
    helpers = live_byz + len(unlocked)
    threshold = world.variant.quorum_fn(world.config.n)
    sizes = sorted(
        (d.hex()[:12], len(members)) for d, members in classes.items()
    )
    evidence = f"h={h_star} threshold={threshold} classes=" + ",".join(
        f"{d}:{k}" for d, k in sizes
    )
    if helpers >= threshold:
        return MonitorVerdict("lock_split_deadlock", HOLDS, evidence + " helpers-can-finalise")
    for _, k in sizes:
        if k + helpers >= threshold:
            return MonitorVerdict("lock_split_deadlock", HOLDS, evidence + " class-can-finalise")
    return MonitorVerdict("lock_split_deadlock", VIOLATED, evidence)


def check_weak_liveness(world: World, height: int = 1) -> MonitorVerdict:
    """Holds when an honest validator produced a valid finalised block for
    the height; a certified lock split upgrades the failure to violated."""
    valid = _valid_fbs_by_height(world)
    for t, creator, fb in world.created_fbs:
        if fb.block.height != height or creator in world.config.byzantine:
            continue
        if hash_block(fb.block) in valid.get(height, {}):
            return MonitorVerdict("weak_liveness", HOLDS, f"h={height} t={t} by={creator}")
    deadlock = check_lock_split_deadlock(world)
    if deadlock.outcome == VIOLATED:
        return MonitorVerdict("weak_liveness", VIOLATED, deadlock.evidence)
    return MonitorVerdict("weak_liveness", INCONCLUSIVE, f"h={height} not finalised")


def run_monitors(world: World) -> list[MonitorVerdict]:
    return [
        check_ibfp_safety(world),
        check_persistence_i(world),
        check_persistence_ii(world),
        check_lock_split_deadlock(world),
        check_weak_liveness(world),
    ]


def lock_class_sizes(world: World) -> list[int]:
    """Ascending sizes of the honest lock classes at the lowest open height."""
    live_honest = [
        nid
        for nid in world.config.validators
        if nid not in world.config.byzantine and not world.nodes[nid].crashed
    ]
    h_star = min(world.nodes[nid].next_height for nid in live_honest)
    classes: dict[bytes, int] = {}
    for nid in live_honest:
        inst = world.nodes[nid].instance
        if inst is not None and inst.h == h_star and inst.locked_digest is not None:
            classes[inst.locked_digest] = classes.get(inst.locked_digest, 0) + 1
    return sorted(classes.values())
