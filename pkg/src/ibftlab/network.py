"""Deterministic discrete-event simulation of the eventually synchronous network.

Time is an integer tick counter. Before GST the schedule may drop or delay
messages arbitrarily; from GST on every send must be delivered within delta
(checked at submit time, a violation aborts the run). Self-deliveries are
immediate and undroppable. Everything that happens is appended to a
bit-stable, line-oriented trace, and a run is a pure function of
(config, schedule, seed).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable, Optional

from .chain import FinalisedBlock, hash_block, recover
from .messages import (
    COMMIT,
    FINALISED_BLOCK,
    PREPARE,
    PREPREPARE,
    ROUND_CHANGE,
    SIGNED_KINDS,
    ProtocolMessage,
    commit_msg,
    finalised_block_msg,
    prepare_msg,
    preprepare_msg,
    round_change_msg,
)
from .chain import CommitSeal, make_genesis
from .schedule import ByzDirective, Schedule, ScheduleError, block_from_hex
from .validator import (
    GUARD_PRIORITY,
    Broadcast,
    Multicast,
    NodeState,
    SetTimer,
    StartInstance,
    StopInstance,
    VARIANTS,
    execute,
    guard_enabled,
    guard_noop,
    ibft_init,
)

# Directive events use their file index as the tie-break sequence number so
# they sort ahead of dynamically created events at the same (tick, node).
_DYNAMIC_SEQ_BASE = 1_000_000


class IllegalScheduleError(RuntimeError):
    pass


class UnforgeabilityError(RuntimeError):
    pass


@dataclass(frozen=True, slots=True)
class Envelope:
    env_id: int
    msg: ProtocolMessage
    sender: str
    recipient: str
    send_time: int
    deliver_at: int


def _short(d: Optional[bytes]) -> str:
    return d.hex()[:12] if d else "-"


def _msg_fields(msg: ProtocolMessage) -> str:
    r = msg.round if msg.round is not None else "-"
    if msg.kind == PREPREPARE:
        d = hash_block(msg.block)
    elif msg.kind == FINALISED_BLOCK:
        d = hash_block(msg.fb.block)
    else:
        d = msg.digest
    base = f"kind={msg.kind} h={msg.height} r={r} d={_short(d)}"
    if msg.kind == COMMIT:
        base += f" seal_len={msg.seal.length}"
    return base


class World:
    def __init__(
        self,
        schedule: Schedule,
        variant_name: Optional[str] = None,
        record_trace: bool = True,
        deviations=None,
    ):
        self.schedule = schedule.fresh()
        self.config = self.schedule.config
        vname = variant_name or self.config.variant_name
        if vname not in VARIANTS:
            raise ScheduleError(f"unknown variant {vname!r}")
        self.variant = VARIANTS[vname]
        if deviations is None and self.config.fuzz_profile:
            from .byzantine import FuzzDeviations

            deviations = FuzzDeviations(self.config.seed)
        self.deviations = deviations

        self.now = 0
        self._heap: list[tuple] = []
        self._seq = _DYNAMIC_SEQ_BASE
        self.trace: Optional[list[str]] = [] if record_trace else None
        self.created_fbs: list[tuple[int, str, FinalisedBlock]] = []
        self.violations: list[dict] = []
        self.stop_reason = ""
        self.submitted = 0
        self.delivered = 0
        self.dropped = 0

        genesis = make_genesis(self.config.validators)
        self.nodes: dict[str, NodeState] = {}
        self.node_order: tuple[str, ...] = self.config.all_nodes
        pools: dict[str, list] = {}
        for p in self.schedule.pools:
            pools.setdefault(p.node, []).append(p.tx)
        for i, nid in enumerate(self.node_order):
            self.nodes[nid] = NodeState(
                node_id=nid,
                index=i,
                genesis=genesis,
                variant=self.variant,
                t0=self.config.t0,
                commit_as_prepare=self.config.commit_as_prepare,
                pending=pools.get(nid, []),
            )
        self._index = {nid: i for i, nid in enumerate(self.node_order)}
        self._chooses: dict[tuple[str, int], list[str]] = {}
        for ch in self.schedule.chooses:
            self._chooses.setdefault((ch.node, ch.at), []).append(ch.gc)
        self._validate_and_queue_directives()
        self._started = False

    # -- setup ---------------------------------------------------------------

    def _validate_and_queue_directives(self) -> None:
        byz = self.config.byzantine
        for i, d in enumerate(self.schedule.byz_directives):
            if d.node not in self.nodes:
                raise ScheduleError(f"directive for unknown node {d.node!r}")
            if d.action == "crash":
                if d.node not in byz and not self.config.allow_honest_crash:
                    raise ScheduleError(
                        f"crash of honest node {d.node} requires allow_honest_crash"
                    )
            elif d.node not in byz:
                raise ScheduleError(f"byz action {d.action!r} on honest node {d.node}")
            heapq.heappush(self._heap, (d.at, self._index[d.node], i, "byz", d))

    def _push(self, at: int, node_id: str, tag: str, payload) -> int:
        self._seq += 1
        heapq.heappush(self._heap, (at, self._index[node_id], self._seq, tag, payload))
        return self._seq

    def log(self, node_id: str, text: str) -> None:
        if self.trace is not None:
            self.trace.append(f"t={self.now} node={node_id} {text}")

    # -- sending -------------------------------------------------------------

    def _resolve_delivery(self, kind, sender, recipient, h, r, send_time) -> tuple[str, Optional[int]]:
        for d in self.schedule.msg_directives:
            if d.matches(kind, sender, recipient, h, r, send_time):
                return (d.action, d.at)
        if self.deviations is not None:
            fate = self.deviations.message_fate(self, kind, sender, recipient, send_time)
            if fate is not None:
                return fate
        return ("deliver", send_time + 1)

    def _check_legal(self, action: str, at: Optional[int], send_time: int) -> None:
        gst, delta = self.config.gst, self.config.delta
        if action == "drop":
            if send_time >= gst:
                raise IllegalScheduleError(
                    f"drop of message sent at t={send_time} >= gst={gst} is illegal"
                )
            return
        if at < send_time:
            raise IllegalScheduleError(f"delivery at t={at} before send t={send_time}")
        bound = (send_time + delta) if send_time >= gst else (max(send_time, gst) + delta)
        if at > bound:
            raise IllegalScheduleError(
                f"delivery at t={at} exceeds bound {bound} for send t={send_time} (gst={gst}, delta={delta})"
            )

    def submit(self, msg: ProtocolMessage, sender: str, recipients, label: str = "send") -> None:
        node = self.nodes[sender]
        if node.crashed:
            raise IllegalScheduleError(f"crashed node {sender} cannot send at t={self.now}")
        self._check_signer(msg, sender)
        self.log(sender, f"{label} {_msg_fields(msg)} to={','.join(recipients)}")
        if msg.kind == FINALISED_BLOCK and label in ("send", "byz-send"):
            self.created_fbs.append((self.now, sender, msg.fb))
        for recipient in recipients:
            out = msg
            if self.deviations is not None and sender in self.config.byzantine:
                out = self.deviations.mutate_outgoing(self, sender, recipient, msg)
                if out is None:
                    self.log(sender, f"byz-suppress kind={msg.kind} to={recipient}")
                    continue
                self._check_signer(out, sender)
            self.submitted += 1
            if recipient == sender:
                action, at = "deliver", self.now
            else:
                action, at = self._resolve_delivery(
                    out.kind, sender, recipient, out.height, out.round, self.now
                )
                self._check_legal(action, at, self.now)
            if action == "drop":
                self.dropped += 1
                self.log(sender, f"drop {_msg_fields(out)} to={recipient}")
                continue
            self._seq += 1
            env = Envelope(self._seq, out, sender, recipient, self.now, at)
            heapq.heappush(self._heap, (at, self._index[recipient], self._seq, "deliver", env))

    def _check_signer(self, msg: ProtocolMessage, sender: str) -> None:
        if msg.kind in SIGNED_KINDS and msg.signer != sender:
            raise UnforgeabilityError(
                f"{sender} cannot send a message signed by {msg.signer}"
            )
        if msg.kind == COMMIT and msg.seal.signer != msg.signer:
            raise UnforgeabilityError(
                f"{msg.signer} cannot include a commit seal of {msg.seal.signer}"
            )

    # -- event handling ------------------------------------------------------

    def _deliver(self, env: Envelope) -> None:
        node = self.nodes[env.recipient]
        self.delivered += 1
        if node.crashed:
            self.log(env.recipient, f"deliver-crashed {_msg_fields(env.msg)} from={env.sender}")
            return
        mid = node.store.insert(env.msg)
        self.log(
            env.recipient,
            f"deliver {_msg_fields(env.msg)} from={env.sender} env={env.env_id} id={mid}",
        )
        m = env.msg
        if (
            m.kind == COMMIT
            and self.variant.requires_seal_signature
            and recover(m.digest, m.seal) != m.signer
        ):
            self.log(
                env.recipient,
                f"pm2-reject from={m.signer} h={m.height} r={m.round} d={_short(m.digest)} seal_len={m.seal.length}",
            )
        if node.silenced:
            return
        self._run_guards(node)

    def _timer(self, node_id: str, h: int, r: int) -> None:
        node = self.nodes[node_id]
        if node.crashed or node.silenced:
            return
        inst = node.instance
        if inst is None or inst.h != h:
            self.log(node_id, f"timer-discard h={h} r={r}")
            return
        enabled, witness = guard_enabled(node, "fpgc6", self.now)
        if not enabled:
            self.log(node_id, f"timer-discard h={h} r={r}")
            return
        self._fire(node, "fpgc6", witness)
        self._run_guards(node)

    def _sync(self, node_id: str) -> None:
        node = self.nodes[node_id]
        if node.crashed:
            return
        nxt = self.now + self.config.sync_interval
        if nxt <= self.config.max_ticks:
            self._push(nxt, node_id, "sync", None)
        if node.silenced:
            return
        self.log(node_id, f"sync-request h={node.next_height}")
        for peer_id in self.node_order:
            peer = self.nodes[peer_id]
            if peer_id == node_id or peer.crashed or peer.silenced:
                continue
            if len(peer.chain) > node.next_height:
                fb = peer.chain[node.next_height]
                self.submit(finalised_block_msg(fb), peer_id, (node_id,), label="sync-reply")

    def _byz(self, d: ByzDirective) -> None:
        node = self.nodes[d.node]
        if node.crashed:
            raise IllegalScheduleError(f"byz action on crashed node {d.node} at t={self.now}")
        if d.action == "crash":
            node.crashed = True
            self.log(d.node, "crash")
            return
        if d.action == "silent":
            node.silenced = True
            self.log(d.node, "silent")
            return
        validators = self.config.validators
        if d.action == "send":
            msg = self._build_byz_message(d)
            to = d.param("to", "*")
            recipients = validators if to == "*" else tuple(to.split(","))
            self.submit(msg, d.node, recipients, label="byz-send")
            return
        if d.action == "equivocate":
            h, r = int(d.param("h")), int(d.param("r"))
            b1 = block_from_hex(d.param("block1"))
            b2 = block_from_hex(d.param("block2"))
            n = len(validators)
            if validators[(h + r) % n] != d.node:
                raise IllegalScheduleError(
                    f"{d.node} is not the proposer for h={h} r={r}, cannot equivocate"
                )
            left, right = d.param("split").split("|")
            self.submit(preprepare_msg(h, r, b1, d.node), d.node, tuple(left.split(",")), "byz-send")
            self.submit(preprepare_msg(h, r, b2, d.node), d.node, tuple(right.split(",")), "byz-send")
            return
        raise ScheduleError(f"unknown byz action {d.action!r}")

    def _build_byz_message(self, d: ByzDirective) -> ProtocolMessage:
        kind = d.param("kind")
        h = int(d.param("h"))
        if kind == PREPARE:
            return prepare_msg(h, int(d.param("r")), bytes.fromhex(d.param("d")), d.node)
        if kind == COMMIT:
            digest = bytes.fromhex(d.param("d"))
            seal = CommitSeal(d.node, digest, int(d.param("seal_len", "65")))
            return commit_msg(h, int(d.param("r")), digest, seal, d.node)
        if kind == PREPREPARE:
            return preprepare_msg(h, int(d.param("r")), block_from_hex(d.param("block")), d.node)
        if kind == ROUND_CHANGE:
            return round_change_msg(h, int(d.param("r")), d.node)
        raise ScheduleError(f"byz send of unsupported kind {kind!r}")

    # -- guard loop ----------------------------------------------------------

    def _run_guards(self, node: NodeState) -> None:
        pending = self._chooses.pop((node.node_id, self.now), None)
        if pending:
            for gc in pending:
                enabled, witness = guard_enabled(node, gc, self.now)
                self.log(node.node_id, f"choose gc={gc} applied={int(enabled)}")
                if enabled:
                    self._fire(node, gc, witness)
        for _ in range(100_000):
            for gc in GUARD_PRIORITY:
                enabled, witness = guard_enabled(node, gc, self.now)
                if enabled and not guard_noop(node, gc):
                    self._fire(node, gc, witness)
                    break
            else:
                return
        raise RuntimeError(f"guard loop did not quiesce at node {node.node_id}")

    def _fire(self, node: NodeState, gc: str, witness) -> None:
        inst = node.instance
        pre_locked = (inst.h, inst.locked_digest) if inst else None
        pre_height = node.next_height
        actions = execute(node, gc, witness, self.now)

        if gc == "igc1":
            fb = node.chain[-1]
            self.log(node.node_id, f"guard gc=igc1 h={pre_height}")
            self.log(node.node_id, f"append h={pre_height} d={_short(hash_block(fb.block))}")
        else:
            ctx = node.instance if node.instance is not None else inst
            h = ctx.h if ctx else "-"
            r = ctx.r if ctx else "-"
            self.log(node.node_id, f"guard gc={gc} h={h} r={r}")

        post_inst = node.instance
        if pre_locked and post_inst and pre_locked[0] == post_inst.h:
            old, new = pre_locked[1], post_inst.locked_digest
            if old != new:
                honest = node.node_id not in self.config.byzantine
                if old is None:
                    self.log(node.node_id, f"lock h={post_inst.h} r={post_inst.r} d={_short(new)}")
                elif new is None:
                    self.log(node.node_id, f"unlock h={post_inst.h} r={post_inst.r}")
                    if honest and not self.variant.has_seal_size_branch:
                        self.violations.append(
                            {"kind": "lock-monotonicity", "node": node.node_id, "h": post_inst.h}
                        )
                else:
                    self.log(node.node_id, f"relock h={post_inst.h} r={post_inst.r} d={_short(new)}")
                    if honest and self.variant.name == "ibft-m1":
                        self.violations.append(
                            {"kind": "lock-monotonicity", "node": node.node_id, "h": post_inst.h}
                        )

        for action in actions:
            if isinstance(action, Multicast):
                self._note_commit(node, gc, action.msg)
                self.submit(action.msg, node.node_id, action.recipients)
            elif isinstance(action, Broadcast):
                fb = action.msg.fb
                self.log(
                    node.node_id,
                    f"finalise h={fb.block.height} r={post_inst.r} d={_short(hash_block(fb.block))} seals={len(fb.finalisation_proof)}",
                )
                self.submit(action.msg, node.node_id, self.node_order)
            elif isinstance(action, SetTimer):
                self.log(node.node_id, f"timer-set h={action.h} r={action.r} at={action.at}")
                self._push(action.at, node.node_id, "timer", (action.h, action.r))
            elif isinstance(action, StartInstance):
                self.log(node.node_id, f"start-instance h={action.h}")
            elif isinstance(action, StopInstance):
                self.log(node.node_id, f"stop-instance h={action.h}")

    def _note_commit(self, node: NodeState, gc: str, msg: ProtocolMessage) -> None:
        if msg.kind != COMMIT or node.node_id in self.config.byzantine:
            return
        if self.variant.name != "ibft-m1":
            return
        inst = node.instance
        ok = (
            inst is not None
            and msg.height == inst.h
            and inst.locked_digest is not None
            and msg.digest == inst.locked_digest
        )
        if not ok:
            self.violations.append(
                {"kind": "commit-implies-lock", "node": node.node_id, "h": msg.height, "gc": gc}
            )

    # -- main loop -----------------------------------------------------------

    def run(self, stop: Optional[Callable[["World"], bool]] = None) -> "World":
        if self._started:
            raise RuntimeError("a world can only run once")
        self._started = True
        if stop is None and self.config.stop_condition.startswith("height:"):
            stop = stop_when_heights(int(self.config.stop_condition.split(":", 1)[1]))
        for nid in self.node_order:
            node = self.nodes[nid]
            self.log(nid, "init")
            for action in ibft_init(node, now=0):
                self._apply_init_action(node, action)
        if self.variant.periodic_sync and self.config.sync_interval > 0:
            for nid in self.node_order:
                if self.config.sync_interval <= self.config.max_ticks:
                    self._push(self.config.sync_interval, nid, "sync", None)
        if stop is not None and stop(self):
            self.stop_reason = "condition"
            return self

        while self._heap:
            t = self._heap[0][0]
            if t > self.config.max_ticks:
                self.stop_reason = "max_ticks"
                self.now = self.config.max_ticks
                break
            t, node_index, _, tag, payload = heapq.heappop(self._heap)
            self.now = t
            if tag == "deliver":
                self._deliver(payload)
            elif tag == "timer":
                self._timer(self.node_order[node_index], payload[0], payload[1])
            elif tag == "byz":
                self._byz(payload)
            elif tag == "sync":
                self._sync(self.node_order[node_index])
            if stop is not None and stop(self):
                self.stop_reason = "condition"
                break
        else:
            self.stop_reason = "quiescent"

        pending = sum(1 for e in self._heap if e[3] == "deliver")
        assert self.delivered + self.dropped + pending == self.submitted, "envelope conservation"
        return self

    def _apply_init_action(self, node: NodeState, action) -> None:
        if isinstance(action, Multicast):
            self.submit(action.msg, node.node_id, action.recipients)
        elif isinstance(action, SetTimer):
            self.log(node.node_id, f"timer-set h={action.h} r={action.r} at={action.at}")
            self._push(action.at, node.node_id, "timer", (action.h, action.r))
        elif isinstance(action, StartInstance):
            self.log(node.node_id, f"start-instance h={action.h}")

    # -- inspection helpers ----------------------------------------------------

    def honest_ids(self) -> tuple[str, ...]:
        return tuple(n for n in self.node_order if n not in self.config.byzantine)

    def trace_text(self) -> str:
        if self.trace is None:
            raise RuntimeError("trace recording was disabled")
        return "\n".join(self.trace) + "\n"


def stop_when_heights(h: int) -> Callable[[World], bool]:
    """Stop once every live honest validator holds the chain up to height h."""

    def _stop(world: World) -> bool:
        for nid in world.config.validators:
            node = world.nodes[nid]
            if nid in world.config.byzantine or node.crashed:
                continue
            if len(node.chain) < h + 1:
                return False
        return True

    return _stop
