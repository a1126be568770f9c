"""Adversary schedules: the line-oriented text format every run is driven by.

A schedule is a config header (key=value lines) followed by directives:

    pool <node> <sender> <nonce> <hex-payload|->
    expect <property>=<outcome>
    msg [kind=..] [from=..] [to=..] [h=..] [r=..] [before=..] [after=..] [nth=..] -> drop
    msg ... -> deliver@<t>
    byz <node> @<t> crash | silent
    byz <node> @<t> send <kind> h=.. r=.. [d=<hex>] [seal_len=..] [block=<hex>] [to=..]
    byz <node> @<t> equivocate h=.. r=.. block1=<hex> block2=<hex> split=a,b|c,d
    choose <node> @<t> <gc-id>

Directives are matched in file order, first match wins. Any run is
reproducible from the schedule text alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .chain import Transaction, decode_block, encode_block


@dataclass(frozen=True)
class SimConfig:
    variant_name: str = "ibft"
    validators: tuple[str, ...] = ()
    byzantine: frozenset[str] = frozenset()
    extra_nodes: tuple[str, ...] = ()
    gst: int = 0
    delta: int = 1
    t0: int = 16
    seed: int = 0
    max_ticks: int = 100
    commit_as_prepare: bool = False
    allow_honest_crash: bool = False
    sync_interval: int = 5
    fuzz_profile: str = ""
    stop_condition: str = ""  # "" or "height:<h>"

    @property
    def all_nodes(self) -> tuple[str, ...]:
        return self.validators + self.extra_nodes

    @property
    def n(self) -> int:
        return len(self.validators)


@dataclass
class MsgDirective:
    action: str  # "drop" or "deliver"
    at: Optional[int] = None  # deliver time
    kind: Optional[str] = None
    src: Optional[tuple[str, ...]] = None
    dst: Optional[tuple[str, ...]] = None
    h: Optional[int] = None
    r: Optional[int] = None
    before: Optional[int] = None  # matches send_time < before
    after: Optional[int] = None  # matches send_time >= after
    nth: Optional[int] = None  # 1-based occurrence among matches
    seen: int = 0  # runtime match counter

    def matches(self, kind: str, src: str, dst: str, h: int, r: Optional[int], send_time: int) -> bool:
        if self.kind is not None and self.kind != kind:
            return False
        if self.src is not None and src not in self.src:
            return False
        if self.dst is not None and dst not in self.dst:
            return False
        if self.h is not None and self.h != h:
            return False
        if self.r is not None and self.r != r:
            return False
        if self.before is not None and send_time >= self.before:
            return False
        if self.after is not None and send_time < self.after:
            return False
        self.seen += 1
        return self.nth is None or self.seen == self.nth


@dataclass(frozen=True)
class ByzDirective:
    node: str
    at: int
    action: str  # crash | silent | send | equivocate
    params: tuple[tuple[str, str], ...] = ()

    def param(self, key: str, default: Optional[str] = None) -> Optional[str]:
        for k, v in self.params:
            if k == key:
                return v
        return default


@dataclass(frozen=True)
class ChooseDirective:
    node: str
    at: int
    gc: str


@dataclass(frozen=True)
class PoolEntry:
    node: str
    tx: Transaction


@dataclass
class Schedule:
    config: SimConfig
    pools: list[PoolEntry] = field(default_factory=list)
    expectations: list[tuple[str, str]] = field(default_factory=list)
    msg_directives: list[MsgDirective] = field(default_factory=list)
    byz_directives: list[ByzDirective] = field(default_factory=list)
    chooses: list[ChooseDirective] = field(default_factory=list)

    def with_variant(self, variant_name: str, expectations: Optional[list] = None) -> "Schedule":
        return Schedule(
            config=replace(self.config, variant_name=variant_name),
            pools=list(self.pools),
            expectations=list(expectations if expectations is not None else self.expectations),
            msg_directives=[replace(d, seen=0) for d in self.msg_directives],
            byz_directives=list(self.byz_directives),
            chooses=list(self.chooses),
        )

    def fresh(self) -> "Schedule":
        """Copy with runtime match counters reset, safe to run again."""
        return self.with_variant(self.config.variant_name)


_HEADER_KEYS = (
    "variant",
    "n",
    "validators",
    "byzantine",
    "extra_nodes",
    "gst",
    "delta",
    "t0",
    "seed",
    "max_ticks",
    "commit_as_prepare",
    "allow_honest_crash",
    "sync_interval",
    "fuzz_profile",
)


def default_validators(n: int) -> tuple[str, ...]:
    return tuple(f"v{i}" for i in range(n))


def _csv(values) -> str:
    return ",".join(values) if values else "-"


def _uncsv(text: str) -> tuple[str, ...]:
    return () if text == "-" else tuple(text.split(","))


def schedule_to_text(s: Schedule) -> str:
    c = s.config
    lines = [
        "# ibftlab schedule v1",
        f"variant={c.variant_name}",
        f"n={c.n}",
        f"validators={_csv(c.validators)}",
        f"byzantine={_csv(sorted(c.byzantine))}",
        f"extra_nodes={_csv(c.extra_nodes)}",
        f"gst={c.gst}",
        f"delta={c.delta}",
        f"t0={c.t0}",
        f"seed={c.seed}",
        f"max_ticks={c.max_ticks}",
        f"commit_as_prepare={int(c.commit_as_prepare)}",
        f"allow_honest_crash={int(c.allow_honest_crash)}",
        f"sync_interval={c.sync_interval}",
        f"fuzz_profile={c.fuzz_profile or '-'}",
        f"stop={c.stop_condition or '-'}",
    ]
    for p in s.pools:
        payload = p.tx.payload.hex() or "-"
        lines.append(f"pool {p.node} {p.tx.sender} {p.tx.nonce} {payload}")
    for prop, outcome in s.expectations:
        lines.append(f"expect {prop}={outcome}")
    for d in s.msg_directives:
        fields = []
        if d.kind is not None:
            fields.append(f"kind={d.kind}")
        if d.src is not None:
            fields.append(f"from={_csv(d.src)}")
        if d.dst is not None:
            fields.append(f"to={_csv(d.dst)}")
        if d.h is not None:
            fields.append(f"h={d.h}")
        if d.r is not None:
            fields.append(f"r={d.r}")
        if d.before is not None:
            fields.append(f"before={d.before}")
        if d.after is not None:
            fields.append(f"after={d.after}")
        if d.nth is not None:
            fields.append(f"nth={d.nth}")
        rhs = "drop" if d.action == "drop" else f"deliver@{d.at}"
        lines.append(f"msg {' '.join(fields)} -> {rhs}")
    for b in s.byz_directives:
        if b.action in ("crash", "silent"):
            lines.append(f"byz {b.node} @{b.at} {b.action}")
        elif b.action == "send":
            kv = " ".join(f"{k}={v}" for k, v in b.params if k != "kind")
            lines.append(f"byz {b.node} @{b.at} send {b.param('kind')} {kv}")
        elif b.action == "equivocate":
            kv = " ".join(f"{k}={v}" for k, v in b.params)
            lines.append(f"byz {b.node} @{b.at} equivocate {kv}")
        else:
            raise ValueError(f"unknown byz action {b.action}")
    for ch in s.chooses:
        lines.append(f"choose {ch.node} @{ch.at} {ch.gc}")
    return "\n".join(lines) + "\n"


class ScheduleError(ValueError):
    pass


def _parse_kv(tokens: list[str]) -> tuple[tuple[str, str], ...]:
    out = []
    for tok in tokens:
        if "=" not in tok:
            raise ScheduleError(f"expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        out.append((k, v))
    return tuple(out)


def schedule_from_text(text: str) -> Schedule:
    header: dict[str, str] = {}
    pools: list[PoolEntry] = []
    expectations: list[tuple[str, str]] = []
    msg_dirs: list[MsgDirective] = []
    byz_dirs: list[ByzDirective] = []
    chooses: list[ChooseDirective] = []

    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        head = line.split()[0]
        if head == "pool":
            _, node, sender, nonce, payload = line.split()
            data = b"" if payload == "-" else bytes.fromhex(payload)
            pools.append(PoolEntry(node, Transaction(sender, int(nonce), data)))
        elif head == "expect":
            _, kv = line.split(None, 1)
            prop, outcome = kv.split("=", 1)
            expectations.append((prop, outcome))
        elif head == "msg":
            body, _, rhs = line[4:].partition("->")
            rhs = rhs.strip()
            kvs = dict(_parse_kv(body.split()))
            if rhs == "drop":
                action, at = "drop", None
            elif rhs.startswith("deliver@"):
                action, at = "deliver", int(rhs[len("deliver@") :])
            else:
                raise ScheduleError(f"bad msg directive action: {rhs!r}")
            msg_dirs.append(
                MsgDirective(
                    action=action,
                    at=at,
                    kind=kvs.get("kind"),
                    src=_uncsv(kvs["from"]) if "from" in kvs else None,
                    dst=_uncsv(kvs["to"]) if "to" in kvs else None,
                    h=int(kvs["h"]) if "h" in kvs else None,
                    r=int(kvs["r"]) if "r" in kvs else None,
                    before=int(kvs["before"]) if "before" in kvs else None,
                    after=int(kvs["after"]) if "after" in kvs else None,
                    nth=int(kvs["nth"]) if "nth" in kvs else None,
                )
            )
        elif head == "byz":
            tokens = line.split()
            node = tokens[1]
            if not tokens[2].startswith("@"):
                raise ScheduleError(f"byz directive needs @<t>: {line!r}")
            at = int(tokens[2][1:])
            action = tokens[3]
            if action in ("crash", "silent"):
                byz_dirs.append(ByzDirective(node, at, action))
            elif action == "send":
                kind = tokens[4]
                params = (("kind", kind),) + _parse_kv(tokens[5:])
                byz_dirs.append(ByzDirective(node, at, "send", params))
            elif action == "equivocate":
                byz_dirs.append(ByzDirective(node, at, "equivocate", _parse_kv(tokens[4:])))
            else:
                raise ScheduleError(f"unknown byz action: {action!r}")
        elif head == "choose":
            tokens = line.split()
            chooses.append(ChooseDirective(tokens[1], int(tokens[2][1:]), tokens[3]))
        elif "=" in line and " " not in line:
            k, v = line.split("=", 1)
            header[k] = v
        else:
            raise ScheduleError(f"unparseable schedule line: {line!r}")

    n = int(header.get("n", "0"))
    validators = _uncsv(header["validators"]) if "validators" in header else default_validators(n)
    config = SimConfig(
        variant_name=header.get("variant", "ibft"),
        validators=validators,
        byzantine=frozenset(_uncsv(header.get("byzantine", "-"))),
        extra_nodes=_uncsv(header.get("extra_nodes", "-")),
        gst=int(header.get("gst", "0")),
        delta=int(header.get("delta", "1")),
        t0=int(header.get("t0", "16")),
        seed=int(header.get("seed", "0")),
        max_ticks=int(header.get("max_ticks", "100")),
        commit_as_prepare=header.get("commit_as_prepare", "0") == "1",
        allow_honest_crash=header.get("allow_honest_crash", "0") == "1",
        sync_interval=int(header.get("sync_interval", "5")),
        fuzz_profile="" if header.get("fuzz_profile", "-") == "-" else header["fuzz_profile"],
        stop_condition="" if header.get("stop", "-") == "-" else header["stop"],
    )
    if n and len(config.validators) != n:
        raise ScheduleError(f"header n={n} disagrees with {len(config.validators)} validators")
    return Schedule(config, pools, expectations, msg_dirs, byz_dirs, chooses)


def block_to_hex(block) -> str:
    return encode_block(block).hex()


def block_from_hex(text: str):
    return decode_block(bytes.fromhex(text))
