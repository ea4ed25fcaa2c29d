"""Reference VNFs: stateful firewall, NAT, load balancer, trojan detector,
portscan detector, plus a synthetic read/write workload and VNF
modularization.

Cross-flow UDFs are pure functions of (holder reads, packet data, static
config): all shared state goes through the data-holder contract, so they can
run on any executor and replay deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, NamedTuple, Optional


class RequestKind(Enum):
    SSH = "SSH"
    HTTP_DL = "HTTP_DL"
    FTP_DL = "FTP_DL"
    IRC = "IRC"
    OTHER = "OTHER"


class ConnFlag(Enum):
    NEW = "New"
    CONTINUING = "Continuing"
    FAILED = "Failed"


class FlowKey(NamedTuple):
    src: str
    dst: str
    src_port: int
    dst_port: int
    protocol: str

    def label(self) -> str:
        return f"{self.src}:{self.src_port}>{self.dst}:{self.dst_port}/{self.protocol}"


@dataclass(frozen=True)
class PacketEvent:
    flow: FlowKey
    event_id: int
    host: str
    request_kind: str
    connection_flag: str

    def packet_data(self) -> dict[str, Any]:
        return {
            "event_id": self.event_id,
            "flow": self.flow.label(),
            "src": self.flow.src,
            "host": self.host,
            "request_kind": self.request_kind,
            "connection_flag": self.connection_flag,
        }


DEFAULT_MALICIOUS_PATTERN = (
    RequestKind.SSH.value,
    RequestKind.HTTP_DL.value,
    RequestKind.FTP_DL.value,
    RequestKind.IRC.value,
)

DEFAULT_PORTSCAN_THETA = 8


@dataclass(frozen=True)
class PerFlowAction:
    forward: bool = True
    txn_id: Optional[str] = None
    drop_reason: str = ""


# --------------------------------------------------------------------------
# per-flow functions


def firewall_per_flow(packet: PacketEvent, local_state: dict, blocklist=()) -> str:
    """Verdict from the flow's policy entry; unknown flows default to Pass."""
    if "allowed" not in local_state:
        local_state["allowed"] = packet.flow.src not in set(blocklist)
    local_state["packets"] = local_state.get("packets", 0) + 1
    return "Pass" if local_state["allowed"] else "Drop"


# --------------------------------------------------------------------------
# cross-flow functions (data-holder contract)


def nat_cross_flow(holder) -> None:
    ports = holder.get_state_field("available_ports", "ports")
    if not ports:
        holder.notify("port_exhausted", {"flow": holder.get_packet_data("flow")})
        holder.abort_txn("port_exhausted")
        return
    port = min(ports)
    holder.set_state_field("available_ports", "ports", tuple(p for p in ports if p != port))
    count = holder.get_state_field("packet_count", "count")
    holder.set_state_field("packet_count", "count", count + 1)
    holder.notify("port_assigned", {"flow": holder.get_packet_data("flow"), "port": port})


def lb_cross_flow(holder, hosts=()) -> None:
    if not hosts:
        holder.notify("no_hosts", {})
        holder.abort_txn("no_hosts")
        return
    loads = {h: holder.get_state_field("host_load", h) for h in hosts}
    chosen = min(sorted(hosts), key=lambda h: loads[h])
    holder.set_state_field("host_load", chosen, loads[chosen] + 1)
    holder.notify("routed", {"flow": holder.get_packet_data("flow"), "server": chosen})


def matches_pattern(pattern, tokens, contiguous: bool = False) -> bool:
    if not pattern:
        return False
    if contiguous:
        n, m = len(tokens), len(pattern)
        return any(tuple(tokens[i : i + m]) == tuple(pattern) for i in range(n - m + 1))
    it = iter(tokens)
    return all(tok in it for tok in pattern)


def trojan_cross_flow(holder, pattern=DEFAULT_MALICIOUS_PATTERN, contiguous: bool = False) -> None:
    history = holder.get_state_field("request_history", "events")
    new_request = holder.get_packet_data("request_kind")
    combined = tuple(history) + (new_request,)
    if matches_pattern(pattern, combined, contiguous=contiguous):
        holder.notify("alarm", {"host": holder.get_packet_data("host")})
        holder.abort_txn("malicious")
        return
    holder.set_state_field("request_history", "events", combined)


def portscan_cross_flow(holder, theta: int = DEFAULT_PORTSCAN_THETA) -> None:
    score = holder.get_state_field("portscan_likelihood", "score")
    flag = holder.get_packet_data("connection_flag")
    if flag == ConnFlag.FAILED.value:
        new_score = score + 1
    elif flag == ConnFlag.NEW.value:
        new_score = max(0, score - 1)
    else:
        new_score = score
    if new_score >= theta and score < theta:
        holder.notify("portscan_flag", {"src": holder.get_packet_data("src")})
    holder.set_state_field("portscan_likelihood", "score", new_score)


def rw_cross_flow(holder) -> None:
    """Synthetic keyed counter used by randomized workloads."""
    if holder.txn_id == "r_txn":
        holder.get_state_field("kv", "v")
        return
    if holder.txn_id == "w_txn":
        holder.set_state_field("kv", "v", holder.get_packet_data("value"))
        return
    value = holder.get_state_field("kv", "v")
    holder.set_state_field("kv", "v", value + holder.get_packet_data("delta"))


# --------------------------------------------------------------------------
# registry wiring per-flow behaviour to txn issuance


@dataclass(frozen=True)
class UdfSet:
    per_flow: Callable[[PacketEvent, dict, dict], PerFlowAction]
    cross_flow: Optional[Callable] = None  # bound with config at resolve time
    on_result: Optional[Callable] = None  # (event, flow_state, outcome) at delivery


def _firewall_pf(event, flow_state, config):
    verdict = firewall_per_flow(event, flow_state, blocklist=config.get("blocklist", ()))
    return PerFlowAction(forward=verdict == "Pass", drop_reason="" if verdict == "Pass" else "policy")


def _nat_pf(event, flow_state, config):
    if event.connection_flag == ConnFlag.NEW.value:
        return PerFlowAction(txn_id=config.get("txn", "nat_txn"))
    return PerFlowAction()


def _nat_result(event, flow_state, outcome):
    for kind, data in outcome.events:
        if kind == "port_assigned":
            flow_state["port"] = data["port"]


def _lb_pf(event, flow_state, config):
    if event.connection_flag == ConnFlag.NEW.value:
        return PerFlowAction(txn_id=config.get("txn", "lb_txn"))
    return PerFlowAction()


def _lb_result(event, flow_state, outcome):
    for kind, data in outcome.events:
        if kind == "routed":
            flow_state["server"] = data["server"]


def _trojan_pf(event, flow_state, config):
    return PerFlowAction(txn_id=config.get("txn", "td_txn"))


def _portscan_pf(event, flow_state, config):
    if event.connection_flag in (ConnFlag.NEW.value, ConnFlag.FAILED.value):
        return PerFlowAction(txn_id=config.get("txn", "ps_txn"))
    return PerFlowAction()


def _rw_pf(event, flow_state, config):
    return PerFlowAction(txn_id=config.get("txn", "rw_txn"))


REGISTRY: dict[str, UdfSet] = {
    "firewall": UdfSet(per_flow=_firewall_pf),
    "nat": UdfSet(per_flow=_nat_pf, cross_flow=lambda config: nat_cross_flow, on_result=_nat_result),
    "lb": UdfSet(
        per_flow=_lb_pf,
        cross_flow=lambda config: (lambda holder: lb_cross_flow(holder, hosts=tuple(config.get("hosts", ())))),
        on_result=_lb_result,
    ),
    "trojan": UdfSet(
        per_flow=_trojan_pf,
        cross_flow=lambda config: (
            lambda holder: trojan_cross_flow(
                holder,
                pattern=tuple(config.get("pattern", DEFAULT_MALICIOUS_PATTERN)),
                contiguous=config.get("contiguous", False),
            )
        ),
    ),
    "portscan": UdfSet(
        per_flow=_portscan_pf,
        cross_flow=lambda config: (
            lambda holder: portscan_cross_flow(holder, theta=config.get("theta", DEFAULT_PORTSCAN_THETA))
        ),
    ),
    "rw": UdfSet(per_flow=_rw_pf, cross_flow=lambda config: rw_cross_flow),
}


def resolve_udfs(per_flow_name: str, cross_flow_name: Optional[str], config: dict):
    """Look up built-in UDF handles named by a job document."""
    per_flow_set = REGISTRY[per_flow_name]
    cross = None
    if cross_flow_name is not None:
        cross = REGISTRY[cross_flow_name].cross_flow(config)
    return per_flow_set.per_flow, cross, per_flow_set.on_result


# --------------------------------------------------------------------------
# VNF modularization


@dataclass
class ModuleGraph:
    """Merged module DAG with a placement of each instance on an executor."""

    instances: list[str]
    edges: set[tuple[str, str]]
    members: dict[tuple[str, str], str]  # (vnf, module) -> instance
    placement: dict[str, int]


def modularize(vnf_modules: dict[str, dict[str, list[str]]]) -> ModuleGraph:
    """Merge equal modules across VNFs and place instances near consumers.

    `vnf_modules` maps vnf -> module -> list of upstream modules. Modules
    merge when their names and entire upstream signatures coincide; each
    merged instance is placed on the executor of the consumer with the most
    edges to it (sinks anchor to their VNF's slot).
    """
    signatures: dict[tuple[str, str], tuple] = {}

    def signature(vnf: str, module: str) -> tuple:
        key = (vnf, module)
        if key not in signatures:
            ups = tuple(sorted(signature(vnf, u) for u in vnf_modules[vnf].get(module, ())))
            signatures[key] = (module, ups)
        return signatures[key]

    instance_of: dict[tuple, str] = {}
    members: dict[tuple[str, str], str] = {}
    instances: list[str] = []
    for vnf in sorted(vnf_modules):
        for module in sorted(vnf_modules[vnf]):
            sig = signature(vnf, module)
            if sig not in instance_of:
                name = f"{module}#{len([i for i in instances if i.startswith(module + '#')])}"
                instance_of[sig] = name
                instances.append(name)
            members[(vnf, module)] = instance_of[sig]

    edges: set[tuple[str, str]] = set()
    for vnf, modules in vnf_modules.items():
        for module, ups in modules.items():
            for up in ups:
                edges.add((members[(vnf, up)], members[(vnf, module)]))

    vnf_slot = {vnf: i for i, vnf in enumerate(sorted(vnf_modules))}
    consumers: dict[str, list[str]] = {i: [] for i in instances}
    for src, dst in edges:
        consumers[src].append(dst)

    placement: dict[str, int] = {}
    sink_anchor: dict[str, int] = {}
    for vnf, modules in vnf_modules.items():
        used_upstream = {u for ups in modules.values() for u in ups}
        for module in modules:
            if module not in used_upstream:
                inst = members[(vnf, module)]
                slot = vnf_slot[vnf]
                sink_anchor[inst] = min(sink_anchor.get(inst, slot), slot)

    # reverse-topological pass: consumers are placed before their producers
    remaining = dict(consumers)
    ordered: list[str] = []
    placed: set[str] = set()
    while remaining:
        progressed = False
        for inst in sorted(remaining):
            if all(c in placed for c in remaining[inst]):
                ordered.append(inst)
                placed.add(inst)
                del remaining[inst]
                progressed = True
        if not progressed:  # cyclic declaration; fall back to name order
            ordered.extend(sorted(remaining))
            break

    for inst in ordered:
        if inst in sink_anchor and not consumers[inst]:
            placement[inst] = sink_anchor[inst]
            continue
        votes: dict[int, int] = {}
        for consumer in consumers[inst]:
            slot = placement.get(consumer)
            if slot is not None:
                votes[slot] = votes.get(slot, 0) + 1
        if votes:
            best = max(sorted(votes), key=lambda s: votes[s])
            placement[inst] = best
        else:
            placement[inst] = sink_anchor.get(inst, 0)

    return ModuleGraph(instances=instances, edges=edges, members=members, placement=placement)
