import logging
from collections.abc import Iterable
from dataclasses import dataclass, field
from enum import StrEnum
from functools import cached_property
from typing import Self

from pydantic import Field

from ._errors import ConfigError, UnknownNodeError
from ._model import FrozenModel

logger = logging.getLogger(__name__)


class Tier(StrEnum):
    IOT = "iot"
    FOG = "fog"
    CLOUD = "cloud"


class NodeSpec(FrozenModel):
    id: str
    tier: Tier
    capacity: float = Field(gt=0)
    busy_power: float = Field(default=0.0, ge=0)
    idle_power: float = Field(default=0.0, ge=0)
    compromised: bool = False


class LinkProfile(FrozenModel):
    bandwidth: float = Field(gt=0)
    propagation: float = Field(default=0.0, ge=0)
    tx_power: float = Field(default=0.0, ge=0)


class LinkSpec(LinkProfile):
    source: str
    target: str


class TopologyConfig(FrozenModel):
    """
    Topology section of an experiment.

    Links missing from `links` are filled from the default profiles: every IoT
    device gets `default_fog_link` to each fog node and `default_cloud_link`
    to the cloud.
    """

    nodes: list[NodeSpec]
    links: list[LinkSpec] = []
    default_fog_link: LinkProfile | None = None
    default_cloud_link: LinkProfile | None = None


class TargetKind(StrEnum):
    LOCAL = "local"
    FOG = "fog"
    CLOUD = "cloud"


@dataclass(frozen=True)
class OffloadTarget:
    kind: TargetKind
    node_id: str


@dataclass(frozen=True)
class Topology:
    nodes: tuple[NodeSpec, ...]
    links: tuple[LinkSpec, ...]
    _by_id: dict[str, NodeSpec] = field(init=False, repr=False, compare=False)
    _links: dict[tuple[str, str], LinkSpec] = field(
        init=False, repr=False, compare=False
    )

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {n.id: n for n in self.nodes})
        object.__setattr__(self, "_links", {(l.source, l.target): l for l in self.links})

    def node(self, node_id: str) -> NodeSpec:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise UnknownNodeError(f"unknown node {node_id!r}") from None

    def link(self, source: str, target: str) -> LinkSpec:
        try:
            return self._links[(source, target)]
        except KeyError:
            raise UnknownNodeError(f"no link {source!r} -> {target!r}") from None

    @cached_property
    def iot(self) -> tuple[NodeSpec, ...]:
        return tuple(sorted((n for n in self.nodes if n.tier is Tier.IOT), key=_node_id))

    @cached_property
    def fog(self) -> tuple[NodeSpec, ...]:
        return tuple(sorted((n for n in self.nodes if n.tier is Tier.FOG), key=_node_id))

    @cached_property
    def cloud(self) -> NodeSpec:
        return next(n for n in self.nodes if n.tier is Tier.CLOUD)

    @property
    def action_count(self) -> int:
        return len(self.fog) + 2

    def with_compromised(self, node_ids: Iterable[str]) -> Self:
        """Copy of the topology with exactly the given nodes flagged as compromised."""
        marked = set(node_ids)
        nodes = tuple(
            n.model_copy(update={"compromised": n.id in marked}) for n in self.nodes
        )
        return type(self)(nodes=nodes, links=self.links)


def _node_id(node: NodeSpec) -> str:
    return node.id


def build_topology(config: TopologyConfig) -> Topology:
    """
    Validate a topology configuration and expand it into an immutable Topology.

    :raises ConfigError: listing every violated rule
    """
    violations = []
    nodes = config.nodes

    ids = [n.id for n in nodes]
    for dup in sorted({i for i in ids if ids.count(i) > 1}):
        violations.append(f"duplicate node id {dup!r}")

    by_tier = {tier: [n for n in nodes if n.tier is tier] for tier in Tier}
    if len(by_tier[Tier.CLOUD]) != 1:
        violations.append(
            f"expected exactly one cloud node, found {len(by_tier[Tier.CLOUD])}"
        )
    if not by_tier[Tier.FOG]:
        violations.append("at least one fog node is required")
    if not by_tier[Tier.IOT]:
        violations.append("at least one iot node is required")

    if len(by_tier[Tier.CLOUD]) == 1 and by_tier[Tier.FOG]:
        cloud = by_tier[Tier.CLOUD][0]
        strongest = max(by_tier[Tier.FOG], key=lambda n: n.capacity)
        if cloud.capacity < strongest.capacity:
            violations.append(
                f"cloud capacity {cloud.capacity} is below fog node "
                f"{strongest.id!r} capacity {strongest.capacity}"
            )

    known = set(ids)
    links: dict[tuple[str, str], LinkSpec] = {}
    for i, link in enumerate(config.links):
        for end in (link.source, link.target):
            if end not in known:
                violations.append(f"links[{i}] references unknown node {end!r}")
        links[(link.source, link.target)] = link

    remote = by_tier[Tier.FOG] + by_tier[Tier.CLOUD]
    for device in by_tier[Tier.IOT]:
        for node in remote:
            if (device.id, node.id) in links:
                continue
            profile = (
                config.default_fog_link
                if node.tier is Tier.FOG
                else config.default_cloud_link
            )
            if profile is None:
                violations.append(f"missing link {device.id!r} -> {node.id!r}")
                continue
            links[(device.id, node.id)] = LinkSpec(
                source=device.id, target=node.id, **profile.model_dump()
            )

    for device in by_tier[Tier.IOT]:
        cloud_links = [links.get((device.id, c.id)) for c in by_tier[Tier.CLOUD]]
        for cloud_link in filter(None, cloud_links):
            for fog in by_tier[Tier.FOG]:
                fog_link = links.get((device.id, fog.id))
                if fog_link is not None and fog_link.propagation >= cloud_link.propagation:
                    violations.append(
                        f"link {device.id!r} -> {fog.id!r} propagation "
                        f"{fog_link.propagation} is not below the cloud link's "
                        f"{cloud_link.propagation}"
                    )

    if violations:
        raise ConfigError(violations)

    ordered_links = tuple(links[key] for key in sorted(links))
    logger.debug(f"built topology with {len(nodes)} nodes and {len(ordered_links)} links")
    return Topology(nodes=tuple(sorted(nodes, key=_node_id)), links=ordered_links)


def action_space(topology: Topology, device_id: str) -> list[OffloadTarget]:
    """
    Offload targets of a device; the list index is the agent's action integer.

    Order: [Local, Fog 1, ..., Fog N, Cloud] with fog nodes sorted by id.

    :raises UnknownNodeError: if device_id is not an IoT device of the topology
    """
    device = topology.node(device_id)
    if device.tier is not Tier.IOT:
        raise UnknownNodeError(f"{device_id!r} is not an iot device")

    return [
        OffloadTarget(TargetKind.LOCAL, device.id),
        *(OffloadTarget(TargetKind.FOG, f.id) for f in topology.fog),
        OffloadTarget(TargetKind.CLOUD, topology.cloud.id),
    ]
