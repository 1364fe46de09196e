"""Device parameters, the linear power profile and workload derivation.

All network devices are described with a :class:`PowerProfile` whose capacity
is in Gb/s; processors use kMIPS.  Every default can be overridden from a
JSON document; the schema is in ``docs/schemas.md``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from types import MappingProxyType
from typing import Any, Mapping, Optional

SCHEMA_VERSION = 1

# MIPS per Mbps derivation: 69.23 MIPS per 10 kB file = 0.08 Mb.
_MIPS_PER_FILE = 69.23
_FILE_MEGABITS = 0.08


class CatalogError(ValueError):
    """Invalid catalog document or device parameters.  ``path`` names the field."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class CapacityError(ValueError):
    """Load outside ``[0, capacity]`` of a device."""


@dataclass(frozen=True)
class PowerProfile:
    max_power: float
    idle_power: float
    capacity: float
    idle_share_delta: float = 1.0

    def __post_init__(self):
        for name in ("max_power", "idle_power", "capacity", "idle_share_delta"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or math.isnan(value):
                raise CatalogError(f"expected a number, got {value!r}", name)
        if self.idle_power < 0:
            raise CatalogError("idle power must be >= 0", "idle_power")
        if self.idle_power > self.max_power:
            raise CatalogError(
                f"idle power {self.idle_power} exceeds max power {self.max_power}", "idle_power"
            )
        if not self.capacity > 0:
            raise CatalogError("capacity must be > 0", "capacity")
        if not 0.0 <= self.idle_share_delta <= 1.0:
            raise CatalogError("idle share must lie in [0, 1]", "idle_share_delta")

    @property
    def slope(self) -> float:
        return (self.max_power - self.idle_power) / self.capacity

    @property
    def attributed_idle(self) -> float:
        """Idle power charged to the application (idle share times idle power)."""
        return self.idle_share_delta * self.idle_power


def linear_power(profile: PowerProfile, load: float) -> float:
    """Idle plus load-proportional power; the idle share is not applied here."""
    if load < 0 or load > profile.capacity:
        raise CapacityError(f"load {load} outside [0, {profile.capacity}]")
    return profile.slope * load + profile.idle_power


def energy_per_bit(profile: PowerProfile) -> float:
    """(max - idle) / capacity, in W per device unit (W per Gb/s for network gear)."""
    if not profile.capacity > 0:
        raise CatalogError("capacity must be > 0", "capacity")
    return (profile.max_power - profile.idle_power) / profile.capacity


def mips_capacity(clock: float, effective_ipc: float, cores: int) -> float:
    """Processor capacity in kMIPS: clock (GHz) x instructions per cycle x cores."""
    if clock <= 0 or effective_ipc <= 0 or cores <= 0:
        raise ValueError("clock, ipc and cores must be positive")
    return clock * effective_ipc * cores


def derived_mips_per_mbps() -> float:
    """MIPS needed per Mb of video traffic from the 10 kB benchmark (about 865.4)."""
    return _MIPS_PER_FILE / _FILE_MEGABITS


@dataclass(frozen=True)
class ProcessorSpec:
    profile: PowerProfile
    clock: float
    effective_ipc: float
    cores: int = 1
    max_servers: Optional[int] = 1
    device: str = ""

    def __post_init__(self):
        if self.clock <= 0:
            raise CatalogError("clock must be > 0", "clock")
        if self.effective_ipc <= 0:
            raise CatalogError("effective ipc must be > 0", "effective_ipc")
        if not isinstance(self.cores, int) or self.cores < 1:
            raise CatalogError("cores must be a positive integer", "cores")
        if self.max_servers is not None and (
            not isinstance(self.max_servers, int) or self.max_servers < 1
        ):
            raise CatalogError("max servers must be a positive integer or null", "max_servers")

    @property
    def capacity_mips(self) -> float:
        return self.profile.capacity * 1000.0

    @property
    def energy_per_mips(self) -> float:
        """W per MIPS."""
        return (self.profile.max_power - self.profile.idle_power) / self.capacity_mips


@dataclass(frozen=True)
class NetworkDeviceSpec:
    profile: PowerProfile
    redundancy: int = 1

    def __post_init__(self):
        if not isinstance(self.redundancy, int) or self.redundancy < 1:
            raise CatalogError("redundancy must be an integer >= 1", "redundancy")

    @property
    def energy_per_bit(self) -> float:
        """W per Gb/s."""
        return energy_per_bit(self.profile)


@dataclass(frozen=True)
class PueTable:
    iot: float = 1.0
    cpe: float = 1.0
    access: float = 1.5
    metro: float = 1.4
    dc: float = 1.12
    core: float = 1.5

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, (int, float)) or value < 1:
                raise CatalogError(f"PUE must be >= 1, got {value!r}", f.name)

    def scaled(self, k: float) -> "PueTable":
        return PueTable(**{f.name: getattr(self, f.name) * k for f in fields(self)})


NETWORK_ROLES = (
    "iot_wifi",
    "ap",
    "onu",
    "olt",
    "metro_router",
    "metro_switch",
    "core_router_port",
    "transponder",
    "edfa",
    "optical_switch",
    "regenerator",
    "access_fog_router",
    "access_fog_switch",
    "metro_fog_router",
    "metro_fog_switch",
    "dc_lan_router",
    "dc_lan_switch",
)

PROCESSOR_ROLES = ("iot", "cpe", "access_fog", "metro_fog", "dc")

SHARED_DELTA = 0.03


def _net(max_power, idle_power, capacity, delta=SHARED_DELTA, redundancy=1):
    return NetworkDeviceSpec(PowerProfile(max_power, idle_power, capacity, delta), redundancy)


def _proc(device, max_power, idle_power, kmips, clock, ipc, cores, max_servers):
    return ProcessorSpec(
        PowerProfile(max_power, idle_power, kmips, 1.0), clock, ipc, cores, max_servers, device
    )


_DEFAULT_NETWORK = {
    # Premises devices are not shared: full idle power is charged.
    "iot_wifi": _net(0.56, 0.34, 0.1, delta=1.0),
    # The premises Wi-Fi interface is the ONU (WiFi) row; the AP hop carries no extra power.
    "ap": _net(0.0, 0.0, 1.0, delta=1.0),
    "onu": _net(15.0, 9.0, 0.3, delta=1.0),
    "olt": _net(1940.0, 60.0, 8600.0),
    "metro_router": _net(30.0, 27.0, 40.0, redundancy=2),
    "metro_switch": _net(470.0, 423.0, 600.0),
    "core_router_port": _net(638.0, 574.2, 40.0),
    "transponder": _net(129.0, 116.0, 40.0),
    # Not tabulated: 8 W per EDFA with the 90 % idle rule.
    "edfa": _net(8.0, 7.2, 40.0),
    "optical_switch": _net(85.0, 76.5, 40.0),
    # Regenerator idle is charged in full.
    "regenerator": _net(71.4, 64.0, 40.0, delta=1.0),
    "access_fog_router": _net(13.0, 11.7, 40.0),
    "access_fog_switch": _net(210.0, 189.0, 240.0),
    "metro_fog_router": _net(13.0, 11.7, 40.0),
    "metro_fog_switch": _net(210.0, 189.0, 600.0),
    "dc_lan_router": _net(30.0, 27.0, 40.0),
    "dc_lan_switch": _net(470.0, 423.0, 600.0),
}

_DEFAULT_PROCESSORS = {
    "iot": _proc("RPI Zero W", 3.96, 0.5, 1.0, 1.0, 1, 1, 1),
    "cpe": _proc("RPI 3 Model B", 12.5, 2.0, 2.4, 1.2, 2, 1, 1),
    "access_fog": _proc("Intel Xeon E5-2420", 95.0, 57.0, 34.2, 1.9, 3, 6, 2),
    "metro_fog": _proc("Intel X5675", 95.0, 57.0, 73.44, 3.06, 4, 6, 2),
    "dc": _proc("Intel Xeon E5-2680", 130.0, 78.0, 108.0, 2.7, 5, 8, None),
}


@dataclass(frozen=True)
class DeviceCatalog:
    network: Mapping[str, NetworkDeviceSpec] = field(
        default_factory=lambda: MappingProxyType(dict(_DEFAULT_NETWORK))
    )
    processors: Mapping[str, ProcessorSpec] = field(
        default_factory=lambda: MappingProxyType(dict(_DEFAULT_PROCESSORS))
    )
    pue: PueTable = field(default_factory=PueTable)
    wavelength_rate: float = 40.0  # Gb/s per wavelength (B)
    wavelengths_per_fiber: int = 32  # W
    edfa_span: float = 80.0  # km
    regenerator_span: float = 2500.0  # km
    delta_mips_per_mbps: float = 1000.0

    def __post_init__(self):
        missing = [r for r in NETWORK_ROLES if r not in self.network]
        if missing:
            raise CatalogError(f"missing roles {missing}", "network")
        missing = [r for r in PROCESSOR_ROLES if r not in self.processors]
        if missing:
            raise CatalogError(f"missing roles {missing}", "processors")
        if self.wavelength_rate <= 0:
            raise CatalogError("must be > 0", "core.wavelength_rate")
        if not isinstance(self.wavelengths_per_fiber, int) or self.wavelengths_per_fiber < 1:
            raise CatalogError("must be a positive integer", "core.wavelengths_per_fiber")
        if self.edfa_span <= 0:
            raise CatalogError("must be > 0", "core.edfa_span")
        if self.regenerator_span <= 0:
            raise CatalogError("must be > 0", "core.regenerator_span")
        if self.delta_mips_per_mbps <= 0:
            raise CatalogError("must be > 0", "delta_mips_per_mbps")
        # freeze the maps even if plain dicts were passed in
        object.__setattr__(self, "network", MappingProxyType(dict(self.network)))
        object.__setattr__(self, "processors", MappingProxyType(dict(self.processors)))

    def net(self, role: str) -> NetworkDeviceSpec:
        return self.network[role]

    def proc(self, role: str) -> ProcessorSpec:
        return self.processors[role]

    def mips_per_mbps(self) -> float:
        return self.delta_mips_per_mbps

    def cpu_demand(self, traffic_mbps: float) -> float:
        """MIPS requested by a task generating ``traffic_mbps``."""
        return self.delta_mips_per_mbps * traffic_mbps

    def with_pue(self, pue: PueTable) -> "DeviceCatalog":
        return replace(self, pue=pue)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "network": {
                role: {
                    "max_power": spec.profile.max_power,
                    "idle_power": spec.profile.idle_power,
                    "capacity": spec.profile.capacity,
                    "idle_share_delta": spec.profile.idle_share_delta,
                    "redundancy": spec.redundancy,
                }
                for role, spec in self.network.items()
            },
            "processors": {
                role: {
                    "device": spec.device,
                    "max_power": spec.profile.max_power,
                    "idle_power": spec.profile.idle_power,
                    "capacity": spec.profile.capacity,
                    "clock": spec.clock,
                    "effective_ipc": spec.effective_ipc,
                    "cores": spec.cores,
                    "max_servers": spec.max_servers,
                }
                for role, spec in self.processors.items()
            },
            "pue": {f.name: getattr(self.pue, f.name) for f in fields(PueTable)},
            "core": {
                "wavelength_rate": self.wavelength_rate,
                "wavelengths_per_fiber": self.wavelengths_per_fiber,
                "edfa_span": self.edfa_span,
                "regenerator_span": self.regenerator_span,
            },
            "delta_mips_per_mbps": self.delta_mips_per_mbps,
        }


def default_catalog() -> DeviceCatalog:
    return DeviceCatalog()


_NET_KEYS = {"max_power", "idle_power", "capacity", "idle_share_delta", "redundancy"}
_PROC_KEYS = {
    "device",
    "max_power",
    "idle_power",
    "capacity",
    "clock",
    "effective_ipc",
    "cores",
    "max_servers",
}
_CORE_KEYS = {"wavelength_rate", "wavelengths_per_fiber", "edfa_span", "regenerator_span"}
_TOP_KEYS = {"schema_version", "network", "processors", "pue", "core", "delta_mips_per_mbps"}


def _check_keys(doc: Any, allowed: set, path: str) -> dict:
    if not isinstance(doc, Mapping):
        raise CatalogError(f"expected an object, got {type(doc).__name__}", path)
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise CatalogError(f"unknown field(s) {unknown}", path)
    return dict(doc)


def _build(path: str, fn, **kwargs):
    try:
        return fn(**kwargs)
    except CatalogError as exc:
        sub = f"{path}.{exc.path}" if exc.path else path
        raise CatalogError(exc.message, sub) from None
    except TypeError as exc:
        raise CatalogError(str(exc), path) from None


def load_catalog(source: "str | Mapping | None") -> DeviceCatalog:
    """Build a catalog from a JSON document (text or parsed mapping).

    Every field is optional; omitted fields keep the built-in defaults.
    """
    if source is None:
        return default_catalog()
    if isinstance(source, str):
        text = source.strip()
        if not text:
            return default_catalog()
        try:
            source = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CatalogError(f"not valid JSON: {exc}") from None
    doc = _check_keys(source, _TOP_KEYS, "catalog")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise CatalogError(f"unsupported schema version {version!r}", "schema_version")

    base = default_catalog()
    network = dict(base.network)
    for role, override in _check_keys(doc.get("network", {}), set(NETWORK_ROLES), "network").items():
        path = f"network.{role}"
        override = _check_keys(override, _NET_KEYS, path)
        cur = network[role]
        prof = {
            "max_power": cur.profile.max_power,
            "idle_power": cur.profile.idle_power,
            "capacity": cur.profile.capacity,
            "idle_share_delta": cur.profile.idle_share_delta,
        }
        prof.update({k: v for k, v in override.items() if k in prof})
        profile = _build(path, PowerProfile, **prof)
        network[role] = _build(
            path,
            NetworkDeviceSpec,
            profile=profile,
            redundancy=override.get("redundancy", cur.redundancy),
        )

    processors = dict(base.processors)
    for role, override in _check_keys(
        doc.get("processors", {}), set(PROCESSOR_ROLES), "processors"
    ).items():
        path = f"processors.{role}"
        override = _check_keys(override, _PROC_KEYS, path)
        cur = processors[role]
        prof = {
            "max_power": cur.profile.max_power,
            "idle_power": cur.profile.idle_power,
            "capacity": cur.profile.capacity,
        }
        prof.update({k: v for k, v in override.items() if k in prof})
        profile = _build(path, PowerProfile, **prof)
        processors[role] = _build(
            path,
            ProcessorSpec,
            profile=profile,
            clock=override.get("clock", cur.clock),
            effective_ipc=override.get("effective_ipc", cur.effective_ipc),
            cores=override.get("cores", cur.cores),
            max_servers=override.get("max_servers", cur.max_servers),
            device=override.get("device", cur.device),
        )

    pue_doc = _check_keys(doc.get("pue", {}), {f.name for f in fields(PueTable)}, "pue")
    pue = _build("pue", PueTable, **{**base.to_dict()["pue"], **pue_doc})
    core = {**base.to_dict()["core"], **_check_keys(doc.get("core", {}), _CORE_KEYS, "core")}
    return _build(
        "catalog",
        DeviceCatalog,
        network=network,
        processors=processors,
        pue=pue,
        delta_mips_per_mbps=doc.get("delta_mips_per_mbps", base.delta_mips_per_mbps),
        **core,
    )


def dump_catalog(catalog: DeviceCatalog) -> str:
    return json.dumps(catalog.to_dict(), indent=2, sort_keys=True)
