"""Scenario files, campaign execution, result bundles and plot exports.

Scenarios are YAML documents describing the site geometry (walls, diffracting
building edges, reflector planes), the TX/RX hardware settings and the
receiver locations.  Unknown keys are rejected so typos fail loudly.
``run_campaign`` executes the azimuth-sweep procedure over every receiver of
a scenario, reduces the results per campaign kind and writes a reproducible
bundle: identical spec + seed gives byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import __version__
from .channel import AntennaPattern, Reflector, RxLocation, ScenarioConfig, Wall
from .errors import AnalysisError, ConfigError
from .correlator import get_preset
from .pdp import write_pdp_csv
from .sweep import (
    CiFit,
    SweepSet,
    angular_spectrum,
    ci_fit,
    fading_rate,
    local_power_std,
    omni_power,
    path_loss,
    run_sweep,
)

__all__ = [
    "CampaignSpec",
    "ResultBundle",
    "LocationResult",
    "load_scenario",
    "save_scenario",
    "run_campaign",
    "emit_plot_data",
]

log = logging.getLogger(__name__)

_CAMPAIGN_KINDS = ("route", "cluster", "single")


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _check_keys(mapping: dict, allowed: set[str], where: str) -> None:
    unknown = set(mapping) - allowed
    _require(not unknown, f"{where}: unknown keys {sorted(unknown)}")


def _floats(value, count: int, where: str) -> tuple[float, ...]:
    _require(
        isinstance(value, (list, tuple)) and len(value) == count,
        f"{where}: expected {count} numbers",
    )
    try:
        return tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected numbers, got {value!r}") from None


def _position(value, default_height: float, where: str) -> tuple[float, float, float]:
    _require(isinstance(value, (list, tuple)) and len(value) in (2, 3), f"{where}: expected [x, y] or [x, y, z]")
    if len(value) == 2:
        x, y = _floats(value, 2, where)
        return (x, y, default_height)
    return _floats(value, 3, where)


def _pattern(node: dict | None, default: AntennaPattern, where: str) -> AntennaPattern:
    if node is None:
        return default
    _check_keys(node, {"gain_dbi", "hpbw_az_deg", "hpbw_el_deg", "floor_db"}, where)
    return AntennaPattern(
        boresight_gain_dbi=float(node.get("gain_dbi", default.boresight_gain_dbi)),
        hpbw_az_deg=float(node.get("hpbw_az_deg", default.hpbw_az_deg)),
        hpbw_el_deg=float(node.get("hpbw_el_deg", default.hpbw_el_deg)),
        floor_db=float(node.get("floor_db", default.floor_db)),
    )


def _pointing(node, where: str) -> tuple[float, float]:
    _require(isinstance(node, dict), f"{where}: expected {{az: ..., el: ...}}")
    _check_keys(node, {"az", "el"}, where)
    return (float(node.get("az", 0.0)), float(node.get("el", 0.0)))


def load_scenario(path) -> ScenarioConfig:
    """Parse and validate a scenario file, applying hardware defaults."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML parse error: {exc}") from exc
    if raw is None:
        raise ConfigError(f"{path}: empty scenario file")
    _require(isinstance(raw, dict), f"{path}: top level must be a mapping")
    _check_keys(raw, {"name", "description", "carrier_hz", "noise", "tx", "rx", "environment"}, str(path))

    name = str(raw.get("name", path.stem))
    carrier = float(raw.get("carrier_hz", 73.5e9))

    noise = raw.get("noise") or {}
    _check_keys(noise, {"psd_dbm_per_hz", "noise_figure_db"}, "noise")

    tx = raw.get("tx") or {}
    _check_keys(tx, {"position_m", "power_dbm", "pointing_deg", "pattern"}, "tx")
    tx_position = _position(tx.get("position_m", [0.0, 0.0, 4.0]), 4.0, "tx.position_m")
    tx_pointing = _pointing(tx.get("pointing_deg", {"az": 0.0, "el": 0.0}), "tx.pointing_deg")

    rx = raw.get("rx") or {}
    _check_keys(rx, {"pattern", "elevation_deg", "default_height_m", "locations"}, "rx")
    rx_height = float(rx.get("default_height_m", 1.5))
    locations = rx.get("locations") or []
    _require(isinstance(locations, list) and locations, "rx.locations: need at least one entry")
    rx_locations = []
    for n, node in enumerate(locations):
        where = f"rx.locations[{n}]"
        _require(isinstance(node, dict), f"{where}: expected a mapping")
        _check_keys(node, {"id", "position_m", "label", "group", "tx_pointing_deg"}, where)
        pointing = node.get("tx_pointing_deg")
        rx_locations.append(
            RxLocation(
                ident=str(node.get("id", f"RX{n}")),
                position_m=_position(node["position_m"], rx_height, f"{where}.position_m"),
                label=str(node.get("label", "los")),
                group=str(node.get("group", "")),
                tx_pointing_deg=_pointing(pointing, f"{where}.tx_pointing_deg") if pointing else None,
            )
        )

    env = raw.get("environment") or {}
    _check_keys(env, {"walls", "wedges", "reflectors"}, "environment")
    walls = []
    for n, node in enumerate(env.get("walls") or []):
        _check_keys(node, {"start_m", "end_m"}, f"environment.walls[{n}]")
        walls.append(
            Wall(
                start_m=_floats(node["start_m"], 2, f"environment.walls[{n}].start_m"),
                end_m=_floats(node["end_m"], 2, f"environment.walls[{n}].end_m"),
            )
        )
    wedges = []
    for n, node in enumerate(env.get("wedges") or []):
        _check_keys(node, {"position_m"}, f"environment.wedges[{n}]")
        wedges.append(_floats(node["position_m"], 2, f"environment.wedges[{n}].position_m"))
    reflectors = []
    for n, node in enumerate(env.get("reflectors") or []):
        _check_keys(node, {"start_m", "end_m", "loss_db"}, f"environment.reflectors[{n}]")
        reflectors.append(
            Reflector(
                start_m=_floats(node["start_m"], 2, f"environment.reflectors[{n}].start_m"),
                end_m=_floats(node["end_m"], 2, f"environment.reflectors[{n}].end_m"),
                loss_db=float(node.get("loss_db", 6.0)),
            )
        )

    return ScenarioConfig(
        name=name,
        tx_position_m=tx_position,
        tx_power_dbm=float(tx.get("power_dbm", 14.6)),
        tx_pattern=_pattern(tx.get("pattern"), AntennaPattern.tx_horn(), "tx.pattern"),
        tx_pointing_deg=tx_pointing,
        rx_pattern=_pattern(rx.get("pattern"), AntennaPattern.rx_horn(), "rx.pattern"),
        rx_elevation_deg=float(rx.get("elevation_deg", 0.0)),
        rx_locations=tuple(rx_locations),
        carrier_hz=carrier,
        noise_psd_dbm_hz=float(noise.get("psd_dbm_per_hz", -174.0)),
        noise_figure_db=float(noise.get("noise_figure_db", 5.0)),
        walls=tuple(walls),
        wedges=tuple(wedges),
        reflectors=tuple(reflectors),
    )


def save_scenario(sc: ScenarioConfig, path) -> None:
    """Write a scenario back out; load_scenario(save_scenario(sc)) == sc."""
    doc = {
        "name": sc.name,
        "carrier_hz": sc.carrier_hz,
        "noise": {
            "psd_dbm_per_hz": sc.noise_psd_dbm_hz,
            "noise_figure_db": sc.noise_figure_db,
        },
        "tx": {
            "position_m": list(sc.tx_position_m),
            "power_dbm": sc.tx_power_dbm,
            "pointing_deg": {"az": sc.tx_pointing_deg[0], "el": sc.tx_pointing_deg[1]},
            "pattern": {
                "gain_dbi": sc.tx_pattern.boresight_gain_dbi,
                "hpbw_az_deg": sc.tx_pattern.hpbw_az_deg,
                "hpbw_el_deg": sc.tx_pattern.hpbw_el_deg,
                "floor_db": sc.tx_pattern.floor_db,
            },
        },
        "rx": {
            "pattern": {
                "gain_dbi": sc.rx_pattern.boresight_gain_dbi,
                "hpbw_az_deg": sc.rx_pattern.hpbw_az_deg,
                "hpbw_el_deg": sc.rx_pattern.hpbw_el_deg,
                "floor_db": sc.rx_pattern.floor_db,
            },
            "elevation_deg": sc.rx_elevation_deg,
            "locations": [
                {
                    "id": rx.ident,
                    "position_m": list(rx.position_m),
                    "label": rx.label,
                    **({"group": rx.group} if rx.group else {}),
                    **(
                        {"tx_pointing_deg": {"az": rx.tx_pointing_deg[0], "el": rx.tx_pointing_deg[1]}}
                        if rx.tx_pointing_deg is not None
                        else {}
                    ),
                }
                for rx in sc.rx_locations
            ],
        },
        "environment": {
            "walls": [{"start_m": list(w.start_m), "end_m": list(w.end_m)} for w in sc.walls],
            "wedges": [{"position_m": list(w)} for w in sc.wedges],
            "reflectors": [
                {"start_m": list(r.start_m), "end_m": list(r.end_m), "loss_db": r.loss_db}
                for r in sc.reflectors
            ],
        },
    }
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=True))


# ---------------------------------------------------------------------------
# campaigns
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CampaignSpec:
    scenario_path: str
    kind: str
    out_dir: str
    step_deg: float = 15.0
    sweeps: int = 5
    preset: str = "desk"
    seed: int = 0
    averages: int = 1
    rx_index: int | None = None  # single-kind only
    speed_mps: float = 35.0  # vehicle speed used for the fading-rate report
    save_pdps: bool = False
    workers: int = 1

    def __post_init__(self) -> None:
        if self.kind not in _CAMPAIGN_KINDS:
            raise ConfigError(f"campaign kind must be one of {_CAMPAIGN_KINDS}, got {self.kind!r}")
        if self.kind == "single" and self.rx_index is None:
            raise ConfigError("single campaigns need rx_index")


@dataclass(frozen=True, eq=False)
class LocationResult:
    ident: str
    label: str
    group: str
    position_m: tuple[float, float, float]
    distance_m: float
    route_position_m: float
    omni_dbm: float | None
    path_loss_db: float | None
    spectrum: list[tuple[float, float]]
    sweep_set: SweepSet = field(repr=False)


@dataclass(frozen=True, eq=False)
class ResultBundle:
    kind: str
    scenario: ScenarioConfig
    locations: list[LocationResult]
    fits: dict[str, CiFit]
    power_std_db: dict[str, float]
    fading_db_per_m: float | None
    fading_db_per_s: float | None
    speed_mps: float
    manifest: dict
    out_dir: Path


def _manifest(spec: CampaignSpec, scenario_bytes: bytes) -> dict:
    payload = {
        "version": __version__,
        "scenario_sha256": hashlib.sha256(scenario_bytes).hexdigest(),
        "kind": spec.kind,
        "step_deg": spec.step_deg,
        "sweeps": spec.sweeps,
        "preset": spec.preset,
        "seed": spec.seed,
        "averages": spec.averages,
        "rx_index": spec.rx_index,
        "speed_mps": spec.speed_mps,
    }
    canonical = json.dumps(payload, sort_keys=True).encode()
    payload["config_hash"] = hashlib.sha256(canonical).hexdigest()
    return payload


def _route_positions(sc: ScenarioConfig) -> list[float]:
    """Cumulative along-route distance over the ordered RX list."""
    positions = [0.0]
    for prev, here in zip(sc.rx_locations, sc.rx_locations[1:]):
        step = math.dist(prev.position_m, here.position_m)
        positions.append(positions[-1] + step)
    return positions


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


def run_campaign(spec: CampaignSpec) -> ResultBundle:
    """Execute sweeps for every receiver and reduce per campaign kind.

    route: route report (position, distance, omni, path loss, label),
    fading rate over the route and one CI fit plus power std per condition.
    cluster: received-power standard deviation per location group.
    single: sweep products for one receiver.
    """
    scenario_path = Path(spec.scenario_path)
    sc = load_scenario(scenario_path)
    preset = get_preset(spec.preset)
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if spec.kind == "single":
        indices = [spec.rx_index]
    else:
        indices = list(range(len(sc.rx_locations)))
    for index in indices:
        if not 0 <= index < len(sc.rx_locations):
            raise ConfigError(f"rx_index {index} out of range for {len(sc.rx_locations)} locations")

    def sweep_one(index: int) -> SweepSet:
        try:
            return run_sweep(
                sc,
                index,
                step_deg=spec.step_deg,
                sweeps=spec.sweeps,
                seed=spec.seed,
                preset=preset,
                averages=spec.averages,
            )
        except Exception as exc:
            raise type(exc)(
                f"location {sc.rx_locations[index].ident}: {exc}"
            ) from exc

    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            sweep_sets = list(pool.map(sweep_one, indices))
    else:
        sweep_sets = [sweep_one(i) for i in indices]

    route_pos = _route_positions(sc)
    locations: list[LocationResult] = []
    for index, ss in zip(indices, sweep_sets):
        rx = sc.rx_locations[index]
        omni = omni_power(ss)
        locations.append(
            LocationResult(
                ident=rx.ident,
                label=rx.label,
                group=rx.group or rx.label,
                position_m=rx.position_m,
                distance_m=sc.distance_to(index),
                route_position_m=route_pos[index],
                omni_dbm=omni,
                path_loss_db=None
                if omni is None
                else path_loss(
                    omni, sc.tx_power_dbm, sc.tx_pattern.boresight_gain_dbi,
                    sc.rx_pattern.boresight_gain_dbi,
                ),
                spectrum=angular_spectrum(ss),
                sweep_set=ss,
            )
        )

    fits: dict[str, CiFit] = {}
    power_std: dict[str, float] = {}
    fading_m = fading_s = None
    if spec.kind == "route":
        for label in ("los", "nlos"):
            points = [
                (loc.distance_m, loc.path_loss_db)
                for loc in locations
                if loc.label == label and loc.path_loss_db is not None
            ]
            if len(points) >= 2:
                fits[label] = ci_fit(points, sc.carrier_hz)
            powers = [loc.omni_dbm for loc in locations if loc.label == label and loc.omni_dbm is not None]
            if len(powers) >= 2:
                power_std[label] = local_power_std(powers)
        route = [
            (loc.route_position_m, loc.omni_dbm) for loc in locations if loc.omni_dbm is not None
        ]
        if len(route) >= 2:
            fading_m, fading_s = fading_rate(route, spec.speed_mps)
    elif spec.kind == "cluster":
        groups = sorted({loc.group for loc in locations})
        for group in groups:
            powers = [loc.omni_dbm for loc in locations if loc.group == group and loc.omni_dbm is not None]
            if len(powers) >= 2:
                power_std[group] = local_power_std(powers)

    bundle = ResultBundle(
        kind=spec.kind,
        scenario=sc,
        locations=locations,
        fits=fits,
        power_std_db=power_std,
        fading_db_per_m=fading_m,
        fading_db_per_s=fading_s,
        speed_mps=spec.speed_mps,
        manifest=_manifest(spec, scenario_path.read_bytes()),
        out_dir=out_dir,
    )
    _write_bundle(bundle, spec)
    return bundle


def _write_bundle(bundle: ResultBundle, spec: CampaignSpec) -> None:
    out = bundle.out_dir
    (out / "manifest.json").write_text(json.dumps(bundle.manifest, sort_keys=True, indent=1) + "\n")

    doc = {
        "kind": bundle.kind,
        "speed_mps": bundle.speed_mps,
        "fading_db_per_m": bundle.fading_db_per_m,
        "fading_db_per_s": bundle.fading_db_per_s,
        "fits": {
            label: {
                "ple": fit.ple,
                "sigma_db": fit.sigma_db,
                "point_count": fit.point_count,
                "frequency_hz": fit.frequency_hz,
                "d0_m": fit.d0_m,
            }
            for label, fit in bundle.fits.items()
        },
        "power_std_db": bundle.power_std_db,
        "locations": [
            {
                "id": loc.ident,
                "label": loc.label,
                "group": loc.group,
                "position_m": list(loc.position_m),
                "distance_m": loc.distance_m,
                "route_position_m": loc.route_position_m,
                "omni_dbm": loc.omni_dbm,
                "path_loss_db": loc.path_loss_db,
                "spectrum": [[az, power] for az, power in loc.spectrum],
            }
            for loc in bundle.locations
        ],
    }
    (out / "bundle.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")

    angular_dir = out / "angular"
    angular_dir.mkdir(exist_ok=True)
    for loc in bundle.locations:
        with open(angular_dir / f"{loc.ident}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["azimuth_deg", "power_dBm"])
            for az, power in loc.spectrum:
                writer.writerow([f"{az:.6f}", f"{power:.6f}"])

    if bundle.kind == "route":
        with open(out / "route.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["position_m", "distance_m", "omni_dBm", "path_loss_dB", "los_flag"])
            for loc in bundle.locations:
                writer.writerow(
                    [
                        f"{loc.route_position_m:.6f}",
                        f"{loc.distance_m:.6f}",
                        _fmt(loc.omni_dbm),
                        _fmt(loc.path_loss_db),
                        loc.label,
                    ]
                )
    if bundle.kind == "cluster":
        with open(out / "cluster.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["group", "count", "power_std_dB"])
            for group, std in sorted(bundle.power_std_db.items()):
                count = sum(1 for loc in bundle.locations if loc.group == group)
                writer.writerow([group, count, f"{std:.6f}"])

    if bundle.fits:
        lines = []
        for label, fit in sorted(bundle.fits.items()):
            lines += [
                f"[ci_fit {label}]",
                f"ple = {fit.ple:.6f}",
                f"sigma_db = {fit.sigma_db:.6f}",
                f"point_count = {fit.point_count}",
                f"frequency_hz = {fit.frequency_hz:.6g}",
                f"d0_m = {fit.d0_m:.6g}",
                "",
            ]
        (out / "fits.txt").write_text("\n".join(lines))

    if spec.save_pdps:
        pdp_dir = out / "pdps"
        pdp_dir.mkdir(exist_ok=True)
        for loc in bundle.locations:
            for record in loc.sweep_set.records:
                for s, pdp in enumerate(record.pdps):
                    name = f"{loc.ident}_az{record.rx_azimuth_deg:05.1f}_s{s}.csv"
                    write_pdp_csv(pdp, pdp_dir / name)


# ---------------------------------------------------------------------------
# plot-ready exports
# ---------------------------------------------------------------------------


def _load_bundle_doc(bundle_or_dir) -> tuple[dict, Path]:
    if isinstance(bundle_or_dir, ResultBundle):
        path = bundle_or_dir.out_dir
    else:
        path = Path(bundle_or_dir)
    doc_path = path / "bundle.json"
    if not doc_path.exists():
        raise AnalysisError(f"{path}: no bundle.json; run a campaign first")
    return json.loads(doc_path.read_text()), path


def emit_plot_data(bundle_or_dir, kind: str, out_dir=None) -> list[Path]:
    """Write plot-ready CSVs from a campaign bundle.

    pathloss: per-location points plus each CI fit sampled at 50 log-spaced
    distances.  polar: per-location (azimuth, power) tables including the
    sentinel rows for signal-absent angles.  route: omni power versus
    position along the route.
    """
    doc, bundle_dir = _load_bundle_doc(bundle_or_dir)
    out = Path(out_dir) if out_dir is not None else bundle_dir / "plots"
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if kind == "pathloss":
        if not doc["fits"]:
            raise AnalysisError("bundle holds no CI fits; pathloss plot data unavailable")
        path = out / "pathloss.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["series", "distance_m", "log10_distance", "path_loss_dB"])
            for loc in doc["locations"]:
                if loc["path_loss_db"] is None:
                    continue
                writer.writerow(
                    [
                        f"point-{loc['label']}",
                        f"{loc['distance_m']:.6f}",
                        f"{math.log10(loc['distance_m']):.6f}",
                        f"{loc['path_loss_db']:.6f}",
                    ]
                )
            distances = [loc["distance_m"] for loc in doc["locations"] if loc["path_loss_db"] is not None]
            lo, hi = min(distances), max(distances)
            from .channel import fspl  # local import to avoid a cycle at module load

            for label, fit in sorted(doc["fits"].items()):
                anchor = fspl(fit["d0_m"], fit["frequency_hz"])
                for n in range(50):
                    d = 10 ** (math.log10(lo) + (math.log10(hi) - math.log10(lo)) * n / 49)
                    pl = anchor + 10.0 * fit["ple"] * math.log10(d / fit["d0_m"])
                    writer.writerow(
                        [f"fit-{label}", f"{d:.6f}", f"{math.log10(d):.6f}", f"{pl:.6f}"]
                    )
        written.append(path)
    elif kind == "polar":
        for loc in doc["locations"]:
            path = out / f"polar_{loc['id']}.csv"
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["azimuth_deg", "power_dBm"])
                for az, power in loc["spectrum"]:
                    writer.writerow([f"{az:.6f}", f"{power:.6f}"])
            written.append(path)
    elif kind == "route":
        path = out / "route_power.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["position_m", "omni_dBm"])
            for loc in sorted(doc["locations"], key=lambda l: l["route_position_m"]):
                if loc["omni_dbm"] is not None:
                    writer.writerow([f"{loc['route_position_m']:.6f}", f"{loc['omni_dbm']:.6f}"])
        written.append(path)
    else:
        raise ConfigError(f"unknown plot kind {kind!r}; choose pathloss, polar or route")
    return written
