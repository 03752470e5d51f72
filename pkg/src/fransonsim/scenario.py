"""Scenario definition: every knob of the simulated experiment.

A scenario is a flat, line-oriented text file of ``section.key = value``
pairs with units spelled out in the key names::

    name = geneva1998
    source.pair_rate_hz = 310000.0
    fiber1.loss_db = 5.6
    detector2.dark_rate_hz = 110000.0

Unknown or duplicate keys are rejected with the offending line number;
missing keys fall back to the defaults below.  Loading is strict-order
independent, serialization is canonical, and load(dumps(s)) == s, which
makes the sha256 of the canonical form a stable scenario fingerprint.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from .constants import FWHM_PER_SIGMA, SPEED_OF_LIGHT_M_PER_S
from .errors import ScenarioError
from .model import SpectralParams, VisibilityParams, coherence_length_from_bandwidth

__all__ = [
    "SourceParams",
    "FiberChannel",
    "InterferometerParams",
    "DetectorParams",
    "ElectronicsParams",
    "CalibrationBlock",
    "Scenario",
    "load_scenario",
    "loads",
    "dumps",
    "save_scenario",
    "bundled_scenario_path",
]

_DISPERSION_MODES = ("lumped", "analytic")
_PORT_SETS = ("+", "-", "+-")

# Relative tolerance for the declared bandwidth/coherence-length pair
# under the declared conversion convention.  Loose enough for rounded
# constants in hand-written files, tight enough to catch a wrong unit.
_SPECTRAL_CONSISTENCY_RTOL = 1e-3


def _check(cond, message):
    if not cond:
        raise ScenarioError(message)


def _finite(value):
    return isinstance(value, (int, float)) and math.isfinite(value)


@dataclass(frozen=True)
class SourceParams:
    """Pulsed-pump-free down-conversion source feeding one 2x2 coupler."""

    pair_rate_hz: float
    pump_wavelength_nm: float = 655.7
    split_probability: float = 0.5

    def __post_init__(self):
        _check(_finite(self.pair_rate_hz) and self.pair_rate_hz > 0,
               f"source.pair_rate_hz must be positive, got {self.pair_rate_hz!r}")
        _check(_finite(self.pump_wavelength_nm) and self.pump_wavelength_nm > 0,
               f"source.pump_wavelength_nm must be positive, got {self.pump_wavelength_nm!r}")
        _check(_finite(self.split_probability) and 0.0 <= self.split_probability <= 1.0,
               f"source.split_probability must lie in [0, 1], got {self.split_probability!r}")


@dataclass(frozen=True)
class FiberChannel:
    """One installed fiber link from the source to an analyzer.

    Dispersion comes in two flavors.  lumped mode models a measured
    aggregate: each photon gets a Gaussian delay of FWHM
    lumped_jitter_fwhm_ps / sqrt(2), so that when both channels carry
    the same setting the pair's differential delay has exactly the
    configured FWHM.  analytic mode instead computes the quadratic
    group delay (slope/2) * length * (wavelength - zero_dispersion)^2
    from the photon's own detuning, which reproduces the two-photon
    dispersion cancellation when the source is centered on the fiber's
    zero-dispersion wavelength.
    """

    length_km: float
    loss_db: float
    group_index: float = 1.468
    dispersion_mode: str = "lumped"
    lumped_jitter_fwhm_ps: float = 0.0
    dispersion_slope_ps_nm2_km: float = 0.092
    zero_dispersion_wavelength_nm: float = 1313.0

    def __post_init__(self):
        _check(_finite(self.length_km) and self.length_km >= 0,
               f"fiber length_km must be non-negative, got {self.length_km!r}")
        _check(_finite(self.loss_db) and self.loss_db >= 0,
               f"fiber loss_db must be non-negative, got {self.loss_db!r}")
        _check(_finite(self.group_index) and self.group_index >= 1.0,
               f"fiber group_index must be >= 1, got {self.group_index!r}")
        _check(self.dispersion_mode in _DISPERSION_MODES,
               f"fiber dispersion_mode must be one of {_DISPERSION_MODES}, "
               f"got {self.dispersion_mode!r}")
        _check(_finite(self.lumped_jitter_fwhm_ps) and self.lumped_jitter_fwhm_ps >= 0,
               f"fiber lumped_jitter_fwhm_ps must be non-negative, "
               f"got {self.lumped_jitter_fwhm_ps!r}")
        _check(_finite(self.zero_dispersion_wavelength_nm)
               and self.zero_dispersion_wavelength_nm > 0,
               "fiber zero_dispersion_wavelength_nm must be positive")

    @property
    def transmittance(self) -> float:
        """Single-photon survival probability, 10**(-loss_db/10)."""
        return 10.0 ** (-self.loss_db / 10.0)

    @property
    def transit_time_ps(self) -> float:
        """Group delay of the link."""
        return self.length_km * 1e3 * self.group_index / SPEED_OF_LIGHT_M_PER_S * 1e12


@dataclass(frozen=True)
class InterferometerParams:
    """Unbalanced analyzer interferometer at one station."""

    phase_rad: float = 0.0
    arm_imbalance_delay_ps: float = 1000.0
    detector_ports: str = "+"

    def __post_init__(self):
        _check(_finite(self.phase_rad),
               f"interferometer phase_rad must be finite, got {self.phase_rad!r}")
        _check(_finite(self.arm_imbalance_delay_ps) and self.arm_imbalance_delay_ps > 0,
               "interferometer arm_imbalance_delay_ps must be positive, "
               f"got {self.arm_imbalance_delay_ps!r}")
        _check(self.detector_ports in _PORT_SETS,
               f"interferometer detector_ports must be one of {_PORT_SETS}, "
               f"got {self.detector_ports!r}")

    @property
    def instrumented_ports(self) -> tuple:
        return tuple(1 if c == "+" else -1 for c in self.detector_ports)


@dataclass(frozen=True)
class DetectorParams:
    """Single-photon detector plus its local noise processes.

    Afterpulsing is a geometric cascade: each recorded event spawns a
    correlated later event with the given probability, delayed by the
    dead time plus an exponential tail.
    """

    dark_rate_hz: float
    efficiency: float = 0.15
    jitter_fwhm_ps: float = 200.0
    dead_time_ns: float = 1000.0
    afterpulse_probability: float = 0.0
    afterpulse_tau_ns: float = 1000.0

    def __post_init__(self):
        _check(_finite(self.efficiency) and 0.0 <= self.efficiency <= 1.0,
               f"detector efficiency must lie in [0, 1], got {self.efficiency!r}")
        _check(_finite(self.dark_rate_hz) and self.dark_rate_hz >= 0,
               f"detector dark_rate_hz must be non-negative, got {self.dark_rate_hz!r}")
        _check(_finite(self.jitter_fwhm_ps) and self.jitter_fwhm_ps >= 0,
               f"detector jitter_fwhm_ps must be non-negative, got {self.jitter_fwhm_ps!r}")
        _check(_finite(self.dead_time_ns) and self.dead_time_ns >= 0,
               f"detector dead_time_ns must be non-negative, got {self.dead_time_ns!r}")
        _check(_finite(self.afterpulse_probability)
               and 0.0 <= self.afterpulse_probability < 1.0,
               "detector afterpulse_probability must lie in [0, 1), "
               f"got {self.afterpulse_probability!r}")
        _check(_finite(self.afterpulse_tau_ns) and self.afterpulse_tau_ns > 0,
               f"detector afterpulse_tau_ns must be positive, got {self.afterpulse_tau_ns!r}")


@dataclass(frozen=True)
class ElectronicsParams:
    """Start-stop coincidence electronics.

    One station starts a conversion, the first stop arriving within the
    converter range completes it, and the converter is then busy for its
    dead time.  Completed conversions are discriminated against a window
    centered on the matched delay; the accidental level is measured by
    offsetting that center by accidental_delay_ns.
    """

    # Per-channel jitter of the detector-to-converter signal chain.  The
    # default makes the two-channel difference jitter 450 ps FWHM.
    chain_jitter_fwhm_ps: float = 450.0 / math.sqrt(2.0)
    window_ps: float = 400.0
    tphc_dead_time_us: float = 4.0
    tphc_range_ns: float = 50.0
    start_station: int = 1
    accidental_delay_ns: float = 5.0

    def __post_init__(self):
        _check(_finite(self.chain_jitter_fwhm_ps) and self.chain_jitter_fwhm_ps >= 0,
               "electronics chain_jitter_fwhm_ps must be non-negative, "
               f"got {self.chain_jitter_fwhm_ps!r}")
        _check(_finite(self.window_ps) and self.window_ps > 0,
               f"electronics window_ps must be positive, got {self.window_ps!r}")
        _check(_finite(self.tphc_dead_time_us) and self.tphc_dead_time_us >= 0,
               "electronics tphc_dead_time_us must be non-negative, "
               f"got {self.tphc_dead_time_us!r}")
        _check(_finite(self.tphc_range_ns) and self.tphc_range_ns > 0,
               f"electronics tphc_range_ns must be positive, got {self.tphc_range_ns!r}")
        _check(self.start_station in (1, 2),
               f"electronics start_station must be 1 or 2, got {self.start_station!r}")
        _check(_finite(self.accidental_delay_ns) and self.accidental_delay_ns > 0,
               "electronics accidental_delay_ns must be positive, "
               f"got {self.accidental_delay_ns!r}")


@dataclass(frozen=True)
class CalibrationBlock:
    """Names the convention tying the spectral constants together, plus
    a free-text note on how the pair rate was calibrated."""

    convention: str = "source-calibrated"
    pair_rate_note: str = ""

    def __post_init__(self):
        _check(isinstance(self.convention, str) and self.convention,
               "calibration.convention must be a non-empty string")


@dataclass(frozen=True)
class Scenario:
    """Complete apparatus description for one simulated experiment."""

    name: str
    source: SourceParams
    spectral: SpectralParams
    visibility: VisibilityParams
    fiber1: FiberChannel
    fiber2: FiberChannel
    interferometer1: InterferometerParams
    interferometer2: InterferometerParams
    detector1: DetectorParams
    detector2: DetectorParams
    electronics: ElectronicsParams
    calibration: CalibrationBlock = field(default_factory=CalibrationBlock)

    def __post_init__(self):
        self.validate()

    def validate(self):
        _check(isinstance(self.name, str) and self.name.strip(),
               "scenario name must be a non-empty string")
        imb1 = self.interferometer1.arm_imbalance_delay_ps
        imb2 = self.interferometer2.arm_imbalance_delay_ps
        _check(abs(imb1 - imb2) <= 1e-9 * max(imb1, imb2),
               "the two interferometers must share one arm_imbalance_delay_ps "
               f"(got {imb1!r} and {imb2!r}); unequal imbalances break the "
               "central-peak indistinguishability")
        window = self.electronics.window_ps
        _check(window < imb1,
               f"electronics.window_ps = {window!r} must be smaller than the "
               f"arm imbalance delay {imb1!r} ps, otherwise the coincidence "
               "window swallows the satellite peaks")
        half_range_ps = self.electronics.tphc_range_ns * 1e3 / 2.0
        acc_ps = self.electronics.accidental_delay_ns * 1e3
        _check(acc_ps + window / 2.0 <= half_range_ps,
               "accidental_delay_ns puts the offset window outside the "
               "converter range; enlarge tphc_range_ns")
        # Declared spectral pair must be consistent under the declared
        # convention.
        expected_lc = coherence_length_from_bandwidth(
            self.spectral.center_wavelength_nm,
            self.spectral.bandwidth_fwhm_nm,
            self.calibration.convention)
        rel = abs(expected_lc - self.spectral.coherence_length_um) / expected_lc
        _check(rel <= _SPECTRAL_CONSISTENCY_RTOL,
               f"spectral.coherence_length_um = {self.spectral.coherence_length_um!r} "
               f"disagrees with the {self.calibration.convention!r} conversion of "
               f"bandwidth_fwhm_nm = {self.spectral.bandwidth_fwhm_nm!r} "
               f"(expected {expected_lc:.6g} um, relative error {rel:.2e})")

    def fiber(self, station: int) -> FiberChannel:
        return self.fiber1 if station == 1 else self.fiber2

    def interferometer(self, station: int) -> InterferometerParams:
        return self.interferometer1 if station == 1 else self.interferometer2

    def detector(self, station: int) -> DetectorParams:
        return self.detector1 if station == 1 else self.detector2

    def sha256(self) -> str:
        return hashlib.sha256(dumps(self).encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# text format

_SECTION_TYPES = {
    "source": SourceParams,
    "spectral": SpectralParams,
    "visibility": VisibilityParams,
    "fiber1": FiberChannel,
    "fiber2": FiberChannel,
    "interferometer1": InterferometerParams,
    "interferometer2": InterferometerParams,
    "detector1": DetectorParams,
    "detector2": DetectorParams,
    "electronics": ElectronicsParams,
    "calibration": CalibrationBlock,
}

# Sections that may be omitted entirely from a file.
_OPTIONAL_SECTIONS = {"calibration"}


def _field_map(cls):
    return {f.name: f for f in fields(cls)}


def _known_keys():
    keys = {"name"}
    for section, cls in _SECTION_TYPES.items():
        for f in fields(cls):
            keys.add(f"{section}.{f.name}")
    return keys


_KNOWN_KEYS = _known_keys()


def _parse_value(key, raw, ftype, where):
    if ftype is float:
        try:
            return float(raw)
        except ValueError:
            raise ScenarioError(f"{where}: value for {key!r} is not a number: {raw!r}") from None
    if ftype is int:
        try:
            return int(raw)
        except ValueError:
            raise ScenarioError(f"{where}: value for {key!r} is not an integer: {raw!r}") from None
    return raw


def loads(text: str, origin: str = "<string>") -> Scenario:
    """Parse scenario text.  Raises ScenarioError with line numbers."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ScenarioError(f"{origin}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.split("#", 1)[0].strip() if not key.endswith("note") else raw.strip()
        if key not in _KNOWN_KEYS:
            raise ScenarioError(f"{origin}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ScenarioError(f"{origin}:{lineno}: duplicate key {key!r}")
        values[key] = (raw, lineno)

    if "name" not in values:
        raise ScenarioError(f"{origin}: missing required key 'name'")
    name = values.pop("name")[0]

    kwargs = {"name": name}
    for section, cls in _SECTION_TYPES.items():
        fmap = _field_map(cls)
        section_kwargs = {}
        for fname, f in fmap.items():
            key = f"{section}.{fname}"
            if key in values:
                raw, lineno = values.pop(key)
                section_kwargs[fname] = _parse_value(
                    key, raw, _FIELD_PYTYPES[(section, fname)], f"{origin}:{lineno}")
            elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise ScenarioError(f"{origin}: missing required key {key!r}")
        if not section_kwargs and section in _OPTIONAL_SECTIONS:
            continue
        try:
            kwargs[section] = cls(**section_kwargs)
        except (ScenarioError, ValueError) as exc:
            raise ScenarioError(f"{origin}: [{section}] {exc}") from None

    try:
        return Scenario(**kwargs)
    except (ScenarioError, ValueError) as exc:
        raise ScenarioError(f"{origin}: {exc}") from None


def _python_type(f):
    # dataclasses store the annotation as a string under
    # `from __future__ import annotations`; resolve the few we use.
    ann = f.type
    if ann in ("float", float):
        return float
    if ann in ("int", int):
        return int
    return str


_FIELD_PYTYPES = {
    (section, f.name): _python_type(f)
    for section, cls in _SECTION_TYPES.items()
    for f in fields(cls)
}


def dumps(scenario: Scenario) -> str:
    """Canonical serialization; floats use repr so round trips are exact."""
    lines = [f"name = {scenario.name}"]
    for section in _SECTION_TYPES:
        obj = getattr(scenario, section)
        lines.append("")
        for f in fields(obj):
            value = getattr(obj, f.name)
            if isinstance(value, float):
                rendered = repr(value)
            else:
                rendered = str(value)
            lines.append(f"{section}.{f.name} = {rendered}")
    return "\n".join(lines) + "\n"


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from None
    return loads(text, origin=str(path))


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(dumps(scenario), encoding="utf-8")


def bundled_scenario_path(name: str = "geneva1998") -> Path:
    """Path of a scenario shipped with the package."""
    candidate = resources.files("fransonsim").joinpath("data", f"{name}.scn")
    with resources.as_file(candidate) as p:
        if not p.exists():
            raise ScenarioError(f"no bundled scenario named {name!r}")
        return Path(p)
