"""Run configuration: every tunable, variant presets, key=value file loading.

Config files hold dotted `section.key = value` lines; unknown keys are
rejected so typos cannot silently fall back to defaults. The full resolved
configuration is echoed into each run's manifest for reproducibility.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .detector import DetectorConfig
from .edgeness import EdgenessConfig
from .proposals import HoughConfig

VARIANTS = ("ss", "ms", "ms-rot", "ms-rot-e", "ms-rot-em")


class ConfigError(ValueError):
    """Unknown key, malformed line, or unparsable value in a config source."""


@dataclass
class RunConfig:
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    hough: HoughConfig = field(default_factory=HoughConfig)
    edgeness: EdgenessConfig = field(default_factory=EdgenessConfig)
    use_multiscale: bool = True
    use_geometry: bool = True
    use_edges: bool = True
    use_motion_boundaries: bool = True
    seed: int = 42

    @property
    def variant(self) -> str:
        if not self.use_multiscale:
            return "ss"
        if not self.use_geometry:
            return "ms"
        if not self.use_edges:
            return "ms-rot"
        if not self.use_motion_boundaries:
            return "ms-rot-e"
        return "ms-rot-em"

    def resolved(self) -> "RunConfig":
        """Propagate the run seed and variant switches into the sub-configs."""
        det = replace(self.detector, rng_seed=self.seed)
        if not self.use_multiscale:
            det = replace(det, scales=(1.0,))
        hough = replace(self.hough, rng_seed=self.seed)
        return replace(self, detector=det, hough=hough)


def from_variant(name: str, seed: int = 42) -> RunConfig:
    """Preset switches for the named tracker variant."""
    if name not in VARIANTS:
        raise ConfigError(f"unknown variant {name!r}; expected one of {VARIANTS}")
    cfg = RunConfig(
        use_multiscale=name != "ss",
        use_geometry=name not in ("ss", "ms"),
        use_edges=name in ("ms-rot-e", "ms-rot-em"),
        use_motion_boundaries=name == "ms-rot-em",
        seed=seed,
    )
    return cfg


def _coerce(raw: str, current):
    if isinstance(current, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        return tuple(float(v) for v in raw.split(",") if v.strip())
    raise ConfigError(f"unsupported config value type for {raw!r}")


_SECTIONS = {"detector": DetectorConfig, "hough": HoughConfig, "edgeness": EdgenessConfig}


def apply_overrides(cfg: RunConfig, overrides: dict[str, str]) -> RunConfig:
    """Apply dotted-key overrides; unknown keys raise ConfigError."""
    top_fields = {f.name for f in fields(RunConfig)}
    for key, raw in overrides.items():
        try:
            if "." in key:
                section, name = key.split(".", 1)
                if section not in _SECTIONS:
                    raise ConfigError(f"unknown config section {section!r} in {key!r}")
                sub = getattr(cfg, section)
                sub_fields = {f.name for f in fields(sub)}
                if name not in sub_fields:
                    raise ConfigError(f"unknown config key {key!r}")
                value = _coerce(raw, getattr(sub, name))
                cfg = replace(cfg, **{section: replace(sub, **{name: value})})
            else:
                if key not in top_fields or key in _SECTIONS:
                    raise ConfigError(f"unknown config key {key!r}")
                value = _coerce(raw, getattr(cfg, key))
                cfg = replace(cfg, **{key: value})
        except (ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from exc
    return cfg


def load_config_file(path) -> dict[str, str]:
    """Read `key = value` lines, skipping blanks and # comments."""
    overrides: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        key, raw = stripped.split("=", 1)
        overrides[key.strip()] = raw.strip()
    return overrides


def to_manifest(cfg: RunConfig) -> dict:
    """Flat dict of every effective setting, for the run manifest."""
    out: dict[str, object] = {
        "variant": cfg.variant,
        "seed": cfg.seed,
        "use_multiscale": cfg.use_multiscale,
        "use_geometry": cfg.use_geometry,
        "use_edges": cfg.use_edges,
        "use_motion_boundaries": cfg.use_motion_boundaries,
    }
    for section in _SECTIONS:
        sub = getattr(cfg, section)
        for f in fields(sub):
            value = getattr(sub, f.name)
            out[f"{section}.{f.name}"] = list(value) if isinstance(value, tuple) else value
    return out
