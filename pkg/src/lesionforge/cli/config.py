"""Generator configuration: strict JSON parsing and canonical hashing.

Unknown keys are rejected with the full field path; missing keys fall back to
the documented defaults.  The canonical dict form (every field present) is
what gets embedded in manifests and hashed.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from ..poissonblend import BlendMode
from ..synth import DeformParams, PerturbParams, SynthConfig
from .errors import ConfigError


@dataclass(frozen=True)
class TrackingConfig:
    deform: DeformParams = DeformParams(translation=4.0, rotation=0.02,
                                        scale_jitter=0.01,
                                        elastic_magnitude=3.0,
                                        smoothness_sigma=12.0)
    jitter_brightness: tuple[float, float] = (-0.05, 0.05)
    jitter_contrast: tuple[float, float] = (0.95, 1.05)
    perturb: PerturbParams = PerturbParams(scale_jitter=0.25)


@dataclass(frozen=True)
class ForgeConfig:
    synth: SynthConfig = SynthConfig()
    tracking: TrackingConfig = TrackingConfig()


def _check_keys(obj: dict, allowed: set[str], path: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"{path}.{key}: unknown key")


def _number(obj, path: str, lo=None, hi=None) -> float:
    if not isinstance(obj, (int, float)) or isinstance(obj, bool) or not math.isfinite(obj):
        raise ConfigError(f"{path}: expected a finite number")
    v = float(obj)
    if lo is not None and v < lo:
        raise ConfigError(f"{path}: must be >= {lo}")
    if hi is not None and v > hi:
        raise ConfigError(f"{path}: must be <= {hi}")
    return v


def _int(obj, path: str, lo=None) -> int:
    if not isinstance(obj, int) or isinstance(obj, bool):
        raise ConfigError(f"{path}: expected an integer")
    if lo is not None and obj < lo:
        raise ConfigError(f"{path}: must be >= {lo}")
    return obj


def _pair(obj, path: str, lo=None, ordered=True) -> tuple[float, float]:
    if not isinstance(obj, (list, tuple)) or len(obj) != 2:
        raise ConfigError(f"{path}: expected a [lo, hi] pair")
    a = _number(obj[0], f"{path}[0]", lo=lo)
    b = _number(obj[1], f"{path}[1]", lo=lo)
    if ordered and a > b:
        raise ConfigError(f"{path}: lo must be <= hi")
    return (a, b)


def _int_pair(obj, path: str, lo: int) -> tuple[int, int]:
    if not isinstance(obj, (list, tuple)) or len(obj) != 2:
        raise ConfigError(f"{path}: expected a [lo, hi] pair")
    a = _int(obj[0], f"{path}[0]", lo=lo)
    b = _int(obj[1], f"{path}[1]", lo=lo)
    if a > b:
        raise ConfigError(f"{path}: lo must be <= hi")
    return (a, b)


def _parse_synth(obj: dict, path: str) -> SynthConfig:
    _check_keys(obj, {"lesions_per_image", "stride", "min_sep", "ring_width",
                      "augment", "body_jitter", "blend"}, path)
    d = SynthConfig()
    kw = {}
    if "lesions_per_image" in obj:
        kw["lesions_per_image"] = _int_pair(obj["lesions_per_image"],
                                            f"{path}.lesions_per_image", lo=0)
    if "stride" in obj:
        kw["stride"] = _int(obj["stride"], f"{path}.stride", lo=1)
    if "min_sep" in obj:
        kw["min_sep"] = _number(obj["min_sep"], f"{path}.min_sep", lo=0)
    if "ring_width" in obj:
        kw["ring_width"] = _int(obj["ring_width"], f"{path}.ring_width", lo=1)
    aug = obj.get("augment", {})
    if not isinstance(aug, dict):
        raise ConfigError(f"{path}.augment: expected an object")
    _check_keys(aug, {"rotation", "scale", "brightness", "contrast", "flip",
                      "max_footprint"}, f"{path}.augment")
    if "rotation" in aug:
        kw["augment_rotation"] = _pair(aug["rotation"], f"{path}.augment.rotation")
    if "scale" in aug:
        kw["augment_scale"] = _pair(aug["scale"], f"{path}.augment.scale", lo=1e-6)
    if "brightness" in aug:
        kw["augment_brightness"] = _pair(aug["brightness"], f"{path}.augment.brightness")
    if "contrast" in aug:
        kw["augment_contrast"] = _pair(aug["contrast"], f"{path}.augment.contrast", lo=0)
    if "flip" in aug:
        if not isinstance(aug["flip"], bool):
            raise ConfigError(f"{path}.augment.flip: expected a boolean")
        kw["augment_flip"] = aug["flip"]
    if "max_footprint" in aug:
        kw["max_footprint"] = _int(aug["max_footprint"], f"{path}.augment.max_footprint", lo=1)
    body = obj.get("body_jitter", {})
    if not isinstance(body, dict):
        raise ConfigError(f"{path}.body_jitter: expected an object")
    _check_keys(body, {"brightness", "contrast"}, f"{path}.body_jitter")
    if "brightness" in body:
        kw["body_brightness"] = _pair(body["brightness"], f"{path}.body_jitter.brightness")
    if "contrast" in body:
        kw["body_contrast"] = _pair(body["contrast"], f"{path}.body_jitter.contrast", lo=0)
    blend = obj.get("blend", {})
    if not isinstance(blend, dict):
        raise ConfigError(f"{path}.blend: expected an object")
    _check_keys(blend, {"mode", "tol"}, f"{path}.blend")
    if "mode" in blend:
        try:
            kw["blend_mode"] = BlendMode(blend["mode"])
        except ValueError:
            raise ConfigError(f"{path}.blend.mode: expected 'import' or 'mixed'")
    if "tol" in blend:
        kw["blend_tol"] = _number(blend["tol"], f"{path}.blend.tol", lo=1e-15)
    return SynthConfig(**{**d.__dict__, **kw}) if kw else d


def _parse_tracking(obj: dict, path: str) -> TrackingConfig:
    _check_keys(obj, {"deform", "jitter", "perturb"}, path)
    default = TrackingConfig()
    deform = default.deform
    if "deform" in obj:
        dd = obj["deform"]
        if not isinstance(dd, dict):
            raise ConfigError(f"{path}.deform: expected an object")
        _check_keys(dd, {"translation", "rotation", "scale_jitter",
                         "elastic_magnitude", "smoothness_sigma"}, f"{path}.deform")
        deform = DeformParams(
            translation=_number(dd.get("translation", deform.translation),
                                f"{path}.deform.translation", lo=0),
            rotation=_number(dd.get("rotation", deform.rotation),
                             f"{path}.deform.rotation", lo=0),
            scale_jitter=_number(dd.get("scale_jitter", deform.scale_jitter),
                                 f"{path}.deform.scale_jitter", lo=0, hi=0.999),
            elastic_magnitude=_number(dd.get("elastic_magnitude", deform.elastic_magnitude),
                                      f"{path}.deform.elastic_magnitude", lo=0),
            smoothness_sigma=_number(dd.get("smoothness_sigma", deform.smoothness_sigma),
                                     f"{path}.deform.smoothness_sigma", lo=1e-6),
        )
    jb, jc = default.jitter_brightness, default.jitter_contrast
    if "jitter" in obj:
        jj = obj["jitter"]
        if not isinstance(jj, dict):
            raise ConfigError(f"{path}.jitter: expected an object")
        _check_keys(jj, {"brightness", "contrast"}, f"{path}.jitter")
        if "brightness" in jj:
            jb = _pair(jj["brightness"], f"{path}.jitter.brightness")
        if "contrast" in jj:
            jc = _pair(jj["contrast"], f"{path}.jitter.contrast", lo=0)
    perturb = default.perturb
    if "perturb" in obj:
        pp = obj["perturb"]
        if not isinstance(pp, dict):
            raise ConfigError(f"{path}.perturb: expected an object")
        _check_keys(pp, {"scale_jitter"}, f"{path}.perturb")
        if "scale_jitter" in pp:
            perturb = PerturbParams(
                scale_jitter=_number(pp["scale_jitter"],
                                     f"{path}.perturb.scale_jitter", lo=0, hi=0.9))
    return TrackingConfig(deform=deform, jitter_brightness=jb,
                          jitter_contrast=jc, perturb=perturb)


def parse_config(obj) -> ForgeConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config root: expected a JSON object")
    _check_keys(obj, {"synth", "tracking"}, "config")
    synth = SynthConfig()
    tracking = TrackingConfig()
    if "synth" in obj:
        if not isinstance(obj["synth"], dict):
            raise ConfigError("config.synth: expected an object")
        synth = _parse_synth(obj["synth"], "config.synth")
    if "tracking" in obj:
        if not isinstance(obj["tracking"], dict):
            raise ConfigError("config.tracking: expected an object")
        tracking = _parse_tracking(obj["tracking"], "config.tracking")
    return ForgeConfig(synth=synth, tracking=tracking)


def load_config(path) -> ForgeConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    return parse_config(obj)


def config_to_dict(cfg: ForgeConfig) -> dict:
    """Canonical full dict form (every field present, stable ordering)."""
    s = cfg.synth
    t = cfg.tracking
    return {
        "synth": {
            "lesions_per_image": list(s.lesions_per_image),
            "stride": s.stride,
            "min_sep": s.min_sep,
            "ring_width": s.ring_width,
            "augment": {
                "rotation": list(s.augment_rotation),
                "scale": list(s.augment_scale),
                "brightness": list(s.augment_brightness),
                "contrast": list(s.augment_contrast),
                "flip": s.augment_flip,
                "max_footprint": s.max_footprint,
            },
            "body_jitter": {
                "brightness": list(s.body_brightness),
                "contrast": list(s.body_contrast),
            },
            "blend": {"mode": s.blend_mode.value, "tol": s.blend_tol},
        },
        "tracking": {
            "deform": {
                "translation": t.deform.translation,
                "rotation": t.deform.rotation,
                "scale_jitter": t.deform.scale_jitter,
                "elastic_magnitude": t.deform.elastic_magnitude,
                "smoothness_sigma": t.deform.smoothness_sigma,
            },
            "jitter": {
                "brightness": list(t.jitter_brightness),
                "contrast": list(t.jitter_contrast),
            },
            "perturb": {"scale_jitter": t.perturb.scale_jitter},
        },
    }


def config_hash(cfg: ForgeConfig) -> str:
    canon = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
