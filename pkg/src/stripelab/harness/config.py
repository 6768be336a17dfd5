"""Study configuration from INI-style key-value files."""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from ..geometry import (TubularDomain, circle_curve, ellipse_curve, rounded_rectangle_curve)
from ..pattern import ResonanceError

__all__ = ["ConfigError", "StudyConfig", "TorusConfig", "load_config", "parse_list"]


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def parse_list(text, cast=float) -> list:
    if text is None:
        return []
    if isinstance(text, (list, tuple)):
        return [cast(x) for x in text]
    items = [t.strip() for t in str(text).replace(";", ",").split(",")]
    return [cast(eval_fraction(t)) for t in items if t]


def eval_fraction(t: str) -> float:
    """``"1/16"`` or ``"0.0625"`` to float."""
    if "/" in t:
        a, b = t.split("/", 1)
        return float(a) / float(b)
    return float(t)


@dataclass
class TorusConfig:
    width: float = 1.0
    height: float = 1.0
    eps: float = 1.0 / 16
    period_factor: float = 1.0
    angle_deg: float = 0.0
    h_ratio: float = 8.0
    tol_zero: float = 0.05

    @property
    def period(self) -> float:
        return 4.0 * self.eps * self.period_factor

    @property
    def h(self) -> float:
        return self.eps / self.h_ratio


@dataclass
class StudyConfig:
    """Domain, eps schedule, grid rule, solver caps, tolerances and output location."""

    curve: str = "circle"
    radius: float = 1.0
    axes: tuple = (1.0, 1.0)
    rect: tuple = (2.0, 1.0, 0.4)
    half_width: float = 0.25
    samples: int = 2000
    n_list: list = field(default_factory=lambda: [2, 4, 8])
    eps_list: list = field(default_factory=list)
    h_ratio: float = 8.0
    d_solver: str = "auto"
    exact_cap: int = 4096
    rays: bool = True
    defect_k: int = 64
    tube_samples: tuple = (2048, 16)
    limit_h: float = 0.005
    tol_zero: float = 0.05
    out_dir: str = "runs/study"
    seed: int = 0
    torus: TorusConfig = field(default_factory=TorusConfig)

    def __post_init__(self):
        self.validate()

    # schedule
    @property
    def eps_values(self) -> list:
        if self.eps_list:
            return [float(e) for e in self.eps_list]
        return [self.half_width / (2.0 * n) for n in self.n_list]

    def validate(self) -> None:
        if self.curve not in ("circle", "ellipse", "rounded_rectangle"):
            raise ConfigError(f"unknown curve kind {self.curve!r}")
        if not self.half_width > 0:
            raise ConfigError("half_width must be positive")
        if self.h_ratio < 4:
            raise ConfigError(f"h_ratio {self.h_ratio} gives h > eps/4; at least 4 cells per half-stripe needed")
        if self.d_solver not in ("auto", "exact", "upper"):
            raise ConfigError(f"unknown d_solver {self.d_solver!r}")
        eps = self.eps_values
        if not eps:
            raise ConfigError("empty eps schedule")
        for e in eps:
            q = self.half_width / (2.0 * e)
            if not e > 0 or abs(q - round(q)) > 1e-9 * max(1.0, q) or round(q) < 1:
                raise ResonanceError(f"eps = {e!r} violates the resonance condition: "
                                     f"half_width/(2 eps) = {q:.6g} is not a positive integer")

    def domain(self) -> TubularDomain:
        if self.curve == "circle":
            c = circle_curve(self.radius, self.samples)
        elif self.curve == "ellipse":
            c = ellipse_curve(self.axes[0], self.axes[1], self.samples)
        else:
            w, hgt, r = self.rect
            c = rounded_rectangle_curve(w, hgt, r, self.samples)
        return TubularDomain(c, self.half_width)

    def h_for(self, eps: float) -> float:
        return eps / self.h_ratio

    def to_dict(self) -> dict:
        d = asdict(self)
        d["axes"] = list(self.axes)
        d["rect"] = list(self.rect)
        d["tube_samples"] = list(self.tube_samples)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    # parsing
    @classmethod
    def from_parser(cls, cp: configparser.ConfigParser) -> "StudyConfig":
        kw = {}
        if cp.has_section("domain"):
            d = cp["domain"]
            kw["curve"] = d.get("curve", "circle")
            if "radius" in d:
                kw["radius"] = d.getfloat("radius")
            if "axes" in d:
                kw["axes"] = tuple(parse_list(d["axes"]))
            if "rect" in d:
                kw["rect"] = tuple(parse_list(d["rect"]))
            if "half_width" in d:
                kw["half_width"] = eval_fraction(d["half_width"])
            if "samples" in d:
                kw["samples"] = d.getint("samples")
        if cp.has_section("study"):
            s = cp["study"]
            if "n_list" in s:
                kw["n_list"] = parse_list(s["n_list"], int)
            if "eps_list" in s:
                kw["eps_list"] = parse_list(s["eps_list"])
            for key, conv in (("h_ratio", float), ("exact_cap", int), ("defect_k", int), ("seed", int),
                              ("limit_h", eval_fraction), ("tol_zero", float)):
                if key in s:
                    kw[key] = conv(s[key])
            if "d_solver" in s:
                kw["d_solver"] = s["d_solver"].strip()
            if "rays" in s:
                kw["rays"] = s.getboolean("rays")
            if "tube_samples" in s:
                kw["tube_samples"] = tuple(parse_list(s["tube_samples"], int))
        if cp.has_section("output"):
            kw["out_dir"] = cp["output"].get("dir", "runs/study")
        if cp.has_section("torus"):
            t = cp["torus"]
            tk = {}
            for f in fields(TorusConfig):
                if f.name in t:
                    tk[f.name] = eval_fraction(t[f.name])
            kw["torus"] = TorusConfig(**tk)
        known = {"domain", "study", "output", "torus"}
        extra = set(cp.sections()) - known
        if extra:
            raise ConfigError(f"unknown config sections: {sorted(extra)}")
        return cls(**kw)

    @classmethod
    def from_text(cls, text: str) -> "StudyConfig":
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        cp.read_string(text)
        return cls.from_parser(cp)


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> StudyConfig:
    """Read a config file (or defaults) and apply keyword overrides."""
    if path is None:
        cfg = StudyConfig()
    else:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        cfg = StudyConfig.from_text(p.read_text())
    if overrides:
        d = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
        d.update({k: v for k, v in overrides.items() if v is not None})
        cfg = StudyConfig(**d)
    return cfg
