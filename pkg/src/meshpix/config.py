"""Flat ``section.key`` run configuration.

Precedence is built-in defaults < config file < command-line overrides.
Every key is typed and validated before a pipeline starts; unknown keys are
rejected.
"""

from __future__ import annotations

from pathlib import Path

from .rbf import KERNELS
from .restore import METHODS, METRIC_POINTS, SUPPORTS, RestoreConfig
from .sampling import SamplingConfig


class ConfigError(ValueError):
    pass


def _choice(options):
    def parse(text):
        if text not in options:
            raise ConfigError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


def _shape(text):
    return None if text in (None, "auto") else float(text)


# key -> (parser, default)
SCHEMA = {
    "canny.sigma": (float, 1.4),
    "canny.low": (float, 0.1),
    "canny.high": (float, 0.25),
    "canny.min_length": (int, 3),
    "pca.window": (int, 11),
    "pca.dense_spacing": (float, 3.0),
    "pca.sparse_spacing": (float, 8.0),
    "pca.anisotropy_threshold": (float, 0.2),
    "halftone.fraction": (float, 0.03),
    "halftone.sigma": (float, 1.0),
    "uniform.spacing": (float, 12.0),
    "min_separation": (float, 1.5),
    "sampling.target_ratio": (float, 0.06),
    "tensor.sigma": (float, 1.5),
    "tensor.kappa": (float, 9.0),
    "rbf.kernel": (_choice(KERNELS), "mq"),
    "rbf.shape_c": (_shape, None),
    "restore.method": (_choice(METHODS), "triangle_arbf"),
    "restore.scale": (float, 1.0),
    "restore.support": (_choice(SUPPORTS), "one_ring"),
    "restore.knn_k": (int, 12),
    "restore.metric_point": (_choice(METRIC_POINTS), "centroid"),
}


class RunConfig:
    """Typed key/value settings with override tracking."""

    def __init__(self, values: dict | None = None):
        self.values = {k: default for k, (_, default) in SCHEMA.items()}
        self.overrides: dict[str, str] = {}
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key: str, value) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        parse = SCHEMA[key][0]
        try:
            parsed = parse(value) if isinstance(value, str) else (
                value if value is None else parse(value))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: {exc}") from None
        self.values[key] = parsed
        self.overrides[key] = str(value)

    def __getitem__(self, key):
        return self.values[key]

    def copy(self) -> "RunConfig":
        other = RunConfig()
        other.values = dict(self.values)
        other.overrides = dict(self.overrides)
        return other

    def update_from_pairs(self, pairs) -> "RunConfig":
        for item in pairs:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"expected key=value, got {item!r}")
            self.set(key.strip(), value.strip())
        return self

    def update_from_file(self, path) -> "RunConfig":
        text = Path(path).read_text(encoding="utf-8")
        lines = []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if line:
                lines.append(line)
        return self.update_from_pairs(lines)

    # -- module configs -------------------------------------------------

    def sampling(self) -> SamplingConfig:
        v = self.values
        return SamplingConfig(
            canny_sigma=v["canny.sigma"], canny_low=v["canny.low"], canny_high=v["canny.high"],
            canny_min_length=v["canny.min_length"], pca_window=v["pca.window"],
            pca_dense_spacing=v["pca.dense_spacing"], pca_sparse_spacing=v["pca.sparse_spacing"],
            pca_anisotropy_threshold=v["pca.anisotropy_threshold"],
            halftone_fraction=v["halftone.fraction"], halftone_sigma=v["halftone.sigma"],
            uniform_spacing=v["uniform.spacing"], min_separation=v["min_separation"],
            target_ratio=v["sampling.target_ratio"])

    def restore(self) -> RestoreConfig:
        v = self.values
        return RestoreConfig(method=v["restore.method"], kernel=v["rbf.kernel"],
                             c=v["rbf.shape_c"], scale=v["restore.scale"],
                             support=v["restore.support"], knn_k=v["restore.knn_k"],
                             metric_point=v["restore.metric_point"])

    def validate(self) -> "RunConfig":
        try:
            self.sampling().validate()
            self.restore().validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self["tensor.sigma"] > 0:
            raise ConfigError("tensor.sigma must be > 0")
        if not self["tensor.kappa"] >= 0:
            raise ConfigError("tensor.kappa must be >= 0")
        return self


def load_config(path=None, pairs=()) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        cfg.update_from_file(path)
    cfg.update_from_pairs(pairs)
    return cfg.validate()
