"""Case configuration (YAML).

Example::

    case: oldroydb_channel
    mesh:
      generated: {nx: 16, ny: 4, length: 4.0}
    params: {rho: 1.0, mu_s: 0.59, mu_p: 0.41, lam: 0.05}
    channel: {umax: 3.0, reference_length: 1.0}
    newton: {abs_tol: 1.0e-12, max_iters: 25, linear: dense_lu}
    jacobian_method: ad_blocked
    expm_policy: taylor_fix
"""
from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace

import yaml

from ..assembly import JacobianMethod
from ..elements.kernels import OldroydBParams
from ..matexp import ExpmConfig, SmallNormPolicy
from ..newton import DenseLUConfig, GmresConfig, NewtonConfig
from ..problems import ChannelSetup

CASES = ("poisson_square", "oldroydb_channel")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MeshSpec:
    nx: int = 16
    ny: int = 4
    length: float = 4.0
    height: float = 1.0
    file: str | None = None

    @property
    def generated(self):
        return self.file is None

    def label(self):
        return os.path.basename(self.file) if self.file else f"{self.nx}x{self.ny}"


@dataclass(frozen=True)
class BenchSpec:
    meshes: tuple = ((8, 2), (16, 4))
    methods: tuple = ("ad_identity", "ad_blocked", "fd")
    p_values: tuple = (1, 2, 4, 8, 16, 36)
    trials: int = 7
    elements: int = 500


@dataclass(frozen=True)
class CaseConfig:
    case: str = "oldroydb_channel"
    mesh: MeshSpec = MeshSpec()
    params: OldroydBParams = OldroydBParams()
    channel: ChannelSetup = ChannelSetup()
    poisson_c: float = 1.0
    refinements: int = 1
    newton: NewtonConfig = NewtonConfig()
    jacobian_method: JacobianMethod = JacobianMethod.AD_BLOCKED
    expm: ExpmConfig = ExpmConfig()
    bench: BenchSpec = BenchSpec()
    threads: int = 1
    seed: int = 0
    out: str = "out"

    @property
    def weissenberg(self):
        return self.channel.weissenberg(self.params.lam)


def _section(raw, name, cls, allowed=None):
    data = raw.get(name, {}) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"'{name}' must be a mapping")
    allowed = allowed or {f.name for f in fields(cls)}
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(sorted(unknown))}")
    return data


def _build(cls, name, data, **extra):
    try:
        return cls(**data, **extra)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid '{name}': {err}") from None


def from_dict(raw, base_dir="."):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    top = {"case", "mesh", "params", "channel", "poisson", "newton", "jacobian_method",
           "expm_policy", "expm_scaling_margin", "bench", "threads", "seed", "out"}
    unknown = set(raw) - top
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")

    case = raw.get("case", "oldroydb_channel")
    if case not in CASES:
        raise ConfigError(f"case must be one of {', '.join(CASES)}, got {case!r}")

    mesh_raw = raw.get("mesh", {}) or {}
    if not isinstance(mesh_raw, dict):
        raise ConfigError("'mesh' must be a mapping")
    if set(mesh_raw) - {"generated", "file"}:
        raise ConfigError("'mesh' takes either 'generated' or 'file'")
    if "file" in mesh_raw:
        path = os.path.join(base_dir, str(mesh_raw["file"]))
        if not os.path.isfile(path):
            raise ConfigError(f"mesh file not found: {path}")
        mesh = MeshSpec(file=path)
    else:
        gen = mesh_raw.get("generated", {}) or {}
        if set(gen) - {"nx", "ny", "length", "height"}:
            raise ConfigError("mesh.generated takes nx, ny, length, height")
        mesh = _build(MeshSpec, "mesh.generated", gen)
        if mesh.nx < 2 or mesh.ny < 2:
            raise ConfigError("generated meshes need nx, ny >= 2")

    params = _build(OldroydBParams, "params", _section(raw, "params", OldroydBParams))
    channel = _build(ChannelSetup, "channel", _section(raw, "channel", ChannelSetup))
    poisson = _section(raw, "poisson", None, {"c", "refinements"})

    nraw = dict(_section(raw, "newton", None, {"abs_tol", "rel_tol", "max_iters", "linear", "gmres"}))
    linear = nraw.pop("linear", "dense_lu")
    gm = nraw.pop("gmres", {}) or {}
    if linear == "dense_lu":
        lin = DenseLUConfig()
    elif linear == "gmres":
        lin = _build(GmresConfig, "newton.gmres", gm)
    else:
        raise ConfigError(f"newton.linear must be dense_lu or gmres, got {linear!r}")
    newton = _build(NewtonConfig, "newton", nraw, linear=lin)

    try:
        method = JacobianMethod(raw.get("jacobian_method", "ad_blocked"))
        policy = SmallNormPolicy(raw.get("expm_policy", "taylor_fix"))
    except ValueError as err:
        raise ConfigError(str(err)) from None
    expm = _build(ExpmConfig, "expm", {"small_norm_policy": policy,
                                       "scaling_margin": int(raw.get("expm_scaling_margin", 1))})
    if method is JacobianMethod.MANUAL and case != "poisson_square":
        raise ConfigError("jacobian_method 'manual' is only available for poisson_square")

    braw = dict(_section(raw, "bench", BenchSpec))
    if "meshes" in braw:
        braw["meshes"] = tuple(tuple(int(v) for v in m) for m in braw["meshes"])
    for key in ("methods", "p_values"):
        if key in braw:
            braw[key] = tuple(braw[key])
    bench = _build(BenchSpec, "bench", braw)

    cfg = CaseConfig(case=case, mesh=mesh, params=params, channel=channel,
                     poisson_c=float(poisson.get("c", 1.0)),
                     refinements=int(poisson.get("refinements", 1)),
                     newton=newton, jacobian_method=method, expm=expm, bench=bench,
                     threads=int(raw.get("threads", 1)), seed=int(raw.get("seed", 0)),
                     out=str(raw.get("out", "out")))
    if cfg.refinements < 1:
        raise ConfigError("poisson.refinements must be >= 1")
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as err:
        raise ConfigError(f"cannot parse {path}: {err}".replace("\n", " ")) from None
    return from_dict(raw or {}, os.path.dirname(os.path.abspath(path)))


def with_overrides(cfg, threads=None, seed=None, out=None):
    changes = {k: v for k, v in (("threads", threads), ("seed", seed), ("out", out)) if v is not None}
    return replace(cfg, **changes)


def default_config(case="oldroydb_channel"):
    if case == "poisson_square":
        return CaseConfig(case=case, mesh=MeshSpec(nx=16, ny=16, length=1.0))
    return CaseConfig(case=case)

