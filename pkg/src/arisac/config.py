"""System configuration, deployment geometry and JSON I/O.

All physical quantities are linear scale (watts, metres, radians) inside the
library; dB conversions happen only at I/O boundaries via :func:`db2lin` /
:func:`lin2db`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace, asdict


def db2lin(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def lin2db(x: float) -> float:
    return 10.0 * math.log10(max(float(x), 1e-300))


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration input."""


# Angle pool used when the target count is swept past the configured angles
# (first Q entries are taken), degrees: 0, 45, -45, 30, -30, 60, -60.
TARGET_ANGLE_POOL = tuple(
    math.radians(a) for a in (0.0, 45.0, -45.0, 30.0, -30.0, 60.0, -60.0)
)


@dataclass(frozen=True)
class Geometry:
    """2-D deployment layout (metres).

    The BS and ARIS are uniform linear arrays; targets sit at ``target_distance``
    from the ARIS at the configured steering angles, users are drawn uniformly
    in a disk around ``user_center``.
    """

    bs: tuple[float, float] = (0.0, 0.0)
    aris: tuple[float, float] = (2.0, 5.0)
    user_center: tuple[float, float] = (20.0, 0.0)
    user_radius: float = 3.0
    target_distance: float = 10.0


@dataclass(frozen=True)
class PathlossExponents:
    alpha_br: float = 2.2   # BS-ARIS
    alpha_bu: float = 3.5   # BS-user
    alpha_ru: float = 2.3   # ARIS-user
    alpha_rq: float = 2.2   # ARIS-target


@dataclass(frozen=True)
class SystemConfig:
    """All physical and algorithmic parameters of one scenario."""

    M: int = 16                      # BS transmit/receive antennas
    L: int = 32                      # ARIS elements
    U: int = 4                       # users
    Q: int = 2                       # sensing targets
    P_bs_max: float = db2lin(40 - 30)    # 40 dBm, watts
    P_ris_max: float = db2lin(20 - 30)   # 20 dBm, watts
    a_max: float = 5.0                   # per-element amplification cap
    sigma_u2: float = db2lin(-80 - 30)   # user AWGN, watts
    sigma_z2: float = db2lin(-80 - 30)   # ARIS dynamic noise, watts
    sigma_r2: float = db2lin(-80 - 30)   # BS receiver AWGN, watts
    R_min: float = 5.0                   # per-user rate threshold, bit/s/Hz
    target_angles: tuple[float, ...] = (0.0, math.pi / 4)  # radians
    pathloss: PathlossExponents = field(default_factory=PathlossExponents)
    geometry: Geometry = field(default_factory=Geometry)
    rcs: float = 1.0                     # radar cross section, m^2
    rician_kappa: float = 10.0           # linear Rician factor (BS-ARIS, ARIS-user)
    c0_db: float = -30.0                 # reference path loss at d0
    d0: float = 1.0                      # reference distance, metres
    seed: int = 0
    bcd_tol: float = 1e-3                # outer relative convergence epsilon
    max_outer: int = 50
    max_srocr: int = 30

    def validate(self) -> "SystemConfig":
        def req(cond, msg):
            if not cond:
                raise ConfigError(msg)

        req(self.M >= 1 and self.L >= 1 and self.U >= 1 and self.Q >= 1,
            "M, L, U, Q must all be >= 1")
        for name in ("P_bs_max", "P_ris_max", "a_max",
                     "sigma_u2", "sigma_z2", "sigma_r2"):
            # sigma_z2 == 0 is the passive-surface limit and is allowed
            lo = 0.0 if name == "sigma_z2" else None
            v = getattr(self, name)
            if lo is None:
                req(v > 0, f"{name} must be > 0")
            else:
                req(v >= lo, f"{name} must be >= {lo}")
        req(self.R_min >= 0, "R_min must be >= 0")
        req(len(self.target_angles) == self.Q,
            f"target_angles must have exactly Q={self.Q} entries "
            f"(got {len(self.target_angles)})")
        for a in self.target_angles:
            req(-math.pi / 2 < a < math.pi / 2,
                f"target angle {a} rad outside (-pi/2, pi/2)")
        req(self.rcs > 0, "rcs must be > 0")
        req(self.rician_kappa >= 0, "rician_kappa must be >= 0")
        req(self.d0 > 0, "d0 must be > 0")
        req(self.geometry.user_radius >= 0, "user_radius must be >= 0")
        req(self.geometry.target_distance > 0, "target_distance must be > 0")
        req(self.bcd_tol > 0, "bcd_tol must be > 0")
        req(self.max_outer >= 1 and self.max_srocr >= 1,
            "iteration caps must be >= 1")
        return self

    @property
    def c0(self) -> float:
        return db2lin(self.c0_db)

    def with_targets(self, Q: int) -> "SystemConfig":
        """Resize the target set, filling angles from the documented pool."""
        if Q == self.Q:
            return self
        if Q <= len(self.target_angles):
            angles = self.target_angles[:Q]
        else:
            pool = list(self.target_angles)
            for a in TARGET_ANGLE_POOL:
                if len(pool) >= Q:
                    break
                if all(abs(a - b) > 1e-12 for b in pool):
                    pool.append(a)
            if len(pool) < Q:
                raise ConfigError(f"no default angles available for Q={Q}")
            angles = tuple(pool[:Q])
        return replace(self, Q=Q, target_angles=angles)


# ---------------------------------------------------------------------------
# JSON schema
#
# The document mirrors SystemConfig field-for-field; every key is optional and
# defaults to the values above.  Angles are radians, powers are watts unless
# the *_dbm variant is used.  Example:
#
#   {
#     "M": 16, "L": 32, "U": 4, "Q": 2,
#     "P_bs_max_dbm": 40, "P_ris_max_dbm": 20,
#     "a_max": 5.0,
#     "noise_dbm": -80,
#     "R_min": 5.0,
#     "target_angles": [0.0, 0.7853981633974483],
#     "pathloss_exponents": {"alpha_br": 2.2, "alpha_bu": 3.5,
#                             "alpha_ru": 2.3, "alpha_rq": 2.2},
#     "geometry": {"bs": [0, 0], "aris": [2, 5],
#                   "user_center": [20, 0], "user_radius": 3,
#                   "target_distance": 10},
#     "rcs": 1.0, "rician_kappa": 10.0,
#     "c0_db": -30.0, "d0": 1.0,
#     "seed": 0, "bcd_tol": 1e-3, "max_outer": 50, "max_srocr": 30
#   }
# ---------------------------------------------------------------------------

_SCALAR_KEYS = {
    "M": int, "L": int, "U": int, "Q": int,
    "P_bs_max": float, "P_ris_max": float, "a_max": float,
    "sigma_u2": float, "sigma_z2": float, "sigma_r2": float,
    "R_min": float, "rcs": float, "rician_kappa": float,
    "c0_db": float, "d0": float, "seed": int,
    "bcd_tol": float, "max_outer": int, "max_srocr": int,
}


def config_from_dict(doc: dict) -> SystemConfig:
    if not isinstance(doc, dict):
        raise ConfigError("system config must be a JSON object")
    known = set(_SCALAR_KEYS) | {
        "P_bs_max_dbm", "P_ris_max_dbm", "noise_dbm",
        "target_angles", "pathloss_exponents", "geometry",
    }
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    kw = {}
    for key, cast in _SCALAR_KEYS.items():
        if key in doc:
            try:
                kw[key] = cast(doc[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"config key '{key}': {exc}") from None
    if "P_bs_max_dbm" in doc:
        kw["P_bs_max"] = db2lin(float(doc["P_bs_max_dbm"]) - 30)
    if "P_ris_max_dbm" in doc:
        kw["P_ris_max"] = db2lin(float(doc["P_ris_max_dbm"]) - 30)
    if "noise_dbm" in doc:
        s2 = db2lin(float(doc["noise_dbm"]) - 30)
        kw.setdefault("sigma_u2", s2)
        kw.setdefault("sigma_z2", s2)
        kw.setdefault("sigma_r2", s2)
    if "target_angles" in doc:
        kw["target_angles"] = tuple(float(a) for a in doc["target_angles"])
    if "pathloss_exponents" in doc:
        kw["pathloss"] = PathlossExponents(**{
            k: float(v) for k, v in doc["pathloss_exponents"].items()})
    if "geometry" in doc:
        g = doc["geometry"]
        gkw = {}
        for k in ("bs", "aris", "user_center"):
            if k in g:
                gkw[k] = (float(g[k][0]), float(g[k][1]))
        for k in ("user_radius", "target_distance"):
            if k in g:
                gkw[k] = float(g[k])
        kw["geometry"] = Geometry(**gkw)
    try:
        cfg = SystemConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def config_to_dict(cfg: SystemConfig) -> dict:
    doc = {k: getattr(cfg, k) for k in _SCALAR_KEYS}
    doc["target_angles"] = list(cfg.target_angles)
    doc["pathloss_exponents"] = asdict(cfg.pathloss)
    doc["geometry"] = {
        "bs": list(cfg.geometry.bs),
        "aris": list(cfg.geometry.aris),
        "user_center": list(cfg.geometry.user_center),
        "user_radius": cfg.geometry.user_radius,
        "target_distance": cfg.geometry.target_distance,
    }
    return doc


def load_config(path: str) -> SystemConfig:
    """Read a SystemConfig JSON document; raises ConfigError with location info."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
                f"{exc.msg}") from None
    return config_from_dict(doc)
