"""Experiment configuration: dataclass plus the flat ``section.key = value`` file format.

Unset tunables resolve at run time: ``tau`` to 1/n, the variance hyperprior
scale ``b`` to its theory default, ``n_factors`` to min(d1, d2) capped at 10,
``kappa`` to the realized sup-norm of the truth. The canonical serialization
(sorted keys, ``auto`` for unresolved values) feeds the config digest.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field

from . import bounds
from ._validation import check_alpha, check_positive
from .priors import FactorPriorConfig
from .samplers import MalaConfig

__all__ = ["ExperimentConfig", "load_config", "parse_flat", "parse_grids"]

_PRIOR_FAMILIES = ("student", "gamma", "inv_gamma")
_PI_KINDS = ("uniform", "tilted")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs besides its seed-split index."""

    d1: int
    d2: int
    rank: int
    n: int
    alpha: float = 0.99
    entry_bound: float = 1.0
    kappa: float | None = None
    prior_family: str = "student"
    n_factors: int | None = None
    prior_a: float = 1.0
    prior_b: float | None = None
    tau: float | None = None
    pi_kind: str = "uniform"
    pi_strength: float = 1.0
    mala: MalaConfig = field(default_factory=MalaConfig)
    replications: int = 1
    master_seed: int = 0
    rate_constant: float = 1.0

    def __post_init__(self):
        if self.d1 < 1 or self.d2 < 1:
            raise ValueError(f"d1, d2 must be >= 1, got {(self.d1, self.d2)}")
        if not 0 <= self.rank <= min(self.d1, self.d2):
            raise ValueError(f"rank must lie in [0, min(d1, d2)], got {self.rank}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        check_alpha(self.alpha)
        check_positive(self.entry_bound, "entry_bound")
        if self.kappa is not None and self.kappa < 0:
            raise ValueError("kappa must be >= 0 or auto")
        if self.prior_family not in _PRIOR_FAMILIES:
            raise ValueError(f"prior_family must be one of {_PRIOR_FAMILIES}")
        if self.n_factors is not None and self.n_factors < 1:
            raise ValueError("n_factors must be >= 1 or auto")
        check_positive(self.prior_a, "prior_a")
        if self.prior_b is not None:
            check_positive(self.prior_b, "prior_b")
        if self.tau is not None:
            check_positive(self.tau, "tau")
        if self.pi_kind not in _PI_KINDS:
            raise ValueError(f"pi_kind must be one of {_PI_KINDS}")
        if self.pi_strength < 1.0:
            raise ValueError("pi_strength must be >= 1")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        check_positive(self.rate_constant, "rate_constant")

    def resolved_tau(self):
        return self.tau if self.tau is not None else 1.0 / self.n

    def resolved_n_factors(self):
        if self.n_factors is not None:
            return self.n_factors
        return min(self.d1, self.d2, 10)

    def resolved_prior_b(self):
        if self.prior_b is not None:
            return self.prior_b
        return bounds.default_gamma_scale(
            self.n, self.d1, self.d2, self.resolved_n_factors(), self.entry_bound
        )

    def factor_config(self):
        return FactorPriorConfig(
            n_factors=self.resolved_n_factors(),
            a=self.prior_a,
            b=self.resolved_prior_b(),
            family=self.prior_family,
        )

    def with_overrides(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_text(self):
        """Canonical flat serialization (sorted keys, ``auto`` for unset values)."""
        items = {
            "model.d1": self.d1,
            "model.d2": self.d2,
            "model.rank": self.rank,
            "model.n": self.n,
            "model.alpha": self.alpha,
            "model.entry_bound": self.entry_bound,
            "model.kappa": self.kappa,
            "prior.family": self.prior_family,
            "prior.n_factors": self.n_factors,
            "prior.a": self.prior_a,
            "prior.b": self.prior_b,
            "prior.tau": self.tau,
            "pi.kind": self.pi_kind,
            "pi.strength": self.pi_strength,
            "mala.step_size": self.mala.step_size,
            "mala.n_steps": self.mala.n_steps,
            "mala.burn_in": self.mala.burn_in,
            "mala.thin": self.mala.thin,
            "mala.adapt": self.mala.adapt,
            "run.replications": self.replications,
            "run.master_seed": self.master_seed,
            "run.rate_constant": self.rate_constant,
        }
        lines = [f"{key} = {_format_value(items[key])}" for key in sorted(items)]
        return "\n".join(lines) + "\n"

    def digest(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:12]

    @classmethod
    def from_mapping(cls, mapping):
        known = dict(mapping)
        known = {k: v for k, v in known.items() if not k.startswith("sweep.")}

        def take(key, convert, default):
            raw = known.pop(key, None)
            if raw is None:
                return default
            return convert(raw)

        cfg = cls(
            d1=take("model.d1", int, 8),
            d2=take("model.d2", int, 8),
            rank=take("model.rank", int, 1),
            n=take("model.n", int, 1000),
            alpha=take("model.alpha", float, 0.99),
            entry_bound=take("model.entry_bound", float, 1.0),
            kappa=take("model.kappa", _maybe_float, None),
            prior_family=take("prior.family", str, "student"),
            n_factors=take("prior.n_factors", _maybe_int, None),
            prior_a=take("prior.a", float, 1.0),
            prior_b=take("prior.b", _maybe_float, None),
            tau=take("prior.tau", _maybe_float, None),
            pi_kind=take("pi.kind", str, "uniform"),
            pi_strength=take("pi.strength", float, 1.0),
            mala=MalaConfig(
                step_size=take("mala.step_size", float, 0.1),
                n_steps=take("mala.n_steps", int, 2000),
                burn_in=take("mala.burn_in", _maybe_int, None),
                thin=take("mala.thin", int, 5),
                adapt=take("mala.adapt", _as_bool, True),
            ),
            replications=take("run.replications", int, 1),
            master_seed=take("run.master_seed", int, 0),
            rate_constant=take("run.rate_constant", float, 1.0),
        )
        if known:
            raise ValueError(f"unknown config keys: {sorted(known)}")
        return cfg

    @classmethod
    def from_text(cls, text):
        return cls.from_mapping(parse_flat(text))

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())


def _format_value(value):
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _maybe_float(raw):
    return None if raw == "auto" else float(raw)


def _maybe_int(raw):
    return None if raw == "auto" else int(raw)


def _as_bool(raw):
    lowered = str(raw).strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def parse_flat(text):
    """Parse ``section.key = value`` lines; ``#`` starts a comment."""
    mapping = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or "." not in key:
            raise ValueError(f"line {lineno}: keys look like 'section.key', got {key!r}")
        if key in mapping:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        mapping[key] = value
    return mapping


def parse_grids(mapping):
    """Extract sweep grids from a parsed flat mapping."""
    grids = {"n_grid": (), "r_grid": ()}
    if "sweep.n_grid" in mapping:
        grids["n_grid"] = tuple(int(v) for v in mapping["sweep.n_grid"].split(",") if v.strip())
    if "sweep.r_grid" in mapping:
        grids["r_grid"] = tuple(int(v) for v in mapping["sweep.r_grid"].split(",") if v.strip())
    return grids


def load_config(path):
    """Read a config file; returns (ExperimentConfig, sweep grids)."""
    with open(path) as fh:
        mapping = parse_flat(fh.read())
    return ExperimentConfig.from_mapping(mapping), parse_grids(mapping)
