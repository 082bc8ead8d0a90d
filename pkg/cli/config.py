"""
Flags shared by every subcommand, structured config files and the validated run configuration.
"""
from dataclasses import asdict, dataclass, field
from typing import Optional

from absl import flags
import numpy as np

from divisors.melnikov import SPECS
from spectrum.sites import TangentialSet
from util import ConfigError, read_json

SUBCOMMANDS = (
    "sites",
    "resonances",
    "bnf",
    "twist",
    "spectrum",
    "divisors",
    "measure",
    "simulate",
    "floquet",
)

FLAGS = flags.FLAGS
flags.DEFINE_string("expdir", None, "directory to write all outputs to")
flags.DEFINE_string("config", None, "json file {common: {...}, <subcommand>: {...}} of flag values")

flags.DEFINE_string("sites", None, "tangential sites, comma separated, e.g. 3,2")
flags.DEFINE_list("zeta", None, "actions zeta on the sites, defaults to all ones")
flags.DEFINE_integer("cutoff", None, "Fourier cutoff K, defaults depend on the subcommand")
flags.DEFINE_enum("precision", "double", ["double", "extended"], "coefficient precision")

flags.DEFINE_enum("mode", "full", ["full", "weak"], "Birkhoff normal form variant")
flags.DEFINE_integer("steps", 2, "weak normal form steps (1 or 2)")
flags.DEFINE_boolean("opposite_sign_coupling", True, "expect opposite-sign (4,0) terms")
flags.DEFINE_boolean("approx_constant", False, "also check the approximate constant of motion")
flags.DEFINE_boolean("bnf_check", False, "cross-check eigenvalue corrections against the BNF")
flags.DEFINE_integer("max_order", 4, "largest resonance order enumerated")
flags.DEFINE_integer("n_max", 6, "genericity checked up to this resonance order")

flags.DEFINE_float("eps", 0.05, "amplitude eps")
flags.DEFINE_list("eps_list", None, "amplitudes of a sweep")
flags.DEFINE_float("a", 0.2, "exponent a in gamma = eps^(2 + a)")
flags.DEFINE_float("tau", None, "diophantine exponent, defaults to 3 nu + 7")
flags.DEFINE_float("gamma_scale", 1.0, "constant in front of gamma")

flags.DEFINE_enum("spec", "g0", list(SPECS), "Melnikov family")
flags.DEFINE_integer("samples", 100_000, "Monte-Carlo samples")
flags.DEFINE_integer("shards", 1, "independent random streams")
flags.DEFINE_integer("threads", 1, "worker threads")
flags.DEFINE_integer("p", 1, "divisor order |l|_1 <= p")
flags.DEFINE_integer("j_max", None, "normal index range, defaults depend on the subcommand")
flags.DEFINE_integer("l_max", None, "|l|_1 range, defaults depend on the subcommand")
flags.DEFINE_boolean("stability_check", True, "repeat divisor scans at twice the range")

flags.DEFINE_enum("flow", "bnf", ["bnf", "full"], "vector field integrated by simulate")
flags.DEFINE_enum("integrator", "rk45", ["rk45", "midpoint"], "time integrator")
flags.DEFINE_float("t_final", 100.0, "integration time")
flags.DEFINE_float("tol", 1e-10, "integrator tolerance")
flags.DEFINE_float("dt", None, "implicit midpoint step")
flags.DEFINE_integer("frames", 201, "output times of a trajectory")
flags.DEFINE_float("noise", 0.0, "relative amplitude of random normal modes in the initial state")
flags.DEFINE_integer("points", 8, "phase grid points per angle for residuals")
flags.DEFINE_enum("output_format", "csv", ["csv", "binary"], "trajectory output format")

# per-subcommand fallbacks for flags left unset
DEFAULTS = {
    "bnf": {"cutoff": 12},
    "divisors": {"j_max": 10_000, "l_max": 5},
    "measure": {"j_max": 10, "l_max": 50, "eps_list": [0.1, 0.07, 0.05, 0.035]},
    "simulate": {"cutoff": 8},
    "floquet": {"j_max": 10, "l_max": 3, "eps_list": [0.02, 0.04, 0.08]},
}
SUBCOMMAND_FLAGS = {
    "sites": ["n_max"],
    "resonances": ["max_order"],
    "bnf": ["mode", "steps", "opposite_sign_coupling", "approx_constant", "n_max"],
    "twist": [],
    "spectrum": ["j_max", "bnf_check", "n_max"],
    "divisors": ["p", "j_max", "l_max", "stability_check"],
    "measure": ["spec", "samples", "j_max", "l_max"],
    "simulate": ["flow", "integrator", "t_final", "dt", "frames", "noise", "points"],
    "floquet": ["j_max", "l_max", "n_max"],
}
NEEDS_SITES = set(SUBCOMMANDS) - {"bnf"}


def _as_flag_text(value):
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


def apply_config_file(path, subcommand):
    """
    Apply {"common": {...}, subcommand: {...}} from a json file to the flags not given on the
    command line.
    """
    if path is None:
        return {}
    try:
        tree = read_json(path)
    except (OSError, ValueError) as err:
        raise ConfigError(f"cannot read config file {path}: {err}")
    unknown_sections = set(tree) - {"common"} - set(SUBCOMMANDS)
    if unknown_sections:
        raise ConfigError(f"unknown config sections {sorted(unknown_sections)}")
    values = dict(tree.get("common", {}))
    values.update(tree.get(subcommand, {}))
    applied = {}
    for name, value in values.items():
        if name not in FLAGS:
            raise ConfigError(f"config key {name} is not a flag")
        if value is None or name in ("config", "expdir") or FLAGS[name].present:
            continue
        try:
            FLAGS[name].parse(_as_flag_text(value))
        except flags.Error as err:
            raise ConfigError(f"config value {name}={value!r}: {err}")
        applied[name] = value
    return applied


def _float_list(name, values):
    try:
        return [float(v) for v in values]
    except ValueError:
        raise ConfigError(f"--{name} must hold numbers, got {values}")


@dataclass
class RunConfig:
    subcommand: str
    sites: Optional[list]
    zeta: Optional[list]
    cutoff: Optional[int]
    precision: str
    eps: float
    eps_list: Optional[list]
    a: float
    tau: Optional[float]
    gamma_scale: float
    tol: float
    seed: int
    shards: int
    threads: int
    output_format: str
    params: dict = field(default_factory=dict)

    @classmethod
    def from_flags(cls, subcommand):
        if subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {subcommand}, expected one of {SUBCOMMANDS}")
        defaults = DEFAULTS.get(subcommand, {})

        def pick(name):
            value = FLAGS[name].value
            return defaults.get(name) if value is None and name in defaults else value

        sites = None
        if FLAGS.sites is not None:
            try:
                sites = list(TangentialSet.parse(FLAGS.sites).sites)
            except ValueError as err:
                raise ConfigError(str(err))
        eps_list = pick("eps_list")
        return cls(
            subcommand=subcommand,
            sites=sites,
            zeta=None if FLAGS.zeta is None else _float_list("zeta", FLAGS.zeta),
            cutoff=pick("cutoff"),
            precision=FLAGS.precision,
            eps=FLAGS.eps,
            eps_list=None if eps_list is None else _float_list("eps_list", eps_list),
            a=FLAGS.a,
            tau=FLAGS.tau,
            gamma_scale=FLAGS.gamma_scale,
            tol=FLAGS.tol,
            seed=FLAGS.seed,
            shards=FLAGS.shards,
            threads=FLAGS.threads,
            output_format=FLAGS.output_format,
            params={name: pick(name) for name in SUBCOMMAND_FLAGS[subcommand]},
        )

    def tangential_set(self):
        return TangentialSet(tuple(self.sites))

    def zeta_array(self):
        if self.zeta is None:
            return np.ones(len(self.sites))
        return np.asarray(self.zeta, dtype=float)

    def validate(self):
        """Check the preconditions of the subcommand; raises ConfigError."""
        sub = self.subcommand
        needs_sites = sub in NEEDS_SITES or (sub == "bnf" and self.params["mode"] == "weak")
        if needs_sites and self.sites is None:
            raise ConfigError(f"{sub} needs --sites")
        if self.zeta is not None:
            if self.sites is None or len(self.zeta) != len(self.sites):
                raise ConfigError(f"--zeta needs one action per site, got {self.zeta}")
            if min(self.zeta) < 0:
                raise ConfigError("actions zeta must be nonnegative")
        if self.cutoff is not None and self.cutoff < 1:
            raise ConfigError(f"--cutoff must be >= 1, got {self.cutoff}")
        if self.sites is not None and self.cutoff is not None and sub in ("simulate", "bnf"):
            if self.cutoff < max(abs(j) for j in self.sites):
                raise ConfigError(f"--cutoff {self.cutoff} does not contain the sites")
        if not 0 <= self.eps < 1:
            raise ConfigError(f"--eps must lie in [0, 1), got {self.eps}")
        if self.eps_list is not None:
            if not self.eps_list or any(not 0 < e < 1 for e in self.eps_list):
                raise ConfigError(f"--eps_list entries must lie in (0, 1), got {self.eps_list}")
        if self.shards < 1 or self.threads < 1:
            raise ConfigError("--shards and --threads must be >= 1")
        if sub == "measure":
            if self.params["samples"] < 10_000:
                raise ConfigError(f"--samples must be >= 10^4, got {self.params['samples']}")
            if self.shards > self.params["samples"]:
                raise ConfigError("more shards than samples")
        if sub == "simulate":
            if not 1e-12 <= self.tol <= 1e-6:
                raise ConfigError(f"--tol must lie in [1e-12, 1e-6], got {self.tol}")
            if self.params["t_final"] <= 0 or self.params["frames"] < 3:
                raise ConfigError("--t_final must be positive and --frames >= 3")
        if sub == "bnf" and self.params["steps"] not in (1, 2):
            raise ConfigError(f"--steps must be 1 or 2, got {self.params['steps']}")
        if sub == "bnf" and self.params["approx_constant"] and self.params["mode"] != "full":
            raise ConfigError("--approx_constant needs --mode=full")
        if sub == "divisors" and not 0 <= self.params["p"] <= 6:
            raise ConfigError(f"--p must lie in [0, 6], got {self.params['p']}")
        if sub == "resonances" and not 3 <= self.params["max_order"] <= 15:
            raise ConfigError(f"--max_order must lie in [3, 15], got {self.params['max_order']}")
        for name in ("j_max", "l_max"):
            if name in self.params and self.params[name] is not None and self.params[name] < 1:
                raise ConfigError(f"--{name} must be >= 1")
        return self

    def to_json(self):
        return asdict(self)
