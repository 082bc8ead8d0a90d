import csv
import hashlib
import json
import os
import random
import time
from pathlib import Path

from absl import flags
import numpy as np
import torch

flags.DEFINE_integer("seed", 42, "fixed seed to apply to all rng entrypoints")

TOOLKIT_VERSION = "0.3.0"
# bump when the Fourier normalisation or the complex change of variables changes
NORMALIZATION_VERSION = 1
CACHE_ENV_VAR = "KAMWW_CACHE"


class ConfigError(ValueError):
    """Invalid run configuration, exit code 2."""

    exit_code = 2


class GenericityError(ValueError):
    """Tangential sites fail the genericity test, exit code 3."""

    exit_code = 3

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class NumericalError(RuntimeError):
    """Numerical failure (step underflow, singular matrix, ...), exit code 4."""

    exit_code = 4


def set_seeds(seed=42, fully_deterministic=False):
    torch.manual_seed(seed)
    np.random.seed(seed)
    random.seed(seed)
    os.environ["PYTHONHASHSEED"] = str(seed)

    if fully_deterministic:
        torch.use_deterministic_algorithms(True)


def shard_generators(seed, shards):
    """
    Counter-based generators, one per shard. The stream of shard i depends only on (seed, i),
    so results merged in shard order are reproducible for a fixed (seed, shards) pair.
    """
    children = np.random.SeedSequence(seed).spawn(shards)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


def shard_sizes(total, shards):
    base, extra = divmod(total, shards)
    return [base + (1 if i < extra else 0) for i in range(shards)]


def content_hash(obj):
    """sha256 of the canonical (sorted-keys) JSON encoding of obj"""
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _json_default(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if hasattr(obj, "to_json"):
        return obj.to_json()
    raise TypeError(f"object of type {type(obj).__name__} is not JSON serializable")


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as outfile:
        json.dump(obj, outfile, indent=4, sort_keys=True, default=_json_default)
        outfile.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as inf:
        return json.load(inf)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as outfile:
        writer = csv.writer(outfile, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def cache_dir():
    path = Path(os.environ.get(CACHE_ENV_VAR, Path.home() / ".cache" / "kamww"))
    path.mkdir(parents=True, exist_ok=True)
    return path


def file_hash(path):
    digest = hashlib.sha256()
    with open(path, "rb") as inf:
        for chunk in iter(lambda: inf.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class Manifest:
    """
    Run manifest written next to every output: config, seed, input hashes, version, wall time.
    Wall time is kept out of the content hash so reruns hash identically.
    """

    def __init__(self, subcommand, config, seed):
        self.subcommand = subcommand
        self.config = dict(config)
        self.seed = seed
        self.inputs = {}
        self.outputs = {}
        self.extra = {}
        self._start = time.perf_counter()

    def add_input(self, name, digest):
        self.inputs[name] = digest

    def add_output(self, path):
        self.outputs[Path(path).name] = Path(path)

    def as_dict(self):
        return {
            "subcommand": self.subcommand,
            "config": self.config,
            "config_hash": content_hash(self.config),
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": {
                name: file_hash(path) if path.is_file() else None
                for name, path in sorted(self.outputs.items())
            },
            "toolkit_version": TOOLKIT_VERSION,
            "normalization_version": NORMALIZATION_VERSION,
            "extra": self.extra,
        }

    def write(self, outdir):
        payload = self.as_dict()
        payload["wall_time_s"] = round(time.perf_counter() - self._start, 3)
        write_json(Path(outdir) / "manifest.json", payload)
        return payload
