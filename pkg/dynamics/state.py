"""
Spectral states of the truncated system and trajectories built from them.

A state over cutoff K is stored densely as z[j + K] for -K <= j <= K; the slot of the zero mode
is kept at zero.
"""
from dataclasses import dataclass, field
import json
from pathlib import Path

import numpy as np

from util import NORMALIZATION_VERSION, write_csv

FRAME_MAGIC = "kamww-frames"


def wavenumbers(cutoff):
    return np.arange(-cutoff, cutoff + 1)


@dataclass
class SpectralState:
    cutoff: int
    z: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=complex)
        if self.z.shape != (2 * self.cutoff + 1,):
            raise ValueError(
                f"state over cutoff {self.cutoff} needs {2 * self.cutoff + 1} slots, "
                f"got shape {self.z.shape}"
            )
        if self.z[self.cutoff] != 0:
            raise ValueError("zero mode must vanish")
        if not np.all(np.isfinite(self.z)):
            raise ValueError("state amplitudes must be finite")

    @classmethod
    def zeros(cls, cutoff, t=0.0):
        return cls(cutoff, np.zeros(2 * cutoff + 1, dtype=complex), t)

    @classmethod
    def from_modes(cls, cutoff, amplitudes, t=0.0):
        """:param amplitudes: mapping j -> z_j; modes beyond the cutoff are rejected"""
        z = np.zeros(2 * cutoff + 1, dtype=complex)
        for j, value in amplitudes.items():
            if j == 0 or abs(j) > cutoff:
                raise ValueError(f"mode {j} lies outside 1 <= |j| <= {cutoff}")
            z[j + cutoff] = value
        return cls(cutoff, z, t)

    @classmethod
    def random(cls, cutoff, rng, radius=0.1):
        """uniform modulus in [0, radius] and uniform phase on every mode"""
        z = radius * rng.uniform(0.0, 1.0, 2 * cutoff + 1) * np.exp(
            2j * np.pi * rng.uniform(0.0, 1.0, 2 * cutoff + 1)
        )
        z[cutoff] = 0
        return cls(cutoff, z)

    def __getitem__(self, j):
        if j == 0 or abs(j) > self.cutoff:
            return 0j
        return self.z[j + self.cutoff]

    def to_dict(self):
        return {int(j): self.z[j + self.cutoff] for j in wavenumbers(self.cutoff) if j != 0}

    def actions(self):
        return np.abs(self.z) ** 2

    def copy(self):
        return SpectralState(self.cutoff, self.z.copy(), self.t)


@dataclass
class Trajectory:
    cutoff: int
    t: np.ndarray
    z: np.ndarray
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def state(self, i):
        return SpectralState(self.cutoff, self.z[i], float(self.t[i]))

    def mode(self, j):
        return self.z[:, j + self.cutoff]

    def final(self):
        return self.state(len(self) - 1)

    def csv_rows(self, modes=None):
        modes = modes or [j for j in wavenumbers(self.cutoff) if j != 0]
        for i, t in enumerate(self.t):
            for j in modes:
                value = self.z[i, j + self.cutoff]
                yield [repr(float(t)), int(j), repr(float(value.real)), repr(float(value.imag))]

    def write_csv(self, path, modes=None):
        write_csv(path, ["t", "mode", "re", "im"], self.csv_rows(modes))


def _frame_dtype(slots):
    return np.dtype([("t", "<f8"), ("z", "<c16", (slots,))])


def write_frames(path, trajectory):
    """
    Binary frames: an 8-byte little-endian header length, the UTF-8 JSON header, then one
    record per time of float64 t followed by complex128 amplitudes z_{-K..K}.
    """
    slots = 2 * trajectory.cutoff + 1
    header = {
        "format": FRAME_MAGIC,
        "cutoff": trajectory.cutoff,
        "slots": slots,
        "frames": len(trajectory),
        "record": "<f8 t, <c16 z[-K..K]",
        "normalization_version": NORMALIZATION_VERSION,
        "info": trajectory.info,
    }
    encoded = json.dumps(header, sort_keys=True).encode("utf-8")
    records = np.zeros(len(trajectory), dtype=_frame_dtype(slots))
    records["t"] = trajectory.t
    records["z"] = trajectory.z
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as outfile:
        outfile.write(np.array([len(encoded)], dtype="<u8").tobytes())
        outfile.write(encoded)
        outfile.write(records.tobytes())


def read_frames(path):
    with open(path, "rb") as inf:
        length = int(np.frombuffer(inf.read(8), dtype="<u8")[0])
        header = json.loads(inf.read(length).decode("utf-8"))
        if header.get("format") != FRAME_MAGIC:
            raise ValueError(f"{path} is not a trajectory frame file")
        records = np.frombuffer(inf.read(), dtype=_frame_dtype(header["slots"]))
    if len(records) != header["frames"]:
        raise ValueError(
            f"{path}: header announces {header['frames']} frames, found {len(records)}"
        )
    return Trajectory(header["cutoff"], records["t"].copy(), records["z"].copy(), header["info"])
