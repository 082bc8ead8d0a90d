from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from absl import logging
import numpy as np
from scipy.stats import binomtest, linregress

from divisors.melnikov import divisor_terms, excluded_mask
from spectrum.twist import freq_amp, twist_matrix
from util import shard_generators, shard_sizes

MIN_SAMPLES = 10_000
SLOPE_RTOL = 0.3


@dataclass
class MeasureRow:
    eps: float
    excluded: int
    samples: int
    ci_lo: float
    ci_hi: float
    gamma: float

    @property
    def fraction(self):
        return self.excluded / self.samples

    def csv_row(self, spec, slope):
        return [
            repr(self.eps),
            spec,
            repr(self.fraction),
            repr(self.ci_lo),
            repr(self.ci_hi),
            "" if slope is None else repr(slope),
        ]


@dataclass
class MeasureTable:
    spec: str
    rows: list
    predicted_slope: float
    slope: float = None
    slope_stderr: float = None
    coverage: dict = field(default_factory=dict)

    @property
    def monotone(self):
        ordered = sorted(self.rows, key=lambda r: r.eps)
        return all(a.fraction <= b.fraction for a, b in zip(ordered, ordered[1:]))

    @property
    def slope_ok(self):
        if self.slope is None:
            return False
        return abs(self.slope - self.predicted_slope) <= SLOPE_RTOL * self.predicted_slope

    def to_json(self):
        return {
            "spec": self.spec,
            "rows": [
                {
                    "eps": r.eps,
                    "fraction": r.fraction,
                    "excluded": r.excluded,
                    "samples": r.samples,
                    "ci_lo": r.ci_lo,
                    "ci_hi": r.ci_hi,
                    "gamma": r.gamma,
                }
                for r in self.rows
            ],
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "predicted_slope": self.predicted_slope,
            "slope_ok": self.slope_ok,
            "monotone": self.monotone,
            "coverage": self.coverage,
        }


def measure_estimate(box, spec, eps_list, samples, seed, L_max, J_max=10, shards=1, threads=1):
    """
    Monte-Carlo excluded fraction of the box for one Melnikov family at several eps.

    zeta is sampled uniformly on [1, 2]^nu once per shard and reused for every eps, so the
    excluded sets are compared on common samples. Results depend only on (seed, shards).

    Args:
        box: FrequencyBox; its eps is replaced by each entry of eps_list
        spec: Melnikov family name
        samples: total number of samples N >= 10^4

    Returns:
        MeasureTable with Wilson intervals and the log-log slope of fraction against eps
    """
    if samples < MIN_SAMPLES:
        raise ValueError(f"measure estimates need at least {MIN_SAMPLES} samples, got {samples}")
    twist = twist_matrix(box.S)
    generators = shard_generators(seed, shards)
    sizes = shard_sizes(samples, shards)
    zetas = [box.sample_zeta(rng, size) for rng, size in zip(generators, sizes)]
    rows = []
    coverage = {}
    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for eps in eps_list:
            current = box.with_eps(eps)
            table = divisor_terms(spec, current, L_max, J_max, twist)
            coverage[repr(eps)] = table.coverage

            def count(zeta, current=current, table=table):
                omegas = freq_amp(current.S, zeta, current.eps, twist)
                return int(excluded_mask(table, omegas, zeta, current.eps).sum())

            counts = list(executor.map(count, zetas)) if executor else [count(z) for z in zetas]
            excluded = sum(counts)
            interval = binomtest(excluded, samples).proportion_ci(method="wilson")
            rows.append(
                MeasureRow(
                    eps, excluded, samples, float(interval.low), float(interval.high), current.gamma
                )
            )
            logging.info(
                f"measure {spec} eps={eps}: excluded {excluded}/{samples} "
                f"({excluded / samples:.4%}), {len(table)} divisor rows"
            )
    finally:
        if executor is not None:
            executor.shutdown()
    result = MeasureTable(spec=spec, rows=rows, predicted_slope=box.a, coverage=coverage)
    positive = [r for r in rows if r.excluded > 0]
    if len(positive) >= 2:
        fit = linregress(np.log([r.eps for r in positive]), np.log([r.fraction for r in positive]))
        result.slope, result.slope_stderr = float(fit.slope), float(fit.stderr)
        logging.info(f"measure {spec}: slope {fit.slope:.4f} vs predicted {box.a}")
    return result
