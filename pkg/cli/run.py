"""
Command-line front end: python -m cli.run <subcommand> --flag=value ...

Every subcommand writes its artifacts and a manifest.json into --expdir; failures write
error.json there and exit with 2 (configuration), 3 (genericity) or 4 (numerics).
"""
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path
import sys

from absl import app, flags, logging
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from torch.utils.tensorboard import SummaryWriter  # noqa: E402

from bnf.normal_form import approx_constant, full_bnf_degree4, linear_corrections, weak_bnf  # noqa
from cli.config import SUBCOMMANDS, RunConfig, apply_config_file  # noqa: E402
from divisors.measure import measure_estimate  # noqa: E402
from divisors.melnikov import melnikov_member  # noqa: E402
from divisors.small_divisors import FrequencyBox, divisor_min, highprec_gap  # noqa: E402
from dynamics.approx import ApproxSolution, residual_sweep  # noqa: E402
from dynamics.field import bnf_field, compile_field  # noqa: E402
from dynamics.floquet import floquet_sweep  # noqa: E402
from dynamics.integrate import integrate, measured_frequencies  # noqa: E402
from dynamics.state import SpectralState, write_frames  # noqa: E402
from hamiltonian.zakharov import build_zakharov_cached, momentum_hamiltonian  # noqa: E402
from resonance.classify import Resonance, enumerate_low_outside, is_generic  # noqa: E402
from resonance.classify import min_frequency_gap  # noqa: E402
from spectrum.twist import (  # noqa: E402
    amp_freq,
    corrections,
    freq_amp,
    parity_certificate,
    twist_check,
    twist_matrix,
)
from util import (  # noqa: E402
    ConfigError,
    GenericityError,
    Manifest,
    NumericalError,
    set_seeds,
    shard_generators,
    write_csv,
    write_json,
)

FLAGS = flags.FLAGS


@contextmanager
def worker_pool(threads):
    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        yield executor
    finally:
        if executor is not None:
            executor.shutdown()


def _output(manifest, path):
    manifest.add_output(path)
    return path


def _loglog_plot(path, xs, ys, xlabel, ylabel, title, tb_logger=None, tag=None):
    fig, ax = plt.subplots(figsize=(6, 4.5), dpi=150)
    ax.loglog(xs, ys, "o-")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    if tb_logger is not None:
        tb_logger.add_figure(tag, fig)
    plt.close(fig)


def run_sites(cfg, expdir, manifest):
    S = cfg.tangential_set()
    generic, certificate = is_generic(S, cfg.params["n_max"], cfg.threads)
    summary = {
        "sites": S.to_json(),
        "nu": S.nu,
        "omega_bar": S.omega_bar.tolist(),
        "v": S.v.tolist(),
        "w": S.w.tolist(),
        "n_max": cfg.params["n_max"],
        "generic": generic,
        "certificate": certificate,
    }
    write_json(_output(manifest, expdir / "sites.json"), summary)
    if not generic:
        raise GenericityError(f"sites {S} are not generic", certificate=certificate)
    return summary


def run_resonances(cfg, expdir, manifest):
    S = cfg.tangential_set()
    rows = []
    gaps = {}
    with worker_pool(cfg.threads) as executor:
        for n in range(3, cfg.params["max_order"] + 1):
            found = enumerate_low_outside(n, S, executor)
            rows.extend(t.csv_row(Resonance.NON_TRIVIAL) for t in found)
            gap, argmin = min_frequency_gap(S, n)
            gaps[n] = {
                "count": len(found),
                "min_gap": None if argmin is None else gap,
                "argmin": None if argmin is None else argmin.to_json(),
            }
            logging.info(f"order {n}: {len(found)} nontrivial resonances, gap {gap:.6g}")
    write_csv(_output(manifest, expdir / "resonances.csv"), ["order", "j", "sigma", "class"], rows)
    summary = {"sites": S.to_json(), "orders": {str(n): g for n, g in gaps.items()}}
    write_json(_output(manifest, expdir / "resonances.json"), summary)
    return summary


def run_bnf(cfg, expdir, manifest):
    if cfg.params["mode"] == "full":
        report = full_bnf_degree4(cfg.cutoff, cfg.precision)
    else:
        report = weak_bnf(
            cfg.tangential_set(),
            cfg.cutoff if FLAGS["cutoff"].present else None,
            steps=cfg.params["steps"],
            precision=cfg.precision,
            n_max=cfg.params["n_max"],
            opposite_sign_coupling=cfg.params["opposite_sign_coupling"],
        )
    manifest.add_input("zakharov", report.input_hash)
    summary = report.to_json()
    if cfg.params["approx_constant"]:
        _, summary["approx_constant"] = approx_constant(cfg.cutoff, report)
    write_json(_output(manifest, expdir / "bnf_report.json"), summary)
    write_csv(
        _output(manifest, expdir / "offending.csv"),
        ["kind", "modes", "re", "im", "expected"],
        [
            [
                row["kind"],
                " ".join(f"{j}:{s}" for j, s in row["modes"]),
                repr(row["re"]),
                repr(row["im"]),
                "" if row["expected"] is None else repr(row["expected"]),
            ]
            for row in report.offending
        ],
    )
    if not report.passed:
        logging.warning(f"{report.mode} BNF checks failed: {len(report.offending)} offending terms")
    return summary


def run_twist(cfg, expdir, manifest):
    S = cfg.tangential_set()
    check = twist_check(S)
    data = twist_matrix(S)
    summary = dict(check)
    summary["matrix"] = data.to_json()
    summary["parity_certificate"] = parity_certificate([1 if j > 0 else -1 for j in S.sites])
    write_json(_output(manifest, expdir / "twist.json"), summary)
    logging.info(f"twist S={S}: int_cert {data.int_cert}, pi polynomial {data.pi_poly}")
    if not check["pass"]:
        raise GenericityError(f"twist condition fails for sites {S}", certificate=check)
    return summary


def run_spectrum(cfg, expdir, manifest):
    S = cfg.tangential_set()
    zeta = cfg.zeta_array()
    twist = twist_matrix(S)
    omega = freq_amp(S, zeta, cfg.eps, twist)
    bound = cfg.params["j_max"] or 2 * S.max_abs
    js = [j for j in range(-bound, bound + 1) if j != 0 and j not in S]
    corr = corrections(S, zeta, cfg.eps, js=js, omega=omega)
    summary = {
        "sites": S.to_json(),
        "zeta": zeta.tolist(),
        "eps": cfg.eps,
        "omega": omega.tolist(),
        "corrections": corr.to_json(),
    }
    if cfg.eps > 0:
        summary["amp_freq_roundtrip_error"] = float(
            np.max(np.abs(amp_freq(S, omega, cfg.eps, twist) - zeta))
        )
    if cfg.params["bnf_check"]:
        summary["bnf_cross_check"] = linear_corrections(
            S, zeta, cfg.cutoff, n_max=cfg.params["n_max"]
        )
    write_json(_output(manifest, expdir / "spectrum.json"), summary)
    write_csv(
        _output(manifest, expdir / "eigenvalues.csv"),
        ["j", "c_j", "d_j"],
        [[j, repr(corr.c[j]), repr(corr.d[j])] for j in js],
    )
    return summary


def run_divisors(cfg, expdir, manifest):
    S = cfg.tangential_set()
    params = cfg.params
    scan = divisor_min(S, params["p"], params["j_max"], params["stability_check"], cfg.threads)
    summary = scan.to_json()
    if scan.argmin is not None:
        summary["highprec_gap"] = highprec_gap(scan.argmin)
        if scan.argmin.exact is not None and scan.argmin.exact.is_zero():
            write_json(_output(manifest, expdir / "divisors.json"), summary)
            raise GenericityError(
                f"divisor vanishes exactly for sites {S}", certificate=scan.argmin.to_json()
            )
    if cfg.eps > 0:
        box = FrequencyBox(S, cfg.eps, cfg.a, cfg.tau, cfg.gamma_scale)
        omega = freq_amp(S, cfg.zeta_array(), cfg.eps)
        member = melnikov_member(
            omega, "all", box, cfg.params["l_max"], min(cfg.params["j_max"], 100)
        )
        summary["melnikov"] = {
            "omega": omega.tolist(),
            "passed": member.passed,
            "worst": member.worst.to_json() if member.worst else None,
            "coverage": member.coverage,
        }
    write_json(_output(manifest, expdir / "divisors.json"), summary)
    return summary


def run_measure(cfg, expdir, manifest):
    S = cfg.tangential_set()
    spec = cfg.params["spec"]
    box = FrequencyBox(S, cfg.eps_list[0], cfg.a, cfg.tau, cfg.gamma_scale)
    table = measure_estimate(
        box,
        spec,
        cfg.eps_list,
        cfg.params["samples"],
        cfg.seed,
        cfg.params["l_max"],
        cfg.params["j_max"],
        shards=cfg.shards,
        threads=cfg.threads,
    )
    write_csv(
        _output(manifest, expdir / "measure.csv"),
        ["eps", "spec", "fraction", "ci_lo", "ci_hi", "slope"],
        [row.csv_row(spec, table.slope) for row in table.rows],
    )
    summary = table.to_json()
    write_json(_output(manifest, expdir / "measure.json"), summary)
    tb_logger = SummaryWriter(str(expdir / "tb"), flush_secs=10)
    for i, row in enumerate(table.rows):
        tb_logger.add_scalar("measure/fraction", row.fraction, i)
        tb_logger.add_scalar("measure/eps", row.eps, i)
    positive = [row for row in table.rows if row.excluded > 0]
    if positive:
        _loglog_plot(
            _output(manifest, expdir / "measure.png"),
            [row.eps for row in positive],
            [row.fraction for row in positive],
            "eps",
            "excluded fraction",
            f"{spec}: slope {table.slope} (predicted {box.a})",
            tb_logger,
            "measure/loglog",
        )
    tb_logger.close()
    return summary


def _initial_state(cfg, S, zeta, cutoff):
    state = ApproxSolution(S, zeta, cfg.eps).state(np.zeros(S.nu), cutoff)
    if cfg.params["noise"] > 0:
        rng = shard_generators(cfg.seed, 1)[0]
        noise = SpectralState.random(cutoff, rng, cfg.params["noise"] * cfg.eps)
        for j in S.sites:
            noise.z[j + cutoff] = 0
        state = SpectralState(cutoff, state.z + noise.z)
    return state


def run_simulate(cfg, expdir, manifest):
    S = cfg.tangential_set()
    zeta = cfg.zeta_array()
    cutoff = cfg.cutoff
    s0 = _initial_state(cfg, S, zeta, cutoff)
    M = compile_field(momentum_hamiltonian(cutoff), cutoff)
    if cfg.params["flow"] == "bnf":
        rhs = bnf_field(cutoff)
        H = None
    else:
        zakharov = build_zakharov_cached(cutoff, 4, "double")
        manifest.add_input("zakharov", zakharov.content_hash())
        H = compile_field(zakharov, cutoff)
        rhs = H
    trajectory = integrate(
        rhs,
        s0,
        cfg.params["t_final"],
        cfg.tol,
        method=cfg.params["integrator"],
        samples=cfg.params["frames"],
        dt=cfg.params["dt"],
    )
    if cfg.output_format == "binary":
        write_frames(_output(manifest, expdir / "trajectory.bin"), trajectory)
    else:
        trajectory.write_csv(_output(manifest, expdir / "trajectory.csv"))

    tb_logger = SummaryWriter(str(expdir / "tb"), flush_secs=10)
    actions = np.abs(trajectory.z) ** 2
    action_drift = np.max(np.abs(actions - actions[0]), axis=1)
    momentum = np.array([M.energy(z) for z in trajectory.z])
    for i, t in enumerate(trajectory.t):
        tb_logger.add_scalar("simulate/action_drift", action_drift[i], i)
        tb_logger.add_scalar("simulate/momentum_drift", abs(momentum[i] - momentum[0]), i)
    conservation = {
        "max_action_drift": float(action_drift.max()),
        "momentum_drift": float(np.max(np.abs(momentum - momentum[0]))),
    }
    if H is not None:
        energy = np.array([H.energy(z) for z in trajectory.z])
        conservation["energy_drift"] = float(np.max(np.abs(energy - energy[0])))
        conservation["energy"] = float(energy[0])

    predicted = freq_amp(S, zeta, cfg.eps)
    measured = measured_frequencies(trajectory, list(S.sites))
    frequencies = {}
    for i, j in enumerate(S.sites):
        estimate = measured[j]
        entry = estimate.to_json()
        entry["predicted"] = float(predicted[i])
        if estimate.frequency is not None:
            error = abs(estimate.frequency - predicted[i])
            entry["error"] = float(error)
            entry["within_bound"] = bool(error <= 10 * cfg.eps**4 + 3 * estimate.stderr)
            tb_logger.add_scalar(f"simulate/frequency_error_{j}", error, 0)
        frequencies[str(j)] = entry

    summary = {
        "initial_state": {"sites": S.to_json(), "zeta": zeta.tolist(), "eps": cfg.eps},
        "trajectory": trajectory.info,
        "conservation": conservation,
        "frequencies": frequencies,
    }
    if cfg.eps_list:
        cubic = build_zakharov_cached(cutoff, 3, "double")
        sweep = residual_sweep(cubic, S, zeta, cfg.eps_list, cutoff, cfg.params["points"])
        write_csv(
            _output(manifest, expdir / "residual.csv"),
            ["eps", "residual", "slope"],
            sweep.csv_rows(),
        )
        for i, value in enumerate(sweep.values):
            tb_logger.add_scalar("simulate/residual", value, i)
        positive = [(e, r) for e, r in zip(sweep.eps, sweep.values) if r > 0]
        if positive:
            _loglog_plot(
                _output(manifest, expdir / "residual.png"),
                [e for e, _ in positive],
                [r for _, r in positive],
                "eps",
                "residual",
                f"residual slope {sweep.slope}",
                tb_logger,
                "simulate/residual_loglog",
            )
        summary["residual"] = sweep.to_json()
    tb_logger.close()
    write_json(_output(manifest, expdir / "simulate.json"), summary)
    return summary


def run_floquet(cfg, expdir, manifest):
    S = cfg.tangential_set()
    zeta = cfg.zeta_array()
    J_max, L_max = cfg.params["j_max"], cfg.params["l_max"]
    cutoff = cfg.cutoff or J_max + 2 * S.max_abs
    report = weak_bnf(S, cutoff, steps=2, n_max=cfg.params["n_max"])
    manifest.add_input("zakharov", report.input_hash)
    H = report.extra["transformed"]
    sweep = floquet_sweep(H, lambda eps: ApproxSolution(S, zeta, eps), cfg.eps_list, L_max, J_max)
    write_csv(
        _output(manifest, expdir / "floquet.csv"),
        ["eps", "max_residual", "slope"],
        sweep.csv_rows(),
    )
    for i, result in enumerate(sweep.results):
        write_csv(
            _output(manifest, expdir / f"floquet_eigenvalues_{i}.csv"),
            ["l", "n", "sigma", "re", "im", "predicted_im", "interior"],
            result.csv_rows(),
        )
    tb_logger = SummaryWriter(str(expdir / "tb"), flush_secs=10)
    for i, value in enumerate(sweep.max_residual):
        tb_logger.add_scalar("floquet/max_residual", value, i)
    positive = [(e, r) for e, r in zip(sweep.eps, sweep.max_residual) if r > 0]
    if positive:
        _loglog_plot(
            _output(manifest, expdir / "floquet.png"),
            [e for e, _ in positive],
            [r for _, r in positive],
            "eps",
            "max eigenvalue residual",
            f"Floquet residual slope {sweep.slope}",
            tb_logger,
            "floquet/loglog",
        )
    tb_logger.close()
    summary = sweep.to_json()
    summary["spectra"] = [result.to_json() for result in sweep.results]
    summary["cutoff"] = cutoff
    write_json(_output(manifest, expdir / "floquet.json"), summary)
    return summary


DISPATCH = {
    "sites": run_sites,
    "resonances": run_resonances,
    "bnf": run_bnf,
    "twist": run_twist,
    "spectrum": run_spectrum,
    "divisors": run_divisors,
    "measure": run_measure,
    "simulate": run_simulate,
    "floquet": run_floquet,
}


def _error_report(err):
    return {
        "error": type(err).__name__,
        "message": str(err),
        "exit_code": getattr(err, "exit_code", 2),
        "certificate": getattr(err, "certificate", None),
    }


def dispatch(subcommand, expdir):
    """
    Run one subcommand; returns the exit status. Outputs and manifest.json land in expdir,
    error.json as well on failure.
    """
    expdir = Path(expdir)
    expdir.mkdir(parents=True, exist_ok=True)
    try:
        if subcommand not in DISPATCH:
            raise ConfigError(f"unknown subcommand {subcommand}, expected one of {SUBCOMMANDS}")
        applied = apply_config_file(FLAGS.config, subcommand)
        cfg = RunConfig.from_flags(subcommand).validate()
        set_seeds(cfg.seed)
        for name, value in sorted(cfg.to_json().items()):
            logging.info(f"{subcommand} config {name}={value}")
        manifest = Manifest(subcommand, cfg.to_json(), cfg.seed)
        if FLAGS.config is not None:
            manifest.extra["config_file_values"] = applied
        DISPATCH[subcommand](cfg, expdir, manifest)
        manifest.write(expdir)
    except (ConfigError, GenericityError, NumericalError, ValueError, KeyError) as err:
        report = _error_report(err)
        write_json(expdir / "error.json", report)
        logging.error(f"{subcommand} failed ({report['error']}): {err}")
        return report["exit_code"]
    return 0


def main(argv):
    subcommand = argv[1] if len(argv) > 1 else None
    expdir = FLAGS.expdir or f"runs/{subcommand or 'error'}"
    sys.exit(dispatch(subcommand, expdir))


if __name__ == "__main__":
    app.run(main)
