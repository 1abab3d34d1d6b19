"""Command-line entry point: ``crtune <command> [options]``.

Every command writes CSV tables and a JSON summary into ``--out``; figures
are rendered next to them unless ``--no-plot`` is given.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .benchmarking import (
    CompiledChannels,
    DepolarizingChannels,
    IdealChannels,
    clifford_group_2q,
    interleaved_rb,
    rb_experiment,
)
from .calibration import (
    N_CANCEL_AMPS,
    N_PHASES,
    calibrate_zx90,
    calibration_from_dict,
    cancellation_amplitude_sweep,
    echo_trajectory,
    echoed_gate_unitary,
    echoed_target,
    find_phi0,
    find_phi1,
    phase_sweep,
    sinusoid_fit,
)
from .device import Channel, DriveConfig, dressed_frequencies, static_zz
from .effective import cr_drive, effective_cr_coefficients
from .io import ConfigError, load_config, write_csv, write_json
from .propagation import default_frame
from .quantum import I2, X, average_gate_fidelity, dag, kron, unitary_superop
from .tomography import (
    CRCoefficients,
    CRParams,
    TomographyError,
    default_durations,
    estimate_entangling_time,
    measure_cr_hamiltonian,
    r_vector_trace,
)

COEFFS = list(CRCoefficients.LABELS)
EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


def _shots(text: str):
    if text == "exact":
        return "exact"
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("shots must be a positive integer or 'exact'") from None
    if n <= 0:
        raise argparse.ArgumentTypeError("shots must be a positive integer or 'exact'")
    return n


def _positive(text: str) -> float:
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="default.json",
                        help="device JSON file, or the name of a bundled config (paper.json, default.json)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=0, help="random seed")
    common.add_argument("--shots", type=_shots, default="exact", help="shots per expectation value, or 'exact'")
    common.add_argument("--dt", type=_positive, default=0.1, help="propagation step (ns)")
    common.add_argument("--workers", type=int, default=1, help="threads for independent sweep points")
    common.add_argument("--no-plot", action="store_true", help="skip figure rendering")

    parser = argparse.ArgumentParser(prog="crtune", description="Echoed cross-resonance gate simulation and calibration.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def cmd(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text, description=help_text)

    def cr_args(p, amp_default=50.0):
        p.add_argument("--amp", type=float, default=amp_default, help="CR amplitude (MHz)")
        p.add_argument("--phase", type=float, default=0.0, help="CR phase (rad)")
        p.add_argument("--cancel-amp", type=float, default=0.0, help="cancellation amplitude (MHz)")
        p.add_argument("--cancel-phase", type=float, default=0.0, help="cancellation tone phase (rad)")

    p = cmd("effective-h", "theory CR rates from block diagonalization")
    p.add_argument("--amp", type=float, nargs="+", default=[0.0], help="CR amplitudes (MHz)")
    p.add_argument("--phase", type=float, default=0.0)
    p.add_argument("--cancel-amp", type=float, default=0.0)
    p.add_argument("--cancel-phase", type=float, default=0.0)

    cr_args(cmd("tomo", "simulate conditional Rabi traces and fit the CR Hamiltonian"))

    p = cmd("sweep-amp", "tomography and theory versus CR amplitude")
    p.add_argument("--amps", type=float, nargs="+", default=list(np.linspace(10, 100, 10)))
    p.add_argument("--phase", type=float, default=0.0)

    p = cmd("sweep-phase", "tomography versus CR phase")
    p.add_argument("--amp", type=float, default=50.0)
    p.add_argument("--n-phases", type=int, default=None)

    p = cmd("sweep-cancel", "tomography versus cancellation amplitude")
    p.add_argument("--amp", type=float, default=50.0)
    p.add_argument("--phase", type=float, default=None, help="CR phase; found from a phase sweep if omitted")
    p.add_argument("--cancel-phase", type=float, default=None, help="found from a phase sweep if omitted")
    p.add_argument("--amps", type=float, nargs="+", default=None, help="cancellation amplitudes (MHz)")

    p = cmd("calibrate", "full calibration of the echoed ZX90 gate")
    p.add_argument("--gate-time", type=_positive, default=None, help="echoed gate time (ns)")
    p.add_argument("--no-cancel", action="store_true", help="calibrate without the cancellation tone")

    p = cmd("trajectory", "target Bloch trajectory through the calibrated echoed gate")
    p.add_argument("--calibration", default=None, help="calibration JSON from 'calibrate'")
    p.add_argument("--gate-time", type=_positive, default=None)

    for name, text in (("rb", "two-qubit randomized benchmarking"), ("irb", "interleaved RB of the calibrated gate")):
        p = cmd(name, text)
        p.add_argument("--lengths", type=int, nargs="+", default=None)
        p.add_argument("--n-seqs", type=int, default=None)
        p.add_argument("--calibration", default=None, help="calibration JSON from 'calibrate'")
        p.add_argument("--gate-time", type=_positive, default=None)
        if name == "rb":
            p.add_argument("--model", choices=("ideal", "depolarizing", "calibrated"), default="ideal")
            p.add_argument("--p", type=float, default=0.99, help="depolarizing parameter per Clifford")
    return parser


# -- helpers ----------------------------------------------------------------------------------


class Context:
    def __init__(self, args):
        self.args = args
        self.cfg = load_config(args.config)
        self.p = self.cfg.device
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        tomo = self.cfg.tomography
        self.durations = default_durations(n=tomo.get("n_points", 64), stop=tomo.get("stop_ns", 1000.0))

    @property
    def plot(self) -> bool:
        return not self.args.no_plot

    def path(self, name: str) -> Path:
        return self.out / name

    def meta(self, **extra) -> dict:
        a = self.args
        return {"command": a.command, "config": self.cfg.source, "seed": a.seed, "shots": a.shots, "dt_ns": a.dt,
                **extra}


def _coeff_rows(x, records):
    return [[v] + [c.as_dict()[k] if c is not None else float("nan") for k in COEFFS] for v, c in zip(x, records)]


def _gate_time(ctx, value):
    return value if value is not None else ctx.cfg.calibration.get("gate_time_ns", 160.0)


def _calibration(ctx, path, gate_time, cancellation=True):
    if path is not None:
        import json

        try:
            return calibration_from_dict(json.loads(Path(path).read_text()))
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read calibration {path}: {exc}") from None
    c = ctx.cfg.calibration
    return calibrate_zx90(ctx.p, _gate_time(ctx, gate_time), cancellation=cancellation, durations=ctx.durations,
                          shots=ctx.args.shots, seed=ctx.args.seed, dt=ctx.args.dt,
                          n_phases=c.get("n_phases", N_PHASES), n_amps=c.get("n_cancel_amps", N_CANCEL_AMPS),
                          max_amp=c.get("max_cr_amp_mhz", 150.0), workers=ctx.args.workers)


# -- commands -----------------------------------------------------------------------------------


def cmd_effective_h(ctx):
    a = ctx.args
    rows = []
    for amp in a.amp:
        drives = [cr_drive(amp, a.phase, ctx.p)]
        if a.cancel_amp:
            drives.append(DriveConfig(Channel.TARGET, default_frame(ctx.p), a.cancel_amp, a.cancel_phase))
        c = effective_cr_coefficients(ctx.p, drives)
        rows.append([amp] + [c[k] for k in COEFFS])
    write_csv(ctx.path("effective_h.csv"), ["amplitude_mhz"] + [f"{k}_mhz" for k in COEFFS], rows)
    fc, ft = dressed_frequencies(ctx.p)
    write_json(ctx.path("effective_h.json"), ctx.meta(
        dressed_control_ghz=fc, dressed_target_ghz=ft, static_zz_mhz=static_zz(ctx.p),
        rows=[dict(zip(["amplitude_mhz"] + COEFFS, r)) for r in rows]))
    for r in rows:
        print(f"amp {r[0]:8.3f} MHz  " + "  ".join(f"{k}={v:+.4f}" for k, v in zip(COEFFS, r[1:])))


def cmd_tomo(ctx):
    a = ctx.args
    cr = CRParams(a.amp, a.phase, a.cancel_amp, a.cancel_phase)
    res = measure_cr_hamiltonian(ctx.p, cr, ctx.durations, a.shots, a.seed, a.dt)
    ds = res.dataset
    ctx.path("tomo_dataset.csv").write_text(ds.to_csv())
    write_json(ctx.path("tomo_dataset.json"), ds.to_dict())
    rtrace = r_vector_trace(ds)
    try:
        t_ent = estimate_entangling_time(ds.durations, rtrace)
    except TomographyError:
        t_ent = None
    write_json(ctx.path("tomo_fit.json"), {**res.to_dict(), **ctx.meta(entangling_time_ns=t_ent)})
    if ctx.plot:
        from .plotting import plot_rabi

        plot_rabi(ds, rtrace, ctx.path("tomo_rabi.png"))
    print("  ".join(f"{k}={v:+.4f}" for k, v in res.coefficients.as_dict().items() if k != "ZI"), "MHz")


def cmd_sweep_amp(ctx):
    a = ctx.args
    amps = sorted(a.amps)
    measured, theory = [], []
    for k, amp in enumerate(amps):
        try:
            measured.append(measure_cr_hamiltonian(ctx.p, CRParams(amp, a.phase), ctx.durations, a.shots,
                                                   a.seed + k, a.dt).coefficients)
        except TomographyError as exc:
            print(f"amp {amp}: {exc}", file=sys.stderr)
            measured.append(None)
        theory.append(CRCoefficients.from_pauli(effective_cr_coefficients(ctx.p, cr_drive(amp, a.phase, ctx.p))))
    header = ["amplitude_mhz"] + [f"{k}_mhz" for k in COEFFS]
    write_csv(ctx.path("sweep_amp.csv"), header, _coeff_rows(amps, measured))
    write_csv(ctx.path("sweep_amp_theory.csv"), header, _coeff_rows(amps, theory))
    write_json(ctx.path("sweep_amp.json"), ctx.meta(amplitudes_mhz=amps, failed=sum(m is None for m in measured)))
    if ctx.plot:
        from .plotting import plot_coefficients

        meas = {k: [m.as_dict()[k] if m else np.nan for m in measured] for k in COEFFS[:6]}
        plot_coefficients(amps, meas, ctx.path("sweep_amp.png"), "CR amplitude (MHz)",
                          {k: [t.as_dict()[k] for t in theory] for k in ("ZX", "ZZ")})


def _phase_summary(records):
    phi0 = find_phi0(records)
    ph1 = find_phi1(records)
    return {"phi0_rad": phi0, "phi1_rad": ph1.phi1, "cancel_phase_rad": phi0 - ph1.phi1,
            "single_qubit_amp_mhz": ph1.amplitude, "no_cancellation_needed": ph1.flagged,
            "conditional_amp_mhz": sinusoid_fit(records, "ZX", "ZY")[0]}


def cmd_sweep_phase(ctx):
    a = ctx.args
    n = a.n_phases or ctx.cfg.calibration.get("n_phases", N_PHASES)
    recs = phase_sweep(ctx.p, a.amp, np.linspace(0, 2 * np.pi, n, endpoint=False), durations=ctx.durations,
                       shots=a.shots, seed=a.seed, dt=a.dt, workers=a.workers)
    write_csv(ctx.path("sweep_phase.csv"), ["phase_rad"] + [f"{k}_mhz" for k in COEFFS],
              _coeff_rows([r.value for r in recs], [r.coefficients for r in recs]))
    summary = _phase_summary(recs)
    write_json(ctx.path("sweep_phase.json"), ctx.meta(amplitude_mhz=a.amp, **summary,
                                                      failed=[r.value for r in recs if not r.ok]))
    if ctx.plot:
        from .plotting import plot_coefficients

        plot_coefficients([r.value for r in recs], _series(recs), ctx.path("sweep_phase.png"), "CR phase (rad)")
    print(f"phi0={summary['phi0_rad']:+.4f} rad  phi1={summary['phi1_rad']:+.4f} rad  "
          f"cancel phase={summary['cancel_phase_rad']:+.4f} rad")


def _series(recs):
    return {k: [r.coefficients.as_dict()[k] if r.ok else np.nan for r in recs] for k in COEFFS[:6]}


def cmd_sweep_cancel(ctx):
    a = ctx.args
    phase, cancel_phase, guess = a.phase, a.cancel_phase, None
    if phase is None or cancel_phase is None:
        s = _phase_summary(phase_sweep(ctx.p, a.amp, durations=ctx.durations, shots=a.shots, seed=a.seed, dt=a.dt,
                                       workers=a.workers))
        phase = s["phi0_rad"] if phase is None else phase
        cancel_phase = s["cancel_phase_rad"] if cancel_phase is None else cancel_phase
        guess = s["single_qubit_amp_mhz"]
    if a.amps is not None:
        amps = np.array(sorted(a.amps))
    elif guess:
        amps = np.linspace(0.5 * guess, 1.5 * guess, ctx.cfg.calibration.get("n_cancel_amps", N_CANCEL_AMPS))
    else:
        raise ConfigError("give --amps when --phase and --cancel-phase are both set")
    cs = cancellation_amplitude_sweep(ctx.p, a.amp, phase, cancel_phase, amps, durations=ctx.durations,
                                      shots=a.shots, seed=a.seed, dt=a.dt, workers=a.workers)
    write_csv(ctx.path("sweep_cancel.csv"), ["cancel_amp_mhz"] + [f"{k}_mhz" for k in COEFFS],
              _coeff_rows([r.value for r in cs.records], [r.coefficients for r in cs.records]))
    write_json(ctx.path("sweep_cancel.json"), ctx.meta(cr_amp_mhz=a.amp, cr_phase_rad=phase,
                                                       cancel_phase_rad=cancel_phase, **cs.to_dict()))
    if ctx.plot:
        from .plotting import plot_coefficients

        plot_coefficients([r.value for r in cs.records], _series(cs.records), ctx.path("sweep_cancel.png"),
                          "cancellation amplitude (MHz)")
    print(f"optimum={cs.optimum:.4f} MHz  a_IX={cs.a_ix:.4f}  a_IY={cs.a_iy:.4f}  phase flag={cs.phase_error}")


def cmd_calibrate(ctx):
    a = ctx.args
    cal = _calibration(ctx, None, a.gate_time, cancellation=not a.no_cancel)
    write_json(ctx.path("calibration.json"), {**cal.to_dict(), **ctx.meta()})
    header = [f"{k}_mhz" for k in COEFFS]
    phase = cal.sweeps["phase"]
    write_csv(ctx.path("calibration_phase.csv"), ["phase_rad"] + header,
              _coeff_rows([r.value for r in phase], [r.coefficients for r in phase]))
    if "cancel" in cal.sweeps:
        recs = cal.sweeps["cancel"].records
        write_csv(ctx.path("calibration_cancel.csv"), ["cancel_amp_mhz"] + header,
                  _coeff_rows([r.value for r in recs], [r.coefficients for r in recs]))
    if ctx.plot:
        from .plotting import plot_coefficients

        plot_coefficients([r.value for r in phase], _series(phase), ctx.path("calibration_phase.png"),
                          "CR phase (rad)")
        if "cancel" in cal.sweeps:
            recs = cal.sweeps["cancel"].records
            plot_coefficients([r.value for r in recs], _series(recs), ctx.path("calibration_cancel.png"),
                              "cancellation amplitude (MHz)")
    print(f"CR amp={cal.cr_amp:.3f} MHz  phi0={cal.phi0:+.4f}  cancel amp={cal.cancel_amp:.3f} MHz "
          f"phase={cal.cancel_phase:+.4f}  fidelity={cal.gate_fidelity_estimate:.5f}  leakage={cal.leakage:.2e}")


def cmd_trajectory(ctx):
    a = ctx.args
    cal = _calibration(ctx, a.calibration, a.gate_time)
    times, bloch, leak = echo_trajectory(ctx.p, cal, a.dt)
    rows = [[t, *bloch[0, k], *bloch[1, k], leak[0, k], leak[1, k]] for k, t in enumerate(times)]
    write_csv(ctx.path("trajectory.csv"),
              ["time_ns", "c0_x", "c0_y", "c0_z", "c1_x", "c1_y", "c1_z", "c0_leakage", "c1_leakage"], rows)
    write_json(ctx.path("trajectory.json"), ctx.meta(gate_time_ns=cal.gate_time, points=len(times),
                                                     max_leakage=float(leak.max()),
                                                     final_leakage=[float(leak[0, -1]), float(leak[1, -1])]))
    if ctx.plot:
        from .plotting import plot_trajectory

        plot_trajectory(times, bloch, ctx.path("trajectory.png"))


def _rb_settings(ctx):
    rb = ctx.cfg.rb
    lengths = ctx.args.lengths or rb.get("lengths", [2, 4, 8, 16, 32, 64, 100])
    return sorted(lengths), ctx.args.n_seqs or rb.get("n_seqs", 35)


def _write_decay(path, res):
    write_csv(path, ["length", "mean_survival", "stderr"], zip(res.lengths, res.mean, res.stderr))


def _calibrated_channels(ctx, cal):
    u = echoed_gate_unitary(ctx.p, cal, ctx.args.dt)
    gate = unitary_superop(u)
    # the echo leaves an X on the control; undo it virtually to get the ZX90 primitive
    zx = unitary_superop(dag(kron(X, I2))) @ gate
    return u, gate, zx


def cmd_rb(ctx):
    a = ctx.args
    lengths, n_seqs = _rb_settings(ctx)
    group = clifford_group_2q()
    extra = {}
    if a.model == "ideal":
        provider = IdealChannels(group)
    elif a.model == "depolarizing":
        provider = DepolarizingChannels(group, a.p)
        extra["depolarizing_p"] = a.p
    else:
        cal = _calibration(ctx, a.calibration, a.gate_time)
        _, _, zx = _calibrated_channels(ctx, cal)
        provider = CompiledChannels(group, zx)
    res = rb_experiment(group, provider, lengths, n_seqs, a.shots, a.seed)
    _write_decay(ctx.path("rb.csv"), res)
    write_json(ctx.path("rb.json"), {**res.to_dict(), **ctx.meta(model=a.model, n_seqs=n_seqs, **extra)})
    if ctx.plot:
        from .plotting import plot_rb

        plot_rb({a.model: res}, ctx.path("rb.png"))
    print(f"alpha={res.alpha:.6f}  error per Clifford={res.r:.3e}")


def cmd_irb(ctx):
    a = ctx.args
    lengths, n_seqs = _rb_settings(ctx)
    group = clifford_group_2q()
    cal = _calibration(ctx, a.calibration, a.gate_time)
    u, gate, zx = _calibrated_channels(ctx, cal)
    res = interleaved_rb(group, CompiledChannels(group, zx), echoed_target(), gate, lengths, n_seqs, a.shots,
                         a.seed)
    infidelity = 1 - average_gate_fidelity(echoed_target(), u)
    _write_decay(ctx.path("irb_reference.csv"), res.reference)
    _write_decay(ctx.path("irb_interleaved.csv"), res.interleaved)
    write_json(ctx.path("irb.json"), {**res.to_dict(), **ctx.meta(n_seqs=n_seqs, gate_infidelity=infidelity)})
    if ctx.plot:
        from .plotting import plot_rb

        plot_rb({"reference": res.reference, "interleaved": res.interleaved}, ctx.path("irb.png"))
    lo, hi = res.interval
    print(f"r_gate={res.r_gate:.4e}  interval=[{lo:.4e}, {hi:.4e}]  channel infidelity={infidelity:.4e}")


COMMANDS = {
    "effective-h": cmd_effective_h,
    "tomo": cmd_tomo,
    "sweep-amp": cmd_sweep_amp,
    "sweep-phase": cmd_sweep_phase,
    "sweep-cancel": cmd_sweep_cancel,
    "calibrate": cmd_calibrate,
    "trajectory": cmd_trajectory,
    "rb": cmd_rb,
    "irb": cmd_irb,
}


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        ctx = Context(args)
        COMMANDS[args.command](ctx)
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"crtune {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
