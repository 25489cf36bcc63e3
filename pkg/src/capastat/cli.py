"""Command-line front end: ``capastat {eigs,pdf,capacity,compare,simulate}``.

Every output carries a run manifest, as ``#`` comment lines in CSV or a
``manifest`` object in JSON.  Numeric payloads depend only on the flags, never
on the timestamp or on ``CAPA_THREADS``.

Exit codes: 0 success, 2 invalid input, 3 numerical non-convergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from capastat import __version__
from capastat import montecarlo as mc
from capastat.capacity import (
    QuadratureError,
    RegimeError,
    SnrConfig,
    avg_capacity,
    capacity_quadrature_oracle,
    high_snr_asymptote,
)
from capastat.gaindist import (
    DEFAULT_Q_CAP,
    SeriesNotConvergedError,
    cdf,
    gain_series,
    make_gain_spectrum,
    moments,
    pdf,
)
from capastat.spectrum import Aperture, SpectrumError, eigendecompose, landau_count

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NONCONVERGED = 3
EXIT_IO = 4

DEFAULT_NOISE = 5.6e-3
DEFAULT_FC = 2.4e9
DEFAULT_POWERS = "0.0056,0.056,0.56,5.6,56"
LANDAU_THRESHOLDS = (0.1, 0.25, 0.5, 0.9)
CAPACITY_MODES = ("closed", "mc", "mimo", "asymptote")

MIMO_ASSUMPTIONS = {
    "layout": "uniform linear array, half-wavelength spacing, centred on the aperture",
    "elements": "floor(2L/lambda) + 1",
    "element_length_wl": mc.ELEMENT_LENGTH_WL,
    "combining": "MRT over the discrete channel vector; gain = element_length * sum |g(z_n)|^2",
    "field": "same spectral field realisation as the CAPA draw with the same sample index",
}

COMPARE_SCHEMA = {
    "type": "object",
    "required": ["manifest", "aperture_wl", "dof", "mimo_elements", "assumptions", "rows"],
    "properties": {
        "manifest": {
            "type": "object",
            "required": ["command", "parameters", "artifact_version", "timestamp"],
        },
        "aperture_wl": {"type": "number", "exclusiveMinimum": 0},
        "dof": {"type": "number"},
        "mimo_elements": {"type": "integer", "minimum": 1},
        "assumptions": {"type": "object"},
        "rows": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["P", "gamma_bar", "capa_bits", "capa_stderr", "mimo_bits",
                             "mimo_stderr", "gap_bits", "combined_stderr", "gap_sign"],
                "properties": {
                    "P": {"type": "number", "exclusiveMinimum": 0},
                    "gamma_bar": {"type": "number", "exclusiveMinimum": 0},
                    "capa_bits": {"type": "number", "minimum": 0},
                    "capa_stderr": {"type": "number", "minimum": 0},
                    "mimo_bits": {"type": "number", "minimum": 0},
                    "mimo_stderr": {"type": "number", "minimum": 0},
                    "gap_bits": {"type": "number"},
                    "combined_stderr": {"type": "number", "minimum": 0},
                    "gap_sign": {"type": "integer", "enum": [-1, 0, 1]},
                },
            },
        },
    },
}


@dataclass
class RunManifest:
    command: str
    parameters: dict
    artifact_version: str = __version__
    timestamp: str = field(
        default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))


# ---------------------------------------------------------------------------
# output


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def render_csv(manifest: RunManifest, meta: dict, columns: list[str], rows) -> str:
    buf = io.StringIO()
    params = {k: v for k, v in asdict(manifest).items() if k != "timestamp"}
    buf.write(f"# manifest: {json.dumps(_jsonable(params), sort_keys=True)}\n")
    buf.write(f"# timestamp: {manifest.timestamp}\n")
    for k, v in meta.items():
        buf.write(f"# {k}: {json.dumps(_jsonable(v), sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_num(v) for v in row])
    return buf.getvalue()


def render_json(manifest: RunManifest, payload: dict) -> str:
    doc = {"manifest": asdict(manifest), **payload}
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _table_json(meta: dict, columns: list[str], rows) -> dict:
    return {**meta, "columns": columns, "rows": [dict(zip(columns, r)) for r in rows]}


def emit(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {out}: {exc.strerror or exc}") from exc


def _write_table(args, manifest, meta, columns, rows) -> None:
    if args.format == "json":
        emit(render_json(manifest, _table_json(meta, columns, rows)), args.out)
    else:
        emit(render_csv(manifest, meta, columns, rows), args.out)


# ---------------------------------------------------------------------------
# argument handling


def _powers(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad power list {text!r}") from None
    if not vals or any(not (v > 0 and math.isfinite(v)) for v in vals):
        raise argparse.ArgumentTypeError("powers must be a nonempty list of positive numbers")
    return vals


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return v


def _modes(text: str) -> tuple[str, ...]:
    if text == "all":
        return CAPACITY_MODES
    modes = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in modes if m not in CAPACITY_MODES]
    if bad or not modes:
        raise argparse.ArgumentTypeError(f"modes must come from {CAPACITY_MODES} or 'all'")
    return modes


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--L", dest="L", type=float, default=10.0,
                        help="aperture length in wavelengths (default 10)")
    shared.add_argument("--fc", type=float, default=DEFAULT_FC, help="carrier frequency in Hz")
    shared.add_argument("--noise", type=float, default=DEFAULT_NOISE,
                        help="noise power in V^2/m (default 5.6e-3)")
    shared.add_argument("--seed", type=_seed, default=42)
    shared.add_argument("--samples", type=_positive_int, default=100_000,
                        help="Monte Carlo sample count")
    shared.add_argument("--order", type=int, default=None,
                        help="quadrature order (default max(64, 4*DOF))")
    shared.add_argument("--out", default="-", help="output path ('-' for stdout)")
    shared.add_argument("--format", choices=("csv", "json"), default=None)
    shared.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads (default: CAPA_THREADS or CPU count)")
    shared.add_argument("--user-distance", type=float, default=500.0,
                        help="user distance in wavelengths; recorded only, it does not "
                             "affect isotropic-scattering statistics")
    shared.add_argument("--tol", type=float, default=1e-10, help="psi-series tail tolerance")
    shared.add_argument("--q-cap", type=_positive_int, default=DEFAULT_Q_CAP,
                        help="maximum number of psi-series terms")

    p = argparse.ArgumentParser(prog="capastat", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("eigs", parents=[shared], help="ordered kernel eigenvalues")

    sp = sub.add_parser("pdf", parents=[shared], help="density and CDF of the channel gain")
    sp.add_argument("--xmax", type=float, default=None,
                    help="grid upper end (default mean + 12 std)")
    sp.add_argument("--points", type=_positive_int, default=401)
    sp.add_argument("--mc", action="store_true", help="add a Monte Carlo ECDF column")

    sp = sub.add_parser("capacity", parents=[shared], help="ergodic capacity versus power")
    sp.add_argument("--powers", type=_powers, default=_powers(DEFAULT_POWERS),
                    help="comma-separated transmit powers in W")
    sp.add_argument("--mode", type=_modes, default=CAPACITY_MODES,
                    help="comma list of closed,mc,mimo,asymptote or 'all'")

    sp = sub.add_parser("compare", parents=[shared], help="CAPA versus discrete MIMO")
    sp.add_argument("--powers", type=_powers, default=_powers(DEFAULT_POWERS))

    sp = sub.add_parser("simulate", parents=[shared], help="raw Monte Carlo gain draws")
    sp.add_argument("--method", choices=mc.METHODS, default="spectral")
    return p


def _validate(args) -> None:
    if not (args.L > 0 and math.isfinite(args.L)):
        raise ValueError("--L must be a positive length in wavelengths")
    if not args.noise > 0:
        raise ValueError("--noise must be positive")
    if not args.fc > 0:
        raise ValueError("--fc must be positive")
    if args.order is not None and args.order < 2:
        raise ValueError("--order must be >= 2")
    if not args.tol > 0:
        raise ValueError("--tol must be positive")


def _manifest(args) -> RunManifest:
    params = {k: (list(v) if isinstance(v, tuple) else v)
              for k, v in sorted(vars(args).items()) if k not in ("command", "out", "threads")}
    return RunManifest(command=args.command, parameters=params)


def _gain_model(args):
    ap = Aperture(args.L, args.fc)
    decomp = eigendecompose(ap, args.order)
    spec = make_gain_spectrum(decomp)
    psi = gain_series(spec, args.tol, args.q_cap)
    if not psi.converged:
        raise SeriesNotConvergedError(
            f"psi series did not converge (bound {psi.tail_bound:.3g} > tol {args.tol:g})")
    return ap, decomp, spec, psi


def _sim_config(args, ap):
    return mc.SimulationConfig.for_aperture(ap, seed=args.seed, n_samples=args.samples)


# ---------------------------------------------------------------------------
# commands


def cmd_eigs(args) -> None:
    ap = Aperture(args.L, args.fc)
    decomp = eigendecompose(ap, args.order, keep_vectors=False)
    landau = {}
    if decomp.dof > 1:
        landau = {str(t): {"predicted": landau_count(t, decomp.dof),
                           "computed": decomp.count_above(t)} for t in LANDAU_THRESHOLDS}
    meta = {"dof": decomp.dof, "order": decomp.grid.order, "landau_count": landau}
    rows = [(i + 1, e, s) for i, (e, s) in enumerate(zip(decomp.eps, decomp.sigma))]
    _write_table(args, _manifest(args), meta, ["index", "epsilon", "sigma"], rows)


def cmd_pdf(args) -> None:
    ap, _, spec, psi = _gain_model(args)
    mean, var = moments(spec)
    xmax = mean + 12.0 * math.sqrt(var) if args.xmax is None else args.xmax
    if not xmax > 0:
        raise ValueError("--xmax must be positive")
    x = np.linspace(0.0, xmax, args.points)
    cols = [x, pdf(spec, psi, x), cdf(spec, psi, x)]
    names = ["x", "pdf", "cdf"]
    meta = {"dof_terms": spec.n_terms, "sigma": spec.sigma.tolist(), "q_max": psi.q_max,
            "tail_bound": psi.tail_bound, "mean": mean, "variance": var}
    if args.mc:
        batch = mc.spectral_gains(ap, _sim_config(args, ap), args.threads)
        cols.append(mc.ecdf(batch.gains, x))
        names.append("ecdf")
    _write_table(args, _manifest(args), meta, names, list(zip(*cols)))


def _closed_form_or_oracle(spec, psi, snr):
    try:
        return avg_capacity(spec, psi, snr).ergodic_bits, "ok"
    except RegimeError:
        try:
            return capacity_quadrature_oracle(spec, psi, snr), "oracle_fallback"
        except QuadratureError:
            return None, "oracle_failed"


def cmd_capacity(args) -> None:
    ap, _, spec, psi = _gain_model(args)
    modes = set(args.mode)
    snrs = [SnrConfig.from_power(p, args.noise) for p in args.powers]
    closed = [(None, "")] * len(snrs)
    if "closed" in modes:
        with ThreadPoolExecutor(max_workers=mc.worker_count(args.threads)) as pool:
            closed = list(pool.map(lambda s: _closed_form_or_oracle(spec, psi, s), snrs))
    cfg = _sim_config(args, ap)
    capa = mc.spectral_gains(ap, cfg, args.threads) if "mc" in modes else None
    mimo = mc.mimo_gains(ap, cfg, args.threads) if "mimo" in modes else None
    _, offset = high_snr_asymptote(spec, psi)

    rows = []
    for p, snr, (cf, status) in zip(args.powers, snrs, closed):
        c_mc = mc.ergodic_capacity_mc(capa, snr) if capa is not None else (None, None)
        c_mi = mc.ergodic_capacity_mc(mimo, snr) if mimo is not None else (None, None)
        asym = math.log2(snr.gamma_bar) - offset if "asymptote" in modes else None
        rows.append((p, snr.gamma_bar, cf, c_mc[0], c_mc[1], c_mi[0], c_mi[1], asym, status))
    cols = ["P", "gamma_bar", "capacity_closed_form", "capacity_mc", "capacity_mc_stderr",
            "capacity_mimo", "capacity_mimo_stderr", "capacity_asymptote", "status"]
    meta = {"dof_terms": spec.n_terms, "q_max": psi.q_max, "slope": 1.0, "offset_3db": offset,
            "mimo_assumptions": MIMO_ASSUMPTIONS}
    _write_table(args, _manifest(args), meta, cols, rows)


def compare_payload(args) -> dict:
    ap = Aperture(args.L, args.fc)
    cfg = _sim_config(args, ap)
    capa = mc.spectral_gains(ap, cfg, args.threads)
    mimo = mc.mimo_gains(ap, cfg, args.threads)
    rows = []
    for p in args.powers:
        snr = SnrConfig.from_power(p, args.noise)
        c, cse = mc.ergodic_capacity_mc(capa, snr)
        m, mse = mc.ergodic_capacity_mc(mimo, snr)
        gap = c - m
        rows.append({"P": p, "gamma_bar": snr.gamma_bar, "capa_bits": c, "capa_stderr": cse,
                     "mimo_bits": m, "mimo_stderr": mse, "gap_bits": gap,
                     "combined_stderr": math.hypot(cse, mse),
                     "gap_sign": int(np.sign(gap))})
    return {"aperture_wl": ap.length_wl, "dof": 2.0 * ap.length_wl,
            "mimo_elements": int(mc.mimo_positions(ap).size),
            "assumptions": MIMO_ASSUMPTIONS, "rows": rows}


def cmd_compare(args) -> None:
    payload = compare_payload(args)
    manifest = _manifest(args)
    if args.format == "csv":
        cols = list(payload["rows"][0])
        meta = {k: v for k, v in payload.items() if k != "rows"}
        emit(render_csv(manifest, meta, cols, [list(r.values()) for r in payload["rows"]]),
             args.out)
    else:
        emit(render_json(manifest, payload), args.out)


def cmd_simulate(args) -> None:
    ap = Aperture(args.L, args.fc)
    cfg = _sim_config(args, ap)
    decomp = eigendecompose(ap, args.order) if args.method == "kl" else None
    batch = mc.sample_gains(args.method, ap, cfg, decomp, args.threads)
    g = batch.gains
    meta = {"method": args.method, "kappa_bins": cfg.kappa_bins, "z_points": cfg.z_points,
            "sample_mean": float(g.mean()),
            "sample_variance": float(g.var(ddof=1)) if g.size > 1 else 0.0,
            "resolution_warnings": cfg.check(ap)}
    if args.method == "mimo":
        meta["mimo_assumptions"] = MIMO_ASSUMPTIONS
    _write_table(args, _manifest(args), meta, ["sample_index", "gain"],
                 list(zip(range(g.size), g)))


COMMANDS = {
    "eigs": cmd_eigs,
    "pdf": cmd_pdf,
    "capacity": cmd_capacity,
    "compare": cmd_compare,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = "json" if args.command == "compare" else "csv"
    try:
        _validate(args)
        COMMANDS[args.command](args)
    except SeriesNotConvergedError as exc:
        print(f"capastat: not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (SpectrumError, ArithmeticError) as exc:
        print(f"capastat: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except ValueError as exc:
        print(f"capastat: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"capastat: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
