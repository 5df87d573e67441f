"""Command-line front end: ``zakline single|sweep|check``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure,
4 sweep finished with failed rows where a phase should have existed.
"""

from __future__ import annotations

import argparse
import io
import math
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import berry
from .errors import ConfigError, NumericalError, ParseError, ValidationError
from .gauge import LoopGrid
from .models import SshModel, SshParams, chiral_residual, load_model, parse_real, pt_classify
from .tolerances import Tolerances

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 2, 3, 4

CSV_COLUMNS = (
    "theta", "re_g1", "im_g1", "re_g2", "im_g2",
    "re_g1_analytic", "im_g1_analytic", "re_g2_analytic", "im_g2_analytic",
    "pt_broken", "quant_res_1", "quant_res_2", "oracle_gap_1", "oracle_gap_2",
)

TOL_NAMES = tuple(f.name for f in fields(Tolerances))


# ---------------------------------------------------------------- CSV

def fmt(x) -> str:
    """17 significant digits, which round-trips every double; ``nan`` for NaN."""
    x = float(x)
    return "nan" if math.isnan(x) else f"{x:.17g}"


def csv_row(row: berry.SweepRow) -> str:
    nan2 = (math.nan, math.nan)
    gamma = row.gamma if row.ok else (complex(math.nan, math.nan),) * 2
    cells = [fmt(row.theta)]
    for g in gamma:
        cells += [fmt(g.real), fmt(g.imag)]
    if row.analytic is None:
        cells += [""] * 4
    else:
        for g in row.analytic:
            cells += [fmt(g.real), fmt(g.imag)]
    cells.append("" if row.pt_broken is None else str(int(row.pt_broken)))
    cells += [fmt(x) for x in (row.quant_res if row.ok else nan2)]
    cells += [fmt(x) for x in (row.oracle_gap if row.ok else nan2)]
    return ",".join(cells)


def render_csv(rows) -> str:
    out = io.StringIO()
    out.write(",".join(CSV_COLUMNS) + "\n")
    for r in rows:
        out.write(csv_row(r) + "\n")
    return out.getvalue()


def write_text(path: str, text: str):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc.strerror or exc}") from None


# ---------------------------------------------------------------- config

@dataclass
class RunConfig:
    model: object
    M: int
    method: str
    tol: Tolerances
    output: str | None
    workers: int
    emit_analytic: bool
    theta_min: float = 0.0
    theta_max: float = 2 * math.pi
    theta_steps: int = 64

    @property
    def ssh_params(self) -> SshParams:
        if not isinstance(self.model, SshModel):
            raise ValidationError("this command needs an SSH model")
        return self.model.params

    def thetas(self) -> np.ndarray:
        """Half-open grid ``theta_min + j (theta_max - theta_min) / steps``."""
        j = np.arange(self.theta_steps)
        return self.theta_min + j * (self.theta_max - self.theta_min) / self.theta_steps

    def options(self) -> berry.SweepOptions:
        return berry.SweepOptions(M=self.M, method=self.method, emit_analytic=self.emit_analytic,
                                  workers=self.workers, tol=self.tol)


def _angle(text: str) -> float:
    try:
        return parse_real(text, allow_pi=True)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an angle: {text!r}") from None


def _checked_M(M: int) -> int:
    if M < 3:
        raise ValidationError(f"grid too coarse: M must be at least 3, got {M}")
    if M % 2 == 0:
        print(f"warning: M={M} is even; using M={M + 1}", file=sys.stderr)
        M += 1
    return M


def build_config(args) -> RunConfig:
    if args.model_file:
        try:
            with open(args.model_file, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read {args.model_file}: {exc.strerror or exc}") from None
        model = load_model(text)
    else:
        model = SshModel(SshParams())
    overrides = {k: getattr(args, k) for k in ("t", "delta", "gamma", "theta")
                 if getattr(args, k) is not None}
    if overrides:
        if not isinstance(model, SshModel):
            raise ValidationError(f"flags {sorted(overrides)} only apply to SSH models")
        fields_ = vars(model.params) | overrides
        model = SshModel(SshParams(**fields_))
    tol = Tolerances().updated(**{n: getattr(args, f"tol_{n}") for n in TOL_NAMES})
    workers = args.workers if args.workers is not None else berry.default_workers()
    if workers < 1:
        raise ValidationError("--workers must be at least 1")
    cfg = RunConfig(model=model, M=_checked_M(args.M), method=args.method, tol=tol,
                    output=args.output, workers=workers, emit_analytic=args.emit_analytic)
    if getattr(args, "theta_steps", None) is not None:
        if args.theta_steps < 1:
            raise ValidationError("--theta-steps must be at least 1")
        cfg.theta_min, cfg.theta_max, cfg.theta_steps = args.theta_min, args.theta_max, args.theta_steps
    return cfg


# ---------------------------------------------------------------- commands

def _c(z: complex) -> str:
    return f"{z.real:+.12f} {z.imag:+.12f}i"


def _is_hermitian(model, grid) -> bool:
    return all(np.allclose(model(k), model(k).conj().T, rtol=0, atol=1e-14) for k in grid.points)


def cmd_single(cfg: RunConfig, out=None) -> int:
    out = sys.stdout if out is None else out
    grid = LoopGrid.brillouin_zone(cfg.M)
    res = berry.analyze(cfg.model, cfg.M, cfg.tol)
    pt = res.pt
    print(f"grid M={cfg.M}; PT {pt.status} (max |Im E| = {pt.max_imag_gap:.3e})", file=out)
    for d, w in zip(res.derivative, res.wilson):
        n = d.band_index
        track = res.smoothed.track(n)
        if cfg.method in ("derivative", "both"):
            print(f"band {n} derivative  gamma = {_c(d.gamma)}   (X = {track.winding.X})", file=out)
        if cfg.method in ("wilson", "both"):
            print(f"band {n} wilson      gamma = {_c(w.gamma)}", file=out)
        ok, resid, value = berry.quantization_check(w.gamma, cfg.tol.quant)
        verdict = f"quantized to {'pi' if value else '0'}" if ok else "NOT quantized"
        print(f"band {n} {verdict} (residual {resid:.2e}); oracle gap {d.oracle_gap:.2e}", file=out)
    if _is_hermitian(cfg.model, grid):
        print("note: Hermitian model, Im gamma vanishes identically", file=out)
    if isinstance(cfg.model, SshModel):
        p = cfg.model.params
        exact = berry.analytic_bands(p)
        if exact is not None:
            print("closed form: " + ", ".join(f"band {n} {_c(g)}" for n, g in enumerate(exact, 1)),
                  file=out)
        if cfg.output:
            row = berry.SweepRow(theta=p.theta, method=cfg.method)
            row.gapless = berry.nearly_gapless(cfg.model, grid, cfg.tol)
            berry.fill_row(row, res, p, cfg.options())
            write_text(cfg.output, render_csv([row]))
    elif cfg.output:
        raise ValidationError("CSV output is defined for the SSH chain only")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out=None) -> int:
    out = sys.stdout if out is None else out
    params = cfg.ssh_params
    rows = berry.sweep(params, cfg.thetas(), cfg.options())
    text = render_csv(rows)
    if cfg.output:
        write_text(cfg.output, text)
    else:
        out.write(text)
    failed = [r for r in rows if not r.ok]
    unexpected = [r for r in failed if not r.expected_failure]
    for r in failed:
        tag = "" if r.expected_failure else "  [unexpected]"
        why = "PT broken" if r.pt_broken else ("gap closed" if r.gapless else "")
        print(f"theta={r.theta:.6f}: {r.error}" + (f" ({why})" if why else "") + tag,
              file=sys.stderr)
    print(f"{len(rows)} rows, {len(failed)} without a phase, {len(unexpected)} unexpected failures",
          file=sys.stderr)
    return EXIT_PARTIAL if unexpected else EXIT_OK


def cmd_check(cfg: RunConfig, out=None, M_list=(251, 501, 1001)) -> int:
    out = sys.stdout if out is None else out
    grid = LoopGrid.brillouin_zone(cfg.M)
    pt = pt_classify(cfg.model, grid, cfg.tol.pt, cfg.tol)
    if pt.broken:
        starts = ", ".join(f"{k:.4f}" for k in pt.critical_points)
        print(f"PT-broken: max |Im E| = {pt.max_imag_gap:.3e}; broken stretches start at k = {starts}",
              file=out)
    else:
        print(f"PT-unbroken: max |Im E| = {pt.max_imag_gap:.3e}", file=out)
    if cfg.model.dim == 2:
        a, resid = chiral_residual(cfg.model, grid)
        if resid < 1e-12:
            axes = {0: "σ₁", 1: "σ₂", 2: "σ₃"}
            i = int(np.argmax(np.abs(a)))
            name = axes[i] if abs(abs(a[i]) - 1) < 1e-12 else "a·σ, a = (" + ", ".join(f"{x:.6f}" for x in a) + ")"
            print(f"chiral symmetry present ({name}), residual {resid:.1e} < 1e-12", file=out)
        else:
            print(f"no chiral symmetry: best residual {resid:.3e}", file=out)
    if pt.broken:
        print("convergence study skipped: no single-band phase in the broken phase", file=out)
        return EXIT_OK
    methods = ["derivative", "wilson"] if cfg.method == "both" else [cfg.method]
    print(f"{'band':>4} {'method':>10} {'M':>6} {'Re gamma':>20} {'Im gamma':>20} {'|change|':>10}",
          file=out)
    for n in range(1, cfg.model.dim + 1):
        for method in methods:
            for M, g, diff in berry.convergence_study(cfg.model, n, M_list, method, cfg.tol):
                print(f"{n:>4} {method:>10} {M:>6} {g.real:>20.12f} {g.imag:>20.12f} {diff:>10.2e}",
                      file=out)
    return EXIT_OK


COMMANDS = {"single": cmd_single, "sweep": cmd_sweep, "check": cmd_check}


# ---------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser):
    p.add_argument("--model", dest="model_file", metavar="FILE",
                   help="model config file (key=value lines); flags override its SSH fields")
    p.add_argument("--t", type=float, help="mean hopping (default 1)")
    p.add_argument("--delta", type=float, help="dimerization strength (default 0.5)")
    p.add_argument("--gamma", type=float, help="gain/loss parameter (default 1)")
    p.add_argument("--theta", type=_angle, help="control angle; accepts a pi suffix, e.g. 0.3pi")
    p.add_argument("--M", type=int, default=1001, help="grid points incl. the duplicated endpoint")
    p.add_argument("--method", choices=("derivative", "wilson", "both"), default="both")
    p.add_argument("--output", metavar="FILE", help="CSV output path")
    p.add_argument("--workers", type=int, help="worker processes (default $ZAKLINE_WORKERS or CPU count)")
    p.add_argument("--emit-analytic", action="store_true",
                   help="add closed-form columns where they are defined")
    for name in TOL_NAMES:
        p.add_argument(f"--tol-{name}", type=float, metavar="X", help=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zakline", description="Complex Zak phases of PT-symmetric Bloch Hamiltonians.")
    sub = parser.add_subparsers(dest="command", required=True)
    single = sub.add_parser("single", help="phases at one parameter point")
    _common(single)
    sw = sub.add_parser("sweep", help="theta sweep of the SSH chain, written as CSV")
    _common(sw)
    sw.add_argument("--theta-min", type=_angle, default=0.0)
    sw.add_argument("--theta-max", type=_angle, default=2 * math.pi)
    sw.add_argument("--theta-steps", type=int, default=64,
                    help="number of points on the half-open range [min, max)")
    check = sub.add_parser("check", help="PT status, chiral symmetry and convergence table")
    _common(check)
    check.add_argument("--M-list", default="251,501,1001",
                       help="comma-separated increasing grid sizes for the convergence table")
    parser.epilog = "tolerance overrides: " + " ".join(f"--tol-{n}" for n in TOL_NAMES)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        if args.command == "check":
            try:
                M_list = [int(x) for x in args.M_list.split(",") if x.strip()]
            except ValueError:
                raise ParseError(f"bad --M-list {args.M_list!r}", field="M-list") from None
            if not M_list or min(M_list) < 3 or any(b <= a for a, b in zip(M_list, M_list[1:])):
                raise ValidationError("--M-list must be increasing grid sizes >= 3")
            return cmd_check(cfg, M_list=M_list)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"zakline: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"zakline: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
