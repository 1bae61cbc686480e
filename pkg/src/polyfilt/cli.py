"""Command-line front end.

Exit codes: 0 success, 1 malformed input or configuration, 2 numerical
failure, 3 a verification suite reported failures.  Errors go to standard
error followed by a machine-readable ``error_code=<code>`` line.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io
from .errors import NumericalError
from .heston import (
    NOISY_STATE_NAMES,
    STATE_NAMES,
    HestonParams,
    NoiseParams,
    heston_equivalent,
    heston_ssm,
    noisy_price_model,
    simulate_heston,
)
from .kalman import ObservationPartition, kalman_filter, predict, smooth
from .kalmanbucy import ObservationPath, kb_filter, kb_predict, kb_smooth
from .polyproc import GaussianOU, PolyProcess, gaussian_equivalent_continuous, moment_ode
from .polyssm import LinearGaussianSSM, PolySSM, gaussian_equivalent, second_moments, state_moments
from .verify import run_suite

log = logging.getLogger("polyfilt")

EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_VERIFY = 3

BUILTINS = ("heston", "heston-noise")


class ConfigError(ValueError):
    pass


def _params(args: argparse.Namespace) -> HestonParams:
    return HestonParams(kappa=args.kappa, m=args.m, sigma=args.sigma, rho=args.rho, mu=args.mu,
                        mu_v=args.mu_v, sigma_v=args.sigma_v)


def _dt(args: argparse.Namespace, default: float = 1.0) -> float:
    return default if args.dt is None else args.dt


def _load(args: argparse.Namespace):
    """Model named on the command line plus coordinate names."""
    if args.model is None:
        raise ConfigError("--model is required")
    if args.model == "heston":
        return heston_ssm(_params(args), _dt(args)), list(STATE_NAMES)
    if args.model == "heston-noise":
        return noisy_price_model(_params(args), NoiseParams(args.tau), _dt(args)), list(NOISY_STATE_NAMES)
    path = Path(args.model)
    if not path.is_file():
        raise ConfigError(f"model file {path} does not exist (built-ins: {', '.join(BUILTINS)})")
    model = io.load_model(path)
    d = model.d
    return model, [f"x{i}" for i in range(d)]


def _steps(args: argparse.Namespace, default: int | None = None) -> int:
    if args.t is None:
        if default is None:
            raise ConfigError("--t is required")
        return default
    if args.t < 0:
        raise ConfigError("--t must be nonnegative")
    return args.t


def _out(args: argparse.Namespace, name: str) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _partition(args: argparse.Namespace, d: int) -> ObservationPartition:
    if not args.observed:
        raise ConfigError("--observed is required")
    try:
        idx = tuple(int(x) for x in args.observed.split(","))
    except ValueError:
        raise ConfigError(f"--observed must be comma-separated integers, got {args.observed!r}") from None
    return ObservationPartition(d, idx)


def _linear(model, T: int):
    if isinstance(model, PolySSM):
        return gaussian_equivalent(model, max(T, 1))
    if isinstance(model, LinearGaussianSSM):
        return model
    raise ConfigError(f"{type(model).__name__} is not a discrete-time model")


def _continuous(model) -> GaussianOU | None:
    if isinstance(model, PolyProcess):
        return gaussian_equivalent_continuous(model)
    if isinstance(model, GaussianOU):
        return model
    return None


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.model not in BUILTINS:
        raise ConfigError("simulate supports the built-in models heston and heston-noise")
    n_steps = _steps(args, 250)
    noise = NoiseParams(args.tau if args.model == "heston-noise" else 0.0)
    paths = simulate_heston(_params(args), _dt(args), n_steps, args.substeps, args.seed, noise=noise)
    target = _out(args, "simulate.csv")
    io.write_csv(target, list(paths.columns), paths.table(0))
    log.info("wrote %s", target)
    return 0


def cmd_moments(args: argparse.Namespace) -> int:
    model, names = _load(args)
    d = len(names)
    iu = np.triu_indices(d)
    header = ["t"] + [f"mu_{n}" for n in names] + [f"P_{names[i]}_{names[j]}" for i, j in zip(*iu)]
    if isinstance(model, PolySSM):
        mus, Ps = state_moments(model, _steps(args, 10))
        times = np.arange(mus.shape[0])
    elif isinstance(model, LinearGaussianSSM):
        mus, Ps = second_moments(model, _steps(args, 10))
        times = np.arange(mus.shape[0])
    elif isinstance(model, PolyProcess):
        dt = _dt(args)
        times = dt * np.arange(_steps(args, 10) + 1)
        m = moment_ode(model, times)
        mus = m[:, model.basis.units()]
        Ps = m[:, np.array(model.basis.pairs())]
    else:
        times = _dt(args) * np.arange(_steps(args, 10) + 1)
        mus, S = model.moments(times)
        Ps = S + np.einsum("ti,tj->tij", mus, mus)
    rows = [[t] + list(mu) + list(P[iu]) for t, mu, P in zip(times, mus, Ps)]
    io.write_csv(_out(args, "moments.csv"), header, rows)
    return 0


def _observations(args: argparse.Namespace, part: ObservationPartition):
    if not args.observations:
        raise ConfigError("--observations is required")
    names, t, values = io.read_observations(args.observations)
    if values.shape[1] != len(part.observed):
        raise ConfigError(f"observation file has {values.shape[1]} columns, --observed lists {len(part.observed)}")
    return t, values


def _write_states(args, name: str, names, rows) -> None:
    io.write_csv(_out(args, name), io.state_header(len(names), names), rows)


def cmd_filter(args: argparse.Namespace) -> int:
    model, names = _load(args)
    part = _partition(args, len(names))
    t, y = _observations(args, part)
    ou = _continuous(model)
    if ou is not None:
        out = kb_filter(ou, part, ObservationPath(t, y))
        rows = [io.state_row(tk, tk, out.x[k], out.Sigma[k]) for k, tk in enumerate(t)]
    else:
        lin = _linear(model, len(t) - 1)
        fr = kalman_filter(lin, part, y)
        rows = [io.state_row(k, k, fr.x_filt[k], fr.P_filt[k]) for k in range(len(t))]
    _write_states(args, "filter.csv", names, rows)
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    model, names = _load(args)
    part = _partition(args, len(names))
    t, y = _observations(args, part)
    s = len(t) - 1 if args.s is None else args.s
    if not 0 <= s < len(t):
        raise ConfigError(f"--s must lie in 0..{len(t) - 1}")
    horizon = _steps(args, s + 1)
    if horizon <= s:
        raise ConfigError("--t must exceed the data horizon --s")
    ou = _continuous(model)
    if ou is not None:
        out = kb_filter(ou, part, ObservationPath(t[:s + 1], y[:s + 1]))
        dt = _dt(args, float(t[1] - t[0]) if len(t) > 1 else 1.0)
        times = t[s] + dt * np.arange(1, horizon - s + 1)
        xs, Ss = kb_predict(ou, out.x[s], out.Sigma[s], float(t[s]), times)
        rows = [io.state_row(tk, t[s], x, S) for tk, x, S in zip(times, xs, Ss)]
    else:
        lin = _linear(model, horizon)
        fr = kalman_filter(lin, part, y[:s + 1])
        state, rows = fr.filtered(s), []
        for r in range(s + 1, horizon + 1):
            state = predict(lin, state, r)
            rows.append(io.state_row(r, s, state.x, state.P))
    _write_states(args, "predict.csv", names, rows)
    return 0


def cmd_smooth(args: argparse.Namespace) -> int:
    model, names = _load(args)
    part = _partition(args, len(names))
    t, y = _observations(args, part)
    s = len(t) - 1 if args.s is None else args.s
    if not 0 <= s < len(t):
        raise ConfigError(f"--s must lie in 0..{len(t) - 1}")
    ou = _continuous(model)
    if ou is not None:
        out = kb_filter(ou, part, ObservationPath(t[:s + 1], y[:s + 1]), with_gamma=True)
        xs, Ss = kb_smooth(ou, out)
        rows = [io.state_row(t[k], t[s], xs[k], Ss[k]) for k in range(s + 1)]
    else:
        lin = _linear(model, s)
        fr = kalman_filter(lin, part, y[:s + 1])
        sm = smooth(lin, fr, s)
        rows = [io.state_row(k, s, sm.x[k], sm.P[k]) for k in range(s + 1)]
    _write_states(args, "smooth.csv", names, rows)
    return 0


def cmd_gaussian_equivalent(args: argparse.Namespace) -> int:
    model, _ = _load(args)
    target = _out(args, "gaussian_equivalent.json")
    if isinstance(model, PolySSM):
        io.save_model(gaussian_equivalent(model, _steps(args, 1)), target)
    elif isinstance(model, PolyProcess):
        dt = _dt(args)
        grid = dt * np.arange(_steps(args, 10) + 1)
        io.save_model(gaussian_equivalent_continuous(model), target, grid)
    else:
        raise ConfigError("gaussian-equivalent needs a polynomial model")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    rows = run_suite(args.suite)
    width = max(len(name) for name, _, _ in rows)
    for name, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    failed = sum(not ok for _, ok, _ in rows)
    print(f"{len(rows) - failed}/{len(rows)} passed")
    return 0 if failed == 0 else EXIT_VERIFY


def figure1_table(p: HestonParams, n_steps: int, dt: float, substeps: int, seed: int) -> np.ndarray:
    """Rows ``(t, v, vhat1, vhat2, sigma_u1, sigma_u2)`` for ``t = 1..n_steps``."""
    paths = simulate_heston(p, dt, n_steps, substeps, seed)
    states = paths.states()[0]
    lin = heston_equivalent(p, n_steps, dt)
    f1 = kalman_filter(lin, ObservationPartition(3, (1, 2)), states[:, [1, 2]])
    f2 = kalman_filter(lin, ObservationPartition(3, (1,)), states[:, [1]])
    cols = [paths.t, states[:, 0], f1.x_filt[:, 0], f2.x_filt[:, 0], f1.P_filt[:, 0, 0], f2.P_filt[:, 0, 0]]
    return np.column_stack(cols)[1:]


def cmd_figure1(args: argparse.Namespace) -> int:
    p = _params(args)
    table = figure1_table(p, _steps(args, 2000), _dt(args, 1.0 / 252.0), args.substeps, args.seed)
    header = ["t", "v", "vhat1", "vhat2", "sigma_u1", "sigma_u2"]
    target = _out(args, "figure1.csv")
    io.write_csv(target, header, table)
    log.info("wrote %s", target)
    if args.plot:
        from .plotting import plot_filters

        png = plot_filters(table[:, 0], table[:, 1], table[:, 2], table[:, 3], _out(args, "figure1.png"),
                           sd1=np.sqrt(table[:, 4]))
        log.info("wrote %s", png)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "moments": cmd_moments,
    "filter": cmd_filter,
    "predict": cmd_predict,
    "smooth": cmd_smooth,
    "gaussian-equivalent": cmd_gaussian_equivalent,
    "verify": cmd_verify,
    "figure1": cmd_figure1,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="model JSON file or built-in name (heston, heston-noise)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--t", type=int, help="number of steps / target time")
    common.add_argument("--s", type=int, help="data horizon for predict and smooth")
    common.add_argument("--dt", type=float, help="grid spacing")
    common.add_argument("--observed", help="comma-separated observed coordinate indices")
    common.add_argument("--observations", help="observation CSV with header t,<names>")
    common.add_argument("--kappa", type=float, default=1.0)
    common.add_argument("--m", type=float, default=0.16)
    common.add_argument("--sigma", type=float, default=0.3)
    common.add_argument("--rho", type=float, default=-0.5)
    common.add_argument("--mu", type=float, default=0.0)
    common.add_argument("--mu-v", dest="mu_v", type=float, help="mean of v(0) (default: m)")
    common.add_argument("--sigma-v", dest="sigma_v", type=float,
                        help="variance of v(0) (default: stationary sigma^2 m / (2 kappa))")
    common.add_argument("--tau", type=float, default=0.0, help="price noise standard deviation")
    common.add_argument("--substeps", type=int, default=20)
    parser = argparse.ArgumentParser(prog="polyfilt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "verify":
            sp.add_argument("--suite", default="all")
        if name == "figure1":
            sp.add_argument("--plot", action="store_true", help="also render figure1.png")
    return parser


def _fail(code: str, exit_code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    print(f"error_code={code}", file=sys.stderr)
    return exit_code


def main(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get("POLYFILT_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        return _fail(exc.code, EXIT_NUMERICAL, str(exc))
    except (ValueError, KeyError, TypeError, OSError, json.JSONDecodeError, IndexError) as exc:
        return _fail("config", EXIT_CONFIG, str(exc))


if __name__ == "__main__":
    sys.exit(main())
