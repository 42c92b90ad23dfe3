"""Command-line front end: data generation, likelihood runs, sweeps, fits.

Subcommands: generate, likelihood, kl, estimate, predict, bench.  Machine
output is a single JSON object on stdout (snake_case keys) or a CSV file;
numbers in CSV carry 17 significant digits so files round-trip bit-stably.
Every command is deterministic given its flags; --threads only changes
wall time.
"""

import os
import sys

# BLAS pools are capped before numpy loads so dense-path results do not
# depend on the host's thread configuration.  Explicit env settings win.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import json
import time
from statistics import median

import numpy as np

from . import exact, fit, geo, kernels, parallel, vecchia
from .errors import VecchiaGPError


class CliError(Exception):
    pass


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _metric_from_args(args) -> geo.Metric:
    if args.metric == "gcd":
        return geo.GreatCircle(radius=args.radius)
    return geo.Euclidean()


def _kernel_from_args(args) -> kernels.KernelSpec:
    family = "power_exponential" if args.kernel == "powexp" else args.kernel
    return kernels.KernelSpec(family, kernels.KernelParams(args.sigma2, args.beta, args.nu))


def _columns(metric: geo.Metric) -> tuple[str, str, str]:
    if isinstance(metric, geo.GreatCircle):
        return ("lon", "lat", "value")
    return ("x", "y", "value")


def read_dataset(path: str, metric: geo.Metric) -> geo.Dataset:
    """Parse a `x,y,value` (or `lon,lat,value`) CSV into a Dataset."""
    cols = _columns(metric)
    expected = ",".join(cols)
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise CliError(f"{path} line 1: empty file, expected header '{expected}'")
    header = [c.strip() for c in lines[0].split(",")]
    if header != list(cols):
        raise CliError(f"{path} line 1: expected header '{expected}', got '{lines[0]}'")
    xs, ys, vals = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise CliError(f"{path} line {lineno}: expected 3 comma-separated fields, got {len(parts)}")
        try:
            xs.append(float(parts[0]))
            ys.append(float(parts[1]))
            vals.append(float(parts[2]))
        except ValueError as exc:
            raise CliError(f"{path} line {lineno}: {exc}") from exc
    if not xs:
        raise CliError(f"{path} line 2: no data rows")
    try:
        return geo.Dataset(np.column_stack([xs, ys]), np.array(vals), metric)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from exc


def write_dataset_csv(path: str, locations, values, metric: geo.Metric) -> None:
    cols = _columns(metric)
    rows = [",".join(cols)]
    for (x, y), v in zip(np.asarray(locations), np.asarray(values)):
        rows.append(f"{_fmt(x)},{_fmt(y)},{_fmt(v)}")
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(rows) + "\n")


def _emit_json(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2) + "\n")


def _add_kernel_args(p: argparse.ArgumentParser, sigma2=1.0, beta=0.1, nu=0.5) -> None:
    p.add_argument("--kernel", choices=["matern", "powexp"], default="matern",
                   help="covariance family (default: matern)")
    p.add_argument("--sigma2", type=float, default=sigma2, help=f"variance (default: {sigma2})")
    p.add_argument("--beta", type=float, default=beta, help=f"range (default: {beta})")
    p.add_argument("--nu", type=float, default=nu,
                   help=f"smoothness / power-exponential exponent (default: {nu})")


def _add_metric_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--metric", choices=["euclidean", "gcd"], default="euclidean",
                   help="distance metric; gcd reads lon,lat,value CSVs (default: euclidean)")
    p.add_argument("--radius", type=float, default=geo.EARTH_RADIUS_KM,
                   help=f"sphere radius for gcd, in length units (default: {geo.EARTH_RADIUS_KM})")


def _add_common_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=1,
                   help="worker cap for batched stages; never changes results (default: 1)")


def cmd_generate(args) -> None:
    spec = _kernel_from_args(args)
    root = np.random.SeedSequence(args.seed)
    loc_seed, field_seed = root.spawn(2)
    locations = np.random.default_rng(loc_seed).random((args.n, 2))
    values = exact.simulate_grf(locations, spec, field_seed, max_n=args.max_dense_n)
    write_dataset_csv(args.out, locations, values, geo.Euclidean())
    _emit_json({"n": args.n, "seed": args.seed, "out": args.out})


def cmd_likelihood(args) -> None:
    metric = _metric_from_args(args)
    spec = _kernel_from_args(args)
    data = read_dataset(args.input, metric)
    if not (1 <= args.m < data.n):
        raise CliError(f"need 1 <= m < n, got m={args.m}, n={data.n}")
    plan = vecchia.make_plan(data, args.m, args.ordering, args.seed)
    result = vecchia.vecchia_loglik(data, plan, spec)
    payload = {
        "n": data.n,
        "m": args.m,
        "ordering": args.ordering,
        "vecchia_ll": result.total,
    }
    if args.with_exact:
        exact_ll = exact.exact_loglik(data, spec, max_n=args.max_dense_n)
        payload["exact_ll"] = exact_ll
        payload["abs_diff"] = abs(result.total - exact_ll)
    _emit_json(payload)


def cmd_kl(args) -> None:
    metric = _metric_from_args(args)
    spec = _kernel_from_args(args)
    data = read_dataset(args.input, metric)
    try:
        m_list = [int(tok) for tok in args.m_list.split(",") if tok.strip()]
    except ValueError as exc:
        raise CliError(f"bad --m-list: {exc}") from exc
    orderings = [tok.strip() for tok in args.orderings.split(",") if tok.strip()]
    rows = ["ordering,m,kl,exact_ll0,vecchia_ll0"]
    for ordering in orderings:
        for m in m_list:
            if not (1 <= m < data.n):
                raise CliError(f"need 1 <= m < n, got m={m}, n={data.n}")
            plan = vecchia.make_plan(data, m, ordering, args.seed)
            report = exact.kl_vecchia(data.locations, plan, spec, max_n=args.max_dense_n)
            rows.append(
                f"{ordering},{m},{_fmt(report.kl)},{_fmt(report.exact_ll0)},{_fmt(report.vecchia_ll0)}"
            )
    text = "\n".join(rows) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def cmd_estimate(args) -> None:
    metric = _metric_from_args(args)
    data = read_dataset(args.input, metric)
    if args.sqrt:
        data = fit.sqrt_transform(data)
    if args.detrend:
        data = fit.ols_detrend(data)
    bounds = dict(fit.DEFAULT_BOUNDS)
    for name, text in (("sigma_sq", args.sigma2_bounds), ("beta", args.beta_bounds), ("nu", args.nu_bounds)):
        if text:
            try:
                lo, hi = (float(tok) for tok in text.split(","))
            except ValueError as exc:
                raise CliError(f"bad bounds for {name}: {exc}") from exc
            bounds[name] = (lo, hi)
    family = "power_exponential" if args.kernel == "powexp" else args.kernel
    config = fit.FitConfig(
        objective=args.objective,
        m=args.m,
        ordering=args.ordering,
        seed=args.seed,
        init=kernels.KernelParams(args.sigma2, args.beta, args.nu),
        bounds=bounds,
        tol=args.tol,
        max_evals=args.max_evals,
        free_nu=args.free_nu,
        max_dense_n=args.max_dense_n,
    )
    result = fit.mle_estimate(data, config, family)
    _emit_json(
        {
            "theta_hat": {
                "sigma_sq": result.theta_hat.sigma_sq,
                "beta": result.theta_hat.beta,
                "nu": result.theta_hat.nu,
            },
            "loglik": result.loglik,
            "evaluations": result.evaluations,
            "converged": result.converged,
        }
    )


def cmd_predict(args) -> None:
    metric = _metric_from_args(args)
    train = read_dataset(args.train, metric)
    test = read_dataset(args.test, metric)
    theta = kernels.KernelParams(args.sigma2, args.beta, args.nu)
    family = "power_exponential" if args.kernel == "powexp" else args.kernel
    m = args.m if args.m is not None else train.n
    report = fit.krige_predict(train, theta, family, test.locations, m, test.observations)
    cols = _columns(metric)
    rows = [f"{cols[0]},{cols[1]},prediction"]
    for (x, y), pred in zip(test.locations, report.predictions):
        rows.append(f"{_fmt(x)},{_fmt(y)},{_fmt(pred)}")
    with open(args.out, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(rows) + "\n")
    _emit_json({"n_train": train.n, "n_test": test.n, "m": m, "mse": report.mse, "out": args.out})


def cmd_bench(args) -> None:
    spec = _kernel_from_args(args)
    if not (1 <= args.m < args.n):
        raise CliError(f"need 1 <= m < n, got m={args.m}, n={args.n}")
    root = np.random.SeedSequence(args.seed)
    loc_seed, obs_seed = root.spawn(2)
    locations = np.random.default_rng(loc_seed).random((args.n, 2))
    # timing only needs some finite field; skip the dense simulation
    values = np.random.default_rng(obs_seed).standard_normal(args.n)
    data = geo.Dataset(locations, values)
    plan = vecchia.make_plan(data, args.m, args.ordering, args.seed)
    ordered = data.permute(plan.permutation)

    times = {"assembly": [], "factorization_solves": [], "reduction": []}
    loglik = None
    ws = None
    for rep in range(args.reps + 1):
        t0 = time.perf_counter()
        ws = vecchia.assemble(ordered, plan, spec, out=ws)
        t1 = time.perf_counter()
        lower, mu_prime, sigma_prime = vecchia._numeric_stage(ws)
        t2 = time.perf_counter()
        result = vecchia._reduction_stage(ws, ordered.observations, plan.m, lower, mu_prime, sigma_prime)
        t3 = time.perf_counter()
        if rep == 0:
            continue  # warmup rep: first-touch page faults stay out of the medians
        times["assembly"].append(t1 - t0)
        times["factorization_solves"].append(t2 - t1)
        times["reduction"].append(t3 - t2)
        loglik = result.total

    med = {phase: median(vals) for phase, vals in times.items()}
    med["total"] = med["assembly"] + med["factorization_solves"] + med["reduction"]
    flops = vecchia.flop_count(args.n, args.m)
    _emit_json(
        {
            "n": args.n,
            "m": args.m,
            "reps": args.reps,
            "wall_time_seconds": med,
            "model_flops": flops,
            "achieved_gflops": flops / med["factorization_solves"] / 1e9,
            "loglik": loglik,
        }
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vecchiagp",
        description="Vecchia-approximated Gaussian-process likelihoods, sweeps, fits, and kriging.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate a Gaussian field on random unit-square locations")
    p.add_argument("--n", type=int, required=True, help="number of locations")
    p.add_argument("--seed", type=int, default=0, help="generator seed (default: 0)")
    p.add_argument("--out", required=True, help="output CSV path (header x,y,value)")
    p.add_argument("--max-dense-n", type=int, default=exact.DENSE_GUARD_DEFAULT,
                   help="dense-simulation guard (default: %(default)s)")
    _add_kernel_args(p)
    _add_common_args(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("likelihood", help="evaluate the Vecchia log-likelihood of a CSV dataset")
    p.add_argument("--input", required=True, help="input CSV")
    p.add_argument("--m", type=int, required=True, help="conditioning size")
    p.add_argument("--ordering", choices=["random", "morton"], default="random")
    p.add_argument("--seed", type=int, default=0, help="ordering seed (default: 0)")
    p.add_argument("--with-exact", action="store_true",
                   help="also evaluate the exact dense log-likelihood and report |difference|")
    p.add_argument("--max-dense-n", type=int, default=exact.DENSE_GUARD_DEFAULT,
                   help="dense-oracle guard (default: %(default)s)")
    _add_kernel_args(p)
    _add_metric_args(p)
    _add_common_args(p)
    p.set_defaults(func=cmd_likelihood)

    p = sub.add_parser("kl", help="KL-divergence sweep over conditioning sizes and orderings")
    p.add_argument("--input", required=True, help="input CSV (observations ignored; KL uses y = 0)")
    p.add_argument("--m-list", required=True, help="comma-separated conditioning sizes, e.g. 10,30,60")
    p.add_argument("--orderings", default="random", help="comma-separated orderings (default: random)")
    p.add_argument("--seed", type=int, default=0, help="random-ordering seed (default: 0)")
    p.add_argument("--out", default=None, help="output CSV path (default: stdout)")
    p.add_argument("--max-dense-n", type=int, default=exact.DENSE_GUARD_DEFAULT,
                   help="dense-oracle guard (default: %(default)s)")
    _add_kernel_args(p)
    _add_metric_args(p)
    _add_common_args(p)
    p.set_defaults(func=cmd_kl)

    p = sub.add_parser("estimate", help="maximum-likelihood fit of the covariance parameters")
    p.add_argument("--input", required=True)
    p.add_argument("--objective", choices=["vecchia", "exact"], default="vecchia")
    p.add_argument("--m", type=int, default=60, help="conditioning size for the Vecchia objective")
    p.add_argument("--ordering", choices=["random", "morton"], default="random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--free-nu", action="store_true", help="estimate the smoothness too")
    p.add_argument("--tol", type=float, default=1e-5, help="relative objective tolerance")
    p.add_argument("--max-evals", type=int, default=500)
    p.add_argument("--sigma2-bounds", default=None, help="lo,hi (default: %s,%s)" % fit.DEFAULT_BOUNDS["sigma_sq"])
    p.add_argument("--beta-bounds", default=None, help="lo,hi (default: %s,%s)" % fit.DEFAULT_BOUNDS["beta"])
    p.add_argument("--nu-bounds", default=None, help="lo,hi (default: %s,%s)" % fit.DEFAULT_BOUNDS["nu"])
    p.add_argument("--detrend", action="store_true", help="remove the OLS plane in lon/lat first")
    p.add_argument("--sqrt", action="store_true", help="square-root transform first (wind-type data)")
    p.add_argument("--max-dense-n", type=int, default=exact.DENSE_GUARD_DEFAULT,
                   help="dense-objective guard (default: %(default)s)")
    _add_kernel_args(p)
    _add_metric_args(p)
    _add_common_args(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("predict", help="kriging prediction at test locations")
    p.add_argument("--train", required=True, help="training CSV")
    p.add_argument("--test", required=True, help="test CSV (values used as held-out truth for MSE)")
    p.add_argument("--m", type=int, default=None, help="neighbors per prediction (default: all)")
    p.add_argument("--out", required=True, help="predictions CSV path")
    _add_kernel_args(p)
    _add_metric_args(p)
    _add_common_args(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bench", help="time the likelihood phases and report the flop model")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--reps", type=int, default=3, help="timing repetitions (median reported)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ordering", choices=["random", "morton"], default="random")
    _add_kernel_args(p)
    _add_common_args(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        parallel.set_num_threads(args.threads)
        args.func(args)
    except (CliError, VecchiaGPError, ValueError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
