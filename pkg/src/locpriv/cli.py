"""Command-line front end.

Subcommands ``fit``, ``simulate``, ``attack``, ``bound`` and ``report``.
Settings come from built-in defaults, then an optional JSON ``--config``
file, then command-line flags.  Every output embeds the resolved config.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import errors, oracle, rng
from .bounds import ball_prob_bound, bound_report, max_subset_marginal
from .estimators import constant_success_exact, hamming, map_estimate, prior_estimate
from .ingest import DEFAULT_WINDOW, discretize, fit_transition, parse_checkins, split_train_eval
from .markov import MarkovPrior, matrix_powers, sample_trajectory, spectral_gap, synthetic_prior
from .mechanism import GAUSSIAN, RAW, Mechanism, Scenario, observe, random_schedule
from .montecarlo import CONSTANT_MAX, MAP, PRIOR, LossEstimate, SweepSpec, attack, rows_to_csv, sweep

log = logging.getLogger("locpriv")

FORMAT_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
ORACLE_CAP = 4096


class ConfigError(errors.LocPrivError, ValueError):
    pass


class DataError(errors.LocPrivError, ValueError):
    pass


class NumericFailure(errors.LocPrivError, RuntimeError):
    pass


@dataclass
class RunConfig:
    format_version: int = FORMAT_VERSION
    M: int = 100
    T: int = 10
    s: int = 5
    tau: float = 0.1
    sigma: float = 1.0
    mechanism: str = RAW
    n_trials: int = 1000
    seed: int = 0
    schedule: str = "uniform-random"
    delta: float = 1e-5
    prior: str | None = None
    priors: str | None = None
    input: str | None = None
    format: str = "tsv"
    window: int = DEFAULT_WINDOW
    top_k: int = 100
    eval_T: int = 5
    alpha: float = 0.1
    min_active: int = 10
    param: str | None = None
    values: list | None = None
    s_rule: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if d.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
            raise ConfigError(f"unsupported config format_version {d['format_version']}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def mech(self) -> Mechanism:
        if self.mechanism == GAUSSIAN:
            return Mechanism.gaussian(self.sigma)
        if self.mechanism == RAW:
            return Mechanism.raw()
        raise ConfigError(f"unknown mechanism {self.mechanism!r}")

    def validate(self, check_s: bool = True) -> None:
        if self.M < 1 or self.T < 1 or self.n_trials < 1:
            raise ConfigError("M, T and n_trials must be positive")
        if check_s and not 0 <= self.s < self.T:
            raise ConfigError("need 0 <= s < T")
        if self.tau <= 0 or self.sigma <= 0 or not 0 < self.delta < 1:
            raise ConfigError("need tau > 0, sigma > 0 and 0 < delta < 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        self.mech()


def schedule_for(cfg: RunConfig, M: int, T: int, default_fixed: int = 0) -> tuple[int, ...]:
    mode = cfg.schedule
    if mode == "uniform-random":
        return random_schedule(M, T, cfg.seed)
    if mode == "fixed" or mode.startswith("fixed:"):
        loc = default_fixed if mode == "fixed" else _int(mode.split(":", 1)[1])
        c = (loc,) * T
    elif mode.startswith("list:"):
        c = tuple(_int(v) for v in mode.split(":", 1)[1].split(","))
        if len(c) != T:
            raise ConfigError(f"schedule has {len(c)} entries, T={T}")
    else:
        raise ConfigError(f"unknown schedule mode {mode!r}")
    if min(c) < 0 or max(c) >= M:
        raise ConfigError(f"schedule location outside [0, {M})")
    return c


def _int(text: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"expected an integer, got {text!r}") from exc


def _read_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def _emit(payload, out: str | None) -> None:
    text = payload if isinstance(payload, str) else json.dumps(payload, indent=2) + "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _header(cfg: RunConfig, command: str) -> dict:
    return {"command": command, "config": cfg.to_dict(), "seed": cfg.seed, "generator": rng.GENERATOR}


def _single_prior(cfg: RunConfig) -> MarkovPrior:
    if cfg.prior:
        try:
            prior = MarkovPrior.from_dict(_read_json(cfg.prior))
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed prior file: {exc}") from exc
        cfg.M = prior.M
        return prior
    return synthetic_prior(cfg.M, cfg.tau)


def _load_bundle(cfg: RunConfig) -> dict:
    bundle = _read_json(cfg.priors)
    try:
        bundle["priors"] = [MarkovPrior.from_dict(u["prior"]) for u in bundle["users"]]
        bundle["manifest"]["M"]
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed prior bundle: {exc}") from exc
    if not bundle["users"]:
        raise DataError("prior bundle holds no users")
    return bundle


# -- fit -------------------------------------------------------------------------


def cmd_fit(cfg: RunConfig) -> dict:
    if not cfg.input:
        raise ConfigError("fit needs --input")
    try:
        with open(cfg.input, "rb") as fh:
            parsed = parse_checkins(fh, cfg.format)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    disc = discretize(parsed.records, cfg.window, cfg.top_k, cfg.min_active)
    if disc.n_steps < cfg.eval_T + 2:
        raise DataError(f"{disc.n_steps} time steps cannot hold out eval_T={cfg.eval_T}")
    users = []
    for u in disc.users:
        train, held = split_train_eval(u, cfg.eval_T)
        prior = fit_transition(train, disc.M, cfg.alpha)
        users.append(
            {
                "user_id": u.user_id,
                "prior": prior.to_dict(),
                "stationary": prior.stationary,
                "train_len": int(len(train)),
                "active_steps": u.active_steps,
                "eval": held.tolist(),
            }
        )
    manifest = {
        "M": disc.M,
        "top_k": cfg.top_k,
        "elsewhere": disc.elsewhere,
        "most_visited": 0,
        "window_seconds": disc.window_seconds,
        "origin": disc.origin,
        "n_steps": disc.n_steps,
        "eval_T": cfg.eval_T,
        "alpha": cfg.alpha,
        "min_active": disc.min_active,
        "users": len(users),
        "lines": parsed.lines,
        "malformed": parsed.malformed,
        "window_alignment": "earliest check-in",
        "tie_rule": disc.tie_rule,
        "location_map": disc.location_map,
    }
    return {**_header(cfg, "fit"), "manifest": manifest, "users": users}


# -- simulate ----------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> dict:
    prior = _single_prior(cfg)
    scen = Scenario(schedule_for(cfg, prior.M, cfg.T))
    mech = cfg.mech()
    x = sample_trajectory(prior, cfg.T, cfg.seed)
    y = observe(x, scen, mech, cfg.seed)
    est = map_estimate(prior, y, scen, mech)
    out = {
        **_header(cfg, "simulate"),
        "prior": prior.to_dict(),
        "scenario": scen.to_dict(),
        "mechanism": mech.to_dict(),
        "trajectory": x.tolist(),
        "observations": y.tolist(),
        "map_estimate": est.traj.tolist(),
        "map_distance": int(hamming(x, est.traj)),
    }
    return out


# -- attack ------------------------------------------------------------------------


def _real_attack(cfg: RunConfig, bundle: dict, mech: Mechanism) -> dict:
    man = bundle["manifest"]
    M, T, elsewhere = int(man["M"]), int(man["eval_T"]), int(man["elsewhere"])
    if not 0 <= cfg.s < T:
        raise ConfigError(f"need 0 <= s < eval_T={T}")
    c = schedule_for(cfg, M, T, default_fixed=int(man["most_visited"]))
    held = np.array([u["eval"] for u in bundle["users"]], dtype=np.int64)
    n = held.shape[0]
    at_sensor = held == np.array(c)[None, :]
    crowd = at_sensor.sum(axis=0)
    hits = {MAP: 0, PRIOR: 0}
    for i, prior in enumerate(bundle["priors"]):
        others = tuple(int(v) for v in crowd - at_sensor[i])
        scen = Scenario(c, others, n)
        y = np.asarray(others, dtype=float) + at_sensor[i]
        if mech.kind == GAUSSIAN:
            y = y + mech.sigma * rng.derive(cfg.seed, i, rng.NOISE_STREAM).standard_normal(T)
        hits[MAP] += int(hamming(held[i], map_estimate(prior, y, scen, mech).traj) <= cfg.s)
        hits[PRIOR] += int(hamming(held[i], prior_estimate(prior, T).traj) <= cfg.s)
    per_loc = ((T - np.stack([(held == l).sum(axis=1) for l in range(M)], axis=1)) <= cfg.s).sum(axis=0)
    per_loc[elsewhere] = -1
    best = int(np.argmax(per_loc))
    losses = {
        MAP: LossEstimate.from_count(hits[MAP], n, MAP),
        PRIOR: LossEstimate.from_count(hits[PRIOR], n, PRIOR),
        CONSTANT_MAX: LossEstimate.from_count(int(per_loc[best]), n, CONSTANT_MAX, best),
    }
    return {"mode": "checkins", "users": n, "schedule": list(c), "losses": {k: v.to_dict() for k, v in losses.items()}}


def _synthetic_attack(cfg: RunConfig, mech: Mechanism, threads) -> dict:
    prior = _single_prior(cfg)
    scen = Scenario(schedule_for(cfg, prior.M, cfg.T))
    losses = attack(prior, scen, mech, cfg.s, cfg.n_trials, cfg.seed, threads=threads)
    best = losses[CONSTANT_MAX].location
    return {
        "mode": "synthetic",
        "schedule": list(scen.c),
        "losses": {k: v.to_dict() for k, v in losses.items()},
        "constant_max_exact": constant_success_exact(prior, best, cfg.T, cfg.s),
    }


def _attack_oracle(cfg: RunConfig, mech: Mechanism, n_checks: int = 20) -> dict:
    prior = _single_prior(cfg)
    if prior.M**cfg.T > ORACLE_CAP:
        return {"checked": 0, "skipped": f"M^T exceeds {ORACLE_CAP}"}
    scen = Scenario(schedule_for(cfg, prior.M, cfg.T))
    mismatches = 0
    for i in range(n_checks):
        x = sample_trajectory(prior, cfg.T, cfg.seed + i)
        y = observe(x, scen, mech, cfg.seed + i)
        fast = map_estimate(prior, y, scen, mech)
        slow = oracle.brute_posterior_argmax(prior, y, scen, mech)
        if not np.array_equal(fast.traj, slow.traj) or not math.isclose(fast.log_score, slow.log_score, abs_tol=1e-9):
            mismatches += 1
    if mismatches:
        raise NumericFailure(f"MAP disagrees with enumeration on {mismatches} of {n_checks} draws")
    return {"checked": n_checks, "agree": True}


def cmd_attack(cfg: RunConfig, threads=None, check: bool = False) -> dict:
    mech = cfg.mech()
    if cfg.priors:
        body = _real_attack(cfg, _load_bundle(cfg), mech)
    else:
        body = _synthetic_attack(cfg, mech, threads)
        if check:
            body["oracle"] = _attack_oracle(cfg, mech)
    return {**_header(cfg, "attack"), **body}


# -- bound -------------------------------------------------------------------------


def _bound_oracle(prior: MarkovPrior, T: int, s: int) -> dict:
    if prior.M**T > ORACLE_CAP:
        return {"checked": 0, "skipped": f"M^T exceeds {ORACLE_CAP}"}
    exact = oracle.brute_ball_prob(prior, T, s)
    log_q = ball_prob_bound(prior, matrix_powers(prior.P, max(T, 2)), T, s)
    if math.exp(log_q) < exact - 1e-12:
        raise NumericFailure("ball bound below the enumerated ball probability")
    if prior.stationary:
        table = max_subset_marginal(prior, None, T)
        for m in range(1, T + 1):
            if not math.isclose(table[m], oracle.brute_max_subset_marginal(prior, T, m), abs_tol=1e-10):
                raise NumericFailure(f"subset marginal f({m}) disagrees with enumeration")
    return {"checked": 1, "agree": True, "ball_prob": exact, "ball_bound": math.exp(log_q)}


def cmd_bound(cfg: RunConfig, check: bool = False) -> dict:
    mech = cfg.mech()
    if cfg.priors:
        bundle = _load_bundle(cfg)
        man = bundle["manifest"]
        M, T = int(man["M"]), int(man["eval_T"])
        if not 0 <= cfg.s < T:
            raise ConfigError(f"need 0 <= s < eval_T={T}")
        c = schedule_for(cfg, M, T, default_fixed=int(man["most_visited"]))
        scen = Scenario(c)
        per_user = []
        for u, prior in zip(bundle["users"], bundle["priors"]):
            rep = bound_report(prior, scen, mech, cfg.s, delta=cfg.delta)
            per_user.append(
                {
                    "user_id": u["user_id"],
                    "spectral_gap": spectral_gap(prior.P),
                    "sensor_visit_prob": float(np.mean(prior.pi[list(c)])),
                    **rep.to_dict(),
                }
            )
        keys = ("h_x", "i_tilde", "log_ns", "log_q", "loose_ub", "tight_ub")
        mean = {k: float(np.mean([r[k] for r in per_user])) for k in keys}
        return {**_header(cfg, "bound"), "mode": "checkins", "schedule": list(c), "mean": mean, "per_user": per_user}

    prior = _single_prior(cfg)
    scen = Scenario(schedule_for(cfg, prior.M, cfg.T))
    rep = bound_report(prior, scen, mech, cfg.s, delta=cfg.delta)
    out = {**_header(cfg, "bound"), "mode": "synthetic", "schedule": list(scen.c), "report": rep.to_dict()}
    if check:
        out["oracle"] = _bound_oracle(prior, cfg.T, cfg.s)
    return out


# -- report ------------------------------------------------------------------------


def _sweep_spec(cfg: RunConfig) -> SweepSpec:
    if not cfg.param or not cfg.values:
        raise ConfigError("report needs --param and --values")
    return SweepSpec(
        param=cfg.param,
        values=tuple(cfg.values),
        M=cfg.M,
        T=cfg.T,
        tau=cfg.tau,
        s=cfg.s,
        sigma=cfg.sigma,
        mechanism=cfg.mechanism,
        n_trials=cfg.n_trials,
        seed=cfg.seed,
        s_rule=cfg.s_rule,
        delta=cfg.delta,
    )


def cmd_report(cfg: RunConfig, threads=None, as_json: bool = False, timing: bool = False):
    rows = sweep(_sweep_spec(cfg), threads=threads)
    if as_json:
        return {**_header(cfg, "report"), "rows": [r.to_dict(timing=timing) for r in rows]}
    return rows_to_csv(rows, timing=timing)


# -- argument parsing ----------------------------------------------------------------


def _values(text: str) -> list:
    out = []
    for v in text.split(","):
        v = v.strip()
        try:
            out.append(int(v))
        except ValueError:
            try:
                out.append(float(v))
            except ValueError as exc:
                raise argparse.ArgumentTypeError(f"bad grid value {v!r}") from exc
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override it")
    common.add_argument("--seed", type=int, help="master seed (non-negative integer)")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--oracle", action="store_true", help="cross-check against brute force on small instances")
    common.add_argument("--threads", type=int, help="worker cap (default $LOCPRIV_THREADS or 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--M", type=int, dest="M")
    model.add_argument("--T", type=int, dest="T")
    model.add_argument("--s", type=int, dest="s")
    model.add_argument("--tau", type=float)
    model.add_argument("--sigma", type=float)
    model.add_argument("--mechanism", choices=(RAW, GAUSSIAN))
    model.add_argument("--n-trials", type=int, dest="n_trials")
    model.add_argument("--schedule", help="uniform-random | fixed[:<loc>] | list:<c1>,<c2>,...")
    model.add_argument("--delta", type=float)
    model.add_argument("--prior", help="single prior JSON {m, pi, p} instead of the synthetic chain")
    model.add_argument("--priors", help="prior bundle written by `fit`")

    parser = argparse.ArgumentParser(prog="locpriv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", parents=[common], help="fit per-user priors from check-ins")
    fit.add_argument("--input")
    fit.add_argument("--format", choices=("tsv", "csv"))
    fit.add_argument("--window", type=int, help="window length in seconds")
    fit.add_argument("--top-k", type=int, dest="top_k")
    fit.add_argument("--eval-T", type=int, dest="eval_T")
    fit.add_argument("--alpha", type=float)
    fit.add_argument("--min-active", type=int, dest="min_active")

    sub.add_parser("simulate", parents=[common, model], help="sample one trajectory and its counts")
    sub.add_parser("attack", parents=[common, model], help="Monte Carlo attack losses")
    sub.add_parser("bound", parents=[common, model], help="Fano-type upper bounds")

    rep = sub.add_parser("report", parents=[common, model], help="parameter sweep table")
    rep.add_argument("--param", choices=("M", "s", "T", "sigma", "tau"))
    rep.add_argument("--values", type=_values, help="comma-separated grid")
    rep.add_argument("--s-rule", dest="s_rule", choices=("T/2", "T-2"))
    rep.add_argument("--json", action="store_true", help="emit JSON instead of CSV")
    rep.add_argument("--timing", action="store_true", help="include wall-clock columns")
    return parser


_NON_CONFIG = {"command", "config", "out", "oracle", "threads", "verbose", "json", "timing"}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    base = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(base, dict):
            raise ConfigError("config must be a JSON object")
    for k, v in vars(args).items():
        if k not in _NON_CONFIG and v is not None:
            base[k] = v
    try:
        cfg = RunConfig.from_dict(base)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if args.command != "fit":
        # simulate ignores s; report checks it per grid point
        cfg.validate(check_s=args.command in ("attack", "bound") and not cfg.priors)
    return cfg


_DATA_ERRORS = (
    DataError,
    errors.EmptyInput,
    errors.TooManyMalformed,
    errors.NoRecords,
    errors.SequenceTooShort,
    errors.TooShort,
    errors.NotStochastic,
    errors.NegativeEntry,
    errors.DimensionMismatch,
)
_NUMERIC_ERRORS = (
    NumericFailure,
    errors.NoConvergence,
    errors.EigenFailure,
    errors.NotStationary,
    errors.InconsistentObservation,
    errors.ProbabilityOutOfRange,
    FloatingPointError,
)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "fit":
            out = cmd_fit(cfg)
        elif args.command == "simulate":
            out = cmd_simulate(cfg)
        elif args.command == "attack":
            out = cmd_attack(cfg, args.threads, args.oracle)
        elif args.command == "bound":
            out = cmd_bound(cfg, args.oracle)
        else:
            out = cmd_report(cfg, args.threads, args.json, args.timing)
        _emit(out, args.out)
    except (ConfigError, errors.InvalidGrid) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except _DATA_ERRORS as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except _NUMERIC_ERRORS as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except ValueError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
