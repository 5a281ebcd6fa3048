"""Command-line entry point.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O error.
Every command that takes ``--out`` writes its CSV files plus ``manifest.json``
into that directory. See FORMATS.md for the file layouts.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .baselines import greedy_policy, q_from_values, q_learning, value_iteration
from .envs import CATALOG, build_env, load_spec, spec_to_dict
from .errors import IoError, NumericalError, ValidationError, ZmdpError
from .learner import LearnerConfig, LearningCurve, plan_zsa, train, zsa_from_z
from .mdp import ValidatedMdp, default_mu, validate
from .oracle import DEFAULT_NODE_BUDGET, enumerate_z, enumerate_z_likelihood
from .planner import policy_from_z, solve_linear, solve_power, value_from_z
from .stochastic import diagnose_averaged_policy, policy_variational, solve_averaged, solve_variational

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def fmt(x) -> str:
    """Fixed 9-significant-digit rendering used in every CSV."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return f"{x:.9g}"
    return str(x)


def _exp(x: float) -> float:
    """``exp`` that saturates at inf instead of raising."""
    return math.exp(x) if x < 709.0 else math.inf


def write_csv(path: Path, header: list[str], rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(x) for x in row])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _out_dir(args) -> Path | None:
    if getattr(args, "out", None) is None:
        return None
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc}") from exc
    return out


def _load_mdp(args) -> ValidatedMdp:
    return validate(load_spec(args.mdp))


def _resolve_mu(args, mdp: ValidatedMdp) -> float:
    if args.mu == "auto":
        return default_mu(mdp, 0.1)
    try:
        return float(args.mu)
    except ValueError:
        raise ValidationError(f"--mu must be 'auto' or a number, got {args.mu!r}") from None


def _sha256(path) -> str | None:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except (OSError, TypeError):
        return None


# -- subcommands -------------------------------------------------------------
# each returns (metrics, resolved hyperparameters)


def cmd_env(args):
    params = {}
    for key in ("n", "step_reward", "terminal_reward", "seed", "n_states", "max_actions", "max_branch", "layers", "width"):
        val = getattr(args, key)
        if val is not None:
            params[key] = val
    if args.stochastic:
        params["stochastic"] = True
    if args.cyclic:
        params["acyclic"] = False
    spec = build_env(args.name, **params)
    validate(spec)
    text = json.dumps(spec_to_dict(spec), indent=2) + "\n"
    out = _out_dir(args)
    if out is None:
        sys.stdout.write(text)
    else:
        try:
            (out / "mdp.json").write_text(text)
        except OSError as exc:
            raise IoError(str(exc)) from exc
    return {"n_states": len(spec.states)}, {"name": args.name, **params}


def _policy_rows(mdp, policy, prefix=()):
    return [(*prefix, s, a, policy[(s, a)]) for s, a in mdp.arms]


def cmd_plan(args, stochastic=False):
    mdp = _load_mdp(args)
    mu = _resolve_mu(args, mdp)
    variant = args.variant if stochastic else None
    if stochastic:
        solver = solve_averaged if variant == "averaged" else solve_variational
        kw = {"tol": args.tol, "max_iter": args.max_iter}
    elif args.method == "linear":
        solver, kw = solve_linear, {}
    else:
        solver, kw = solve_power, {"tol": args.tol, "max_iter": args.max_iter}
    table = solver(mdp, args.beta, mu, **kw)
    v_fd = value_from_z(mdp, args.beta, mu, args.fd_step, "finite_difference", solver, **kw)
    v_an = value_from_z(mdp, args.beta, mu, args.fd_step, "analytic_recursion", solver, **kw)
    if stochastic and variant == "variational":
        policy = policy_variational(mdp, table)
    elif stochastic:
        policy = None
    else:
        policy = policy_from_z(mdp, table)

    prefix = (variant,) if stochastic else ()
    lead = ["variant"] if stochastic else []
    out = _out_dir(args)
    if out is not None:
        write_csv(
            out / "z.csv",
            lead + ["state", "log_z", "z"],
            [(*prefix, s, table[s], table.z(s)) for s in mdp.states],
        )
        write_csv(
            out / "v.csv",
            lead + ["state", "v_fd", "v_analytic"],
            [(*prefix, s, v_fd[s], v_an[s]) for s in mdp.states],
        )
        if policy is not None:
            write_csv(out / "policy.csv", lead + ["state", "action", "prob"], _policy_rows(mdp, policy, prefix))
        else:
            weights = diagnose_averaged_policy(mdp, table)
            write_csv(
                out / "policy.csv",
                lead + ["state", "action", "next_state", "weight"],
                [(*prefix, s, a, s2, w) for (s, a, s2), w in weights.items()],
            )
    metrics = {f"log_z:{s}": table[s] for s in mdp.states if not mdp.is_terminal(s)}
    metrics["residual"] = table.residual
    hp = {"beta": args.beta, "mu": mu, "tol": args.tol, "max_iter": args.max_iter, "fd_step": args.fd_step}
    hp.update({"variant": variant} if stochastic else {"method": args.method})
    return metrics, hp


def cmd_plan_stochastic(args):
    return cmd_plan(args, stochastic=True)


def _curve_rows(curve: LearningCurve):
    return [tuple(r) for r in curve.rows]


CURVE_HEADER = ["episode", "return", "error", "epsilon", "alpha"]


def cmd_learn(args):
    mdp = _load_mdp(args)
    mu = _resolve_mu(args, mdp)
    reference = None
    if args.ref_planner:
        if mdp.is_deterministic:
            reference = plan_zsa(mdp, args.beta, mu)
        else:
            reference = zsa_from_z(mdp, solve_variational(mdp, args.beta, mu))
    cfg = LearnerConfig(
        beta=args.beta,
        mu=mu,
        episodes=args.episodes,
        alpha0=args.alpha0,
        alpha_decay=args.alpha_decay,
        explore=args.explore,
        epsilon_start=args.epsilon_start,
        epsilon_end=args.epsilon_end,
        seed=args.seed,
        eval_every=args.eval_every,
        start_state=args.start_state,
        max_steps=args.max_steps,
        reference=reference,
    )
    table, curve = train(mdp, cfg)
    out = _out_dir(args)
    if out is not None:
        write_csv(
            out / "zsa.csv",
            ["state", "action", "log_zsa", "zsa"],
            [(s, a, v, _exp(v)) for (s, a), v in table.log_zsa.items()],
        )
        write_csv(out / "policy.csv", ["state", "action", "prob"], _policy_rows(mdp, table.policy()))
        write_csv(out / "curve.csv", CURVE_HEADER, _curve_rows(curve))
    last = curve.rows[-1] if curve.rows else None
    metrics = {
        "final_return": last.episode_return if last else math.nan,
        "final_error": last.error if last else math.nan,
    }
    hp = {k: v for k, v in vars(cfg).items() if k != "reference"}
    return metrics, hp


def cmd_baseline(args):
    mdp = _load_mdp(args)
    out = _out_dir(args)
    hp = {"algo": args.algo, "gamma": args.gamma}
    if args.algo == "vi":
        v, policy = value_iteration(mdp, args.gamma, tol=args.tol)
        q = q_from_values(mdp, v.v, args.gamma)
        if out is not None:
            write_csv(out / "v.csv", ["state", "v"], list(v.v.items()))
            write_csv(out / "q.csv", ["state", "action", "q"], [(s, a, x) for (s, a), x in q.q.items()])
            write_csv(out / "policy.csv", ["state", "action", "prob"], _policy_rows(mdp, policy))
        return {f"v:{s}": x for s, x in v.v.items()}, {**hp, "tol": args.tol}

    reference = None
    if args.ref_planner:
        v, _ = value_iteration(mdp, args.gamma)
        reference = q_from_values(mdp, v.v, args.gamma)
    curve = LearningCurve()
    explore = args.explore
    q = q_learning(
        mdp,
        gamma=args.gamma,
        alpha0=args.alpha0,
        alpha_decay=args.alpha_decay,
        explore=explore,
        episodes=args.episodes,
        seed=args.seed,
        epsilon_start=args.epsilon_start,
        epsilon_end=args.epsilon_end,
        boltzmann_beta=args.beta,
        start_state=args.start_state,
        max_steps=args.max_steps,
        eval_every=args.eval_every,
        reference=reference,
        curve=curve,
    )
    if out is not None:
        write_csv(out / "q.csv", ["state", "action", "q"], [(s, a, x) for (s, a), x in q.q.items()])
        write_csv(out / "policy.csv", ["state", "action", "prob"], _policy_rows(mdp, greedy_policy(q)))
        write_csv(out / "curve.csv", CURVE_HEADER, _curve_rows(curve))
    last = curve.rows[-1] if curve.rows else None
    hp.update(
        episodes=args.episodes, alpha0=args.alpha0, alpha_decay=args.alpha_decay, explore=explore,
        epsilon_start=args.epsilon_start, epsilon_end=args.epsilon_end, seed=args.seed,
    )
    return {
        "final_return": last.episode_return if last else math.nan,
        "final_error": last.error if last else math.nan,
    }, hp


def cmd_oracle(args):
    mdp = _load_mdp(args)
    mu = _resolve_mu(args, mdp)
    if args.state not in mdp.index:
        raise ValidationError(f"unknown state {args.state!r}")
    fn = enumerate_z_likelihood if args.likelihood else enumerate_z
    res = fn(mdp, args.state, args.beta, mu, args.len_cap, args.node_budget)
    header = ["partial_sum", "tail_bound", "exhausted"]
    row = (res.partial_sum, res.tail_bound, res.exhausted)
    out = _out_dir(args)
    if out is not None:
        write_csv(out / "oracle.csv", header, [row])
    sys.stdout.write(",".join(header) + "\n" + ",".join(fmt(x) for x in row) + "\n")
    hp = {"state": args.state, "beta": args.beta, "mu": mu, "len_cap": args.len_cap, "likelihood": args.likelihood}
    return {"partial_sum": res.partial_sum, "tail_bound": res.tail_bound}, hp


def cmd_sweep(args):
    from .sweep import run_sweep

    return run_sweep(args.config, args.out), {"config": args.config}


# -- parser ------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="zmdp", description="Partition-function planning and learning on finite MDPs.")
    p.add_argument("--version", action="version", version=f"zmdp {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    e = sub.add_parser("env", help="write a built-in environment as an MDP file")
    e.add_argument("--name", required=True, choices=sorted(CATALOG))
    e.add_argument("--n", type=int)
    e.add_argument("--step-reward", type=float)
    e.add_argument("--terminal-reward", type=float)
    e.add_argument("--seed", type=int)
    e.add_argument("--n-states", type=int)
    e.add_argument("--max-actions", type=int)
    e.add_argument("--max-branch", type=int)
    e.add_argument("--layers", type=int)
    e.add_argument("--width", type=int)
    e.add_argument("--stochastic", action="store_true")
    e.add_argument("--cyclic", action="store_true")
    e.add_argument("--out", help="directory for mdp.json (stdout when omitted)")
    e.set_defaults(func=cmd_env)

    def planning_flags(sp):
        sp.add_argument("--mdp", required=True)
        sp.add_argument("--beta", type=float, default=1.0)
        sp.add_argument("--mu", default="auto", help="'auto' (= -log d - 0.1) or a number")
        sp.add_argument("--tol", type=float, default=1e-10)
        sp.add_argument("--max-iter", type=int, default=100_000)
        sp.add_argument("--fd-step", type=float, default=1e-4)
        sp.add_argument("--out")

    pl = sub.add_parser("plan", help="solve Z on a deterministic MDP")
    planning_flags(pl)
    pl.add_argument("--method", choices=("power", "linear"), default="power")
    pl.set_defaults(func=cmd_plan)

    ps = sub.add_parser("plan-stochastic", help="solve Z on a stochastic MDP")
    planning_flags(ps)
    ps.add_argument("--variant", choices=("averaged", "variational"), default="variational")
    ps.add_argument("--method", choices=("power",), default="power")
    ps.set_defaults(func=cmd_plan_stochastic)

    def learner_flags(sp, explore_choices, default_explore):
        sp.add_argument("--mdp", required=True)
        sp.add_argument("--episodes", type=int, default=1000)
        sp.add_argument("--alpha0", type=float, default=0.5)
        sp.add_argument("--alpha-decay", type=float, default=500.0)
        sp.add_argument("--explore", choices=explore_choices, default=default_explore)
        sp.add_argument("--epsilon-start", type=float, default=1.0)
        sp.add_argument("--epsilon-end", type=float, default=0.05)
        sp.add_argument("--beta", type=float, default=1.0)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--eval-every", type=int, default=100)
        sp.add_argument("--ref-planner", action="store_true", help="fill the curve's error column")
        sp.add_argument("--start-state")
        sp.add_argument("--max-steps", type=int, default=10_000)
        sp.add_argument("--out")

    ln = sub.add_parser("learn", help="model-free learning of Z(s, a)")
    learner_flags(ln, ("proportional", "epsilon"), "proportional")
    ln.add_argument("--mu", default="auto")
    ln.set_defaults(func=cmd_learn)

    bl = sub.add_parser("baseline", help="value iteration or Q-learning")
    learner_flags(bl, ("epsilon", "boltzmann"), "epsilon")
    bl.add_argument("--algo", choices=("vi", "qlearn"), required=True)
    bl.add_argument("--gamma", type=float, default=0.99)
    bl.add_argument("--tol", type=float, default=1e-12)
    bl.set_defaults(func=cmd_baseline)

    oc = sub.add_parser("oracle", help="brute-force Z by trajectory enumeration")
    oc.add_argument("--mdp", required=True)
    oc.add_argument("--state", required=True)
    oc.add_argument("--beta", type=float, default=1.0)
    oc.add_argument("--mu", default="auto")
    oc.add_argument("--len-cap", type=int, default=10)
    oc.add_argument("--likelihood", action="store_true")
    oc.add_argument("--node-budget", type=int, default=DEFAULT_NODE_BUDGET)
    oc.add_argument("--out")
    oc.set_defaults(func=cmd_oracle)

    sw = sub.add_parser("sweep", help="run a grid of jobs and aggregate final metrics")
    sw.add_argument("--config", required=True)
    sw.add_argument("--out", required=True)
    sw.set_defaults(func=cmd_sweep)
    return p


def execute(argv: list[str]) -> dict:
    """Run one command and return its final metrics; errors propagate as exceptions."""
    args = build_parser().parse_args(argv)
    started = datetime.now(timezone.utc).isoformat()
    metrics, hp = args.func(args)
    out = getattr(args, "out", None)
    if out is not None:
        seeds = [hp["seed"]] if "seed" in hp else []
        manifest = {
            "command": ["zmdp", *argv],
            "subcommand": args.command,
            "hyperparams": hp,
            "seeds": seeds,
            "version": __version__,
            "input_sha256": _sha256(getattr(args, "mdp", None) or getattr(args, "config", None)),
            "started": started,
            "finished": datetime.now(timezone.utc).isoformat(),
        }
        try:
            (Path(out) / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")
        except OSError as exc:
            raise IoError(f"cannot write manifest: {exc}") from exc
    return metrics


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        execute(argv)
    except ValidationError as exc:
        print(f"zmdp: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"zmdp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (IoError, OSError) as exc:
        print(f"zmdp: io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ZmdpError as exc:
        print(f"zmdp: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as exc:
        # --help / --version
        return int(exc.code or 0)
    return EXIT_OK


def main():
    sys.exit(run())
