"""Command-line front end: ``bpd <command> ...``.

Every command prints its numeric results as JSON on stdout. Exit codes: 0 success,
1 usage error, 2 invalid MDP input, 3 enumeration or sampling limits hit.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .approx import (
    ESTIMATE_HEADER,
    SamplingError,
    gpd_additive,
    gpd_multiplicative,
    sampled_bpd_curve,
)
from .exact import CURVE_HEADER, bpd_curve, bpd_decision, bpd_exact, bpd_exact_many, cumulative_bpd
from .learner import LearnerConfig, policy_sampling, sample_complexity_bound
from .mdp import InvalidMdpError, MdpSchemaError, load_mdp, save_mdp, validate, value_range
from .policies import EnumerationCapError
from .problems import (
    EASY_CHAIN,
    HARD_CHAIN,
    GridSpec,
    SubsetSumInstance,
    n_chain,
    random_mdp,
    rational_bpd_instance,
    russell_norvig_grid,
    subset_sum_decide,
    subset_sum_mdp,
)

FIG1_SIZES = range(3, 9)
FIG1_PANEL_FRACTIONS = (0.25, 0.5, 0.75)
FIG4_SLIPS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse exits 2 by default; usage errors are 1
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _fraction_str(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _manifest(command: str, params: dict, seed: int | None, outputs: list[Path]) -> dict:
    return {
        "command": command,
        "parameters": params,
        "seed": seed,
        "tool_version": __version__,
        "outputs": [str(p) for p in outputs],
    }


def _manifest_params(args: argparse.Namespace) -> dict:
    skip = {"func", "manifest", "command"}
    return {
        k: _fraction_str(v) if isinstance(v, Fraction) else v
        for k, v in sorted(vars(args).items())
        if k not in skip
    }


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _kappa(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"expected a fraction P/Q, got {text!r}") from exc


# --- commands ----------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> tuple[int, dict, list[Path]]:
    report = validate(load_mdp(args.mdp))
    payload = {"valid": report.ok, "problems": report.problems}
    return (0 if report.ok else 2), payload, []


def cmd_gen(args: argparse.Namespace) -> tuple[int, dict, list[Path]]:
    extra: dict = {}
    if args.family == "n-chain":
        params = {"hard": HARD_CHAIN, "easy": EASY_CHAIN}.get(args.variant, {})
        r_left = args.r_left if args.r_left is not None else params.get("r_left")
        r_right = args.r_right if args.r_right is not None else params.get("r_right")
        if r_left is None or r_right is None:
            raise UsageError("n-chain needs --variant or both --r-left and --r-right")
        mdp = n_chain(args.n, r_left, r_right, args.gamma)
    elif args.family == "grid":
        mdp = russell_norvig_grid(GridSpec(args.slip, not args.no_lava, args.gamma))
    elif args.family == "subset-sum":
        if not args.elements:
            raise UsageError("subset-sum needs --elements")
        mdp = subset_sum_mdp(SubsetSumInstance(tuple(args.elements), 0))
    elif args.family == "rational":
        mdp, tau = rational_bpd_instance(args.z1, args.z2, args.gamma)
        extra["tau"] = tau
    else:
        mdp = random_mdp(args.states, args.actions, args.seed, args.reward_low, args.reward_high, args.gamma)
    out = Path(args.out)
    save_mdp(mdp, out)
    payload = {"out": str(out), "num_states": mdp.num_states, "num_actions": mdp.num_actions, **extra}
    return 0, payload, [out]


def cmd_exact(args: argparse.Namespace) -> tuple[int, dict, list[Path]]:
    res = bpd_exact(load_mdp(args.mdp), args.tau, args.cap)
    payload = {
        "tau": res.tau,
        "bpd": _fraction_str(res.value),
        "bpd_float": float(res.value),
        "gpd": _fraction_str(res.gpd),
        "bad_count": res.bad_count,
        "total": res.total,
    }
    return 0, payload, []


def cmd_decision(args: argparse.Namespace) -> tuple[int, dict, list[Path]]:
    answer = bpd_decision(load_mdp(args.mdp), args.tau, args.kappa, args.cap)
    payload = {"tau": args.tau, "kappa": _fraction_str(args.kappa), "decision": answer}
    return 0, payload, []


def cmd_curve(args: argparse.Namespace) -> tuple[int, dict, list[Path]]:
    curve = bpd_curve(load_mdp(args.mdp), args.points, args.cap)
    outputs = []
    if args.out:
        outputs.append(Path(args.out))
        _write_csv(outputs[0], CURVE_HEADER, curve.csv_rows())
    payload = {
        "vmin": curve.vmin,
        "vmax": curve.vmax,
        "points": [{"tau": t, "bpd": _fraction_str(q), "bpd_float": float(q)} for t, q in curve.points],
    }
    return 0, payload, outputs


def cmd_cumulative(args: argparse.Namespace) -> tuple[int, dict, list[Path]]:
    mdp = load_mdp(args.mdp)
    vmin, vmax = value_range(mdp)
    payload = {"cumulative_bpd": cumulative_bpd(mdp, args.cap), "vmin": vmin, "vmax": vmax}
    return 0, payload, []


def cmd_approx(args: argparse.Namespace) -> tuple[int, dict, list[Path]]:
    mdp = load_mdp(args.mdp)
    fn = gpd_additive if args.method == "additive" else gpd_multiplicative
    res = fn(mdp, args.tau, args.epsilon, args.delta, np.random.default_rng(args.seed))
    row = (args.tau, args.method, args.epsilon, args.delta, res.estimate, res.samples_used, args.seed)
    outputs = []
    if args.out:
        outputs.append(Path(args.out))
        _write_csv(outputs[0], ESTIMATE_HEADER, [row])
    payload = {**dict(zip(ESTIMATE_HEADER, row)), "bpd_estimate": res.bpd_estimate, "attempts": res.attempts}
    return 0, payload, outputs


def cmd_learn(args: argparse.Namespace) -> tuple[int, dict, list[Path]]:
    mdp = load_mdp(args.mdp)
    cfg = LearnerConfig.from_delta(mdp, args.tau, args.delta, args.eta, args.max_policies)
    report = policy_sampling(mdp, cfg, np.random.default_rng(args.seed))
    bpd = float(bpd_exact(mdp, args.tau, args.cap)) if args.exact_bpd else None
    bound = None
    if bpd is not None and bpd < 1.0:
        bound = sample_complexity_bound(bpd, args.delta, cfg.rmax, cfg.eta, cfg.gamma)
    payload = report.to_json(bound)
    if bound is None:
        payload.update(bound_k=None, bound_m=cfg.episodes_per_policy, bound_h=cfg.horizon)
    return 0, payload, []


def cmd_subset_sum(args: argparse.Namespace) -> tuple[int, dict, list[Path]]:
    exists = subset_sum_decide(SubsetSumInstance(tuple(args.elements), args.target), args.margin)
    payload = {"exists": exists, "elements": args.elements, "target": args.target}
    return 0, payload, []


def repro_fig1(out: Path) -> tuple[dict, list[Path]]:
    outputs: list[Path] = []
    summary: dict = {}
    for variant, params in (("hard", HARD_CHAIN), ("easy", EASY_CHAIN)):
        for n in FIG1_SIZES:
            mdp = n_chain(n, gamma=0.95, **params)
            curve = bpd_curve(mdp, 12)
            path = out / f"fig1_{variant}_n{n}.csv"
            _write_csv(path, CURVE_HEADER, curve.csv_rows())
            outputs.append(path)
            span = curve.vmax - curve.vmin
            panel = bpd_exact_many(mdp, [curve.vmin + f * span for f in FIG1_PANEL_FRACTIONS])
            path = out / f"fig1c_{variant}_n{n}.csv"
            _write_csv(
                path,
                CURVE_HEADER,
                [(r.tau, r.value.numerator, r.value.denominator, float(r.value)) for r in panel],
            )
            outputs.append(path)
            summary[f"{variant}_n{n}"] = [float(q) for _, q in curve.points]
    return summary, outputs


def repro_fig4(out: Path, seed: int, samples: int) -> tuple[dict, list[Path]]:
    outputs: list[Path] = []
    summary: dict = {}
    streams = np.random.SeedSequence(seed).spawn(2 * len(FIG4_SLIPS))
    for k, (lava, slip) in enumerate((lava, slip) for lava in (True, False) for slip in FIG4_SLIPS):
        mdp = russell_norvig_grid(GridSpec(slip, lava, 0.95))
        curve = sampled_bpd_curve(mdp, 12, samples, np.random.default_rng(streams[k]))
        name = f"fig4_{'lava' if lava else 'nolava'}_slip{slip:.1f}"
        rows = [(tau, "additive", r.epsilon, r.delta, r.estimate, r.samples_used, seed) for tau, r in curve]
        path = out / f"{name}.csv"
        _write_csv(path, ESTIMATE_HEADER, rows)
        outputs.append(path)
        summary[name] = [r.bpd_estimate for _, r in curve]
    return summary, outputs


def cmd_repro(args: argparse.Namespace) -> tuple[int, dict, list[Path]]:
    out = Path(args.out)
    if args.figure == "fig1":
        summary, outputs = repro_fig1(out)
    else:
        summary, outputs = repro_fig4(out, args.seed, args.samples)
    payload = {"figure": args.figure, "bpd": summary, "outputs": [str(p) for p in outputs]}
    return 0, payload, outputs


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bpd", description="Bad-policy density tools for finite MDPs.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--manifest", help="manifest path (default: next to the first output)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_mdp(p: argparse.ArgumentParser) -> None:
        p.add_argument("--mdp", required=True, help="MDP JSON file")
        p.add_argument("--cap", type=int, default=2**24, help="enumeration cap")

    p = sub.add_parser("validate", help="check MDP invariants")
    p.add_argument("--mdp", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("gen", help="write a generated MDP as JSON")
    p.add_argument("family", choices=["n-chain", "grid", "subset-sum", "rational", "random"])
    p.add_argument("--out", required=True)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--variant", choices=["hard", "easy"])
    p.add_argument("--r-left", type=float)
    p.add_argument("--r-right", type=float)
    p.add_argument("--slip", type=float, default=0.0)
    p.add_argument("--no-lava", action="store_true")
    p.add_argument("--elements", type=_ints)
    p.add_argument("--z1", type=int, default=1)
    p.add_argument("--z2", type=int, default=2)
    p.add_argument("--states", type=int, default=3)
    p.add_argument("--actions", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reward-low", type=float, default=0.0)
    p.add_argument("--reward-high", type=float, default=1.0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("exact", help="exact BPD at one threshold")
    with_mdp(p)
    p.add_argument("--tau", type=float, required=True)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("decision", help="is BPD exactly kappa?")
    with_mdp(p)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--kappa", type=_kappa, required=True)
    p.set_defaults(func=cmd_decision)

    p = sub.add_parser("curve", help="BPD on an evenly spaced threshold grid")
    with_mdp(p)
    p.add_argument("--points", type=int, default=12)
    p.add_argument("--out")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("cumulative", help="integral of BPD over [VMin, VMax]")
    with_mdp(p)
    p.set_defaults(func=cmd_cumulative)

    p = sub.add_parser("approx", help="sampled GPD estimate")
    with_mdp(p)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--method", choices=["additive", "multiplicative"], required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_approx)

    p = sub.add_parser("learn", help="run PolicySampling")
    with_mdp(p)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--eta", type=float)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--max-policies", type=int, default=10_000)
    p.add_argument("--no-exact-bpd", dest="exact_bpd", action="store_false",
                   help="skip enumerating the BPD used for the k bound")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("subset-sum", help="decide SubsetSum through the BPD reduction")
    p.add_argument("--elements", type=_ints, required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--margin", type=float, default=0.25)
    p.set_defaults(func=cmd_subset_sum)

    p = sub.add_parser("repro", help="regenerate the N-Chain or grid-world sweeps as CSV")
    p.add_argument("figure", choices=["fig1", "fig4"])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=500)
    p.set_defaults(func=cmd_repro)
    return parser


def _fill_gamma_default(args: argparse.Namespace) -> None:
    if getattr(args, "command", None) == "gen" and args.gamma is None:
        args.gamma = 0.5 if args.family == "rational" else 0.95


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _fill_gamma_default(args)
        code, payload, outputs = args.func(args)
    except UsageError as exc:
        print(f"bpd: error: {exc}", file=sys.stderr)
        return 1
    except (MdpSchemaError, InvalidMdpError) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 2
    except (EnumerationCapError, SamplingError) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"bpd: error: {exc}", file=sys.stderr)
        return 1
    manifest = _manifest(args.command, _manifest_params(args), getattr(args, "seed", None), outputs)
    if args.manifest or outputs:
        if args.manifest:
            path = Path(args.manifest)
        elif args.command == "repro":
            path = Path(args.out) / "manifest.json"
        else:
            path = outputs[0].with_name(outputs[0].name + ".manifest.json")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        payload["manifest"] = str(path)
    else:
        # nothing written to disk: the manifest travels with the stdout record
        payload["manifest"] = manifest
    _emit(payload)
    return code


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
