"""Command-line entry point for constructing games, running dynamics,
verifying equilibria, and batch-running the lemma validators.

Exit codes: 0 success, 1 usage/validation error, 2 lemma assertion
failure. stdout carries data only; diagnostics go to stderr at the level
selected by the SPARSE_CE_LOG environment variable (error/info/debug).
All file outputs are written atomically (temp file + rename) and embed
the resolved configuration and library version under a "meta" key.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .constructions import (
    GRAPH_KINDS,
    GameFamily,
    StitchParams,
    clique_game,
    enumhard_high_family,
    enumhard_high_game,
    enumhard_low_family,
    enumhard_low_game,
    generalized_matching_pennies,
    independent_set_game,
    random_graph,
    stitched_game,
)
from .deviations import enumerate_set
from .dynamics import RunLog, mwu_external, phi_regret, phi_regret_minimizer, self_play
from .equilibria import Verdict, brute_force_min_gap, ce_gap, verification_oracle
from .games import (
    BimatrixGame,
    DenseCorrelated,
    Graph,
    Player,
    SparseCorrelated,
    read_json,
)
from .lemmas import (
    MarginalConstants,
    check_completeness_ne,
    check_conditioning,
    check_enumhard_marginals,
    check_probability_bounds,
    check_stitch_dichotomy,
    extract_independent_set,
    query_harness,
    restrict_and_verify_stitched,
)
from .pseudo import MomentMatrix, check_pseudo, pseudo_ce_constraints

log = logging.getLogger("sparse_ce")

PHI_CHOICES = {
    "ext": "external",
    "int": "internal",
    "phihat": "phihat",
    "phi": "phi",
    "swap": "swap",
}


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad flags; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _setup_logging() -> None:
    level = os.environ.get("SPARSE_CE_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(levels.get(level, logging.ERROR))


def _meta(args: argparse.Namespace) -> dict:
    config = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("func", "config") and v is not None
    }
    return {"version": __version__, "config": config}


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".sparse-ce-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str, payload: dict, args: argparse.Namespace) -> None:
    payload = {**payload, "meta": _meta(args)}
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    log.info("wrote %s", path)


def _write_csv(path: str, csv_text: str, args: argparse.Namespace) -> None:
    header = "# meta: " + json.dumps(_meta(args), sort_keys=True) + "\n"
    _atomic_write(path, header + csv_text)
    log.info("wrote %s", path)


def _usage_error(message: str) -> SystemExit:
    sys.stderr.write(f"error: {message}\n")
    return SystemExit(1)


def _parse_set(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in text.split(",") if tok != "")
    except ValueError as exc:
        raise _usage_error(f"bad index set {text!r}: {exc}")


def _load_game(path: str) -> BimatrixGame:
    return BimatrixGame.from_json(read_json(path))


def _load_dist(path: str) -> SparseCorrelated:
    return SparseCorrelated.from_json(read_json(path))


def _phi_for(game_n: int, name: str):
    return enumerate_set(PHI_CHOICES[name], game_n)


def cmd_construct(args) -> int:
    kind = args.what
    if kind == "graph":
        k = int(args.k) if args.k is not None else None
        g, planted = random_graph(args.n, args.graph_kind, args.seed, k)
        payload = g.to_json()
        if planted is not None:
            payload["planted"] = list(planted)
        _write_json(args.out, payload, args)
        return 0
    if kind in ("is-game", "clique-game"):
        g = Graph.from_json(read_json(args.graph))
        builder = independent_set_game if kind == "is-game" else clique_game
        game = builder(g, args.k, args.gamma, rescale=args.rescale)
    elif kind == "enumhard-low":
        game = enumhard_low_game(args.ell, _parse_set(args.set))
    elif kind == "enumhard-high":
        game = enumhard_high_game(args.n, _parse_set(args.set))
    elif kind == "pennies":
        game = generalized_matching_pennies(args.m, shifted=args.shifted)
    elif kind == "stitched":
        sos = _load_game(args.sos)
        enum = _load_game(args.enum)
        params = StitchParams(delta=args.delta, k=args.k, T=args.T)
        game = stitched_game(sos, enum, params, normalize=args.normalize)
    else:  # pragma: no cover - argparse restricts choices
        raise _usage_error(f"unknown construct target {kind!r}")
    _write_json(args.out, game.to_json(), args)
    return 0


def emit_plot_data(log_: RunLog, phi, path: str, args) -> None:
    """CSV of (t, running deviation-regret/t per player, running welfare)."""
    rows = ["t,row_regret_per_t,col_regret_per_t,running_welfare\n"]
    tables = phi.tables
    welfare = log_.welfare_per_round()
    cum_welfare = np.cumsum(welfare)
    out_rows = []
    for side, X, U in (("row", log_.X, log_.UX), ("col", log_.Y, log_.UY)):
        gains = np.einsum("tfi,ti->tf", U[:, tables], X)
        base = np.einsum("ti,ti->t", X, U)
        cum = np.cumsum(gains, axis=0)
        cum_base = np.cumsum(base)
        reg = cum.max(axis=1) - cum_base
        out_rows.append(reg)
    for t in range(log_.T):
        rows.append(
            f"{t + 1},{float(out_rows[0][t]) / (t + 1)!r},"
            f"{float(out_rows[1][t]) / (t + 1)!r},"
            f"{float(cum_welfare[t]) / (t + 1)!r}\n"
        )
    _write_csv(path, "".join(rows), args)


def cmd_dynamics(args) -> int:
    game = _load_game(args.game)
    phi = _phi_for(game.n, args.phi_set)

    def make(seed):
        if args.algo == "mwu":
            return mwu_external(game.n, seed)
        return phi_regret_minimizer(phi, seed)

    dist, log_ = self_play(game, make(args.seed), make(args.seed + 1), args.rounds)
    log_ = RunLog(log_.X, log_.Y, log_.UX, log_.UY, seed=args.seed)
    report = ce_gap(game, dist, phi)
    if args.out:
        _write_json(args.out, log_.to_json(), args)
    if args.dist_out:
        _write_json(args.dist_out, dist.to_json(), args)
    if args.csv_out:
        _write_csv(args.csv_out, log_.to_csv(), args)
    if args.plot_out:
        emit_plot_data(log_, phi, args.plot_out, args)
    print(
        json.dumps(
            {
                "rounds": args.rounds,
                "gap_row": report.gap_row,
                "gap_col": report.gap_col,
                "epsilon_star": report.epsilon_star,
                "welfare": report.welfare,
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_verify(args) -> int:
    game = _load_game(args.game)
    obj = read_json(args.dist)
    dist: SparseCorrelated | DenseCorrelated
    if "m" in obj and "xs" not in obj:
        dist = DenseCorrelated(np.array(obj["m"], dtype=float))
    else:
        dist = SparseCorrelated.from_json(obj)
    phi = _phi_for(game.n, args.phi)
    answer = verification_oracle(game, dist, args.eps, phi)
    print(answer.value)
    return 0


def cmd_family(args) -> int:
    if args.kind == "low":
        family = enumhard_low_family(args.ell, packed=args.packed, min_l1=args.min_l1)
    else:
        family = enumhard_high_family(args.n)
    _write_json(args.out, family.to_json(), args)
    return 0


def cmd_query(args) -> int:
    family = GameFamily.from_json(read_json(args.family))
    results = []
    for trial in range(args.trials):
        queries, found = query_harness(
            family,
            args.hidden,
            args.eps,
            strategy=args.strategy,
            seed=args.seed + trial,
            verify_distinct=(trial == 0),
        )
        results.append(queries)
        if not found:
            raise _usage_error(f"hidden game never accepted at eps={args.eps}")
    payload = {
        "hidden": args.hidden,
        "eps": args.eps,
        "strategy": args.strategy,
        "trials": args.trials,
        "queries": results if args.trials > 1 else results[0],
        "mean_queries": float(np.mean(results)),
    }
    if args.out:
        _write_json(args.out, payload, args)
    print(json.dumps(payload, sort_keys=True))
    return 0


def cmd_bruteforce(args) -> int:
    game = _load_game(args.game)
    phi = _phi_for(game.n, args.phi)
    dist, gap = brute_force_min_gap(game, args.T, args.grid, phi)
    payload = {"gap": gap, "dist": dist.to_json()}
    if args.out:
        _write_json(args.out, payload, args)
    print(json.dumps(payload, sort_keys=True))
    return 0


def cmd_pseudo(args) -> int:
    game = _load_game(args.game)
    moment = MomentMatrix.from_json(read_json(args.moment))
    phi = _phi_for(game.n, args.phi)
    constraints = pseudo_ce_constraints(game, args.T, phi, delta=args.delta)
    result = check_pseudo(moment, constraints, tol=args.tol)
    payload = {
        "valid": result.valid,
        "reason": result.reason,
        "detail": result.detail,
        "constraints": len(constraints),
    }
    print(json.dumps(payload, sort_keys=True))
    return 0


def cmd_lemma(args) -> int:
    which = args.which
    if which == "completeness":
        g = Graph.from_json(read_json(args.graph))
        S = _parse_set(args.set)
        k = args.k if args.k is not None else len(S)
        verdict = check_completeness_ne(g, S, args.gamma, k, T=args.T)
    elif which == "conditioning":
        verdict = check_conditioning(
            _load_game(args.game), args.gamma, args.k, _load_dist(args.dist)
        )
    elif which == "prob-bounds":
        verdict = check_probability_bounds(
            _load_game(args.game), _load_dist(args.dist), args.gamma, args.k
        )
    elif which == "extract-is":
        g = Graph.from_json(read_json(args.graph))
        _, verdict = extract_independent_set(
            _load_game(args.game), _load_dist(args.dist), args.t, args.k, args.gamma, g
        )
    elif which == "dichotomy":
        verdict = check_stitch_dichotomy(
            _load_game(args.game), _load_dist(args.dist), args.k
        )
    elif which == "stitch-soundness":
        verdict = restrict_and_verify_stitched(
            _load_dist(args.dist),
            _load_game(args.game),
            _load_game(args.enum_game),
            args.eps_prime,
            args.k,
            assume_soshard=not args.no_assume_soshard,
            soundness_constant=args.constant,
        )
    elif which == "marginals":
        verdict = check_enumhard_marginals(
            args.kind,
            _load_game(args.game),
            _load_dist(args.dist),
            _parse_set(args.set),
            constants=MarginalConstants(),
        )
    else:  # pragma: no cover
        raise _usage_error(f"unknown lemma {which!r}")
    line = verdict.to_jsonl()
    if args.out:
        _atomic_write(args.out, line + "\n")
    print(line)
    return 0 if verdict.passed else 2


def build_parser() -> _Parser:
    p = _Parser(prog="sparse-ce", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("construct", help="build games and graphs")
    c.add_argument("what", choices=(
        "graph", "is-game", "clique-game", "enumhard-low", "enumhard-high",
        "pennies", "stitched",
    ))
    c.add_argument("--graph")
    c.add_argument("--graph-kind", choices=GRAPH_KINDS, default="er-half")
    c.add_argument("--n", type=int)
    c.add_argument("--k", type=float)
    c.add_argument("--gamma", type=float)
    c.add_argument("--ell", type=int)
    c.add_argument("--m", type=int)
    c.add_argument("--set")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--shifted", action="store_true")
    c.add_argument("--rescale", action="store_true")
    c.add_argument("--sos")
    c.add_argument("--enum")
    c.add_argument("--delta", type=float)
    c.add_argument("--T", type=int, default=1)
    c.add_argument("--normalize", action="store_true")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_construct)

    d = sub.add_parser("dynamics", help="self-play regret dynamics")
    d.add_argument("--game", required=True)
    d.add_argument("--rounds", type=int, required=True)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--algo", choices=("mwu", "phi"), default="phi")
    d.add_argument("--phi-set", choices=tuple(PHI_CHOICES), default="phi")
    d.add_argument("--out")
    d.add_argument("--dist-out")
    d.add_argument("--csv-out")
    d.add_argument("--plot-out")
    d.set_defaults(func=cmd_dynamics)

    v = sub.add_parser("verify", help="verification oracle")
    v.add_argument("--game", required=True)
    v.add_argument("--dist", required=True)
    v.add_argument("--eps", type=float, required=True)
    v.add_argument("--phi", choices=tuple(PHI_CHOICES), default="phi")
    v.set_defaults(func=cmd_verify)

    f = sub.add_parser("family", help="build an enumeration-hard family")
    f.add_argument("--kind", choices=("low", "high"), required=True)
    f.add_argument("--ell", type=int)
    f.add_argument("--n", type=int)
    f.add_argument("--packed", action="store_true")
    f.add_argument("--min-l1", type=float, default=0.0)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_family)

    q = sub.add_parser("query", help="oracle-query enumeration harness")
    q.add_argument("--family", required=True)
    q.add_argument("--hidden", required=True)
    q.add_argument("--eps", type=float, required=True)
    q.add_argument("--strategy", choices=("random", "fixed"), default="random")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--trials", type=int, default=1)
    q.add_argument("--out")
    q.set_defaults(func=cmd_query)

    b = sub.add_parser("bruteforce", help="grid scan for the minimum gap")
    b.add_argument("--game", required=True)
    b.add_argument("--T", type=int, default=1)
    b.add_argument("--grid", type=int, default=8)
    b.add_argument("--phi", choices=tuple(PHI_CHOICES), default="phi")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bruteforce)

    s = sub.add_parser("pseudo", help="check a moment matrix against a game")
    s.add_argument("--game", required=True)
    s.add_argument("--moment", required=True)
    s.add_argument("--T", type=int, required=True)
    s.add_argument("--phi", choices=tuple(PHI_CHOICES), default="phi")
    s.add_argument("--delta", type=float)
    s.add_argument("--tol", type=float, default=1e-9)
    s.set_defaults(func=cmd_pseudo)

    m = sub.add_parser("lemma", help="run one lemma validator")
    m.add_argument("which", choices=(
        "completeness", "conditioning", "prob-bounds", "extract-is",
        "dichotomy", "stitch-soundness", "marginals",
    ))
    m.add_argument("--graph")
    m.add_argument("--game")
    m.add_argument("--enum-game")
    m.add_argument("--dist")
    m.add_argument("--set")
    m.add_argument("--gamma", type=float)
    m.add_argument("--k", type=float)
    m.add_argument("--T", type=int, default=1)
    m.add_argument("--t", type=int, default=0)
    m.add_argument("--eps-prime", type=float)
    m.add_argument("--constant", type=float, default=7.0)
    m.add_argument("--no-assume-soshard", action="store_true")
    m.add_argument("--kind", choices=("low", "genmatch", "high"))
    m.add_argument("--out")
    m.set_defaults(func=cmd_lemma)

    return p


def run_command(argv) -> int:
    """Parse and dispatch; returns the process exit code."""
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ValueError, KeyError, OSError, ZeroDivisionError) as exc:
        log.error("%s", exc)
        sys.stderr.write(f"error: {exc}\n")
        return 1


def main() -> None:
    raise SystemExit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
