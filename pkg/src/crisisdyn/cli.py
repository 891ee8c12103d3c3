"""Command-line entry point: ``crisisdyn <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import re
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .collectivity import DEFAULT_WINDOW, collectivity_series, correlation_distribution, log_returns
from .distribution_align import align_and_cluster
from .diversification import SamplingConfig, greedy_path, marginal_means, mu_table
from .errors import ConfigError, CrisisDynError
from .market_data import SECTORS, find_crisis, load_crises, load_panel, slice_window, write_panel
from .portfolio_search import SearchConfig, crisis_allocation_matrix, run_search
from .synthetic_market import generate, load_spec

log = logging.getLogger("crisisdyn")

MANIFEST = "run_manifest.json"
# arguments that do not change any output byte
_NOT_HASHED = {"out", "threads", "figures", "verbose"}


def _fmt(x: float) -> str:
    return repr(float(x))


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_").lower()


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _threads(args) -> int:
    return args.threads if args.threads > 0 else (os.cpu_count() or 1)


def _panel(args):
    return load_panel(args.prices, args.sectors)


def _crises(args):
    return load_crises(args.crises)


def _selected(args, crises):
    return [find_crisis(crises, n) for n in args.crisis] if args.crisis else list(crises)


def _out(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {out}: {exc.strerror}") from None
    return out


# --------------------------------------------------------------------------- commands


def cmd_corrdist(args) -> list[Path]:
    panel, out = _panel(args), _out(args)
    written, samples = [], {}
    summary = []
    for c in _selected(args, _crises(args)):
        dist = correlation_distribution(panel, c)
        samples[c.name] = dist.sample
        written.append(_write_csv(out / f"corrdist_{_slug(c.name)}.csv", ["rho"], ([_fmt(x)] for x in dist.sample)))
        x = dist.sample
        summary.append([c.name, x.size, _fmt(x.mean()), _fmt(np.median(x)), _fmt(x.std(ddof=1) if x.size > 1 else 0.0)])
    written.append(_write_csv(out / "corrdist_summary.csv", ["crisis", "n", "mean", "median", "std"], summary))
    if args.figures:
        from .plotting import plot_correlation_distributions

        written.append(plot_correlation_distributions(samples, out / "corrdist.png"))
    return written


def cmd_collectivity(args) -> list[Path]:
    panel, out = _panel(args), _out(args)
    if args.crisis:
        panel = slice_window(panel, find_crisis(_crises(args), args.crisis[0]))
    series = collectivity_series(log_returns(panel), args.window, _threads(args))
    k = min(args.k, series.spectra.shape[1])
    rows = ([d.isoformat(), *(_fmt(v) for v in spec[:k])] for d, spec in zip(series.dates, series.spectra))
    written = [_write_csv(out / "collectivity.csv", ["t", *(f"lambda{i + 1}" for i in range(k))], rows)]
    if args.figures:
        from .plotting import plot_collectivity

        written.append(plot_collectivity(series.dates, series.spectra, out / "collectivity.png", k))
    return written


def cmd_divpath(args) -> list[Path]:
    panel, out = _panel(args), _out(args)
    crisis = find_crisis(_crises(args), args.crisis[0]) if args.crisis else None
    if crisis is not None:
        panel = slice_window(panel, crisis)
    config = SamplingConfig(
        w_range=tuple(range(args.w_min, args.w_max + 1)),
        a_range=tuple(range(args.a_min, args.a_max + 1)),
        D=args.draws,
        S=args.window,
        seed=args.seed,
    )
    table = mu_table(panel, config, threads=_threads(args))
    path = greedy_path(table, tie=args.tie)
    mu_w, mu_a = marginal_means(table)

    rows = ([a, *(_fmt(v) for v in table.mu[i])] for i, a in enumerate(table.a_range))
    written = [_write_csv(out / "mu_table.csv", ["a\\w", *table.w_range], rows)]
    written.append(_write_csv(out / "greedy_path.csv", ["step", "w", "a", "mu"],
                              ([k, w, a, _fmt(m)] for k, (w, a, m) in enumerate(path.steps))))
    n = max(len(mu_w), len(mu_a))
    mrows = []
    for k in range(n):
        mrows.append([
            k,
            table.w_range[k] if k < len(mu_w) else "",
            _fmt(mu_w[k]) if k < len(mu_w) else "",
            table.a_range[k] if k < len(mu_a) else "",
            _fmt(mu_a[k]) if k < len(mu_a) else "",
        ])
    written.append(_write_csv(out / "marginals.csv", ["step", "w", "mu_w", "a", "mu_a"], mrows))
    if args.figures:
        from .plotting import plot_greedy_paths, plot_marginals, plot_mu_table

        title = crisis.name if crisis else ""
        written.append(plot_mu_table(table, path, out / "mu_table.png", title))
        written.append(plot_greedy_paths({title or "panel": path}, out / "greedy_path.png"))
        written.append(plot_marginals(mu_w, mu_a, out / "marginals.png", title))
    return written


def cmd_align(args) -> list[Path]:
    panel, out = _panel(args), _out(args)
    crises = _selected(args, _crises(args))
    res = align_and_cluster(panel, crises, args.reference, order=args.order, method=args.linkage, threads=_threads(args))
    written = [_write_csv(out / "operators.csv", ["crisis", "a", "b", "residual"],
                          ([c, _fmt(f.op.a), _fmt(f.op.b), _fmt(f.residual)] for c, f in res.operators.items()))]
    names = [f"{c} | {s}" for c, s in res.labels]
    written.append(_write_csv(out / "distmatrix.csv", ["label", *names],
                              ([nm, *(_fmt(v) for v in row)] for nm, row in zip(names, res.distances))))
    tree = {
        "linkage": args.linkage,
        "reference": args.reference,
        "omitted": [list(x) for x in res.omitted],
        "tree": res.dendrogram() if len(names) > 1 else None,
    }
    p = out / "dendrogram.json"
    p.write_text(json.dumps(tree, indent=1) + "\n", encoding="utf-8")
    written.append(p)
    if args.figures:
        from .plotting import plot_aligned

        written.append(plot_aligned(res, out / "aligned_clustering.png"))
    return written


def _search_config(args) -> SearchConfig:
    return SearchConfig(n_draws=args.draws, k=args.k, top_fraction=args.top_fraction,
                        risk_free=args.risk_free, seed=args.seed)


def cmd_search(args) -> list[Path]:
    panel, out = _panel(args), _out(args)
    if args.crisis:
        panel = slice_window(panel, find_crisis(_crises(args), args.crisis[0]))
    res = run_search(panel, _search_config(args), threads=_threads(args))
    written = [_write_csv(out / "allocation.csv", ["sector", "proportion"],
                          ([s, _fmt(p)] for s, p in zip(SECTORS, res.allocation.proportions)))]
    written.append(_write_csv(out / "top_portfolios.csv", ["rank", "sharpe", "draw", "tickers"],
                              ([r + 1, _fmt(s), int(d), " ".join(t)] for r, (s, d, t) in
                               enumerate(zip(res.sharpe, res.draw_index, res.ranked_tickers())))))
    if args.figures:
        from .plotting import plot_allocations
        from .portfolio_search import index_allocation

        written.append(plot_allocations({"top": res.allocation, "Index": index_allocation(panel)}, out / "allocation.png"))
    return written


def cmd_matrix(args) -> list[Path]:
    panel, out = _panel(args), _out(args)
    crises = _selected(args, _crises(args))
    m = crisis_allocation_matrix(panel, crises, _search_config(args), threads=_threads(args))
    written = [_write_csv(out / "allocation_distances.csv", ["label", *m.labels],
                          ([l, *(_fmt(v) for v in row)] for l, row in zip(m.labels, m.distances)))]
    written.append(_write_csv(out / "allocations.csv", ["sector", *m.labels],
                              ([s, *(_fmt(m.allocations[l].proportions[i]) for l in m.labels)]
                               for i, s in enumerate(SECTORS))))
    if args.figures:
        from .plotting import plot_allocation_matrix, plot_allocations

        written.append(plot_allocation_matrix(m, out / "allocation_distances.png"))
        written.append(plot_allocations(m.allocations, out / "allocations.png"))
    return written


def cmd_synth(args) -> list[Path]:
    parts = [p for p in args.out.split(",") if p]
    if len(parts) != 2:
        raise ConfigError("--out must be PRICES.csv,SECTORS.csv")
    spec = load_spec(args.spec)
    prices, sectors = (Path(p) for p in parts)
    for p in (prices, sectors):
        p.parent.mkdir(parents=True, exist_ok=True)
    write_panel(generate(spec), prices, sectors)
    return [prices, sectors]


# --------------------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser, *, window=False, crisis="one") -> None:
    p.add_argument("--prices", required=True, help="CSV with header date,ticker,close")
    p.add_argument("--sectors", required=True, help="CSV with header ticker,sector")
    p.add_argument("--crises", default=None, help="TOML with [[crisis]] name/start/end (default: bundled)")
    if crisis == "many":
        p.add_argument("--crisis", action="append", default=[], metavar="NAME",
                       help="restrict to this crisis; repeatable (default: all)")
    else:
        p.add_argument("--crisis", action="append", default=[], metavar="NAME", help="crisis window to analyse")
    if window:
        p.add_argument("--window", type=int, default=DEFAULT_WINDOW, help="rolling window S (default 60)")
    p.add_argument("--threads", type=int, default=1, help="worker threads, 0 = all cores")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--figures", action="store_true", help="also render PNG figures")


def _search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--draws", type=int, default=100_000, help="random portfolios (default 100000)")
    p.add_argument("--k", type=int, default=40, help="portfolio size (default 40)")
    p.add_argument("--top-fraction", type=float, default=0.01)
    p.add_argument("--risk-free", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)



def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crisisdyn", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corrdist", help="pairwise correlation samples per crisis")
    _common(p, crisis="many")
    p.set_defaults(func=cmd_corrdist)

    p = sub.add_parser("collectivity", help="normalized eigenvalue series of rolling correlations")
    _common(p, window=True)
    p.add_argument("--k", type=int, default=5, help="eigenvalues per row (default 5)")
    p.set_defaults(func=cmd_collectivity)

    p = sub.add_parser("divpath", help="mu_{w,a} grid, greedy path and marginals")
    _common(p, window=True)
    p.add_argument("--draws", type=int, default=1000, help="portfolios per (w, a) cell (default 1000)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--w-min", type=int, default=2)
    p.add_argument("--w-max", type=int, default=9)
    p.add_argument("--a-min", type=int, default=2)
    p.add_argument("--a-max", type=int, default=9)
    p.add_argument("--tie", choices=("w", "a"), default="w", help="coordinate to grow on equal mu")
    p.set_defaults(func=cmd_divpath)

    p = sub.add_parser("align", help="Wasserstein alignment to a reference crisis and clustering")
    _common(p, crisis="many")
    p.add_argument("--reference", default="GFC")
    p.add_argument("--order", type=int, choices=(1, 2), default=1)
    p.add_argument("--linkage", choices=("average", "complete"), default="average")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("search", help="random equal-weight portfolio search")
    _common(p)
    _search_flags(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("matrix", help="allocation distances across crises and the index")
    _common(p, crisis="many")
    _search_flags(p)
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("synth", help="write a synthetic factor-model panel")
    p.add_argument("--spec", required=True, help="TOML with FactorModelSpec fields")
    p.add_argument("--out", required=True, help="PRICES.csv,SECTORS.csv")
    p.set_defaults(func=cmd_synth, threads=1, figures=False)

    p = sub.add_parser("rerun", help="repeat a run from its run_manifest.json")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="override the output directory")
    p.set_defaults(func=None)
    return parser


def _hashable_args(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_HASHED and k != "func"}


def _write_manifest(args, written: list[Path]) -> Path:
    params = _hashable_args(args)
    config_hash = hashlib.sha256(json.dumps(params, sort_keys=True).encode()).hexdigest()
    doc = {
        "version": __version__,
        "command": args.command,
        "seed": getattr(args, "seed", None),
        "config_hash": config_hash,
        "args": {k: v for k, v in vars(args).items() if k != "func"},
        "outputs": [p.name for p in written],
    }
    if args.command == "synth":
        target = Path(str(args.out).split(",")[0]).parent
    else:
        target = Path(args.out)
    path = target / MANIFEST
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _absolutize(args) -> None:
    for key in ("prices", "sectors", "crises", "spec"):
        v = getattr(args, key, None)
        if v:
            setattr(args, key, str(Path(v).resolve()))


def _from_manifest(args) -> argparse.Namespace:
    try:
        doc = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        saved = doc["args"]
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"{args.manifest}: unreadable manifest ({exc})") from None
    ns = build_parser().parse_args([saved["command"], *_required_stub(saved)])
    for k, v in saved.items():
        setattr(ns, k, v)
    if args.out is not None:
        if ns.command == "synth":
            ns.out = ",".join(str(Path(args.out) / Path(p).name) for p in str(ns.out).split(","))
        else:
            ns.out = args.out
    return ns


def _required_stub(saved: dict) -> list[str]:
    if saved["command"] == "synth":
        return ["--spec", "x", "--out", "x"]
    return ["--prices", "x", "--sectors", "x"]


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    command = args.command
    try:
        if command == "rerun":
            args = _from_manifest(args)
            command = args.command
        _absolutize(args)
        written = args.func(args)
        _write_manifest(args, written)
    except CrisisDynError as exc:
        msg = " ".join(str(exc).split())
        print(f"crisisdyn {command}: error: {msg}", file=sys.stderr)
        return exc.exit_code
    for p in written:
        log.info("wrote %s", p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
