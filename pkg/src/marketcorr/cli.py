"""Command-line front end.

Exit codes: 0 success, 1 unexpected failure, 2 bad input (unreadable or
malformed files, bad arguments), 3 statistical degeneracy (empty panel,
constant series, too little data).

Settings come from, in increasing precedence: built-in defaults, a config
file given with ``--config`` (``key = value`` lines, ``#`` comments), and
command-line flags.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, csvio, diagnostics, synth, tails
from .correlation import correlation_function
from .exceptions import InputError, StatisticsError
from .marketdata import aggregate_ticks, align_panel, build_panel, compute_returns

EXIT_OK, EXIT_FAILURE, EXIT_INPUT, EXIT_DEGENERATE = 0, 1, 2, 3

DEFAULTS = {
    "input": [], "out": None, "format": None, "interval": "1h", "threshold": 3.0,
    "seed": 0, "calendar": None, "instruments": None, "window": None, "max_gap": None,
    "pair": None, "max_lag": 12, "lag": 1, "windows": "yearly", "count": None,
    "bucket": "month", "min_rows": 50, "instrument": None, "side": "both", "bins": 20,
    "range": None, "fit_range": None, "model": "paper", "length": 15000,
    "strength": 0.05, "roll_every": None, "ticks_per_bar": 4, "return_scale": 0.002,
    "start": "2009-02-01T00:00:00",
}

_INT_KEYS = {"seed", "max_lag", "lag", "count", "min_rows", "bins", "length",
             "roll_every", "ticks_per_bar"}
_FLOAT_KEYS = {"threshold", "strength", "return_scale"}


@dataclass
class RunConfig:
    command: str
    inputs: list = field(default_factory=list)
    instruments: list | None = None
    interval: str = "1h"
    max_lag: int = 12
    lag: int = 1
    window: tuple | None = None
    threshold: float = 3.0
    out: str | None = None
    format: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.instruments is not None and not self.instruments:
            raise InputError("instrument list is empty")
        if self.max_lag < 1 or self.lag < 0:
            raise InputError("lag range must be at least 1")
        if self.threshold < 0:
            raise InputError("threshold must be non-negative")

    def __getattr__(self, name):
        extra = self.__dict__.get("extra", {})
        if name in extra:
            return extra[name]
        raise AttributeError(name)


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; keys may use dashes or underscores."""
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(key, value):
    if value is None or not isinstance(value, str):
        return value
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except ValueError:
        raise InputError(f"bad value for {key}: {value!r}") from None
    if key == "input":
        return [v for v in value.replace(",", " ").split() if v]
    return value


def _split_pair(text, what):
    parts = [p.strip() for p in str(text).split(",")]
    if len(parts) != 2 or not all(parts):
        raise InputError(f"{what} must look like A,B; got {text!r}")
    return parts


def make_config(command, args: argparse.Namespace) -> RunConfig:
    settings = dict(DEFAULTS)
    given = vars(args)
    if given.get("config"):
        try:
            settings.update({k: _coerce(k, v) for k, v in read_config(given["config"]).items()})
        except OSError as exc:
            raise InputError(f"cannot read config: {exc}") from None
    settings.update({k: v for k, v in given.items() if k not in ("command", "config")})
    window = _split_pair(settings["window"], "--window") if settings["window"] else None
    instruments = settings.pop("instruments")
    if isinstance(instruments, str):
        instruments = [s.strip() for s in instruments.split(",") if s.strip()]
    core = {k: settings.pop(k) for k in ("interval", "max_lag", "lag", "threshold",
                                          "out", "format")}
    inputs = settings.pop("input") or []
    settings.pop("window")
    return RunConfig(command, list(inputs), instruments, window=window, extra=settings,
                     **core)


# -- shared loading ------------------------------------------------------------

def _calendar(cfg):
    return csvio.read_calendar_csv(cfg.calendar) if cfg.calendar else []


def _max_gap(cfg):
    return pd.Timedelta(cfg.max_gap).to_pytimedelta() if cfg.max_gap else None


def _load_bars(cfg):
    if not cfg.inputs:
        raise InputError("no --input files given")
    bars = []
    for p in cfg.inputs:
        bars += csvio.read_bars_csv(p)
    return bars


def _load_panel(cfg):
    return build_panel(_load_bars(cfg), _calendar(cfg), cfg.window, cfg.instruments,
                       _max_gap(cfg))


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _provenance(cfg, outputs):
    files = list(cfg.inputs) + ([cfg.calendar] if cfg.calendar else [])
    return {
        "tool": "marketcorr", "version": __version__, "command": cfg.command,
        "config": {k: v for k, v in asdict(cfg).items() if k != "extra"} | {
            k: v for k, v in cfg.extra.items() if v is not None},
        "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in files],
        "outputs": [str(o) for o in outputs],
    }


def _emit(cfg, text, default_name=None):
    """Write ``text`` to ``--out`` (plus a provenance sidecar) or stdout."""
    if cfg.out is None:
        sys.stdout.write(text)
        return
    out = Path(cfg.out)
    if out.is_dir() and default_name:
        out = out / default_name
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    sidecar = out.with_name(out.name + ".provenance.json")
    sidecar.write_text(json.dumps(_provenance(cfg, [out]), indent=2, default=str) + "\n")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, default=str) + "\n"


def _iso(ts):
    return diagnostics._window_label(ts)


# -- commands ------------------------------------------------------------------

def cmd_ingest(cfg) -> int:
    if not cfg.inputs:
        raise InputError("no --input tick files given")
    if cfg.out is None:
        raise InputError("ingest needs --out DIR")
    frames = [csvio.read_ticks_csv(p) for p in cfg.inputs]
    ticks = pd.concat(frames, ignore_index=True)
    bars = aggregate_ticks(ticks, pd.Timedelta(cfg.interval).to_pytimedelta())
    calendar = _calendar(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    by_inst = {}
    for b in bars:
        by_inst.setdefault(b.instrument_id, []).append(b)
    written, summary, series = [], {"instruments": {}}, []
    for inst in sorted(by_inst):
        path = out / f"bars_{inst}.csv"
        csvio.write_bars_csv(by_inst[inst], path)
        written.append(path)
        obs = compute_returns(by_inst[inst], calendar)
        kept = compute_returns(by_inst[inst], calendar, max_delta_t=_max_gap(cfg))
        summary["instruments"][inst] = {
            "bars": len(by_inst[inst]), "returns": len(obs),
            "rollover_flagged": sum(o.rollover_affected for o in obs),
            "dropped_by_gap": len(obs) - len(kept),
        }
        series.append(kept)
    try:
        panel = align_panel(series, cfg.window)
        summary["alignment"] = {"rows": panel.n_rows, "dropped_timestamps": panel.dropped_count}
    except StatisticsError as exc:
        summary["alignment"] = {"rows": 0, "error": str(exc)}
    (out / "provenance.json").write_text(_json(_provenance(cfg, written)))

    if cfg.format == "json":
        sys.stdout.write(_json(summary))
    else:
        lines = [f"{'instrument':<12}{'bars':>8}{'returns':>9}{'rollover':>10}{'gap':>6}"]
        for inst, s in summary["instruments"].items():
            lines.append(f"{inst:<12}{s['bars']:>8}{s['returns']:>9}"
                         f"{s['rollover_flagged']:>10}{s['dropped_by_gap']:>6}")
        a = summary["alignment"]
        lines.append(f"aligned rows: {a['rows']}, hours dropped by alignment: "
                     f"{a.get('dropped_timestamps', 'n/a')}")
        sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_corr(cfg) -> int:
    if not cfg.pair:
        raise InputError("corr needs --pair A,B")
    a, b = _split_pair(cfg.pair, "--pair")
    panel = _load_panel(cfg)
    try:
        f = correlation_function(panel, a, b, cfg.max_lag)
    except KeyError as exc:
        raise InputError(str(exc)) from None
    text = f.to_json() + "\n" if cfg.format == "json" else f.to_csv()
    _emit(cfg, text, f"corr_{a}_{b}.{'json' if cfg.format == 'json' else 'csv'}")
    return EXIT_OK


def _table_csv(entries):
    return csvio.rows_to_csv(
        ["leader", "follower", "lag", "significance", "coefficient", "sign_type"],
        [(e.leader_id, e.follower_id, e.lag, e.significance, e.coefficient, e.sign_type)
         for e in entries])


def cmd_table(cfg) -> int:
    panel = _load_panel(cfg)
    entries = diagnostics.leader_follower_table(panel, cfg.lag or 1, cfg.threshold)
    text = diagnostics.render_table(entries, panel.instrument_ids)
    if cfg.out is not None and (Path(cfg.out).is_dir() or cfg.format is None):
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "table.txt").write_text(text)
        (out / "table.csv").write_text(_table_csv(entries))
        (out / "table.provenance.json").write_text(
            _json(_provenance(cfg, [out / "table.txt", out / "table.csv"])))
        return EXIT_OK
    if cfg.format == "json":
        _emit(cfg, _json([asdict(e) for e in entries]))
    elif cfg.format == "csv":
        _emit(cfg, _table_csv(entries))
    else:
        _emit(cfg, text)
    return EXIT_OK


def _parse_windows(cfg, panel):
    spec = cfg.windows
    if spec == "yearly":
        return diagnostics.yearly_windows(panel, cfg.count)
    if spec in ("monthly", "month"):
        return diagnostics.calendar_windows(panel, "month")
    out = []
    for part in str(spec).split(";"):
        if not part.strip():
            continue
        lo, _, hi = part.partition("/")
        if not hi:
            raise InputError(f"window {part!r} must look like START/END")
        out.append((pd.Timestamp(lo.strip(), tz="UTC").to_pydatetime(),
                    pd.Timestamp(hi.strip(), tz="UTC").to_pydatetime()))
    return out


def cmd_history(cfg) -> int:
    if not cfg.pair:
        raise InputError("history needs --pair A,B")
    a, b = _split_pair(cfg.pair, "--pair")
    panel = _load_panel(cfg)
    try:
        hist = diagnostics.windowed_coefficient_history(
            panel, a, b, cfg.lag if cfg.lag else 1, _parse_windows(cfg, panel))
    except KeyError as exc:
        raise InputError(str(exc)) from None
    fit = hist.fit()
    if cfg.format == "json":
        text = _json({
            "pair": [hist.leader_id, hist.follower_id], "lag": hist.lag,
            "windows": [{"start": _iso(w[0]), "end": _iso(w[1]), "value": v,
                         "std_error": e, "pair_count": n}
                        for w, v, e, n in zip(hist.windows, hist.values, hist.errors,
                                              hist.pair_counts)],
            "fit": {"p0": fit.p0, "chi2": fit.chi2, "dof": fit.degrees_of_freedom,
                    "p_value": fit.p_value},
            "skipped": [[_iso(w[0]), _iso(w[1])] for w in hist.skipped],
        })
    else:
        text = csvio.rows_to_csv(
            ["window_start", "window_end", "value", "std_error", "pair_count"],
            [(_iso(w[0]), _iso(w[1]), v, e, n) for w, v, e, n in
             zip(hist.windows, hist.values, hist.errors, hist.pair_counts)])
        text += "\n" + csvio.rows_to_csv(["p0", "chi2", "dof", "p_value"],
                                         [(fit.p0, fit.chi2, fit.degrees_of_freedom,
                                           fit.p_value)])
    _emit(cfg, text, f"history_{a}_{b}.{'json' if cfg.format == 'json' else 'csv'}")
    return EXIT_OK


def cmd_cbpi(cfg) -> int:
    panel = _load_panel(cfg)
    lag = cfg.lag if cfg.lag else 1
    if cfg.bucket == "all":
        rep = diagnostics.cbpi(panel, lag)
        reports = [diagnostics.CbpiReport(
            (panel.timestamps[0], panel.timestamps[-1]), rep.cbpi, rep.cbpi0,
            rep.coefficient_count, rep.components, rep.mean_sigma, rep.row_count,
            rep.row_count < cfg.min_rows)]
    else:
        reports = diagnostics.cbpi_history(panel, cfg.bucket, lag, cfg.min_rows)
    if cfg.format == "json":
        text = _json([{"bucket_start": _iso(r.window[0]), "cbpi": r.cbpi, "cbpi0": r.cbpi0,
                       "coefficient_count": r.coefficient_count, "mean_sigma": r.mean_sigma,
                       "rows": r.row_count, "low_statistics": r.low_statistics,
                       "components": [{"i": c[0], "j": c[1], "abs_coefficient": c[2],
                                       "std_error": c[3]} for c in r.components]}
                      for r in reports])
    else:
        text = csvio.rows_to_csv(
            ["bucket_start", "cbpi", "cbpi0", "coefficient_count", "low_statistics"],
            [(_iso(r.window[0]), r.cbpi, r.cbpi0, r.coefficient_count, r.low_statistics)
             for r in reports])
    _emit(cfg, text, f"cbpi.{'json' if cfg.format == 'json' else 'csv'}")
    return EXIT_OK


def _float_pair(text, what):
    if text is None:
        return None
    lo, hi = _split_pair(text, what)
    try:
        return float(lo), float(hi)
    except ValueError:
        raise InputError(f"{what} must be two numbers") from None


def cmd_tails(cfg) -> int:
    if not cfg.instrument:
        raise InputError("tails needs --instrument")
    bars = [b for b in _load_bars(cfg) if b.instrument_id == cfg.instrument]
    if not bars:
        raise InputError(f"no bars for instrument {cfg.instrument!r}")
    obs = compute_returns(bars, _calendar(cfg), max_delta_t=_max_gap(cfg))
    x = np.array([o.log_return for o in obs if not o.rollover_affected])
    sides = ("positive", "negative") if cfg.side == "both" else (cfg.side,)
    bin_range = _float_pair(cfg.range, "--range")
    fit_range = _float_pair(cfg.fit_range, "--fit-range")
    hists, fits = [], []
    for side in sides:
        h = tails.tail_histogram(x, side, cfg.bins, bin_range)
        hists.append(h)
        fits.append(tails.fit_power_law(h, fit_range))
    if cfg.format == "json":
        text = _json({"instrument": cfg.instrument, "sample_count": int(x.size),
                      "sides": [{"side": h.side, "bins": h.to_rows(),
                                 "fit": f.to_dict(),
                                 "max_convergent_moment": tails.max_convergent_moment(f)}
                                for h, f in zip(hists, fits)]})
    else:
        rows = [tuple(r.values()) for h in hists for r in h.to_rows()]
        text = csvio.rows_to_csv(["side", "lower", "upper", "center", "count", "density",
                                  "density_error"], rows)
        text += "\n" + csvio.rows_to_csv(
            ["side", "p0", "p1", "p0_error", "p1_error", "chi2", "dof", "fit_min",
             "fit_max", "max_moment"],
            [(h.side, f.p0, f.p1, f.p0_error, f.p1_error, f.chi2, f.degrees_of_freedom,
              f.fit_range[0], f.fit_range[1], tails.max_convergent_moment(f))
             for h, f in zip(hists, fits)])
    _emit(cfg, text, f"tails_{cfg.instrument}.{'json' if cfg.format == 'json' else 'csv'}")
    return EXIT_OK


def _synth_model(cfg):
    if cfg.model == "paper":
        return synth.paper_like_model(cfg.strength, seed=cfg.seed)
    ids = tuple(cfg.instruments or synth.PAPER_INSTRUMENTS)
    if cfg.model == "white":
        return synth.VarModel.white_noise(len(ids), cfg.seed, ids)
    if cfg.model == "planted":
        if len(ids) < 2:
            raise InputError("planted model needs at least two instruments")
        return synth.planted_pair_model(len(ids), 0, 1, cfg.strength, cfg.seed, ids)
    raise InputError(f"unknown model {cfg.model!r}")


def cmd_synth(cfg) -> int:
    if cfg.out is None:
        raise InputError("synth needs --out DIR")
    model = _synth_model(cfg)
    step = pd.Timedelta(cfg.interval).to_pytimedelta()
    ts = synth.hourly_timestamps(cfg.length, cfg.start, step)
    panel = synth.generate_var(model, cfg.length, ts)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ticks, calendar = synth.panel_to_ticks(panel, cfg.return_scale, step=step,
                                           ticks_per_bar=cfg.ticks_per_bar,
                                           roll_every=cfg.roll_every, seed=cfg.seed + 1)
    csvio.write_ticks_csv(ticks, out / "ticks.csv")
    csvio.write_calendar_csv(calendar, out / "calendar.csv")
    keep = np.setdiff1d(np.arange(panel.n_rows), synth.rollover_rows(panel.n_rows,
                                                                     cfg.roll_every))
    ret = pd.DataFrame(panel.returns[keep] * cfg.return_scale,
                       columns=list(panel.instrument_ids))
    rows = [(s, *r) for s, r in zip(csvio.format_timestamps(
        panel.timestamps[keep].astype("datetime64[ns]")), ret.itertuples(index=False))]
    (out / "returns.csv").write_text(
        csvio.rows_to_csv(["timestamp", *panel.instrument_ids], rows))
    summary = {"model": cfg.model, "seed": cfg.seed, "rows": panel.n_rows,
               "ticks": len(ticks), "switches": len(calendar),
               "population_lag1": synth.population_lag1_matrix(model).tolist()}
    (out / "provenance.json").write_text(_json(_provenance(cfg, [
        out / "ticks.csv", out / "calendar.csv", out / "returns.csv"]) | {"synth": summary}))
    if cfg.format == "json":
        sys.stdout.write(_json(summary))
    else:
        sys.stdout.write(f"wrote {len(ticks)} ticks for {len(model.instrument_ids)} "
                         f"instruments, {panel.n_rows} bars each, {len(calendar)} "
                         f"contract switches to {out}\n")
    return EXIT_OK


COMMANDS = {"ingest": cmd_ingest, "corr": cmd_corr, "table": cmd_table,
            "history": cmd_history, "cbpi": cmd_cbpi, "tails": cmd_tails,
            "synth": cmd_synth}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--input", nargs="+", help="input CSV files")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--format", choices=["csv", "json", "text"])
    common.add_argument("--interval", help="bar length, e.g. 1h or 1d")
    common.add_argument("--threshold", type=float, help="significance threshold in sigmas")
    common.add_argument("--seed", type=int)
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--calendar", help="rollover calendar CSV")
    common.add_argument("--instruments", help="comma-separated instruments to align")
    common.add_argument("--window", help="START,END restricting return timestamps")
    common.add_argument("--max-gap", dest="max_gap",
                        help="drop returns spanning more than this, e.g. 3h")
    common.add_argument("--lag", type=int)

    parser = argparse.ArgumentParser(prog="marketcorr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", parents=[common], help="aggregate tick CSVs into bar CSVs")
    p = sub.add_parser("corr", parents=[common], help="lagged correlation function of a pair")
    p.add_argument("--pair", default=argparse.SUPPRESS)
    p.add_argument("--max-lag", dest="max_lag", type=int, default=argparse.SUPPRESS)
    sub.add_parser("table", parents=[common], help="leader-follower significance table")
    p = sub.add_parser("history", parents=[common], help="windowed coefficient history")
    p.add_argument("--pair", default=argparse.SUPPRESS)
    p.add_argument("--windows", default=argparse.SUPPRESS,
                   help="yearly, monthly, or START/END;START/END")
    p.add_argument("--count", type=int, default=argparse.SUPPRESS)
    p = sub.add_parser("cbpi", parents=[common], help="predictability index per bucket")
    p.add_argument("--bucket", choices=["month", "year", "day", "all"],
                   default=argparse.SUPPRESS)
    p.add_argument("--min-rows", dest="min_rows", type=int, default=argparse.SUPPRESS)
    p = sub.add_parser("tails", parents=[common], help="tail histogram and power-law fit")
    p.add_argument("--instrument", default=argparse.SUPPRESS)
    p.add_argument("--side", choices=["positive", "negative", "both"],
                   default=argparse.SUPPRESS)
    p.add_argument("--bins", type=int, default=argparse.SUPPRESS)
    p.add_argument("--range", default=argparse.SUPPRESS, help="LO,HI of |return|")
    p.add_argument("--fit-range", dest="fit_range", default=argparse.SUPPRESS)
    p = sub.add_parser("synth", parents=[common], help="write a synthetic tick data set")
    p.add_argument("--model", choices=["paper", "white", "planted"],
                   default=argparse.SUPPRESS)
    p.add_argument("--length", type=int, default=argparse.SUPPRESS)
    p.add_argument("--strength", type=float, default=argparse.SUPPRESS)
    p.add_argument("--roll-every", dest="roll_every", type=int, default=argparse.SUPPRESS)
    p.add_argument("--ticks-per-bar", dest="ticks_per_bar", type=int,
                   default=argparse.SUPPRESS)
    p.add_argument("--return-scale", dest="return_scale", type=float,
                   default=argparse.SUPPRESS)
    p.add_argument("--start", default=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args.command, args)
        return COMMANDS[args.command](cfg)
    except StatisticsError as exc:
        print(f"marketcorr: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (InputError, OSError) as exc:
        print(f"marketcorr: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        print(f"marketcorr: unexpected error: {exc!r}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
