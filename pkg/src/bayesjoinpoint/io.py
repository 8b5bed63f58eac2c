"""Reading series files and writing fit, baseline and study artifacts.

Every written file starts with a provenance line (tool version, seed,
flags): a ``#`` comment in CSV and text files, a ``provenance`` key in JSON
and an XML comment in SVG. Floats are written with ``repr`` so identical
runs give identical bytes.
"""
import csv
import json
import os
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import MalformedInputError
from .model import SeriesData

REQUIRED_COLUMNS = ("year", "deaths", "population")
OPTIONAL_COLUMNS = ("forecast_population",)


def provenance(command, seed=None, flags=None):
    parts = [f"bayesjoinpoint {__version__}", f"command={command}"]
    if seed is not None:
        parts.append(f"seed={seed}")
    if flags:
        parts.append("flags=" + " ".join(f"--{k}={v}" for k, v in flags.items()))
    return " ".join(parts)


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _parse_float(text, column, line):
    try:
        value = float(text)
    except ValueError:
        raise MalformedInputError(f"column {column!r}: not a number: {text!r}", line) from None
    if not np.isfinite(value):
        raise MalformedInputError(f"column {column!r}: non-finite value {text!r}", line)
    return value


def read_series_csv(path):
    """Read ``year,deaths,population[,forecast_population]`` rows.

    Lines starting with ``#`` are skipped. A row with an empty ``deaths``
    field is a forecast row: its population (``forecast_population`` if
    given, else ``population``) overrides the default for that year.

    Returns
    -------
    data : SeriesData
    forecast_populations : dict
        Year -> population for forecast rows.

    Raises
    ------
    MalformedInputError
        With the offending line number.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        lines = [(i + 1, row) for i, row in enumerate(fh)]
    body = [(no, row) for no, row in lines if row.strip() and not row.lstrip().startswith("#")]
    if not body:
        raise MalformedInputError("empty input file")
    header_no, header_row = body[0]
    header = [h.strip().lower() for h in next(csv.reader([header_row]))]
    for col in REQUIRED_COLUMNS:
        if col not in header:
            raise MalformedInputError(f"missing required column {col!r}", header_no)
    unknown = set(header) - set(REQUIRED_COLUMNS) - set(OPTIONAL_COLUMNS)
    if unknown:
        raise MalformedInputError(f"unknown columns {sorted(unknown)}", header_no)
    idx = {h: i for i, h in enumerate(header)}

    years, deaths, pops, forecast = [], [], [], {}
    for no, raw in body[1:]:
        row = next(csv.reader([raw]))
        if len(row) != len(header):
            raise MalformedInputError(f"expected {len(header)} fields, got {len(row)}", no)
        row = [f.strip() for f in row]
        year = _parse_float(row[idx["year"]], "year", no)
        if row[idx["deaths"]] == "":
            src = "forecast_population" if "forecast_population" in idx and row[idx["forecast_population"]] else "population"
            forecast[year] = _parse_float(row[idx[src]], src, no)
            if forecast[year] <= 0:
                raise MalformedInputError(f"column {src!r}: must be positive", no)
            continue
        d = _parse_float(row[idx["deaths"]], "deaths", no)
        if d < 0 or d != int(d):
            raise MalformedInputError("column 'deaths': must be a non-negative integer", no)
        p = _parse_float(row[idx["population"]], "population", no)
        if p <= 0:
            raise MalformedInputError("column 'population': must be positive", no)
        if years and year <= years[-1]:
            raise MalformedInputError("years must be strictly increasing", no)
        years.append(year)
        deaths.append(d)
        pops.append(p)
    if len(years) < 4:
        raise MalformedInputError(f"need at least 4 observed years, got {len(years)}")
    if forecast and min(forecast) <= years[-1]:
        raise MalformedInputError("forecast rows must follow the last observed year")
    return SeriesData.from_arrays(years, deaths, pops), forecast


def write_series_csv(path, data, header=None):
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REQUIRED_COLUMNS)
        for t, y, p in zip(data.times, data.counts, data.populations):
            w.writerow([_num(t), int(y), _num(p)])


def write_table(path, columns, rows, header=None):
    """CSV with a provenance comment line; rows are sequences or dicts."""
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                row = [row[c] for c in columns]
            w.writerow([_num(x) for x in row])


def write_draws(draws, out_dir, header=None):
    """One CSV per chain: iter, alpha, beta0, gamma, delta_j, tau_j, beta_j."""
    J = draws.jstar
    cols = (["iter", "alpha", "beta0", "gamma"]
            + [f"delta_{j + 1}" for j in range(J)]
            + [f"tau_{j + 1}" for j in range(J)]
            + [f"beta_{j + 1}" for j in range(J)])
    paths = []
    for c in range(draws.n_chains):
        rows = (
            [draws.iterations[d], draws.alpha[c, d], draws.beta0[c, d], draws.gamma[c, d],
             *draws.delta[c, d], *draws.tau[c, d], *draws.beta[c, d]]
            for d in range(draws.n_draws)
        )
        path = Path(out_dir) / f"draws_chain{c + 1}.csv"
        write_table(path, cols, rows, header)
        paths.append(path)
    return paths


def write_report(report, out_dir, header=None):
    """report.json plus the per-figure CSVs."""
    out = Path(out_dir)
    doc = {"provenance": header, **report.to_dict()}
    with open(out / "report.json", "w") as fh:
        json.dump(doc, fh, indent=2, allow_nan=False)
        fh.write("\n")

    write_table(out / "pmf.csv", ["joinpoints", "probability"],
                enumerate(report.pmf.tolist()), header)
    tr = report.trend
    cols = ["time", "forecast", "population", "rate_mean", "rate_lower", "rate_upper",
            "count_mean", "count_lower", "count_upper"]
    write_table(out / "trend.csv", cols, zip(*(tr[c] for c in cols)), header)
    write_table(out / "cumprob.csv", ["time", "probability"],
                zip(report.cumulative["time"], report.cumulative["probability"]), header)
    for k, cond in report.conditional.items():
        write_table(out / f"cond_tau_{k}.csv", [f"tau_{r + 1}" for r in range(k)],
                    cond.samples, header)
        write_table(out / f"cond_tau_{k}_hist.csv",
                    ["bin_lower", "bin_upper"] + [f"count_{r + 1}" for r in range(k)],
                    zip(cond.bin_edges[:-1], cond.bin_edges[1:], *cond.histograms), header)


def write_bic_table(path, selection, header=None):
    rows = []
    for J, ll, b, taus, chosen in selection.table():
        rows.append([J, ll, b, " ".join(_num(t) for t in taus), chosen])
    write_table(path, ["J", "loglik", "bic", "taus", "chosen"], rows, header)


def write_svg_plots(report, out_dir, header=None):
    """Line/bar plots of pmf, trend and cumulative curve; deterministic SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    paths = []
    with matplotlib.rc_context({"svg.hashsalt": "bayesjoinpoint", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.bar(np.arange(report.pmf.size), report.pmf, color="0.4")
        ax.set_xlabel("number of joinpoints")
        ax.set_ylabel("posterior probability")
        paths.append(_save_svg(fig, out / "pmf.svg", header))

        tr = report.trend
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.fill_between(tr["time"], tr["rate_lower"], tr["rate_upper"], color="0.85")
        ax.plot(tr["time"], tr["rate_mean"], color="k")
        if tr["forecast"].any():
            ax.axvline(tr["time"][~tr["forecast"]][-1], color="0.5", ls=":")
        ax.set_xlabel("time")
        ax.set_ylabel("rate per 100,000")
        paths.append(_save_svg(fig, out / "trend.svg", header))

        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.step(report.cumulative["time"], report.cumulative["probability"], where="post", color="k")
        ax.set_ylim(0, 1)
        ax.set_xlabel("time")
        ax.set_ylabel("P(change-point before t)")
        paths.append(_save_svg(fig, out / "cumprob.svg", header))
    return paths


def _save_svg(fig, path, header):
    import matplotlib.pyplot as plt

    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    if header:
        text = Path(path).read_text()
        head, sep, rest = text.partition("?>\n")
        Path(path).write_text(head + sep + f"<!-- {header} -->\n" + rest if sep else
                              f"<!-- {header} -->\n" + text)
    return path


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return Path(path)
