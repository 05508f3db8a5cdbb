"""Run reports: per-round JSON lines, a JSON summary and TSV series.

Files written per run directory:

``rounds.jsonl``
    one object per round: round, queried_count, round_max, cumulative_max,
    mean_topk, acceptance_rate, best_sequence.
``summary.json``
    seed, metrics, per-round cumulative-max series and the config echo,
    in a fixed key order.
``series.tsv``
    ``round<TAB>cumulative_max[<TAB>std]`` for plotting.

Nothing here embeds wall-clock times, so equal runs give equal bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

from .metrics import MetricsSummary

MEAN_FITNESS_NOTE = ("mean_fitness averages the top-K measured sequences; "
                     "mean_fitness_all averages every measured sequence")


class ReportError(OSError):
    pass


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ReportError(f"cannot write report file {path}: {exc}") from exc


def rounds_jsonl(records, alphabet) -> str:
    return "".join(json.dumps(r.log_fields(alphabet)) + "\n" for r in records)


def summary_document(summary: MetricsSummary, config_echo: dict, seed=None,
                     extra: Optional[dict] = None) -> dict:
    doc = {
        "seed": seed,
        "seeds": summary.seeds,
        "rounds": len(summary.per_round_max),
        "cumulative_max_fitness": summary.cumulative_max_fitness,
        "mean_fitness": summary.mean_fitness,
        "mean_fitness_all": summary.mean_fitness_all,
        "fdiv": summary.fdiv,
        "per_round_max": list(summary.per_round_max),
        "std": dict(summary.std),
        "note": MEAN_FITNESS_NOTE,
    }
    if extra:
        doc.update(extra)
    doc["config"] = dict(config_echo)
    return doc


def series_tsv(summary: MetricsSummary) -> str:
    std = summary.std.get("per_round_max")
    lines = ["round\tcumulative_max" + ("\tstd" if std else "")]
    for i, value in enumerate(summary.per_round_max, 1):
        row = f"{i}\t{value!r}"
        if std:
            row += f"\t{std[i - 1]!r}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def write_report(records, summary: MetricsSummary, path, alphabet, config_echo: dict,
                 seed=None, extra: Optional[dict] = None) -> Path:
    """Write the three report files into directory ``path``."""
    if not records:
        raise ValueError("no round records to report")
    out = Path(path)
    _write(out / "rounds.jsonl", rounds_jsonl(records, alphabet))
    _write(out / "summary.json",
           json.dumps(summary_document(summary, config_echo, seed, extra), indent=2) + "\n")
    _write(out / "series.tsv", series_tsv(summary))
    return out


def write_aggregate(path, summary: MetricsSummary, config_echo: dict, seeds) -> Path:
    out = Path(path)
    doc = summary_document(summary, config_echo, None, {"seed_list": list(seeds)})
    _write(out / "summary.json", json.dumps(doc, indent=2) + "\n")
    _write(out / "series.tsv", series_tsv(summary))
    return out


BENCH_COLUMNS = ["method", "K", "seeds",
                 "cummax_mean", "cummax_std", "meanfit_mean", "meanfit_std",
                 "fdiv_mean", "fdiv_std"]


def bench_rows(results: dict) -> list:
    """``results[(method, K)]`` is an aggregated MetricsSummary."""
    rows = []
    for (method, K), s in sorted(results.items()):
        rows.append([method, K, s.seeds,
                     s.cumulative_max_fitness, s.std["cumulative_max_fitness"],
                     s.mean_fitness, s.std["mean_fitness"],
                     s.fdiv, s.std["fdiv"]])
    return rows


def write_bench(path, results: dict) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    try:
        with (out / "bench.tsv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(BENCH_COLUMNS)
            w.writerows([[repr(v) if isinstance(v, float) else v for v in row]
                         for row in bench_rows(results)])
        with (out / "bench_curves.tsv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["method", "K", "round", "cummax_mean", "cummax_std"])
            for (method, K), s in sorted(results.items()):
                for r, (m, sd) in enumerate(zip(s.per_round_max, s.std["per_round_max"]), 1):
                    w.writerow([method, K, r, repr(m), repr(sd)])
    except OSError as exc:
        raise ReportError(f"cannot write benchmark table under {out}: {exc}") from exc
    return out


def format_bench_table(results: dict) -> str:
    lines = [f"{'method':<8} {'K':>4} {'max fit.':>16} {'mean fit.':>16} {'fDiv':>16}"]
    for row in bench_rows(results):
        method, K, _, cm, cs, mm, ms, fm, fs = row
        lines.append(f"{method:<8} {K:>4} {cm:>8.3f} ± {cs:<5.3f} {mm:>8.3f} ± {ms:<5.3f} "
                     f"{fm:>8.3f} ± {fs:<5.3f}")
    return "\n".join(lines)
