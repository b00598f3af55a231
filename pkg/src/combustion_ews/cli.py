"""Command-line pipeline: synth, features, label, train, evaluate, predict.

Every subcommand reads an optional YAML config (section named after the
subcommand, validated against a key schema before any data is touched) with
command-line flags taking precedence, and embeds the resolved parameters as a
provenance block in its output artifacts.

Exit codes: 0 success, 2 validation error, 3 runtime/data error.
"""

from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np
import yaml

from . import __version__
from .dfa import OPERATING_SCALE_RANGE, hurst_exponent
from .embedding import DegenerateSignalError, EmbeddingConfig
from .evaluation import (
    DEFAULT_FPR_BUDGETS,
    EvalReport,
    SearchSpace,
    alarmed_events,
    baseline_table,
    f_score,
    permutation_importance,
    random_search,
    roc_curve,
    run_scores,
    train_on_runs,
    write_trace_csv,
)
from .features import (
    StreamingFeatureAssembler,
    assemble_features,
    read_feature_csv,
    sweep_measures,
    write_feature_csv,
)
from .labeling import (
    LabeledRun,
    detect_intervals,
    label_features,
    read_intervals_jsonl,
    read_label_csv,
    write_intervals_jsonl,
    write_label_csv,
)
from .rqa import RecurrenceConfig, rqa_measures_from_window
from .signal import FilterSpec, RunFormatError, TimeSeries, high_pass, load_run, peak_to_peak_envelope
from .svm import ModelFormatError, SvmParams, load_model, save_model
from .synth import SynthConfig, generate_campaign

EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

ENVELOPE_WINDOW_S = 0.025

# Allowed config keys per subcommand. Unknown keys are rejected up front.
CONFIG_SCHEMA = {
    "synth": {"seed", "n_runs", "duration_s", "n_train", "events_per_run",
              "sample_rate", "p_cc", "f0_hz", "noise_level"},
    "features": {"window_s", "stride_s", "trend_span_s", "delay", "dimension",
                 "epsilon", "decimation", "theiler", "cutoff_hz", "filter_order",
                 "measure", "jobs"},
    "label": {"lead_s", "hold_s", "thr1", "thr2", "cutoff_hz", "filter_order"},
    "train": {"n_samples", "seed", "c_min", "c_max", "gamma_min", "gamma_max", "tol"},
    "evaluate": {"fpr_budgets", "importance_repeats", "seed"},
    "predict": {"threshold", "window_s", "stride_s", "trend_span_s", "delay",
                "dimension", "epsilon", "decimation", "theiler", "cutoff_hz",
                "filter_order", "pad_s"},
}


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_config(path, section: str) -> dict:
    if path is None:
        return {}
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        _fail(EXIT_VALIDATION, f"cannot read config: {exc}")
    except yaml.YAMLError as exc:
        _fail(EXIT_VALIDATION, f"malformed config: {exc}")
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        _fail(EXIT_VALIDATION, "config root must be a mapping")
    unknown_sections = set(doc) - set(CONFIG_SCHEMA)
    if unknown_sections:
        _fail(EXIT_VALIDATION, f"unknown config section {sorted(unknown_sections)[0]!r}")
    sec = doc.get(section) or {}
    if not isinstance(sec, dict):
        _fail(EXIT_VALIDATION, f"config section {section!r} must be a mapping")
    unknown = set(sec) - CONFIG_SCHEMA[section]
    if unknown:
        _fail(EXIT_VALIDATION, f"unknown config key {sorted(unknown)[0]!r} in section {section!r}")
    return sec


def _resolve(cfg: dict, key: str, flag_value, default):
    """Precedence: explicit flag > config file > default."""
    if flag_value is not None:
        return flag_value
    if key in cfg:
        return cfg[key]
    return default


def _jobs(flag_value) -> int:
    if flag_value is not None:
        return max(1, int(flag_value))
    env = os.environ.get("COMBUSTION_EWS_JOBS")
    return max(1, int(env)) if env else 1


@click.group()
@click.version_option(version=__version__)
def main():
    """Early-warning detection of combustion instabilities from dynamic
    pressure data."""


@main.command()
@click.option("--config", type=click.Path(), default=None, help="YAML config file.")
@click.option("--out", "out_dir", type=click.Path(), required=True, help="Output directory.")
@click.option("--seed", type=int, default=None)
@click.option("--n-runs", type=int, default=None)
@click.option("--duration-s", type=float, default=None)
def synth(config, out_dir, seed, n_runs, duration_s):
    """Generate a synthetic campaign of pressure runs plus a manifest."""
    cfg = _load_config(config, "synth")
    seed = int(_resolve(cfg, "seed", seed, 0))
    n_runs = int(_resolve(cfg, "n_runs", n_runs, 10))
    duration_s = float(_resolve(cfg, "duration_s", duration_s, 8.0))
    n_train = int(cfg.get("n_train", 6))
    events_per_run = int(cfg.get("events_per_run", 2))
    try:
        template = SynthConfig(
            seed=0,
            duration_s=duration_s,
            sample_rate=float(cfg.get("sample_rate", 100_000.0)),
            p_cc=float(cfg.get("p_cc", 80.0)),
            f0_hz=float(cfg.get("f0_hz", 10_000.0)),
            noise_level=float(cfg.get("noise_level", 0.5)),
        )
    except ValueError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    try:
        manifest = generate_campaign(
            out_dir, n_runs=n_runs, seed=seed, duration_s=duration_s,
            n_train=n_train, events_per_run=events_per_run, template=template,
        )
    except ValueError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except RuntimeError as exc:
        _fail(EXIT_RUNTIME, str(exc))
    click.echo(f"wrote {len(manifest)} runs to {out_dir}")


def _feature_params(cfg: dict) -> dict:
    return {
        "window_s": float(cfg.get("window_s", 0.2)),
        "stride_s": float(cfg.get("stride_s", 0.01)),
        "trend_span_s": float(cfg.get("trend_span_s", 0.1)),
        "delay": int(cfg.get("delay", 2)),
        "dimension": int(cfg.get("dimension", 15)),
        "epsilon": float(cfg.get("epsilon", 3.0)),
        "decimation": int(cfg.get("decimation", 4)),
        "theiler": int(cfg.get("theiler", 0)),
        "cutoff_hz": float(cfg.get("cutoff_hz", 1000.0)),
        "filter_order": int(cfg.get("filter_order", 4)),
    }


def _extract_one(args):
    run_path, out_path, params, measure = args
    series, meta = load_run(run_path)
    filtered = high_pass(series, FilterSpec(params["cutoff_hz"], params["filter_order"]))
    embed_cfg = EmbeddingConfig(delay_samples=params["delay"], dimension=params["dimension"])
    rqa_cfg = RecurrenceConfig(
        epsilon=params["epsilon"], theiler_window=params["theiler"],
        decimation=params["decimation"],
    )
    measures = sweep_measures(filtered, embed_cfg, rqa_cfg,
                              window_s=params["window_s"], stride_s=params["stride_s"])
    fseries = assemble_features(measures, span_s=params["trend_span_s"],
                                run_id=meta.run_id, stride_s=params["stride_s"])
    extra = None
    if measure == "hurst":
        scale_min, scale_max = OPERATING_SCALE_RANGE
        h_window = int(2 * scale_max)
        h = np.full(len(fseries), np.nan)
        x = filtered.samples
        fs = filtered.sample_rate
        for i, t in enumerate(fseries.t):
            end = int(round((t - filtered.start_time) * fs))
            if end >= h_window:
                try:
                    h[i] = hurst_exponent(x[end - h_window:end], scale_min, scale_max).h
                except (ValueError, DegenerateSignalError):
                    pass
        extra = {"hurst": h}
    write_feature_csv(fseries, out_path, extra=extra)
    return meta.run_id, len(fseries)


@main.command()
@click.option("--config", type=click.Path(), default=None)
@click.option("--runs", "run_paths", type=click.Path(), multiple=True, required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--measure", type=click.Choice(["rqa", "hurst"]), default=None,
              help="'hurst' appends an H column computed over trailing windows.")
@click.option("--jobs", type=int, default=None, help="Worker processes across runs.")
def features(config, run_paths, out_dir, measure, jobs):
    """Extract windowed recurrence features (and trends) from run files."""
    cfg = _load_config(config, "features")
    params = _feature_params(cfg)
    measure = _resolve(cfg, "measure", measure, "rqa")
    n_jobs = _jobs(_resolve(cfg, "jobs", jobs, None))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = []
    for rp in run_paths:
        if not Path(rp).exists():
            _fail(EXIT_RUNTIME, f"run file not found: {rp}")
        tasks.append((rp, out_dir / (Path(rp).stem + ".features.csv"), params, measure))
    try:
        if n_jobs > 1:
            with ProcessPoolExecutor(max_workers=n_jobs) as pool:
                results = list(pool.map(_extract_one, tasks))
        else:
            results = [_extract_one(t) for t in tasks]
    except (RunFormatError, ValueError) as exc:
        _fail(EXIT_RUNTIME, str(exc))
    for run_id, n in results:
        click.echo(f"{run_id}: {n} feature vectors")


@main.command()
@click.option("--config", type=click.Path(), default=None)
@click.option("--runs", "run_paths", type=click.Path(), multiple=True, required=True)
@click.option("--features-dir", type=click.Path(), required=True,
              help="Directory with <run>.features.csv files to align labels with.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
def label(config, run_paths, features_dir, out_dir):
    """Detect instability intervals from the envelope and label feature rows."""
    cfg = _load_config(config, "label")
    lead_s = float(cfg.get("lead_s", 0.2))
    hold_s = float(cfg.get("hold_s", 0.5))
    thr1 = float(cfg.get("thr1", 6.25))
    thr2 = float(cfg.get("thr2", 20.0))
    spec = FilterSpec(float(cfg.get("cutoff_hz", 1000.0)), int(cfg.get("filter_order", 4)))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    all_intervals = []
    for rp in run_paths:
        if not Path(rp).exists():
            _fail(EXIT_RUNTIME, f"run file not found: {rp}")
        fpath = Path(features_dir) / (Path(rp).stem + ".features.csv")
        if not fpath.exists():
            _fail(EXIT_RUNTIME, f"feature file not found: {fpath}")
        try:
            series, meta = load_run(rp)
            fseries = read_feature_csv(fpath)
            filtered = high_pass(series, spec)
            env = peak_to_peak_envelope(filtered, ENVELOPE_WINDOW_S,
                                        meta.mean_chamber_pressure)
            intervals = detect_intervals(env, thr1=thr1, thr2=thr2, hold_s=hold_s)
            run = label_features(fseries, intervals, lead_s=lead_s, run_id=meta.run_id)
        except (RunFormatError, ValueError) as exc:
            _fail(EXIT_RUNTIME, str(exc))
        write_label_csv(run, out_dir / (Path(rp).stem + ".labels.csv"))
        all_intervals.extend(
            {"run_id": meta.run_id, "onset_s": iv.onset_s, "offset_s": iv.offset_s,
             "kind": iv.kind}
            for iv in intervals
        )
        click.echo(f"{meta.run_id}: {len(intervals)} interval(s), counts {run.counts}")
    with open(out_dir / "intervals.jsonl", "w") as fh:
        for rec in all_intervals:
            fh.write(json.dumps(rec) + "\n")


def _load_labeled_runs(feature_paths, labels_dir, intervals_by_run) -> list[LabeledRun]:
    runs = []
    for fp in feature_paths:
        fp = Path(fp)
        fseries = read_feature_csv(fp)
        stem = fp.name.replace(".features.csv", "")
        lpath = Path(labels_dir) / (stem + ".labels.csv")
        if not lpath.exists():
            _fail(EXIT_RUNTIME, f"label file not found: {lpath}")
        lt, labels = read_label_csv(lpath)
        if len(lt) != len(fseries) or (len(lt) and not np.allclose(lt, fseries.t)):
            _fail(EXIT_RUNTIME, f"labels misaligned with features for {fseries.run_id}")
        runs.append(
            LabeledRun(
                run_id=fseries.run_id,
                features=fseries,
                labels=labels,
                intervals=tuple(intervals_by_run.get(fseries.run_id, ())),
            )
        )
    return runs


@main.command()
@click.option("--config", type=click.Path(), default=None)
@click.option("--features", "feature_paths", type=click.Path(), multiple=True, required=True)
@click.option("--labels-dir", type=click.Path(), required=True)
@click.option("--model-out", type=click.Path(), required=True)
@click.option("--report-out", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--n-samples", type=int, default=None)
def train(config, feature_paths, labels_dir, model_out, report_out, seed, n_samples):
    """Random hyperparameter search with leave-one-run-out cross-validation,
    then fit the final model on all training runs."""
    cfg = _load_config(config, "train")
    seed = int(_resolve(cfg, "seed", seed, 0))
    n_samples = int(_resolve(cfg, "n_samples", n_samples, 60))
    space = SearchSpace(
        c_range=(float(cfg.get("c_min", 1e-2)), float(cfg.get("c_max", 1e2))),
        gamma_range=(float(cfg.get("gamma_min", 1e-2)), float(cfg.get("gamma_max", 1e1))),
        n_samples=n_samples,
        seed=seed,
    )
    tol = float(cfg.get("tol", 1e-3))
    runs = _load_labeled_runs(feature_paths, labels_dir, {})
    if len(runs) < 2:
        _fail(EXIT_VALIDATION, "cross-validation needs at least 2 runs")
    try:
        params, mean_f, records = random_search(runs, space, tol=tol)
        model = train_on_runs(runs, params, tol=tol)
    except (ValueError, RuntimeError) as exc:
        _fail(EXIT_RUNTIME, str(exc))
    save_model(model, model_out)
    best = max(records, key=lambda r: r["mean_f"])
    report = {
        "chosen_params": {"c": params.c, "gamma": params.gamma},
        "cv_mean_f": mean_f,
        "cv_fold_f": best["fold_f"],
        "search": records,
        "provenance": {"tool": "combustion-ews", "version": __version__,
                       "seed": seed, "n_samples": n_samples, "tol": tol,
                       "c_range": list(space.c_range),
                       "gamma_range": list(space.gamma_range),
                       "runs": [r.run_id for r in runs]},
    }
    if report_out:
        Path(report_out).write_text(json.dumps(report, indent=2))
    click.echo(f"chosen C={params.c:.4g} gamma={params.gamma:.4g} "
               f"(cv mean F={mean_f:.3f}); model -> {model_out}")


@main.command()
@click.option("--config", type=click.Path(), default=None)
@click.option("--model", "model_path", type=click.Path(), required=True)
@click.option("--features", "feature_paths", type=click.Path(), multiple=True, required=True)
@click.option("--labels-dir", type=click.Path(), required=True)
@click.option("--intervals", "intervals_path", type=click.Path(), default=None)
@click.option("--report-out", type=click.Path(), required=True)
@click.option("--trace-dir", type=click.Path(), default=None)
def evaluate(config, model_path, feature_paths, labels_dir, intervals_path,
             report_out, trace_dir):
    """Score a model on held-out runs: ROC, TPR at FPR budgets, permutation
    importances, per-event alarms and single-measure baselines."""
    cfg = _load_config(config, "evaluate")
    budgets = tuple(float(q) for q in cfg.get("fpr_budgets", DEFAULT_FPR_BUDGETS))
    repeats = int(cfg.get("importance_repeats", 5))
    seed = int(cfg.get("seed", 0))
    if not Path(model_path).exists():
        _fail(EXIT_RUNTIME, f"model file not found: {model_path}")
    try:
        model = load_model(model_path)
    except ModelFormatError as exc:
        _fail(EXIT_RUNTIME, str(exc))
    intervals_by_run = read_intervals_jsonl(intervals_path) if intervals_path else {}
    runs = _load_labeled_runs(feature_paths, labels_dir, intervals_by_run)
    hurst = {}
    for fp in feature_paths:
        h = _read_hurst_column(fp)
        if h is not None:
            hurst[read_feature_csv(fp).run_id] = h
    try:
        pooled_scores, pooled_y, per_run_f = [], [], {}
        scores_by_run = {}
        for run in runs:
            scores = run_scores(model, run)
            scores_by_run[run.run_id] = scores
            keep = run.labels != 0
            pooled_scores.append(scores[keep])
            pooled_y.append(run.labels[keep].astype(np.int64))
            per_run_f[run.run_id] = f_score(np.where(scores[keep] >= 0, 1, -1),
                                            run.labels[keep].astype(np.int64))
        scores_all = np.concatenate(pooled_scores)
        y_all = np.concatenate(pooled_y)
        roc = roc_curve(scores_all, y_all)
        tpr_map = {str(q): roc.tpr_at_fpr(q) for q in budgets}
        thr_map = {str(q): roc.threshold_at_fpr(q) for q in budgets}
        importances = permutation_importance(model, runs, n_repeats=repeats, seed=seed)
        baselines = baseline_table(runs, budgets, hurst=hurst or None)
        events = {}
        for run in runs:
            if run.intervals:
                thr = thr_map[str(budgets[-1])]
                events[run.run_id] = alarmed_events(
                    run.features.t, scores_by_run[run.run_id], run.intervals, thr)
    except ValueError as exc:
        _fail(EXIT_RUNTIME, str(exc))
    report = EvalReport(
        chosen_params={"c": model.params.c, "gamma": model.params.gamma},
        per_run_f=per_run_f,
        mean_f=float(np.mean(list(per_run_f.values()))),
        roc=roc,
        tpr_at_fpr=tpr_map,
        feature_importances=importances,
        baselines=baselines,
        events=events,
        provenance={"tool": "combustion-ews", "version": __version__,
                    "model": str(model_path), "fpr_budgets": list(budgets),
                    "thresholds": thr_map, "importance_repeats": repeats,
                    "seed": seed},
    )
    Path(report_out).write_text(report.to_json())
    if trace_dir:
        trace_dir = Path(trace_dir)
        trace_dir.mkdir(parents=True, exist_ok=True)
        thr = thr_map[str(budgets[-1])]
        for run in runs:
            env = np.full(len(run.features.t), np.nan)
            write_trace_csv(trace_dir / f"{run.run_id}.trace.csv", run.features.t,
                            scores_by_run[run.run_id], thr, env, run.labels)
    click.echo(f"AUC={roc.auc:.3f}  " +
               "  ".join(f"TPR@{q}={tpr_map[str(q)]:.3f}" for q in budgets))


def _read_hurst_column(path) -> np.ndarray | None:
    header = None
    values = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if header is None:
            header = line.split(",")
            if "hurst" not in header:
                return None
            idx = header.index("hurst")
            continue
        values.append(float(line.split(",")[idx]))
    return np.array(values) if header else None


def _read_stream_run(stream):
    """Run CSV from a file object; tolerates truncation mid-line."""
    sample_rate = None
    p_cc = None
    run_id = "stdin"
    samples = []
    for raw in stream:
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            key = key.strip()
            try:
                if key == "sample_rate":
                    sample_rate = float(value)
                elif key == "p_cc":
                    p_cc = float(value)
                elif key == "run_id":
                    run_id = value.strip()
            except ValueError:
                _fail(EXIT_RUNTIME, f"malformed header line: {line!r}")
            continue
        try:
            samples.append(float(line))
        except ValueError:
            break  # truncated final line: stop cleanly
    if sample_rate is None or p_cc is None:
        _fail(EXIT_RUNTIME, "stream is missing sample_rate / p_cc headers")
    return TimeSeries(np.array(samples), sample_rate=sample_rate, channel_id=run_id), p_cc


@main.command()
@click.option("--config", type=click.Path(), default=None)
@click.option("--model", "model_path", type=click.Path(), required=True)
@click.option("--run", "run_path", type=click.Path(), required=True,
              help="Run file, or '-' for CSV on standard input.")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Trace CSV destination (default: standard output).")
@click.option("--threshold", type=float, default=None)
def predict(config, model_path, run_path, out_path, threshold):
    """Causal early-warning trace for one run; each output row depends only on
    samples up to its timestamp."""
    cfg = _load_config(config, "predict")
    params = _feature_params(cfg)
    threshold = float(_resolve(cfg, "threshold", threshold, 0.0))
    pad_s = float(cfg.get("pad_s", 0.2))
    if not Path(model_path).exists():
        _fail(EXIT_RUNTIME, f"model file not found: {model_path}")
    try:
        model = load_model(model_path)
    except ModelFormatError as exc:
        _fail(EXIT_RUNTIME, str(exc))
    if run_path == "-":
        series, p_cc = _read_stream_run(sys.stdin)
    else:
        if not Path(run_path).exists():
            _fail(EXIT_RUNTIME, f"run file not found: {run_path}")
        try:
            series, meta = load_run(run_path)
        except RunFormatError as exc:
            _fail(EXIT_RUNTIME, str(exc))
        p_cc = meta.mean_chamber_pressure

    fs = series.sample_rate
    w = int(round(params["window_s"] * fs))
    st = max(1, int(round(params["stride_s"] * fs)))
    pad = int(round(pad_s * fs))
    spec = FilterSpec(params["cutoff_hz"], params["filter_order"])
    embed_cfg = EmbeddingConfig(delay_samples=params["delay"], dimension=params["dimension"])
    rqa_cfg = RecurrenceConfig(epsilon=params["epsilon"], theiler_window=params["theiler"],
                               decimation=params["decimation"])
    assembler = StreamingFeatureAssembler(params["trend_span_s"])
    rows = []
    alarms = []
    x = series.samples
    for end in range(w, len(x) + 1, st):
        t = series.start_time + end / fs
        chunk = x[max(0, end - w - pad):end]
        filtered = high_pass(TimeSeries(chunk, fs), spec).samples[-w:]
        try:
            measures = rqa_measures_from_window(filtered, embed_cfg, rqa_cfg)
        except DegenerateSignalError:
            measures = None
        fv = assembler.push(t, measures)
        if fv is None:
            continue
        vec = fv.values[None, :]
        if model.scaler is not None:
            vec = model.scaler.transform(vec)
        score = float(model.decision_function(vec)[0])
        env_pct = float(np.ptp(filtered) / p_cc * 100.0)
        alarm = score >= threshold
        if alarm and (not rows or not rows[-1][4]):
            alarms.append(t)
        rows.append((t, score, threshold, env_pct, alarm))

    lines = [f"# model={Path(model_path).name}", f"# threshold={threshold!r}",
             "t,decision_value,threshold,envelope_pct,alarm"]
    lines.extend(f"{t!r},{s!r},{thr!r},{e!r},{int(a)}" for t, s, thr, e, a in rows)
    lines.extend(f"# alarm t={t!r}" for t in alarms)
    text = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(text)
    else:
        click.echo(text, nl=False)


if __name__ == "__main__":
    main()
