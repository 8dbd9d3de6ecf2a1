"""Command-line entry points and pipeline orchestration.

Subcommands: learn (fit the classifier), discover (hidden-class EM +
BIC-over-H), select (greedy variable selection), simulate (synthetic world),
evaluate (partition metrics) and study (replicated sweeps). Every run that
writes artifacts also appends one manifest record to ``manifests.jsonl`` in
the output directory. stdout carries a single machine-readable JSON summary;
diagnostics go to stderr (verbosity via the DAMDA_LOG environment variable).

Exit codes: 0 success, 2 input/parse error, 3 degenerate training data,
4 column-alignment failure, 5 model-fit failure, 6 invalid flag or config.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import discovery, edda, jsonio, report, simulate, studies, varsel

try:
    from importlib.metadata import version as _pkg_version
    TOOL_VERSION = _pkg_version("damda")
except Exception:  # pragma: no cover - not installed
    TOOL_VERSION = "0.1.0"

log = logging.getLogger("damda")

EXIT_INPUT = 2
EXIT_DEGENERATE = 3
EXIT_ALIGNMENT = 4
EXIT_FIT = 5
EXIT_CONFIG = 6


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _setup_logging() -> None:
    level = os.environ.get("DAMDA_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def write_manifest(out_dir, record: dict) -> None:
    path = Path(out_dir) / "manifests.jsonl"
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=False) + "\n")


def _execute(command: str, out_dir, inputs: dict, seed, overrides: dict, body):
    """Run a command body, then append exactly one manifest record."""
    t0 = time.monotonic()
    status = 0
    outputs: dict = {}
    try:
        outputs = body() or {}
    except CliError as exc:
        status = exc.code
        click.echo(f"error: {exc}", err=True)
    except Exception as exc:  # unexpected; still record the run
        status = 1
        click.echo(f"internal error: {exc}", err=True)
        log.exception("unhandled failure in %s", command)
    finally:
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            write_manifest(out_dir, {
                "command": command,
                "inputs": {k: str(v) for k, v in inputs.items()},
                "outputs": {k: str(v) for k, v in outputs.items()},
                "seed": seed,
                "config_overrides": overrides,
                "tool_version": TOOL_VERSION,
                "wall_clock_s": round(time.monotonic() - t0, 6),
                "exit_status": status,
            })
    if status:
        sys.exit(status)


# ---------------------------------------------------------------------------
# Input parsing helpers
# ---------------------------------------------------------------------------

def read_table(path, label_column: str | None = None):
    """Read a header CSV into (names, float matrix, labels-or-None).

    Parse failures report the 1-based line number.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise CliError(EXIT_INPUT, f"{path}: empty file (no header row)")
            rows = list(reader)
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"{path}: {exc}")
    header = [h.strip() for h in header]
    label_idx = None
    if label_column is not None:
        if label_column not in header:
            raise CliError(EXIT_INPUT,
                           f"{path}: labels column {label_column!r} not in header")
        label_idx = header.index(label_column)
    names = [h for j, h in enumerate(header) if j != label_idx]
    data = np.empty((len(rows), len(names)))
    labels = [] if label_idx is not None else None
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise CliError(EXIT_INPUT,
                           f"{path}: line {i + 2}: expected {len(header)} fields, "
                           f"got {len(row)}")
        k = 0
        for j, cell in enumerate(row):
            if j == label_idx:
                labels.append(cell)
                continue
            try:
                data[i, k] = float(cell)
            except ValueError:
                raise CliError(EXIT_INPUT,
                               f"{path}: line {i + 2}: cannot parse {cell!r} "
                               f"as a number (column {header[j]!r})")
            k += 1
    return names, data, (np.asarray(labels) if labels is not None else None)


def read_label_column(path, column: str | None):
    """Labels from a CSV (named column, else map_class, else last column).

    A `.json` path is treated as a world sidecar and read via its
    `labels_test` field.
    """
    if str(path).lower().endswith(".json"):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
            return np.asarray([str(v) for v in doc["labels_test"]])
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise CliError(EXIT_INPUT, f"{path}: cannot read labels_test: {exc}")
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise CliError(EXIT_INPUT, f"{path}: empty file (no header row)")
            rows = list(reader)
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"{path}: {exc}")
    header = [h.strip() for h in header]
    if column is not None:
        if column not in header:
            raise CliError(EXIT_INPUT, f"{path}: column {column!r} not in header")
        idx = header.index(column)
    elif "map_class" in header:
        idx = header.index("map_class")
    elif "label" in header:
        idx = header.index("label")
    else:
        idx = len(header) - 1
    return np.asarray([row[idx] for row in rows])


def parse_h_range(text: str) -> tuple:
    text = text.strip()
    try:
        if "," in text:
            values = sorted({int(v) for v in text.split(",")})
        elif "-" in text[1:]:
            lo, hi = text.split("-", 1)
            values = list(range(int(lo), int(hi) + 1))
        else:
            values = [int(text)]
    except ValueError:
        raise CliError(EXIT_CONFIG, f"cannot parse H range {text!r}; use e.g. 0-4")
    if not values or min(values) < 0:
        raise CliError(EXIT_CONFIG, f"H range {text!r} must be nonempty and >= 0")
    return tuple(values)


def _align_columns(model: edda.EddaModel, names: list[str], data: np.ndarray):
    """Reorder test columns: trained variables first (model order), rest by name."""
    missing = [v for v in model.variable_names if v not in names]
    if missing:
        raise CliError(EXIT_ALIGNMENT,
                       f"test data is missing trained columns: {', '.join(missing)}")
    extra = sorted(v for v in names if v not in set(model.variable_names))
    order = list(model.variable_names) + extra
    cols = [names.index(v) for v in order]
    return order, data[:, cols]


def _load_model(path) -> edda.EddaModel:
    try:
        return edda.load_model(path)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise CliError(EXIT_INPUT, f"{path}: cannot load model: {exc}")


def _read_run_config(path) -> dict:
    path = Path(path)
    try:
        if path.suffix.lower() == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"{path}: {exc}")
    except Exception as exc:
        raise CliError(EXIT_CONFIG, f"{path}: invalid config: {exc}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

@click.group()
@click.version_option(TOOL_VERSION, prog_name="damda")
def main():
    """Adaptive Gaussian classification with hidden-class discovery."""
    _setup_logging()


@main.command()
@click.option("--train", "train_csv", required=True, type=click.Path(), help="Training CSV with a header row.")
@click.option("--labels", "labels_column", required=True, help="Name of the class-label column.")
@click.option("--structures", default=",".join(edda.STRUCTURES), show_default=True,
              help="Comma-separated covariance structures to try.")
@click.option("--out", "out_model", required=True, type=click.Path(), help="Output model JSON path.")
def learn(train_csv, labels_column, structures, out_model):
    """Fit the classifier on labelled data and pick the structure by BIC."""
    out_model = Path(out_model)
    out_dir = out_model.parent if str(out_model.parent) else Path(".")

    def body():
        tags = tuple(s.strip().upper() for s in structures.split(",") if s.strip())
        for tag in tags:
            if tag not in edda.STRUCTURES:
                raise CliError(EXIT_CONFIG, f"unknown structure {tag!r}; "
                                            f"choose from {', '.join(edda.STRUCTURES)}")
        names, data, labels = read_table(train_csv, label_column=labels_column)
        if labels is None or len(set(labels.tolist())) < 2:
            raise CliError(EXIT_INPUT, "training data must contain at least 2 classes")
        try:
            model = edda.fit_edda(data, labels, structures=tags, variable_names=names)
        except edda.DegenerateClassError as exc:
            raise CliError(EXIT_DEGENERATE, str(exc))
        except edda.SingularFitError as exc:
            raise CliError(EXIT_DEGENERATE, str(exc))
        edda.save_model(model, out_model)
        click.echo(json.dumps({"structure": model.structure, "bic": model.bic,
                               "K": model.K, "P": model.P}))
        return {"model": out_model}

    _execute("learn", out_dir, {"train": train_csv}, None,
             {"structures": structures, "labels": labels_column}, body)


@main.command()
@click.option("--model", "model_json", required=True, type=click.Path(), help="Learned model JSON.")
@click.option("--test", "test_csv", required=True, type=click.Path(), help="Unlabelled test CSV.")
@click.option("--h-range", default="0-4", show_default=True, help="Hidden-class counts to try, e.g. 0-4 or 0,2.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Output directory.")
@click.option("--figures/--no-figures", default=True, show_default=True)
def discover(model_json, test_csv, h_range, seed, out_dir, figures):
    """Search the test data for hidden classes and classify every row."""
    out = Path(out_dir)

    def body():
        model = _load_model(model_json)
        names, data, _ = read_table(test_csv)
        hs = parse_h_range(h_range)
        _, y = _align_columns(model, names, data)
        fits, errors = discovery.fit_h_range(y, model, hs, seed=seed)
        if not fits:
            detail = "; ".join(f"H={h}: {e}" for h, e in errors.items())
            raise CliError(EXIT_FIT, f"every hidden-class fit failed: {detail}")
        best_h = max(fits, key=lambda h: (fits[h].bic, -h))
        best = fits[best_h]

        out.mkdir(parents=True, exist_ok=True)
        model_path = out / "damda_model.json"
        assign_path = out / "assignments.csv"
        bic_path = out / "bic_by_h.csv"
        discovery.save_model(best, model_path)
        t = discovery.e_step(y, best)
        discovery.write_assignments_csv(assign_path, t, best.K, best.H)
        bic_rows = []
        for h in hs:
            if h in fits:
                bic_rows.append({"H": h, "loglik": fits[h].loglik,
                                 "bic": fits[h].bic, "status": "ok"})
            else:
                bic_rows.append({"H": h, "loglik": None, "bic": None,
                                 "status": f"failed: {errors[h]}"})
        with open(bic_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["H", "loglik", "bic", "status"])
            for row in bic_rows:
                writer.writerow([row["H"],
                                 "" if row["loglik"] is None else repr(row["loglik"]),
                                 "" if row["bic"] is None else repr(row["bic"]),
                                 row["status"]])
        outputs = {"model": model_path, "assignments": assign_path, "bic_by_h": bic_path}
        if figures:
            fig_path = out / "bic_by_h.png"
            report.render_bic_by_h(bic_rows, fig_path)
            outputs["figure"] = fig_path
        click.echo(json.dumps({"H": best.H, "bic": best.bic, "loglik": best.loglik}))
        return outputs

    _execute("discover", out, {"model": model_json, "test": test_csv}, seed,
             {"h_range": h_range}, body)


@main.command()
@click.option("--model", "model_json", required=True, type=click.Path(), help="Learned model JSON.")
@click.option("--test", "test_csv", required=True, type=click.Path(), help="Unlabelled test CSV.")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON/TOML with search settings (s, g, h_range, max_steps).")
@click.option("--h-range", default=None, help="Override the hidden-class range.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Output directory.")
@click.option("--figures/--no-figures", default=True, show_default=True)
def select(model_json, test_csv, config_path, h_range, seed, out_dir, figures):
    """Greedy BIC-driven variable selection around the discovery model."""
    out = Path(out_dir)

    def body():
        model = _load_model(model_json)
        names, data, _ = read_table(test_csv)
        missing = [v for v in model.variable_names if v not in names]
        if missing:
            raise CliError(EXIT_ALIGNMENT,
                           f"test data is missing trained columns: {', '.join(missing)}")
        doc = _read_run_config(config_path) if config_path else {}
        hs = parse_h_range(h_range) if h_range else tuple(doc.get("h_range", (0, 1, 2, 3)))
        config = varsel.SearchConfig(
            s=int(doc.get("s", 10)),
            g=doc.get("g"),
            h_range=hs,
            max_steps=int(doc.get("max_steps", 20)),
            seed=seed)
        try:
            result = varsel.greedy_search(model, data, names, config)
        except (varsel.SelectionError, discovery.EmError) as exc:
            raise CliError(EXIT_FIT, str(exc))

        out.mkdir(parents=True, exist_ok=True)
        json_path = out / "selection.json"
        csv_path = out / "selection.csv"
        jsonio.dump(varsel.selection_report(result), json_path)
        selected = set(result.selected)
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["variable", "provenance", "selected"])
            for v in names:
                writer.writerow([v, result.state.provenance[v], int(v in selected)])
        outputs = {"report": json_path, "variables": csv_path}
        if figures:
            fig_path = out / "selection_history.png"
            report.render_selection_history(result.state.history, fig_path)
            outputs["figure"] = fig_path
        click.echo(json.dumps({"selected": len(result.selected), "H": result.h,
                               "bic": result.bic}))
        return outputs

    _execute("select", out, {"model": model_json, "test": test_csv}, seed,
             {"config": config_path, "h_range": h_range}, body)


@main.command(name="simulate")
@click.option("--config", "config_path", required=True, type=click.Path(),
              help="Scenario JSON/TOML recipe.")
@click.option("--seed", default=None, type=int, help="Override the scenario seed.")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Output directory.")
def simulate_cmd(config_path, seed, out_dir):
    """Generate a synthetic train/test world from a scenario recipe."""
    out = Path(out_dir)

    def body():
        try:
            config = simulate.ScenarioConfig.from_file(config_path)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_INPUT, f"{config_path}: {exc}")
        except (TypeError, ValueError) as exc:
            raise CliError(EXIT_CONFIG, f"{config_path}: invalid scenario: {exc}")
        if seed is not None:
            config.seed = seed
        world = simulate.generate_world(config)
        paths = simulate.export_world(world, out)
        click.echo(json.dumps({"train_rows": world.x_train.shape[0],
                               "test_rows": world.y_test.shape[0],
                               "observed_vars": int(world.observed_in_training.sum()),
                               "total_vars": len(world.variable_names)}))
        return paths

    _execute("simulate", out, {"config": config_path}, seed, {}, body)


@main.command()
@click.option("--truth", "truth_csv", required=True, type=click.Path(), help="CSV with true labels.")
@click.option("--pred", "pred_csv", required=True, type=click.Path(), help="CSV with predicted labels.")
@click.option("--truth-column", default=None, help="Truth label column (default: label/last).")
@click.option("--pred-column", default=None, help="Prediction column (default: map_class/label/last).")
@click.option("--out", "out_dir", default=None, type=click.Path(),
              help="Optional directory for a metrics CSV + manifest.")
def evaluate(truth_csv, pred_csv, truth_column, pred_column, out_dir):
    """Adjusted Rand index and matched-class error between two labelings."""
    out = Path(out_dir) if out_dir else None

    def body():
        truth = read_label_column(truth_csv, truth_column)
        pred = read_label_column(pred_csv, pred_column)
        if truth.shape[0] != pred.shape[0]:
            raise CliError(EXIT_INPUT,
                           f"row counts differ: {truth.shape[0]} vs {pred.shape[0]}")
        score = simulate.ari(truth, pred)
        err = simulate.matched_error(truth, pred)
        click.echo(json.dumps({"ari": score, "error": err}))
        if out is None:
            return {}
        out.mkdir(parents=True, exist_ok=True)
        path = out / "metrics.csv"
        simulate.write_metrics_csv(path, [{
            "replicate": 0, "scenario": "evaluate", "method": "external",
            "ari": score, "error": err, "H_selected": "",
        }])
        return {"metrics": path}

    _execute("evaluate", out, {"truth": truth_csv, "pred": pred_csv}, None,
             {"truth_column": truth_column, "pred_column": pred_column}, body)


@main.command()
@click.option("--kind", type=click.Choice(["detection", "selection"]), required=True)
@click.option("--replicates", default=None, type=int, help="Override the replicate count.")
@click.option("--seed", default=None, type=int, help="Override the master seed.")
@click.option("--jobs", default=1, show_default=True, type=int,
              help="Parallel workers over independent replicates.")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Output directory.")
@click.option("--figures/--no-figures", default=True, show_default=True)
def study(kind, replicates, seed, jobs, out_dir, figures):
    """Run a replicated end-to-end study and write the metrics report."""
    out = Path(out_dir)

    def body():
        if kind == "detection":
            cfg = studies.DetectionStudyConfig()
            if replicates is not None:
                cfg.replicates = replicates
            if seed is not None:
                cfg.seed = seed
            rows = studies.detection_study(cfg, jobs=jobs)
            freq = None
        else:
            cfg = studies.SelectionStudyConfig()
            if replicates is not None:
                cfg.replicates = replicates
            if seed is not None:
                cfg.seed = seed
            rows = studies.selection_study(cfg, jobs=jobs)
            freq = studies.selection_frequencies(rows)

        out.mkdir(parents=True, exist_ok=True)
        metrics = studies.metrics_rows(rows)
        metrics_path = out / "metrics.csv"
        simulate.write_metrics_csv(metrics_path, metrics)
        outputs = {"metrics": metrics_path}
        if freq is not None:
            freq_path = out / "selection_frequencies.csv"
            with open(freq_path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.DictWriter(
                    fh, fieldnames=["variable", "role", "selected_count",
                                    "replicates", "frequency"],
                    lineterminator="\n")
                writer.writeheader()
                writer.writerows(freq)
            outputs["frequencies"] = freq_path
            if figures:
                freq_fig = out / "selection_frequencies.png"
                report.render_selection_frequencies(freq, freq_fig)
                outputs["frequencies_figure"] = freq_fig
        if figures:
            fig_path = out / "metrics.png"
            report.render_metrics(metrics, fig_path)
            outputs["figure"] = fig_path
        click.echo(json.dumps({
            "kind": kind,
            "replicates": len(rows),
            "mean_ari": float(np.mean([r["ari"] for r in metrics])),
            "h_selected": [r["H_selected"] for r in metrics],
        }))
        return outputs

    _execute("study", out, {"kind": kind}, seed, {"replicates": replicates,
                                                  "jobs": jobs}, body)


if __name__ == "__main__":
    main()
