"""Per-model metric reports, cross-model comparison, and training curves."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from . import metrics as M
from .metrics import ConfusionMatrix

REPORT_DECIMALS = 1  # rendered tables; CSV/JSON keep full doubles


def _fmt(value: float | None, decimals: int = REPORT_DECIMALS) -> str:
    return "n/a" if value is None else f"{value:.{decimals}f}"


@dataclass(frozen=True)
class MetricsReport:
    model_name: str
    split_name: str
    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    specificity: float | None
    cm: ConfusionMatrix
    normalized_cm: list

    def to_json_dict(self) -> dict:
        return {
            "model": self.model_name,
            "split": self.split_name,
            "n_samples": self.cm.total,
            "metrics": {
                "accuracy": self.accuracy,
                "precision": self.precision,
                "recall": self.recall,
                "f1": self.f1,
                "specificity": self.specificity,
            },
            "confusion_matrix": {
                "tp": self.cm.tp, "fp": self.cm.fp, "fn": self.cm.fn, "tn": self.cm.tn,
                "positive_class": self.cm.positive_class,
            },
            "normalized_confusion_matrix": self.normalized_cm,
        }

    def write_json(self, path: Path | str) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    def render_text(self) -> str:
        lines = [
            f"model: {self.model_name}   split: {self.split_name}   samples: {self.cm.total}",
            f"  accuracy    {_fmt(self.accuracy):>6}",
            f"  precision   {_fmt(self.precision):>6}",
            f"  recall      {_fmt(self.recall):>6}",
            f"  f1          {_fmt(self.f1):>6}",
            f"  specificity {_fmt(self.specificity):>6}",
            f"  confusion [[TP {self.cm.tp}, FP {self.cm.fp}], [FN {self.cm.fn}, TN {self.cm.tn}]]"
            f" (positive: {self.cm.positive_class})",
        ]
        norm = [
            "[" + ", ".join("n/a" if v is None else f"{v:.3f}" for v in row) + "]"
            for row in self.normalized_cm
        ]
        lines.append("  normalized [" + ", ".join(norm) + "]")
        return "\n".join(lines) + "\n"


def report_from_json(path: Path | str) -> MetricsReport:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    cm = ConfusionMatrix(**doc["confusion_matrix"])
    m = doc["metrics"]
    return MetricsReport(
        model_name=doc["model"], split_name=doc["split"],
        accuracy=m["accuracy"], precision=m["precision"], recall=m["recall"],
        f1=m["f1"], specificity=m["specificity"],
        cm=cm, normalized_cm=doc["normalized_confusion_matrix"],
    )


def build_report(model_name: str, split_name: str, preds, truth, positive="Cancer") -> MetricsReport:
    cm = M.confusion(preds, truth, positive)
    p = M.precision(cm)
    r = M.recall(cm)
    return MetricsReport(
        model_name=model_name,
        split_name=split_name,
        accuracy=M.accuracy(cm),
        precision=p,
        recall=r,
        f1=M.f1(p, r),
        specificity=M.specificity(cm),
        cm=cm,
        normalized_cm=M.normalize(cm),
    )


def evaluate(handle, manifest, split, batch_size: int = 8, model_name: str | None = None) -> MetricsReport:
    """Inference over one split (no augmentation), argmax with ties to Cancer."""
    # imported here so metric/report consumers do not pay the TF import
    from .manifest import Split
    from .training import LABELS, SplitLoader, predict_labels

    split = Split(split) if not isinstance(split, Split) else split
    loader = SplitLoader(manifest, handle.spec.input_size)
    preds: list[str] = []
    truth: list[str] = []
    for x, y in loader.eval_batches(split, batch_size):
        labels = predict_labels(handle, x)
        preds.extend(LABELS[int(i)].value for i in labels)
        truth.extend(LABELS[int(i)].value for i in y)
    if not preds:
        raise ValueError(f"split {split.value!r} has no samples to evaluate")
    return build_report(model_name or handle.spec.name, split.value, preds, truth)


COMPARISON_COLUMNS = ["model", "accuracy", "f1", "precision", "recall", "specificity"]


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[dict, ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COMPARISON_COLUMNS)
        for row in self.rows:
            writer.writerow([
                row["model"],
                *[("" if row[c] is None else repr(float(row[c]))) for c in COMPARISON_COLUMNS[1:]],
            ])
        return buf.getvalue()

    def render_text(self) -> str:
        header = ["Model", "Accuracy", "F1", "Precision", "Recall", "Specificity"]
        body = [
            [row["model"], *[_fmt(row[c]) for c in COMPARISON_COLUMNS[1:]]]
            for row in self.rows
        ]
        widths = [max(len(h), *(len(r[i]) for r in body)) for i, h in enumerate(header)] if body else [len(h) for h in header]
        def line(cells):
            return "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))
        out = [line(header), line(["-" * w for w in widths])]
        out.extend(line(r) for r in body)
        return "\n".join(out) + "\n"


def _sort_key(row: dict):
    acc = row["accuracy"]
    return (0 if acc is not None else 1, -(acc if acc is not None else 0.0), row["model"])


def compare(
    reports: list[MetricsReport],
    sort_by_accuracy: bool = True,
    literature_csv: Path | str | None = None,
) -> ComparisonTable:
    """One row per model; sorted by accuracy descending unless disabled.

    ``literature_csv`` appends accuracy-only rows for prior approaches from a
    static data file (columns: study, methodology, accuracy, dataset).
    """
    rows = [
        {
            "model": r.model_name,
            "accuracy": r.accuracy,
            "f1": r.f1,
            "precision": r.precision,
            "recall": r.recall,
            "specificity": r.specificity,
        }
        for r in reports
    ]
    if sort_by_accuracy:
        rows.sort(key=_sort_key)
    if literature_csv is not None:
        with open(literature_csv, "r", encoding="utf-8", newline="") as f:
            for rec in csv.DictReader(f):
                rows.append({
                    "model": f"{rec['study']} {rec['methodology']} [{rec['dataset']}]",
                    "accuracy": float(rec["accuracy"]),
                    "f1": None, "precision": None, "recall": None, "specificity": None,
                })
    return ComparisonTable(rows=tuple(rows))


@dataclass(frozen=True)
class PlotSet:
    files: tuple[Path, ...]
    x_range: tuple[float, float]
    y_ranges: dict[str, tuple[float, float]]


def plot_history(history, out_dir: Path | str) -> PlotSet:
    """Accuracy, train-loss, and val-loss curves plus the history CSV."""
    if not history.records:
        raise ValueError("history is empty; nothing to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    epochs = [r.epoch for r in history.records]

    files: list[Path] = []
    y_ranges: dict[str, tuple[float, float]] = {}
    x_range: tuple[float, float] = (0.0, 0.0)

    panels = [
        ("accuracy", [("train", [r.train_acc for r in history.records]),
                      ("val", [r.val_acc for r in history.records])], "accuracy (%)"),
        ("train_loss", [("train", [r.train_loss for r in history.records])], "loss"),
        ("val_loss", [("val", [r.val_loss for r in history.records])], "loss"),
    ]
    for name, series, ylabel in panels:
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, ys in series:
            ax.plot(epochs, ys, marker="o", markersize=3, label=label)
        ax.set_xlabel("epoch")
        ax.set_ylabel(ylabel)
        ax.set_title(name.replace("_", " "))
        ax.legend()
        fig.tight_layout()
        path = out_dir / f"{name}.png"
        fig.savefig(path)
        x_range = ax.get_xlim()
        y_ranges[name] = ax.get_ylim()
        plt.close(fig)
        files.append(path)

    csv_path = out_dir / "history.csv"
    history.write_csv(csv_path)
    files.append(csv_path)
    return PlotSet(files=tuple(files), x_range=x_range, y_ranges=y_ranges)
