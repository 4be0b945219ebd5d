"""CSV/JSON artifacts written for every run, sweep and ablation."""

from __future__ import annotations

import csv
import json
from pathlib import Path

ROUNDS_COLUMNS = ["round", "client_id", "test_acc", "train_loss", "alpha", "gamma_grad", "gamma_data", "mask_popcount"]


def fmt(x) -> str:
    """Floats with 9 significant digits; everything else via str()."""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return format(x, ".9g")
    return str(x)


def write_csv(path, header: list[str], rows) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_rounds_csv(path, records) -> None:
    rows = (
        [rec.round, c.client_id, c.test_acc, c.train_loss, c.alpha, c.gamma_grad, c.gamma_data, c.mask_popcount]
        for rec in records
        for c in rec.clients
    )
    write_csv(path, ROUNDS_COLUMNS, rows)


def summary_dict(config, result, wall_ms: float) -> dict:
    accs = result.final_accuracies
    last = result.records[-1] if result.records else None
    return {
        "algorithm": config.algorithm,
        "seed": config.seed,
        "final_mean_acc": last.mean_acc if last else None,
        "final_std_acc": last.std_acc if last else None,
        "per_client_acc": accs,
        "rounds": config.rounds,
        "wall_ms": wall_ms,
        "config_hash": config.config_hash(),
        "metadata": result.metadata,
    }


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_run_artifacts(out_dir, config, result, wall_ms: float) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_rounds_csv(out / "rounds.csv", result.records)
    (out / "config_resolved.json").write_text(config.to_json(), encoding="utf-8")
    summary = summary_dict(config, result, wall_ms)
    write_json(out / "summary.json", summary)
    return summary
