"""Run manifests, deterministic artifact writers, and the report bundle.

Every CLI command drops its outputs plus a manifest into one run
directory. In replay mode all volatile fields (timestamps) are pinned so
re-runs are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from datetime import datetime, timezone
from pathlib import Path

from pydantic import BaseModel, ConfigDict

from . import __version__
from .dataset import load_cases
from .gateway import Mode
from .model import CaseEvaluation, STEP_ORDER

REPLAY_TIMESTAMP = "1970-01-01T00:00:00+00:00"


class RunManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    run_id: str
    command: str
    mode: str
    dataset_hash: str | None = None
    config: dict
    cassette_namespaces: list[str] = []
    created_at: str
    versions: dict[str, str]


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def make_manifest(
    command: str,
    mode: Mode,
    config: dict,
    dataset_path: str | Path | None = None,
    namespaces: list[str] | None = None,
    run_id: str | None = None,
) -> RunManifest:
    dataset_hash = file_sha256(dataset_path) if dataset_path else None
    if run_id is None:
        seed = json.dumps(
            {"command": command, "dataset": dataset_hash, "config": config},
            sort_keys=True,
        )
        run_id = hashlib.sha256(seed.encode("utf-8")).hexdigest()[:12]
    created_at = (
        REPLAY_TIMESTAMP
        if mode is Mode.replay
        else datetime.now(timezone.utc).isoformat()
    )
    return RunManifest(
        run_id=run_id,
        command=command,
        mode=mode.value,
        dataset_hash=dataset_hash,
        config=config,
        cassette_namespaces=namespaces or [],
        created_at=created_at,
        versions={"clincalc": __version__},
    )


def write_json(path: str | Path, data: object) -> None:
    Path(path).write_text(
        json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def write_jsonl(path: str | Path, rows: list) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for row in rows:
            if isinstance(row, BaseModel):
                payload = row.model_dump(mode="json")
            else:
                payload = row
            handle.write(json.dumps(payload, sort_keys=True, ensure_ascii=False) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                rows.append(json.loads(line))
    return rows


# --- report bundle ------------------------------------------------------------


def _markdown_table(header: list[str], rows: list[list[str]]) -> str:
    lines = [
        "| " + " | ".join(header) + " |",
        "| " + " | ".join("---" for _ in header) + " |",
    ]
    for row in rows:
        lines.append("| " + " | ".join(str(cell) for cell in row) + " |")
    return "\n".join(lines)


def _pct(value: float) -> str:
    return f"{value * 100:.2f}%"


def specialty_breakdown(
    evaluations: list[CaseEvaluation],
    row_to_calculator: dict[int, int],
    specialty_map: dict[int, str],
) -> list[tuple[str, int, int]]:
    """(specialty, correct, total) rows sorted by specialty name."""
    totals: dict[str, list[int]] = {}
    for evaluation in evaluations:
        calc = row_to_calculator.get(evaluation.row_number)
        specialty = specialty_map.get(calc) if calc is not None else None
        if specialty is None:
            specialty = "Unmapped"
        bucket = totals.setdefault(specialty, [0, 0])
        bucket[1] += 1
        if evaluation.kappa:
            bucket[0] += 1
    return [(name, c, t) for name, (c, t) in sorted(totals.items())]


def build_report(
    run_dir: str | Path,
    dataset_path: str | Path | None = None,
    specialty_map: dict[int, str] | None = None,
) -> str:
    """Join manifest, metrics, and error counts into one markdown bundle."""
    run_dir = Path(run_dir)
    sections: list[str] = []

    manifest_path = run_dir / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        sections.append(
            f"# Run report `{manifest['run_id']}`\n\n"
            f"- command: `{manifest['command']}`\n"
            f"- mode: {manifest['mode']}\n"
            f"- created: {manifest['created_at']}\n"
            f"- dataset sha256: {manifest.get('dataset_hash') or 'n/a'}\n"
        )
    else:
        sections.append("# Run report\n\n(no manifest found)\n")

    metrics_path = run_dir / "metrics.json"
    evaluations: list[CaseEvaluation] = []
    if metrics_path.exists():
        metrics = json.loads(metrics_path.read_text(encoding="utf-8"))
        rows = [["cases", str(metrics["n_cases"])],
                ["accuracy (overall)", _pct(metrics["accuracy_overall"])]]
        for category, accuracy in sorted(metrics.get("accuracy_by_category", {}).items()):
            rows.append([f"accuracy ({category})", _pct(accuracy)])
        sections.append("## Step-wise evaluation\n\n" + _markdown_table(["metric", "value"], rows))

        step_rows = []
        for step in STEP_ORDER:
            cc = metrics.get("cc", {}).get(step.value)
            fe = metrics.get("fe", {}).get(step.value)
            step_rows.append(
                [
                    step.value,
                    _pct(cc) if cc is not None else "n/a",
                    _pct(fe) if fe is not None else "0.00%",
                ]
            )
        sections.append(
            "### Conditional correctness and first-error attribution\n\n"
            + _markdown_table(["step", "CC", "FE"], step_rows)
        )

    evaluations_path = run_dir / "evaluations.jsonl"
    if evaluations_path.exists():
        evaluations = [
            CaseEvaluation.model_validate(row) for row in read_jsonl(evaluations_path)
        ]

    counts_path = run_dir / "error_counts.csv"
    if counts_path.exists():
        with counts_path.open("r", encoding="utf-8") as handle:
            reader = list(csv.reader(handle))
        if reader:
            sections.append(
                "## Error counts\n\n" + _markdown_table(reader[0], reader[1:])
            )

    retrieval_path = run_dir / "retrieval_accuracy.json"
    if retrieval_path.exists():
        table = json.loads(retrieval_path.read_text(encoding="utf-8"))
        rows = [[f"top-{k}", _pct(v)] for k, v in sorted(table.items(), key=lambda kv: int(kv[0]))]
        sections.append("## Retrieval accuracy\n\n" + _markdown_table(["k", "accuracy"], rows))

    if specialty_map and evaluations and dataset_path:
        cases = load_cases(dataset_path)
        row_to_calc = {c.row_number: c.calculator_id for c in cases}
        rows = [
            [name, f"{correct} / {total}", _pct(correct / total)]
            for name, correct, total in specialty_breakdown(
                evaluations, row_to_calc, specialty_map
            )
        ]
        sections.append(
            "## Per-specialty breakdown\n\n"
            + _markdown_table(["specialty", "correct / total", "accuracy"], rows)
        )
    else:
        sections.append(
            "## Per-specialty breakdown\n\n"
            "Not included: configure a specialty map (and dataset) to enable it."
        )

    return "\n\n".join(sections) + "\n"


def metrics_csv(metrics: dict) -> str:
    """Flat CSV companion to metrics.json."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["metric", "value"])
    writer.writerow(["n_cases", metrics["n_cases"]])
    writer.writerow(["accuracy_overall", metrics["accuracy_overall"]])
    for category, accuracy in sorted(metrics.get("accuracy_by_category", {}).items()):
        writer.writerow([f"accuracy_{category}", accuracy])
    for step in STEP_ORDER:
        if step.value in metrics.get("cc", {}):
            writer.writerow([f"cc_{step.value}", metrics["cc"][step.value]])
    for step in STEP_ORDER:
        if step.value in metrics.get("fe", {}):
            writer.writerow([f"fe_{step.value}", metrics["fe"][step.value]])
    return buffer.getvalue()


def load_specialty_map(path: str | Path) -> dict[int, str]:
    """calculator_id -> specialty, from a JSON or TOML config."""
    path = Path(path)
    if path.suffix.lower() == ".toml":
        import sys

        if sys.version_info >= (3, 11):
            import tomllib
        else:
            import tomli as tomllib
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    else:
        data = json.loads(path.read_text(encoding="utf-8"))
    mapping = data.get("specialties", data)
    return {int(k): str(v) for k, v in mapping.items()}
