"""File formats: dataset tables, benchmark replicates, model archives, reports.

Tables are UTF-8 delimited text with a header row and '.' decimal
separator. The benchmark loader reads the widely distributed
per-replicate layout (columns: treatment, y_factual, y_cfactual, mu0,
mu1, x1..x25 with no header) from a directory of numbered CSV files, a
single CSV, or an .npz bundle. Model archives are versioned,
checksummed .npz files that round-trip every parameter bit-exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import discriminator as disc_mod
from . import generator as gen_mod
from .data_model import Dataset, Scaler
from .errors import FormatError
from .metrics import MetricsReport

ARCHIVE_VERSION = 1


@dataclass(frozen=True)
class TableSchema:
    """Column roles for a generic multi-group table."""

    group_column: str = "group"
    outcome_column: str = "y"
    covariate_columns: tuple[str, ...] | None = None  # None: all remaining columns
    potential_outcome_columns: tuple[str, ...] | None = None
    noiseless_mean_columns: tuple[str, ...] | None = None


def _fmt(value) -> str:
    """Deterministic, round-trippable cell formatting."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(path, header, rows) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _parse_float(cell: str, row: int, column: str, path) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise FormatError(
            f"{path}: row {row}, column {column!r}: cannot parse {cell!r} as a number"
        ) from None
    if not np.isfinite(value):
        raise FormatError(
            f"{path}: row {row}, column {column!r}: non-finite value {cell!r}"
        )
    return value


def load_matrix_table(path) -> np.ndarray:
    """Read an all-numeric table with a header row into an (n, k) array."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        rows = list(reader)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    out = np.empty((len(rows), len(header)))
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise FormatError(
                f"{path}: row {r + 1} has {len(row)} cells, header has {len(header)}"
            )
        for c, name in enumerate(header):
            out[r, c] = _parse_float(row[c], r + 1, name, path)
    return out


def load_table(path, schema: TableSchema = TableSchema()) -> Dataset:
    """Read a delimited table into a Dataset, mapping group labels to 0..k-1.

    Labels are mapped in sorted order and the mapping is recorded on the
    dataset. Raises FormatError naming the offending row/column on any
    malformed cell.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        rows = list(reader)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    header = [h.strip() for h in header]
    col_index = {name: i for i, name in enumerate(header)}

    for required in (schema.group_column, schema.outcome_column):
        if required not in col_index:
            raise FormatError(f"{path}: missing column {required!r} (header: {header})")
    special = {schema.group_column, schema.outcome_column}
    special |= set(schema.potential_outcome_columns or ())
    special |= set(schema.noiseless_mean_columns or ())
    if schema.covariate_columns is None:
        covariate_cols = [h for h in header if h not in special]
    else:
        covariate_cols = list(schema.covariate_columns)
        missing = [c for c in covariate_cols if c not in col_index]
        if missing:
            raise FormatError(f"{path}: missing covariate columns {missing}")
    if not covariate_cols:
        raise FormatError(f"{path}: no covariate columns identified")

    n = len(rows)
    x = np.empty((n, len(covariate_cols)))
    y = np.empty(n)
    labels = []
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise FormatError(
                f"{path}: row {r + 1} has {len(row)} cells, header has {len(header)}"
            )
        for c, name in enumerate(covariate_cols):
            x[r, c] = _parse_float(row[col_index[name]], r + 1, name, path)
        y[r] = _parse_float(row[col_index[schema.outcome_column]], r + 1,
                            schema.outcome_column, path)
        labels.append(row[col_index[schema.group_column]].strip())

    unique_labels = sorted(set(labels))
    label_to_id = {lab: i for i, lab in enumerate(unique_labels)}
    group = np.array([label_to_id[lab] for lab in labels], dtype=np.int64)

    def read_block(columns):
        if not columns:
            return None
        block = np.empty((n, len(columns)))
        for c, name in enumerate(columns):
            if name not in col_index:
                raise FormatError(f"{path}: missing column {name!r}")
            for r, row in enumerate(rows):
                block[r, c] = _parse_float(row[col_index[name]], r + 1, name, path)
        return block

    return Dataset(
        covariates=x,
        group=group,
        factual_outcome=y,
        group_count=len(unique_labels),
        potential_outcomes=read_block(schema.potential_outcome_columns),
        noiseless_means=read_block(schema.noiseless_mean_columns),
        feature_names=tuple(covariate_cols),
        group_labels=tuple(unique_labels),
    )


# ---------------------------------------------------------------------------
# benchmark replicates (treatment, y_factual, y_cfactual, mu0, mu1, x1..x25)

IHDP_COLUMNS = 5  # leading non-covariate columns


def load_ihdp(path, replicate_index: int = 0) -> Dataset:
    """Load one replicate of the two-group benchmark layout.

    ``path`` may be a directory of per-replicate files named
    ``*_<index>.csv`` (1-based), a single replicate CSV, or an .npz bundle
    with keys t/yf/ycf/mu0/mu1/x carrying a trailing replicate axis.
    """
    path = Path(path)
    if replicate_index < 0:
        raise FormatError(f"replicate index must be >= 0, got {replicate_index}")
    if path.is_dir():
        return _ihdp_from_dir(path, replicate_index)
    if path.suffix == ".npz":
        return _ihdp_from_npz(path, replicate_index)
    if replicate_index != 0:
        raise FormatError(
            f"{path} is a single-replicate file; replicate {replicate_index} out of range"
        )
    return _ihdp_from_rows(_read_numeric_rows(path), path)


def _ihdp_from_dir(path: Path, replicate_index: int) -> Dataset:
    files = {}
    for f in path.iterdir():
        match = re.search(r"_(\d+)\.csv$", f.name)
        if match:
            files[int(match.group(1))] = f
    if not files:
        raise FormatError(f"{path}: no replicate files matching '*_<n>.csv'")
    wanted = replicate_index + 1  # files are 1-based
    if wanted not in files:
        raise FormatError(
            f"{path}: replicate {replicate_index} out of range "
            f"(found indices {min(files)}..{max(files)})"
        )
    return _ihdp_from_rows(_read_numeric_rows(files[wanted]), files[wanted])


def _ihdp_from_npz(path: Path, replicate_index: int) -> Dataset:
    with np.load(path) as bundle:
        keys = {"t", "yf", "ycf", "mu0", "mu1", "x"}
        if not keys <= set(bundle.files):
            raise FormatError(f"{path}: expected keys {sorted(keys)}, got {bundle.files}")
        n_rep = bundle["x"].shape[2] if bundle["x"].ndim == 3 else 1
        if replicate_index >= n_rep:
            raise FormatError(
                f"{path}: replicate {replicate_index} out of range (bundle has {n_rep})"
            )
        pick = (lambda a: a[..., replicate_index]) if n_rep > 1 or bundle["t"].ndim > 1 else (
            lambda a: a
        )
        return _assemble_ihdp(
            t=np.asarray(pick(bundle["t"]), dtype=np.int64),
            yf=pick(bundle["yf"]).astype(np.float64),
            ycf=pick(bundle["ycf"]).astype(np.float64),
            mu0=pick(bundle["mu0"]).astype(np.float64),
            mu1=pick(bundle["mu1"]).astype(np.float64),
            x=(bundle["x"][:, :, replicate_index] if bundle["x"].ndim == 3
               else bundle["x"]).astype(np.float64),
        )


def _read_numeric_rows(path: Path) -> np.ndarray:
    rows = []
    with Path(path).open(newline="") as fh:
        for r, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise FormatError(f"{path}: row {r + 1}: {exc}") from None
    if not rows:
        raise FormatError(f"{path}: empty file")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise FormatError(f"{path}: inconsistent row lengths {sorted(widths)}")
    arr = np.asarray(rows, dtype=np.float64)
    if arr.shape[1] <= IHDP_COLUMNS:
        raise FormatError(
            f"{path}: expected > {IHDP_COLUMNS} columns "
            f"(treatment, y_factual, y_cfactual, mu0, mu1, x...), got {arr.shape[1]}"
        )
    return arr


def _ihdp_from_rows(arr: np.ndarray, path) -> Dataset:
    t = arr[:, 0]
    if not np.all(np.isin(t, (0.0, 1.0))):
        raise FormatError(f"{path}: treatment column must be 0/1")
    return _assemble_ihdp(
        t=t.astype(np.int64),
        yf=arr[:, 1],
        ycf=arr[:, 2],
        mu0=arr[:, 3],
        mu1=arr[:, 4],
        x=arr[:, IHDP_COLUMNS:],
    )


def _assemble_ihdp(t, yf, ycf, mu0, mu1, x) -> Dataset:
    n = x.shape[0]
    po = np.empty((n, 2))
    po[np.arange(n), t] = yf
    po[np.arange(n), 1 - t] = ycf
    return Dataset(
        covariates=x,
        group=t,
        factual_outcome=yf,
        group_count=2,
        potential_outcomes=po,
        noiseless_means=np.column_stack((mu0, mu1)),
        feature_names=tuple(f"x{i + 1}" for i in range(x.shape[1])),
        group_labels=("control", "treated"),
    )


def write_dataset_table(path, dataset: Dataset) -> None:
    """Write a Dataset in the generic table layout (x..., group, y)."""
    names = dataset.feature_names or tuple(
        f"x{i + 1}" for i in range(dataset.n_features)
    )
    header = list(names) + ["group", "y"]
    rows = [
        list(dataset.covariates[i]) + [int(dataset.group[i]), dataset.factual_outcome[i]]
        for i in range(dataset.n_units)
    ]
    write_table(path, header, rows)


# ---------------------------------------------------------------------------
# model archives


def dataset_fingerprint(dataset: Dataset) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(dataset.covariates).tobytes())
    digest.update(np.ascontiguousarray(dataset.group).tobytes())
    digest.update(np.ascontiguousarray(dataset.factual_outcome).tobytes())
    digest.update(str(dataset.group_count).encode())
    return digest.hexdigest()[:16]


def _param_checksum(arrays) -> str:
    digest = hashlib.sha256()
    for a in arrays:
        digest.update(np.ascontiguousarray(a).tobytes())
    return digest.hexdigest()


def save_model(gen, disc, meta: dict, path) -> None:
    """Versioned, checksummed archive of both networks plus metadata."""
    gen_params = gen.parameters()
    disc_params = disc.parameters()
    payload = {
        "format_version": ARCHIVE_VERSION,
        "generator": {
            "input_dim": gen.input_dim,
            "group_count": gen.group_count,
            "layers": len(gen.heads[0].representation_layers),
            "width": gen.heads[0].representation_layers[0].out_dim,
            "lam": gen.lam,
            "alpha": gen.alpha,
            "dropout_rate": gen.dropout_rate,
        },
        "discriminator": {
            "layers": len(disc.heads[0].hidden_layers),
            "top_width": disc.heads[0].hidden_layers[0].out_dim,
            "lam": disc.lam,
            "alpha": disc.alpha,
            "dropout_rate": disc.dropout_rate,
        },
        "scaler": gen.scaler.to_dict() if gen.scaler is not None else None,
        "meta": meta,
        "checksum": _param_checksum(gen_params + disc_params),
    }
    arrays = {f"gen_{i}": p for i, p in enumerate(gen_params)}
    arrays.update({f"disc_{i}": p for i, p in enumerate(disc_params)})
    np.savez(path, __meta__=np.array(json.dumps(payload)), **arrays)


def load_model(path):
    """Rebuild (generator, discriminator, meta) from an archive.

    Raises FormatError on version mismatch or checksum failure; a loaded
    model predicts bit-identically to the one saved.
    """
    with np.load(path, allow_pickle=False) as bundle:
        if "__meta__" not in bundle.files:
            raise FormatError(f"{path}: not a model archive (missing metadata)")
        payload = json.loads(str(bundle["__meta__"]))
        version = payload.get("format_version")
        if version != ARCHIVE_VERSION:
            raise FormatError(
                f"{path}: archive format version {version} incompatible with "
                f"supported version {ARCHIVE_VERSION}"
            )
        g = payload["generator"]
        d = payload["discriminator"]
        rng = np.random.default_rng(0)  # placeholder init, overwritten below
        gen = gen_mod.build_generator(
            g["input_dim"], g["group_count"], g["layers"], g["width"],
            g["lam"], g["alpha"], rng, dropout_rate=g["dropout_rate"],
        )
        disc = disc_mod.build_discriminator(
            g["input_dim"], g["group_count"], d["layers"], d["top_width"],
            d["lam"], d["alpha"], rng, dropout_rate=d["dropout_rate"],
        )
        gen_params = gen.parameters()
        disc_params = disc.parameters()
        for i, p in enumerate(gen_params):
            stored = bundle[f"gen_{i}"]
            if stored.shape != p.shape:
                raise FormatError(f"{path}: gen_{i} shape {stored.shape} != {p.shape}")
            p[...] = stored
        for i, p in enumerate(disc_params):
            stored = bundle[f"disc_{i}"]
            if stored.shape != p.shape:
                raise FormatError(f"{path}: disc_{i} shape {stored.shape} != {p.shape}")
            p[...] = stored
        if _param_checksum(gen_params + disc_params) != payload["checksum"]:
            raise FormatError(f"{path}: parameter checksum mismatch (corrupted archive)")
        if payload["scaler"] is not None:
            gen.scaler = Scaler.from_dict(payload["scaler"])
    return gen, disc, payload["meta"]


# ---------------------------------------------------------------------------
# metric reports

REPORT_COLUMNS = ("dataset_id", "model_id", "replicate", "seed", "metric", "value")


def write_report(reports: list[MetricsReport], path, format: str = "csv") -> None:
    """Flat table, one row per metric record, in insertion order."""
    rows = [row for report in reports for row in report.rows()]
    path = Path(path)
    if format == "csv":
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_COLUMNS)
            for row in rows:
                writer.writerow([_fmt(row[c]) for c in REPORT_COLUMNS])
    elif format == "json":
        payload = [{c: row[c] for c in REPORT_COLUMNS} for row in rows]
        path.write_text(json.dumps(payload, indent=2) + "\n")
    else:
        raise FormatError(f"unknown report format {format!r}")


def read_report(path) -> list[dict]:
    """Read back a report written by write_report (either format)."""
    path = Path(path)
    if path.suffix == ".json":
        return json.loads(path.read_text())
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            row = dict(raw)
            row["value"] = float(row["value"]) if row["value"] else None
            row["replicate"] = int(row["replicate"]) if row["replicate"] else None
            row["seed"] = int(row["seed"]) if row["seed"] else None
            rows.append(row)
        return rows
