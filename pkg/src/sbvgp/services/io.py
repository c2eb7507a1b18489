"""CSV datasets, key = value reports and run configuration files."""

import hashlib
import re
import shutil
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Type, TypeVar

import numpy as np
import pandas as pd
from dotenv import dotenv_values
from pydantic import BaseModel, ValidationError

from ..core.config import settings
from ..core.exceptions import DataFormatError, UsageError
from ..core.logging import get_logger
from ..models.data import Dataset, InputNormalization
from .sampling import make_rng

logger = get_logger(__name__)

ConfigT = TypeVar("ConfigT", bound=BaseModel)

# report lines look like "key = value"; the checksum line covers the others
_CHECKSUM_KEY = "checksum"


def _format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.{settings.csv_significant_digits}g}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(_format_value(v) for v in value)
    return str(value)


class DatasetStore:
    """Reads and writes datasets, reports and configs on disk."""

    def calculate_checksum(self, data: str) -> str:
        """Calculate SHA-256 checksum for data integrity."""
        return hashlib.sha256(data.encode("utf-8")).hexdigest()

    def _atomic_write(self, path: Path, text: str) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        temp = path.with_name(f".{path.name}.tmp")
        temp.write_text(text, encoding="utf-8")
        shutil.move(str(temp), str(path))

    def read_table(self, path: Path) -> Tuple[List[str], np.ndarray]:
        """Header and numeric body of a CSV file.

        Any malformed cell raises DataFormatError naming the 1-based line.
        """
        path = Path(path)
        if not path.exists():
            raise UsageError(f"File not found: {path}")
        try:
            raw = pd.read_csv(path, dtype=str, keep_default_na=False)
        except pd.errors.EmptyDataError:
            raise DataFormatError(f"{path} is empty", line=1)
        except pd.errors.ParserError as e:
            found = re.search(r"line (\d+)", str(e))
            line = int(found.group(1)) if found else None
            raise DataFormatError(f"{path}: ragged row ({e})", line=line)

        columns = [str(c).strip() for c in raw.columns]
        if len(columns) < 2:
            raise DataFormatError(
                f"{path} needs at least one input and one response column", line=1
            )
        if any(_is_number(c) for c in columns):
            raise DataFormatError(f"{path} has no header row", line=1)
        if raw.empty:
            raise DataFormatError(f"{path} has a header but no data rows", line=2)

        values = np.empty(raw.shape)
        for j, column in enumerate(raw.columns):
            cells = raw[column]
            numeric = pd.to_numeric(cells.str.strip(), errors="coerce")
            bad = cells.isna() | numeric.isna() | ~np.isfinite(numeric)
            if bad.any():
                row = int(np.flatnonzero(bad.to_numpy())[0])
                cell = cells.iloc[row]
                what = "missing value" if pd.isna(cell) else f"invalid value {cell!r}"
                raise DataFormatError(
                    f"{path}: {what} in column {columns[j]!r}", line=row + 2
                )
            values[:, j] = numeric.to_numpy(dtype=float)
        return columns, values

    def write_table(
        self, path: Path, columns: Sequence[str], values: np.ndarray
    ) -> Path:
        """Write a numeric table with full-precision decimals."""
        frame = pd.DataFrame(np.asarray(values, dtype=float), columns=list(columns))
        return self.write_frame(path, frame)

    def write_frame(self, path: Path, frame: pd.DataFrame) -> Path:
        """Write a (possibly mixed-type) table; floats at full precision."""
        path = Path(path)
        text = frame.to_csv(
            index=False,
            float_format=f"%.{settings.csv_significant_digits}g",
            lineterminator="\n",
        )
        self._atomic_write(path, text)
        logger.info(f"Wrote {frame.shape[0]} rows to {path}")
        return path

    def write_dataset(self, path: Path, X: np.ndarray, y: np.ndarray) -> Path:
        """Write inputs and response under the header x1,...,xd,y."""
        X = np.asarray(X, dtype=float)
        header = [f"x{j + 1}" for j in range(X.shape[1])] + ["y"]
        return self.write_table(path, header, np.column_stack([X, y]))

    def read_dataset(
        self,
        path: Path,
        normalization: Optional[InputNormalization] = None,
        input_bounds: Optional[Sequence[Tuple[float, float]]] = None,
        normalize_response: str = "none",
    ) -> Tuple[Dataset, InputNormalization]:
        """Load a CSV and map its inputs onto the unit cube.

        The last column is the response. Without ``normalization`` one is
        built from ``input_bounds`` or the data's own ranges; responses are
        divided by their mean when ``normalize_response="mean"``.
        """
        columns, values = self.read_table(path)
        raw, y = values[:, :-1], values[:, -1]
        if normalization is None:
            scale = 1.0
            if normalize_response == "mean":
                scale = float(np.mean(y))
                if scale == 0:
                    raise UsageError("Cannot normalize a zero-mean response to 1")
            if input_bounds is not None:
                if len(input_bounds) != raw.shape[1]:
                    raise UsageError(
                        f"{len(input_bounds)} input bounds for "
                        f"{raw.shape[1]} input columns"
                    )
                lower, upper = zip(*input_bounds)
                normalization = InputNormalization(
                    np.array(lower), np.array(upper), scale
                )
            else:
                normalization = InputNormalization.from_data(raw, scale)
        elif normalization.lower.size != raw.shape[1]:
            raise UsageError(
                f"{path} has {raw.shape[1]} inputs, expected "
                f"{normalization.lower.size}"
            )
        points = normalization.apply(raw)
        dataset = Dataset(points=points, responses=y / normalization.response_scale)
        logger.info(f"Read {dataset.n} points with d={dataset.d} from {path}")
        return dataset, normalization

    def write_report(self, path: Path, entries: Mapping[str, Any]) -> Path:
        """Write ``key = value`` lines followed by a checksum line."""
        lines = [f"{key} = {_format_value(value)}" for key, value in entries.items()]
        body = "\n".join(lines) + "\n"
        text = body + f"{_CHECKSUM_KEY} = {self.calculate_checksum(body)}\n"
        self._atomic_write(Path(path), text)
        logger.info(f"Wrote report {path}")
        return Path(path)

    def read_report(self, path: Path) -> Dict[str, str]:
        """Parse a report and verify its checksum."""
        path = Path(path)
        if not path.exists():
            raise UsageError(f"Report not found: {path}")
        entries: Dict[str, str] = {}
        body_lines: List[str] = []
        checksum: Optional[str] = None
        text = path.read_text(encoding="utf-8")
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            if "=" not in line:
                raise DataFormatError(f"{path}: expected 'key = value'", line=number)
            key, value = (part.strip() for part in line.split("=", 1))
            if key == _CHECKSUM_KEY:
                checksum = value
                continue
            entries[key] = value
            body_lines.append(line)
        body = "\n".join(body_lines) + "\n"
        if checksum is None or checksum != self.calculate_checksum(body):
            raise DataFormatError(f"{path}: checksum mismatch or missing")
        return entries

    def read_config(self, path: Path, model: Type[ConfigT]) -> ConfigT:
        """Validate a flat ``key = value`` file into ``model``."""
        path = Path(path)
        if not path.exists():
            raise UsageError(f"Config not found: {path}")
        values = dotenv_values(path)
        missing = [key for key, value in values.items() if value is None]
        if missing:
            raise UsageError(f"{path}: keys without a value: {', '.join(missing)}")
        try:
            config = model(**values)
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}"
                for err in e.errors()
            )
            raise UsageError(f"{path}: {problems}")
        logger.debug(f"Loaded config {path}: {config.model_dump()}")
        return config

    def split(
        self, path: Path, train_path: Path, test_path: Path, fraction: float, seed: int
    ) -> Tuple[int, int]:
        """Seeded random split of a CSV into train and test files."""
        if not 0.0 < fraction < 1.0:
            raise UsageError(f"Train fraction must lie in (0, 1), got {fraction}")
        columns, values = self.read_table(path)
        n = values.shape[0]
        n_train = int(round(fraction * n))
        if not 1 <= n_train < n:
            raise UsageError(f"Cannot split {n} rows with fraction {fraction}")
        perm = make_rng(seed).permutation(n)
        train_rows, test_rows = np.sort(perm[:n_train]), np.sort(perm[n_train:])
        self.write_table(train_path, columns, values[train_rows])
        self.write_table(test_path, columns, values[test_rows])
        return train_rows.size, test_rows.size


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def parse_floats(value: str) -> List[float]:
    """Comma-joined report array."""
    return [float(v) for v in value.split(",") if v.strip()]


# Global dataset store instance
dataset_store = DatasetStore()
