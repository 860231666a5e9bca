"""
File-system artifact store for experiment outputs.
"""
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, List, Optional

import matplotlib

matplotlib.use('Agg')

import pandas as pd  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

logger = logging.getLogger(__name__)


class ArtifactStore:
    """Wrapper for writing and reading experiment artifacts under one directory"""

    def __init__(self, root: Path, csv_digits: int = 17, snapshot_stride: int = 1):
        """
        Initialize the store, creating the directory if needed.

        Args:
            root: Output directory
            csv_digits: Significant digits for floats in CSV files
            snapshot_stride: Keep every k-th time slice in snapshot CSVs

        Raises:
            OSError: the directory cannot be created
        """
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.float_format = f'%.{csv_digits}g'
        self.snapshot_stride = snapshot_stride

    def path(self, name: str) -> Path:
        return self.root / name

    def _atomic_write(self, name: str, writer) -> Optional[Path]:
        target = self.path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f'.{target.name}.', suffix='.tmp')
        try:
            with os.fdopen(fd, 'w', encoding='utf-8', newline='') as handle:
                writer(handle)
            os.replace(tmp, target)
            logger.info(f"Wrote {target}")
            return target
        except (OSError, ValueError, TypeError) as e:
            logger.error(f"Error writing artifact {target}: {e}")
            if os.path.exists(tmp):
                os.remove(tmp)
            return None

    # ========== Write Operations ==========

    def write_json(self, name: str, payload: Any) -> Optional[Path]:
        """
        Write a JSON document with sorted keys.

        Args:
            name: File name relative to the store root
            payload: JSON-serialisable object

        Returns:
            Path written, or None on error
        """
        def writer(handle):
            json.dump(payload, handle, indent=2, sort_keys=True, allow_nan=True)
            handle.write('\n')

        return self._atomic_write(name, writer)

    def write_csv(self, name: str, frame: pd.DataFrame) -> Optional[Path]:
        """
        Write a DataFrame as CSV with full float precision.

        Returns:
            Path written, or None on error
        """
        return self._atomic_write(
            name, lambda handle: frame.to_csv(handle, index=False, float_format=self.float_format)
        )

    def write_svg(self, name: str, figure: Figure) -> Optional[Path]:
        """Save a matplotlib figure as SVG."""
        return self._atomic_write(name, lambda handle: figure.savefig(handle, format='svg'))

    # ========== Read Operations ==========

    def read_csv(self, name: str) -> Optional[pd.DataFrame]:
        """
        Read a CSV artifact.

        Returns:
            DataFrame, or None if missing or unreadable
        """
        try:
            return pd.read_csv(self.path(name), float_precision='round_trip')
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            logger.error(f"Error reading artifact {name}: {e}")
            return None

    def exists(self, name: str) -> bool:
        return self.path(name).exists()

    def list_artifacts(self, suffix: Optional[str] = None) -> List[str]:
        """List artifact names, optionally filtered by suffix."""
        names = sorted(
            str(p.relative_to(self.root)) for p in self.root.rglob('*')
            if p.is_file() and not p.name.startswith('.')
        )
        if suffix:
            names = [n for n in names if n.endswith(suffix)]
        return names
