"""Optimization history and objective value models.

This module defines the per-iteration record written to `history.csv`, the
append-only history container and the objective values of one evaluation.

Example:
    >>> from data_models.history import IterationRecord, OptHistory
    >>> history = OptHistory()
    >>> history.append(IterationRecord(iter=1, F=1.0, F_MC=1.1, F_AM=0.2,
    ...                                volume=1.0, **{"lambda": 0.0}, wall_ms=12.5))
    >>> list(history.to_dataframe().columns)
    ['iter', 'F', 'F_MC', 'F_AM', 'volume', 'lambda', 'wall_ms']
"""

from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field


# Column order of history.csv
HISTORY_COLUMNS: List[str] = ["iter", "F", "F_MC", "F_AM", "volume", "lambda", "wall_ms"]


class ObjectiveValues(BaseModel):
    """Objective and constraint values of one design evaluation.

    Attributes:
        F_MC: Mean compliance (N mm)
        F_AM: Distortion p-norm
        F: Weighted objective (1 - gamma) F_MC + gamma F_AM
        G: Volume constraint value, volume fraction minus V_max
    """

    F_MC: float
    F_AM: float = Field(..., ge=0)
    F: float
    G: float

    model_config = ConfigDict(frozen=True)

    def is_finite(self) -> bool:
        """True if every value is a finite number."""
        return bool(np.all(np.isfinite([self.F_MC, self.F_AM, self.F, self.G])))


class IterationRecord(BaseModel):
    """One row of the optimization history."""

    iter: int = Field(..., ge=1)
    F: float
    F_MC: float
    F_AM: float
    volume: float = Field(..., ge=0, le=1)
    lam: float = Field(default=0.0, alias="lambda")
    wall_ms: float = Field(default=0.0, ge=0)

    model_config = ConfigDict(populate_by_name=True, frozen=True)

    def as_row(self) -> dict:
        """Return the record keyed by the history.csv column names."""
        return self.model_dump(by_alias=True)


class OptHistory(BaseModel):
    """Append-only sequence of iteration records.

    Attributes:
        records: Iteration records in execution order
        termination_reason: Why the run stopped ("converged", "max_iterations")
    """

    records: List[IterationRecord] = Field(default_factory=list)
    termination_reason: Optional[str] = None

    def append(self, record: IterationRecord) -> None:
        """Append a record; iteration numbers must increase.

        Raises:
            ValueError: If the record does not follow the last one
        """
        if self.records and record.iter <= self.records[-1].iter:
            raise ValueError(
                f"History is append-only: iteration {record.iter} after "
                f"{self.records[-1].iter}"
            )
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.F for r in self.records])

    @property
    def volumes(self) -> np.ndarray:
        return np.array([r.volume for r in self.records])

    def first_feasible(self, volume_max: float, band: float = 0.005) -> Optional[IterationRecord]:
        """First record whose volume is at most V_max (1 + band), or None."""
        limit = volume_max * (1.0 + band)
        return next((r for r in self.records if r.volume <= limit), None)

    def to_dataframe(self) -> pd.DataFrame:
        """Return the history as a DataFrame with the history.csv columns."""
        rows = [r.as_row() for r in self.records]
        return pd.DataFrame(rows, columns=HISTORY_COLUMNS)
