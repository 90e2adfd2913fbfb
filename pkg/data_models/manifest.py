"""Run manifest model.

Every CLI command writes a `manifest.json` next to its outputs that echoes
the resolved configuration, identifies the run and lists the files produced.

Example:
    >>> from data_models.manifest import RunManifest
    >>> manifest = RunManifest.start("optimize", {"problem": "cantilever"})
    >>> manifest.outputs.append("history.csv")
"""

import hashlib
import json
from datetime import datetime, timezone
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class RunManifest(BaseModel):
    """Record of one CLI run.

    Attributes:
        run_id: 12-hex-digit id derived from the command, config and start time
        command: CLI subcommand
        config: Resolved configuration echo (feeding it back reproduces the run)
        started_at: ISO 8601 UTC start timestamp
        finished_at: ISO 8601 UTC end timestamp
        outputs: Output files relative to the output directory
        termination_reason: Optimizer termination reason, if any
        status: "running", "success" or "failed"
    """

    run_id: str
    command: str
    config: Dict[str, Any]
    started_at: str = Field(default_factory=_utc_now)
    finished_at: Optional[str] = None
    outputs: List[str] = Field(default_factory=list)
    termination_reason: Optional[str] = None
    status: Literal["running", "success", "failed"] = "running"

    @classmethod
    def start(cls, command: str, config: Dict[str, Any]) -> "RunManifest":
        """Create a manifest for a run starting now."""
        started_at = _utc_now()
        digest = hashlib.sha1(
            (command + json.dumps(config, sort_keys=True) + started_at).encode("utf-8")
        ).hexdigest()
        return cls(run_id=digest[:12], command=command, config=config, started_at=started_at)

    def finish(self, status: str = "success", termination_reason: Optional[str] = None) -> None:
        """Stamp the end time and final status."""
        self.finished_at = _utc_now()
        self.status = status
        if termination_reason is not None:
            self.termination_reason = termination_reason
