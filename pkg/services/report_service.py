"""Output writers: trajectory CSV, metrics and gain reports (JSON), pass/fail tables"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)


def to_jsonable(value: Any) -> Any:
    """numpy and complex values to plain JSON; non-finite floats become null"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (complex, np.complexfloating)):
        return [to_jsonable(float(value.real)), to_jsonable(float(value.imag))]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


class ReportService:
    """Writes run artifacts; every file is written by the run that owns it"""

    def write_json(self, payload: Dict, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(to_jsonable(payload), indent=2, sort_keys=False) + "\n", encoding="utf-8")
        return path

    def write_run(self, traj, metrics, directory: Path, trajectory_name: str = "trajectory.csv",
                  metrics_name: str = "metrics.json") -> Dict[str, str]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        csv_path = directory / trajectory_name
        traj.to_csv(csv_path)
        json_path = self.write_json(metrics.to_dict(), directory / metrics_name)
        logger.info(f"Wrote {len(traj.frame)} rows to {csv_path} and metrics to {json_path}")
        return {"trajectory": str(csv_path), "metrics": str(json_path)}

    def write_index(self, entries: List[Dict], directory: Path) -> Path:
        path = self.write_json({"runs": entries}, Path(directory) / "index.json")
        logger.info(f"Wrote batch index with {len(entries)} entries to {path}")
        return path

    def format_table(self, rows: Sequence[Tuple[str, bool, str]], title: Optional[str] = None) -> str:
        """Fixed-width check | PASS/FAIL | detail table"""
        width = max([len("check")] + [len(name) for name, _, _ in rows])
        lines = []
        if title:
            lines.append(title)
        lines.append(f"{'check'.ljust(width)}  result  detail")
        lines.append(f"{'-' * width}  ------  {'-' * 40}")
        for name, ok, detail in rows:
            lines.append(f"{name.ljust(width)}  {'PASS' if ok else 'FAIL':6}  {detail}")
        passed = sum(1 for _, ok, _ in rows if ok)
        lines.append(f"{passed}/{len(rows)} checks passed")
        return "\n".join(lines)


# Singleton instance
_report_service: Optional[ReportService] = None


def get_report_service() -> ReportService:
    """Get singleton report service"""
    global _report_service
    if _report_service is None:
        _report_service = ReportService()
    return _report_service
