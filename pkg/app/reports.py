from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from core.certificates import CertificateSet, InequalityCheck
from utils.file_utils import dump_json, dumps_json, to_jsonable, write_csv

CsvTable = Tuple[Sequence[str], List[Sequence[Any]]]


@dataclass
class RunConfig:
    command: str
    flags: Dict[str, Any]
    seed: int = 0
    tolerance: float = 1e-9
    output: Optional[Path] = None
    csv: Optional[Path] = None
    config_path: Optional[Path] = None

    def echo(self) -> Dict:
        return {"command": self.command, "flags": self.flags, "seed": self.seed, "tolerance": self.tolerance}


@dataclass
class ReportBundle:
    """
    One command's report. `results` depends only on inputs, seed and flags;
    timestamps live in `meta`.
    """

    config: RunConfig
    inputs: Dict[str, str] = field(default_factory=dict)
    results: Dict[str, Any] = field(default_factory=dict)
    certificates: List[InequalityCheck] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    csv_table: Optional[CsvTable] = None
    exit_override: Optional[int] = None

    def add_certificates(self, certs) -> None:
        if certs is None:
            return
        if isinstance(certs, InequalityCheck):
            self.certificates.append(certs)
        elif isinstance(certs, CertificateSet):
            self.certificates.extend(certs.checks)
        else:
            self.certificates.extend(certs)

    @property
    def holds(self) -> bool:
        return all(c.holds for c in self.certificates if c.theorem)

    @property
    def exit_code(self) -> int:
        if self.exit_override is not None:
            return self.exit_override
        return 0 if self.holds else 3

    def to_dict(self) -> Dict:
        return {
            "command": self.config.echo(),
            "inputs": self.inputs,
            "results": self.results,
            "certificates": [c.to_dict() for c in self.certificates],
            "warnings": self.warnings,
            "status": {"holds": self.holds, "exit_code": self.exit_code},
            "meta": {"generated_at": datetime.now(timezone.utc).isoformat()},
        }

    def emit(self) -> bytes:
        data = self.to_dict()
        if self.config.output is not None:
            dump_json(data, self.config.output)
        if self.config.csv is not None and self.csv_table is not None:
            header, rows = self.csv_table
            write_csv(self.config.csv, header, rows)
        return dumps_json(data)


def error_bundle(config: RunConfig, error: Exception, exit_code: int) -> Dict:
    return to_jsonable(
        {
            "command": config.echo(),
            "error": {"type": type(error).__name__, "message": str(error)},
            "status": {"holds": False, "exit_code": exit_code},
        }
    )
