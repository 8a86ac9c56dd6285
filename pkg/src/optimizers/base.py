"""
Optimizer interface and the run record every optimizer returns
"""

import time
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

from ..utils import JsonlWriter, Logger


@dataclass
class RunRecord:
    """Trace of one optimizer execution"""
    method: str
    seed: Optional[int] = None
    config: Dict[str, Any] = field(default_factory=dict)
    best_fitness: float = float("-inf")
    best_rule_text: str = ""
    best_rule_bits: str = ""
    subgroup_size: int = 0
    feasible: bool = False
    subgroup_hash: str = ""
    wall_time: float = 0.0
    trace: List[Dict[str, Any]] = field(default_factory=list)
    classes: List[Dict[str, Any]] = field(default_factory=list)
    extra: Dict[str, Any] = field(default_factory=dict)

    def best_trace(self) -> List[float]:
        return [row["best_fitness"] for row in self.trace]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def write_log(self, writer: JsonlWriter, **context: Any) -> None:
        """Header line, then one line per trace row and per class summary"""
        header = {k: v for k, v in self.to_dict().items() if k not in ("trace", "classes")}
        header.update(context)
        writer.write("run", **header)
        for row in self.trace:
            writer.write("trace", method=self.method, seed=self.seed, **row)
        for row in self.classes:
            writer.write("class", method=self.method, seed=self.seed, **row)


class Optimizer(ABC):
    """Base class for rule search methods"""

    name = "optimizer"

    def __init__(self):
        self.logger = Logger()

    @abstractmethod
    def search(self, record: RunRecord) -> None:
        """Fill ``record`` with the result of the search"""
        pass

    def config_snapshot(self) -> Dict[str, Any]:
        return {}

    def seed(self) -> Optional[int]:
        return None

    def run(self) -> RunRecord:
        """Time the search and return its record"""
        record = RunRecord(method=self.name, seed=self.seed(), config=self.config_snapshot())
        start = time.perf_counter()
        self.search(record)
        record.wall_time = time.perf_counter() - start
        self.logger.debug(
            f"{self.name}: best {record.best_fitness:.4f} ({record.best_rule_text}) in {record.wall_time:.2f}s"
        )
        return record
