"""
CSV tables and the run manifest
"""
import time
from pathlib import Path
from typing import Dict, List

import pandas as pd

from sbelab import __version__
from sbelab.common.utils import sha256_file
from sbelab.models.schemas import ExperimentSpec, RunManifest

FLOAT_FORMAT = "%.12e"


class RunWriter:
    """
    Single writer for one run: every table gets the physical columns
    prepended and is checksummed into ``manifest.txt``
    """

    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.out = Path(spec.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: Dict[str, str] = {}
        self.gates: Dict[str, bool] = {}
        self._clock = time.perf_counter()
        self.manifest = RunManifest(
            spec=_snapshot(spec),
            code_version=__version__,
            seed=spec.seed,
        )

    @property
    def run_id(self) -> str:
        return f"{self.spec.experiment.value}-{self.spec.seed}"

    def write_table(self, name: str, frame: pd.DataFrame) -> Path:
        """Run columns clashing with a table column (a swept N or dt) are written as ``run_<name>``"""
        frame = frame.copy()
        for i, (column, value) in enumerate(self.spec.physical_columns().items()):
            frame.insert(i, f"run_{column}" if column in frame.columns else column, value)
        path = self.out / f"{name}.csv"
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        self.files[path.name] = sha256_file(path)
        return path

    def gate(self, name: str, passed: bool) -> bool:
        self.gates[name] = bool(passed)
        return bool(passed)

    @property
    def failed_gates(self) -> List[str]:
        return [name for name, ok in self.gates.items() if not ok]

    def finish(self) -> Path:
        manifest = self.manifest.model_copy(update={
            "wall_time_s": time.perf_counter() - self._clock,
            "files": dict(self.files),
            "gates": dict(self.gates),
        })
        path = self.out / "manifest.txt"
        lines = [
            f"code_version = {manifest.code_version}",
            f"seed = {manifest.seed}",
            f"started_at = {manifest.started_at.isoformat()}",
            f"wall_time_s = {manifest.wall_time_s:.3f}",
        ]
        lines += [f"spec.{key} = {value}" for key, value in manifest.spec.items()]
        lines += [f"file.{name} = sha256:{digest}" for name, digest in sorted(manifest.files.items())]
        lines += [f"gate.{name} = {'pass' if ok else 'fail'}" for name, ok in manifest.gates.items()]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


def _snapshot(spec: ExperimentSpec) -> Dict[str, object]:
    """Flat echo of every parameter of the run"""
    flat: Dict[str, object] = {}
    for key, value in spec.model_dump(mode="json").items():
        if key == "config":
            flat.update(value)
        elif isinstance(value, list):
            flat[key] = ",".join(str(v) for v in value)
        else:
            flat[key] = value
    return flat
