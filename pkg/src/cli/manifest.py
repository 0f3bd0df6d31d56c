"""
執行紀錄（manifest）與確定性的輸出寫入
相同輸入、設定與種子必須產生逐位元相同的檔案，因此不記錄時間戳記與執行緒數
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..core.exceptions import ValidationError

TOOL_NAME = 'roll-match'
TOOL_VERSION = '0.1.0'
MANIFEST_FILE = 'manifest.json'


def hash_file(path) -> str:
    """檔案內容的 sha256"""
    digest = hashlib.sha256()
    try:
        with open(path, 'rb') as f:
            for chunk in iter(lambda: f.read(1 << 16), b''):
                digest.update(chunk)
    except OSError as e:
        raise ValidationError(f"cannot read input file {path}: {e.strerror or e}")
    return digest.hexdigest()


def dumps(data: Any) -> str:
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=True) + '\n'


def write_json(path, data: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(dumps(data))
    return path


def read_json(path) -> Any:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except OSError as e:
        raise ValidationError(f"cannot read input file {path}: {e.strerror or e}")
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path} is not valid JSON: {e}")


@dataclass
class RunManifest:
    """單次執行的紀錄"""
    subcommand: str
    config: Dict[str, Any] = field(default_factory=dict)
    input_hashes: Dict[str, str] = field(default_factory=dict)
    seed: Optional[int] = None
    artifacts: List[str] = field(default_factory=list)
    tool_version: str = TOOL_VERSION

    def add_input(self, label: str, path) -> str:
        digest = hash_file(path)
        self.input_hashes[label] = digest
        return digest

    def add_artifact(self, path) -> Path:
        path = Path(path)
        if path.name not in self.artifacts:
            self.artifacts.append(path.name)
        return path

    def to_dict(self) -> Dict[str, Any]:
        return {
            'tool': TOOL_NAME,
            'tool_version': self.tool_version,
            'subcommand': self.subcommand,
            'config': self.config,
            'input_hashes': dict(sorted(self.input_hashes.items())),
            'seed': self.seed,
            'artifacts': sorted(self.artifacts),
        }

    def write(self, out_dir) -> Path:
        return write_json(Path(out_dir) / MANIFEST_FILE, self.to_dict())
