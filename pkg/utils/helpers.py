"""
Helper utilities for file IO, hashing and seeding.
"""
import hashlib
import json
import random
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Tuple, Union

import torch

from core.logger import run_logger

PathLike = Union[str, Path]


class FileHelper:
    """File manipulation utilities."""

    @staticmethod
    def read_json(file_path: PathLike) -> Dict[str, Any]:
        """Read JSON file."""
        with open(file_path, "r", encoding="utf-8") as file:
            data = json.load(file)
        run_logger.debug(f"Read JSON file: {file_path}")
        return data

    @staticmethod
    def write_json(file_path: PathLike, data: Dict[str, Any], sort_keys: bool = True):
        """Write data to JSON file (UTF-8, LF, deterministic key order)."""
        Path(file_path).parent.mkdir(parents=True, exist_ok=True)
        with open(file_path, "w", encoding="utf-8", newline="\n") as file:
            json.dump(data, file, indent=2, sort_keys=sort_keys, ensure_ascii=False)
            file.write("\n")
        run_logger.debug(f"Wrote JSON file: {file_path}")

    @staticmethod
    def read_jsonl(file_path: PathLike) -> Iterator[Tuple[int, str]]:
        """Yield (1-based line number, raw line) for every non-blank line.

        Raises ValueError naming the line when it is not valid UTF-8.
        """
        with open(file_path, "rb") as file:
            for line_number, raw in enumerate(file, start=1):
                try:
                    line = raw.decode("utf-8")
                except UnicodeDecodeError as e:
                    raise ValueError(f"line {line_number}: not valid UTF-8 ({e.reason} at byte {e.start})") from e
                if line.strip():
                    yield line_number, line

    @staticmethod
    def write_jsonl(file_path: PathLike, records: Iterable[Dict[str, Any]]):
        """Write one compact JSON object per LF-terminated line."""
        Path(file_path).parent.mkdir(parents=True, exist_ok=True)
        with open(file_path, "w", encoding="utf-8", newline="\n") as file:
            for record in records:
                file.write(json.dumps(record, ensure_ascii=False, separators=(", ", ": ")))
                file.write("\n")
        run_logger.debug(f"Wrote JSONL file: {file_path}")


class HashHelper:
    """Content digests used by manifests and checkpoints."""

    @staticmethod
    def sha256_text(text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    @staticmethod
    def sha256_json(data: Any) -> str:
        canonical = json.dumps(data, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
        return HashHelper.sha256_text(canonical)

    @staticmethod
    def sha256_file(file_path: PathLike) -> str:
        digest = hashlib.sha256()
        with open(file_path, "rb") as file:
            for chunk in iter(lambda: file.read(65536), b""):
                digest.update(chunk)
        return digest.hexdigest()


def set_seeds(seed: int):
    """Seed every RNG the pipeline touches and force deterministic kernels."""
    random.seed(seed)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def parse_float_list(raw: str) -> List[float]:
    """Parse "0.5,0.6" into floats; an empty string gives an empty list."""
    return [float(part) for part in raw.split(",") if part.strip()]


def parse_int_list(raw: str) -> List[int]:
    """Parse "800,100,100" into ints."""
    return [int(part) for part in raw.split(",") if part.strip()]
