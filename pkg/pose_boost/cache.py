# pose_boost/cache.py
"""
File-backed cache of finished experiment runs.

- Storage: diskcache.Cache.
- Location: a visible folder in CWD by default, or the OS-specific app cache
  dir via platformdirs when `directory` is "os-default".
- Keys: ``<config digest hex>:<purpose>``. Values: JSON-compatible dicts
  (metrics reports), so an interrupted ablation sweep resumes where it stopped.
"""
from __future__ import annotations

import dataclasses
import logging
from pathlib import Path
from typing import Any, Optional

import diskcache
from platformdirs import user_cache_dir

log = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class CacheConfig:
    enabled: bool = True
    # A concrete directory path, or "os-default" for the platform cache location.
    directory: str = ".pose_boost_cache"
    expire_seconds: Optional[int] = None  # never expire


def run_key(digest: bytes, purpose: str = "eval") -> str:
    return f"{digest.hex()}:{purpose}"


class RunCache:
    """Finished-run store over diskcache; a disabled cache answers every lookup with a miss."""

    def __init__(self, cfg: CacheConfig, app_name: str = "pose_boost") -> None:
        self.cfg = cfg
        self.app_name = app_name
        self._store: diskcache.Cache | None = None
        if not cfg.enabled:
            log.warning("Run cache disabled; every variant will be recomputed")
            return
        location = user_cache_dir(app_name, appauthor=False) if cfg.directory == "os-default" else cfg.directory
        log.info("Run cache at %s", location)
        self._store = diskcache.Cache(location)

    def __enter__(self) -> "RunCache":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()

    def close(self) -> None:
        if self._store is not None:
            self._store.close()

    @property
    def directory(self) -> Optional[str]:
        return None if self._store is None else str(self._store.directory)

    def stats(self) -> dict[str, int | str]:
        """Stored runs, bytes on disk (sqlite plus value files) and the absolute location."""
        if self._store is None:
            return {"items": 0, "bytes": 0, "directory": ""}
        return {
            "items": len(self._store),
            "bytes": int(self._store.volume()),
            "directory": str(Path(self._store.directory).resolve()),
        }

    def clear_all(self) -> None:
        if self._store is not None:
            removed = self._store.clear()
            log.info("Removed %d cached runs", removed)

    def get(self, key: str) -> Optional[dict[str, Any]]:
        if self._store is None:
            return None
        report = self._store.get(key)
        if report is not None:
            log.debug("Run cache hit for %s", key)
        return report

    def set(self, key: str, report: dict[str, Any]) -> None:
        if self._store is not None:
            self._store.set(key, report, expire=self.cfg.expire_seconds)
