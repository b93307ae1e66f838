"""
Result store persisting finished batch cells so that an interrupted batch
can resume where it stopped.
"""
import json
import logging
import os
from typing import Any, Dict, Iterator, Optional

import redis
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from .metrics import MetricsCollector, default_metrics

logger = logging.getLogger(__name__)

_redis_retry = retry(
    retry=retry_if_exception_type(redis.exceptions.ConnectionError),
    stop=stop_after_attempt(3),
    wait=wait_exponential(multiplier=0.1, max=2.0),
    reraise=True,
)


class ResultStore:
    """
    Key-value store of JSON documents with a file or redis backend.

    Keys are isolated by ``namespace``; the redis backend retries transient
    connection errors.
    """
    def __init__(
        self,
        backend: str = 'file',
        namespace: str = 'cormcts',
        redis_url: str = 'redis://localhost:6379',
        file_path: Optional[str] = None,
        metrics: Optional[MetricsCollector] = None,
    ):
        """
        Args:
            backend: Storage backend ('file' or 'redis')
            namespace: Namespace for key isolation, typically one per batch
            redis_url: Redis connection URL if using the redis backend
            file_path: Path to the JSON file if using the file backend
            metrics: Optional custom metrics collector instance
        """
        self.backend = backend
        self.namespace = namespace
        self.metrics = metrics or default_metrics

        if backend == 'redis':
            self._client = redis.from_url(redis_url)
        elif backend == 'file':
            self.file_path = file_path or f'.cormcts_results_{namespace}.json'
            self._ensure_file_exists()
        else:
            raise ValueError(f"Unsupported backend: {backend}")

    def _ensure_file_exists(self) -> None:
        if not os.path.exists(self.file_path):
            with open(self.file_path, 'w') as f:
                json.dump({}, f)

    def _count(self, operation: str) -> None:
        self.metrics.store_operations.labels(operation, self.backend).inc()

    def _full_key(self, key: str) -> str:
        return f"{self.namespace}:{key}"

    def _read_file(self) -> Dict[str, str]:
        with open(self.file_path, 'r') as f:
            return json.load(f)

    def _write_file(self, data: Dict[str, str]) -> None:
        tmp_path = f"{self.file_path}.tmp"
        with open(tmp_path, 'w') as f:
            json.dump(data, f, sort_keys=True)
        os.replace(tmp_path, self.file_path)

    @_redis_retry
    def _redis_set(self, full_key: str, serialized: str) -> None:
        self._client.set(full_key, serialized)

    @_redis_retry
    def _redis_get(self, full_key: str) -> Optional[bytes]:
        return self._client.get(full_key)

    def set(self, key: str, value: Any) -> None:
        """Store a JSON-serializable value."""
        full_key = self._full_key(key)
        serialized = json.dumps(value, sort_keys=True)
        self._count('set')

        if self.backend == 'redis':
            self._redis_set(full_key, serialized)
        else:
            data = self._read_file()
            data[full_key] = serialized
            self._write_file(data)

    def get(self, key: str, default: Any = None) -> Any:
        """Get a value, or ``default`` if it is missing or unreadable."""
        full_key = self._full_key(key)
        self._count('get')

        try:
            if self.backend == 'redis':
                value = self._redis_get(full_key)
            else:
                value = self._read_file().get(full_key)
            if value is None:
                return default
            return json.loads(value)
        except json.JSONDecodeError:
            logger.warning(f"Discarding unreadable entry {full_key}")
            return default

    def delete(self, key: str) -> None:
        full_key = self._full_key(key)
        self._count('delete')

        if self.backend == 'redis':
            self._client.delete(full_key)
        else:
            data = self._read_file()
            data.pop(full_key, None)
            self._write_file(data)

    def keys(self) -> Iterator[str]:
        """Keys of the current namespace, without the namespace prefix."""
        prefix = f"{self.namespace}:"
        if self.backend == 'redis':
            raw = (k.decode() if isinstance(k, bytes) else k for k in self._client.keys(f"{prefix}*"))
        else:
            raw = iter(self._read_file())
        for key in sorted(raw):
            if key.startswith(prefix):
                yield key[len(prefix):]

    def clear(self) -> None:
        """Clear all values in the current namespace."""
        self._count('clear')
        if self.backend == 'redis':
            keys = self._client.keys(f"{self.namespace}:*")
            if keys:
                self._client.delete(*keys)
        else:
            data = self._read_file()
            data = {k: v for k, v in data.items() if not k.startswith(f"{self.namespace}:")}
            self._write_file(data)
