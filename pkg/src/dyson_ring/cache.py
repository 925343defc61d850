"""Memoization of expensive solves with memory and disk backends."""

import hashlib
import logging
import os
from abc import ABC, abstractmethod
from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, Optional

try:
    import diskcache

    DISKCACHE_AVAILABLE = True
except ImportError:
    DISKCACHE_AVAILABLE = False


logger = logging.getLogger(__name__)

DEFAULT_CACHE_DIR = "~/.dyson_ring_cache"


@dataclass
class CacheStats:
    """Cache statistics."""

    hits: int = 0
    misses: int = 0
    sets: int = 0
    errors: int = 0

    @property
    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return (self.hits / total * 100) if total > 0 else 0.0

    def to_dict(self) -> Dict:
        return {**asdict(self), "hit_rate": self.hit_rate}


class CacheBackend(ABC):
    """Storage behind a :class:`SolutionCache`."""

    @abstractmethod
    def get(self, key: str) -> Optional[Any]:
        """Get value from cache."""

    @abstractmethod
    def set(self, key: str, value: Any) -> bool:
        """Store value."""

    def __len__(self) -> int:
        return 0

    def close(self):
        """Release held resources."""


class MemoryCache(CacheBackend):
    """Bounded in-memory backend with FIFO eviction."""

    def __init__(self, max_size: int = 10000):
        self._cache: "OrderedDict[str, Any]" = OrderedDict()
        self.max_size = max_size

    def get(self, key: str) -> Optional[Any]:
        return self._cache.get(key)

    def set(self, key: str, value: Any) -> bool:
        if key not in self._cache and len(self._cache) >= self.max_size:
            self._cache.popitem(last=False)
        self._cache[key] = value
        return True

    def __len__(self) -> int:
        return len(self._cache)


class DiskCache(CacheBackend):
    """Persistent backend using diskcache."""

    def __init__(self, cache_dir: str = DEFAULT_CACHE_DIR):
        if not DISKCACHE_AVAILABLE:
            raise ImportError(
                "diskcache not available. Install with: pip install 'dyson-ring[cache]'"
            )
        cache_dir = os.path.expanduser(cache_dir)
        self._cache = diskcache.Cache(cache_dir)
        logger.info(f"Disk cache initialized at {cache_dir}")

    def get(self, key: str) -> Optional[Any]:
        return self._cache.get(key)

    def set(self, key: str, value: Any) -> bool:
        try:
            return bool(self._cache.set(key, value))
        except Exception as e:
            logger.error(f"Cache set error: {e}")
            return False

    def __len__(self) -> int:
        return len(self._cache)

    def close(self):
        self._cache.close()


def _canonical(value: Any) -> str:
    """Stable text form; floats use repr so distinct inputs never collide."""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_canonical(v) for v in value) + "]"
    if hasattr(value, "tolist"):
        return _canonical(value.tolist())
    if hasattr(value, "__dataclass_fields__"):
        return _canonical(
            [(k, getattr(value, k)) for k in sorted(value.__dataclass_fields__)]
        )
    return str(value)


class SolutionCache:
    """Cache of solver outputs keyed by a hash of the problem definition.

    Solutions are deterministic given their inputs, so entries never expire.
    """

    def __init__(
        self,
        backend: str = "memory",
        cache_dir: Optional[str] = None,
        max_memory_size: int = 10000,
        enabled: bool = True,
    ):
        """
        Initialize solution cache.

        Args:
            backend: 'memory' or 'disk'
            cache_dir: Directory for the disk backend
            max_memory_size: Maximum entries held by the memory backend
            enabled: Whether caching is enabled
        """
        self.enabled = enabled
        self.stats = CacheStats()
        self._backend: Optional[CacheBackend] = None

        if not enabled:
            logger.info("Solution cache disabled")
            return

        try:
            if backend == "disk":
                self._backend = DiskCache(cache_dir or DEFAULT_CACHE_DIR)
            else:
                self._backend = MemoryCache(max_size=max_memory_size)
                logger.debug(f"Using memory cache (max {max_memory_size} items)")
        except Exception as e:
            logger.error(f"Cache initialization failed: {e}")
            logger.warning("Falling back to memory cache")
            self._backend = MemoryCache(max_size=max_memory_size)

    @property
    def backend_name(self) -> str:
        if self._backend is None:
            return "disabled"
        return "disk" if isinstance(self._backend, DiskCache) else "memory"

    def make_key(self, prefix: str, *args, **kwargs) -> str:
        """SHA-256 over the prefix and canonicalized arguments."""
        parts = [prefix]
        parts.extend(_canonical(arg) for arg in args)
        parts.extend(f"{k}={_canonical(v)}" for k, v in sorted(kwargs.items()))
        return hashlib.sha256("|".join(parts).encode()).hexdigest()

    def get(self, key: str) -> Optional[Any]:
        if not self.enabled or self._backend is None:
            return None
        try:
            value = self._backend.get(key)
        except Exception as e:
            self.stats.errors += 1
            logger.error(f"Cache get error: {e}")
            return None
        if value is not None:
            self.stats.hits += 1
            logger.debug(f"Cache hit: {key[:16]}...")
        else:
            self.stats.misses += 1
        return value

    def set(self, key: str, value: Any) -> bool:
        if not self.enabled or self._backend is None:
            return False
        try:
            ok = self._backend.set(key, value)
        except Exception as e:
            self.stats.errors += 1
            logger.error(f"Cache set error: {e}")
            return False
        if ok:
            self.stats.sets += 1
        return ok

    def get_or_compute(self, key: str, compute: Callable[[], Any]) -> Any:
        value = self.get(key)
        if value is None:
            value = compute()
            self.set(key, value)
        return value

    def __len__(self) -> int:
        return len(self._backend) if self._backend is not None else 0

    def get_stats(self) -> Dict:
        return {**self.stats.to_dict(), "backend": self.backend_name, "size": len(self)}

    def close(self):
        if self._backend is not None:
            self._backend.close()

