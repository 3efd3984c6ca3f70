"""Storage partition resolution for the four third-party storage policies.

A partition key names the identity a cookie jar and DOM-storage buckets live
under. First-party storage is keyed the same way under every policy; the
policies differ only in what they hand third parties:

* permissive   - one global partition per third-party site
* blocking     - no partition at all; every access is a silent no-op
* site-keyed   - persistent partition per (first-party site, third-party site)
* page-length  - ephemeral partition per (page load, third-party site),
                 destroyed when the top-level page goes away

Partition identity is site-granular (eTLD+1) by default; ``origin_keyed``
switches the third-party identifier to scheme://host[:port].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from urllib.parse import urlsplit

from storagelab.cookies import CookieJar, cookies_for_request, parse_set_cookie
from storagelab.psl import SuffixRuleSet, etld_plus_one


class PolicyKind(Enum):
    PERMISSIVE = "permissive"
    BLOCKING = "blocking"
    SITE_KEYED = "site-keyed"
    PAGE_LENGTH = "page-length"


class Party(Enum):
    FIRST = "first"
    THIRD = "third"


@dataclass(frozen=True)
class FirstParty:
    site: str


@dataclass(frozen=True)
class GlobalThirdParty:
    site: str


@dataclass(frozen=True)
class SiteKeyedThirdParty:
    first_party_site: str
    third_party_site: str


@dataclass(frozen=True)
class Ephemeral:
    load_key: int
    third_party_site: str


@dataclass(frozen=True)
class Blocked:
    pass


PartitionKey = FirstParty | GlobalThirdParty | SiteKeyedThirdParty | Ephemeral | Blocked

BLOCKED = Blocked()

STORAGE_APIS = ("cookie", "local", "session", "indexed")


def host_of(url: str) -> str:
    host = urlsplit(url).hostname
    if not host:
        raise ValueError(f"URL has no host: {url!r}")
    return host.lower()


def site_of(url: str, rules: SuffixRuleSet) -> str:
    """eTLD+1 of the URL's host; hosts with no registrable domain (bare
    suffixes, IP addresses) are their own site."""
    host = host_of(url)
    return etld_plus_one(host, rules) or host


def origin_of(url: str) -> str:
    parts = urlsplit(url)
    if not parts.hostname:
        raise ValueError(f"URL has no host: {url!r}")
    origin = f"{parts.scheme}://{parts.hostname.lower()}"
    if parts.port is not None:
        origin += f":{parts.port}"
    return origin


def classify_party(subject_url: str, top_url: str, rules: SuffixRuleSet) -> Party:
    """First party iff the subject's site equals the top-level page's site.

    Nested frames classify against the top-level URL, never an intermediate
    parent.
    """
    return Party.FIRST if site_of(subject_url, rules) == site_of(top_url, rules) else Party.THIRD


def resolve_partition(
    policy: PolicyKind,
    top_url: str,
    load_key: int,
    subject_url: str,
    rules: SuffixRuleSet,
    *,
    origin_keyed: bool = False,
) -> PartitionKey:
    """Partition key for a frame (script storage) or request destination."""
    top_site = site_of(top_url, rules)
    if classify_party(subject_url, top_url, rules) is Party.FIRST:
        return FirstParty(top_site)
    subject = origin_of(subject_url) if origin_keyed else site_of(subject_url, rules)
    if policy is PolicyKind.PERMISSIVE:
        return GlobalThirdParty(subject)
    if policy is PolicyKind.BLOCKING:
        return BLOCKED
    if policy is PolicyKind.SITE_KEYED:
        return SiteKeyedThirdParty(top_site, subject)
    return Ephemeral(load_key, subject)


@dataclass
class StorageArea:
    """One cookie jar plus the keyed DOM-storage buckets of a partition.

    Session buckets are additionally scoped per (tab, load); the scope token
    is supplied by the caller and is uniform across policies.
    """

    jar: CookieJar = field(default_factory=CookieJar)
    local: dict[str, str] = field(default_factory=dict)
    indexed: dict[str, str] = field(default_factory=dict)
    session: dict[str, dict[str, str]] = field(default_factory=dict)


class PartitionStore:
    """All storage areas of one simulated browser profile.

    Areas are created empty on first touch and live exactly as long as their
    partition key: persistent keys survive page loads, ephemeral keys die
    with :meth:`end_page_load`. A Blocked key never stores anything.
    """

    def __init__(self) -> None:
        self.persistent: dict[PartitionKey, StorageArea] = {}
        self.ephemeral: dict[PartitionKey, StorageArea] = {}

    def area(self, key: PartitionKey) -> StorageArea | None:
        if isinstance(key, Blocked):
            return None
        bucket = self.ephemeral if isinstance(key, Ephemeral) else self.persistent
        if key not in bucket:
            bucket[key] = StorageArea()
        return bucket[key]

    def storage_access(
        self,
        key: PartitionKey,
        op: str,
        api: str,
        storage_key: str | None = None,
        value: str | None = None,
        *,
        url: str | None = None,
        now: float = 0.0,
        session_scope: str = "",
    ) -> str | None:
        """Perform one storage operation under a partition key.

        Blocked keys make every op a silent no-op; get returns None rather
        than raising. ``url`` is required for the cookie api (it provides the
        setting host and request path).
        """
        if api not in STORAGE_APIS:
            raise ValueError(f"unknown storage api {api!r}")
        if op not in ("get", "set", "delete", "clear"):
            raise ValueError(f"unknown storage op {op!r}")
        area = self.area(key)
        if area is None:
            return None

        if api == "cookie":
            if url is None:
                raise ValueError("cookie access requires the frame URL")
            return self._cookie_access(area.jar, op, storage_key, value, url, now)

        if api == "session":
            bucket = area.session.setdefault(session_scope, {})
        else:
            bucket = area.local if api == "local" else area.indexed

        if op == "get":
            return bucket.get(storage_key)  # type: ignore[arg-type]
        if op == "set":
            bucket[storage_key] = value  # type: ignore[index]
        elif op == "delete":
            bucket.pop(storage_key, None)
        else:
            bucket.clear()
        return None

    @staticmethod
    def _cookie_access(
        jar: CookieJar, op: str, name: str | None, value: str | None, url: str, now: float
    ) -> str | None:
        if op == "get":
            for cookie_name, cookie_value in cookies_for_request(jar, url, now):
                if cookie_name == name:
                    return cookie_value
            return None
        if op == "set":
            cookie = parse_set_cookie(f"{name}={value if value is not None else ''}", url, now)
            if cookie is not None:
                jar.add(cookie)
        elif op == "delete":
            host = urlsplit_host(url)
            for cookie in jar.cookies():
                if cookie.name == name and (cookie.domain == host or host.endswith("." + cookie.domain)):
                    jar.remove(cookie.name, cookie.domain, cookie.path)
        else:
            jar.clear()
        return None

    def end_page_load(self, load_key: int) -> None:
        """Destroy every ephemeral area minted under ``load_key``. Idempotent."""
        dead = [k for k in self.ephemeral if isinstance(k, Ephemeral) and k.load_key == load_key]
        for k in dead:
            del self.ephemeral[k]


def urlsplit_host(url: str) -> str:
    return (urlsplit(url).hostname or "").lower()
