"""The zone catalog: users, resources, collections, objects, metadata,
policies, procedures, plus the audit trail.

Every mutation is validated against the caller, applied to in-memory
state, and recorded as one journal entry; replaying entries 1..k from an
empty catalog reproduces the state after the k-th mutation exactly. A
full snapshot is written every SNAPSHOT_EVERY mutations; recovery is
latest snapshot plus tail replay.

All state is kept as JSON-able dicts so snapshots, replay, and deep
state comparison share one representation. Callers get immutable view
dataclasses, never the internal dicts.

Mutations are serialized through one lock (the journal sequence is the
linearization order); the catalog object may be shared across threads.
"""

from __future__ import annotations

import copy
import hashlib
import hmac
import os
import posixpath
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

from .common import SYSTEM, glob_match, now_us, sha256_hex
from .errors import (
    ChecksumMismatch,
    CorruptJournal,
    DuplicateName,
    DuplicateReplica,
    DuplicateRuleName,
    MalformedPredicate,
    NoParent,
    NoSuchObject,
    NoSuchPath,
    NoSuchReplica,
    NoSuchResource,
    NoSuchRule,
    NoSuchRun,
    NoSuchUser,
    NoSuchWorkflow,
    PermissionDenied,
    UnknownDriver,
    ZoneError,
)
from .journal import Journal, canonical_json, validate_record, SNAPSHOT_EVERY

ROLES = ("admin", "user")
COLLECTION_KINDS = ("plain", "stream", "workflow")
RESOURCE_KINDS = ("cache", "archive")
REPLICA_STATUSES = ("good", "stale", "suspect")

PERM_ORDER = {"read": 1, "write": 2, "own": 3}

MAX_PATH_BYTES = 4096
_NAME_RE = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9_.-]{0,127}$")
_CHECKSUM_RE = re.compile(r"^[0-9a-f]{64}$")

_PBKDF2_ITERATIONS = 100_000


# --------------------------------------------------------------------------
# Views handed to callers
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class UserView:
    name: str
    role: str
    groups: tuple[str, ...]


@dataclass(frozen=True)
class ResourceView:
    name: str
    driver_name: str
    root: str
    kind: str


@dataclass(frozen=True)
class CollectionView:
    path: str
    owner: str
    acl: dict
    kind: str


@dataclass(frozen=True)
class ReplicaView:
    resource: str
    physical_ref: str
    checksum: str
    size: int
    status: str


@dataclass(frozen=True)
class ObjectView:
    path: str
    owner: str
    acl: dict
    version: int
    replicas: tuple[ReplicaView, ...]

    @property
    def checksum(self) -> str:
        return self.replicas[0].checksum


@dataclass(frozen=True)
class AvuTriple:
    attr_name: str
    attr_value: str
    attr_comment: str = ""


@dataclass(frozen=True)
class AuditEntry:
    seq: int
    when: int
    actor: str
    event: str
    detail: str


@dataclass(frozen=True)
class RuleEntryView:
    name: str
    pep: str
    priority: int
    text: str


# --------------------------------------------------------------------------
# Path helpers
# --------------------------------------------------------------------------

def validate_path(path: str) -> str:
    if not isinstance(path, str) or not path.startswith("/"):
        raise NoSuchPath(f"not an absolute logical path: {path!r}")
    if len(path.encode("utf-8")) > MAX_PATH_BYTES:
        raise NoSuchPath("logical path too long")
    if path == "/":
        return path
    if path.endswith("/"):
        raise NoSuchPath(f"trailing slash in {path!r}")
    for seg in path.split("/")[1:]:
        if seg in ("", ".", ".."):
            raise NoSuchPath(f"bad path segment in {path!r}")
    return path


def parent_path(path: str) -> str:
    return posixpath.dirname(path.rstrip("/")) or "/"


# --------------------------------------------------------------------------
# Metadata query predicate
# --------------------------------------------------------------------------

_PRED_TOKEN = re.compile(
    r'\s*(?:(?P<field>name|value|comment)\b'
    r'|(?P<op>!=|=|\blike\b)'
    r'|(?P<conj>\band\b|&&)'
    r'|"(?P<lit>(?:[^"\\\n]|\\["\\n])*)")'
)

_FIELDS = ("name", "value")


class AvuPredicate:
    """Conjunction of (field op literal) clauses over attribute name and
    value; op is =, !=, or like (glob with * and ?). A path matches when
    at least one of its triples satisfies every clause.
    """

    def __init__(self, clauses: list[tuple[str, str, str]]):
        if not clauses:
            raise MalformedPredicate("empty predicate")
        for field, op, _lit in clauses:
            if field not in _FIELDS:
                raise MalformedPredicate(f"unknown field {field!r}")
            if op not in ("=", "!=", "like"):
                raise MalformedPredicate(f"unknown operator {op!r}")
        self.clauses = list(clauses)

    @classmethod
    def parse(cls, text: str) -> "AvuPredicate":
        if not isinstance(text, str):
            raise MalformedPredicate("predicate must be a string")
        pos = 0
        clauses: list[tuple[str, str, str]] = []
        expect_clause = True
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            if expect_clause:
                field = cls._take(text, pos, "field")
                pos = field[1]
                op = cls._take(text, pos, "op")
                pos = op[1]
                lit = cls._take(text, pos, "lit")
                pos = lit[1]
                raw = lit[0].replace('\\"', '"').replace("\\\\", "\\") \
                            .replace("\\n", "\n")
                clauses.append((field[0], op[0], raw))
                expect_clause = False
            else:
                conj = cls._take(text, pos, "conj")
                pos = conj[1]
                expect_clause = True
        if expect_clause:
            raise MalformedPredicate("dangling conjunction or empty predicate")
        return cls(clauses)

    @staticmethod
    def _take(text: str, pos: int, group: str) -> tuple[str, int]:
        m = _PRED_TOKEN.match(text, pos)
        if m is None or m.lastgroup != group:
            raise MalformedPredicate(
                f"expected {group} at offset {pos} in {text!r}")
        return m.group(group), m.end()

    def matches_triple(self, name: str, value: str) -> bool:
        for field, op, lit in self.clauses:
            actual = name if field == "name" else value
            if op == "=":
                ok = actual == lit
            elif op == "!=":
                ok = actual != lit
            else:
                ok = glob_match(actual, lit)
            if not ok:
                return False
        return True


# --------------------------------------------------------------------------
# Catalog
# --------------------------------------------------------------------------

def _hash_secret(secret: str, salt_hex: str | None = None) -> str:
    salt = bytes.fromhex(salt_hex) if salt_hex else os.urandom(16)
    digest = hashlib.pbkdf2_hmac(
        "sha256", secret.encode("utf-8"), salt, _PBKDF2_ITERATIONS)
    return f"pbkdf2${_PBKDF2_ITERATIONS}${salt.hex()}${digest.hex()}"


def _check_secret(secret: str, stored: str) -> bool:
    try:
        scheme, iters, salt_hex, digest_hex = stored.split("$")
        if scheme != "pbkdf2":
            return False
        digest = hashlib.pbkdf2_hmac(
            "sha256", secret.encode("utf-8"), bytes.fromhex(salt_hex),
            int(iters))
        return hmac.compare_digest(digest.hex(), digest_hex)
    except (ValueError, TypeError):
        return False


class Catalog:
    """See module docstring. Pass journal_dir=None for a purely in-memory
    catalog (used for oracles and fast tests)."""

    def __init__(self, journal_dir: str | Path | None = None,
                 driver_names: Callable[[], Iterable[str]] | None = None):
        self._lock = threading.RLock()
        self._driver_names = driver_names
        self._journal: Journal | None = None
        self._records: list[dict] = []
        self._reset_state()
        if journal_dir is not None:
            self._journal = Journal(journal_dir)
            self._recover()

    def _reset_state(self) -> None:
        self._seq = 0
        self._users: dict[str, dict] = {}
        self._resources: dict[str, dict] = {}
        self._collections: dict[str, dict] = {}
        self._objects: dict[str, dict] = {}
        self._avus: dict[str, list[list[str]]] = {}
        self._rules: dict[str, dict] = {}
        self._rule_version = 0
        self._workflows: dict[str, dict] = {}
        self._runs: dict[str, dict] = {}
        self._orphans: list[dict] = []
        self._stream_counters: dict[str, int] = {}
        self._audit: list[dict] = []

    # -- journal plumbing -------------------------------------------------

    def _commit(self, op: str, args: dict) -> None:
        """Apply one validated mutation and journal it. Caller holds lock."""
        seq = self._seq + 1
        self._apply(op, args, seq)
        self._seq = seq
        record = {"seq": seq, "op": op, "args": args, "when": now_us()}
        self._records.append(record)
        if self._journal is not None:
            self._journal.append(record)
            if seq % SNAPSHOT_EVERY == 0:
                self._journal.write_snapshot(seq, self.state_dict())

    def _recover(self) -> None:
        assert self._journal is not None
        records = self._journal.read_records()
        for i, rec in enumerate(records):
            if rec["seq"] != i + 1:
                raise CorruptJournal(
                    f"sequence gap: record {i + 1} has seq {rec['seq']}")
        snap = self._journal.latest_snapshot()
        start = 0
        if snap is not None:
            snap_seq, state = snap
            if snap_seq > len(records):
                raise CorruptJournal(
                    f"snapshot at seq {snap_seq} but journal ends at "
                    f"{len(records)}")
            self._load_state(state)
            self._seq = snap_seq
            start = snap_seq
        for rec in records[start:]:
            try:
                self._apply(rec["op"], rec["args"], rec["seq"])
            except (KeyError, ValueError, TypeError, ZoneError) as e:
                raise CorruptJournal(
                    f"replay failed at seq {rec['seq']}: {e}") from e
            self._seq = rec["seq"]
        self._records = records

    @classmethod
    def replay(cls, records: Iterable[dict]) -> "Catalog":
        """Rebuild a catalog purely from journal records."""
        catalog = cls()
        for i, raw in enumerate(records):
            rec = validate_record(raw)
            if rec["seq"] != i + 1:
                raise CorruptJournal(
                    f"sequence gap: record {i + 1} has seq {rec['seq']}")
            if rec["op"] not in _APPLY:
                raise CorruptJournal(f"unknown op {rec['op']!r}")
            try:
                catalog._apply(rec["op"], rec["args"], rec["seq"])
            except (KeyError, ValueError, TypeError, ZoneError) as e:
                raise CorruptJournal(
                    f"replay failed at seq {rec['seq']}: {e}") from e
            catalog._seq = rec["seq"]
            catalog._records.append(rec)
        return catalog

    def records(self) -> list[dict]:
        with self._lock:
            return copy.deepcopy(self._records)

    def close(self) -> None:
        with self._lock:
            if self._journal is not None:
                self._journal.close()

    # -- state serialization ----------------------------------------------

    def state_dict(self) -> dict:
        """Full state as a JSON-able tree; used by snapshots and tests."""
        with self._lock:
            return {
                "last_seq": self._seq,
                "users": copy.deepcopy(self._users),
                "resources": copy.deepcopy(self._resources),
                "collections": copy.deepcopy(self._collections),
                "objects": copy.deepcopy(self._objects),
                "avus": {p: sorted(ts) for p, ts in self._avus.items() if ts},
                "rules": copy.deepcopy(self._rules),
                "rule_version": self._rule_version,
                "workflows": copy.deepcopy(self._workflows),
                "runs": copy.deepcopy(self._runs),
                "orphans": copy.deepcopy(self._orphans),
                "stream_counters": dict(self._stream_counters),
                "audit": copy.deepcopy(self._audit),
            }

    def data_state_digest(self) -> str:
        """Digest of everything except the audit trail and sequence counter
        (those legitimately advance when an operation is denied)."""
        state = self.state_dict()
        state.pop("audit")
        state.pop("last_seq")
        return sha256_hex(canonical_json(state).encode("utf-8"))

    def _load_state(self, state: dict) -> None:
        state = copy.deepcopy(state)
        self._seq = state["last_seq"]
        self._users = state["users"]
        self._resources = state["resources"]
        self._collections = state["collections"]
        self._objects = state["objects"]
        self._avus = {p: [list(t) for t in ts]
                      for p, ts in state["avus"].items()}
        self._rules = state["rules"]
        self._rule_version = state["rule_version"]
        self._workflows = state["workflows"]
        self._runs = state["runs"]
        self._orphans = state["orphans"]
        self._stream_counters = state["stream_counters"]
        self._audit = state["audit"]

    # -- access helpers -----------------------------------------------------

    def _require_admin(self, caller: str) -> None:
        if caller == SYSTEM:
            return
        user = self._users.get(caller)
        if user is None or user["role"] != "admin":
            raise PermissionDenied(f"{caller!r} is not an administrator")

    def is_admin(self, name: str) -> bool:
        with self._lock:
            if name == SYSTEM:
                return True
            user = self._users.get(name)
            return user is not None and user["role"] == "admin"

    def require_admin(self, caller: str) -> None:
        with self._lock:
            self._require_admin(caller)

    def _node(self, path: str) -> dict | None:
        return self._objects.get(path) or self._collections.get(path)

    def check_access(self, path: str, user: str, need: str) -> bool:
        """True iff `user` holds at least `need` on `path`; own > write >
        read; administrators and the owner always pass."""
        if need not in PERM_ORDER:
            raise ValueError(f"unknown permission {need!r}")
        with self._lock:
            node = self._node(path)
            if node is None:
                raise NoSuchPath(path)
            if user == SYSTEM:
                return True
            record = self._users.get(user)
            if record is not None and record["role"] == "admin":
                return True
            if node["owner"] == user:
                return True
            held = 0
            acl = node["acl"]
            if user in acl:
                held = PERM_ORDER[acl[user]]
            groups = set(record["groups"]) if record else set()
            for g in groups:
                if g in acl:
                    held = max(held, PERM_ORDER[acl[g]])
            return held >= PERM_ORDER[need]

    def require_access(self, path: str, user: str, need: str) -> None:
        if not self.check_access(path, user, need):
            raise PermissionDenied(f"{user!r} lacks {need} on {path!r}")

    # -- users ---------------------------------------------------------------

    def create_user(self, caller: str, name: str, role: str,
                    secret: str) -> str:
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r}")
        if not _NAME_RE.match(name or ""):
            raise ValueError(f"bad user name {name!r}")
        with self._lock:
            self._require_admin(caller)
            if name in self._users:
                raise DuplicateName(f"user {name!r} already exists")
            self._commit("user.create", {
                "name": name, "role": role,
                "secret_hash": _hash_secret(secret), "groups": [],
            })
            self._commit("audit.append", {
                "actor": caller, "event": "user.create", "detail": name,
                "when": now_us(),
            })
        return name

    def add_user_to_group(self, caller: str, user: str, group: str) -> None:
        if not _NAME_RE.match(group or ""):
            raise ValueError(f"bad group name {group!r}")
        with self._lock:
            self._require_admin(caller)
            record = self._users.get(user)
            if record is None:
                raise NoSuchUser(user)
            if group in record["groups"]:
                return
            self._commit("user.group_add", {"user": user, "group": group})
            self._commit("audit.append", {
                "actor": caller, "event": "user.group_add",
                "detail": f"{user}+{group}", "when": now_us(),
            })

    def get_user(self, name: str) -> UserView:
        with self._lock:
            record = self._users.get(name)
            if record is None:
                raise NoSuchUser(name)
            return UserView(name=name, role=record["role"],
                            groups=tuple(sorted(record["groups"])))

    def user_exists(self, name: str) -> bool:
        with self._lock:
            return name in self._users

    def verify_secret(self, name: str, secret: str) -> bool:
        with self._lock:
            record = self._users.get(name)
            stored = record["secret_hash"] if record else _hash_secret("!")
        # Hash check runs either way so unknown-user and wrong-secret are
        # indistinguishable by timing as well as by error.
        return _check_secret(secret, stored) and record is not None

    def _group_known(self, name: str) -> bool:
        return any(name in u["groups"] for u in self._users.values())

    # -- resources -------------------------------------------------------------

    def register_resource(self, caller: str, name: str, driver_name: str,
                          root: str, kind: str) -> str:
        if kind not in RESOURCE_KINDS:
            raise ValueError(f"unknown resource kind {kind!r}")
        if not _NAME_RE.match(name or ""):
            raise ValueError(f"bad resource name {name!r}")
        with self._lock:
            self._require_admin(caller)
            if name in self._resources:
                raise DuplicateName(f"resource {name!r} already exists")
            if self._driver_names is not None and \
                    driver_name not in set(self._driver_names()):
                raise UnknownDriver(driver_name)
            self._commit("resource.register", {
                "name": name, "driver_name": driver_name,
                "root": root, "kind": kind,
            })
            self._commit("audit.append", {
                "actor": caller, "event": "resource.register",
                "detail": name, "when": now_us(),
            })
        return name

    def get_resource(self, name: str) -> ResourceView:
        with self._lock:
            record = self._resources.get(name)
            if record is None:
                raise NoSuchResource(name)
            return ResourceView(name=name, **record)

    def resources(self) -> list[ResourceView]:
        with self._lock:
            return [ResourceView(name=n, **r)
                    for n, r in sorted(self._resources.items())]

    # -- collections -------------------------------------------------------------

    def make_collection(self, caller: str, path: str, owner: str | None = None,
                        kind: str = "plain") -> str:
        validate_path(path)
        if kind not in COLLECTION_KINDS:
            raise ValueError(f"unknown collection kind {kind!r}")
        owner = owner or caller
        with self._lock:
            if path in self._collections or path in self._objects:
                raise DuplicateName(f"path {path!r} already exists")
            if path == "/":
                if self._collections:
                    raise DuplicateName("root already exists")
                self._require_admin(caller)
            else:
                parent = parent_path(path)
                if parent not in self._collections:
                    raise NoParent(parent)
                self.require_access(parent, caller, "write")
            if owner != SYSTEM and owner not in self._users:
                raise NoSuchUser(owner)
            self._commit("collection.create", {
                "path": path, "owner": owner, "kind": kind,
                "acl": {owner: "own"},
            })
        return path

    def get_collection(self, path: str) -> CollectionView:
        with self._lock:
            record = self._collections.get(path)
            if record is None:
                raise NoSuchPath(path)
            return CollectionView(path=path, owner=record["owner"],
                                  acl=dict(record["acl"]),
                                  kind=record["kind"])

    def collection_exists(self, path: str) -> bool:
        with self._lock:
            return path in self._collections

    def path_exists(self, path: str) -> bool:
        with self._lock:
            return path in self._collections or path in self._objects

    def list_collection(self, path: str) -> tuple[list[str], list[str]]:
        """Immediate children of a collection: (subcollections, objects)."""
        with self._lock:
            if path not in self._collections:
                raise NoSuchPath(path)
            subcolls = sorted(p for p in self._collections
                              if p != "/" and parent_path(p) == path)
            objects = sorted(p for p in self._objects
                             if parent_path(p) == path)
            return subcolls, objects

    def set_acl(self, caller: str, path: str, principal: str,
                perm: str) -> None:
        if perm not in PERM_ORDER:
            raise ValueError(f"unknown permission {perm!r}")
        with self._lock:
            node = self._node(path)
            if node is None:
                raise NoSuchPath(path)
            if not (caller == SYSTEM or self.is_admin(caller)
                    or node["owner"] == caller):
                raise PermissionDenied(
                    f"{caller!r} does not own {path!r}")
            if principal not in self._users and \
                    not self._group_known(principal):
                raise NoSuchUser(principal)
            self._commit("acl.set", {
                "path": path, "principal": principal, "perm": perm,
            })
            self._commit("audit.append", {
                "actor": caller, "event": "acl.set",
                "detail": f"{path} {principal}={perm}", "when": now_us(),
            })

    # -- metadata -------------------------------------------------------------

    def add_avu(self, caller: str, path: str, name: str, value: str,
                comment: str = "") -> None:
        if not name:
            raise ValueError("attribute name must be non-empty")
        with self._lock:
            if self._node(path) is None:
                raise NoSuchPath(path)
            self.require_access(path, caller, "write")
            triple = [name, value, comment]
            if triple in self._avus.get(path, []):
                return  # idempotent
            self._commit("avu.add", {
                "path": path, "name": name, "value": value,
                "comment": comment,
            })

    def avus(self, path: str) -> list[AvuTriple]:
        with self._lock:
            if self._node(path) is None:
                raise NoSuchPath(path)
            return [AvuTriple(*t) for t in self._avus.get(path, [])]

    def query_avu(self, predicate: "str | AvuPredicate") -> list[str]:
        """Paths with at least one triple satisfying the predicate,
        lexicographically ordered."""
        if isinstance(predicate, str):
            predicate = AvuPredicate.parse(predicate)
        if not isinstance(predicate, AvuPredicate):
            raise MalformedPredicate(f"not a predicate: {predicate!r}")
        with self._lock:
            hits = [
                path for path, triples in self._avus.items()
                if any(predicate.matches_triple(t[0], t[1]) for t in triples)
            ]
        return sorted(hits)

    # -- audit -------------------------------------------------------------

    def audit_append(self, actor: str, event: str, detail: str) -> None:
        """Internal: called by the engine and catalog, never by clients."""
        with self._lock:
            self._commit("audit.append", {
                "actor": actor, "event": event, "detail": detail,
                "when": now_us(),
            })

    def audit_query(self, caller: str, t_lo: int | None = None,
                    t_hi: int | None = None, event: str | None = None,
                    actor: str | None = None) -> list[AuditEntry]:
        with self._lock:
            self._require_admin(caller)
            out = []
            for e in self._audit:
                if t_lo is not None and e["when"] < t_lo:
                    continue
                if t_hi is not None and e["when"] >= t_hi:
                    continue
                if event is not None and e["event"] != event:
                    continue
                if actor is not None and e["actor"] != actor:
                    continue
                out.append(AuditEntry(**e))
            return out

    # -- objects (engine-mediated: authorization happens in the engine) ----

    def put_object(self, path: str, owner: str, resource: str,
                   physical_ref: str, checksum: str,
                   size: int) -> tuple[int, list[ReplicaView]]:
        """Create or version an object; returns (version, replaced replicas)."""
        validate_path(path)
        if not _CHECKSUM_RE.match(checksum):
            raise ValueError(f"bad checksum {checksum!r}")
        if size < 0:
            raise ValueError("negative size")
        with self._lock:
            if path in self._collections:
                raise DuplicateName(f"{path!r} is a collection")
            if parent_path(path) not in self._collections:
                raise NoParent(parent_path(path))
            existing = self._objects.get(path)
            replaced = [ReplicaView(**r) for r in existing["replicas"]] \
                if existing else []
            self._commit("object.put", {
                "path": path, "owner": owner, "resource": resource,
                "physical_ref": physical_ref, "checksum": checksum,
                "size": size,
            })
            return self._objects[path]["version"], replaced

    def add_replica(self, path: str, resource: str, physical_ref: str,
                    checksum: str, size: int, status: str = "good") -> None:
        if status not in REPLICA_STATUSES:
            raise ValueError(f"unknown replica status {status!r}")
        with self._lock:
            obj = self._objects.get(path)
            if obj is None:
                raise NoSuchObject(path)
            if any(r["resource"] == resource for r in obj["replicas"]):
                raise DuplicateReplica(
                    f"{path!r} already has a replica on {resource!r}")
            good = [r for r in obj["replicas"] if r["status"] == "good"]
            if status == "good" and good and good[0]["checksum"] != checksum:
                raise ChecksumMismatch(
                    f"replica checksum {checksum} disagrees with object")
            self._commit("replica.add", {
                "path": path, "resource": resource,
                "physical_ref": physical_ref, "checksum": checksum,
                "size": size, "status": status,
            })

    def set_replica_status(self, path: str, physical_ref: str,
                           status: str) -> None:
        if status not in REPLICA_STATUSES:
            raise ValueError(f"unknown replica status {status!r}")
        with self._lock:
            obj = self._objects.get(path)
            if obj is None:
                raise NoSuchObject(path)
            if not any(r["physical_ref"] == physical_ref
                       for r in obj["replicas"]):
                raise NoSuchReplica(physical_ref)
            self._commit("replica.status", {
                "path": path, "physical_ref": physical_ref, "status": status,
            })

    def remove_object(self, path: str) -> None:
        with self._lock:
            if path not in self._objects:
                raise NoSuchObject(path)
            self._commit("object.remove", {"path": path})

    def get_object(self, path: str) -> ObjectView:
        with self._lock:
            obj = self._objects.get(path)
            if obj is None:
                raise NoSuchObject(path)
            return ObjectView(
                path=path, owner=obj["owner"], acl=dict(obj["acl"]),
                version=obj["version"],
                replicas=tuple(ReplicaView(**r) for r in obj["replicas"]))

    def object_exists(self, path: str) -> bool:
        with self._lock:
            return path in self._objects

    def add_orphan(self, path: str, resource: str, physical_ref: str,
                   checksum: str) -> None:
        with self._lock:
            self._commit("orphan.add", {
                "path": path, "resource": resource,
                "physical_ref": physical_ref, "checksum": checksum,
            })

    def orphans(self) -> list[dict]:
        with self._lock:
            return copy.deepcopy(self._orphans)

    # -- policies (rule base) ------------------------------------------------

    def add_rule_record(self, name: str, pep: str, priority: int,
                        text: str) -> int:
        with self._lock:
            if name in self._rules:
                raise DuplicateRuleName(name)
            self._commit("rule.add", {
                "name": name, "pep": pep, "priority": priority, "text": text,
            })
            return self._rule_version

    def remove_rule_record(self, name: str) -> int:
        with self._lock:
            if name not in self._rules:
                raise NoSuchRule(name)
            self._commit("rule.remove", {"name": name})
            return self._rule_version

    def rules(self) -> list[RuleEntryView]:
        with self._lock:
            return [RuleEntryView(name=n, **r)
                    for n, r in sorted(self._rules.items())]

    @property
    def rule_version(self) -> int:
        with self._lock:
            return self._rule_version

    # -- procedures (workflow versions and runs) -------------------------------

    def attach_workflow_record(self, workflow_id: str, coll: str,
                               source: str) -> bool:
        """Returns False when the id was already attached (dedup)."""
        with self._lock:
            if workflow_id in self._workflows:
                return False
            self._commit("workflow.attach", {
                "id": workflow_id, "coll": coll, "source": source,
                "attached_at": now_us(),
            })
            return True

    def workflow(self, workflow_id: str) -> dict:
        with self._lock:
            record = self._workflows.get(workflow_id)
            if record is None:
                raise NoSuchWorkflow(workflow_id)
            return dict(record, id=workflow_id)

    def workflows_in(self, coll: str) -> list[dict]:
        with self._lock:
            return sorted(
                (dict(r, id=i) for i, r in self._workflows.items()
                 if r["coll"] == coll),
                key=lambda r: (r["attached_at"], r["id"]))

    def record_run(self, record: dict) -> None:
        with self._lock:
            run_id = record["run_id"]
            if run_id in self._runs:
                raise ValueError(f"run {run_id!r} already recorded")
            self._commit("run.record", {"record": record})

    def run(self, run_id: str) -> dict:
        with self._lock:
            record = self._runs.get(run_id)
            if record is None:
                raise NoSuchRun(run_id)
            return copy.deepcopy(record)

    # -- streams ----------------------------------------------------------------

    def next_segment_id(self, coll: str) -> int:
        with self._lock:
            return self._stream_counters.get(coll, 0) + 1

    def ingest_segment(self, coll: str, segment_id: int, path: str,
                       owner: str, resource: str, physical_ref: str,
                       checksum: str, size: int, t_min: int, t_max: int,
                       record_count: int) -> None:
        with self._lock:
            self._commit("stream.ingest", {
                "coll": coll, "segment_id": segment_id, "path": path,
                "owner": owner, "resource": resource,
                "physical_ref": physical_ref, "checksum": checksum,
                "size": size, "t_min": t_min, "t_max": t_max,
                "record_count": record_count,
            })

    # -- journal apply layer (pure functions of args) ----------------------------

    def _apply(self, op: str, args: dict, seq: int) -> None:
        handler = _APPLY.get(op)
        if handler is None:
            raise CorruptJournal(f"unknown op {op!r}")
        handler(self, args, seq)

    def _apply_user_create(self, a: dict, seq: int) -> None:
        self._users[a["name"]] = {
            "role": a["role"], "secret_hash": a["secret_hash"],
            "groups": list(a["groups"]),
        }

    def _apply_user_group_add(self, a: dict, seq: int) -> None:
        groups = self._users[a["user"]]["groups"]
        if a["group"] not in groups:
            groups.append(a["group"])
            groups.sort()

    def _apply_resource_register(self, a: dict, seq: int) -> None:
        self._resources[a["name"]] = {
            "driver_name": a["driver_name"], "root": a["root"],
            "kind": a["kind"],
        }

    def _apply_collection_create(self, a: dict, seq: int) -> None:
        self._collections[a["path"]] = {
            "owner": a["owner"], "acl": dict(a["acl"]), "kind": a["kind"],
        }

    def _apply_acl_set(self, a: dict, seq: int) -> None:
        node = self._node(a["path"])
        node["acl"][a["principal"]] = a["perm"]

    def _apply_avu_add(self, a: dict, seq: int) -> None:
        triples = self._avus.setdefault(a["path"], [])
        triple = [a["name"], a["value"], a["comment"]]
        if triple not in triples:
            triples.append(triple)

    def _apply_object_put(self, a: dict, seq: int) -> None:
        replica = {
            "resource": a["resource"], "physical_ref": a["physical_ref"],
            "checksum": a["checksum"], "size": a["size"], "status": "good",
        }
        obj = self._objects.get(a["path"])
        if obj is None:
            self._objects[a["path"]] = {
                "owner": a["owner"], "acl": {a["owner"]: "own"},
                "version": 1, "replicas": [replica],
            }
        else:
            obj["version"] += 1
            obj["replicas"] = [replica]

    def _apply_replica_add(self, a: dict, seq: int) -> None:
        self._objects[a["path"]]["replicas"].append({
            "resource": a["resource"], "physical_ref": a["physical_ref"],
            "checksum": a["checksum"], "size": a["size"],
            "status": a["status"],
        })

    def _apply_replica_status(self, a: dict, seq: int) -> None:
        for r in self._objects[a["path"]]["replicas"]:
            if r["physical_ref"] == a["physical_ref"]:
                r["status"] = a["status"]

    def _apply_object_remove(self, a: dict, seq: int) -> None:
        del self._objects[a["path"]]
        self._avus.pop(a["path"], None)

    def _apply_orphan_add(self, a: dict, seq: int) -> None:
        self._orphans.append({
            "path": a["path"], "resource": a["resource"],
            "physical_ref": a["physical_ref"], "checksum": a["checksum"],
        })

    def _apply_rule_add(self, a: dict, seq: int) -> None:
        self._rules[a["name"]] = {
            "pep": a["pep"], "priority": a["priority"], "text": a["text"],
        }
        self._rule_version += 1

    def _apply_rule_remove(self, a: dict, seq: int) -> None:
        del self._rules[a["name"]]
        self._rule_version += 1

    def _apply_workflow_attach(self, a: dict, seq: int) -> None:
        self._workflows[a["id"]] = {
            "coll": a["coll"], "source": a["source"],
            "attached_at": a["attached_at"],
        }

    def _apply_run_record(self, a: dict, seq: int) -> None:
        record = copy.deepcopy(a["record"])
        self._runs[record["run_id"]] = record

    def _apply_stream_ingest(self, a: dict, seq: int) -> None:
        self._apply_object_put(a, seq)
        current = self._stream_counters.get(a["coll"], 0)
        self._stream_counters[a["coll"]] = max(current, a["segment_id"])
        for name, value in (("stream.t_min", str(a["t_min"])),
                            ("stream.t_max", str(a["t_max"]))):
            self._apply_avu_add(
                {"path": a["path"], "name": name, "value": value,
                 "comment": ""}, seq)

    def _apply_audit_append(self, a: dict, seq: int) -> None:
        self._audit.append({
            "seq": seq, "when": a["when"], "actor": a["actor"],
            "event": a["event"], "detail": a["detail"],
        })


_APPLY = {
    "user.create": Catalog._apply_user_create,
    "user.group_add": Catalog._apply_user_group_add,
    "resource.register": Catalog._apply_resource_register,
    "collection.create": Catalog._apply_collection_create,
    "acl.set": Catalog._apply_acl_set,
    "avu.add": Catalog._apply_avu_add,
    "object.put": Catalog._apply_object_put,
    "replica.add": Catalog._apply_replica_add,
    "replica.status": Catalog._apply_replica_status,
    "object.remove": Catalog._apply_object_remove,
    "orphan.add": Catalog._apply_orphan_add,
    "rule.add": Catalog._apply_rule_add,
    "rule.remove": Catalog._apply_rule_remove,
    "workflow.attach": Catalog._apply_workflow_attach,
    "run.record": Catalog._apply_run_record,
    "stream.ingest": Catalog._apply_stream_ingest,
    "audit.append": Catalog._apply_audit_append,
}
