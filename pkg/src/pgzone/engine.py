"""The policy engine: traps client actions at enforcement points,
resolves them against the rule base, and runs micro-service chains.

Every client-facing operation follows the same shape:

    validate arguments -> fire <pep>.pre -> authorize -> effect
        -> fire <pep>.post -> audit

A pre verdict of Deny aborts with Denied before any effect; Error aborts
with EngineError. Post verdicts are recorded in the audit trail but
never undo the effect. Operations invoked from inside rule chains or
procedure bodies (via micro-services) use the internal entry points,
which authorize and act but do not re-enter the enforcement points, so
policy evaluation cannot recurse.

Rule dispatch is first match wins over rules for the point, ordered by
descending priority then ascending name; when nothing matches the
verdict is Allow. The compiled rule set is snapshotted per firing, so a
concurrent rule-base edit affects the next firing, never one in flight.
"""

from __future__ import annotations

import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .catalog import Catalog, ObjectView, RuleEntryView, parent_path, validate_path
from .common import SYSTEM, sha256_hex
from .drivers import Driver, DriverRegistry
from .errors import (
    AllReplicasSuspect,
    ChecksumMismatch,
    Denied,
    DriverError,
    DuplicateName,
    DuplicateReplica,
    DuplicateRuleName,
    EngineError,
    EvalError,
    FetchFailed,
    KindMismatch,
    NoParent,
    NoSuchPath,
    NoSuchRef,
    TypeMismatch,
    UnknownPep,
    Unsupported,
    ZoneError,
)
from .ruledsl import (
    Allow,
    Assign,
    Call,
    Deny,
    Foreach,
    If,
    RuleAst,
    Value,
    eval_expr,
    parse_rules,
    print_rule,
)

PEP_OPS = (
    "data.put", "data.get", "data.remove", "data.replicate",
    "collection.create", "meta.add", "stream.ingest", "workflow.run",
)
PEP_NAMES = tuple(
    f"pep.{op}.{phase}" for op in PEP_OPS for phase in ("pre", "post"))
_PEP_SET = frozenset(PEP_NAMES)


@dataclass(frozen=True)
class Verdict:
    kind: str  # "allow" | "deny" | "error"
    detail: str = ""
    rule: str | None = None  # name of the deciding rule, None for default

    @property
    def allowed(self) -> bool:
        return self.kind == "allow"


ALLOW = Verdict("allow")


# --------------------------------------------------------------------------
# Run recording (consumed by the provenance layer)
# --------------------------------------------------------------------------

@dataclass
class RunRecorder:
    """Collects the logical paths a chain touches. First-read checksums
    capture what the run actually consumed; writes are checksummed after
    the run completes."""
    reads: dict[str, str] = field(default_factory=dict)
    writes: set[str] = field(default_factory=set)

    def record_read(self, path: str, checksum: str) -> None:
        self.reads.setdefault(path, checksum)

    def record_write(self, path: str) -> None:
        self.writes.add(path)


_tls = threading.local()


def current_recorder() -> RunRecorder | None:
    return getattr(_tls, "recorder", None)


class recording:
    """Context manager installing a RunRecorder for the current thread."""

    def __init__(self, recorder: RunRecorder):
        self.recorder = recorder

    def __enter__(self) -> RunRecorder:
        _tls.recorder = self.recorder
        return self.recorder

    def __exit__(self, *exc) -> None:
        _tls.recorder = None


# --------------------------------------------------------------------------
# Micro-service plumbing
# --------------------------------------------------------------------------

@dataclass
class MsContext:
    """Execution context handed to every micro-service: the engine, the
    user the chain runs as, and the collection relative paths resolve
    against (set inside procedure runs, None at rule chains)."""
    engine: "Engine"
    actor: str
    base_coll: str | None = None

    def resolve(self, path: Value) -> str:
        if not isinstance(path, str) or not path:
            raise TypeMismatch(f"expected a path string, got {path!r}")
        if path.startswith("/"):
            return path
        if self.base_coll is None:
            raise EngineError(
                f"relative path {path!r} outside a procedure run")
        return f"{self.base_coll.rstrip('/')}/{path}"


@dataclass(frozen=True)
class MicroService:
    name: str
    fn: Callable[..., Value | None]
    min_args: int
    max_args: int


class MicroServiceRegistry:
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._services: dict[str, MicroService] = {}

    def register(self, name: str, fn: Callable, min_args: int,
                 max_args: int | None = None) -> None:
        if max_args is None:
            max_args = min_args
        with self._lock:
            if name in self._services:
                raise DuplicateName(f"micro-service {name!r} already exists")
            self._services[name] = MicroService(name, fn, min_args, max_args)

    def get(self, name: str) -> MicroService:
        with self._lock:
            ms = self._services.get(name)
        if ms is None:
            raise EngineError(f"unknown micro-service {name!r}")
        return ms

    def names(self) -> tuple[str, ...]:
        with self._lock:
            return tuple(sorted(self._services))


def _require_str(value: Value, what: str) -> str:
    if not isinstance(value, str):
        raise TypeMismatch(f"{what} must be a string, got {value!r}")
    return value


def _require_int(value: Value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise TypeMismatch(f"{what} must be an integer, got {value!r}")
    return value


# Built-in micro-services. Each performs the real operation as the
# calling user through the internal entry points (authorized, recorded,
# but not re-trapped).

def _ms_set_avu(ctx: MsContext, *args: Value) -> Value:
    path = ctx.resolve(args[0])
    name = _require_str(args[1], "attribute name")
    value = _require_str(args[2], "attribute value")
    comment = _require_str(args[3], "attribute comment") if len(args) > 3 \
        else ""
    ctx.engine.catalog.add_avu(ctx.actor, path, name, value, comment)
    return ""


def _ms_checksum(ctx: MsContext, *args: Value) -> Value:
    path = ctx.resolve(args[0])
    data = ctx.engine.read_object(ctx.actor, path)
    return sha256_hex(data)


def _ms_replicate_to(ctx: MsContext, *args: Value) -> Value:
    path = ctx.resolve(args[0])
    resource = _require_str(args[1], "resource name")
    ctx.engine.replicate_internal(ctx.actor, path, resource)
    return ""


def _ms_audit_msg(ctx: MsContext, *args: Value) -> Value:
    text = _require_str(args[0], "message")
    ctx.engine.catalog.audit_append(ctx.actor, "user.message", text)
    return ""


def _ms_http_fetch(ctx: MsContext, *args: Value) -> Value:
    url = _require_str(args[0], "url")
    dest = ctx.resolve(args[1])
    path, _cached = ctx.engine.fetch(ctx.actor, url, dest)
    return path


def _ms_put_int(ctx: MsContext, *args: Value) -> Value:
    value = _require_int(args[0], "value")
    path = ctx.resolve(args[1])
    data = str(value).encode("ascii")
    ctx.engine.put_internal(ctx.actor, path, data)
    return path


_BUILTINS = (
    ("set_avu", _ms_set_avu, 3, 4),
    ("checksum", _ms_checksum, 1, 1),
    ("replicate_to", _ms_replicate_to, 2, 2),
    ("audit_msg", _ms_audit_msg, 1, 1),
    ("http_fetch", _ms_http_fetch, 2, 2),
    ("put_int", _ms_put_int, 2, 2),
)

# Micro-services whose first argument names a logical path they only
# read; the provenance layer uses this to pre-scan procedure bodies for
# literal inputs.
READING_MICROSERVICES = frozenset({"checksum", "replicate_to"})


# --------------------------------------------------------------------------
# Chain execution
# --------------------------------------------------------------------------

class _Scope(Mapping):
    """Variable environment for chain evaluation: locals layered over
    the read-only bindings the engine supplies at the firing."""

    def __init__(self, system: Mapping[str, Value]):
        self.system = system
        self.locals: dict[str, Value] = {}

    def __getitem__(self, name: str) -> Value:
        if name in self.locals:
            return self.locals[name]
        return self.system[name]

    def __iter__(self):
        yield from self.locals
        for k in self.system:
            if k not in self.locals:
                yield k

    def __len__(self) -> int:
        return len(set(self.system) | set(self.locals))

    def bind(self, name: str, value: Value) -> None:
        self.locals[name] = value


class _VerdictSignal(Exception):
    """Internal control flow: allow() / deny() unwinding a chain."""

    def __init__(self, verdict: Verdict):
        self.verdict = verdict


class Engine:
    def __init__(self, catalog: Catalog, drivers: DriverRegistry,
                 default_resource: str | None = None):
        self.catalog = catalog
        self.drivers = drivers
        self.default_resource = default_resource
        self.microservices = MicroServiceRegistry()
        for name, fn, lo, hi in _BUILTINS:
            self.microservices.register(name, fn, lo, hi)
        self._compiled: dict[str, list[RuleAst]] = {}
        self._compiled_version = -1
        self._compile_lock = threading.Lock()
        self._path_locks: dict[str, threading.RLock] = {}
        self._path_locks_guard = threading.Lock()
        self.run_lock = threading.Lock()  # serializes procedure runs
        self._fetch_lock = threading.Lock()
        self._fetch_cache: dict[str, tuple[str, str]] = {}  # url -> (path, checksum)
        self.fetch_count = 0  # network round trips actually made
        self.url_opener = urllib.request.urlopen  # swappable in tests

    # -- locks -------------------------------------------------------------

    def _path_lock(self, path: str) -> threading.RLock:
        with self._path_locks_guard:
            lock = self._path_locks.get(path)
            if lock is None:
                lock = threading.RLock()
                self._path_locks[path] = lock
            return lock

    # -- rule base ----------------------------------------------------------

    def add_rules(self, caller: str, text: str) -> list[str]:
        """Parse and install one or more rules; atomic per call: either
        every rule in the text is installed or none is."""
        self.catalog.require_admin(caller)
        rules = parse_rules(text)
        if not rules:
            raise EngineError("no rules in input")
        seen: set[str] = set()
        for rule in rules:
            if rule.pep not in _PEP_SET:
                raise UnknownPep(rule.pep)
            if rule.name in seen:
                raise DuplicateName(f"rule {rule.name!r} repeated in input")
            seen.add(rule.name)
        existing = {r.name for r in self.catalog.rules()}
        for rule in rules:
            if rule.name in existing:
                raise DuplicateRuleName(rule.name)
        for rule in rules:
            self.catalog.add_rule_record(
                rule.name, rule.pep, rule.priority, print_rule(rule))
            self.catalog.audit_append(caller, "rule.add", rule.name)
        return [r.name for r in rules]

    def remove_rule(self, caller: str, name: str) -> None:
        self.catalog.require_admin(caller)
        self.catalog.remove_rule_record(name)
        self.catalog.audit_append(caller, "rule.remove", name)

    def list_rules(self) -> list[RuleEntryView]:
        return self.catalog.rules()

    def _rules_for(self, pep: str) -> list[RuleAst]:
        version = self.catalog.rule_version
        with self._compile_lock:
            if version != self._compiled_version:
                compiled: dict[str, list[RuleAst]] = {}
                for entry in self.catalog.rules():
                    (ast,) = parse_rules(entry.text)
                    compiled.setdefault(entry.pep, []).append(ast)
                for asts in compiled.values():
                    asts.sort(key=lambda r: (-r.priority, r.name))
                self._compiled = compiled
                self._compiled_version = version
            return list(self._compiled.get(pep, ()))

    # -- enforcement points ---------------------------------------------------

    def _role_of(self, actor: str) -> str:
        if actor == SYSTEM:
            return "system"
        return self.catalog.get_user(actor).role

    def bindings(self, actor: str, op: str, **extra: Value) -> dict[str, Value]:
        b: dict[str, Value] = {
            "user.name": actor,
            "user.role": self._role_of(actor),
            "op": op,
        }
        b.update(extra)
        return b

    def fire_pep(self, pep: str, actor: str,
                 bindings: Mapping[str, Value]) -> Verdict:
        """Resolve one enforcement-point firing to a verdict and audit it."""
        if pep not in _PEP_SET:
            raise UnknownPep(pep)
        verdict = ALLOW
        for rule in self._rules_for(pep):
            scope = _Scope(bindings)
            try:
                hit = eval_expr(rule.condition, scope)
            except (EvalError, ZoneError) as e:
                verdict = Verdict("error", f"condition: {e}", rule.name)
                break
            if not isinstance(hit, bool):
                verdict = Verdict("error", "condition is not a boolean",
                                  rule.name)
                break
            if not hit:
                continue
            verdict = self._run_chain(rule.actions, scope, actor,
                                      rule_name=rule.name)
            break
        detail = f"{pep} rule={verdict.rule or '-'}"
        if verdict.detail:
            detail += f" {verdict.detail}"
        self.catalog.audit_append(actor, f"pep.{verdict.kind}", detail)
        return verdict

    def enforce_pre(self, pep: str, actor: str,
                    bindings: Mapping[str, Value]) -> None:
        verdict = self.fire_pep(pep, actor, bindings)
        if verdict.kind == "deny":
            raise Denied(verdict.detail or "denied by policy")
        if verdict.kind == "error":
            raise EngineError(
                f"policy error at {pep}: {verdict.detail}")

    def fire_post(self, pep: str, actor: str,
                  bindings: Mapping[str, Value]) -> Verdict:
        return self.fire_pep(pep, actor, bindings)

    def _run_chain(self, items: Iterable, scope: _Scope, actor: str,
                   rule_name: str | None = None,
                   base_coll: str | None = None) -> Verdict:
        try:
            self._exec_items(items, scope, actor, base_coll)
        except _VerdictSignal as sig:
            v = sig.verdict
            return Verdict(v.kind, v.detail, rule_name)
        except (EvalError, ZoneError) as e:
            return Verdict("error", str(e), rule_name)
        return Verdict("allow", "", rule_name)

    def _exec_items(self, items: Iterable, scope: _Scope, actor: str,
                    base_coll: str | None) -> None:
        for item in items:
            if isinstance(item, Call):
                self._exec_call(item, scope, actor, base_coll)
            elif isinstance(item, Assign):
                if isinstance(item.value, Call):
                    result = self._exec_call(item.value, scope, actor,
                                             base_coll)
                    if result is None:
                        result = ""
                else:
                    result = eval_expr(item.value, scope)
                scope.bind(item.target, result)
            elif isinstance(item, If):
                cond = eval_expr(item.cond, scope)
                if not isinstance(cond, bool):
                    raise TypeMismatch("if condition is not a boolean")
                if cond:
                    self._exec_items(item.then, scope, actor, base_coll)
                elif item.orelse is not None:
                    self._exec_items(item.orelse, scope, actor, base_coll)
            elif isinstance(item, Foreach):
                seq = eval_expr(item.items, scope)
                if not isinstance(seq, list):
                    raise TypeMismatch("foreach needs a list of strings")
                for element in seq:
                    scope.bind(item.var, element)
                    self._exec_items(item.body, scope, actor, base_coll)
            elif isinstance(item, Allow):
                raise _VerdictSignal(ALLOW)
            elif isinstance(item, Deny):
                raise _VerdictSignal(Verdict("deny", item.reason))
            else:
                raise EngineError(f"unknown chain item {item!r}")

    def _exec_call(self, call: Call, scope: _Scope, actor: str,
                   base_coll: str | None) -> Value | None:
        ms = self.microservices.get(call.name)
        args = [eval_expr(a, scope) for a in call.args]
        if not ms.min_args <= len(args) <= ms.max_args:
            raise EngineError(
                f"{call.name} takes {ms.min_args}..{ms.max_args} arguments, "
                f"got {len(args)}")
        ctx = MsContext(engine=self, actor=actor, base_coll=base_coll)
        return ms.fn(ctx, *args)

    def run_procedure_body(self, items: Iterable, scope: _Scope, actor: str,
                           base_coll: str) -> None:
        """Execute a procedure body; allow()/deny() end it early, deny
        raising Denied. Used by the provenance layer."""
        try:
            self._exec_items(items, scope, actor, base_coll)
        except _VerdictSignal as sig:
            if sig.verdict.kind == "deny":
                raise Denied(sig.verdict.detail or "denied") from None

    # -- micro-service registration -------------------------------------------

    def register_microservice(self, caller: str, name: str, fn: Callable,
                              min_args: int, max_args: int | None = None) -> None:
        self.catalog.require_admin(caller)
        self.microservices.register(name, fn, min_args, max_args)
        self.catalog.audit_append(caller, "microservice.register", name)

    # -- resource helpers --------------------------------------------------------

    def _resource_or_default(self, resource: str | None) -> str:
        if resource is not None:
            return resource
        if self.default_resource is None:
            raise EngineError("no resource given and no default configured")
        return self.default_resource

    def _driver_for(self, resource_name: str) -> tuple[Driver, str]:
        res = self.catalog.get_resource(resource_name)
        return self.drivers.get(res.driver_name), res.root

    def _store_bytes(self, resource_name: str, data: bytes) -> tuple[str, str]:
        driver, root = self._driver_for(resource_name)
        ref = driver.new_ref(root)
        driver.store(ref, data)
        return ref, sha256_hex(data)

    # -- effects (shared by trapped and internal entry points) -----------------

    def _put_effect(self, actor: str, path: str, data: bytes,
                    resource: str) -> ObjectView:
        if self.catalog.object_exists(path):
            owner = self.catalog.get_object(path).owner
            self.catalog.require_access(path, actor, "write")
        else:
            owner = actor
            parent = parent_path(path)
            if not self.catalog.collection_exists(parent):
                raise NoParent(parent)
            self.catalog.require_access(parent, actor, "write")
        ref, checksum = self._store_bytes(resource, data)
        _version, replaced = self.catalog.put_object(
            path, owner, resource, ref, checksum, len(data))
        for old in replaced:
            self._dispose_replica(path, old)
        rec = current_recorder()
        if rec is not None:
            rec.record_write(path)
        return self.catalog.get_object(path)

    def _dispose_replica(self, path: str, replica) -> None:
        """Remove a replica's bytes if the driver permits; otherwise park
        it on the orphan list so an operator can reclaim it."""
        try:
            driver, _root = self._driver_for(replica.resource)
        except ZoneError:
            driver = None
        if driver is not None and driver.supports_unlink:
            try:
                driver.unlink(replica.physical_ref)
                return
            except NoSuchRef:
                return
            except DriverError:
                pass
        self.catalog.add_orphan(path, replica.resource,
                                replica.physical_ref, replica.checksum)

    def read_object(self, actor: str, path: str) -> bytes:
        """Authorized read returning verified bytes; replicas whose bytes
        no longer hash to their recorded checksum are marked suspect and
        skipped."""
        with self._path_lock(path):
            obj = self.catalog.get_object(path)
            self.catalog.require_access(path, actor, "read")
            for replica in obj.replicas:
                if replica.status != "good":
                    continue
                try:
                    driver, _root = self._driver_for(replica.resource)
                    data = driver.read_all(replica.physical_ref)
                except (DriverError, ZoneError):
                    self.catalog.set_replica_status(
                        path, replica.physical_ref, "suspect")
                    continue
                if sha256_hex(data) == replica.checksum:
                    rec = current_recorder()
                    if rec is not None:
                        rec.record_read(path, replica.checksum)
                    return data
                self.catalog.set_replica_status(
                    path, replica.physical_ref, "suspect")
            raise AllReplicasSuspect(path)

    def put_internal(self, actor: str, path: str, data: bytes,
                     resource: str | None = None) -> ObjectView:
        validate_path(path)
        resource = self._resource_or_default(resource)
        with self._path_lock(path):
            return self._put_effect(actor, path, data, resource)

    def replicate_internal(self, actor: str, path: str,
                           dest_resource: str) -> ObjectView:
        with self._path_lock(path):
            return self._replicate_effect(actor, path, dest_resource)

    def _replicate_effect(self, actor: str, path: str,
                          dest_resource: str) -> ObjectView:
        obj = self.catalog.get_object(path)
        self.catalog.require_access(path, actor, "write")
        self.catalog.get_resource(dest_resource)
        if any(r.resource == dest_resource for r in obj.replicas):
            raise DuplicateReplica(
                f"{path!r} already has a replica on {dest_resource!r}")
        data = self.read_object(actor, path)
        checksum = sha256_hex(data)
        driver, root = self._driver_for(dest_resource)
        ref = driver.new_ref(root)
        driver.store(ref, data)
        back = driver.read_all(ref)
        if sha256_hex(back) != checksum:
            if driver.supports_unlink:
                try:
                    driver.unlink(ref)
                except DriverError:
                    pass
            raise ChecksumMismatch(
                f"replica on {dest_resource!r} reads back corrupted")
        self.catalog.add_replica(path, dest_resource, ref, checksum,
                                 len(data))
        return self.catalog.get_object(path)

    # -- trapped client operations ------------------------------------------

    def put(self, actor: str, path: str, data: bytes,
            resource: str | None = None) -> ObjectView:
        validate_path(path)
        resource = self._resource_or_default(resource)
        self.catalog.get_resource(resource)
        with self._path_lock(path):
            owner = self.catalog.get_object(path).owner \
                if self.catalog.object_exists(path) else actor
            b = self.bindings(actor, "data.put", **{
                "obj.path": path, "obj.owner": owner, "resc.name": resource})
            self.enforce_pre("pep.data.put.pre", actor, b)
            view = self._put_effect(actor, path, data, resource)
            self.fire_post("pep.data.put.post", actor, b)
            self.catalog.audit_append(actor, "data.put", path)
            return view

    def get(self, actor: str, path: str) -> bytes:
        with self._path_lock(path):
            obj = self.catalog.get_object(path)  # NoSuchObject if absent
            b = self.bindings(actor, "data.get", **{
                "obj.path": path, "obj.owner": obj.owner})
            self.enforce_pre("pep.data.get.pre", actor, b)
            data = self.read_object(actor, path)
            self.fire_post("pep.data.get.post", actor, b)
            return data

    def remove(self, actor: str, path: str) -> None:
        with self._path_lock(path):
            obj = self.catalog.get_object(path)
            b = self.bindings(actor, "data.remove", **{
                "obj.path": path, "obj.owner": obj.owner})
            self.enforce_pre("pep.data.remove.pre", actor, b)
            self.catalog.require_access(path, actor, "write")
            for replica in obj.replicas:
                self._unlink_or_orphan(actor, path, replica)
            self.catalog.remove_object(path)
            self.fire_post("pep.data.remove.post", actor, b)
            self.catalog.audit_append(actor, "data.remove", path)

    def _unlink_or_orphan(self, actor: str, path: str, replica) -> None:
        driver, _root = self._driver_for(replica.resource)
        if not driver.supports_unlink:
            self.catalog.add_orphan(path, replica.resource,
                                    replica.physical_ref, replica.checksum)
            return
        try:
            driver.unlink(replica.physical_ref)
        except NoSuchRef:
            pass
        except Unsupported:
            self.catalog.add_orphan(path, replica.resource,
                                    replica.physical_ref, replica.checksum)
        except DriverError as e:
            self.catalog.set_replica_status(
                path, replica.physical_ref, "suspect")
            raise EngineError(
                f"unlink of {replica.physical_ref!r} failed: {e}") from e

    def replicate(self, actor: str, path: str,
                  dest_resource: str) -> ObjectView:
        with self._path_lock(path):
            obj = self.catalog.get_object(path)
            self.catalog.get_resource(dest_resource)
            b = self.bindings(actor, "data.replicate", **{
                "obj.path": path, "obj.owner": obj.owner,
                "resc.name": dest_resource})
            self.enforce_pre("pep.data.replicate.pre", actor, b)
            view = self._replicate_effect(actor, path, dest_resource)
            self.fire_post("pep.data.replicate.post", actor, b)
            self.catalog.audit_append(
                actor, "data.replicate", f"{path} -> {dest_resource}")
            return view

    def stage(self, actor: str, path: str, to_resource: str) -> ObjectView:
        """Copy toward fast storage: destination must be a cache resource."""
        res = self.catalog.get_resource(to_resource)
        if res.kind != "cache":
            raise KindMismatch(
                f"stage needs a cache resource, {to_resource!r} is "
                f"{res.kind!r}")
        return self.replicate(actor, path, to_resource)

    def archive(self, actor: str, path: str, to_resource: str) -> ObjectView:
        """Copy toward preservation storage: destination must be archival."""
        res = self.catalog.get_resource(to_resource)
        if res.kind != "archive":
            raise KindMismatch(
                f"archive needs an archive resource, {to_resource!r} is "
                f"{res.kind!r}")
        return self.replicate(actor, path, to_resource)

    def verify_object(self, actor: str, path: str) -> list[tuple[str, str]]:
        """Re-hash every replica against its recorded checksum, fixing
        statuses up or down; returns (resource, status) pairs."""
        with self._path_lock(path):
            obj = self.catalog.get_object(path)
            self.catalog.require_access(path, actor, "read")
            result: list[tuple[str, str]] = []
            for replica in obj.replicas:
                try:
                    driver, _root = self._driver_for(replica.resource)
                    data = driver.read_all(replica.physical_ref)
                    ok = sha256_hex(data) == replica.checksum
                except (DriverError, ZoneError):
                    ok = False
                status = "good" if ok else "suspect"
                if status != replica.status:
                    self.catalog.set_replica_status(
                        path, replica.physical_ref, status)
                result.append((replica.resource, status))
            self.catalog.audit_append(
                actor, "data.verify",
                f"{path} " + ",".join(f"{r}={s}" for r, s in result))
            return result

    def make_collection(self, actor: str, path: str,
                        kind: str = "plain") -> str:
        validate_path(path)
        b = self.bindings(actor, "collection.create", **{"coll.path": path})
        self.enforce_pre("pep.collection.create.pre", actor, b)
        self.catalog.make_collection(actor, path, kind=kind)
        self.fire_post("pep.collection.create.post", actor, b)
        return path

    def add_avu(self, actor: str, path: str, name: str, value: str,
                comment: str = "") -> None:
        if not self.catalog.path_exists(path):
            raise NoSuchPath(path)
        b = self.bindings(actor, "meta.add", **{"obj.path": path})
        self.enforce_pre("pep.meta.add.pre", actor, b)
        self.catalog.add_avu(actor, path, name, value, comment)
        self.fire_post("pep.meta.add.post", actor, b)

    # -- remote fetch with caching ---------------------------------------------

    def fetch(self, actor: str, url: str, dest_path: str,
              resource: str | None = None) -> tuple[str, bool]:
        """Fetch a URL into the zone once: a later fetch of the exact
        same URL returns the already-stored object without touching the
        network, as long as that object still exists unchanged."""
        validate_path(dest_path)
        with self._fetch_lock:
            cached = self._fetch_cache.get(url)
            if cached is not None:
                path, checksum = cached
                if self.catalog.object_exists(path) and \
                        self.catalog.get_object(path).checksum == checksum:
                    self.catalog.require_access(path, actor, "read")
                    rec = current_recorder()
                    if rec is not None:
                        rec.record_read(path, checksum)
                    return path, True
                del self._fetch_cache[url]
            data = self._http_get(url)
            view = self.put_internal(actor, dest_path, data, resource)
            self._fetch_cache[url] = (dest_path, view.checksum)
            return dest_path, False

    def _http_get(self, url: str) -> bytes:
        self.fetch_count += 1  # counts network attempts, caller holds lock
        try:
            with self.url_opener(url, timeout=30) as response:
                status = getattr(response, "status", 200)
                if status != 200:
                    raise FetchFailed(f"GET {url} -> {status}", status)
                return response.read()
        except urllib.error.HTTPError as e:
            raise FetchFailed(f"GET {url} -> {e.code}", e.code) from e
        except urllib.error.URLError as e:
            raise FetchFailed(f"GET {url}: {e.reason}") from e
