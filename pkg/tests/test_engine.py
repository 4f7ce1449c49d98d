import io

import pytest

from pgzone.common import SYSTEM, sha256_hex
from pgzone.drivers import MemDriver
from pgzone.engine import PEP_NAMES, PEP_OPS
from pgzone.errors import (
    ChecksumMismatch,
    Denied,
    DuplicateRuleName,
    EngineError,
    FetchFailed,
    KindMismatch,
    NoSuchObject,
    NoSuchPath,
    PermissionDenied,
    UnknownPep,
)
from pgzone.testing import FaultDriver

from conftest import ADMIN, add_user, make_zone


# ---------------------------------------------------------------------------
# PEP naming
# ---------------------------------------------------------------------------

def test_pep_names_cover_all_ops_twice():
    assert len(PEP_NAMES) == 2 * len(PEP_OPS)
    for op in PEP_OPS:
        assert f"pep.{op}.pre" in PEP_NAMES
        assert f"pep.{op}.post" in PEP_NAMES


def test_unknown_pep_rejected_at_install(zone):
    with pytest.raises(UnknownPep):
        zone.engine.add_rules(
            ADMIN, 'rule r on pep.data.teleport.pre do allow()')


# ---------------------------------------------------------------------------
# Verdict semantics
# ---------------------------------------------------------------------------

def test_default_verdict_is_allow(zone):
    add_user(zone, "u")
    zone.engine.put("u", "/home/u/f", b"hi")
    assert zone.engine.get("u", "/home/u/f") == b"hi"


def test_pre_deny_aborts_with_reason(zone):
    add_user(zone, "u")
    zone.engine.put("u", "/home/u/f", b"hi")
    zone.engine.add_rules(ADMIN, '''
        rule no_reads on pep.data.get.pre do deny("reads are off")
    ''')
    with pytest.raises(Denied, match="reads are off"):
        zone.engine.get("u", "/home/u/f")
    # The object itself is untouched.
    assert zone.catalog.object_exists("/home/u/f")


def test_pre_deny_leaves_no_effect(zone):
    add_user(zone, "u")
    zone.engine.add_rules(ADMIN, '''
        rule no_puts on pep.data.put.pre do deny("frozen")
    ''')
    before = zone.catalog.data_state_digest()
    with pytest.raises(Denied):
        zone.engine.put("u", "/home/u/f", b"hi")
    assert zone.catalog.data_state_digest() == before
    assert not zone.catalog.object_exists("/home/u/f")


def test_condition_error_maps_to_engine_error(zone):
    add_user(zone, "u")
    zone.engine.add_rules(ADMIN, '''
        rule broken on pep.data.put.pre when 1 / 0 == 0 do allow()
    ''')
    with pytest.raises(EngineError, match="policy error"):
        zone.engine.put("u", "/home/u/f", b"hi")


def test_non_boolean_condition_is_policy_error(zone):
    add_user(zone, "u")
    zone.engine.add_rules(ADMIN, '''
        rule broken on pep.data.put.pre when 1 + 1 do allow()
    ''')
    with pytest.raises(EngineError, match="not a boolean"):
        zone.engine.put("u", "/home/u/f", b"hi")


def test_post_deny_recorded_but_not_enforced(zone):
    add_user(zone, "u")
    zone.engine.add_rules(ADMIN, '''
        rule post_gripe on pep.data.put.post do deny("too late")
    ''')
    view = zone.engine.put("u", "/home/u/f", b"hi")
    assert view.version == 1
    events = [e for e in zone.catalog.audit_query(ADMIN, event="pep.deny")
              if "data.put.post" in e.detail]
    assert len(events) == 1


def test_every_firing_is_audited(zone):
    add_user(zone, "u")
    zone.engine.put("u", "/home/u/f", b"hi")
    details = [e.detail for e in
               zone.catalog.audit_query(ADMIN, event="pep.allow")]
    assert any(d.startswith("pep.data.put.pre rule=-") for d in details)
    assert any(d.startswith("pep.data.put.post rule=-") for d in details)


# ---------------------------------------------------------------------------
# Rule resolution order
# ---------------------------------------------------------------------------

def test_priority_then_name_first_match_wins(zone):
    add_user(zone, "u")
    zone.engine.add_rules(ADMIN, '''
        rule b_low priority 1 on pep.data.put.pre do deny("low")
        rule z_high priority 9 on pep.data.put.pre do deny("high")
        rule a_high priority 9 on pep.data.put.pre do deny("high-a")
    ''')
    with pytest.raises(Denied, match="high-a"):
        zone.engine.put("u", "/home/u/f", b"hi")


def test_non_matching_condition_falls_through(zone):
    add_user(zone, "u")
    zone.engine.add_rules(ADMIN, '''
        rule admin_gate priority 5 on pep.data.put.pre
            when $user.role == "admin" do deny("no admin puts")
        rule fallback on pep.data.put.pre do allow()
    ''')
    zone.engine.put("u", "/home/u/f", b"hi")
    with pytest.raises(Denied, match="no admin puts"):
        zone.engine.put(ADMIN, "/home/u/g", b"hi")


def test_rule_snapshot_is_stable_within_firing(zone):
    # Removing a rule takes effect on the next firing, not mid-chain.
    add_user(zone, "u")
    zone.engine.add_rules(ADMIN, '''
        rule gate on pep.data.put.pre when $user.name == "u" do deny("no")
    ''')
    with pytest.raises(Denied):
        zone.engine.put("u", "/home/u/f", b"hi")
    zone.engine.remove_rule(ADMIN, "gate")
    zone.engine.put("u", "/home/u/f", b"hi")


def test_add_rules_is_atomic(zone):
    with pytest.raises(UnknownPep):
        zone.engine.add_rules(ADMIN, '''
            rule ok on pep.data.put.pre do allow()
            rule bad on pep.not.a.pep do allow()
        ''')
    assert zone.engine.list_rules() == []


def test_duplicate_rule_name_rejected(zone):
    zone.engine.add_rules(ADMIN, 'rule r1 on pep.data.put.pre do allow()')
    with pytest.raises(DuplicateRuleName):
        zone.engine.add_rules(ADMIN, 'rule r1 on pep.data.get.pre do allow()')
    assert len(zone.engine.list_rules()) == 1


def test_rule_management_is_admin_only(zone):
    add_user(zone, "u")
    with pytest.raises(PermissionDenied):
        zone.engine.add_rules("u", 'rule r on pep.data.put.pre do allow()')


# ---------------------------------------------------------------------------
# Chains: variables, if, foreach, micro-services
# ---------------------------------------------------------------------------

def test_chain_if_else_and_assignment(zone):
    add_user(zone, "u")
    zone.engine.add_rules(ADMIN, '''
        rule tag_big on pep.data.put.pre do
            $label = "small";
            if $user.name == "u" { $label = "from-u" }
            else { $label = "other" };
            audit_msg($label)
    ''')
    zone.engine.put("u", "/home/u/f", b"hi")
    entries = zone.catalog.audit_query(ADMIN, event="user.message")
    assert entries and entries[-1].detail == "from-u"


def test_chain_foreach_binds_each_element(zone):
    zone.engine.register_microservice(
        ADMIN, "three_tags", lambda ctx: ["a", "b", "c"], 0, 0)
    add_user(zone, "u")
    zone.engine.add_rules(ADMIN, '''
        rule fan_out on pep.meta.add.pre do
            $tags = three_tags();
            foreach $x in $tags { audit_msg($x) }
    ''')
    zone.engine.put("u", "/home/u/f", b"hi")
    zone.engine.add_avu("u", "/home/u/f", "k", "v")
    seen = [e.detail for e in
            zone.catalog.audit_query(ADMIN, event="user.message")]
    assert seen == ["a", "b", "c"]


def test_chain_calls_set_avu(zone):
    add_user(zone, "u")
    zone.engine.add_rules(ADMIN, '''
        rule stamp on pep.data.put.post do
            set_avu($obj.path, "ingested.by", $user.name)
    ''')
    zone.engine.put("u", "/home/u/f", b"hi")
    triples = [(a.attr_name, a.attr_value)
               for a in zone.catalog.avus("/home/u/f")]
    assert ("ingested.by", "u") in triples


def test_unknown_microservice_is_policy_error(zone):
    add_user(zone, "u")
    zone.engine.add_rules(ADMIN, '''
        rule bad on pep.data.put.pre do frobnicate("x")
    ''')
    with pytest.raises(EngineError):
        zone.engine.put("u", "/home/u/f", b"hi")


def test_microservice_arity_checked(zone):
    add_user(zone, "u")
    zone.engine.add_rules(ADMIN, '''
        rule bad on pep.data.put.pre do set_avu("only-one")
    ''')
    with pytest.raises(EngineError, match="argument"):
        zone.engine.put("u", "/home/u/f", b"hi")


def test_register_microservice_admin_only(zone):
    add_user(zone, "u")
    with pytest.raises(PermissionDenied):
        zone.engine.register_microservice("u", "nop", lambda ctx: "", 0, 0)
    zone.engine.register_microservice(ADMIN, "nop", lambda ctx: "", 0, 0)
    assert "nop" in zone.engine.microservices.names()


def test_registered_microservice_usable_from_rule(zone):
    calls = []

    def spy(ctx, *args):
        calls.append((ctx.actor, args))
        return "ok"

    zone.engine.register_microservice(ADMIN, "spy", spy, 1, 2)
    zone.engine.add_rules(ADMIN, '''
        rule watch on pep.data.put.pre do $r = spy($obj.path); audit_msg($r)
    ''')
    add_user(zone, "u")
    zone.engine.put("u", "/home/u/f", b"hi")
    assert calls == [("u", ("/home/u/f",))]


# ---------------------------------------------------------------------------
# ACL enforcement on trapped ops
# ---------------------------------------------------------------------------

def test_put_needs_parent_write_for_new_object(zone):
    add_user(zone, "u")
    add_user(zone, "v")
    with pytest.raises(PermissionDenied):
        zone.engine.put("v", "/home/u/f", b"hi")
    zone.catalog.set_acl("u", "/home/u", "v", "write")
    zone.engine.put("v", "/home/u/f", b"hi")


def test_put_into_missing_collection(zone):
    from pgzone.errors import NoParent
    with pytest.raises(NoParent):
        zone.engine.put(ADMIN, "/nowhere/f", b"hi")


def test_get_needs_read(zone):
    add_user(zone, "u")
    add_user(zone, "v")
    zone.engine.put("u", "/home/u/f", b"hi")
    with pytest.raises(PermissionDenied):
        zone.engine.get("v", "/home/u/f")
    zone.catalog.set_acl("u", "/home/u/f", "v", "read")
    assert zone.engine.get("v", "/home/u/f") == b"hi"


def test_remove_needs_write(zone):
    add_user(zone, "u")
    add_user(zone, "v")
    zone.engine.put("u", "/home/u/f", b"hi")
    with pytest.raises(PermissionDenied):
        zone.engine.remove("v", "/home/u/f")
    zone.engine.remove("u", "/home/u/f")
    with pytest.raises(NoSuchObject):
        zone.engine.get("u", "/home/u/f")


def test_overwrite_bumps_version_and_frees_old_replica(zone):
    add_user(zone, "u")
    v1 = zone.engine.put("u", "/home/u/f", b"one")
    v2 = zone.engine.put("u", "/home/u/f", b"two!")
    assert (v1.version, v2.version) == (1, 2)
    assert zone.engine.get("u", "/home/u/f") == b"two!"
    driver = zone.drivers.get("mem")
    assert len(driver.blobs) == 1  # old blob unlinked


# ---------------------------------------------------------------------------
# Replication, staging, archiving
# ---------------------------------------------------------------------------

def setup_three_resources(zone):
    zone.ensure_resource(SYSTEM, "r2", "mem", "/blobs/r2", "cache")
    zone.register_driver(ADMIN, "mem2", MemDriver())
    zone.ensure_resource(SYSTEM, "r3", "mem2", "/blobs/r3", "cache")


def test_replicate_copies_bytes(zone):
    setup_three_resources(zone)
    add_user(zone, "u")
    zone.engine.put("u", "/home/u/f", b"payload")
    view = zone.engine.replicate("u", "/home/u/f", "r2")
    assert sorted(r.resource for r in view.replicas) == ["main", "r2"]
    assert len({r.checksum for r in view.replicas}) == 1


def test_replicate_duplicate_and_missing_dest(zone):
    setup_three_resources(zone)
    add_user(zone, "u")
    zone.engine.put("u", "/home/u/f", b"payload")
    zone.engine.replicate("u", "/home/u/f", "r2")
    from pgzone.errors import DuplicateReplica, NoSuchResource
    with pytest.raises(DuplicateReplica):
        zone.engine.replicate("u", "/home/u/f", "r2")
    with pytest.raises(NoSuchResource):
        zone.engine.replicate("u", "/home/u/f", "r99")


def test_replicate_readback_catches_corruption(zone):
    add_user(zone, "u")
    bad = FaultDriver(MemDriver(), corrupt_writes=True)
    zone.register_driver(ADMIN, "badmem", bad)
    zone.ensure_resource(SYSTEM, "rbad", "badmem", "/blobs/rbad", "cache")
    zone.engine.put("u", "/home/u/f", b"payload")
    with pytest.raises(ChecksumMismatch):
        zone.engine.replicate("u", "/home/u/f", "rbad")
    # Failed copy is not registered as a replica.
    view = zone.catalog.get_object("/home/u/f")
    assert [r.resource for r in view.replicas] == ["main"]


def test_stage_and_archive_enforce_resource_kind(zone):
    zone.ensure_resource(SYSTEM, "tape", "archive", "/blobs/tape", "archive")
    zone.ensure_resource(SYSTEM, "fast", "mem", "/blobs/fast", "cache")
    add_user(zone, "u")
    zone.engine.put("u", "/home/u/f", b"payload")
    with pytest.raises(KindMismatch):
        zone.engine.stage("u", "/home/u/f", "tape")
    with pytest.raises(KindMismatch):
        zone.engine.archive("u", "/home/u/f", "fast")
    zone.engine.archive("u", "/home/u/f", "tape")
    zone.engine.stage("u", "/home/u/f", "fast")
    view = zone.catalog.get_object("/home/u/f")
    assert sorted(r.resource for r in view.replicas) == \
        ["fast", "main", "tape"]


def test_remove_orphans_archived_replica(zone):
    zone.ensure_resource(SYSTEM, "tape", "archive", "/blobs/tape", "archive")
    add_user(zone, "u")
    zone.engine.put("u", "/home/u/f", b"payload")
    zone.engine.archive("u", "/home/u/f", "tape")
    zone.engine.remove("u", "/home/u/f")
    orphans = zone.catalog.orphans()
    assert len(orphans) == 1 and orphans[0]["resource"] == "tape"
    assert orphans[0]["checksum"] == sha256_hex(b"payload")


# ---------------------------------------------------------------------------
# Integrity: suspect marking and verification
# ---------------------------------------------------------------------------

def corrupt_replica(zone, path, resource):
    obj = zone.catalog.get_object(path)
    replica = next(r for r in obj.replicas if r.resource == resource)
    res = zone.catalog.get_resource(resource)
    driver = zone.drivers.get(res.driver_name)
    blob = driver.read_all(replica.physical_ref)
    driver.blobs[replica.physical_ref] = bytearray(
        bytes([blob[0] ^ 0xFF]) + blob[1:])
    return replica


def test_get_skips_corrupt_replica_and_marks_suspect(zone):
    zone.ensure_resource(SYSTEM, "r2", "mem", "/blobs/r2", "cache")
    add_user(zone, "u")
    zone.engine.put("u", "/home/u/f", b"payload")
    zone.engine.replicate("u", "/home/u/f", "r2")
    corrupt_replica(zone, "/home/u/f", "main")
    assert zone.engine.get("u", "/home/u/f") == b"payload"
    statuses = {r.resource: r.status
                for r in zone.catalog.get_object("/home/u/f").replicas}
    assert statuses == {"main": "suspect", "r2": "good"}


def test_all_replicas_suspect(zone):
    from pgzone.errors import AllReplicasSuspect
    add_user(zone, "u")
    zone.engine.put("u", "/home/u/f", b"payload")
    corrupt_replica(zone, "/home/u/f", "main")
    with pytest.raises(AllReplicasSuspect):
        zone.engine.get("u", "/home/u/f")


def test_verify_object_repairs_both_directions(zone):
    add_user(zone, "u")
    zone.engine.put("u", "/home/u/f", b"payload")
    replica = corrupt_replica(zone, "/home/u/f", "main")
    assert zone.engine.verify_object("u", "/home/u/f") == \
        [("main", "suspect")]
    # Restore the bytes out of band; verify flips the replica back.
    driver = zone.drivers.get("mem")
    driver.blobs[replica.physical_ref] = bytearray(b"payload")
    assert zone.engine.verify_object("u", "/home/u/f") == [("main", "good")]


# ---------------------------------------------------------------------------
# Remote fetch caching
# ---------------------------------------------------------------------------

class StubResponse(io.BytesIO):
    status = 200

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def test_fetch_hits_network_once(zone):
    hits = []

    def opener(url, timeout=0):
        hits.append(url)
        return StubResponse(b"remote bytes")

    zone.engine.url_opener = opener
    p1, cached1 = zone.engine.fetch(ADMIN, "http://x/a", "/home/a")
    p2, cached2 = zone.engine.fetch(ADMIN, "http://x/a", "/home/a2")
    assert (p1, cached1) == ("/home/a", False)
    assert (p2, cached2) == ("/home/a", True)
    assert hits == ["http://x/a"]
    assert zone.engine.fetch_count == 1
    assert zone.engine.get(ADMIN, "/home/a") == b"remote bytes"


def test_fetch_cache_invalidated_when_object_changes(zone):
    def opener(url, timeout=0):
        return StubResponse(b"remote bytes")

    zone.engine.url_opener = opener
    zone.engine.fetch(ADMIN, "http://x/a", "/home/a")
    zone.engine.put(ADMIN, "/home/a", b"locally replaced")
    path, cached = zone.engine.fetch(ADMIN, "http://x/a", "/home/b")
    assert (path, cached) == ("/home/b", False)
    assert zone.engine.fetch_count == 2


def test_fetch_failure_maps_to_fetch_failed(zone):
    def opener(url, timeout=0):
        resp = StubResponse(b"gone")
        resp.status = 404
        return resp

    zone.engine.url_opener = opener
    with pytest.raises(FetchFailed):
        zone.engine.fetch(ADMIN, "http://x/missing", "/home/a")
    assert not zone.catalog.object_exists("/home/a")


# ---------------------------------------------------------------------------
# PEP fires before the effect
# ---------------------------------------------------------------------------

def test_pre_pep_fires_before_effect_in_journal(zone):
    add_user(zone, "u")
    zone.engine.put("u", "/home/u/f", b"hi")
    records = zone.catalog.records()
    pep_seq = next(r["seq"] for r in records
                   if r["op"] == "audit.append"
                   and "pep.data.put.pre" in r["args"]["detail"])
    put_seq = next(r["seq"] for r in records
                   if r["op"] == "object.put"
                   and r["args"]["path"] == "/home/u/f")
    assert pep_seq < put_seq
