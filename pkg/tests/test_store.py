from __future__ import annotations

import random
import threading
from datetime import date, timedelta

import pytest

from retadms.errors import (
    BadAggregation,
    BadFilter,
    UniqueViolation,
    UnknownRecord,
    UnknownSchema,
    UnknownTenant,
    ValidationFailure,
)
from retadms.filters import FilterExpr, Predicate, validate_filter
from retadms.model import Platform, validate_instance
from retadms.reta import instantiate, parse_metadata_table
from retadms.store import DataStore
from retadms.tabular import read_csv_text

from conftest import make_instance


RETA = (
    "T,{tid},pw,System {tid}\nG,staff\nU,h,h,h,h\n+,alice,Alice,alice-pw,staff\n"
    "S,cars,staff,alice,CRUD,R\nFI,f,f\n"
    "+,string,plate,unique,notnull\n+,string,model,notnull\n"
    "+,int,year,nullable\n+,float,price,nullable\n"
    "+,bool,ok,notnull,default=true\n+,date,day,nullable\n"
)


def new_system(store: DataStore, tid: str = "acme"):
    reta = parse_metadata_table(read_csv_text(RETA.format(tid=tid)))
    return instantiate(reta, store, "create")


def car(plate, model="sedan", year=2018, price=1.5, ok=True, day=date(2020, 1, 2)):
    return {"plate": plate, "model": model, "year": year, "price": price, "ok": ok, "day": day}


# -- system lifecycle ----------------------------------------------------------


def test_put_get_round_trip(store):
    instance = make_instance()
    store.put_system(instance)
    back = store.get_system("acme")
    assert back == instance
    assert back is not instance  # snapshots, not live references


def test_get_delete_unknown_tenant(store):
    with pytest.raises(UnknownTenant):
        store.get_system("ghost")
    with pytest.raises(UnknownTenant):
        store.delete_system("ghost")


def test_delete_then_get_unknown(store):
    store.put_system(make_instance())
    store.delete_system("acme")
    with pytest.raises(UnknownTenant):
        store.get_system("acme")


def test_put_rejects_invalid_instance(store):
    broken = make_instance(users=[("alice", ("ghost",))], schemas=[])
    with pytest.raises(ValidationFailure):
        store.put_system(broken)


def test_delete_leaves_other_tenants_untouched(store):
    new_system(store, "a")
    new_system(store, "b")
    store.insert_record("b", "cars", car("B-1"))
    store.delete_system("a")
    records, total = store.query("b", "cars")
    assert total == 1 and records[0].values["plate"] == "B-1"


def test_creation_log_appends(store):
    new_system(store, "a")
    new_system(store, "b")
    log = store.creation_log()
    assert [t for t, _ in log] == ["a", "b"]


# -- records -------------------------------------------------------------------


def test_insert_assigns_monotonic_ids_and_reads_back(store):
    new_system(store)
    r1 = store.insert_record("acme", "cars", car("A-1"))
    r2 = store.insert_record("acme", "cars", car("A-2"))
    assert [r1, r2] == ["1", "2"]
    record = store.get_record("acme", "cars", r1)
    assert record.values["plate"] == "A-1"
    assert record.values["ok"] is True


def test_insert_validation_failure(store):
    new_system(store)
    with pytest.raises(ValidationFailure) as exc:
        store.insert_record("acme", "cars", {"plate": "A", "model": "x", "year": "fast"})
    assert any("year" in d.message for d in exc.value.diagnostics)
    with pytest.raises(UnknownSchema):
        store.insert_record("acme", "bikes", {})


def test_unique_violation_on_insert_and_update(store):
    new_system(store)
    store.insert_record("acme", "cars", car("A-1"))
    with pytest.raises(UniqueViolation):
        store.insert_record("acme", "cars", car("A-1"))
    rid = store.insert_record("acme", "cars", car("A-2"))
    with pytest.raises(UniqueViolation):
        store.update_record("acme", "cars", rid, {"plate": "A-1"})
    store.update_record("acme", "cars", rid, {"plate": "A-2"})  # keeping its own value is fine


def test_nulls_do_not_collide_on_unique_day(store):
    # unique applies to non-null values only
    new_system(store)
    store.insert_record("acme", "cars", car("A-1", day=None))
    store.insert_record("acme", "cars", car("A-2", day=None))


def test_update_merges_and_revalidates(store):
    new_system(store)
    rid = store.insert_record("acme", "cars", car("A-1", year=2018))
    updated = store.update_record("acme", "cars", rid, {"year": 2019})
    assert updated.values["year"] == 2019
    assert updated.values["plate"] == "A-1"
    with pytest.raises(ValidationFailure):
        store.update_record("acme", "cars", rid, {"model": None})
    with pytest.raises(ValidationFailure):
        store.update_record("acme", "cars", rid, {"bogus": 1})
    assert store.get_record("acme", "cars", rid).values["year"] == 2019


def test_delete_record_then_unknown(store):
    new_system(store)
    rid = store.insert_record("acme", "cars", car("A-1"))
    store.delete_record("acme", "cars", rid)
    with pytest.raises(UnknownRecord):
        store.get_record("acme", "cars", rid)
    with pytest.raises(UnknownRecord):
        store.delete_record("acme", "cars", rid)


def test_record_ids_never_reused_after_delete(store):
    new_system(store)
    rid = store.insert_record("acme", "cars", car("A-1"))
    store.delete_record("acme", "cars", rid)
    rid2 = store.insert_record("acme", "cars", car("A-2"))
    assert int(rid2) > int(rid)


def test_insert_many_atomic_rolls_back(store):
    new_system(store)
    rows = [car("A-1"), car("A-2"), car("A-1")]  # duplicate unique plate
    with pytest.raises(ValidationFailure):
        store.insert_many("acme", "cars", rows)
    assert store.query("acme", "cars")[1] == 0
    ids, rejected = store.insert_many("acme", "cars", rows, atomic=False)
    assert len(ids) == 2 and len(rejected) == 1


# -- durability ------------------------------------------------------------------


def test_reopen_preserves_everything(tmp_path):
    store = DataStore(tmp_path / "data")
    new_system(store, "acme")
    store.insert_record("acme", "cars", car("A-1"))
    store.insert_record("acme", "cars", car("A-2", year=None, day=None))
    before = store.get_system("acme")

    reopened = DataStore(tmp_path / "data")
    assert reopened.get_system("acme") == before
    assert reopened.creation_log() == store.creation_log()
    # counters survive restart: next id continues
    rid = reopened.insert_record("acme", "cars", car("A-3"))
    assert rid == "3"


def test_tenant_ids_with_odd_characters_round_trip(tmp_path):
    store = DataStore(tmp_path / "data")
    for tid in ("UPPER.lower", "dots...", "sláshless", "百分比%40"):
        new_system(store, tid)
    reopened = DataStore(tmp_path / "data")
    assert sorted(reopened.tenant_ids()) == sorted(store.tenant_ids())


# -- query ----------------------------------------------------------------------


def fleet(store, n=40, seed=7):
    rng = random.Random(seed)
    new_system(store)
    rows = []
    for i in range(n):
        rows.append(
            car(
                f"P-{i}",
                model=rng.choice(["sedan", "van", "truck"]),
                year=rng.choice([None, 2016, 2017, 2018, 2019, 2020]),
                price=rng.choice([None, 1.0, 2.5, 99.9]),
                ok=rng.random() < 0.8,
                day=rng.choice([None, date(2020, 1, 1) + timedelta(days=rng.randrange(300))]),
            )
        )
    store.insert_many("acme", "cars", rows)
    return rows


def test_empty_filter_returns_all(store):
    rows = fleet(store)
    records, total = store.query("acme", "cars")
    assert total == len(rows) == len(records)


def test_query_matches_brute_force_scan(store):
    fleet(store, n=60)
    expr = FilterExpr(
        all=(Predicate("year", "ge", 2018),),
        any=(Predicate("model", "eq", "sedan"), Predicate("model", "eq", "van")),
    )
    records, total = store.query("acme", "cars", expr)
    everything, _ = store.query("acme", "cars")

    def oracle(values):  # independent re-statement of the semantics
        year_ok = values["year"] is not None and values["year"] >= 2018
        model_ok = values["model"] in ("sedan", "van")
        return year_ok and model_ok

    expected = {r.record_id for r in everything if oracle(r.values)}
    assert {r.record_id for r in records} == expected
    assert total == len(expected)


def test_query_pagination_and_order(store):
    fleet(store, n=25)
    page1, total = store.query("acme", "cars", offset=0, limit=10, order_by="year")
    page2, _ = store.query("acme", "cars", offset=10, limit=10, order_by="year")
    page3, _ = store.query("acme", "cars", offset=20, limit=10, order_by="year")
    assert total == 25
    ids = [r.record_id for r in page1 + page2 + page3]
    assert len(ids) == 25 and len(set(ids)) == 25
    years = [r.values["year"] for r in page1 + page2 + page3]
    non_null = [y for y in years if y is not None]
    assert non_null == sorted(non_null)
    assert all(y is None for y in years[len(non_null):])  # nulls last


def test_query_descending_keeps_nulls_last_and_id_tiebreak(store):
    new_system(store)
    for i, year in enumerate([2018, None, 2020, 2018]):
        store.insert_record("acme", "cars", car(f"P-{i}", year=year))
    records, _ = store.query("acme", "cars", order_by="year", descending=True)
    assert [r.values["year"] for r in records] == [2020, 2018, 2018, None]
    assert [r.record_id for r in records] == ["3", "1", "4", "2"]


def test_query_rejects_bad_filters(store):
    new_system(store)
    with pytest.raises(BadFilter):
        store.query("acme", "cars", FilterExpr(all=(Predicate("colour", "eq", "red"),)))
    with pytest.raises(BadFilter):
        store.query("acme", "cars", order_by="colour")


# -- statistics -------------------------------------------------------------------


def test_statistics_basics(store):
    new_system(store)
    years = [2018, 2020, None]
    for i, year in enumerate(years):
        store.insert_record("acme", "cars", car(f"P-{i}", year=year, price=float(i)))
    assert store.statistics("acme", "cars", "plate", "count") == 3
    assert store.statistics("acme", "cars", "year", "avg") == 2019
    assert store.statistics("acme", "cars", "year", "sum") == 4038
    assert store.statistics("acme", "cars", "year", "min") == 2018
    assert store.statistics("acme", "cars", "year", "max") == 2020
    assert store.statistics("acme", "cars", "day", "max") == date(2020, 1, 2)


def test_statistics_empty_results(store):
    new_system(store)
    assert store.statistics("acme", "cars", "year", "sum") == 0
    assert store.statistics("acme", "cars", "price", "sum") == 0.0
    assert store.statistics("acme", "cars", "year", "avg") is None
    assert store.statistics("acme", "cars", "year", "min") is None
    assert store.statistics("acme", "cars", "plate", "count") == 0


def test_statistics_type_compatibility(store):
    new_system(store)
    with pytest.raises(BadAggregation):
        store.statistics("acme", "cars", "model", "sum")
    with pytest.raises(BadAggregation):
        store.statistics("acme", "cars", "ok", "min")
    with pytest.raises(BadAggregation):
        store.statistics("acme", "cars", "ghost", "count")
    with pytest.raises(BadAggregation):
        store.statistics("acme", "cars", "year", "median")


def test_statistics_with_filter(store):
    new_system(store)
    for i, (model, year) in enumerate(
        [("sedan", 2018), ("van", 2020), ("sedan", 2022)]
    ):
        store.insert_record("acme", "cars", car(f"P-{i}", model=model, year=year))
    expr = FilterExpr(all=(Predicate("model", "eq", "sedan"),))
    assert store.statistics("acme", "cars", "year", "sum", expr) == 4040
    assert store.statistics("acme", "cars", "plate", "count", expr) == 2


# -- isolation --------------------------------------------------------------------


def run_trace_step(store, tid, rng, step):
    """One deterministic operation against one tenant; returns its observation."""
    action = rng.choice(["insert", "update", "delete", "query"])
    if action == "insert":
        rid = store.insert_record(
            tid, "cars", car(f"{tid}-{step}", year=rng.randrange(2000, 2030))
        )
        return ("insert", rid)
    records, total = store.query(tid, "cars")
    if action == "query":
        return ("query", total, tuple((r.record_id, r.values["plate"]) for r in records))
    if not records:
        return (action, None)
    target = rng.choice(records).record_id
    if action == "update":
        updated = store.update_record(
            tid, "cars", target, {"year": rng.randrange(2000, 2030)}
        )
        return ("update", target, updated.values["year"])
    store.delete_record(tid, "cars", target)
    return ("delete", target)


def test_interleaved_tenants_do_not_observe_each_other(tmp_path):
    """An interleaved trace equals each tenant's solo run, step for step.

    Both tenants share schemaid and userid strings, so any leakage would
    surface as an id or count mismatch.
    """
    steps = 30

    def solo(tid, seed):
        store = DataStore(tmp_path / f"solo_{tid}")
        new_system(store, tid)
        rng = random.Random(seed)
        return [run_trace_step(store, tid, rng, i) for i in range(steps)]

    solo_a = solo("alpha", 1)
    solo_b = solo("beta", 2)

    mixed = DataStore(tmp_path / "mixed")
    new_system(mixed, "alpha")
    new_system(mixed, "beta")
    rng_a, rng_b = random.Random(1), random.Random(2)
    mixed_a, mixed_b = [], []
    order = random.Random(99)
    ia = ib = 0
    while ia < steps or ib < steps:
        if ib >= steps or (ia < steps and order.random() < 0.5):
            mixed_a.append(run_trace_step(mixed, "alpha", rng_a, ia))
            ia += 1
        else:
            mixed_b.append(run_trace_step(mixed, "beta", rng_b, ib))
            ib += 1
    assert mixed_a == solo_a
    assert mixed_b == solo_b


def test_concurrent_tenants_parallel_writes(tmp_path):
    store = DataStore(tmp_path / "data")
    tids = [f"t{i}" for i in range(4)]
    for tid in tids:
        new_system(store, tid)
    errors = []

    def work(tid):
        try:
            for i in range(20):
                store.insert_record(tid, "cars", car(f"{tid}-{i}"))
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    threads = [threading.Thread(target=work, args=(tid,)) for tid in tids]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    for tid in tids:
        records, total = store.query(tid, "cars")
        assert total == 20
        assert {r.values["plate"] for r in records} == {f"{tid}-{i}" for i in range(20)}
        assert validate_instance(store.get_system(tid)).ok
