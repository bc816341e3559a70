"""Record store: path mapping, the three mirrored trees, epoch and staleness."""

import tempfile
from pathlib import Path, PurePosixPath

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import conftest
import oracle
from simharvest.exceptions import (
    NotFoundError,
    PathCollisionError,
    StalenessError,
    StorageError,
)
from simharvest.records import MetadataRecord
from simharvest.similarity import collection_stats, weight_vector
from simharvest.store import (
    RecordStore,
    decode_flat,
    encode_flat,
    identifier_to_relpath,
    relpath_to_identifier,
)
from simharvest.textpipe import TermFrequencyVector

# Identifiers short enough that their percent-encoded form fits in one
# filesystem name component even for 4-byte code points.
fs_identifiers = st.one_of(
    st.text(
        alphabet=st.characters(
            blacklist_categories=("Cc", "Cs", "Zs", "Zl", "Zp")
        ),
        min_size=1,
        max_size=12,
    ).filter(lambda v: not any(ch.isspace() for ch in v)),
    conftest.token_text.map(lambda local: f"oai:repo.example:{local[:12]}"),
)


def make_record(identifier="oai:a.example:1", datestamp="2001-06-15T12:00:00Z", **kw):
    kw.setdefault("dc_fields", (("title", "Tire friction"),))
    return MetadataRecord(identifier=identifier, datestamp=datestamp, **kw)


class TestPathMapping:
    def test_oai_identifier_maps_to_namespace_and_local_segments(self):
        rel = identifier_to_relpath("oai:ltrs.larc.nasa.gov:rdp3195.tex")
        assert rel == PurePosixPath("ltrs.larc.nasa.gov/rdp3195.tex")

    def test_unsafe_characters_are_percent_encoded(self):
        rel = identifier_to_relpath("oai:ns:a/b:c d%e")
        assert rel.parts[0] == "ns"
        assert "/" not in rel.parts[1]
        assert rel.parts[1] == "a%2Fb%3Ac%20d%25e"

    def test_non_oai_identifiers_use_the_raw_bucket(self):
        rel = identifier_to_relpath("http://example.org/thing")
        assert rel.parts[0] == "%raw"
        assert relpath_to_identifier(rel) == "http://example.org/thing"

    def test_oai_prefix_without_two_colons_is_raw(self):
        rel = identifier_to_relpath("oai:only-one-part")
        assert rel.parts[0] == "%raw"

    def test_bad_relpath_depth_rejected(self):
        with pytest.raises(StorageError):
            relpath_to_identifier("single")
        with pytest.raises(StorageError):
            relpath_to_identifier("a/b/c")

    @given(conftest.identifiers)
    def test_mapping_is_reversible(self, identifier):
        assert relpath_to_identifier(identifier_to_relpath(identifier)) == identifier

    @given(conftest.identifiers)
    def test_flat_encoding_is_reversible(self, identifier):
        flat = encode_flat(identifier)
        assert "/" not in flat
        assert decode_flat(flat) == identifier

    def test_raw_bucket_cannot_collide_with_a_namespace(self):
        # The encoder never emits a bare '%', so no oai namespace encodes to %raw.
        assert identifier_to_relpath("oai:%raw:x").parts[0] == "%25raw"


class TestRecords:
    def test_put_then_get(self, store):
        record = make_record()
        result = store.put_record(record)
        assert result.status == "created"
        assert store.get_record(record.identifier) == record
        assert store.has_record(record.identifier)

    def test_identical_put_is_a_no_op(self, store):
        record = make_record()
        store.put_record(record)
        epoch = store.epoch()
        store.clear_stale()
        result = store.put_record(record)
        assert result.status == "unchanged"
        assert store.epoch() == epoch
        assert not store.is_stale()

    def test_changed_put_bumps_epoch_and_marks_stale(self, store):
        store.put_record(make_record())
        store.clear_stale()
        epoch = store.epoch()
        updated = make_record(dc_fields=(("title", "Revised title"),))
        result = store.put_record(updated)
        assert result.status == "replaced"
        assert result.replaced == make_record()
        assert store.epoch() == epoch + 1
        assert store.is_stale()

    def test_every_new_record_bumps_epoch(self, store, rng):
        epochs = [store.epoch()]
        for record in oracle.synthetic_records(rng, 3):
            store.put_record(record)
            epochs.append(store.epoch())
        assert epochs == sorted(set(epochs))

    def test_get_missing_record(self, store):
        with pytest.raises(NotFoundError):
            store.get_record("oai:a.example:absent")

    def test_collision_detected(self, store):
        record = make_record(identifier="oai:a.example:1")
        path = store.record_path("oai:a.example:2")
        path.parent.mkdir(parents=True, exist_ok=True)
        from simharvest.oai_xml import serialize_record_fragment

        path.write_bytes(serialize_record_fragment(record))
        with pytest.raises(PathCollisionError):
            store.get_record("oai:a.example:2")
        with pytest.raises(PathCollisionError):
            store.put_record(make_record(identifier="oai:a.example:2"))

    @settings(max_examples=25, deadline=None)
    @given(record=conftest.records(), identifier=fs_identifiers)
    def test_any_record_round_trips_through_disk(self, record, identifier):
        record = MetadataRecord(
            identifier=identifier,
            datestamp=record.datestamp,
            set_specs=record.set_specs,
            dc_fields=record.dc_fields,
            provenance=record.provenance,
            deleted=record.deleted,
        )
        with tempfile.TemporaryDirectory() as root:
            store = RecordStore(Path(root) / "s")
            store.put_record(record)
            assert store.get_record(identifier) == record
            assert store.list_identifiers() == [identifier]


class TestListing:
    def setup_store(self, store):
        store.put_record(
            make_record("oai:a.example:1", "2001-01-10T00:00:00Z", set_specs=("x",))
        )
        store.put_record(
            make_record("oai:a.example:2", "2001-06-15T12:00:00Z", set_specs=("y",))
        )
        store.put_record(
            make_record("oai:b.example:3", "2001-12-31", set_specs=("x", "y"))
        )

    def test_sorted_listing(self, store):
        self.setup_store(store)
        assert store.list_identifiers() == [
            "oai:a.example:1",
            "oai:a.example:2",
            "oai:b.example:3",
        ]

    def test_datestamp_range_is_inclusive(self, store):
        self.setup_store(store)
        assert store.list_identifiers(from_="2001-06-15", until="2001-06-15") == [
            "oai:a.example:2"
        ]
        assert store.list_identifiers(from_="2001-06-15T12:00:00Z") == [
            "oai:a.example:2",
            "oai:b.example:3",
        ]
        assert store.list_identifiers(until="2001-01-09") == []

    def test_set_filter(self, store):
        self.setup_store(store)
        assert store.list_identifiers(set_spec="x") == [
            "oai:a.example:1",
            "oai:b.example:3",
        ]
        assert store.list_identifiers(set_spec="z") == []

    def test_combined_filters(self, store):
        self.setup_store(store)
        assert store.list_identifiers(from_="2001-06-01", set_spec="y") == [
            "oai:a.example:2",
            "oai:b.example:3",
        ]

    def test_bad_bound_rejected(self, store):
        with pytest.raises(StorageError):
            store.list_identifiers(from_="June 2001")

    def test_set_specs_and_earliest(self, store):
        self.setup_store(store)
        assert store.set_specs() == ["x", "y"]
        assert store.earliest_datestamp() == "2001-01-10T00:00:00Z"

    def test_empty_store(self, store):
        assert store.list_identifiers() == []
        assert store.set_specs() == []
        assert store.earliest_datestamp() is None


class TestTermFrequencies:
    def test_round_trip(self, store):
        store.put_record(make_record())
        vector = TermFrequencyVector("oai:a.example:1", {"tire": 2, "friction": 1})
        path = store.put_tf(vector)
        assert path.read_text(encoding="utf-8") == "friction\t1\ntire\t2\n"
        assert store.get_tf("oai:a.example:1") == vector

    def test_requires_the_record(self, store):
        with pytest.raises(NotFoundError):
            store.put_tf(TermFrequencyVector("oai:a.example:1", {"tire": 1}))

    def test_missing_tf_says_run_index(self, store):
        store.put_record(make_record())
        with pytest.raises(NotFoundError, match="run index"):
            store.get_tf("oai:a.example:1")

    @settings(max_examples=25, deadline=None)
    @given(counts=st.dictionaries(
        keys=st.text(
            alphabet=st.characters(whitelist_categories=("Ll", "Nd"), max_codepoint=0x2FF),
            min_size=2,
            max_size=12,
        ),
        values=st.integers(min_value=1, max_value=10**9),
        max_size=10,
    ))
    def test_any_counts_round_trip(self, counts):
        with tempfile.TemporaryDirectory() as root:
            store = RecordStore(Path(root) / "s")
            store.put_record(make_record())
            vector = TermFrequencyVector("oai:a.example:1", counts)
            store.put_tf(vector)
            assert store.get_tf("oai:a.example:1") == vector


class TestWeights:
    def fill(self, store):
        corpus = conftest.small_corpus()
        stats = collection_stats(corpus)
        for tf in corpus:
            store.put_record(make_record(tf.identifier))
            store.put_tf(tf)
        return [weight_vector(tf, stats) for tf in corpus]

    def test_round_trip_is_exact(self, store):
        vectors = self.fill(store)
        store.clear_stale()
        for vector in vectors:
            store.put_weights(vector)
        for vector in vectors:
            got = store.get_weights(vector.identifier)
            assert got == vector  # repr round trip: bit-for-bit floats

    def test_requires_tf(self, store):
        store.put_record(make_record())
        with pytest.raises(NotFoundError):
            store.put_weights(
                weight_vector(
                    TermFrequencyVector("oai:a.example:1", {"tire": 1}),
                    collection_stats(conftest.small_corpus()),
                )
            )

    def test_stale_weights_refuse_to_load(self, store):
        vectors = self.fill(store)
        for vector in vectors:
            store.put_weights(vector)
        store.mark_stale()
        with pytest.raises(StalenessError):
            store.get_weights(vectors[0].identifier)
        store.clear_stale()
        assert store.get_weights(vectors[0].identifier) == vectors[0]

    def test_missing_weights_say_run_compute(self, store):
        self.fill(store)
        store.clear_stale()
        with pytest.raises(NotFoundError, match="run compute"):
            store.get_weights("oai:a.example:1")

    def test_weights_file_holds_norm_then_sorted_terms(self, store):
        vectors = self.fill(store)
        store.clear_stale()
        path = store.put_weights(vectors[0])
        lines = path.read_text(encoding="utf-8").splitlines()
        assert float(lines[0]) == vectors[0].norm
        terms = [line.split("\t")[0] for line in lines[1:]]
        assert terms == sorted(terms)


class TestMirroredTrees:
    def test_three_trees_share_relpaths(self, store):
        vectors = TestWeights().fill(store)
        for vector in vectors:
            store.put_weights(vector)
        assert store.record_relpaths() == store.tf_relpaths() == store.weights_relpaths()
        assert store.record_relpaths() == [
            "a.example/1",
            "a.example/2",
            "b.example/3",
        ]

    def test_top_path_is_flat_and_reversible(self, store):
        path = store.top_path("oai:a.example:with/slash")
        assert path.parent == store.layout.top_dir
        assert decode_flat(path.name) == "oai:a.example:with/slash"
