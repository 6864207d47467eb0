import gzip
import io
import random

import pytest

from kgquest.kg_store import (
    EncodingError,
    KnowledgeGraph,
    MalformedLine,
    Triplet,
    load_graph,
    parse_ntriples_line,
    parse_tsv_line,
)

from conftest import FIXTURE_NT, FIXTURE_TSV


class TestTriplet:
    def test_fields_trimmed(self):
        t = Triplet("  a ", " b", "c  ")
        assert (t.subject, t.relation, t.object) == ("a", "b", "c")

    @pytest.mark.parametrize("bad", [("", "b", "c"), ("a", "  ", "c"), ("a", "b", "\t")])
    def test_empty_after_trim_rejected(self, bad):
        with pytest.raises(ValueError):
            Triplet(*bad)

    def test_control_characters_escaped(self):
        t = Triplet("a\tb", "r", "x\ny")
        assert t.subject == "a\\tb"
        assert t.object == "x\\ny"

    def test_sortable(self):
        ts = [Triplet("b", "r", "x"), Triplet("a", "r", "y"), Triplet("a", "r", "x")]
        assert sorted(ts)[0] == Triplet("a", "r", "x")


class TestParseTsvLine:
    def test_author_example(self):
        line = "The Division of Labour in Society\tns/book.written_work.author\tÉmile Durkheim"
        t = parse_tsv_line(line, 1)
        assert t.subject == "The Division of Labour in Society"
        assert t.relation == "ns/book.written_work.author"
        assert t.object == "Émile Durkheim"

    def test_minimal(self):
        assert parse_tsv_line("a\tb\tc", 3) == Triplet("a", "b", "c")

    def test_two_fields_rejected(self):
        with pytest.raises(MalformedLine) as exc:
            parse_tsv_line("a\tb", 17)
        assert exc.value.line_no == 17

    def test_four_fields_rejected(self):
        with pytest.raises(MalformedLine):
            parse_tsv_line("a\tb\tc\td", 1)

    def test_empty_field_rejected(self):
        with pytest.raises(MalformedLine):
            parse_tsv_line("a\t \tc", 1)


class TestParseNtriplesLine:
    def test_iri_terms(self):
        t = parse_ntriples_line("<http://x/a> <http://x/r> <http://x/b> .", 1)
        assert t == Triplet("http://x/a", "http://x/r", "http://x/b")

    def test_quoted_literal_object(self):
        t = parse_ntriples_line('<http://x/a> <http://x/r> "Émile Durkheim" .', 1)
        assert t.object == "Émile Durkheim"

    def test_comment_and_blank_lines(self):
        assert parse_ntriples_line("# comment", 1) is None
        assert parse_ntriples_line("   ", 2) is None

    def test_escapes_unescaped_then_sanitized(self):
        t = parse_ntriples_line('<http://x/a> <http://x/r> "tab\\there" .', 1)
        assert t.object == "tab\\there"  # real tab re-escaped on ingest

    def test_datatype_and_lang_suffixes_ignored(self):
        t1 = parse_ntriples_line('<http://x/a> <http://x/r> "v"^^<http://x/t> .', 1)
        t2 = parse_ntriples_line('<http://x/a> <http://x/r> "v"@en .', 2)
        assert t1.object == t2.object == "v"

    @pytest.mark.parametrize(
        "line",
        [
            "<http://x/a> <http://x/r> <http://x/b>",  # missing dot
            '<http://x/a> <http://x/r> "unterminated .',
            "<http://x/a> <http://x/r> .",  # missing object
            "<http://x/a> <http://x/r> <http://x/b> <extra> .",
        ],
    )
    def test_malformed(self, line):
        with pytest.raises(MalformedLine):
            parse_ntriples_line(line, 5)


class TestLoadGraph:
    def test_fixture_counts_match_line_scan(self, fixture_rows):
        graph, stats = load_graph(FIXTURE_TSV, format="tsv")
        assert stats.triplet_count == len(fixture_rows) == 60
        assert stats.relation_count == len({r for _, r, _ in fixture_rows}) == 6
        assert stats.entity_count == len(
            {s for s, _, _ in fixture_rows} | {o for _, _, o in fixture_rows}
        )
        assert stats.duplicates_dropped == 0
        assert stats.malformed_skipped == 0

    def test_empty_stream(self):
        graph, stats = load_graph(io.BytesIO(b""), format="tsv")
        assert stats.triplet_count == 0
        assert stats.entity_count == 0
        assert stats.relation_count == 0
        assert stats.duplicates_dropped == 0

    def test_duplicates_dropped(self):
        data = io.BytesIO("a\tb\tc\na\tb\tc\n".encode("utf-8"))
        graph, stats = load_graph(data, format="tsv")
        assert stats.triplet_count == 1
        assert stats.duplicates_dropped == 1

    def test_ntriples_fixture(self):
        graph, stats = load_graph(FIXTURE_NT, format="ntriples")
        assert stats.triplet_count == 6
        assert graph.contains("http://example.org/country/spain", "http://example.org/rel/capital", "Madrid")

    def test_format_inferred_from_extension(self):
        graph, stats = load_graph(FIXTURE_NT, format="auto")
        assert stats.triplet_count == 6

    def test_gzip_by_extension(self, tmp_path):
        gz = tmp_path / "fixture.tsv.gz"
        with gzip.open(gz, "wb") as fh:
            fh.write(FIXTURE_TSV.read_bytes())
        graph, stats = load_graph(gz)
        assert stats.triplet_count == 60

    def test_strict_raises_with_line_number(self, tmp_path):
        bad = tmp_path / "bad.tsv"
        bad.write_text("a\tb\tc\nnot-a-triple\n", encoding="utf-8")
        with pytest.raises(MalformedLine) as exc:
            load_graph(bad, format="tsv", strict=True)
        assert exc.value.line_no == 2

    def test_lenient_skips_and_counts(self, tmp_path):
        bad = tmp_path / "bad.tsv"
        bad.write_text("a\tb\tc\nnot-a-triple\nd\te\tf\n", encoding="utf-8")
        graph, stats = load_graph(bad, format="tsv", strict=False)
        assert stats.triplet_count == 2
        assert stats.malformed_skipped == 1

    def test_encoding_error(self):
        with pytest.raises(EncodingError):
            load_graph(io.BytesIO(b"a\tb\t\xff\xfe\n"), format="tsv")

    def test_unknown_format_rejected(self):
        with pytest.raises(ValueError):
            load_graph(io.BytesIO(b""), format="xml")


class TestQueries:
    def test_contains_author_example(self, fixture_graph):
        subject = "The Division of Labour in Society"
        relation = "ns/book.written_work.author"
        assert fixture_graph.contains(subject, relation, "Émile Durkheim")
        assert not fixture_graph.contains(subject, relation, "Graham Chapman")

    def test_contains_on_empty_graph(self):
        graph = KnowledgeGraph([])
        assert not graph.contains("a", "b", "c")

    def test_objects_of_singleton(self, fixture_graph):
        assert fixture_graph.objects_of("Spain", "ns/location.country.capital") == {"Madrid"}

    def test_objects_of_multiple(self):
        graph = KnowledgeGraph([Triplet("s", "r", "o1"), Triplet("s", "r", "o2")])
        assert graph.objects_of("s", "r") == {"o1", "o2"}

    def test_objects_of_unknown_pair(self, fixture_graph):
        assert fixture_graph.objects_of("Spain", "ns/book.written_work.author") == frozenset()

    def test_contains_exhaustive_against_list_scan(self, random_graph_1000):
        graph = random_graph_1000
        assert len(graph.triplets) <= 1000
        naive = list(graph.triplets)
        for t in naive:
            assert graph.contains(t.subject, t.relation, t.object)
        rng = random.Random(5)
        entities = sorted(graph.entity_set)
        relations = sorted(graph.relation_set)
        for _ in range(2000):
            s, r, o = rng.choice(entities), rng.choice(relations), rng.choice(entities)
            expected = any(
                t.subject == s and t.relation == r and t.object == o for t in naive
            )
            assert graph.contains(s, r, o) is expected

    def test_sr_index_consistent_with_triplets(self, fixture_graph):
        rebuilt = {}
        for t in fixture_graph.triplets:
            rebuilt.setdefault((t.subject, t.relation), set()).add(t.object)
        assert {k: frozenset(v) for k, v in rebuilt.items()} == dict(fixture_graph.sr_index)

    def test_ingest_order_insensitive(self, fixture_rows):
        lines = [f"{s}\t{r}\t{o}" for s, r, o in fixture_rows]
        shuffled = list(lines)
        random.Random(3).shuffle(shuffled)
        g1, _ = load_graph(io.BytesIO("\n".join(lines).encode("utf-8")), format="tsv")
        g2, _ = load_graph(io.BytesIO("\n".join(shuffled).encode("utf-8")), format="tsv")
        assert set(g1.triplets) == set(g2.triplets)
        for s, r, _ in fixture_rows:
            assert g1.objects_of(s, r) == g2.objects_of(s, r)
        for s, r, o in fixture_rows:
            assert g1.contains(s, r, o) and g2.contains(s, r, o)
