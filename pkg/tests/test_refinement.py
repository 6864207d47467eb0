import pytest

from kgquest import prompts
from kgquest.clustering import Cluster
from kgquest.entity_typing import type_of_entity
from kgquest.kg_store import Triplet
from kgquest.llm_client import MockChatClient, Timeout
from kgquest.refinement import (
    FALLBACK_KEPT_ORIGINAL,
    REFINED,
    SubjectNotFound,
    refine_all,
    refine_template,
    regeneralize,
    select_representative,
    write_refinement_records,
)
from kgquest.template_engine import Template, instantiate, read_templates


def _template(text, relation="r", prefix="Who is", dominant_type="Person", provenance="rule_built"):
    return Template(
        relation=relation, text=text, prefix=prefix, dominant_type=dominant_type,
        provenance=provenance,
    )


class _FailingClient:
    def complete(self, req, purpose):
        raise Timeout("endpoint unreachable")


class TestSelectRepresentative:
    def test_single_matching_member(self, typer_cfg):
        members = (
            Triplet("a", "r", "Émile Durkheim"),
            Triplet("b", "r", "1961"),
        )
        cluster = Cluster(relation="r", members=members, dominant_type="Person")
        assert select_representative(cluster, typer_cfg, seed=0) == members[0]

    def test_fixed_seed_is_deterministic(self, typed_clusters, typer_cfg):
        cluster = typed_clusters[0]
        picks = {select_representative(cluster, typer_cfg, seed=42) for _ in range(10)}
        assert len(picks) == 1

    def test_selection_restricted_to_type_matching_members(self, typer_cfg):
        objects = ["Émile Durkheim", "Graham Chapman", "Harper Lee", "Toni Morrison",
                   "1961", "1906", "12", "34", "misc", "thing"]
        members = tuple(
            sorted((Triplet(f"s{i}", "r", o) for i, o in enumerate(objects)),
                   key=lambda t: (t.subject, t.object))
        )
        cluster = Cluster(relation="r", members=members, dominant_type="Person")
        matching = {t for t in members if type_of_entity(t.object, typer_cfg) == "Person"}
        assert len(matching) == 4
        for seed in range(25):
            assert select_representative(cluster, typer_cfg, seed) in matching

    def test_falls_back_to_any_member_when_none_match(self, typer_cfg):
        members = (Triplet("a", "r", "1961"), Triplet("b", "r", "1906"))
        cluster = Cluster(relation="r", members=members, dominant_type="Person")
        assert select_representative(cluster, typer_cfg, seed=1) in members


class TestRegeneralize:
    def test_exact_substring_with_added_punctuation(self):
        refined = "Who is the author of the book The Division of Labour in Society''?"
        out = regeneralize(refined, "The Division of Labour in Society")
        assert out == "Who is the author of the book <SUBJECT>''?"

    def test_case_insensitive_pass(self):
        subject = (
            "Princeton-George Washington 1961 NCAA Men's Division I Basketball Tournament Game"
        )
        refined = (
            "What is the location where the Princeton-George Washington 1961 NCAA Men's "
            "Division I Basketball Tournament game took place?"
        )
        assert regeneralize(refined, subject) == (
            "What is the location where the <SUBJECT> took place?"
        )

    def test_token_sequence_pass_ignores_punctuation(self):
        out = regeneralize("Which song did Stephen, Melton write?", "Stephen Melton")
        assert out == "Which song did <SUBJECT> write?"

    def test_subject_missing_raises(self):
        with pytest.raises(SubjectNotFound):
            regeneralize("What is the capital of France?", "Spain")

    def test_first_occurrence_only(self):
        out = regeneralize("Did Spain beat Spain?", "Spain")
        assert out == "Did <SUBJECT> beat Spain?"

    def test_empty_question_rejected(self):
        with pytest.raises(ValueError):
            regeneralize("", "Spain")


class TestRefineTemplate:
    def test_identity_mock_keeps_text_and_marks_refined(self):
        template = _template("Who is the author of <SUBJECT>?")
        rep = Triplet("Beloved", "r", "Toni Morrison")
        record = refine_template(template, rep, MockChatClient(mode="identity"), model="m")
        assert record.status == REFINED
        assert record.refined_template.text == template.text
        assert record.refined_template.provenance == "llm_refined"
        assert record.raw_question == "Who is the author of Beloved?"
        assert record.refined_question == record.raw_question

    def test_location_improvement(self):
        subject = (
            "Princeton-George Washington 1961 NCAA Men's Division I Basketball Tournament Game"
        )
        template = _template(
            "What is the location of <SUBJECT>?",
            relation="time.event.locations",
            prefix="What is",
            dominant_type="Location",
        )
        raw = instantiate(template, subject)
        improved = (
            "What is the location where the Princeton-George Washington 1961 NCAA Men's "
            "Division I Basketball Tournament game took place?"
        )
        client = MockChatClient(mode="canned", canned={prompts.refine_user(raw): improved})
        record = refine_template(template, Triplet(subject, "time.event.locations", "New York City"), client, model="m")
        assert record.status == REFINED
        assert record.refined_template.text == "What is the location where the <SUBJECT> took place?"

    def test_publisher_improvement(self):
        template = _template(
            "What is the game published by <SUBJECT>?",
            relation="cvg.cvg_publisher.games_published",
            prefix="What is",
            dominant_type="Work",
        )
        rep = Triplet("United States of America", template.relation, "X3: Terran Conflict")
        raw = instantiate(template, rep.subject)
        improved = "Which video game is published by the United States of America?"
        client = MockChatClient(mode="canned", canned={prompts.refine_user(raw): improved})
        record = refine_template(template, rep, client, model="m")
        assert record.status == REFINED
        assert record.refined_template.text == "Which video game is published by the <SUBJECT>?"

    def test_exactly_one_refine_call(self):
        client = MockChatClient(mode="identity")
        template = _template("Who is the author of <SUBJECT>?")
        refine_template(template, Triplet("Beloved", "r", "Toni Morrison"), client, model="m")
        assert client.ledger.count("refine") == 1

    def test_client_error_falls_back(self):
        template = _template("Who is the author of <SUBJECT>?")
        record = refine_template(
            template, Triplet("Beloved", "r", "Toni Morrison"), _FailingClient(), model="m"
        )
        assert record.status == FALLBACK_KEPT_ORIGINAL
        assert record.refined_template.text == template.text
        assert record.refined_template is template

    def test_subject_omitted_falls_back(self):
        template = _template("Who is the author of <SUBJECT>?")
        client = MockChatClient(mode="scripted", script=["Who wrote this famous work?"])
        record = refine_template(
            template, Triplet("Beloved", "r", "Toni Morrison"), client, model="m"
        )
        assert record.status == FALLBACK_KEPT_ORIGINAL
        assert record.refined_template.text == template.text
        assert record.refined_question == "Who wrote this famous work?"

    def test_missing_question_mark_falls_back(self):
        template = _template("Who is the author of <SUBJECT>?")
        client = MockChatClient(mode="scripted", script=["Tell me who wrote Beloved."])
        record = refine_template(
            template, Triplet("Beloved", "r", "Toni Morrison"), client, model="m"
        )
        assert record.status == FALLBACK_KEPT_ORIGINAL

    def test_multiline_completion_falls_back(self):
        template = _template("Who is the author of <SUBJECT>?")
        client = MockChatClient(
            mode="scripted", script=["Who is the author of Beloved?\nAnswer: Toni Morrison"]
        )
        record = refine_template(
            template, Triplet("Beloved", "r", "Toni Morrison"), client, model="m"
        )
        assert record.status == FALLBACK_KEPT_ORIGINAL

    def test_leaked_entity_downgraded(self):
        template = _template("Who is the author of <SUBJECT>?")
        rep = Triplet("Beloved", "r", "Toni Morrison")
        leaky = "Who is the author of Beloved, not Graham Chapman?"
        client = MockChatClient(mode="scripted", script=[leaky])
        entity_set = frozenset({"Beloved", "Toni Morrison", "Graham Chapman"})
        record = refine_template(template, rep, client, model="m", entity_set=entity_set)
        assert record.status == FALLBACK_KEPT_ORIGINAL

    def test_subject_reuse_is_not_a_leak(self):
        template = _template("Who is the author of <SUBJECT>?")
        rep = Triplet("Beloved", "r", "Toni Morrison")
        improved = "Who is the author of the novel Beloved?"
        client = MockChatClient(mode="scripted", script=[improved])
        entity_set = frozenset({"Beloved", "Toni Morrison"})
        record = refine_template(template, rep, client, model="m", entity_set=entity_set)
        assert record.status == REFINED
        assert record.refined_template.text == "Who is the author of the novel <SUBJECT>?"

    def test_already_refined_template_rejected(self):
        template = _template("Who is the author of <SUBJECT>?", provenance="llm_refined")
        with pytest.raises(ValueError):
            refine_template(
                template, Triplet("B", "r", "T"), MockChatClient(mode="identity"), model="m"
            )


class TestRoundTrip:
    def test_regeneralize_inverts_instantiate(self, fixture_templates, fixture_rows):
        subjects = sorted({s for s, _, _ in fixture_rows})
        for template in fixture_templates:
            for subject in subjects:
                assert regeneralize(instantiate(template, subject), subject) == template.text


class TestRefineAll:
    def test_call_economy_and_order(self, fixture_graph, typed_clusters, fixture_templates, typer_cfg):
        client = MockChatClient(mode="identity")
        records = refine_all(
            fixture_templates,
            typed_clusters,
            typer_cfg,
            client,
            model="m",
            seed=3,
            entity_set=fixture_graph.entity_set,
        )
        assert client.ledger.count("refine") == len(fixture_templates) == 6
        assert [r.relation for r in records] == sorted(r.relation for r in records)
        assert all(r.status == REFINED for r in records)

    def test_representative_object_matches_dominant_type(self, typed_clusters, typer_cfg):
        for cluster in typed_clusters:
            rep = select_representative(cluster, typer_cfg, seed=11)
            assert type_of_entity(rep.object, typer_cfg) == cluster.dominant_type

    def test_parallel_matches_sequential(self, fixture_graph, typed_clusters, fixture_templates, typer_cfg):
        kwargs = dict(model="m", seed=3, entity_set=fixture_graph.entity_set)
        seq = refine_all(fixture_templates, typed_clusters, typer_cfg,
                         MockChatClient(mode="identity"), workers=1, **kwargs)
        par = refine_all(fixture_templates, typed_clusters, typer_cfg,
                         MockChatClient(mode="identity"), workers=4, **kwargs)
        assert seq == par

    def test_missing_cluster_rejected(self, fixture_templates, typer_cfg):
        with pytest.raises(ValueError):
            refine_all(fixture_templates, [], typer_cfg, MockChatClient(), model="m", seed=0)

    def test_template_count_never_shrinks(self, fixture_graph, typed_clusters, fixture_templates, typer_cfg):
        records = refine_all(
            fixture_templates, typed_clusters, typer_cfg, _FailingClient(), model="m", seed=3
        )
        assert len(records) == len(fixture_templates)
        assert all(r.status == FALLBACK_KEPT_ORIGINAL for r in records)

    def test_records_file_readable_as_templates(self, tmp_path, fixture_graph, typed_clusters,
                                                fixture_templates, typer_cfg):
        records = refine_all(
            fixture_templates, typed_clusters, typer_cfg, MockChatClient(mode="identity"),
            model="m", seed=3, entity_set=fixture_graph.entity_set,
        )
        path = tmp_path / "refined.jsonl"
        write_refinement_records(path, records)
        templates = read_templates(path)
        assert len(templates) == 6
        assert all(t.provenance == "llm_refined" for t in templates)
