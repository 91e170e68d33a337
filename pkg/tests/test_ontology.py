import json

import pytest

from tog.errors import (
    ConclusionParseError,
    FixtureMissingError,
    OptimizationIncompleteError,
    SchemaError,
    UnresolvedPartError,
)
from tog.ontology import (
    API_KEY_ENV,
    ENDPOINT_ENV,
    FIXTURES_ENV,
    MODEL_ENV,
    FixtureChatClient,
    HttpChatClient,
    Instruction,
    OntologyGraph,
    SequenceChatClient,
    client_from_env,
    default_graph,
    extract_conclusion,
    match_part_path,
    optimize_prompt,
    make_scripted_evaluator,
    prompt_key,
    render_prompt,
    resolve,
    serialize_graph,
)


def canned_response(conclusion_part, mapping_line=None):
    lines = [
        "The given command is a two-agent handover task.",
        "Step 1: Identify the type of task and who receives the object.",
    ]
    if mapping_line:
        lines.append("Step 2: Find the closest object in the ontology.")
        lines.append(mapping_line)
        lines.append("Step 3: Apply task constraints 1 and 2.")
    else:
        lines.append("Step 2: Apply task constraints 1 and 2.")
    lines += [
        "Analyzing the object parts for safety and operating space.",
        "Best choice for the robot follows from the constraints.",
        f"Conclusion: The Robot Should Grasp the {conclusion_part}.",
    ]
    return "\n".join(lines)


STANDARD_CASES = [
    ("Pour the water out of the mug.", "mug", "handle", "Handle"),
    ("Hold the coffee-filled mug steady.", "mug", "body.outside", "Body (Outside)"),
    ("Shake the bottle before I drink it.", "bottle", "body", "Body"),
    ("Open the bottle for me.", "bottle", "cap", "Cap"),
    ("Cut the paper with the scissors.", "scissor", "handle", "Handle"),
    ("Hand the scissors to me.", "scissor", "blade", "Blade"),
]


@pytest.fixture
def graph():
    return default_graph()


@pytest.fixture
def fixture_client(tmp_path, graph):
    client = FixtureChatClient(tmp_path / "chat")
    for text, _cls, _path, conclusion in STANDARD_CASES:
        prompt = render_prompt(graph, Instruction(text))
        client.record(prompt, canned_response(conclusion))
    bowl_prompt = render_prompt(
        graph, Instruction("Empty the bowl into the sink."), novel_extension=True
    )
    client.record(
        bowl_prompt,
        canned_response(
            "Body (Outside)", mapping_line="So, we map: Bowl ≈ Mug (without handle)"
        ),
    )
    return client


class TestGraph:
    def test_part_paths_depth_first(self, graph):
        assert graph.part_paths("mug") == [
            "handle",
            "body",
            "body.inside",
            "body.outside",
        ]

    def test_has_path(self, graph):
        assert graph.has_path("mug", "body.outside")
        assert not graph.has_path("mug", "cap")
        assert not graph.has_path("bowl", "body")

    def test_save_load_round_trip(self, graph, tmp_path):
        path = tmp_path / "ontology.json"
        graph.save(path)
        again = OntologyGraph.load(path)
        assert again.classes == graph.classes

    def test_rejects_empty(self):
        with pytest.raises(SchemaError):
            OntologyGraph({})

    def test_rejects_class_without_parts(self):
        with pytest.raises(SchemaError):
            OntologyGraph({"mug": {}})

    def test_rejects_dotted_part_name(self):
        with pytest.raises(SchemaError):
            OntologyGraph({"mug": {"body.inside": {}}})

    def test_rejects_non_dict_node(self):
        with pytest.raises(SchemaError):
            OntologyGraph({"mug": {"handle": ["x"]}})

    def test_load_rejects_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(SchemaError):
            OntologyGraph.load(path)

    def test_unknown_class_part_paths(self, graph):
        with pytest.raises(UnresolvedPartError):
            graph.part_paths("bowl")


class TestPrompt:
    def test_contains_instruction_and_constraints(self, graph):
        prompt = render_prompt(graph, Instruction("Open the bottle for me."))
        assert '"Open the bottle for me."' in prompt
        assert "difficult to manipulate or potentially dangerous" in prompt
        assert "each grasp a different part of the object" in prompt
        assert "Conclusion: The robot should grasp ..." in prompt

    def test_serializes_every_part_path(self, graph):
        text = serialize_graph(graph)
        assert "Mug → Handle" in text
        assert "Mug → Body → Outside" in text
        assert "Scissor → Blade" in text

    def test_novel_clause_only_when_enabled(self, graph):
        base = render_prompt(graph, Instruction("x"))
        novel = render_prompt(graph, Instruction("x"), novel_extension=True)
        assert "not listed in the ontology" not in base
        assert "not listed in the ontology" in novel
        assert "closest object" in novel

    def test_deterministic(self, graph):
        a = render_prompt(graph, Instruction("Hand the scissors to me."))
        b = render_prompt(graph, Instruction("Hand the scissors to me."))
        assert a == b and prompt_key(a) == prompt_key(b)

    def test_rejects_empty_instruction(self):
        with pytest.raises(ValueError):
            Instruction("   ")


class TestConclusionParsing:
    def test_extracts_last_conclusion(self):
        text = "Conclusion: draft.\nmore\nConclusion: The robot should grasp the cap."
        assert extract_conclusion(text) == "The robot should grasp the cap."

    def test_markdown_bold_tolerated(self):
        assert "Handle" in extract_conclusion("**Conclusion:** the Handle.")

    def test_missing_conclusion(self):
        with pytest.raises(ConclusionParseError):
            extract_conclusion("no definite answer here")

    def test_longest_path_wins(self, graph):
        paths = graph.part_paths("mug")
        assert match_part_path("grasp the Body (Outside)", paths) == "body.outside"
        assert match_part_path("grasp the body", paths) == "body"

    def test_word_boundaries(self, graph):
        paths = graph.part_paths("mug")
        # "mishandled" must not count as naming the handle
        with pytest.raises(UnresolvedPartError):
            match_part_path("the object was mishandled", paths)

    def test_multiple_parts_rejected(self, graph):
        with pytest.raises(UnresolvedPartError) as err:
            match_part_path(
                "grasp the handle and the blade", graph.part_paths("scissor")
            )
        assert "multiple" in str(err.value)

    def test_no_part_rejected(self, graph):
        with pytest.raises(UnresolvedPartError):
            match_part_path("grasp the spout", graph.part_paths("mug"))


class TestResolve:
    @pytest.mark.parametrize("text,cls,path,conclusion", STANDARD_CASES)
    def test_standard_instructions(
        self, graph, fixture_client, text, cls, path, conclusion
    ):
        result = resolve(graph, Instruction(text), fixture_client)
        assert result.object_class == cls
        assert result.part_path == path
        assert result.mapped_from is None
        assert "Conclusion" in result.raw_reasoning

    def test_novel_object_maps_to_known_class(self, graph, fixture_client):
        result = resolve(
            graph,
            Instruction("Empty the bowl into the sink."),
            fixture_client,
            novel_extension=True,
        )
        assert result.object_class == "mug"
        assert result.part_path == "body.outside"
        assert result.mapped_from == "bowl"

    def test_novel_object_rejected_without_extension(self, graph, fixture_client):
        with pytest.raises(UnresolvedPartError):
            resolve(graph, Instruction("Empty the bowl into the sink."), fixture_client)

    def test_hint_overrides_mention(self, graph):
        client = SequenceChatClient([canned_response("Cap")])
        result = resolve(
            graph,
            Instruction("Put it next to the mug.", target_class_hint="bottle"),
            client,
        )
        assert result.object_class == "bottle"
        assert result.part_path == "cap"

    def test_novel_hint_requires_mapping_line(self, graph):
        client = SequenceChatClient([canned_response("Handle")])
        with pytest.raises(UnresolvedPartError):
            resolve(
                graph,
                Instruction("Pick it up.", target_class_hint="bowl"),
                client,
                novel_extension=True,
            )

    def test_mapping_to_unknown_class_rejected(self, graph):
        client = SequenceChatClient(
            [canned_response("Handle", mapping_line="So, we map: Bowl ≈ Pot")]
        )
        with pytest.raises(UnresolvedPartError):
            resolve(
                graph,
                Instruction("Empty the bowl."),
                client,
                novel_extension=True,
            )

    def test_missing_fixture(self, graph, fixture_client):
        with pytest.raises(FixtureMissingError):
            resolve(graph, Instruction("Juggle the mug."), fixture_client)

    def test_plural_class_mention(self, graph, fixture_client):
        result = resolve(
            graph, Instruction("Hand the scissors to me."), fixture_client
        )
        assert result.object_class == "scissor"


class TestHttpClient:
    def test_wire_format(self, monkeypatch):
        seen = {}

        class FakeResponse:
            def raise_for_status(self):
                pass

            def json(self):
                return {"choices": [{"message": {"content": "Conclusion: cap"}}]}

        def fake_post(url, json=None, headers=None, timeout=None):
            seen.update(url=url, payload=json, headers=headers, timeout=timeout)
            return FakeResponse()

        monkeypatch.setattr("tog.ontology.requests.post", fake_post)
        client = HttpChatClient(endpoint="http://chat.test/v1", api_key="k1", model="m1")
        assert client.complete("hello") == "Conclusion: cap"
        assert seen["url"] == "http://chat.test/v1"
        assert seen["payload"] == {
            "model": "m1",
            "messages": [{"role": "user", "content": "hello"}],
        }
        assert seen["headers"]["Authorization"] == "Bearer k1"

    def test_env_configuration(self, monkeypatch):
        monkeypatch.setenv(ENDPOINT_ENV, "http://env.test")
        monkeypatch.setenv(API_KEY_ENV, "sekrit")
        monkeypatch.setenv(MODEL_ENV, "env-model")
        client = HttpChatClient()
        assert client.endpoint == "http://env.test"
        assert client.api_key == "sekrit"
        assert client.model == "env-model"

    def test_missing_endpoint(self, monkeypatch):
        monkeypatch.delenv(ENDPOINT_ENV, raising=False)
        with pytest.raises(SchemaError):
            HttpChatClient()

    def test_bad_response_shape(self, monkeypatch):
        class FakeResponse:
            def raise_for_status(self):
                pass

            def json(self):
                return {"unexpected": True}

        monkeypatch.setattr(
            "tog.ontology.requests.post", lambda *a, **k: FakeResponse()
        )
        client = HttpChatClient(endpoint="http://chat.test")
        with pytest.raises(SchemaError):
            client.complete("hello")

    def test_client_from_env_prefers_fixtures(self, monkeypatch, tmp_path):
        monkeypatch.setenv(FIXTURES_ENV, str(tmp_path))
        assert isinstance(client_from_env(), FixtureChatClient)
        monkeypatch.delenv(FIXTURES_ENV)
        monkeypatch.setenv(ENDPOINT_ENV, "http://env.test")
        assert isinstance(client_from_env(), HttpChatClient)


class TestOptimizePrompt:
    def test_accept_first_round(self):
        client = SequenceChatClient(["some answer"])
        out = optimize_prompt("seed", client, make_scripted_evaluator(["accept"]))
        assert out == "seed"

    def test_revision_applied_then_accepted(self):
        client = SequenceChatClient(
            [
                "weak answer",
                "Here you go.\nRevised Prompt:\nseed with explicit constraints",
                "strong answer",
            ]
        )
        transcript = []
        out = optimize_prompt(
            "seed",
            client,
            make_scripted_evaluator(["mention the constraints", "accept"]),
            transcript=transcript,
        )
        assert out == "seed with explicit constraints"
        assert [e["round"] for e in transcript] == [1, 2]
        assert transcript[0]["feedback"] == "mention the constraints"
        assert "improver_reply" in transcript[0]
        assert transcript[1]["feedback"] == "accept"

    def test_rounds_exhausted(self):
        client = SequenceChatClient(
            ["a1", "Revised Prompt: p2", "a2", "Revised Prompt: p3", "a3"]
        )
        with pytest.raises(OptimizationIncompleteError) as err:
            optimize_prompt(
                "seed",
                client,
                make_scripted_evaluator(["no", "no", "no"]),
                max_rounds=2,
            )
        assert len(err.value.transcript) == 2

    def test_unparseable_improver_reply(self):
        client = SequenceChatClient(["a1", "I refuse to follow the format"])
        with pytest.raises(OptimizationIncompleteError) as err:
            optimize_prompt("seed", client, make_scripted_evaluator(["no"]))
        assert err.value.transcript[0]["round"] == 1


def test_resolution_is_deterministic(graph, fixture_client):
    text = "Pour the water out of the mug."
    first = resolve(graph, Instruction(text), fixture_client)
    second = resolve(graph, Instruction(text), fixture_client)
    assert first == second
