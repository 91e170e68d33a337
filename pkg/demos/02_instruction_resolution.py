"""From a spoken-style instruction to an object part.

The resolver renders one structured prompt over the part ontology, asks a
chat client for a step-by-step answer, and trusts only the final
``Conclusion:`` line, which it matches back onto the class's part tree.
Here the client is a fixture replayer, so the whole flow is offline and
deterministic; swapping in the HTTP client changes nothing else.

The last example asks about a bowl, a class the ontology does not know.
With the novel-object extension the prompt invites a closest-class mapping
("So, we map: Bowl ≈ Mug") and the resolver follows it.
"""

import tempfile

from tog.ontology import (
    FixtureChatClient,
    Instruction,
    default_graph,
    render_prompt,
    resolve,
    serialize_graph,
)

MUG_REPLY = """The given command is "Pour the water out of the mug."
Step 1: Identify the type of task: pouring, a joint manipulation where the
human tilts the mug while the robot holds it steady.
Step 2: Apply task constraints: the robot should take the part that is
harder or riskier for the human, and the two grasps must not collide.
Analyzing the object parts: the mug has a handle and a body with an inside
and an outside. The human pours most comfortably holding the body.
Best choice for the robot: the handle, leaving the body free.
Conclusion: The robot should grasp the handle of the mug.
"""

SCISSOR_REPLY = """The given command is "Hand the scissors to me."
Step 1: Identify the type of task: a handover from robot to human.
Step 2: Apply task constraints: the human must receive the safe part, so
the robot has to hold the dangerous part during the pass.
Analyzing the object parts: scissors have handles and blades; the blades
are the dangerous end.
Best choice for the robot: the blade, offering the handle to the human.
Conclusion: The robot should grasp the blade of the scissors.
"""

BOWL_REPLY = """The given command is "Empty the bowl into the sink."
Step 1: Identify the type of task: carrying and tipping a container.
Step 2: Find the closest object in the ontology: a bowl is not listed; the
closest container with a graspable body is the mug.
So, we map: Bowl ≈ Mug
Step 3: Apply task constraints: the human tips the bowl from its rim, so
the robot should support it from the outside of the body.
Analyzing the object parts: the mapped mug offers a handle and a body with
inside and outside surfaces; a bowl has no handle to speak of.
Best choice for the robot: the outer body surface.
Conclusion: The robot should grasp the body (outside).
"""


def main():
    graph = default_graph()
    print("ontology, as the prompt serializes it:")
    print(serialize_graph(graph))
    print()

    cases = [
        ("Pour the water out of the mug.", MUG_REPLY, False),
        ("Hand the scissors to me.", SCISSOR_REPLY, False),
        ("Empty the bowl into the sink.", BOWL_REPLY, True),
    ]

    with tempfile.TemporaryDirectory() as tmp:
        client = FixtureChatClient(tmp)
        for text, reply, novel in cases:
            prompt = render_prompt(graph, Instruction(text), novel_extension=novel)
            client.record(prompt, reply)

        prompt = render_prompt(graph, Instruction(cases[0][0]))
        print("prompt for the first instruction:")
        print(prompt)
        print()

        for text, _, novel in cases:
            resolved = resolve(graph, Instruction(text), client, novel_extension=novel)
            mapped = (
                f" (novel object, mapped from '{resolved.mapped_from}')"
                if resolved.mapped_from
                else ""
            )
            print(
                f"{text!r}\n  -> class={resolved.object_class} "
                f"part={resolved.part_path}{mapped}"
            )


if __name__ == "__main__":
    main()
