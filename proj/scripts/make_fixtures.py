#!/usr/bin/env python3
"""Regenerates the committed test fixtures under tests/fixtures/.

The chosen KC labels are tuned so that, under the built-in local n-gram
embedder, exactly one label pair merges at each sweep threshold:
  0.9594 >= 0.9   random-assignment pair
  0.8755 >= 0.8   formative/summative pair
  0.7059 >= 0.7   retrieval-practice pair
Outcomes are sampled from a known additive-factor ground truth so the
cross-validation fixtures carry real signal. Deterministic; run once and
commit the outputs.
"""

import json
import math
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

# (mcq id, stem, choices, chosen KC label, distractor topic theme)
QUESTIONS = [
    ("q01", "A researcher randomly assigns learners to two course versions. What does random assignment primarily control for?",
     ["Selection bias", "Measurement error", "Attrition", "Demand characteristics"],
     "Explain the role of random assignment in experiments", "experimental design"),
    ("q02", "Why do controlled experiments allocate participants to conditions by chance?",
     ["To balance unknown confounds", "To increase sample size", "To reduce cost", "To improve measurement precision"],
     "Explain the role of random assignment in an experiment", "causal inference"),
    ("q03", "A weekly ungraded quiz that guides next week's teaching is best described as what kind of assessment?",
     ["Formative", "Summative", "Normative", "Diagnostic of aptitude"],
     "Compare formative and summative assessment purposes", "assessment design"),
    ("q04", "An end-of-course certification exam primarily serves which assessment purpose?",
     ["Summative judgment", "Formative feedback", "Peer calibration", "Placement"],
     "Compare formative and summative assessment goals", "assessment policy"),
    ("q05", "Which study routine most directly exercises retrieval practice?",
     ["Closed-book self-quizzing", "Re-reading highlights", "Copying notes", "Listening to lectures again"],
     "Identify retrieval practice strategies", "study strategies"),
    ("q06", "Flashcard drills with the answer hidden are an example of which technique?",
     ["Retrieval practice", "Elaborative interrogation", "Highlighting", "Summarization"],
     "Identify retrieval practice techniques", "memory research"),
    ("q07", "Which statistic is a measure of central tendency?",
     ["Median", "Variance", "Range", "Interquartile distance"],
     "Identify measures of central tendency", "descriptive statistics"),
    ("q08", "Students who choose the online section differ in motivation from in-person students. Motivation here is a what?",
     ["Confounding variable", "Dependent variable", "Moderator by design", "Blocking factor"],
     "Describe confounding variables in studies", "study validity"),
    ("q09", "Spreading practice sessions across weeks rather than cramming improves what?",
     ["Long-term retention", "Short-term recall only", "Reading speed", "Test anxiety"],
     "Explain spaced practice benefits for retention", "learning schedules"),
    ("q10", "Showing a fully solved problem before asking novices to solve one exploits which effect?",
     ["Worked example effect", "Generation effect", "Testing effect", "Serial position effect"],
     "Describe worked example effects in problem solving", "problem solving"),
    ("q11", "Narrating a diagram instead of printing the same text beside it follows which principle?",
     ["Modality principle", "Redundancy trap", "Coherence failure", "Split attention by design"],
     "Explain cognitive load theory in multimedia learning", "multimedia design"),
    ("q12", "Gradually removing hints as a learner gains skill is called what?",
     ["Scaffolding with fading", "Mass practice", "Overlearning", "Chunking"],
     "Summarize scaffolding approaches for novice learners", "tutoring strategies"),
]

FILLER_VERBS = ["Outline", "Summarize", "Describe", "Classify", "Illustrate"]
FILLER_TOPICS = [
    "the history of distance education platforms",
    "survey sampling frames for course evaluations",
    "accessibility guidelines for online content",
    "version control habits for course materials",
    "classroom response system logistics",
    "grading rubric calibration meetings",
    "learning management system dashboards",
    "copyright rules for shared slide decks",
]

# Expert-style grouping of the same items into 4 broader objectives.
EXPERT_GROUPS = {
    "experimental-methods": ["q01", "q02", "q07", "q08"],
    "assessment-purposes": ["q03", "q04"],
    "practice-and-memory": ["q05", "q06", "q09"],
    "instructional-design": ["q10", "q11", "q12"],
}

# Ground truth for outcome generation: one (beta, gamma) per merged-at-0.8
# KC group. Pairs q01/q02 and q03/q04 share their group's parameters.
TRUTH_GROUP = {
    "q01": "random-assignment", "q02": "random-assignment",
    "q03": "assessment", "q04": "assessment",
    "q05": "retrieval-a", "q06": "retrieval-b",
    "q07": "central-tendency", "q08": "confounds",
    "q09": "spacing", "q10": "worked-examples",
    "q11": "cognitive-load", "q12": "scaffolding",
}
TRUTH_PARAMS = {
    "random-assignment": (1.2, 0.30),
    "assessment": (0.6, 0.25),
    "retrieval-a": (-0.4, 0.35),
    "retrieval-b": (-0.2, 0.30),
    "central-tendency": (1.5, 0.10),
    "confounds": (-1.0, 0.20),
    "spacing": (0.3, 0.15),
    "worked-examples": (-0.7, 0.25),
    "cognitive-load": (-1.3, 0.15),
    "scaffolding": (0.8, 0.10),
}


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def write_mcqs():
    with open(OUT / "mcqs.jsonl", "w", newline="\n") as sink:
        for qid, stem, choices, _, _ in QUESTIONS:
            sink.write(json.dumps(
                {"id": qid, "stem": stem, "choices": choices}) + "\n")


def write_mock_script():
    rng = random.Random(118999)
    script = {}
    for qid, stem, choices, chosen, theme in QUESTIONS:
        raw = [f"{theme} fundamentals", f"{theme} terminology",
               f"{theme} common pitfalls", f"{theme} worked cases",
               f"{theme} evaluation criteria"]
        rewordings = [chosen]
        fillers = rng.sample(FILLER_TOPICS, 4)
        for i, filler in enumerate(fillers):
            rewordings.append(f"{FILLER_VERBS[i]} {filler}")
        rng.shuffle(rewordings)
        script[qid] = {
            "turn1": "\n".join(f"{i + 1}. {t}" for i, t in enumerate(raw)),
            "turn2": "\n".join(
                f"{i + 1}. {t}" for i, t in enumerate(rewordings)),
            "turn3": f"The most relevant topic is: {chosen}",
        }
    with open(OUT / "mock_script.json", "w", newline="\n") as sink:
        json.dump(script, sink, indent=2)
        sink.write("\n")


def write_steps():
    rng = random.Random(550.e0)
    items = [q[0] for q in QUESTIONS]
    with open(OUT / "steps.tsv", "w", newline="\n") as sink:
        sink.write("student_id\titem_id\torder\toutcome\n")
        for s in range(30):
            student = f"s{s + 1:02d}"
            theta = rng.gauss(0.0, 0.8)
            opportunities = {group: 0 for group in TRUTH_PARAMS}
            sequence = items[:]
            rng.shuffle(sequence)
            for order, item in enumerate(sequence):
                group = TRUTH_GROUP[item]
                beta, gamma = TRUTH_PARAMS[group]
                z = theta + beta + gamma * opportunities[group]
                outcome = 1 if rng.random() < sigmoid(z) else 0
                opportunities[group] += 1
                sink.write(f"{student}\t{item}\t{order}\t{outcome}\n")


def write_expert_model():
    with open(OUT / "expert_model.tsv", "w", newline="\n") as sink:
        sink.write("item_id\tkc_label\n")
        rows = []
        for label, members in EXPERT_GROUPS.items():
            for item in members:
                rows.append((item, label))
        for item, label in sorted(rows):
            sink.write(f"{item}\t{label}\n")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    write_mcqs()
    write_mock_script()
    write_steps()
    write_expert_model()
    print(f"fixtures written to {OUT}")


if __name__ == "__main__":
    main()
