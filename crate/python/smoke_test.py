#!/usr/bin/env python3
"""Smoke test for the colloquy_py extension module.

Builds the cdylib if needed, loads it, and exercises the main types and
operations end to end. Run from anywhere:

    python3 python/smoke_test.py
"""

import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def load_module():
    so = ROOT / "target" / "debug" / "libcolloquy_py.so"
    if not so.exists():
        print("building colloquy-py ...")
        subprocess.run(["cargo", "build", "-p", "colloquy-py"], cwd=ROOT, check=True)
    staging = Path(tempfile.mkdtemp(prefix="colloquy-py-"))
    shutil.copy2(so, staging / "colloquy_py.so")
    sys.path.insert(0, str(staging))
    import colloquy_py

    return colloquy_py


def approx(a, b, tol=1e-9):
    assert abs(a - b) < tol, f"{a} != {b}"


def main():
    m = load_module()

    # line grammar round trip
    line = "4. Vital Signs; Blood pressure; Partner: Ma'am, we're going to take your blood pressure now."
    utt = m.parse_dialogue_line(line)
    assert utt.turn == 4
    assert utt.topic == "Vital Signs"
    assert utt.role == "Partner"
    assert utt.to_line() == line
    try:
        m.parse_dialogue_line("hello world")
        raise AssertionError("malformed line must be rejected")
    except ValueError:
        pass

    # dialogue construction and serialization
    utts = [
        m.Utterance(1, "Dispatch", "Radio dispatch", "Dispatcher", "Unit 3, respond for chest pain."),
        m.Utterance(2, "Introduction", "Introduction", "EMT", "Hi, I'm Alex with the rescue squad."),
        m.Utterance(3, "Chief Complaint", "Identify primary complaint", "Patient", "My chest hurts and I have nausea."),
    ]
    dialogue = m.Dialogue("d1", "r1", ["Chest Pain: Cardiac Suspected"], utts)
    assert len(dialogue) == 3
    text = dialogue.serialize()
    assert text.splitlines()[0].startswith("1. Dispatch;")
    round_tripped = m.Dialogue.from_json(dialogue.to_json())
    assert round_tripped.dialogue_id == "d1"

    # ontology + flow checking
    ontology = m.TopicOntology.default_ems()
    assert len(ontology) == 13
    assert ontology.has_edge("Introduction", "Chief Complaint")
    assert ontology.validate_flow(["Introduction", "Chief Complaint"]) == []
    violations = ontology.validate_flow(["Chief Complaint", "Transport"])
    assert violations[0]["kind"] == "transition_error"
    assert ontology.validate_flow(["UnicornTopic"])[0]["kind"] == "hallucinated_topic"

    # extraction + branch rule
    lexicon = m.Lexicon.starter()
    concepts = lexicon.extract("Patient reports chest pain and nausea; given aspirin.")
    surfaces = sorted(c["surface"] for c in concepts)
    assert surfaces == ["aspirin", "chest pain", "nausea"], surfaces
    assert m.extract_gcs("alert, GCS 15") == 15
    assert m.extract_gcs("no score") is None
    assert m.branch_for_gcs(8) == "comatose"
    assert m.branch_for_gcs(9) == "conscious"
    assert m.branch_for_gcs(None) == "conscious"

    # concept checking (exact + custom embedder)
    report = m.match_concept_surfaces(["chest pain", "aspirin"], ["chest pain"])
    assert report["missing"] == ["aspirin"]
    assert report["precision"] == 1.0
    approx(report["recall"], 0.5)

    def embedder(texts):
        # map EKG-like spellings onto the same direction
        return [[1.0, 0.0] if t in ("ekg", "ecg") else [0.0, 1.0] for t in texts]

    report = m.match_concept_surfaces(["ekg"], ["ecg"], 0.8, embedder)
    assert report["matched"][0]["stage"] == "semantic"
    assert report["missing"] == [] and report["hallucinated"] == []

    # checker validation protocol: inject and recover
    base = [f"finding {i}" for i in range(30)]
    injected = m.inject_errors(base, 10, 10, 0, 42)
    recovery = m.match_concept_surfaces(base, injected["corrupted"])
    assert sorted(recovery["missing"]) == sorted(injected["injected_fn"])
    assert sorted(recovery["hallucinated"]) == sorted(injected["injected_fp"])

    # intrinsic metrics
    approx(m.self_bleu(["alpha bravo charlie delta", "alpha bravo charlie delta"]), 100.0)
    approx(m.mrr([1, 1, 2, 4]), 0.6875)
    approx(m.yes_rate([True, True, False, True]), 75.0)
    approx(m.spearman([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]), 1.0)
    approx(m.spearman([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]), -1.0)
    approx(m.krippendorff_alpha([["yes", "yes"], ["no", "no"], ["yes", "yes"]]), 1.0)
    stats = m.corpus_stats([dialogue])
    assert stats["dialogues"] == 1 and stats["utterances"] == 3

    # forecast evaluation
    assert m.commit({"cardiac": 0.7, "stroke": 0.3})["top_label"] == "cardiac"
    assert m.commit({"cardiac": 0.4}) is None
    assert m.commit({"cardiac": 0.5})["top_confidence"] == 0.5  # boundary inclusive
    approx(m.earliness(2, 10), 0.8)
    approx(m.edit_overheads(["B", "A"], ["A"]), 0.0)
    approx(m.edit_overheads(["A", "B", "A"], ["A"]), 1.0)

    trajectory = json.dumps(
        {"dialogue_id": "d1", "turns": [
            {"t": 1, "probs": {"a": 0.2}},
            {"t": 2, "probs": {"a": 0.9}},
        ]}
    )
    metrics = m.evaluate_trajectory_json(trajectory, ["a"])
    assert metrics["committed"] is True
    approx(metrics["earliness_first"], 0.0)
    assert metrics["first_label"] == "a"

    report = m.forecast_report(
        trajectory + "\n",
        json.dumps({"dialogue_id": "d1", "labels": ["a"]}) + "\n",
    )
    approx(report["summary"]["first_accuracy"], 100.0)
    approx(report["summary"]["non_commit_rate"], 0.0)

    # training-data builders
    inp, labels = m.static_example(dialogue)
    assert inp == dialogue.serialize()
    assert labels == ["Chest Pain: Cardiac Suspected"]
    prefixes = m.dynamic_examples(dialogue, 5)
    assert [inp.count("\n") + 1 for inp, _ in prefixes] == [3, 2, 1]
    for (longer, _), (shorter, _) in zip(prefixes, prefixes[1:]):
        assert longer.startswith(shorter)

    print("smoke test passed:", len(dir(m)), "module attributes exercised")


if __name__ == "__main__":
    main()
