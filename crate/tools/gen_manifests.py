#!/usr/bin/env python3
"""Generate the bundled task manifest fixtures (dataset metadata only)."""
import json
import os

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "fixtures", "manifests")

TASKS = {
    "story_generation": [
        ("Chiang-LLM-Evaluation", 1600, ["Cohesiveness", "Grammaticality", "Likability", "Relevance"]),
        ("CoEval", 1400, ["Character Development", "Clarity", "Coherence", "Engagement", "Grammaticality", "Length", "Relevance"]),
        ("Hanna", 6336, ["Coherence", "Complexity", "Empathy", "Engagement", "Relevance", "Surprise"]),
        ("Mans_roc", 1000, ["Overall Quality"]),
        ("Mans_wp", 1000, ["Overall Quality"]),
        ("nextchapter", 1300, ["Coherence", "Fluency", "Interestingness", "Logicality", "Relatedness"]),
    ],
    "controllable_generation": [
        ("CTRLEval", 3960, ["Attribute Relevance", "Coherence", "Consistency"]),
        ("FUDGE", 2088, ["Fluency"]),
        ("PPLM", 3251, ["Fluency"]),
        ("InstruSum", 2000, ["Factual Consistency", "Irrelevant Information", "Missing Information", "Overall Quality"]),
    ],
    "data_to_text": [
        ("E2E NLG", 6300, ["Naturalness", "Overall Quality"]),
        ("INLG16", 3726, ["Informativeness", "Naturalness", "Phrasing"]),
        ("RankMe", 900, ["Informativeness", "Naturalness", "Overall Quality"]),
        ("SFRES_SFHOT", 6168, ["Informativeness", "Naturalness", "Overall Quality"]),
        ("webnlg_2017", 5214, ["Fluency", "Grammaticality", "Semantic Adequacy"]),
        ("webnlg_2020", 14240, ["Correctness", "Data Coverage", "Fluency", "Relevance", "Text Structure"]),
    ],
    "dialogue_response_generation": [
        ("convai2-grade", 600, ["Coherence"]),
        ("dailydialog-grade", 300, ["Coherence"]),
        ("dailydialog-gupta", 500, ["Appropriateness"]),
        ("dailydialog-zhao", 3600, ["Appropriateness", "Content Richness", "Grammatical Correctness", "Relevance"]),
        ("DialogADV", 16416, ["Coherence", "Consistency", "Fluency", "Relevance"]),
        ("dstc10-persona_clean", 19316, ["Appropriateness", "Content Richness", "Grammatical Correctness", "Relevance"]),
        ("dstc10-topical_clean", 18000, ["Appropriateness", "Content Richness", "Grammatical Correctness", "Relevance"]),
        ("empathetic-grade", 300, ["Coherence"]),
        ("esl", 1242, ["Appropriateness"]),
        ("fed-turn", 3375, ["Correctness", "Engagingness", "Fluency", "Interestingness", "Overall Quality", "Relevance", "Semantical Appropriateness", "Specificity", "Understandability"]),
        ("holistic dialogue", 400, ["Coherence", "Fluency"]),
        ("humod", 19000, ["Fluency", "Relevance"]),
        ("jsalt", 741, ["Appropriateness"]),
        ("ncm", 2461, ["Appropriateness"]),
        ("persona-usr", 1800, ["Context Maintenance", "Interestingness", "Knowledge Use", "Naturalness", "Overall Quality", "Understandability"]),
        ("persona-zhao", 900, ["Appropriateness"]),
        ("topical-usr", 2160, ["Context Maintenance", "Interestingness", "Knowledge Use", "Naturalness", "Overall Quality", "Understandability"]),
    ],
    "grammatical_error_correction": [
        ("GMEG", 27195, ["Overall Quality"]),
        ("protagolabs", 1200, ["Grammaticality", "Over-correction", "Semantics"]),
        ("TMU-GFM", 12663, ["Fluency", "Grammaticality", "Meaning Preservation"]),
    ],
    "machine_translation": [
        ("WMT_zhen", 346504, ["Accuracy", "Fluency", "Locale Convention", "Overall Quality", "Style", "Terminology"]),
        ("HumanMT", 1000, ["Overall Quality"]),
    ],
    "paraphrase_generation": [
        ("parabank", 11140, ["Fluency", "Semantic Similarity"]),
        ("twitter para", 7159, ["Overall Quality"]),
    ],
    "summarization": [
        ("DialSummEval", 5600, ["Coherence", "Consistency", "Fluency", "Relevance"]),
        ("frank", 2246, ["Factuality"]),
        ("Newsroom", 1680, ["Coherence", "Fluency", "Informativeness", "Relevance"]),
        ("OpenAI", 34197, ["Accuracy", "Coherence", "Coverage", "Overall Quality"]),
        ("QAGS", 474, ["Factual Consistency"]),
        ("OpinSummEval", 5600, ["Aspect Relevance", "Readability", "Self-coherence", "Sentiment Consistency"]),
        ("PolyTope", 1268, ["Overall Quality"]),
        ("protagolabs", 1600, ["Coherence", "Consistency", "Fluency", "Relevance"]),
        ("SummEval", 6400, ["Coherence", "Consistency", "Fluency", "Relevance"]),
        ("SummEval-OP", 2912, ["Aspect Coverage", "Coherence", "Faithfulness", "Fluency", "Relevance", "Sentiment Consistency", "Specificity"]),
    ],
    "text_simplification": [
        ("ASSET", 300, ["Adequacy", "Fluency", "Simplicity"]),
        ("Fusion", 10490, ["Adequacy", "Simplicity"]),
        ("HSplit", 7560, ["Grammaticality", "Meaning Preservation", "Simplicity", "Structural Simplicity"]),
        ("Human-likert", 336, ["Fluency", "Meaning Preservation", "Simplicity"]),
        ("LENS", 3840, ["Overall Quality", "Adequacy", "Fluency", "Simplicity"]),
        ("metaeval", 1800, ["Adequacy", "Fluency", "Simplicity"]),
        ("protagolabs", 1200, ["Fluency", "Semantics", "Simplicity"]),
        ("SAMSA", 1500, ["Grammaticality", "Meaning Preservation", "Structural Simplicity"]),
    ],
}


def criterion(name: str) -> str:
    return f"Rate how the output fares with respect to {name.lower()}."


def main() -> None:
    os.makedirs(OUT, exist_ok=True)
    for task, datasets in TASKS.items():
        manifest = {
            "task": task,
            "entries": [
                {
                    "dataset": dataset,
                    "size": size,
                    "aspects": [{"name": a, "criterion": criterion(a)} for a in aspects],
                }
                for dataset, size, aspects in datasets
            ],
        }
        path = os.path.join(OUT, f"{task}.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, ensure_ascii=False)
            fh.write("\n")
        total = sum(size for _, size, _ in datasets)
        aspects = {a for _, _, names in datasets for a in names}
        print(f"{task}: {len(datasets)} datasets, {len(aspects)} aspects, {total} samples")


if __name__ == "__main__":
    main()
