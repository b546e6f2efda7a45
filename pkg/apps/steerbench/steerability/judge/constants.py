"""
Constants for the judge.
Contains the groundedness and dimension-comparison prompts. Both use string.Template
placeholders so the literal JSON braces need no escaping.
"""

from string import Template

GROUNDEDNESS_TEMPLATE = Template("""You are an impartial judge comparing two texts. Your task is to determine whether these two texts could possibly be describing the same event or story, or otherwise be variations of the same text. The two texts may vary drastically in tone, formality, verbosity, length, or other aspects of style and wording, and can be drawn from a variety of sources, including but not limited to news articles, creative writing, social media, and others. However, the texts should very broadly discuss the same topics and/or events.

**Version A:**
$version_a

**Version B:**
$version_b

Answer yes or no and provide a brief rationale (1-2 sentences). Return only a valid JSON object in the following format, with no additional commentary.

```
{
    "answer": [Yes|No],
    "rationale": [your reasoning]
}
```""")

DIMENSION_TEMPLATE = Template("""You are an impartial judge comparing two versions of a particular text.

**Version A:**
$version_a

**Version B:**
$version_b

Please evaluate the two versions by answering the following questions.

**Questions:**

* Which version is harder to read?

* Which version uses more diverse language?

* Which version is more verbose?

* Which version is more formal?

For all questions, you may answer "A", "B", or "Tie," and provide a brief rationale (1-2 sentences). Return only a valid JSON object in the following format, with no additional commentary.

```
{
    "higher_reading_difficulty": {"answer": [A|B|Tie], "rationale": [your reasoning]},
    "higher_textual_diversity": {"answer": [A|B|Tie], "rationale": [your reasoning]},
    "higher_text_length": {"answer": [A|B|Tie], "rationale": [your reasoning]},
    "higher_formality": {"answer": [A|B|Tie], "rationale": [your reasoning]}
}
```""")

# JSON key in the dimension judgment -> goal dimension id
DIMENSION_KEYS = {
    "higher_reading_difficulty": "reading_difficulty",
    "higher_textual_diversity": "textual_diversity",
    "higher_text_length": "text_length",
    "higher_formality": "formality",
}

REVIEW_YES_SAMPLE = 16

APPROVE = "approve"
OVERRULE = "overrule"

REJECT_JUDGE = "judge-rejected"

# Rationale recorded when the judge endpoint could not be reached
TRANSPORT_RATIONALE = "judge request failed: {error}"

FENCED_BLOCK_PATTERN = r"```(?:json)?\s*(.*?)```"
TRAILING_COMMA_PATTERN = r",\s*([}\]])"
ANSWER_FALLBACK_PATTERN = r"[\"']?answer[\"']?\s*:\s*[\"'\[]*\s*(yes|no)\b"
RATIONALE_FALLBACK_PATTERN = r"[\"']?rationale[\"']?\s*:\s*\"((?:[^\"\\]|\\.)*)\""
DIMENSION_FALLBACK_PATTERN = r"\"{key}\"\s*:\s*\{{\s*\"answer\"\s*:\s*[\"'\[]*\s*(a|b|tie)\b"
