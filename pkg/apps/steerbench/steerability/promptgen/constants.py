"""
Constants for the prompt generator.
Contains the rewrite templates, dimension phrases and the bundled edit instructions.
"""

REWRITE_TEMPLATE = "Please rewrite the following, but make it {slots}."

OPEN_REWRITE_TEMPLATE = "Please rewrite the following."

RESPOND_ONLY = "Respond with only the rewritten text and do not explain your response."

NEGATIVE_PROMPT = (
    "You MUST not change anything else about the other parts of the text, even if it makes "
    "the rewritten text sound unnatural or otherwise awkward."
)

CHAIN_OF_THOUGHT_SCAFFOLD = """Before outputting the rewritten text, propose and discuss a few concrete edits you might apply to this specific text using the following format and replacing the placeholders in []:

## Edits

[your proposed edits]

## Rewritten text

[your rewritten text]"""

INSTRUCTION_INTRO = "Some ways that you can do so might include:"

# |delta| < SLIGHTLY_BELOW reads "slightly", |delta| > MUCH_ABOVE reads "much".
SLIGHTLY_BELOW = 0.2
MUCH_ABOVE = 0.5
MIN_DELTA = 0.1
MAX_DELTA = 0.7

# {mod} is replaced by "slightly ", "much " or nothing.
DIMENSION_PHRASES = {
    "reading_difficulty": ("{mod}harder to read", "{mod}easier to read"),
    "formality": ("{mod}more formal", "{mod}less formal"),
    "textual_diversity": ("use {mod}more diverse language", "use {mod}less diverse language"),
    "text_length": ("{mod}longer", "{mod}shorter"),
}

UNDERSPECIFIED_PHRASES = (
    "higher-quality",
    "better",
    "more polished",
    "more effective",
    "more engaging",
    "clearer",
    "more professional",
    "stronger",
)

# Concrete edits per (dimension, direction) used when no extracted instruction list is supplied.
INSTRUCTION_BANK = {
    ("reading_difficulty", 1): (
        "Combine short sentences into longer ones with subordinate clauses.",
        "Replace common words with longer, more technical vocabulary.",
    ),
    ("reading_difficulty", -1): (
        "Split long sentences into shorter ones.",
        "Replace long or technical words with short, everyday words.",
    ),
    ("formality", 1): (
        "Replace pronouns and verbs with explicit nouns and noun phrases.",
        "Remove contractions, slang and direct address to the reader.",
    ),
    ("formality", -1): (
        "Address the reader directly and use personal pronouns.",
        "Use contractions and a conversational tone.",
    ),
    ("textual_diversity", 1): (
        "Replace repeated words with synonyms.",
        "Vary the vocabulary used to describe recurring ideas.",
    ),
    ("textual_diversity", -1): (
        "Reuse the same words for recurring ideas instead of synonyms.",
        "Prefer a small set of simple, common words.",
    ),
    ("text_length", 1): (
        "Add supporting details and examples.",
        "Expand each point with an additional explanatory sentence.",
    ),
    ("text_length", -1): (
        "Remove redundant sentences and minor details.",
        "Condense each paragraph to its main point.",
    ),
}

INSTRUCTION_EXTRACTION_TEMPLATE = """A writer was asked to rewrite texts while following some instructions. Below are the edits the writer proposed before rewriting one text:

{edits}

Summarize these edits as general instructions that could be applied to other texts. Respond with a numbered list with one instruction per line and nothing else."""
