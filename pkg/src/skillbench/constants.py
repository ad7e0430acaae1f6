API_KEY_ENV = "SKILLBENCH_API_KEY"

DEFAULT_CONTEXT_LIMIT_TOKENS = 10240
DEFAULT_REQUEST_TIMEOUT = 120.0
DEFAULT_N_DISTRACTORS = 5
DEFAULT_KEYWORD = "Skill"
DEFAULT_N0 = 5

# Estimated serving VRAM per model (GB)
MODEL_VRAM_GB = {
    "gemma-3-270m-it": 1.0,
    "gemma-3-4b-it": 10.0,
    "gemma-3-12b-it": 29.0,
    "qwen3-30b-instruct": 72.0,
    "qwen3-80b-instruct": 192.0,
    "qwen3-80b-thinking": 192.0,
    "qwen3-80b-coder": 192.0,
}

# Synonyms evaluated for the word "skill", with their plural forms
KEYWORD_PLURALS = {
    "skill": "skills",
    "capability": "capabilities",
    "expertise": "expertise",
    "proficiency": "proficiencies",
    "know-how": "know-hows",
}
KEYWORD_VARIANTS = ["Skill", "Capability", "Expertise", "Proficiency", "Know-how"]

TASK_TEMPLATES = ["plain", "imdb", "finer", "insurbench"]

# Synthetic task generation
SYNTHETIC_LABELS = ["negative", "positive"]
LABEL_CUES = {
    "positive": ["delighted", "excellent", "pleased", "wonderful"],
    "negative": ["annoyed", "dreadful", "poor", "disappointing"],
}
FILLER_LEXICON = [
    "kindly", "regarding", "attached", "thanks", "today",
    "item", "request", "update", "note", "please",
]
STOPWORDS = {
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "in",
    "into", "is", "it", "its", "of", "on", "or", "that", "the", "this",
    "to", "with", "when", "use", "using",
}
