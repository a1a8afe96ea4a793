"""Templated desk-scale QA corpus: landmark descriptions with entity answers.

Each document describes one landmark in shuffled sentences; several sentence
kinds share an answer type (three people, two years) so a reader has to use
the relation word ("built", "designed", "wrote", "restored") to pick the span.
"""
from __future__ import annotations

import re

import numpy as np

from ..corpus import Document, QADataset, QAPair, resolve_answer, tokenize

LANDMARKS = (
    "tower", "bridge", "library", "museum", "chapel", "theater", "harbor", "castle",
    "garden", "market", "school", "stadium", "palace", "temple", "mill", "fountain",
    "station", "hospital", "college", "abbey",
)
TOWNS = (
    "ashford", "bexley", "camden", "dover", "eton", "fairfield", "glenwood", "hampton",
    "kendall", "linden", "marlow", "newport", "oakland", "preston", "quincy", "radford",
    "salem", "trenton", "upton", "vernon", "warwick", "york", "chester", "durham",
    "lincoln", "norwich", "oxford", "reading", "windsor", "bristol",
)
RIVERS = (
    "avon", "severn", "thames", "hudson", "ohio", "tyne", "wye", "shannon", "trent",
    "tweed", "clyde", "humber", "mississippi", "danube", "rhine", "seine",
)
FIRST_NAMES = (
    "marcus", "anna", "thomas", "clara", "henry", "julia", "oscar", "edith", "arthur",
    "helen", "walter", "mary", "george", "alice", "samuel", "laura", "isaac", "emma",
    "victor", "lucy", "frank", "rose", "albert", "grace", "louis", "ella", "hugo",
    "irene", "felix", "nora", "simon", "ruth", "peter", "agnes", "martin", "doris",
    "leon", "vera", "paul", "olga",
)
SURNAMES = (
    "hale", "pierce", "reed", "holt", "ward", "grant", "lane", "moore", "bell", "shaw",
    "finch", "cole", "hart", "blake", "frost", "west", "dunn", "price", "hughes", "carter",
    "parker", "turner", "hayes", "morgan", "porter", "wells", "barker", "fisher", "hunt",
    "mason", "palmer", "russell", "spencer", "webb", "walsh", "burke", "fletcher", "gibson",
    "harper", "lloyd", "marsh", "nash", "oakley", "quinn", "rowe", "sutton", "tate",
    "vaughan", "wolfe", "young", "baxter", "cross", "drake", "emerson", "ford", "gray",
    "hobbs", "irwin", "jarvis", "knight",
)
MATERIALS = (
    "stone", "brick", "marble", "granite", "timber", "iron", "glass", "steel", "copper",
    "sandstone", "slate", "limestone", "oak", "bronze", "clay", "concrete",
)
ORG_KINDS = (
    "historical society", "heritage trust", "civic guild", "preservation fund",
    "city council", "county trust", "arts foundation", "building guild",
)
NUMBER_WORDS = (
    "ten", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
    "twelve", "fifteen", "eleven",
)

# Sentence kinds: text variants with {slots}; answers drawn from slots.
SENTENCES = {
    "built": (
        "The {obj} of {town} was built by {builder} in {built_year}.",
        "{builder} built the {obj} of {town} in {built_year}.",
        "In {built_year}, {builder} built the {obj} of {town}.",
    ),
    "design": (
        "It was designed by the architect {designer}.",
        "The architect {designer} designed the {obj}.",
    ),
    "material": (
        "Its walls are made of {material} brought from {quarry}.",
        "The walls were made with {material} carried from {quarry}.",
    ),
    "river": (
        "The {obj} stands on the bank of the {river} river.",
        "It stands beside the {river} river.",
    ),
    "restore": (
        "In {restored_year} the {org} restored the {obj}.",
        "The {obj} was restored by the {org} in {restored_year}.",
    ),
    "book": (
        "Later {writer} wrote a famous book about it.",
        "A famous book about the {obj} was written by {writer}.",
    ),
    "visitors": (
        "Each year about {visitors} visitors come to see it.",
        "About {visitors} visitors come to see it every year.",
    ),
}

QUESTIONS = (
    ("built", "builder", ("Who built the {obj} of {town}?", "Who was the builder of the {obj}?")),
    ("built", "built_year", ("In what year was the {obj} of {town} built?",
                             "When was the {obj} built?")),
    ("design", "designer", ("Who designed the {obj}?",
                            "Which architect designed the {obj} of {town}?")),
    ("material", "material", ("What are the walls of the {obj} made of?",)),
    ("material", "quarry", ("Where was the {material} for the walls brought from?",)),
    ("river", "river", ("Which river does the {obj} stand beside?",
                        "What river is near the {obj}?")),
    ("restore", "org", ("Who restored the {obj}?",)),
    ("restore", "restored_year", ("When was the {obj} restored?",
                                  "In what year was the {obj} restored?")),
    ("book", "writer", ("Who wrote a book about the {obj}?",)),
    ("visitors", "visitors", ("How many visitors come to see the {obj} each year?",)),
)

OPTIONAL_KINDS = ("design", "material", "river", "restore", "book", "visitors")


def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def _person(rng, used):
    while True:
        name = f"{_pick(rng, FIRST_NAMES).title()} {_pick(rng, SURNAMES).title()}"
        if name not in used:
            used.add(name)
            return name


def _slots(rng):
    used = set()
    built = int(rng.integers(1600, 1900))
    town = _pick(rng, TOWNS)
    quarry = _pick(rng, [t for t in TOWNS if t != town])
    return {
        "obj": _pick(rng, LANDMARKS),
        "town": town.title(),
        "builder": _person(rng, used),
        "designer": _person(rng, used),
        "writer": _person(rng, used),
        "built_year": str(built),
        "restored_year": str(built + int(rng.integers(20, 120))),
        "material": _pick(rng, MATERIALS),
        "quarry": quarry.title(),
        "river": _pick(rng, RIVERS).title(),
        "org": f"{_pick(rng, TOWNS).title()} {_pick(rng, ORG_KINDS).title()}",
        "visitors": f"{_pick(rng, NUMBER_WORDS)} thousand",
    }


def _render(template, slots, base):
    """Fill a template, returning text and char offsets of each slot value."""
    out, offsets, pos = [], {}, 0
    while True:
        a = template.find("{", pos)
        if a < 0:
            out.append(template[pos:])
            break
        b = template.index("}", a)
        out.append(template[pos:a])
        key = template[a + 1:b]
        value = slots[key]
        start = base + sum(len(s) for s in out)
        offsets.setdefault(key, start)
        out.append(value)
        pos = b + 1
    text = "".join(out)
    if text[0].islower():
        text = text[0].upper() + text[1:]
    return text, offsets


def generate_document(rng, doc_id, questions_per_doc=5):
    slots = _slots(rng)
    n_optional = int(rng.integers(4, len(OPTIONAL_KINDS) + 1))
    chosen = ["built"] + [OPTIONAL_KINDS[i] for i in
                          sorted(rng.choice(len(OPTIONAL_KINDS), n_optional, replace=False))]
    order = [chosen[i] for i in rng.permutation(len(chosen))]
    parts, answer_at, base = [], {}, 0
    for kind in order:
        text, offs = _render(_pick(rng, SENTENCES[kind]), slots, base)
        for key, off in offs.items():
            answer_at.setdefault((kind, key), off)
        parts.append(text)
        base += len(text) + 1
    context = " ".join(parts)
    title = f"{slots['obj'].title()} of {slots['town']}"
    tokens = tuple(tokenize(context))
    doc = Document(doc_id, title, context, tokens)

    candidates = [q for q in QUESTIONS if q[0] in chosen]
    picks = sorted(rng.choice(len(candidates), min(questions_per_doc, len(candidates)),
                              replace=False))
    pairs = []
    for n, ci in enumerate(picks):
        kind, slot, variants = candidates[ci]
        question = _pick(rng, variants).format(**slots)
        answer = resolve_answer(tokens, slots[slot], answer_at[(kind, slot)], len(context))
        pairs.append(QAPair(f"{doc_id}q{n}", doc_id, question, tuple(tokenize(question)),
                            (answer,)))
    return doc, pairs


def generate_fixture(n_docs=400, seed=2018, test_fraction=0.25, questions_per_doc=5):
    """Deterministic ``(train, test)`` datasets split by document."""
    rng = np.random.default_rng(seed)
    docs, pairs = [], []
    for i in range(n_docs):
        doc, qs = generate_document(rng, f"fx{i:04d}", questions_per_doc)
        docs.append(doc)
        pairs.append(qs)
    n_test = int(round(n_docs * test_fraction))
    cut = n_docs - n_test
    train = QADataset(docs[:cut], [p for qs in pairs[:cut] for p in qs], "train")
    test = QADataset(docs[cut:], [p for qs in pairs[cut:] for p in qs], "test")
    return train, test


def fixture_vocabulary():
    """Every lowercase word the generator can emit, digits excluded."""
    words = set()
    for group in (LANDMARKS, TOWNS, RIVERS, FIRST_NAMES, SURNAMES, MATERIALS, NUMBER_WORDS):
        words.update(group)
    for kind in ORG_KINDS:
        words.update(kind.split())
    templates = [t for v in SENTENCES.values() for t in v]
    templates += [t for q in QUESTIONS for t in q[2]]
    for t in templates:
        for tok in tokenize(re.sub(r"\{\w+\}", " ", t)):
            w = tok.text.lower()
            if w.isalpha():
                words.add(w)
    return sorted(words)
